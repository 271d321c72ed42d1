#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdenff/email.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/textutil.hpp"
#include "pdenff/vec.hpp"

namespace pdenff {

inline constexpr std::size_t kLongVectorBits = 21;

enum class FeatureGroup { Spam, Body, Url, Header };

inline const char* group_name(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::Spam: return "SPAM";
    case FeatureGroup::Body: return "BODY";
    case FeatureGroup::Url: return "URL";
    case FeatureGroup::Header: return "HEADER";
  }
  return "?";
}

inline FeatureGroup group_from_name(const std::string& s) {
  if (s == "SPAM") return FeatureGroup::Spam;
  if (s == "BODY") return FeatureGroup::Body;
  if (s == "URL") return FeatureGroup::Url;
  if (s == "HEADER") return FeatureGroup::Header;
  throw Error(Errc::bad_config, "unknown feature group '" + s + "'");
}

// One binary predicate over a parsed email. `predicate` names one of the
// built-in predicate kinds; `parameters` carries its thresholds and word
// lists so a registry file can retune them without a rebuild.
struct FeatureDef {
  std::string id;
  FeatureGroup group = FeatureGroup::Spam;
  std::string description;
  std::string predicate;
  nlohmann::json parameters = nlohmann::json::object();
};

struct LongVector {
  std::bitset<kLongVectorBits> bits;

  Vec as_vec() const {
    Vec v(kLongVectorBits);
    for (std::size_t i = 0; i < kLongVectorBits; ++i) v[i] = bits[i] ? 1.0 : 0.0;
    return v;
  }
};

// Per-group fraction of active features, each in [0,1].
struct ShortVector {
  double spam_score = 0.0;
  double body_score = 0.0;
  double url_score = 0.0;
  double header_score = 0.0;

  Vec as_vec() const { return {spam_score, body_score, url_score, header_score}; }
};

class FeatureRegistry {
 public:
  explicit FeatureRegistry(std::vector<FeatureDef> entries) : entries_(std::move(entries)) {
    if (entries_.size() != kLongVectorBits) {
      throw Error(Errc::bad_config, "registry must have exactly " + std::to_string(kLongVectorBits) +
                                        " entries, got " + std::to_string(entries_.size()));
    }
    for (const auto& e : entries_) group_size_[static_cast<int>(e.group)]++;
    for (int g = 0; g < 4; ++g) {
      if (group_size_[g] == 0)
        throw Error(Errc::bad_config, std::string("registry group ") +
                                          group_name(static_cast<FeatureGroup>(g)) + " is empty");
    }
  }

  const std::vector<FeatureDef>& entries() const { return entries_; }
  int group_size(FeatureGroup g) const { return group_size_[static_cast<int>(g)]; }

  int index_of(const std::string& id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].id == id) return static_cast<int>(i);
    return -1;
  }

 private:
  std::vector<FeatureDef> entries_;
  std::array<int, 4> group_size_{0, 0, 0, 0};
};

namespace detail {

inline bool subject_or_body_contains(const EmailMessage& m, const std::vector<std::string>& phrases) {
  for (const auto& p : phrases) {
    if (icontains(m.subject, p) || icontains(m.body_text, p)) return true;
  }
  return false;
}

inline std::vector<std::string> param_phrases(const FeatureDef& def, const char* key) {
  std::vector<std::string> out;
  if (def.parameters.contains(key)) {
    for (const auto& v : def.parameters[key]) out.push_back(v.get<std::string>());
  }
  return out;
}

// True when one domain equals or is a subdomain of the other.
inline bool domain_related(const std::string& a, const std::string& b) {
  if (a == b) return true;
  auto suffix = [](const std::string& longer, const std::string& shorter) {
    return longer.size() > shorter.size() &&
           longer.compare(longer.size() - shorter.size(), shorter.size(), shorter) == 0 &&
           longer[longer.size() - shorter.size() - 1] == '.';
  };
  return suffix(a, b) || suffix(b, a);
}

// Pulls a domain-looking token out of anchor text, if any.
inline std::string domain_in_text(const std::string& text) {
  const std::string lowered = to_lower(text);
  const std::size_t scheme = lowered.find("://");
  std::size_t start = 0;
  if (scheme != std::string::npos) {
    start = scheme + 3;
  } else {
    const std::size_t www = lowered.find("www.");
    if (www == std::string::npos) return {};
    start = www;
  }
  std::size_t end = start;
  while (end < lowered.size() &&
         (std::isalnum(static_cast<unsigned char>(lowered[end])) || lowered[end] == '.' ||
          lowered[end] == '-')) {
    end++;
  }
  std::string host = lowered.substr(start, end - start);
  while (!host.empty() && host.back() == '.') host.pop_back();
  return host.find('.') == std::string::npos ? std::string{} : host;
}

inline bool eval_predicate(const FeatureDef& def, const EmailMessage& m) {
  const std::string& p = def.predicate;

  // HEADER group
  if (p == "header_from_replyto_mismatch") {
    return m.sender_domain && m.reply_to_domain && !domain_related(*m.sender_domain, *m.reply_to_domain);
  }
  if (p == "header_message_id_domain_mismatch") {
    return m.sender_domain && m.message_id_domain &&
           !domain_related(*m.sender_domain, *m.message_id_domain);
  }
  if (p == "header_subject_account_action") {
    for (const auto& w : param_phrases(def, "words"))
      if (icontains(m.subject, w)) return true;
    return false;
  }
  if (p == "header_subject_reply_no_thread") {
    const std::string s = to_lower(trim(m.subject));
    const bool reply_like = s.rfind("re:", 0) == 0 || s.rfind("fwd:", 0) == 0 || s.rfind("fw:", 0) == 0;
    return reply_like && !m.has_references;
  }
  if (p == "header_blank_or_undisclosed_recipients") {
    // absent To stays false: absent fields make predicates false
    return m.to_header && (trim(*m.to_header).empty() || icontains(*m.to_header, "undisclosed"));
  }

  // URL group
  if (p == "url_ip_host") {
    for (const auto& u : m.urls)
      if (u.host_is_ip) return true;
    return false;
  }
  if (p == "url_anchor_domain_mismatch") {
    for (const auto& u : m.urls) {
      if (u.anchor_text.empty() || u.host.empty()) continue;
      const std::string anchor_domain = domain_in_text(u.anchor_text);
      if (!anchor_domain.empty() && !domain_related(anchor_domain, u.host)) return true;
    }
    return false;
  }
  if (p == "url_many_dots") {
    const int max_dots = def.parameters.value("max_dots", 3);
    for (const auto& u : m.urls)
      if (u.dot_count_in_host > max_dots) return true;
    return false;
  }
  if (p == "url_at_sign") {
    for (const auto& u : m.urls)
      if (u.contains_at_sign) return true;
    return false;
  }
  if (p == "url_many_links") {
    const std::size_t max_links = def.parameters.value("max_links", 5u);
    return m.urls.size() > max_links;
  }
  if (p == "url_nonstandard_port") {
    for (const auto& u : m.urls)
      if (u.port && *u.port != 80 && *u.port != 443) return true;
    return false;
  }
  if (p == "url_click_here_anchor") {
    const auto phrases = param_phrases(def, "phrases");
    for (const auto& u : m.urls) {
      for (const auto& ph : phrases)
        if (icontains(u.anchor_text, ph)) return true;
    }
    return false;
  }
  if (p == "url_hex_escapes") {
    for (const auto& u : m.urls)
      if (u.contains_hex_escape) return true;
    return false;
  }

  // BODY group
  if (p == "body_html_present") return m.has_html_part;
  if (p == "body_has_form") return m.body_html && icontains(*m.body_html, "<form");
  if (p == "body_has_script") return m.body_html && icontains(*m.body_html, "<script");
  if (p == "body_generic_greeting") {
    for (const auto& g : param_phrases(def, "phrases"))
      if (icontains(m.body_text, g)) return true;
    return false;
  }
  if (p == "body_external_images") {
    if (!m.body_html) return false;
    const std::string lowered = to_lower(*m.body_html);
    std::size_t i = 0;
    while ((i = lowered.find("<img", i)) != std::string::npos) {
      const std::size_t close = lowered.find('>', i);
      const std::string_view tag(lowered.data() + i, (close == std::string::npos ? lowered.size() : close) - i);
      if (tag.find("http://") != std::string_view::npos || tag.find("https://") != std::string_view::npos)
        return true;
      i += 4;
    }
    return false;
  }

  // SPAM group
  if (p == "spam_money_keywords") {
    return subject_or_body_contains(m, param_phrases(def, "keywords"));
  }
  if (p == "spam_all_caps_subject") {
    int letters = 0;
    for (unsigned char c : m.subject) {
      if (std::isalpha(c)) {
        letters++;
        if (std::islower(c)) return false;
      }
    }
    return letters >= 3;
  }
  if (p == "spam_urgency") {
    if (m.subject.find("!!!") != std::string::npos || m.body_text.find("!!!") != std::string::npos)
      return true;
    return subject_or_body_contains(m, param_phrases(def, "phrases"));
  }

  throw Error(Errc::bad_config, "unknown predicate '" + p + "'");
}

}  // namespace detail

// The stock 21-feature registry: five header, eight URL, five body and three
// spam heuristics drawn from the phishing-features literature.
inline FeatureRegistry default_registry() {
  using J = nlohmann::json;
  std::vector<FeatureDef> e;
  auto add = [&e](const char* id, FeatureGroup g, const char* desc, J params = J::object()) {
    FeatureDef d;
    d.id = id;
    d.group = g;
    d.description = desc;
    d.predicate = id;
    d.parameters = std::move(params);
    e.push_back(std::move(d));
  };

  add("header_from_replyto_mismatch", FeatureGroup::Header,
      "Reply-To domain differs from the sender domain");
  add("header_message_id_domain_mismatch", FeatureGroup::Header,
      "Message-ID domain differs from the sender domain");
  add("header_subject_account_action", FeatureGroup::Header,
      "Subject demands an account action", J{{"words", {"verify", "update", "confirm", "suspend"}}});
  add("header_subject_reply_no_thread", FeatureGroup::Header,
      "Re:/Fwd: subject without References or In-Reply-To");
  add("header_blank_or_undisclosed_recipients", FeatureGroup::Header,
      "To header blank or undisclosed recipients");

  add("url_ip_host", FeatureGroup::Url, "A link host is a bare IP address");
  add("url_anchor_domain_mismatch", FeatureGroup::Url,
      "Anchor text names a different domain than the link target");
  add("url_many_dots", FeatureGroup::Url, "A link host has more than max_dots dots",
      J{{"max_dots", 3}});
  add("url_at_sign", FeatureGroup::Url, "A link contains an @ sign");
  add("url_many_links", FeatureGroup::Url, "More than max_links links in the message",
      J{{"max_links", 5}});
  add("url_nonstandard_port", FeatureGroup::Url, "A link uses a port other than 80/443");
  add("url_click_here_anchor", FeatureGroup::Url, "Anchor text urges clicking or logging in",
      J{{"phrases", {"click here", "login"}}});
  add("url_hex_escapes", FeatureGroup::Url, "A link contains %XX hex escapes");

  add("body_html_present", FeatureGroup::Body, "Message carries an HTML part");
  add("body_has_form", FeatureGroup::Body, "HTML contains a form element");
  add("body_has_script", FeatureGroup::Body, "HTML contains a script element");
  add("body_generic_greeting", FeatureGroup::Body, "Impersonal greeting",
      J{{"phrases", {"dear customer", "dear user", "dear member"}}});
  add("body_external_images", FeatureGroup::Body, "HTML references external images");

  add("spam_money_keywords", FeatureGroup::Spam, "Money or prize bait wording",
      J{{"keywords", {"prize", "winner", "lottery", "million dollar", "free money", "cash bonus"}}});
  add("spam_all_caps_subject", FeatureGroup::Spam, "Subject is all capitals");
  add("spam_urgency", FeatureGroup::Spam, "Urgency wording or runs of exclamation marks",
      J{{"phrases", {"act now", "immediately", "urgent"}}});

  return FeatureRegistry(std::move(e));
}

inline LongVector extract_long(const EmailMessage& email, const FeatureRegistry& registry) {
  LongVector lv;
  const auto& entries = registry.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    lv.bits[i] = detail::eval_predicate(entries[i], email);
  }
  return lv;
}

inline ShortVector reduce_short(const LongVector& lv, const FeatureRegistry& registry) {
  std::array<int, 4> active{0, 0, 0, 0};
  const auto& entries = registry.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (lv.bits[i]) active[static_cast<int>(entries[i].group)]++;
  }
  auto frac = [&](FeatureGroup g) {
    return static_cast<double>(active[static_cast<int>(g)]) /
           static_cast<double>(registry.group_size(g));
  };
  ShortVector sv;
  sv.spam_score = frac(FeatureGroup::Spam);
  sv.body_score = frac(FeatureGroup::Body);
  sv.url_score = frac(FeatureGroup::Url);
  sv.header_score = frac(FeatureGroup::Header);
  return sv;
}

// ---- registry (de)serialization ----

inline constexpr const char* kRegistrySchema = "pdenff.registry/1";

inline nlohmann::json registry_to_json(const FeatureRegistry& registry) {
  nlohmann::json j;
  j["schema"] = kRegistrySchema;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : registry.entries()) {
    j["entries"].push_back({{"id", e.id},
                            {"group", group_name(e.group)},
                            {"description", e.description},
                            {"predicate", e.predicate},
                            {"parameters", e.parameters}});
  }
  return j;
}

inline FeatureRegistry registry_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", "") != kRegistrySchema)
      throw Error(Errc::bad_config, "unexpected registry schema");
    std::vector<FeatureDef> entries;
    for (const auto& je : j.at("entries")) {
      FeatureDef d;
      d.id = je.at("id").get<std::string>();
      d.group = group_from_name(je.at("group").get<std::string>());
      d.description = je.value("description", "");
      d.predicate = je.value("predicate", d.id);
      d.parameters = je.value("parameters", nlohmann::json::object());
      entries.push_back(std::move(d));
    }
    return FeatureRegistry(std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("bad registry document: ") + e.what());
  }
}

inline FeatureRegistry load_registry(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot read registry " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("registry is not valid JSON: ") + e.what());
  }
  return registry_from_json(j);
}

}  // namespace pdenff
