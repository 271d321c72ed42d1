#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdenff/errors.hpp"
#include "pdenff/textutil.hpp"

namespace pdenff {

struct ExtractedUrl {
  std::string href;         // as it appeared, after entity decoding
  std::string anchor_text;  // empty when the URL was bare text
  std::string host;         // lowercase
  bool host_is_ip = false;
  std::optional<int> port;
  int dot_count_in_host = 0;
  bool contains_at_sign = false;
  bool contains_hex_escape = false;
};

struct Address {
  std::string display_name;
  std::string addr;    // addr-spec, e.g. alice@example.com
  std::string domain;  // lowercase, no '@'
};

struct EmailMessage {
  std::optional<std::string> message_id;
  std::optional<Address> from_addr;
  std::optional<Address> reply_to_addr;
  std::optional<Address> return_path;
  std::string subject;  // decoded; empty if absent
  std::optional<std::string> sender_domain;
  std::optional<std::string> reply_to_domain;
  std::optional<std::string> message_id_domain;
  std::string body_text;                 // plain parts plus stripped HTML
  std::optional<std::string> body_html;  // raw HTML content, if any
  std::vector<ExtractedUrl> urls;
  bool has_html_part = false;
  bool has_attachment = false;
  bool has_references = false;            // References or In-Reply-To present
  std::optional<std::string> to_header;   // decoded To value, when present
  std::size_t raw_size_bytes = 0;

  // Stable identifier: the Message-ID when present, else a content hash.
  std::string identifier(std::string_view raw = {}) const {
    if (message_id && !message_id->empty()) return *message_id;
    return raw.empty() ? std::string("anon") : "sha:" + fnv1a_hex(raw);
  }
};

struct ParseResult {
  EmailMessage message;
  std::vector<std::string> diagnostics;
};

namespace detail {

struct Header {
  std::string name;
  std::string value;  // unfolded, raw bytes
};

inline std::vector<Header> parse_headers(std::string_view block) {
  std::vector<Header> out;
  std::size_t i = 0;
  while (i < block.size()) {
    std::size_t eol = block.find('\n', i);
    if (eol == std::string_view::npos) eol = block.size();
    std::string_view line = block.substr(i, eol - i);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    i = eol + 1;
    if (line.empty()) continue;
    if ((line[0] == ' ' || line[0] == '\t') && !out.empty()) {
      out.back().value += ' ';
      out.back().value += std::string(trim(line));
      continue;
    }
    const std::size_t colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) continue;  // not a header line
    Header h;
    h.name = std::string(trim(line.substr(0, colon)));
    h.value = std::string(trim(line.substr(colon + 1)));
    out.push_back(std::move(h));
  }
  return out;
}

inline const std::string* find_header(const std::vector<Header>& hs, std::string_view name) {
  for (const auto& h : hs)
    if (iequals(h.name, name)) return &h.value;
  return nullptr;
}

// "type/subtype; key=value; ..." with quoted-string values.
struct ContentType {
  std::string type = "text";
  std::string subtype = "plain";
  std::vector<std::pair<std::string, std::string>> params;

  std::string param(std::string_view key) const {
    for (const auto& [k, v] : params)
      if (iequals(k, key)) return v;
    return {};
  }
  bool is(std::string_view t, std::string_view s) const { return iequals(type, t) && iequals(subtype, s); }
};

inline ContentType parse_content_type(std::string_view value) {
  ContentType ct;
  std::size_t semi = value.find(';');
  std::string_view mime = trim(value.substr(0, semi == std::string_view::npos ? value.size() : semi));
  const std::size_t slash = mime.find('/');
  if (slash != std::string_view::npos) {
    ct.type = to_lower(trim(mime.substr(0, slash)));
    ct.subtype = to_lower(trim(mime.substr(slash + 1)));
  } else if (!mime.empty()) {
    ct.type = to_lower(mime);
    ct.subtype.clear();
  }
  while (semi != std::string_view::npos) {
    std::size_t start = semi + 1;
    // find the parameter end, honoring quotes
    bool quoted = false;
    std::size_t j = start;
    for (; j < value.size(); ++j) {
      if (value[j] == '"') quoted = !quoted;
      else if (value[j] == ';' && !quoted) break;
    }
    std::string_view piece = trim(value.substr(start, j - start));
    semi = j < value.size() ? j : std::string_view::npos;
    const std::size_t eq = piece.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key = to_lower(trim(piece.substr(0, eq)));
    std::string_view raw = trim(piece.substr(eq + 1));
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') raw = raw.substr(1, raw.size() - 2);
    ct.params.emplace_back(std::move(key), std::string(raw));
  }
  return ct;
}

inline std::string strip_comments(std::string_view v) {
  std::string out;
  int depth = 0;
  for (char c : v) {
    if (c == '(') depth++;
    else if (c == ')') depth = std::max(0, depth - 1);
    else if (depth == 0) out.push_back(c);
  }
  return out;
}

inline std::string domain_of_addr(std::string_view addr) {
  const std::size_t at = addr.rfind('@');
  if (at == std::string_view::npos) return {};
  std::string_view d = trim(addr.substr(at + 1));
  while (!d.empty() && (d.back() == '>' || d.back() == '.' || d.back() == ';')) d.remove_suffix(1);
  if (!d.empty() && d.front() == '[' && d.back() == ']') d = d.substr(1, d.size() - 2);
  return to_lower(d);
}

inline std::optional<Address> parse_address(std::string_view value) {
  const std::string cleaned = strip_comments(value);
  std::string_view v = trim(cleaned);
  if (v.empty()) return std::nullopt;
  Address a;
  const std::size_t lt = v.rfind('<');
  if (lt != std::string_view::npos) {
    const std::size_t gt = v.find('>', lt);
    std::string_view spec = v.substr(lt + 1, gt == std::string_view::npos ? v.size() - lt - 1 : gt - lt - 1);
    a.addr = std::string(trim(spec));
    std::string_view disp = trim(v.substr(0, lt));
    if (disp.size() >= 2 && disp.front() == '"' && disp.back() == '"') disp = disp.substr(1, disp.size() - 2);
    a.display_name = decode_encoded_words(disp);
  } else {
    // bare addr-spec; take the first token containing '@' if any
    std::istringstream ss{std::string(v)};
    std::string tok, with_at;
    while (ss >> tok) {
      if (tok.find('@') != std::string::npos) {
        with_at = tok;
        break;
      }
    }
    a.addr = with_at.empty() ? std::string(v) : with_at;
  }
  a.domain = domain_of_addr(a.addr);
  return a;
}

inline bool host_is_ipv4(std::string_view host) {
  int parts = 0;
  std::size_t i = 0;
  while (i <= host.size()) {
    std::size_t dot = host.find('.', i);
    if (dot == std::string_view::npos) dot = host.size();
    std::string_view seg = host.substr(i, dot - i);
    if (seg.empty() || seg.size() > 3) return false;
    int v = 0;
    for (char c : seg) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      v = v * 10 + (c - '0');
    }
    if (v > 255) return false;
    parts++;
    if (dot == host.size()) break;
    i = dot + 1;
  }
  return parts == 4;
}

// http/https only; anything else returns nullopt.
inline std::optional<ExtractedUrl> parse_http_url(std::string_view href, std::string anchor_text) {
  const std::size_t scheme_end = href.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  const std::string scheme = to_lower(href.substr(0, scheme_end));
  if (scheme != "http" && scheme != "https") return std::nullopt;

  ExtractedUrl u;
  u.href = std::string(href);
  u.anchor_text = std::move(anchor_text);

  std::string_view rest = href.substr(scheme_end + 3);
  std::size_t auth_end = rest.size();
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == '/' || rest[i] == '?' || rest[i] == '#') {
      auth_end = i;
      break;
    }
  }
  std::string_view authority = rest.substr(0, auth_end);
  const std::size_t at = authority.rfind('@');
  if (at != std::string_view::npos) authority = authority.substr(at + 1);

  std::string_view host = authority;
  if (!authority.empty() && authority.front() == '[') {
    const std::size_t close = authority.find(']');
    host = authority.substr(0, close == std::string_view::npos ? authority.size() : close + 1);
    std::string_view after = close == std::string_view::npos ? std::string_view{} : authority.substr(close + 1);
    if (!after.empty() && after.front() == ':') {
      int p = 0;
      bool ok = !after.substr(1).empty();
      for (char c : after.substr(1)) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
          ok = false;
          break;
        }
        p = p * 10 + (c - '0');
      }
      if (ok && p > 0 && p < 65536) u.port = p;
    }
    u.host_is_ip = true;  // bracketed IPv6 literal
  } else {
    const std::size_t colon = authority.rfind(':');
    if (colon != std::string_view::npos) {
      std::string_view pstr = authority.substr(colon + 1);
      int p = 0;
      bool ok = !pstr.empty();
      for (char c : pstr) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
          ok = false;
          break;
        }
        p = p * 10 + (c - '0');
      }
      if (ok && p > 0 && p < 65536) {
        u.port = p;
        host = authority.substr(0, colon);
      }
    }
    u.host_is_ip = host_is_ipv4(host);
  }
  u.host = to_lower(host);
  u.dot_count_in_host = static_cast<int>(std::count(u.host.begin(), u.host.end(), '.'));
  u.contains_at_sign = href.find('@') != std::string_view::npos;
  for (std::size_t i = 0; i + 2 < href.size(); ++i) {
    if (href[i] == '%' && hex_value(href[i + 1]) >= 0 && hex_value(href[i + 2]) >= 0) {
      u.contains_hex_escape = true;
      break;
    }
  }
  return u;
}

inline void extract_urls_from_html(std::string_view html, std::vector<ExtractedUrl>& out) {
  const std::string lowered = to_lower(html);
  std::size_t i = 0;
  while (i < lowered.size()) {
    const std::size_t a_pos = lowered.find("<a", i);
    const std::size_t area_pos = lowered.find("<area", i);
    // "<area" also matches the "<a" search at the same offset
    const bool is_area = area_pos != std::string::npos && area_pos <= a_pos;
    const std::size_t tag = is_area ? area_pos : a_pos;
    if (tag == std::string::npos) break;
    // require a delimiter after the tag name
    const std::size_t name_len = is_area ? 5 : 2;
    if (tag + name_len >= lowered.size() ||
        (!std::isspace(static_cast<unsigned char>(lowered[tag + name_len])) &&
         lowered[tag + name_len] != '>')) {
      i = tag + 1;
      continue;
    }
    const std::size_t tag_close = lowered.find('>', tag);
    if (tag_close == std::string::npos) break;
    const std::string_view attrs = html.substr(tag, tag_close - tag);
    const std::string attrs_lower = lowered.substr(tag, tag_close - tag);
    const std::size_t href_pos = attrs_lower.find("href");
    if (href_pos == std::string::npos) {
      i = tag_close + 1;
      continue;
    }
    std::size_t v = href_pos + 4;
    while (v < attrs.size() && (attrs[v] == ' ' || attrs[v] == '=' || attrs[v] == '\t')) v++;
    std::string href;
    if (v < attrs.size() && (attrs[v] == '"' || attrs[v] == '\'')) {
      const char quote = attrs[v];
      const std::size_t end = attrs.find(quote, v + 1);
      href = std::string(attrs.substr(v + 1, end == std::string_view::npos ? attrs.size() - v - 1 : end - v - 1));
    } else {
      std::size_t end = v;
      while (end < attrs.size() && !std::isspace(static_cast<unsigned char>(attrs[end]))) end++;
      href = std::string(attrs.substr(v, end - v));
    }
    href = decode_html_entities(href);

    std::string anchor;
    std::size_t next = tag_close + 1;
    if (!is_area) {
      const std::size_t closing = lowered.find("</a", tag_close);
      if (closing != std::string::npos) {
        anchor = html_to_text(html.substr(tag_close + 1, closing - tag_close - 1));
        const std::size_t cgt = lowered.find('>', closing);
        next = cgt == std::string::npos ? closing + 3 : cgt + 1;
      }
    }
    if (auto u = parse_http_url(href, std::move(anchor))) out.push_back(std::move(*u));
    i = next;
  }
}

inline void extract_urls_from_text(std::string_view text, std::vector<ExtractedUrl>& out) {
  const std::string lowered = to_lower(text);
  std::size_t i = 0;
  while (i < lowered.size()) {
    std::size_t h = lowered.find("http://", i);
    const std::size_t hs = lowered.find("https://", i);
    if (hs < h) h = hs;
    if (h == std::string::npos) break;
    std::size_t end = h;
    while (end < text.size()) {
      const char c = text[end];
      if (std::isspace(static_cast<unsigned char>(c)) || c == '<' || c == '>' || c == '"' || c == '\'')
        break;
      end++;
    }
    std::string_view candidate = text.substr(h, end - h);
    while (!candidate.empty()) {
      const char back = candidate.back();
      if (back == '.' || back == ',' || back == ';' || back == ':' || back == ')' || back == ']' ||
          back == '!' || back == '?') {
        candidate.remove_suffix(1);
      } else {
        break;
      }
    }
    if (auto u = parse_http_url(candidate, {})) out.push_back(std::move(*u));
    i = end + 1;
  }
}

struct MimePart {
  std::vector<Header> headers;
  std::string body;  // transfer-decoded bytes
};

inline std::string transfer_decode(std::string_view body, const std::string* cte) {
  if (cte == nullptr) return std::string(body);
  const std::string enc = to_lower(trim(*cte));
  if (enc == "base64") return base64_decode(body);
  if (enc == "quoted-printable") return quoted_printable_decode(body);
  return std::string(body);
}

// Walks the MIME tree, appending text content and URL sources. Bad structure
// degrades to whole-payload text rather than failing.
inline void walk_mime(const std::vector<Header>& headers, std::string_view body, EmailMessage& msg,
                      std::vector<std::string>& diags, int depth) {
  const std::string* ct_raw = find_header(headers, "Content-Type");
  ContentType ct = ct_raw ? parse_content_type(*ct_raw) : ContentType{};

  if (iequals(ct.type, "multipart") && depth < 8) {
    const std::string boundary = ct.param("boundary");
    if (boundary.empty()) {
      diags.push_back("multipart without boundary; treating body as text");
      ct = ContentType{};  // degrade to text/plain
    } else {
      const std::string sep = "--" + boundary;
      std::vector<std::pair<std::size_t, std::size_t>> ranges;  // part byte ranges
      std::size_t pos = 0;
      std::size_t part_start = std::string::npos;
      bool terminated = false;
      while (pos <= body.size()) {
        std::size_t eol = body.find('\n', pos);
        if (eol == std::string_view::npos) eol = body.size();
        std::string_view line = body.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.rfind(sep, 0) == 0) {
          if (part_start != std::string::npos) ranges.emplace_back(part_start, pos);
          if (line.rfind(sep + "--", 0) == 0) {
            terminated = true;
            break;
          }
          part_start = eol + 1;
        }
        if (eol == body.size()) break;
        pos = eol + 1;
      }
      if (!terminated && part_start != std::string::npos && part_start <= body.size()) {
        ranges.emplace_back(part_start, body.size());
        diags.push_back("multipart missing terminating boundary");
      }
      if (ranges.empty()) {
        diags.push_back("multipart boundary never found; treating body as text");
        ct = ContentType{};  // degrade to text/plain
      } else {
        for (const auto& [b, e] : ranges) {
          std::string_view part = body.substr(b, e - b);
          std::size_t hdr_end = part.find("\r\n\r\n");
          std::size_t body_off = hdr_end + 4;
          const std::size_t lf2 = part.find("\n\n");
          if (hdr_end == std::string_view::npos || (lf2 != std::string_view::npos && lf2 < hdr_end)) {
            hdr_end = lf2;
            body_off = lf2 + 2;
          }
          if (hdr_end == std::string_view::npos) {
            walk_mime({}, part, msg, diags, depth + 1);
          } else {
            walk_mime(parse_headers(part.substr(0, hdr_end)), part.substr(body_off), msg, diags,
                      depth + 1);
          }
        }
        return;
      }
    }
  }

  const std::string decoded = transfer_decode(body, find_header(headers, "Content-Transfer-Encoding"));
  const std::string* disp = find_header(headers, "Content-Disposition");
  const bool is_attachment = disp && icontains(*disp, "attachment");

  if (iequals(ct.type, "text") && iequals(ct.subtype, "html") && !is_attachment) {
    const std::string text = decode_charset(decoded, ct.param("charset"));
    msg.has_html_part = true;
    if (msg.body_html) {
      *msg.body_html += "\n";
      *msg.body_html += text;
    } else {
      msg.body_html = text;
    }
    const std::string stripped = html_to_text(text);
    if (!msg.body_text.empty() && !stripped.empty()) msg.body_text += "\n";
    msg.body_text += stripped;
    extract_urls_from_html(text, msg.urls);
  } else if (iequals(ct.type, "text") && !is_attachment) {
    const std::string text = decode_charset(decoded, ct.param("charset"));
    if (!msg.body_text.empty() && !text.empty()) msg.body_text += "\n";
    msg.body_text += text;
    extract_urls_from_text(text, msg.urls);
  } else {
    msg.has_attachment = true;
  }
}

}  // namespace detail

// Total parse: any byte sequence yields an EmailMessage. Non-fatal issues are
// reported as diagnostics alongside the result.
inline ParseResult parse_email(std::string_view raw) {
  ParseResult res;
  EmailMessage& msg = res.message;
  msg.raw_size_bytes = raw.size();
  if (raw.empty()) return res;

  std::size_t hdr_end = raw.find("\r\n\r\n");
  std::size_t body_off = hdr_end + 4;
  const std::size_t lf2 = raw.find("\n\n");
  if (hdr_end == std::string_view::npos || (lf2 != std::string_view::npos && lf2 < hdr_end)) {
    hdr_end = lf2;
    body_off = lf2 + 2;
  }
  std::string_view header_block;
  std::string_view body;
  if (hdr_end == std::string_view::npos) {
    // No blank line: headers only, or no headers at all.
    if (raw.find(':') != std::string_view::npos) {
      header_block = raw;
    } else {
      body = raw;
      res.diagnostics.push_back("no header block found; treating payload as body");
    }
  } else {
    header_block = raw.substr(0, hdr_end);
    body = raw.substr(body_off);
  }

  const auto headers = detail::parse_headers(header_block);
  if (header_block.size() > 0 && headers.empty() && body.empty()) {
    // Header-shaped payload that yielded nothing: degrade to body text.
    body = raw;
    res.diagnostics.push_back("unparsable header block; treating payload as body");
  }

  if (const std::string* v = detail::find_header(headers, "Subject")) {
    msg.subject = decode_encoded_words(*v);
  }
  if (const std::string* v = detail::find_header(headers, "From")) {
    msg.from_addr = detail::parse_address(*v);
    if (msg.from_addr && !msg.from_addr->domain.empty()) msg.sender_domain = msg.from_addr->domain;
  }
  if (const std::string* v = detail::find_header(headers, "Reply-To")) {
    msg.reply_to_addr = detail::parse_address(*v);
    if (msg.reply_to_addr && !msg.reply_to_addr->domain.empty())
      msg.reply_to_domain = msg.reply_to_addr->domain;
  }
  if (const std::string* v = detail::find_header(headers, "Return-Path")) {
    msg.return_path = detail::parse_address(*v);
  }
  if (const std::string* v = detail::find_header(headers, "Message-ID")) {
    std::string_view id = trim(*v);
    if (!id.empty()) {
      msg.message_id = std::string(id);
      const std::string domain = detail::domain_of_addr(id);
      if (!domain.empty()) msg.message_id_domain = domain;
    }
  }
  const std::string* refs = detail::find_header(headers, "References");
  const std::string* irt = detail::find_header(headers, "In-Reply-To");
  msg.has_references = (refs && !refs->empty()) || (irt && !irt->empty());
  if (const std::string* v = detail::find_header(headers, "To")) {
    msg.to_header = decode_encoded_words(*v);
  }

  detail::walk_mime(headers, body, msg, res.diagnostics, 0);
  return res;
}

// "From " separated mbox content -> raw message payloads, in file order.
inline std::vector<std::string> split_mbox(std::string_view content) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  std::size_t current = std::string_view::npos;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    const std::string_view line = content.substr(pos, eol - pos);
    if (line.rfind("From ", 0) == 0) {
      if (current != std::string_view::npos) out.emplace_back(content.substr(current, pos - current));
      current = eol + 1 > content.size() ? content.size() : eol + 1;
    }
    if (eol == content.size()) break;
    pos = eol + 1;
  }
  if (current != std::string_view::npos && current <= content.size()) {
    out.emplace_back(content.substr(current));
  }
  return out;
}

inline std::string read_file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(Errc::io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CorpusEntry {
  std::string raw;
  ParseResult parsed;
};

// Reads an mbox file, a single .eml file, or a directory of .eml files
// (lexicographic filename order). A corrupt message degrades, never aborts.
inline std::vector<CorpusEntry> read_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<CorpusEntry> out;
  if (!fs::exists(path)) throw Error(Errc::io, "no such corpus: " + path.string());

  auto add = [&out](std::string raw) {
    CorpusEntry e;
    e.parsed = parse_email(raw);
    e.raw = std::move(raw);
    out.push_back(std::move(e));
  };

  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".eml") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(read_file_bytes(f));
    return out;
  }

  std::string content = read_file_bytes(path);
  const bool is_mbox = path.extension() == ".mbox" || content.rfind("From ", 0) == 0;
  if (is_mbox) {
    for (auto& m : split_mbox(content)) add(std::move(m));
  } else {
    add(std::move(content));
  }
  return out;
}

}  // namespace pdenff
