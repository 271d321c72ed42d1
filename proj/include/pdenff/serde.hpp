#pragma once

#include <string>

#include <json.hpp>

#include "pdenff/clustering.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/metrics.hpp"
#include "pdenff/rules.hpp"

namespace pdenff {

inline constexpr const char* kProfileSchema = "pdenff.profile/1";

inline nlohmann::json cluster_to_json(const Cluster& c) {
  return {{"id", c.id},
          {"center", c.center},
          {"radius", c.radius},
          {"member_count", c.member_count},
          {"created_at", c.created_at}};
}

inline Cluster cluster_from_json(const nlohmann::json& j) {
  Cluster c;
  c.id = j.at("id").get<std::int64_t>();
  c.center = j.at("center").get<Vec>();
  c.radius = j.at("radius").get<double>();
  c.member_count = j.at("member_count").get<std::int64_t>();
  c.created_at = j.at("created_at").get<std::int64_t>();
  return c;
}

inline nlohmann::json rule_to_json(const FuzzyRule& r) {
  return {{"id", r.id},
          {"cluster_id", r.cluster_id},
          {"center", r.center},
          {"width", r.width},
          {"coeffs", r.coeffs},
          {"cov", r.cov},
          {"support", r.support},
          {"last_fired_at", r.last_fired_at},
          {"origin", r.origin == RuleOrigin::OfflineEnhanced ? "offline_enhanced" : "online"},
          {"version", r.version}};
}

inline FuzzyRule rule_from_json(const nlohmann::json& j) {
  FuzzyRule r;
  r.id = j.at("id").get<int>();
  r.cluster_id = j.at("cluster_id").get<std::int64_t>();
  r.center = j.at("center").get<Vec>();
  r.width = j.at("width").get<Vec>();
  r.coeffs = j.at("coeffs").get<Vec>();
  r.cov = j.value("cov", std::vector<double>{});
  r.support = j.at("support").get<std::int64_t>();
  r.last_fired_at = j.at("last_fired_at").get<std::int64_t>();
  r.origin = j.at("origin").get<std::string>() == "offline_enhanced" ? RuleOrigin::OfflineEnhanced
                                                                     : RuleOrigin::Online;
  r.version = j.at("version").get<int>();
  return r;
}

inline nlohmann::json rulebase_to_json(const RuleBase& rb) {
  nlohmann::json j;
  j["schema"] = kProfileSchema;
  j["dim"] = rb.dim;
  j["profile_version"] = rb.profile_version;
  j["sample_ordinal"] = rb.sample_ordinal;
  j["next_rule_id"] = rb.next_rule_id;
  j["ecm_params"] = {{"dthr", rb.ecm.dthr},
                     {"metric", metric_name(rb.ecm.metric)},
                     {"ecmc_max_iters", rb.ecm.ecmc_max_iters}};
  j["inference_params"] = {{"m_active", rb.inf.m_active},
                           {"decision_threshold", rb.inf.decision_threshold},
                           {"lambda", rb.inf.lambda},
                           {"prune_window", rb.inf.prune_window},
                           {"sigma_min", rb.inf.sigma_min},
                           {"fire_strength_min", rb.inf.fire_strength_min},
                           {"rls_init_cov", rb.inf.rls_init_cov}};
  j["clusters"] = nlohmann::json::array();
  for (const auto& c : rb.clusters) j["clusters"].push_back(cluster_to_json(c));
  j["rules"] = nlohmann::json::array();
  for (const auto& r : rb.rules) j["rules"].push_back(rule_to_json(r));
  j["stats"] = {{"rules_created", rb.stats.rules_created},
                {"rules_updated", rb.stats.rules_updated},
                {"rules_deleted", rb.stats.rules_deleted},
                {"rls_cov_resets", rb.stats.rls_cov_resets}};
  return j;
}

inline RuleBase rulebase_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", "") != kProfileSchema)
      throw Error(Errc::bad_config, "unexpected profile schema");
    RuleBase rb;
    rb.dim = j.at("dim").get<int>();
    rb.profile_version = j.at("profile_version").get<std::int64_t>();
    rb.sample_ordinal = j.value("sample_ordinal", std::int64_t{0});
    rb.next_rule_id = j.value("next_rule_id", 0);
    const auto& ep = j.at("ecm_params");
    rb.ecm.dthr = ep.at("dthr").get<double>();
    rb.ecm.metric = metric_from_name(ep.at("metric").get<std::string>());
    rb.ecm.ecmc_max_iters = ep.value("ecmc_max_iters", 100);
    const auto& ip = j.at("inference_params");
    rb.inf.m_active = ip.at("m_active").get<int>();
    rb.inf.decision_threshold = ip.at("decision_threshold").get<double>();
    rb.inf.lambda = ip.at("lambda").get<double>();
    rb.inf.prune_window = ip.at("prune_window").get<std::int64_t>();
    rb.inf.sigma_min = ip.at("sigma_min").get<double>();
    rb.inf.fire_strength_min = ip.value("fire_strength_min", 1e-3);
    rb.inf.rls_init_cov = ip.value("rls_init_cov", 1e6);
    for (const auto& jc : j.value("clusters", nlohmann::json::array()))
      rb.clusters.push_back(cluster_from_json(jc));
    for (const auto& jr : j.value("rules", nlohmann::json::array()))
      rb.rules.push_back(rule_from_json(jr));
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      rb.stats.rules_created = s.value("rules_created", std::int64_t{0});
      rb.stats.rules_updated = s.value("rules_updated", std::int64_t{0});
      rb.stats.rules_deleted = s.value("rules_deleted", std::int64_t{0});
      rb.stats.rls_cov_resets = s.value("rls_cov_resets", std::int64_t{0});
    }
    rb.ecm.validate();
    rb.inf.validate();
    return rb;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("bad profile document: ") + e.what());
  }
}

// One schema serves live periodic reports and batch evaluation output.
inline nlohmann::json report_to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"schema", "pdenff.metrics/1"},
          {"counts",
           {{"tp", r.counts.tp}, {"tn", r.counts.tn}, {"fp", r.counts.fp}, {"fn", r.counts.fn}}},
          {"sensitivity", opt(r.sensitivity)},
          {"precision", opt(r.precision)},
          {"f_measure", opt(r.f_measure)},
          {"accuracy", opt(r.accuracy)},
          {"fp_rate", opt(r.fp_rate)},
          {"fn_rate", opt(r.fn_rate)},
          {"samples", r.samples},
          {"rule_count", r.rule_count},
          {"mean_latency_us",
           std::chrono::duration_cast<std::chrono::microseconds>(r.mean_latency).count()},
          {"p95_latency_us",
           std::chrono::duration_cast<std::chrono::microseconds>(r.p95_latency).count()},
          {"rules_created", r.rules_created},
          {"rules_updated", r.rules_updated},
          {"rules_deleted", r.rules_deleted}};
}

inline nlohmann::json verdict_to_json(const Verdict& v, const std::string& id) {
  nlohmann::json fired = nlohmann::json::array();
  for (const auto& f : v.fired) fired.push_back({{"rule", f.rule_id}, {"weight", f.weight}});
  return {{"schema", "pdenff.verdict/1"},
          {"id", id},
          {"label", label_name(v.label)},
          {"score", v.score},
          {"profile_version", v.profile_version},
          {"latency_us", std::chrono::duration_cast<std::chrono::microseconds>(v.latency).count()},
          {"fired_rules", fired}};
}

}  // namespace pdenff
