#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "pdenff/clustering.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/vec.hpp"

namespace pdenff {

enum class Label : int { Ham = 0, Phish = 1 };

inline const char* label_name(Label l) { return l == Label::Phish ? "phish" : "ham"; }

enum class RuleOrigin { Online, OfflineEnhanced };

// First-order Takagi-Sugeno rule: per-dimension Gaussian antecedent and a
// linear consequent b0 + b1*x1 + ... + bd*xd. `cov` is the covariance of the
// recursive least-squares estimator for the consequent, (dim+1)^2 row-major.
struct FuzzyRule {
  int id = 0;
  std::int64_t cluster_id = -1;
  Vec center;
  Vec width;
  Vec coeffs;
  std::vector<double> cov;
  std::int64_t support = 0;
  std::int64_t last_fired_at = 0;
  RuleOrigin origin = RuleOrigin::Online;
  int version = 0;

  double consequent_at(const Vec& x) const {
    double f = coeffs.empty() ? 0.0 : coeffs[0];
    for (std::size_t i = 0; i < x.size(); ++i) f += coeffs[i + 1] * x[i];
    return f;
  }

  // log of the firing strength: -sum_i (x_i - c_i)^2 / (2 s_i^2)
  double log_firing(const Vec& x) const {
    double g = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - center[i];
      g -= d * d / (2.0 * width[i] * width[i]);
    }
    return g;
  }
};

struct InferenceParams {
  int m_active = 3;                  // rules taking part in each inference
  double decision_threshold = 0.5;   // score >= threshold => phish
  double lambda = 0.99;              // RLS forgetting factor
  std::int64_t prune_window = 300;   // silent online rules older than this go
  double sigma_min = 0.05;           // Gaussian width floor
  double fire_strength_min = 1e-3;   // firing strength counting as support
  double rls_init_cov = 1e6;         // initial covariance scale c in P = c*I

  void validate() const {
    if (m_active < 1) throw Error(Errc::bad_config, "m_active must be >= 1");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
      throw Error(Errc::bad_config, "decision_threshold must be in (0,1)");
    if (!(lambda > 0.9 && lambda <= 1.0)) throw Error(Errc::bad_config, "lambda must be in (0.9,1]");
    if (prune_window < 1) throw Error(Errc::bad_config, "prune_window must be >= 1");
    if (!(sigma_min > 0.0)) throw Error(Errc::bad_config, "sigma_min must be > 0");
    if (!(rls_init_cov > 0.0)) throw Error(Errc::bad_config, "rls_init_cov must be > 0");
  }
};

struct RuleBaseStats {
  std::int64_t rules_created = 0;
  std::int64_t rules_updated = 0;
  std::int64_t rules_deleted = 0;
  std::int64_t rls_cov_resets = 0;
};

struct RuleBase {
  int dim = 4;
  EcmParams ecm;
  InferenceParams inf;
  std::vector<FuzzyRule> rules;
  std::vector<Cluster> clusters;  // evolving ECM state feeding rule creation
  std::int64_t profile_version = 0;
  std::int64_t sample_ordinal = 0;
  int next_rule_id = 0;
  RuleBaseStats stats;

  FuzzyRule* rule_for_cluster(std::int64_t cid) {
    for (auto& r : rules)
      if (r.cluster_id == cid) return &r;
    return nullptr;
  }
  const FuzzyRule* rule_for_cluster(std::int64_t cid) const {
    for (auto& r : rules)
      if (r.cluster_id == cid) return &r;
    return nullptr;
  }
  const FuzzyRule* rule_by_id(int id) const {
    for (auto& r : rules)
      if (r.id == id) return &r;
    return nullptr;
  }
};

struct FiredRule {
  int rule_id = 0;
  double weight = 0.0;  // normalized firing strength; weights sum to 1
};

struct Verdict {
  double score = 0.0;
  Label label = Label::Ham;
  std::vector<FiredRule> fired;
  std::chrono::nanoseconds latency{0};
  std::int64_t profile_version = 0;
};

namespace detail {

struct ActiveSet {
  std::vector<std::size_t> idx;    // rule indices, strongest first
  std::vector<double> log_mu;      // log firing strengths, parallel to idx
  std::vector<double> weight;      // softmax-normalized, sums to 1
};

// Picks the m_active strongest rules and normalizes their firing strengths.
// Normalization happens in log space so far-from-everything inputs still get
// well-defined weights instead of 0/0.
inline ActiveSet compute_active(const RuleBase& rb, const Vec& x) {
  ActiveSet as;
  const std::size_t n = rb.rules.size();
  std::vector<double> logs(n);
  for (std::size_t j = 0; j < n; ++j) logs[j] = rb.rules[j].log_firing(x);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (logs[a] != logs[b]) return logs[a] > logs[b];
    return a < b;
  });
  const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(rb.inf.m_active), n);
  as.idx.assign(order.begin(), order.begin() + m);
  as.log_mu.resize(m);
  for (std::size_t k = 0; k < m; ++k) as.log_mu[k] = logs[as.idx[k]];

  const double top = as.log_mu.empty() ? 0.0 : as.log_mu.front();
  double sum = 0.0;
  as.weight.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    as.weight[k] = std::exp(as.log_mu[k] - top);
    sum += as.weight[k];
  }
  for (double& w : as.weight) w /= sum;
  return as;
}

inline double weighted_score(const RuleBase& rb, const Vec& x, const ActiveSet& as) {
  double s = 0.0;
  for (std::size_t k = 0; k < as.idx.size(); ++k) {
    s += as.weight[k] * rb.rules[as.idx[k]].consequent_at(x);
  }
  return s;
}

}  // namespace detail

// Raw Takagi-Sugeno output before clamping; the refinement loss is defined on
// this quantity so it stays differentiable.
inline double score_unclamped(const RuleBase& rb, const Vec& x) {
  if (rb.rules.empty()) throw Error(Errc::cold_start, "rule base is empty; train first");
  return detail::weighted_score(rb, x, detail::compute_active(rb, x));
}

inline Verdict classify(const RuleBase& rb, const Vec& x) {
  const auto t0 = std::chrono::steady_clock::now();
  if (rb.rules.empty()) throw Error(Errc::cold_start, "rule base is empty; train first");
  const auto as = detail::compute_active(rb, x);
  const double raw = detail::weighted_score(rb, x, as);

  Verdict v;
  v.score = clamp01(raw);
  v.label = v.score >= rb.inf.decision_threshold ? Label::Phish : Label::Ham;
  v.profile_version = rb.profile_version;
  v.fired.reserve(as.idx.size());
  for (std::size_t k = 0; k < as.idx.size(); ++k) {
    v.fired.push_back({rb.rules[as.idx[k]].id, as.weight[k]});
  }
  v.latency = std::chrono::steady_clock::now() - t0;
  return v;
}

// One weighted recursive least-squares step on the consequent over the
// regressor (1, x_1..x_d). weight <= 0 is a no-op. A non-finite covariance
// update discards the step and resets the covariance to init_cov * I.
inline void rls_update(FuzzyRule& rule, const Vec& x, double target, double weight, double lambda,
                       double init_cov, RuleBaseStats* stats = nullptr) {
  if (weight <= 0.0) return;
  const std::size_t k = x.size() + 1;
  if (rule.coeffs.size() != k) rule.coeffs.assign(k, 0.0);
  if (rule.cov.size() != k * k) {
    rule.cov.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) rule.cov[i * k + i] = init_cov;
  }

  std::vector<double> z(k);
  z[0] = 1.0;
  for (std::size_t i = 1; i < k; ++i) z[i] = x[i - 1];

  std::vector<double> pz(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) pz[i] += rule.cov[i * k + j] * z[j];
  double zpz = 0.0;
  for (std::size_t i = 0; i < k; ++i) zpz += z[i] * pz[i];

  const double denom = lambda / weight + zpz;
  std::vector<double> gain(k);
  for (std::size_t i = 0; i < k; ++i) gain[i] = pz[i] / denom;

  double err = target;
  for (std::size_t i = 0; i < k; ++i) err -= rule.coeffs[i] * z[i];

  std::vector<double> new_coeffs = rule.coeffs;
  for (std::size_t i = 0; i < k; ++i) new_coeffs[i] += gain[i] * err;

  std::vector<double> new_cov(k * k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      new_cov[i * k + j] = (rule.cov[i * k + j] - gain[i] * pz[j]) / lambda;
  // keep P symmetric against fp drift
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double avg = 0.5 * (new_cov[i * k + j] + new_cov[j * k + i]);
      new_cov[i * k + j] = avg;
      new_cov[j * k + i] = avg;
    }

  bool finite = true;
  for (double v : new_coeffs)
    if (!std::isfinite(v)) finite = false;
  for (double v : new_cov)
    if (!std::isfinite(v)) finite = false;
  if (!finite) {
    rule.cov.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) rule.cov[i * k + i] = init_cov;
    if (stats) stats->rls_cov_resets++;
    return;
  }
  rule.coeffs = std::move(new_coeffs);
  rule.cov = std::move(new_cov);
}

// Seed one rule per cluster: Gaussian centers at the cluster center, widths
// max(radius, sigma_min), constant consequent set to the mean label of the
// cluster's members (0.5 when no labeled member lands there).
inline std::vector<FuzzyRule> clusters_to_rule_seeds(const std::vector<Cluster>& clusters,
                                                     const std::vector<std::pair<Vec, Label>>& labeled,
                                                     const EcmParams& ecm, const InferenceParams& inf) {
  std::vector<double> label_sum(clusters.size(), 0.0);
  std::vector<std::int64_t> label_n(clusters.size(), 0);
  for (const auto& [x, y] : labeled) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < clusters.size(); ++j) {
      const double d = distance(x, clusters[j].center, ecm.metric);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    if (!clusters.empty()) {
      label_sum[best] += static_cast<double>(static_cast<int>(y));
      label_n[best]++;
    }
  }

  std::vector<FuzzyRule> rules;
  rules.reserve(clusters.size());
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    FuzzyRule r;
    r.id = static_cast<int>(j);
    r.cluster_id = clusters[j].id;
    r.center = clusters[j].center;
    r.width.assign(clusters[j].center.size(), std::max(clusters[j].radius, inf.sigma_min));
    r.coeffs.assign(clusters[j].center.size() + 1, 0.0);
    r.coeffs[0] = label_n[j] > 0 ? label_sum[j] / static_cast<double>(label_n[j]) : 0.5;
    r.last_fired_at = clusters[j].created_at;
    rules.push_back(std::move(r));
  }
  return rules;
}

namespace detail {

inline void spawn_rule(RuleBase& rb, const Cluster& c, double b0, std::int64_t ordinal) {
  FuzzyRule r;
  r.id = rb.next_rule_id++;
  r.cluster_id = c.id;
  r.center = c.center;
  r.width.assign(c.center.size(), std::max(c.radius, rb.inf.sigma_min));
  r.coeffs.assign(c.center.size() + 1, 0.0);
  r.coeffs[0] = b0;
  r.last_fired_at = ordinal;
  r.origin = RuleOrigin::Online;
  rb.rules.push_back(std::move(r));
  rb.stats.rules_created++;
}

inline void prune_silent_rules(RuleBase& rb, std::int64_t ordinal) {
  auto dead = [&](const FuzzyRule& r) {
    return r.origin == RuleOrigin::Online && ordinal - r.last_fired_at >= rb.inf.prune_window;
  };
  const auto before = rb.rules.size();
  rb.rules.erase(std::remove_if(rb.rules.begin(), rb.rules.end(), dead), rb.rules.end());
  rb.stats.rules_deleted += static_cast<std::int64_t>(before - rb.rules.size());
}

}  // namespace detail

// Unlabeled sample: the clustering state evolves, rules stay untouched until
// a label arrives through the feedback channel.
inline void observe(RuleBase& rb, const Vec& x) {
  const std::int64_t ordinal = rb.sample_ordinal++;
  ecm_update(rb.clusters, x, rb.ecm, ordinal);
}

// Supervised online step: evolve the clustering state, create or move the
// linked rule, push the active consequents toward the label with weighted
// RLS, then drop online rules that have been silent for a full prune window.
inline void learn_online(RuleBase& rb, const Vec& x, Label y) {
  const std::int64_t ordinal = rb.sample_ordinal++;
  const double target = static_cast<double>(static_cast<int>(y));

  const EcmResult ev = ecm_update(rb.clusters, x, rb.ecm, ordinal);
  const Cluster& c = rb.clusters[ev.index];
  FuzzyRule* linked = rb.rule_for_cluster(c.id);
  if (linked == nullptr) {
    // Covers both the Created event and clusters first seen unlabeled.
    detail::spawn_rule(rb, c, target, ordinal);
  } else if (ev.event == EcmEvent::Updated) {
    linked->center = c.center;
    for (double& w : linked->width) w = std::max(c.radius, rb.inf.sigma_min);
  }

  const auto as = detail::compute_active(rb, x);
  for (std::size_t k = 0; k < as.idx.size(); ++k) {
    FuzzyRule& r = rb.rules[as.idx[k]];
    rls_update(r, x, target, as.weight[k], rb.inf.lambda, rb.inf.rls_init_cov, &rb.stats);
    if (std::exp(as.log_mu[k]) >= rb.inf.fire_strength_min) {
      r.support++;
      r.last_fired_at = ordinal;
    }
    rb.stats.rules_updated++;
  }

  detail::prune_silent_rules(rb, ordinal);
}

}  // namespace pdenff
