#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pdenff/clustering.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/rules.hpp"

namespace pdenff {

struct Sample {
  Vec x;
  Label y = Label::Ham;
  std::int64_t timestamp = 0;
};

// A captured profile: the labeled samples of one window plus the rule base
// snapshot taken when the window closed.
struct ProfileWindow {
  std::vector<Sample> samples;
  RuleBase snapshot;
};

struct RefineParams {
  double learning_rate = 0.05;
  int epochs = 30;
  double l2 = 1e-4;  // ridge term on the consequent batch fit
  std::size_t min_refine_samples = 50;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(Errc::bad_config, "learning_rate must be > 0");
    if (epochs < 0) throw Error(Errc::bad_config, "epochs must be >= 0");
    if (l2 < 0.0) throw Error(Errc::bad_config, "l2 must be >= 0");
  }
};

struct RefineResult {
  RuleBase rulebase;
  bool improved = false;  // false means the snapshot came back unchanged
  double mse_before = 0.0;
  double mse_after = 0.0;
};

// Mean squared error of the raw (unclamped) inference output.
inline double window_mse(const RuleBase& rb, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0, comp = 0.0;  // Kahan, to keep finite differences honest
  for (const auto& s : samples) {
    const double e = score_unclamped(rb, s.x) - static_cast<double>(static_cast<int>(s.y));
    const double term = e * e - comp;
    const double t = acc + term;
    comp = (t - acc) - term;
    acc = t;
  }
  return acc / static_cast<double>(samples.size());
}

namespace detail {

// Parameter layout for antecedent gradients: for each rule, dim center
// entries then dim width entries.
inline std::size_t antecedent_param_count(const RuleBase& rb) {
  return rb.rules.size() * 2 * static_cast<std::size_t>(rb.dim);
}

inline double* antecedent_param(RuleBase& rb, std::size_t p) {
  const std::size_t dim = static_cast<std::size_t>(rb.dim);
  const std::size_t per_rule = 2 * dim;
  FuzzyRule& r = rb.rules[p / per_rule];
  const std::size_t off = p % per_rule;
  return off < dim ? &r.center[off] : &r.width[off - dim];
}

}  // namespace detail

// Analytic gradient of window_mse with respect to every antecedent center and
// width, in detail::antecedent_param order. The active-rule selection is
// treated as locally constant, which matches the loss everywhere off the
// selection boundaries.
inline std::vector<double> antecedent_gradient(const RuleBase& rb, const std::vector<Sample>& samples) {
  const std::size_t dim = static_cast<std::size_t>(rb.dim);
  std::vector<double> grad(detail::antecedent_param_count(rb), 0.0);
  if (samples.empty() || rb.rules.empty()) return grad;

  const double inv_n = 1.0 / static_cast<double>(samples.size());
  for (const auto& s : samples) {
    const auto as = detail::compute_active(rb, s.x);
    const double out = detail::weighted_score(rb, s.x, as);
    const double err = out - static_cast<double>(static_cast<int>(s.y));
    for (std::size_t k = 0; k < as.idx.size(); ++k) {
      const std::size_t j = as.idx[k];
      const FuzzyRule& r = rb.rules[j];
      const double fj = r.consequent_at(s.x);
      // d(out)/d(log mu_j) for softmax-normalized mixing
      const double common = 2.0 * inv_n * err * as.weight[k] * (fj - out);
      const std::size_t base = j * 2 * dim;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = s.x[i] - r.center[i];
        const double s2 = r.width[i] * r.width[i];
        grad[base + i] += common * d / s2;
        grad[base + dim + i] += common * d * d / (s2 * r.width[i]);
      }
    }
  }
  return grad;
}

// Max relative disagreement between the analytic antecedent gradient and a
// central finite difference of the same loss.
inline double gradient_check(const ProfileWindow& window, const RuleBase& rb, double epsilon) {
  const auto analytic = antecedent_gradient(rb, window.samples);
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    RuleBase plus = rb;
    RuleBase minus = rb;
    *detail::antecedent_param(plus, p) += epsilon;
    *detail::antecedent_param(minus, p) -= epsilon;
    const double fd = (window_mse(plus, window.samples) - window_mse(minus, window.samples)) / (2.0 * epsilon);
    const double rel = std::abs(analytic[p] - fd) / (std::abs(fd) + 1e-12);
    worst = std::max(worst, rel);
  }
  return worst;
}

// Per-rule weighted ridge refit of the consequents. Weights are the
// normalized firing strengths each rule collected over the window; rules the
// window never activates keep their coefficients.
inline void fit_consequents(RuleBase& rb, const std::vector<Sample>& samples, double l2) {
  const std::size_t k = static_cast<std::size_t>(rb.dim) + 1;
  const std::size_t nr = rb.rules.size();
  std::vector<std::vector<double>> a(nr, std::vector<double>(k * k, 0.0));
  std::vector<std::vector<double>> rhs(nr, std::vector<double>(k, 0.0));

  std::vector<double> z(k);
  for (const auto& s : samples) {
    z[0] = 1.0;
    for (std::size_t i = 1; i < k; ++i) z[i] = s.x[i - 1];
    const double y = static_cast<double>(static_cast<int>(s.y));
    const auto as = detail::compute_active(rb, s.x);
    for (std::size_t t = 0; t < as.idx.size(); ++t) {
      const std::size_t j = as.idx[t];
      const double w = as.weight[t];
      for (std::size_t r = 0; r < k; ++r) {
        rhs[j][r] += w * y * z[r];
        for (std::size_t c = 0; c < k; ++c) a[j][r * k + c] += w * z[r] * z[c];
      }
    }
  }

  for (std::size_t j = 0; j < nr; ++j) {
    for (std::size_t i = 0; i < k; ++i) a[j][i * k + i] += l2;
    // Gaussian elimination with partial pivoting; a near-singular system
    // keeps the rule's previous coefficients.
    std::vector<double>& m = a[j];
    std::vector<double>& b = rhs[j];
    double scale = 0.0;
    for (double v : m) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) continue;
    bool singular = false;
    for (std::size_t col = 0; col < k && !singular; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < k; ++r)
        if (std::abs(m[r * k + col]) > std::abs(m[piv * k + col])) piv = r;
      if (std::abs(m[piv * k + col]) < 1e-12 * scale) {
        singular = true;
        break;
      }
      if (piv != col) {
        for (std::size_t c = 0; c < k; ++c) std::swap(m[col * k + c], m[piv * k + c]);
        std::swap(b[col], b[piv]);
      }
      for (std::size_t r = col + 1; r < k; ++r) {
        const double f = m[r * k + col] / m[col * k + col];
        for (std::size_t c = col; c < k; ++c) m[r * k + c] -= f * m[col * k + c];
        b[r] -= f * b[col];
      }
    }
    if (singular) continue;
    Vec sol(k, 0.0);
    for (std::size_t ri = k; ri-- > 0;) {
      double v = b[ri];
      for (std::size_t c = ri + 1; c < k; ++c) v -= m[ri * k + c] * sol[c];
      sol[ri] = v / m[ri * k + ri];
    }
    bool finite = true;
    for (double v : sol)
      if (!std::isfinite(v)) finite = false;
    if (!finite) continue;
    rb.rules[j].coeffs = sol;
    // fresh estimator state for the online continuation
    rb.rules[j].cov.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) rb.rules[j].cov[i * k + i] = rb.inf.rls_init_cov;
  }
}

// Offline enhancement over one profile window: constrained re-clustering,
// antecedent rebuild, gradient descent on the window MSE, consequent refit.
// A result that does not improve the window MSE returns the snapshot
// unchanged with improved=false.
inline RefineResult refine(const ProfileWindow& window, const RefineParams& hyper) {
  hyper.validate();
  if (window.samples.size() < hyper.min_refine_samples) {
    throw Error(Errc::insufficient_window,
                "window has " + std::to_string(window.samples.size()) + " labeled samples, need >= " +
                    std::to_string(hyper.min_refine_samples));
  }

  RefineResult res;
  res.mse_before = window_mse(window.snapshot, window.samples);

  RuleBase rb = window.snapshot;
  std::vector<Vec> xs;
  xs.reserve(window.samples.size());
  for (const auto& s : window.samples) xs.push_back(s.x);

  const EcmcResult er = ecmc_refine(xs, rb.clusters, rb.ecm);
  rb.clusters = er.clusters;

  // Rebuild antecedents from the refined clusters. Rules linked to surviving
  // clusters keep their consequents as the descent starting point; clusters
  // first seen unlabeled get a fresh rule seeded from member labels.
  std::vector<std::pair<Vec, Label>> labeled;
  labeled.reserve(window.samples.size());
  for (const auto& s : window.samples) labeled.emplace_back(s.x, s.y);
  const auto seeds = clusters_to_rule_seeds(rb.clusters, labeled, rb.ecm, rb.inf);

  std::vector<FuzzyRule> rebuilt;
  rebuilt.reserve(rb.clusters.size());
  for (std::size_t j = 0; j < rb.clusters.size(); ++j) {
    FuzzyRule r = seeds[j];
    if (const FuzzyRule* prev = window.snapshot.rule_for_cluster(rb.clusters[j].id)) {
      r.id = prev->id;
      r.coeffs = prev->coeffs;
      r.support = prev->support;
      r.version = prev->version;
    } else {
      r.id = rb.next_rule_id++;
    }
    rebuilt.push_back(std::move(r));
  }
  rb.rules = std::move(rebuilt);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto grad = antecedent_gradient(rb, window.samples);
    for (std::size_t p = 0; p < grad.size(); ++p) {
      *detail::antecedent_param(rb, p) -= hyper.learning_rate * grad[p];
    }
    for (auto& r : rb.rules) {
      for (double& w : r.width) w = std::max(w, rb.inf.sigma_min);
    }
  }

  fit_consequents(rb, window.samples, hyper.l2);
  res.mse_after = window_mse(rb, window.samples);

  if (!std::isfinite(res.mse_after) || res.mse_after > res.mse_before) {
    res.rulebase = window.snapshot;
    res.improved = false;
    res.mse_after = res.mse_before;
    return res;
  }

  for (auto& r : rb.rules) {
    r.origin = RuleOrigin::OfflineEnhanced;
    r.version++;
    r.last_fired_at = rb.sample_ordinal;
  }
  rb.profile_version = window.snapshot.profile_version + 1;
  res.rulebase = std::move(rb);
  res.improved = true;
  return res;
}

}  // namespace pdenff
