#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "pdenff/errors.hpp"
#include "pdenff/rules.hpp"

namespace pdenff {

// Phish is the positive class throughout.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
};

// Undefined ratios (zero denominators) stay absent instead of collapsing to
// 0, so degenerate runs are visible as such.
struct MetricsReport {
  ConfusionCounts counts;
  std::optional<double> sensitivity;  // recall: tp/(tp+fn)
  std::optional<double> precision;    // tp/(tp+fp)
  std::optional<double> f_measure;    // 2pr/(p+r)
  std::optional<double> accuracy;     // (tp+tn)/total
  std::optional<double> fp_rate;      // fp/(fp+tn)
  std::optional<double> fn_rate;      // fn/(fn+tp)
  std::int64_t samples = 0;
  std::int64_t rule_count = 0;
  std::chrono::nanoseconds mean_latency{0};
  std::chrono::nanoseconds p95_latency{0};
  std::int64_t rules_created = 0;
  std::int64_t rules_updated = 0;
  std::int64_t rules_deleted = 0;
};

// Counters the scoring pass cannot see; supplied by the engine.
struct RunStats {
  std::int64_t rule_count = 0;
  std::int64_t rules_created = 0;
  std::int64_t rules_updated = 0;
  std::int64_t rules_deleted = 0;
};

inline MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.samples = c.total();
  const double tp = static_cast<double>(c.tp);
  const double tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn);
  if (c.tp + c.fn > 0) r.sensitivity = tp / (tp + fn);
  if (c.tp + c.fp > 0) r.precision = tp / (tp + fp);
  if (c.total() > 0) r.accuracy = (tp + tn) / static_cast<double>(c.total());
  if (c.fp + c.tn > 0) r.fp_rate = fp / (fp + tn);
  if (c.fn + c.tp > 0) r.fn_rate = fn / (fn + tp);
  if (r.precision && r.sensitivity && (*r.precision + *r.sensitivity) > 0.0) {
    r.f_measure = 2.0 * (*r.precision) * (*r.sensitivity) / (*r.precision + *r.sensitivity);
  }
  return r;
}

inline MetricsReport score_run(const std::vector<std::pair<Verdict, Label>>& verdicts,
                               const RunStats* stats = nullptr) {
  if (verdicts.empty()) throw Error(Errc::empty_input, "score_run needs at least one verdict");
  ConfusionCounts c;
  std::vector<std::chrono::nanoseconds> lat;
  lat.reserve(verdicts.size());
  std::chrono::nanoseconds total{0};
  for (const auto& [v, truth] : verdicts) {
    if (truth == Label::Phish) {
      (v.label == Label::Phish ? c.tp : c.fn)++;
    } else {
      (v.label == Label::Phish ? c.fp : c.tn)++;
    }
    lat.push_back(v.latency);
    total += v.latency;
  }
  MetricsReport r = metrics_from_counts(c);
  r.mean_latency = total / static_cast<std::int64_t>(lat.size());
  std::sort(lat.begin(), lat.end());
  const std::size_t idx = (lat.size() * 95 + 99) / 100;  // ceil(0.95 n)
  r.p95_latency = lat[std::min(idx == 0 ? 0 : idx - 1, lat.size() - 1)];
  if (stats) {
    r.rule_count = stats->rule_count;
    r.rules_created = stats->rules_created;
    r.rules_updated = stats->rules_updated;
    r.rules_deleted = stats->rules_deleted;
  }
  return r;
}

struct RunDeltas {
  std::optional<double> accuracy_delta;  // a - b
  std::optional<double> f_delta;
  std::optional<double> rule_count_ratio;  // a / b
  std::optional<double> latency_ratio;
};

inline RunDeltas compare_runs(const MetricsReport& a, const MetricsReport& b) {
  if (a.samples != b.samples)
    throw Error(Errc::mismatched_runs, "reports cover different sample counts");
  RunDeltas d;
  if (a.accuracy && b.accuracy) d.accuracy_delta = *a.accuracy - *b.accuracy;
  if (a.f_measure && b.f_measure) d.f_delta = *a.f_measure - *b.f_measure;
  if (b.rule_count > 0)
    d.rule_count_ratio = static_cast<double>(a.rule_count) / static_cast<double>(b.rule_count);
  if (b.mean_latency.count() > 0)
    d.latency_ratio =
        static_cast<double>(a.mean_latency.count()) / static_cast<double>(b.mean_latency.count());
  return d;
}

}  // namespace pdenff
