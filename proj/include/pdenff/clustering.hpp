#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "pdenff/errors.hpp"
#include "pdenff/vec.hpp"

namespace pdenff {

// One evolving cluster in feature space. `created_at` is the ordinal of the
// sample that created it and doubles as a stable id for rule linkage.
struct Cluster {
  std::int64_t id = 0;
  Vec center;
  double radius = 0.0;
  std::int64_t member_count = 0;
  std::int64_t created_at = 0;
};

struct EcmParams {
  double dthr = 0.18;  // distance threshold; cluster radii never exceed it
  Metric metric = Metric::NormalizedEuclidean;
  int ecmc_max_iters = 100;

  void validate() const {
    if (!(dthr > 0.0 && dthr <= 1.0)) throw Error(Errc::bad_config, "dthr must be in (0,1]");
    if (ecmc_max_iters < 1) throw Error(Errc::bad_config, "ecmc_max_iters must be >= 1");
  }
};

enum class EcmEvent { None, Updated, Created };

struct EcmResult {
  std::size_t index = 0;  // cluster the sample was assigned to
  EcmEvent event = EcmEvent::None;
};

// One-pass evolving clustering step.
//  - sample inside the nearest cluster's radius: nothing changes;
//  - min_j dist(x,c_j)+r_j > 2*dthr: a fresh zero-radius cluster at x;
//  - otherwise the minimizing cluster grows to radius (dist+r)/2 and its
//    center slides along the center--x segment so dist(center',x) = radius'.
// Radii stay <= dthr in every case.
inline EcmResult ecm_update(std::vector<Cluster>& state, const Vec& x, const EcmParams& params,
                            std::int64_t ordinal) {
  auto create = [&]() -> EcmResult {
    Cluster c;
    c.id = ordinal;
    c.center = x;
    clamp01_inplace(c.center);
    c.radius = 0.0;
    c.member_count = 1;
    c.created_at = ordinal;
    state.push_back(std::move(c));
    return {state.size() - 1, EcmEvent::Created};
  };

  if (state.empty()) return create();

  std::vector<double> dist(state.size());
  std::size_t nearest = 0;
  for (std::size_t j = 0; j < state.size(); ++j) {
    dist[j] = distance(x, state[j].center, params.metric);
    if (dist[j] < dist[nearest]) nearest = j;
  }
  if (dist[nearest] <= state[nearest].radius) {
    state[nearest].member_count++;
    return {nearest, EcmEvent::None};
  }

  std::size_t winner = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < state.size(); ++j) {
    const double s = dist[j] + state[j].radius;
    if (s < best) {
      best = s;
      winner = j;
    }
  }
  if (best > 2.0 * params.dthr) return create();

  Cluster& c = state[winner];
  const double new_radius = best / 2.0;
  // dist[winner] > 0 here: a zero distance would have been caught by the
  // nearest-cluster containment test (radius >= 0).
  const double t = new_radius / dist[winner];
  for (std::size_t i = 0; i < c.center.size(); ++i) {
    c.center[i] = x[i] + (c.center[i] - x[i]) * t;
  }
  clamp01_inplace(c.center);
  c.radius = new_radius;
  c.member_count++;
  return {winner, EcmEvent::Updated};
}

struct EcmcResult {
  std::vector<Cluster> clusters;
  std::vector<double> sse_history;  // within-cluster SSE after each iteration
  int iterations = 0;
};

// Offline constrained refinement (ECMc): Lloyd-style reassignment and
// recentering seeded from an online pass. Empty clusters are dropped; final
// radii are capped at dthr.
inline EcmcResult ecmc_refine(const std::vector<Vec>& samples, const std::vector<Cluster>& seed,
                              const EcmParams& params) {
  if (samples.empty()) throw Error(Errc::empty_batch, "ecmc_refine requires a non-empty batch");

  EcmcResult out;
  out.clusters = seed;
  if (out.clusters.empty()) {
    Cluster c;
    c.id = 0;
    c.center = samples.front();
    out.clusters.push_back(std::move(c));
  }

  std::vector<std::size_t> assign(samples.size(), 0);
  std::vector<std::size_t> prev;
  for (int iter = 0; iter < params.ecmc_max_iters; ++iter) {
    // Assignment.
    double sse = 0.0;
    for (std::size_t n = 0; n < samples.size(); ++n) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < out.clusters.size(); ++j) {
        const double d = distance(samples[n], out.clusters[j].center, params.metric);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      assign[n] = best;
      sse += best_d * best_d;
    }
    out.sse_history.push_back(sse);
    out.iterations = iter + 1;
    if (iter > 0 && assign == prev) break;
    prev = assign;

    // Recenter; drop clusters that attracted nothing.
    const std::size_t dim = samples.front().size();
    std::vector<Vec> sums(out.clusters.size(), Vec(dim, 0.0));
    std::vector<std::int64_t> counts(out.clusters.size(), 0);
    for (std::size_t n = 0; n < samples.size(); ++n) {
      counts[assign[n]]++;
      for (std::size_t i = 0; i < dim; ++i) sums[assign[n]][i] += samples[n][i];
    }
    std::vector<Cluster> kept;
    std::vector<std::size_t> remap(out.clusters.size(), 0);
    for (std::size_t j = 0; j < out.clusters.size(); ++j) {
      if (counts[j] == 0) continue;
      remap[j] = kept.size();
      Cluster c = out.clusters[j];
      for (std::size_t i = 0; i < dim; ++i) c.center[i] = sums[j][i] / static_cast<double>(counts[j]);
      clamp01_inplace(c.center);
      c.member_count = counts[j];
      kept.push_back(std::move(c));
    }
    for (std::size_t n = 0; n < samples.size(); ++n) assign[n] = remap[assign[n]];
    for (std::size_t n = 0; n < prev.size(); ++n) prev[n] = remap[prev[n]];
    out.clusters = std::move(kept);
  }

  // Final radii: furthest member, capped by the global threshold.
  std::vector<double> max_d(out.clusters.size(), 0.0);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double d = distance(samples[n], out.clusters[assign[n]].center, params.metric);
    max_d[assign[n]] = std::max(max_d[assign[n]], d);
  }
  for (std::size_t j = 0; j < out.clusters.size(); ++j) {
    out.clusters[j].radius = std::min(max_d[j], params.dthr);
  }
  return out;
}

}  // namespace pdenff
