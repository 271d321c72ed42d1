#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pdenff/errors.hpp"

namespace pdenff {

// Feature vector in [0,1]^dim. dim is 4 in short mode, 21 in long mode.
using Vec = std::vector<double>;

enum class Metric {
  Euclidean,
  // Euclidean divided by sqrt(dim); distances fall in [0,1] over the unit
  // cube, so one dthr value is comparable between 4-d and 21-d runs.
  NormalizedEuclidean,
};

inline std::string metric_name(Metric m) {
  return m == Metric::Euclidean ? "euclidean" : "normalized_euclidean";
}

inline Metric metric_from_name(const std::string& s) {
  if (s == "euclidean") return Metric::Euclidean;
  if (s == "normalized_euclidean") return Metric::NormalizedEuclidean;
  throw Error(Errc::bad_config, "unknown metric '" + s + "'");
}

inline double distance(const Vec& a, const Vec& b, Metric m) {
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    ss += d * d;
  }
  double d = std::sqrt(ss);
  if (m == Metric::NormalizedEuclidean && !a.empty()) d /= std::sqrt(static_cast<double>(a.size()));
  return d;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

inline void clamp01_inplace(Vec& v) {
  for (double& x : v) x = clamp01(x);
}

}  // namespace pdenff
