#pragma once

// Test oracle: exact Euclidean projection onto the simplex by exhaustive
// support enumeration (solves the KKT system for every candidate support).

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

inline std::vector<double> simplex_projection(const std::vector<double>& z) {
  const std::size_t d = z.size();
  std::vector<double> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask < (std::size_t{1} << d); ++mask) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < d; ++i)
      if (mask & (std::size_t{1} << i)) {
        sum += z[i];
        ++count;
      }
    const double tau = (sum - 1.0) / static_cast<double>(count);
    std::vector<double> p(d, 0.0);
    bool feasible = true;
    for (std::size_t i = 0; i < d; ++i) {
      if (mask & (std::size_t{1} << i)) {
        p[i] = z[i] - tau;
        if (p[i] < -1e-12) feasible = false;
      }
    }
    if (!feasible) continue;
    double dist = 0.0;
    for (std::size_t i = 0; i < d; ++i) dist += (p[i] - z[i]) * (p[i] - z[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = std::move(p);
    }
  }
  return best;
}

}  // namespace oracle
