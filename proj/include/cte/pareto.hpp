#pragma once

#include <vector>

namespace cte {

struct ParetoPoint {
  double latency_us = 0.0;
  double error = 0.0;
};

// Frontier flags by sort-and-scan dominance filtering: a point is kept iff
// no other point is at most as slow and at most as wrong with one of the
// two strict. Exact duplicates are both kept.
std::vector<bool> pareto_frontier(const std::vector<ParetoPoint>& points);

}  // namespace cte
