#include "cte/pareto.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cte {

std::vector<bool> pareto_frontier(const std::vector<ParetoPoint>& points) {
  const size_t n = points.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (points[a].latency_us != points[b].latency_us)
      return points[a].latency_us < points[b].latency_us;
    return points[a].error < points[b].error;
  });

  std::vector<bool> frontier(n, false);
  double best_before = std::numeric_limits<double>::infinity();
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n &&
           points[order[j]].latency_us == points[order[i]].latency_us)
      ++j;
    const double group_min = points[order[i]].error;  // sorted within group
    for (size_t k = i; k < j; ++k)
      frontier[order[k]] =
          points[order[k]].error == group_min && group_min < best_before;
    best_before = std::min(best_before, group_min);
    i = j;
  }
  return frontier;
}

}  // namespace cte
