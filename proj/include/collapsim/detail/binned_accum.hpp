#pragma once

// Internal helpers for deterministic ensemble aggregation: integer per-bin
// count sums accumulated in fixed trajectory blocks, merged in block order so
// the result is bit-identical for any worker count.

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "collapsim/scenario.hpp"

namespace collapsim::detail {

inline constexpr int kAccumulationBlocks = 128;

inline int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 4;
  return static_cast<int>(std::min<unsigned>(hw, 8));
}

struct GroupAccumulator {
  std::vector<std::int64_t> sum;
  std::vector<std::int64_t> sum_sq;
  std::int64_t n = 0;
  explicit GroupAccumulator(std::size_t bins) : sum(bins, 0), sum_sq(bins, 0) {}
  void add(const std::vector<std::int32_t>& counts) {
    ++n;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      std::int64_t c = counts[i];
      sum[i] += c;
      sum_sq[i] += c * c;
    }
  }
  void merge(const GroupAccumulator& other) {
    n += other.n;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      sum[i] += other.sum[i];
      sum_sq[i] += other.sum_sq[i];
    }
  }
};

// Sample mean rate and its standard error from integer count sums.
inline RateCurve group_curve(const TimeGrid& grid, const GroupAccumulator& g) {
  RateCurve c;
  c.grid = grid;
  std::size_t bins = g.sum.size();
  c.values.assign(bins, 0.0);
  c.stderr_values.assign(bins, 0.0);
  if (g.n == 0) return c;
  double dt = grid.dt();
  double n = static_cast<double>(g.n);
  for (std::size_t i = 0; i < bins; ++i) {
    double s = static_cast<double>(g.sum[i]);
    c.values[i] = s / (n * dt);
    if (g.n > 1) {
      double ss = static_cast<double>(g.sum_sq[i]);
      double var = (ss - s * s / n) / (n - 1.0);
      if (var < 0.0) var = 0.0;
      c.stderr_values[i] = std::sqrt(var / n) / dt;
    }
  }
  return c;
}

}  // namespace collapsim::detail
