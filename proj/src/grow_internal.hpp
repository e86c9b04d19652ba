#pragma once

#include <cstdint>
#include <cstring>
#include <random>
#include <vector>

#include "cte/train.hpp"

namespace cte::growdetail {

// Monotone float -> uint32 map for radix sorting. Callers canonicalize
// negative zero before packing.
inline uint32_t flip_float(float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  return (u & 0x80000000u) ? ~u : (u | 0x80000000u);
}

void radix_sort_u64(std::vector<uint64_t>& keys, std::vector<uint64_t>& scratch);

// Deterministic cross-platform draws (plain modulo; our ranges are tiny).
inline uint64_t draw_u64(std::mt19937_64& rng, uint64_t n) {
  return rng() % n;
}
inline int draw_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
  return lo + int(draw_u64(rng, uint64_t(hi - lo + 1)));
}

uint32_t image_of_patch(const PatchWordCache& cache, int64_t k);

// Enumeration over cache patches: fn(k, image, px, py).
template <typename Fn>
void for_each_patch(const PatchWordCache& cache, Fn&& fn) {
  if (!cache.patches.empty()) {
    for (int64_t k = 0; k < int64_t(cache.patches.size()); ++k) {
      const PatchRef& p = cache.patches[size_t(k)];
      fn(k, p.image, int(p.px), int(p.py));
    }
    return;
  }
  const TrainSample& s = *cache.sample;
  int64_t k = 0;
  for (int64_t i = 0; i < s.image_count(); ++i)
    for (int y = s.area.y0; y < s.area.y1; ++y)
      for (int x = s.area.x0; x < s.area.x1; ++x) fn(k++, uint32_t(i), x, y);
}

// Population statistics of the conditioning cells.
struct CellStats {
  uint32_t cells = 0;
  std::vector<double> sum;     // cells x C
  std::vector<int64_t> count;  // cells
  std::vector<double> mean;    // cells x C, 0 for empty cells
};

CellStats build_cell_stats(const PatchWordCache& cache, const uint16_t* keys,
                           uint32_t cells, const GradientMatrix& g);

// R_delta of a 0/1 candidate bit against fixed conditioning keys/stats.
double score_centered(const PatchWordCache& cache, const uint16_t* keys,
                      const CellStats& stats, const uint8_t* bits,
                      const GradientMatrix& g);

void candidate_values(const PatchWordCache& cache, const BitFunction& fn,
                      std::vector<float>& out);
void candidate_bits(const PatchWordCache& cache, const BitFunction& fn,
                    std::vector<uint8_t>& out);

struct SweepResult {
  float threshold = 0.0f;
  double score = -1.0;  // -1 when all underlying values are identical
};

SweepResult threshold_sweep(const PatchWordCache& cache, const uint16_t* keys,
                            const CellStats& stats,
                            const std::vector<float>& values,
                            const GradientMatrix& g,
                            std::vector<uint64_t>& sort_buf,
                            std::vector<uint64_t>& sort_scratch);

// threshold_patch pre-draws the patch whose underlying value becomes the
// threshold when optimal thresholds are disabled.
struct Candidate {
  BitFunction fn;
  uint32_t threshold_patch = 0;
};

Candidate draw_general_candidate(std::mt19937_64& rng, const TrainSample& s,
                                 const GrowthConfig& config,
                                 int64_t patch_count);
Candidate draw_spatial_candidate(std::mt19937_64& rng, const TrainSample& s,
                                 int64_t patch_count);

// Shared growth machinery over global bit positions. Ferns use the slot
// range [0, K); a tree node restricts improvement sweeps to its own slots.
struct GrowEngine {
  const TrainSample& sample;
  const GradientMatrix& g;
  const GrowthConfig& config;
  PatchWordCache& cache;            // words mutated in place
  std::vector<BitFunction>& bits;   // bit list over global positions
  std::vector<uint8_t> enforced;    // per-position spatial-slot flag
  std::mt19937_64& rng;
  GrowthStats* stats;

  // Select and append the bit at position cache.prefix_bits.
  void forward_select_next();
  // Replacement (refine=false) or refinement sweeps over
  // positions [slot_begin, bits.size()).
  void improvement_sweeps(int slot_begin, int sweeps, bool refine);
  // Last-slot R_delta of the current calculator given all other bits.
  double full_score();
  // Apply a bit's values to the cached words at a slot.
  void write_slot(int slot, const std::vector<uint8_t>& values);

 private:
  double acceptance_score(int slot, const std::vector<uint8_t>& cand_bits);
  std::vector<uint8_t> extract_slot(int slot) const;
};

}  // namespace cte::growdetail
