#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cte/data.hpp"
#include "cte/ensemble.hpp"
#include "cte/losses.hpp"
#include "cte/words.hpp"

namespace cte {

// Candidate generation and table-growth knobs.
struct GrowthConfig {
  int candidate_count = 40;    // candidates per bit slot
  int replacement_sweeps = 2;
  int refinement_sweeps = 1;
  int split_candidates = 64;   // candidate pool per tree split
  bool optimal_thresholds = true;
  bool spatial_bits = true;            // allow spatial get-bit functions
  bool enforce_spatial_bits = true;    // draw a per-table enforced count
  int enforce_max = 5;                 // enforced count ~ uniform{1..max}
  uint64_t seed = 1;
  int threads = 1;  // worker threads; results are thread-count independent

  void validate() const;
};

// The prepared training images plus the fixed patch/area geometry and the
// channel pools candidates draw from.
struct TrainSample {
  std::vector<ExtendedImage> images;
  PixelRegion area;
  int patch_size = 9;
  std::vector<uint16_t> value_channels;     // one/two-pixel pool
  std::vector<uint16_t> integral_channels;  // integral-bit pool
  std::vector<uint16_t> spatial_channels;   // get-bit pool

  int64_t image_count() const { return int64_t(images.size()); }
  int64_t patches_per_image() const { return area.size(); }
  int64_t patch_count() const { return image_count() * patches_per_image(); }
};

TrainSample make_sample(std::vector<ExtendedImage> images, int patch_size,
                        const PixelRegion& area);

// Per-patch state for the calculator under construction: the word computed
// so far for every (image, pixel-in-area) patch. When `patches` is empty
// the cache covers the full image-major, row-major patch grid; otherwise
// it covers exactly the listed patches (tree nodes).
struct PatchRef {
  uint32_t image = 0;
  uint16_t px = 0, py = 0;
};

struct PatchWordCache {
  const TrainSample* sample = nullptr;
  int prefix_bits = 0;
  std::vector<uint16_t> words;     // one per patch
  std::vector<PatchRef> patches;   // empty = full grid

  int64_t patch_count() const {
    return patches.empty() ? sample->patch_count()
                           : int64_t(patches.size());
  }
  PatchRef patch(int64_t k) const;
};

// Cache with the prefix words of `bits` evaluated on every patch.
PatchWordCache make_cache(const TrainSample& sample,
                          std::span<const BitFunction> bits);

// R(B) = sum_c sum_cells | sum_{i,p in cell} g_i^c | over the sample area.
double score_R(const WordCalculator& calc, const TrainSample& sample,
               const GradientMatrix& g);

// Candidate-selection score: R of the mean-centered new features,
// R_delta([B,F]) = sum_c sum_b | sum_{word=b, F=1} (g_i^c - E[g^c|b]) |.
double score_R_delta(const PatchWordCache& cache, const BitFunction& candidate,
                     const GradientMatrix& g);

struct ThresholdResult {
  float threshold = 0.0f;
  double score = 0.0;
};

// Best threshold for a thresholded candidate by a single sorted sweep over
// the underlying values, maintaining running per-(cell, class) gradient
// sums. Returns score 0 and the lone value when all values are identical.
ThresholdResult optimal_threshold(const PatchWordCache& cache,
                                  const BitFunction& candidate,
                                  const GradientMatrix& g);

struct GrowthStats {
  int64_t candidates_evaluated = 0;
  int64_t refine_candidates = 0;
  int64_t replacements_accepted = 0;
  int64_t refinements_accepted = 0;
  double final_score = 0.0;  // last-slot R_delta of the grown calculator
  int enforced_spatial_bits = 0;
};

// Forward selection of K bits followed by replacement and refinement
// sweeps. Enforced spatial slots (pre-drawn positions) draw only spatial
// get-bit candidates; when enforcement is on the general pool excludes
// them.
Fern grow_fern(const TrainSample& sample, const GradientMatrix& g, int bits,
               const GrowthConfig& config, GrowthStats* stats = nullptr);

// Hill-climbing sweeps over bit positions; a swap is accepted only when it
// strictly improves the full-fern score (last-slot R_delta given all other
// bits). Refinement candidates are the 9 one-pixel offset shifts of the
// incumbent with the threshold re-optimized.
Fern replace_bits(const Fern& fern, const TrainSample& sample,
                  const GradientMatrix& g, int sweeps,
                  const GrowthConfig& config, GrowthStats* stats = nullptr);
Fern refine_bits(const Fern& fern, const TrainSample& sample,
                 const GradientMatrix& g, int sweeps,
                 const GrowthConfig& config, GrowthStats* stats = nullptr);

// Tree-split optimization: builds the score matrix S(z, j) = R restricted
// to node-local word z with candidate j appended, then picks q children by
// exhaustive pair search plus greedy augmentation. Unreferenced children
// are pruned. table[z] is the index into child_bits.
struct SplitResult {
  std::vector<BitFunction> child_bits;
  std::vector<uint32_t> table;  // 2^{node_bits} entries
  double score = 0.0;
};

SplitResult split_node(const PatchWordCache& node_cache, int node_bits,
                       std::span<const BitFunction> candidates,
                       const GradientMatrix& g, int q, int threads = 1);

// Staged growth of a long tree (stage K_s bit counts and split factors).
LongTree grow_tree(const TrainSample& sample, const GradientMatrix& g,
                   const std::vector<int>& stage_bits,
                   const std::vector<int>& split_factors,
                   const GrowthConfig& config, GrowthStats* stats = nullptr);

struct TrainConfig {
  int tables = 50;  // M
  int bits = 11;    // K
  bool tree = false;
  std::vector<int> tree_stage_bits;
  std::vector<int> tree_split_factors;
  int patch_size = 9;
  PrepConfig prep;
  GrowthConfig growth;
  LossConfig loss;
  std::string teacher_file;
  double validation_fraction = 0.0;
  int threads = 0;  // 0 = hardware concurrency
  uint64_t seed = 1;

  void validate() const;
};

struct TableLogEntry {
  int table = 0;
  double r_score = 0.0;
  double objective = 0.0;
  double train_error = 0.0;
  double val_error = -1.0;  // -1 when no validation split
  double seconds = 0.0;
};

struct TrainResult {
  Ensemble ensemble;
  std::vector<TableLogEntry> log;
};

// g_i^c = +1/#{y=c} for positives of class c, else -1/#{y!=c}.
GradientMatrix init_gradients(const std::vector<int>& labels, int class_count);

// The full training loop: grow a table against the current gradients,
// append its normalized histogram block, re-solve the global loss, refresh
// the gradients. Column scales are folded into the exported weights.
TrainResult train_ensemble(const LabeledDataset& dataset,
                           const TrainConfig& config,
                           std::ostream* log_stream = nullptr);

}  // namespace cte
