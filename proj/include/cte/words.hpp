#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "cte/image.hpp"

namespace cte {

enum class BitKind : uint8_t {
  OnePixel = 0,     // step(P(x1,y1,d) - t)
  TwoPixel = 1,     // step(P(x1,y1,d) - P(x2,y2,d) - t)
  GetBit = 2,       // (int(P(0,0,d)) >> bit_index) & 1
  IntegralBit = 3,  // step of four-corner rectangle sum minus t
};

const char* to_string(BitKind kind);

// One bit-extraction primitive. Offsets are patch coordinates relative to
// the patch center. The step function is the Heaviside with H(0) = 1.
struct BitFunction {
  BitKind kind = BitKind::OnePixel;
  uint16_t channel = 0;
  int8_t x1 = 0, y1 = 0;
  int8_t x2 = 0, y2 = 0;  // TwoPixel / IntegralBit only
  float threshold = 0.0f;   // unused by GetBit
  uint8_t bit_index = 0;    // GetBit only

  bool thresholded() const { return kind != BitKind::GetBit; }
  bool operator==(const BitFunction&) const = default;
};

// Checked single-bit evaluation: validates channel compatibility and that
// every accessed pixel is inside the image.
int eval_bit(const BitFunction& f, const ExtendedImage& image, int px, int py);

// Unchecked fast path; the caller guarantees the patch is in bounds.
int eval_bit_unchecked(const BitFunction& f, const ExtendedImage& image,
                       int px, int py);

// Underlying scalar value of a thresholded bit function (bit = value >= t).
float bit_underlying_value(const BitFunction& f, const ExtendedImage& image,
                           int px, int py);

// A flat K-bit word calculator. Bit k of the output word is produced by
// bits[k] (first applied bit is least significant).
struct Fern {
  std::vector<BitFunction> bits;
  int patch_size = 9;

  int word_bits() const { return int(bits.size()); }
  uint32_t cell_count() const { return uint32_t(1) << bits.size(); }
  void validate() const;
};

uint32_t eval_fern(const Fern& fern, const ExtendedImage& image, int px,
                   int py);

// One node of a long tree: K_s bit functions plus, below the final stage,
// a child-directing table of 2^{K_s} next-stage node ids.
struct TreeNode {
  std::vector<BitFunction> bits;
  std::vector<uint32_t> children;  // indexed by the node-local word
};

// Staged word calculator. Stage s computes stage_bits[s] bits; the word
// computed at a node indexes its directing table to pick the next node.
struct LongTree {
  std::vector<int> stage_bits;              // K_s, sums to K
  std::vector<int> split_factors;           // q_s, one per non-final stage
  std::vector<std::vector<TreeNode>> stages;
  int patch_size = 9;

  int stage_count() const { return int(stage_bits.size()); }
  int word_bits() const;
  uint32_t leaf_count() const { return uint32_t(stages.back().size()); }
  // Weight cells: one block of 2^{K_last} per leaf.
  uint32_t cell_count() const {
    return leaf_count() << stage_bits.back();
  }
  void validate() const;
};

// Result of evaluating a calculator at a pixel: the emitted K-bit pattern
// and the weight-table cell. Two tree paths may emit the same word; cells
// are leaf-unique (cell = leaf index * 2^{K_last} + final-stage word).
// For ferns cell == word.
struct WordCell {
  uint32_t word = 0;
  uint32_t cell = 0;
};

WordCell eval_tree(const LongTree& tree, const ExtendedImage& image, int px,
                   int py);

struct WordCalculator {
  std::variant<Fern, LongTree> calc;

  WordCalculator() : calc(Fern{}) {}
  WordCalculator(Fern f) : calc(std::move(f)) {}
  WordCalculator(LongTree t) : calc(std::move(t)) {}

  bool is_fern() const { return std::holds_alternative<Fern>(calc); }
  const Fern& fern() const { return std::get<Fern>(calc); }
  const LongTree& tree() const { return std::get<LongTree>(calc); }

  int patch_size() const;
  int word_bits() const;
  uint32_t cell_count() const;
  WordCell eval(const ExtendedImage& image, int px, int py) const;
  void validate() const;
};

// Half-open pixel rectangle [x0,x1) x [y0,y1).
struct PixelRegion {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int64_t size() const { return int64_t(width()) * height(); }
  bool contains(const PixelRegion& inner) const {
    return inner.x0 >= x0 && inner.y0 >= y0 && inner.x1 <= x1 &&
           inner.y1 <= y1 && inner.width() >= 0 && inner.height() >= 0;
  }
  bool operator==(const PixelRegion&) const = default;
};

// Largest centered rectangle whose patches fit inside a width x height
// image. Throws if the image is smaller than the patch.
PixelRegion valid_area(int patch_size, int width, int height);
PixelRegion valid_area(const WordCalculator& calc, int width, int height);

// The default aggregation area: valid region shrunk by a 1-pixel margin.
PixelRegion default_area(int patch_size, int width, int height);

}  // namespace cte
