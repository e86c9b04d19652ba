#include "cte/words.hpp"

#include <stdexcept>
#include <string>

namespace cte {

const char* to_string(BitKind kind) {
  switch (kind) {
    case BitKind::OnePixel: return "one-pixel";
    case BitKind::TwoPixel: return "two-pixel";
    case BitKind::GetBit: return "get-bit";
    case BitKind::IntegralBit: return "integral-bit";
  }
  return "unknown";
}

namespace {

inline void check_pixel(const ExtendedImage& img, int x, int y) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height)
    throw std::out_of_range("eval_bit: patch pixel outside image");
}

}  // namespace

int eval_bit_unchecked(const BitFunction& f, const ExtendedImage& image,
                       int px, int py) {
  const Channel& ch = image.channel(f.channel);
  switch (f.kind) {
    case BitKind::OnePixel:
      return ch.at(px + f.x1, py + f.y1) >= f.threshold;
    case BitKind::TwoPixel:
      return (ch.at(px + f.x1, py + f.y1) - ch.at(px + f.x2, py + f.y2)) >=
             f.threshold;
    case BitKind::GetBit:
      return (uint32_t(int32_t(ch.at(px, py))) >> f.bit_index) & 1u;
    case BitKind::IntegralBit: {
      float v = ((ch.at(px + f.x1, py + f.y1) - ch.at(px + f.x1, py + f.y2)) -
                 ch.at(px + f.x2, py + f.y1)) +
                ch.at(px + f.x2, py + f.y2);
      return v >= f.threshold;
    }
  }
  return 0;
}

int eval_bit(const BitFunction& f, const ExtendedImage& image, int px, int py) {
  if (f.channel >= image.depth())
    throw std::out_of_range("eval_bit: channel index out of range");
  const Channel& ch = image.channel(f.channel);
  switch (f.kind) {
    case BitKind::OnePixel:
      check_pixel(image, px + f.x1, py + f.y1);
      break;
    case BitKind::TwoPixel:
      check_pixel(image, px + f.x1, py + f.y1);
      check_pixel(image, px + f.x2, py + f.y2);
      break;
    case BitKind::GetBit:
      if (ch.bit_width == 0)
        throw std::invalid_argument("eval_bit: get-bit needs a bit-coded channel");
      if (f.bit_index >= ch.bit_width)
        throw std::invalid_argument("eval_bit: bit index out of channel width");
      check_pixel(image, px, py);
      break;
    case BitKind::IntegralBit:
      if (ch.kind != ChannelKind::Integral)
        throw std::invalid_argument("eval_bit: integral bit needs an integral channel");
      if (!(f.x1 < f.x2 && f.y1 < f.y2))
        throw std::invalid_argument("eval_bit: integral bit needs x1<x2 and y1<y2");
      check_pixel(image, px + f.x1, py + f.y1);
      check_pixel(image, px + f.x2, py + f.y2);
      break;
  }
  return eval_bit_unchecked(f, image, px, py);
}

float bit_underlying_value(const BitFunction& f, const ExtendedImage& image,
                           int px, int py) {
  const Channel& ch = image.channel(f.channel);
  switch (f.kind) {
    case BitKind::OnePixel:
      return ch.at(px + f.x1, py + f.y1);
    case BitKind::TwoPixel:
      return ch.at(px + f.x1, py + f.y1) - ch.at(px + f.x2, py + f.y2);
    case BitKind::IntegralBit:
      return ((ch.at(px + f.x1, py + f.y1) - ch.at(px + f.x1, py + f.y2)) -
              ch.at(px + f.x2, py + f.y1)) +
             ch.at(px + f.x2, py + f.y2);
    case BitKind::GetBit:
      throw std::invalid_argument("bit_underlying_value: get-bit has no threshold");
  }
  return 0.0f;
}

void Fern::validate() const {
  if (bits.empty() || bits.size() > 16)
    throw std::invalid_argument("Fern: bit count must be in 1..16");
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("Fern: patch size must be odd and positive");
  const int r = patch_size / 2;
  for (const auto& b : bits) {
    if (std::abs(int(b.x1)) > r || std::abs(int(b.y1)) > r ||
        std::abs(int(b.x2)) > r || std::abs(int(b.y2)) > r)
      throw std::invalid_argument("Fern: bit offsets outside patch");
  }
}

uint32_t eval_fern(const Fern& fern, const ExtendedImage& image, int px,
                   int py) {
  uint32_t word = 0;
  for (size_t k = 0; k < fern.bits.size(); ++k)
    word |= uint32_t(eval_bit_unchecked(fern.bits[k], image, px, py)) << k;
  return word;
}

int LongTree::word_bits() const {
  int total = 0;
  for (int k : stage_bits) total += k;
  return total;
}

void LongTree::validate() const {
  if (stage_bits.empty())
    throw std::invalid_argument("LongTree: no stages");
  if (split_factors.size() + 1 != stage_bits.size())
    throw std::invalid_argument("LongTree: need one split factor per non-final stage");
  if (stages.size() != stage_bits.size())
    throw std::invalid_argument("LongTree: stage list size mismatch");
  int total = word_bits();
  if (total < 1 || total > 16)
    throw std::invalid_argument("LongTree: total bits must be in 1..16");
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("LongTree: patch size must be odd and positive");
  for (size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].empty())
      throw std::invalid_argument("LongTree: empty stage");
    const bool last = s + 1 == stages.size();
    for (const auto& node : stages[s]) {
      if (int(node.bits.size()) != stage_bits[s])
        throw std::invalid_argument("LongTree: node bit count != stage size");
      if (last) {
        if (!node.children.empty())
          throw std::invalid_argument("LongTree: leaf with children");
      } else {
        if (node.children.size() != size_t(1) << stage_bits[s])
          throw std::invalid_argument("LongTree: directing table size != 2^{K_s}");
        for (uint32_t c : node.children)
          if (c >= stages[s + 1].size())
            throw std::invalid_argument("LongTree: directing entry addresses no child");
      }
    }
  }
}

WordCell eval_tree(const LongTree& tree, const ExtendedImage& image, int px,
                   int py) {
  uint32_t word = 0;
  int shift = 0;
  uint32_t node = 0;
  const int stages = tree.stage_count();
  for (int s = 0; s < stages; ++s) {
    const TreeNode& n = tree.stages[size_t(s)][node];
    uint32_t local = 0;
    for (size_t k = 0; k < n.bits.size(); ++k)
      local |= uint32_t(eval_bit_unchecked(n.bits[k], image, px, py)) << k;
    word |= local << shift;
    shift += tree.stage_bits[size_t(s)];
    if (s + 1 < stages)
      node = n.children[local];
    else
      return {word, (node << tree.stage_bits[size_t(s)]) | local};
  }
  return {word, word};  // unreachable for valid trees
}

int WordCalculator::patch_size() const {
  return is_fern() ? fern().patch_size : tree().patch_size;
}

int WordCalculator::word_bits() const {
  return is_fern() ? fern().word_bits() : tree().word_bits();
}

uint32_t WordCalculator::cell_count() const {
  return is_fern() ? fern().cell_count() : tree().cell_count();
}

WordCell WordCalculator::eval(const ExtendedImage& image, int px, int py) const {
  if (is_fern()) {
    uint32_t w = eval_fern(fern(), image, px, py);
    return {w, w};
  }
  return eval_tree(tree(), image, px, py);
}

void WordCalculator::validate() const {
  if (is_fern())
    fern().validate();
  else
    tree().validate();
}

PixelRegion valid_area(int patch_size, int width, int height) {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("valid_area: patch size must be odd and positive");
  if (width < patch_size || height < patch_size)
    throw std::invalid_argument("valid_area: image smaller than patch");
  const int r = patch_size / 2;
  return {r, r, width - r, height - r};
}

PixelRegion valid_area(const WordCalculator& calc, int width, int height) {
  return valid_area(calc.patch_size(), width, height);
}

PixelRegion default_area(int patch_size, int width, int height) {
  PixelRegion v = valid_area(patch_size, width, height);
  PixelRegion a{v.x0 + 1, v.y0 + 1, v.x1 - 1, v.y1 - 1};
  if (a.width() < 1 || a.height() < 1) return v;
  return a;
}

}  // namespace cte
