#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace cte {

// Channel kinds, in the order they may appear in a prepared image.
enum class ChannelKind : uint8_t {
  Original = 0,
  GradientNorm = 1,
  GradientOriented = 2,
  Integral = 3,
  SpatialHorizontal = 4,
  SpatialVertical = 5,
};

const char* to_string(ChannelKind kind);

// One image plane. bit_width is nonzero only for spatial channels, whose
// values are integer location codes readable bit by bit.
struct Channel {
  int width = 0;
  int height = 0;
  ChannelKind kind = ChannelKind::Original;
  int bit_width = 0;
  std::vector<float> values;  // row-major, y * width + x

  float at(int x, int y) const { return values[size_t(y) * width + x]; }
  float& at(int x, int y) { return values[size_t(y) * width + x]; }

  static Channel make(int width, int height,
                      ChannelKind kind = ChannelKind::Original);
};

// Raw input image: depth dense planes, channel-planar.
struct RawImage {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<float> data;  // plane d starts at d * width * height

  float at(int x, int y, int d) const {
    return data[(size_t(d) * height + y) * width + x];
  }
  float& at(int x, int y, int d) {
    return data[(size_t(d) * height + y) * width + x];
  }
  void validate() const;

  static RawImage zeros(int width, int height, int depth);
};

// Channel preparation settings.
struct PrepConfig {
  int orientation_count = 6;  // oriented-gradient maps
  int smoothing_radius = 1;   // triangle filter radius, 0 = off
  bool gradient_channels = true;
  bool integral_channels = true;
  bool spatial_channels = true;

  void validate() const;
  bool operator==(const PrepConfig&) const = default;

  // Number of channels prepare_channels emits for a depth-D input.
  int extended_depth(int input_depth) const;
};

// The prepared multi-channel image all bit functions read.
struct ExtendedImage {
  int width = 0;
  int height = 0;
  std::vector<Channel> channels;

  int depth() const { return int(channels.size()); }
  const Channel& channel(int d) const { return channels[size_t(d)]; }
};

// floor(log2 extent); number of location-code bits for an image axis.
int spatial_bit_count(int extent);

// Separable triangle-kernel smoothing with reflective borders. Radius 0 is
// the identity; the kernel is normalized so constants pass through.
Channel smooth_channel(const Channel& in, int radius);

// Row-then-column prefix sums: out(x,y) = sum of in over [0..x]x[0..y].
Channel integral_channel(const Channel& in);

// Gradient norm plus `orientations` soft-binned orientation maps over
// [0, pi). The per-pixel sum of the oriented maps equals the norm map
// exactly: the stored norm is the rounded sum of its two orientation
// shares, so the float32 split is lossless.
std::vector<Channel> gradient_channels(const Channel& in, int orientations);

// Quantized location codes: value at (x, y) is floor(x * 2^NH / width)
// for the horizontal channel (vertical symmetric). The top code bit
// splits the axis at its midpoint.
std::pair<Channel, Channel> spatial_channels(int width, int height);

// Full preparation pipeline. Channel order is fixed: smoothed originals,
// gradient norm, oriented gradients, integral copies of all preceding
// channels, spatial codes. Gradients are computed from the mean of the
// smoothed originals; spatial and integral channels are never smoothed.
ExtendedImage prepare_channels(const RawImage& image, const PrepConfig& config);

}  // namespace cte
