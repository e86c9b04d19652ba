#include "cte/image.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cte {

const char* to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Original: return "original";
    case ChannelKind::GradientNorm: return "gradient-norm";
    case ChannelKind::GradientOriented: return "gradient-oriented";
    case ChannelKind::Integral: return "integral";
    case ChannelKind::SpatialHorizontal: return "spatial-horizontal";
    case ChannelKind::SpatialVertical: return "spatial-vertical";
  }
  return "unknown";
}

Channel Channel::make(int width, int height, ChannelKind kind) {
  Channel c;
  c.width = width;
  c.height = height;
  c.kind = kind;
  c.values.assign(size_t(width) * height, 0.0f);
  return c;
}

void RawImage::validate() const {
  if (width < 1 || height < 1 || depth < 1)
    throw std::invalid_argument("RawImage: all dimensions must be >= 1");
  if (data.size() != size_t(width) * height * depth)
    throw std::invalid_argument("RawImage: data length != width*height*depth");
}

RawImage RawImage::zeros(int width, int height, int depth) {
  RawImage img;
  img.width = width;
  img.height = height;
  img.depth = depth;
  img.data.assign(size_t(width) * height * depth, 0.0f);
  return img;
}

void PrepConfig::validate() const {
  if (smoothing_radius < 0)
    throw std::invalid_argument("PrepConfig: smoothing radius must be >= 0");
  if (gradient_channels && orientation_count < 1)
    throw std::invalid_argument(
        "PrepConfig: orientation count must be >= 1 when gradients enabled");
}

int PrepConfig::extended_depth(int input_depth) const {
  int real = input_depth;  // smoothed originals
  if (gradient_channels) real += 1 + orientation_count;
  int total = real;
  if (integral_channels) total += real;
  if (spatial_channels) total += 2;
  return total;
}

int spatial_bit_count(int extent) {
  if (extent < 2) throw std::invalid_argument("spatial_bit_count: extent < 2");
  int bits = 0;
  while ((1 << (bits + 1)) <= extent) ++bits;
  return bits;
}

namespace {

// Mirror index into [0, n) (reflect without repeating the edge pixel when
// possible; clamps degenerate n=1).
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

Channel smooth_channel(const Channel& in, int radius) {
  if (radius < 0) throw std::invalid_argument("smooth_channel: radius < 0");
  if (radius == 0) return in;

  const int w = in.width, h = in.height;
  const int taps = 2 * radius + 1;
  std::vector<double> kernel(size_t(taps), 0.0);
  double norm = double(radius + 1) * (radius + 1);
  for (int j = -radius; j <= radius; ++j)
    kernel[size_t(j + radius)] = double(radius + 1 - std::abs(j)) / norm;

  Channel tmp = Channel::make(w, h, in.kind);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += kernel[size_t(j + radius)] * in.at(reflect(x + j, w), y);
      tmp.at(x, y) = float(acc);
    }
  Channel out = Channel::make(w, h, in.kind);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j)
        acc += kernel[size_t(j + radius)] * tmp.at(x, reflect(y + j, h));
      out.at(x, y) = float(acc);
    }
  return out;
}

Channel integral_channel(const Channel& in) {
  const int w = in.width, h = in.height;
  Channel out = Channel::make(w, h, ChannelKind::Integral);
  // Row prefix sums, then column prefix sums.
  for (int y = 0; y < h; ++y) {
    float run = 0.0f;
    for (int x = 0; x < w; ++x) {
      run += in.at(x, y);
      out.at(x, y) = run;
    }
  }
  for (int x = 0; x < w; ++x) {
    float run = 0.0f;
    for (int y = 0; y < h; ++y) {
      run += out.at(x, y);
      out.at(x, y) = run;
    }
  }
  return out;
}

std::vector<Channel> gradient_channels(const Channel& in, int orientations) {
  if (orientations < 1)
    throw std::invalid_argument("gradient_channels: orientations < 1");
  const int w = in.width, h = in.height;
  if (w < 3 || h < 3)
    throw std::invalid_argument("gradient_channels: image smaller than 3x3");

  std::vector<Channel> out;
  out.reserve(size_t(orientations) + 1);
  out.push_back(Channel::make(w, h, ChannelKind::GradientNorm));
  for (int k = 0; k < orientations; ++k)
    out.push_back(Channel::make(w, h, ChannelKind::GradientOriented));

  const double bin_width = M_PI / orientations;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Central differences in the interior, one-sided at borders.
      double gx = (x == 0)       ? double(in.at(1, y)) - in.at(0, y)
                  : (x == w - 1) ? double(in.at(w - 1, y)) - in.at(w - 2, y)
                                 : 0.5 * (double(in.at(x + 1, y)) -
                                          in.at(x - 1, y));
      double gy = (y == 0)       ? double(in.at(x, 1)) - in.at(x, 0)
                  : (y == h - 1) ? double(in.at(x, h - 1)) - in.at(x, h - 2)
                                 : 0.5 * (double(in.at(x, y + 1)) -
                                          in.at(x, y - 1));
      double norm = std::hypot(gx, gy);
      if (norm == 0.0) continue;

      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += M_PI;
      if (theta >= M_PI) theta -= M_PI;
      double u = theta / bin_width;
      int k0 = int(u);
      if (k0 >= orientations) k0 = orientations - 1;
      int k1 = (k0 + 1) % orientations;
      double frac = u - k0;

      // Store the norm as the rounded sum of its two orientation shares so
      // the per-pixel energy split is exact in float32.
      float w1 = float(norm * frac);
      float w0 = float(norm * (1.0 - frac));
      out[size_t(1 + k0)].at(x, y) += w0;
      out[size_t(1 + k1)].at(x, y) += w1;
      float total = 0.0f;
      for (int k = 0; k < orientations; ++k) total += out[size_t(1 + k)].at(x, y);
      out[0].at(x, y) = total;
    }
  }
  return out;
}

std::pair<Channel, Channel> spatial_channels(int width, int height) {
  if (width < 2 || height < 2)
    throw std::invalid_argument("spatial_channels: width and height must be >= 2");
  const int nh = spatial_bit_count(width);
  const int nv = spatial_bit_count(height);

  Channel hor = Channel::make(width, height, ChannelKind::SpatialHorizontal);
  hor.bit_width = nh;
  Channel ver = Channel::make(width, height, ChannelKind::SpatialVertical);
  ver.bit_width = nv;

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      hor.at(x, y) = float((int64_t(x) << nh) / width);
      ver.at(x, y) = float((int64_t(y) << nv) / height);
    }
  return {std::move(hor), std::move(ver)};
}

ExtendedImage prepare_channels(const RawImage& image, const PrepConfig& config) {
  image.validate();
  config.validate();
  if (config.gradient_channels && (image.width < 3 || image.height < 3))
    throw std::invalid_argument(
        "prepare_channels: image must be at least 3x3 when gradients enabled");
  if (config.spatial_channels && (image.width < 2 || image.height < 2))
    throw std::invalid_argument(
        "prepare_channels: image must be at least 2x2 for spatial channels");

  ExtendedImage out;
  out.width = image.width;
  out.height = image.height;

  // Smoothed originals.
  for (int d = 0; d < image.depth; ++d) {
    Channel c = Channel::make(image.width, image.height, ChannelKind::Original);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) c.at(x, y) = image.at(x, y, d);
    out.channels.push_back(smooth_channel(c, config.smoothing_radius));
  }

  if (config.gradient_channels) {
    // Gradients of the mean of the smoothed originals.
    Channel mean = out.channels[0];
    if (image.depth > 1) {
      for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
          double acc = 0.0;
          for (int d = 0; d < image.depth; ++d) acc += out.channels[size_t(d)].at(x, y);
          mean.at(x, y) = float(acc / image.depth);
        }
    }
    for (auto& c : gradient_channels(mean, config.orientation_count))
      out.channels.push_back(std::move(c));
  }

  if (config.integral_channels) {
    const size_t real = out.channels.size();
    for (size_t d = 0; d < real; ++d)
      out.channels.push_back(integral_channel(out.channels[d]));
  }

  if (config.spatial_channels) {
    auto [hor, ver] = spatial_channels(image.width, image.height);
    out.channels.push_back(std::move(hor));
    out.channels.push_back(std::move(ver));
  }
  return out;
}

}  // namespace cte
