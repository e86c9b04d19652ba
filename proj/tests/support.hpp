#pragma once

// Shared fixture builders and independent oracles for the test suites.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cte/data.hpp"
#include "cte/ensemble.hpp"
#include "cte/image.hpp"
#include "cte/train.hpp"
#include "cte/words.hpp"

namespace cte::test {

inline RawImage random_image(std::mt19937_64& rng, int w, int h, int d) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  RawImage img = RawImage::zeros(w, h, d);
  for (auto& v : img.data) v = dist(rng);
  return img;
}

inline std::vector<RawImage> random_images(std::mt19937_64& rng, int n, int w,
                                           int h, int d) {
  std::vector<RawImage> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(random_image(rng, w, h, d));
  return out;
}

// A random bit function compatible with a prepared image's channel map.
inline BitFunction random_bit(std::mt19937_64& rng, const ExtendedImage& ext,
                              int patch_size) {
  const int r = patch_size / 2;
  std::vector<uint16_t> value_ch, integral_ch, spatial_ch;
  for (int d = 0; d < ext.depth(); ++d) {
    switch (ext.channel(d).kind) {
      case ChannelKind::Integral: integral_ch.push_back(uint16_t(d)); break;
      case ChannelKind::SpatialHorizontal:
      case ChannelKind::SpatialVertical: spatial_ch.push_back(uint16_t(d)); break;
      default: value_ch.push_back(uint16_t(d)); break;
    }
  }
  auto draw_off = [&] { return int8_t(int(rng() % (2 * r + 1)) - r); };
  std::uniform_real_distribution<float> th(-0.3f, 0.9f);
  for (;;) {
    switch (rng() % 4) {
      case 0: {
        BitFunction f;
        f.kind = BitKind::OnePixel;
        f.channel = value_ch[rng() % value_ch.size()];
        f.x1 = draw_off();
        f.y1 = draw_off();
        f.threshold = th(rng);
        return f;
      }
      case 1: {
        BitFunction f;
        f.kind = BitKind::TwoPixel;
        f.channel = value_ch[rng() % value_ch.size()];
        f.x1 = draw_off();
        f.y1 = draw_off();
        f.x2 = draw_off();
        f.y2 = draw_off();
        f.threshold = th(rng) * 0.2f;
        return f;
      }
      case 2: {
        if (integral_ch.empty()) continue;
        BitFunction f;
        f.kind = BitKind::IntegralBit;
        f.channel = integral_ch[rng() % integral_ch.size()];
        int a = draw_off(), b = a;
        while (b == a) b = draw_off();
        f.x1 = int8_t(std::min(a, b));
        f.x2 = int8_t(std::max(a, b));
        a = draw_off();
        b = a;
        while (b == a) b = draw_off();
        f.y1 = int8_t(std::min(a, b));
        f.y2 = int8_t(std::max(a, b));
        f.threshold = th(rng) * 20.0f;
        return f;
      }
      default: {
        if (spatial_ch.empty()) continue;
        BitFunction f;
        f.kind = BitKind::GetBit;
        f.channel = spatial_ch[rng() % spatial_ch.size()];
        const auto& ch = ext.channel(f.channel);
        f.bit_index = uint8_t(rng() % uint64_t(ch.bit_width));
        return f;
      }
    }
  }
}

inline Fern random_fern(std::mt19937_64& rng, const ExtendedImage& ext, int k,
                        int patch_size) {
  Fern fern;
  fern.patch_size = patch_size;
  for (int i = 0; i < k; ++i) fern.bits.push_back(random_bit(rng, ext, patch_size));
  return fern;
}

// A random ensemble with weights drawn from [-1, 1] (or small integers).
inline Ensemble random_ensemble(std::mt19937_64& rng, int w, int h, int d,
                                int classes, int tables, int bits,
                                int patch_size, bool integer_weights = false) {
  PrepConfig prep;
  Ensemble ens;
  ens.width = w;
  ens.height = h;
  ens.depth = d;
  ens.class_count = classes;
  ens.prep = prep;
  const ExtendedImage probe = prepare_channels(RawImage::zeros(w, h, d), prep);
  std::uniform_real_distribution<float> wd(-1.0f, 1.0f);
  for (int m = 0; m < tables; ++m) {
    ConvTable t;
    t.calculator = WordCalculator(random_fern(rng, probe, bits, patch_size));
    t.area = default_area(patch_size, w, h);
    t.weights.resize(size_t(t.cells()) * classes);
    for (auto& v : t.weights)
      v = integer_weights ? float(int(rng() % 17) - 8) : wd(rng);
    ens.tables.push_back(std::move(t));
  }
  ens.biases.resize(size_t(classes));
  for (auto& b : ens.biases)
    b = integer_weights ? float(int(rng() % 9) - 4) : wd(rng);
  return ens;
}

// --- training fixtures -----------------------------------------------------

// Small sample with directly controllable per-patch underlying values:
// patch size 1, one Original channel, patches = all pixels.
struct MicroSample {
  TrainSample sample;
  int64_t patches;
};

inline MicroSample micro_sample(int images, int w, int h,
                                const std::vector<float>& pixel_values) {
  std::vector<ExtendedImage> ext;
  ext.resize(size_t(images));
  int64_t v = 0;
  for (auto& e : ext) {
    e.width = w;
    e.height = h;
    Channel c = Channel::make(w, h, ChannelKind::Original);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) c.at(x, y) = pixel_values[size_t(v++)];
    e.channels.push_back(std::move(c));
  }
  MicroSample ms{make_sample(std::move(ext), 1, valid_area(1, w, h)),
                 int64_t(images) * w * h};
  return ms;
}

// Integer gradients in [-8, 8].
inline GradientMatrix integer_gradients(std::mt19937_64& rng, int64_t rows,
                                        int classes) {
  GradientMatrix g;
  g.rows = rows;
  g.classes = classes;
  g.values.resize(size_t(rows) * classes);
  for (auto& v : g.values) v = double(int(rng() % 17) - 8);
  return g;
}

// Assigns words so every prefix cell holds a power-of-two patch count
// (cells partition the patch list into equal blocks).
inline void assign_pow2_words(PatchWordCache& cache, int prefix_bits) {
  const int64_t p = cache.patch_count();
  const int64_t cells = int64_t(1) << prefix_bits;
  for (int64_t k = 0; k < p; ++k)
    cache.words[size_t(k)] = uint16_t(k % cells);
  cache.prefix_bits = prefix_bits;
}

// --- independent oracles ---------------------------------------------------

// R(B) by the quadratic definition loop.
inline double brute_score_R(const WordCalculator& calc,
                            const TrainSample& sample,
                            const GradientMatrix& g) {
  const uint32_t cells = calc.cell_count();
  double total = 0.0;
  for (int c = 0; c < g.classes; ++c)
    for (uint32_t cell = 0; cell < cells; ++cell) {
      double s = 0.0;
      for (int64_t i = 0; i < sample.image_count(); ++i)
        for (int y = sample.area.y0; y < sample.area.y1; ++y)
          for (int x = sample.area.x0; x < sample.area.x1; ++x)
            if (calc.eval(sample.images[size_t(i)], x, y).cell == cell)
              s += g.at(i, c);
      total += std::abs(s);
    }
  return total;
}

// R_delta by the appendix formula: explicit mean-centered new features
// delta-bar = delta^(b,1) - (#delta^(b,1)/#delta^b) delta^b.
inline double brute_score_R_delta(const PatchWordCache& cache,
                                  const std::vector<uint8_t>& bits,
                                  const GradientMatrix& g) {
  const int64_t p = cache.patch_count();
  const int C = g.classes;
  const uint32_t cells = uint32_t(1) << cache.prefix_bits;
  double total = 0.0;
  for (uint32_t b = 0; b < cells; ++b) {
    int64_t n_b = 0, n_b1 = 0;
    for (int64_t k = 0; k < p; ++k)
      if (cache.words[size_t(k)] == b) {
        ++n_b;
        if (bits[size_t(k)]) ++n_b1;
      }
    if (n_b == 0) continue;
    const double beta = double(n_b1) / double(n_b);
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t k = 0; k < p; ++k) {
        if (cache.words[size_t(k)] != b) continue;
        const double gv = g.at(cache.patch(k).image, c);
        const double dbar = (bits[size_t(k)] ? 1.0 : 0.0) - beta;
        s += gv * dbar;
      }
      total += std::abs(s);
    }
  }
  return total;
}

// Synthetic separable dataset: class 1 keeps the background, class c > 1
// brightens a class-specific block. Deterministic given the seed.
inline LabeledDataset separable_dataset(uint64_t seed, int n, int classes,
                                        int w, int h) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> noise(-0.02f, 0.02f);
  LabeledDataset ds;
  ds.class_count = classes;
  ds.provenance = "synthetic";
  for (int i = 0; i < n; ++i) {
    const int label = i % classes + 1;
    RawImage img = RawImage::zeros(w, h, 1);
    for (auto& v : img.data) v = 0.4f + noise(rng);
    if (label > 1) {
      const int bx = (label - 1) * w / classes;
      for (int y = h / 3; y < 2 * h / 3; ++y)
        for (int x = bx; x < std::min(w, bx + w / classes); ++x)
          img.at(x, y, 0) = 0.95f + noise(rng);
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace cte::test
