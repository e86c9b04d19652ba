#include "cte/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace cte {

void ConvTable::validate(int class_count, int width, int height) const {
  calculator.validate();
  PixelRegion valid = valid_area(calculator, width, height);
  if (!valid.contains(area) || area.width() < 1 || area.height() < 1)
    throw std::invalid_argument("ConvTable: area outside valid region");
  if (weights.size() != size_t(cells()) * class_count)
    throw std::invalid_argument("ConvTable: weight matrix size mismatch");
}

void Ensemble::validate() const {
  if (class_count < 1)
    throw std::invalid_argument("Ensemble: class count must be >= 1");
  if (biases.size() != size_t(class_count))
    throw std::invalid_argument("Ensemble: bias count != class count");
  prep.validate();
  for (const auto& t : tables) t.validate(class_count, width, height);
}

WordHistogram table_histogram(const ConvTable& table,
                              const ExtendedImage& image) {
  PixelRegion valid = valid_area(table.calculator, image.width, image.height);
  if (!valid.contains(table.area))
    throw std::invalid_argument("table_histogram: area exceeds valid region");
  WordHistogram h;
  h.counts.assign(table.cells(), 0u);
  for (int y = table.area.y0; y < table.area.y1; ++y)
    for (int x = table.area.x0; x < table.area.x1; ++x)
      ++h.counts[table.calculator.eval(image, x, y).cell];
  return h;
}

namespace {

// Word computation for a run of up to 8 contiguous pixels of one row. The
// per-bit inner loops read contiguous memory, which is what lets the
// compiler vectorize them; voting afterwards walks pixels in the same
// order as the scalar reference so the float accumulation is identical.
inline void fern_words_run(const Fern& fern, const ExtendedImage& image,
                           int x, int y, int n, uint32_t* words) {
  for (int j = 0; j < n; ++j) words[j] = 0;
  for (size_t k = 0; k < fern.bits.size(); ++k) {
    const BitFunction& f = fern.bits[k];
    const Channel& ch = image.channels[f.channel];
    switch (f.kind) {
      case BitKind::OnePixel: {
        const float* a = &ch.values[size_t(y + f.y1) * ch.width + x + f.x1];
        const float t = f.threshold;
        for (int j = 0; j < n; ++j)
          words[j] |= uint32_t(a[j] >= t) << k;
        break;
      }
      case BitKind::TwoPixel: {
        const float* a = &ch.values[size_t(y + f.y1) * ch.width + x + f.x1];
        const float* b = &ch.values[size_t(y + f.y2) * ch.width + x + f.x2];
        const float t = f.threshold;
        for (int j = 0; j < n; ++j)
          words[j] |= uint32_t((a[j] - b[j]) >= t) << k;
        break;
      }
      case BitKind::GetBit: {
        const float* a = &ch.values[size_t(y) * ch.width + x];
        const uint32_t l = f.bit_index;
        for (int j = 0; j < n; ++j)
          words[j] |= ((uint32_t(int32_t(a[j])) >> l) & 1u) << k;
        break;
      }
      case BitKind::IntegralBit: {
        const float* a = &ch.values[size_t(y + f.y1) * ch.width + x + f.x1];
        const float* b = &ch.values[size_t(y + f.y2) * ch.width + x + f.x1];
        const float* c = &ch.values[size_t(y + f.y1) * ch.width + x + f.x2];
        const float* d = &ch.values[size_t(y + f.y2) * ch.width + x + f.x2];
        const float t = f.threshold;
        for (int j = 0; j < n; ++j)
          words[j] |= uint32_t((((a[j] - b[j]) - c[j]) + d[j]) >= t) << k;
        break;
      }
    }
  }
}

void vote_table_fast(const ConvTable& table, const ExtendedImage& image,
                     float* scores, int C) {
  if (table.calculator.is_fern()) {
    const Fern& fern = table.calculator.fern();
    uint32_t words[8];
    for (int y = table.area.y0; y < table.area.y1; ++y) {
      int x = table.area.x0;
      while (x < table.area.x1) {
        const int n = std::min(8, table.area.x1 - x);
        fern_words_run(fern, image, x, y, n, words);
        for (int j = 0; j < n; ++j) {
          const float* row = &table.weights[size_t(words[j]) * C];
          for (int c = 0; c < C; ++c) scores[c] += row[c];
        }
        x += n;
      }
    }
  } else {
    const LongTree& tree = table.calculator.tree();
    for (int y = table.area.y0; y < table.area.y1; ++y)
      for (int x = table.area.x0; x < table.area.x1; ++x) {
        uint32_t cell = eval_tree(tree, image, x, y).cell;
        const float* row = &table.weights[size_t(cell) * C];
        for (int c = 0; c < C; ++c) scores[c] += row[c];
      }
  }
}

}  // namespace

std::vector<float> class_scores_prepared(const Ensemble& ens,
                                         const ExtendedImage& image) {
  const int C = ens.class_count;
  std::vector<float> scores(size_t(C), 0.0f);
  for (int c = 0; c < C; ++c) scores[c] = -ens.biases[size_t(c)];
  for (const auto& table : ens.tables)
    vote_table_fast(table, image, scores.data(), C);
  return scores;
}

std::vector<float> class_scores_reference(const Ensemble& ens,
                                          const ExtendedImage& image) {
  const int C = ens.class_count;
  std::vector<float> scores(size_t(C), 0.0f);
  for (int c = 0; c < C; ++c) scores[c] = -ens.biases[size_t(c)];
  for (const auto& table : ens.tables) {
    for (int y = table.area.y0; y < table.area.y1; ++y)
      for (int x = table.area.x0; x < table.area.x1; ++x) {
        uint32_t cell = table.calculator.eval(image, x, y).cell;
        const float* row = &table.weights[size_t(cell) * C];
        for (int c = 0; c < C; ++c) scores[size_t(c)] += row[c];
      }
  }
  return scores;
}

std::vector<float> class_scores(const Ensemble& ens, const RawImage& image) {
  if (image.width != ens.width || image.height != ens.height ||
      image.depth != ens.depth)
    throw std::invalid_argument("class_scores: image dims do not match model");
  return class_scores_prepared(ens, prepare_channels(image, ens.prep));
}

namespace {

inline int argmax_label(const std::vector<float>& scores) {
  int best = 0;
  for (int c = 1; c < int(scores.size()); ++c)
    if (scores[size_t(c)] > scores[size_t(best)]) best = c;
  return best + 1;  // 1-based; ties keep the smallest index
}

}  // namespace

int classify_prepared(const Ensemble& ens, const ExtendedImage& image) {
  return argmax_label(class_scores_prepared(ens, image));
}

int classify(const Ensemble& ens, const RawImage& image) {
  return argmax_label(class_scores(ens, image));
}

namespace {

LatencyStats stats_of(std::vector<double> v) {
  LatencyStats s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  s.median_us = v[(n - 1) / 2];
  s.p95_us = v[size_t((n - 1) * 95 / 100)];
  return s;
}

}  // namespace

BatchTiming classify_batch_timed(const Ensemble& ens,
                                 const std::vector<RawImage>& images,
                                 int reps) {
  using clock = std::chrono::steady_clock;
  if (reps < 1) reps = 1;
  BatchTiming out;
  out.labels.reserve(images.size());
  std::vector<double> prep_us, vote_us, total_us;
  prep_us.reserve(images.size());
  vote_us.reserve(images.size());
  total_us.reserve(images.size());

  for (const auto& img : images) {
    // Untimed warm-up.
    ExtendedImage ext = prepare_channels(img, ens.prep);
    std::vector<float> scores = class_scores_prepared(ens, ext);

    auto t0 = clock::now();
    for (int r = 0; r < reps; ++r) ext = prepare_channels(img, ens.prep);
    auto t1 = clock::now();
    for (int r = 0; r < reps; ++r) scores = class_scores_prepared(ens, ext);
    auto t2 = clock::now();

    double p = std::chrono::duration<double, std::micro>(t1 - t0).count() / reps;
    double v = std::chrono::duration<double, std::micro>(t2 - t1).count() / reps;
    prep_us.push_back(p);
    vote_us.push_back(v);
    total_us.push_back(p + v);
    out.labels.push_back(argmax_label(scores));
  }
  out.prep = stats_of(std::move(prep_us));
  out.vote = stats_of(std::move(vote_us));
  out.total = stats_of(std::move(total_us));
  return out;
}

}  // namespace cte
