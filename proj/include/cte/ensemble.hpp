#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cte/image.hpp"
#include "cte/words.hpp"

namespace cte {

// A convolutional table: word calculator, aggregation area, and a weight
// matrix with one row of C class weights per cell. Weights are stored
// cell-major (weights[cell * C + c]) so one word lookup reads all class
// weights contiguously.
struct ConvTable {
  WordCalculator calculator;
  PixelRegion area;
  std::vector<float> weights;
  uint32_t spatial_bit_count = 0;  // enforcement bookkeeping

  uint32_t cells() const { return calculator.cell_count(); }
  void validate(int class_count, int width, int height) const;
};

struct Ensemble {
  int width = 0;
  int height = 0;
  int depth = 0;  // raw input depth
  int class_count = 0;
  PrepConfig prep;
  std::vector<ConvTable> tables;
  std::vector<float> biases;  // length class_count

  int table_count() const { return int(tables.size()); }
  void validate() const;
};

struct WordHistogram {
  std::vector<uint32_t> counts;
};

// Eq. word-count histogram of one table over its aggregation area.
WordHistogram table_histogram(const ConvTable& table,
                              const ExtendedImage& image);

// score[c] = sum_m W^m_c . H^m - T^c, computed by direct per-word voting.
std::vector<float> class_scores(const Ensemble& ens, const RawImage& image);
std::vector<float> class_scores_prepared(const Ensemble& ens,
                                         const ExtendedImage& image);

// Scalar per-pixel reference path; the fast path must match it bit for bit.
std::vector<float> class_scores_reference(const Ensemble& ens,
                                          const ExtendedImage& image);

// 1-based class label; ties break toward the smallest class index.
int classify(const Ensemble& ens, const RawImage& image);
int classify_prepared(const Ensemble& ens, const ExtendedImage& image);

struct LatencyStats {
  double median_us = 0.0;
  double p95_us = 0.0;
};

struct BatchTiming {
  std::vector<int> labels;
  LatencyStats total;  // prepare + vote
  LatencyStats prep;   // channel preparation alone
  LatencyStats vote;   // table voting alone
};

// Single-thread per-image wall-clock timing. Each image is classified
// `reps` times after one untimed warm-up; its latency is the mean over
// reps. Statistics are nearest-rank over images.
BatchTiming classify_batch_timed(const Ensemble& ens,
                                 const std::vector<RawImage>& images,
                                 int reps = 1);

}  // namespace cte
