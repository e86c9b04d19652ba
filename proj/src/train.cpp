#include "cte/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "parallel.hpp"

namespace cte {

void TrainConfig::validate() const {
  if (tables < 1) throw std::invalid_argument("TrainConfig: tables must be >= 1");
  if (bits < 1 || bits > 16)
    throw std::invalid_argument("TrainConfig: bits must be in 1..16");
  if (patch_size < 1 || patch_size % 2 == 0)
    throw std::invalid_argument("TrainConfig: patch size must be odd and positive");
  if (tree) {
    int sum = 0;
    for (int k : tree_stage_bits) sum += k;
    if (tree_stage_bits.empty() || sum != bits)
      throw std::invalid_argument("TrainConfig: tree stage bits must sum to bits");
    if (tree_split_factors.size() + 1 != tree_stage_bits.size())
      throw std::invalid_argument(
          "TrainConfig: need one split factor per non-final stage");
  }
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("TrainConfig: validation fraction must be in [0,1)");
  if (!teacher_file.empty() && validation_fraction > 0.0)
    throw std::invalid_argument(
        "TrainConfig: teacher soft labels cannot be combined with a validation split");
  if (threads < 0) throw std::invalid_argument("TrainConfig: threads must be >= 0");
  prep.validate();
  growth.validate();
  loss.validate();
}

GradientMatrix init_gradients(const std::vector<int>& labels, int class_count) {
  if (class_count < 1)
    throw std::invalid_argument("init_gradients: class count must be >= 1");
  const int64_t n = int64_t(labels.size());
  std::vector<int64_t> positives(size_t(class_count), 0);
  for (int l : labels) {
    if (l < 1 || l > class_count)
      throw std::invalid_argument("init_gradients: label out of range");
    ++positives[size_t(l - 1)];
  }
  GradientMatrix g;
  g.rows = n;
  g.classes = class_count;
  g.values.assign(size_t(n) * class_count, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int c = 0; c < class_count; ++c) {
      if (labels[size_t(i)] == c + 1)
        g.at(i, c) = 1.0 / double(positives[size_t(c)]);
      else
        g.at(i, c) = -1.0 / double(n - positives[size_t(c)]);
    }
  return g;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<ExtendedImage> prepare_all(const std::vector<RawImage>& images,
                                       const PrepConfig& prep, int threads) {
  std::vector<ExtendedImage> out(images.size());
  detail::parallel_for(int64_t(images.size()), threads,
                       [&](int64_t begin, int64_t end) {
                         for (int64_t i = begin; i < end; ++i)
                           out[size_t(i)] =
                               prepare_channels(images[size_t(i)], prep);
                       });
  return out;
}

// Sparse histogram block of one calculator over a set of prepared images.
FeatureBlock histogram_block(const WordCalculator& calc,
                             const PixelRegion& area,
                             const std::vector<ExtendedImage>& images,
                             int threads) {
  const uint32_t cells = calc.cell_count();
  const int64_t n = int64_t(images.size());
  std::vector<std::vector<std::pair<uint16_t, uint16_t>>> rows;
  rows.resize(size_t(n));
  detail::parallel_for(n, threads, [&](int64_t begin, int64_t end) {
    std::vector<uint16_t> dense(cells, 0);
    std::vector<uint32_t> touched;
    for (int64_t i = begin; i < end; ++i) {
      touched.clear();
      const ExtendedImage& img = images[size_t(i)];
      for (int y = area.y0; y < area.y1; ++y)
        for (int x = area.x0; x < area.x1; ++x) {
          const uint32_t cell = calc.eval(img, x, y).cell;
          if (dense[cell]++ == 0) touched.push_back(cell);
        }
      std::sort(touched.begin(), touched.end());
      auto& row = rows[size_t(i)];
      row.reserve(touched.size());
      for (uint32_t cell : touched) {
        row.emplace_back(uint16_t(cell), dense[cell]);
        dense[cell] = 0;
      }
    }
  });

  FeatureBlock block;
  block.cells = cells;
  block.row_ptr.reserve(size_t(n) + 1);
  block.row_ptr.push_back(0);
  size_t nnz = 0;
  for (const auto& row : rows) nnz += row.size();
  block.words.reserve(nnz);
  block.counts.reserve(nnz);
  for (const auto& row : rows) {
    for (const auto& [w, c] : row) {
      block.words.push_back(w);
      block.counts.push_back(c);
    }
    block.row_ptr.push_back(block.words.size());
  }
  normalize_block(block);
  return block;
}

double error_rate(const std::vector<double>& scores,
                  const std::vector<int>& labels, int classes) {
  if (labels.empty()) return 0.0;
  int64_t wrong = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    const double* s = &scores[i * size_t(classes)];
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (s[c] > s[best]) best = c;
    if (best + 1 != labels[i]) ++wrong;
  }
  return double(wrong) / double(labels.size());
}

}  // namespace

TrainResult train_ensemble(const LabeledDataset& dataset,
                           const TrainConfig& config,
                           std::ostream* log_stream) {
  config.validate();
  dataset.validate();
  const int C = dataset.class_count;
  if (C < 2) throw std::invalid_argument("train_ensemble: need >= 2 classes");
  for (int64_t count : dataset.class_counts())
    if (count == 0)
      throw std::invalid_argument("train_ensemble: a class has no examples");

  const int threads = detail::resolve_threads(config.threads);
  const int w = dataset.images.front().width;
  const int h = dataset.images.front().height;
  const int d = dataset.images.front().depth;

  LabeledDataset train = dataset;
  LabeledDataset val;
  if (config.validation_fraction > 0.0) {
    auto parts = split(dataset, 1.0 - config.validation_fraction, config.seed);
    train = std::move(parts.first);
    val = std::move(parts.second);
  }

  TeacherSoftLabels teacher;
  const TeacherSoftLabels* teacher_ptr = nullptr;
  if (config.loss.kind == LossKind::SoftmaxDistill) {
    if (config.teacher_file.empty())
      throw std::invalid_argument("train_ensemble: distillation needs a teacher file");
    teacher = load_teacher(config.teacher_file);
    if (teacher.rows != train.size() || teacher.classes != C)
      throw std::invalid_argument("train_ensemble: teacher shape mismatch");
    teacher_ptr = &teacher;
  }

  const PixelRegion area = default_area(config.patch_size, w, h);
  TrainSample sample = make_sample(prepare_all(train.images, config.prep, threads),
                                   config.patch_size, area);
  std::vector<ExtendedImage> val_images =
      val.size() > 0 ? prepare_all(val.images, config.prep, threads)
                     : std::vector<ExtendedImage>{};

  GradientMatrix g = init_gradients(train.labels, C);
  FeatureMatrix H, Hval;
  H.rows = train.size();
  Hval.rows = val.size();

  TrainResult result;
  result.ensemble.width = w;
  result.ensemble.height = h;
  result.ensemble.depth = d;
  result.ensemble.class_count = C;
  result.ensemble.prep = config.prep;

  SolveResult sol;
  std::vector<GrowthStats> table_stats(size_t(config.tables), GrowthStats{});
  for (int m = 0; m < config.tables; ++m) {
    const auto t0 = std::chrono::steady_clock::now();
    GrowthConfig growth = config.growth;
    growth.seed = mix_seed(config.seed, uint64_t(m));
    growth.threads = threads;

    WordCalculator calc =
        config.tree
            ? WordCalculator(grow_tree(sample, g, config.tree_stage_bits,
                                       config.tree_split_factors, growth,
                                       &table_stats[size_t(m)]))
            : WordCalculator(grow_fern(sample, g, config.bits, growth,
                                       &table_stats[size_t(m)]));

    const double r_score = score_R(calc, sample, g);
    H.blocks.push_back(histogram_block(calc, area, sample.images, threads));
    if (val.size() > 0)
      Hval.blocks.push_back(histogram_block(calc, area, val_images, threads));

    ConvTable table;
    table.calculator = std::move(calc);
    table.area = area;
    table.spatial_bit_count =
        uint32_t(table_stats[size_t(m)].enforced_spatial_bits);
    result.ensemble.tables.push_back(std::move(table));

    sol = solve_loss(H, train.labels, C, config.loss,
                     m > 0 ? &sol : nullptr, threads, teacher_ptr);

    TableLogEntry entry;
    entry.table = m + 1;
    entry.r_score = r_score;
    entry.objective = sol.objective;
    entry.train_error =
        error_rate(compute_scores(H, sol, threads), train.labels, C);
    if (val.size() > 0)
      entry.val_error =
          error_rate(compute_scores(Hval, sol, threads), val.labels, C);
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.push_back(entry);
    if (log_stream) {
      (*log_stream) << "table " << entry.table << "/" << config.tables
                    << "  R=" << entry.r_score << "  loss=" << entry.objective
                    << "  train_err=" << entry.train_error;
      if (entry.val_error >= 0.0)
        (*log_stream) << "  val_err=" << entry.val_error;
      if (!sol.converged) (*log_stream) << "  [solver not converged]";
      (*log_stream) << "  " << entry.seconds << "s" << std::endl;
    }

    if (m + 1 < config.tables)
      g = loss_gradients(H, train.labels, sol, config.loss, teacher_ptr,
                         threads);
  }

  // Fold the column scales into the exported weights.
  uint64_t offset = 0;
  for (int m = 0; m < config.tables; ++m) {
    ConvTable& table = result.ensemble.tables[size_t(m)];
    const FeatureBlock& block = H.blocks[size_t(m)];
    table.weights.assign(size_t(block.cells) * C, 0.0f);
    for (uint32_t cell = 0; cell < block.cells; ++cell)
      for (int c = 0; c < C; ++c)
        table.weights[size_t(cell) * C + c] = float(
            sol.weight(c, offset + cell) / block.scale[cell]);
    offset += block.cells;
  }
  result.ensemble.biases.resize(size_t(C));
  for (int c = 0; c < C; ++c)
    result.ensemble.biases[size_t(c)] = float(sol.biases[size_t(c)]);
  result.ensemble.validate();
  return result;
}

}  // namespace cte
