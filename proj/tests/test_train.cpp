#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "cte/model_io.hpp"
#include "cte/train.hpp"
#include "support.hpp"

using namespace cte;

TEST_CASE("init_gradients") {
  SUBCASE("balanced two-class") {
    GradientMatrix g = init_gradients({1, 1, 2, 2}, 2);
    CHECK(g.at(0, 0) == 0.5);
    CHECK(g.at(1, 0) == 0.5);
    CHECK(g.at(2, 0) == -0.5);
    CHECK(g.at(3, 0) == -0.5);
    CHECK(g.at(0, 1) == -0.5);
    CHECK(g.at(2, 1) == 0.5);
  }
  SUBCASE("single populated class") {
    GradientMatrix g = init_gradients({2, 2, 2}, 2);
    for (int64_t i = 0; i < 3; ++i) {
      CHECK(g.at(i, 1) == doctest::Approx(1.0 / 3.0));
      CHECK(g.at(i, 0) == -1.0 / 3.0);  // every example is a class-1 negative
    }
  }
  SUBCASE("unbalanced 3-vs-1") {
    GradientMatrix g = init_gradients({1, 1, 1, 2}, 2);
    CHECK(g.at(0, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(g.at(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(g.at(2, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(g.at(3, 0) == -1.0);
  }
  SUBCASE("label out of range") {
    CHECK_THROWS(init_gradients({1, 3}, 2));
  }
}

namespace {

// Sample of random prepared images plus a small aggregation area.
TrainSample small_sample(uint64_t seed, int images, int w = 12, int h = 12,
                         int patch = 5) {
  std::mt19937_64 rng(seed);
  std::vector<ExtendedImage> ext;
  PrepConfig prep;
  for (int i = 0; i < images; ++i)
    ext.push_back(prepare_channels(test::random_image(rng, w, h, 1), prep));
  return make_sample(std::move(ext), patch, valid_area(patch, w, h));
}

}  // namespace

TEST_CASE("score_R matches the brute-force definition exactly") {
  std::mt19937_64 rng(71);
  SUBCASE("zero gradients score zero") {
    TrainSample s = small_sample(72, 3, 8, 8, 3);
    GradientMatrix g;
    g.rows = 3;
    g.classes = 2;
    g.values.assign(6, 0.0);
    ExtendedImage& probe = s.images[0];
    Fern fern = test::random_fern(rng, probe, 3, 3);
    CHECK(score_R(WordCalculator(fern), s, g) == 0.0);
  }

  SUBCASE("empty word: one cell accumulates everything") {
    // With init gradients and equal pixel counts per image the per-class
    // sums cancel by construction.
    TrainSample s = small_sample(73, 4, 8, 8, 3);
    GradientMatrix g = init_gradients({1, 1, 2, 2}, 2);
    Fern empty;
    empty.patch_size = 3;
    const double r = score_R(WordCalculator(empty), s, g);
    // Hand sum: each image contributes |A| * g_i^c to the only cell.
    const double a = double(s.area.size());
    double expect = 0.0;
    for (int c = 0; c < 2; ++c) {
      double cell = 0.0;
      for (int64_t i = 0; i < 4; ++i) cell += a * g.at(i, c);
      expect += std::abs(cell);
    }
    CHECK(r == expect);
    CHECK(r == 0.0);
  }

  SUBCASE("random calculators on tiny images equal brute force") {
    for (int trial = 0; trial < 8; ++trial) {
      TrainSample s = small_sample(100 + uint64_t(trial), 5, 8, 8, 3);
      GradientMatrix g = test::integer_gradients(rng, 5, 2 + int(rng() % 3));
      Fern fern = test::random_fern(rng, s.images[0], 1 + int(rng() % 4), 3);
      WordCalculator calc{fern};
      CHECK(score_R(calc, s, g) == test::brute_score_R(calc, s, g));
    }
  }
}

TEST_CASE("score_R_delta") {
  std::mt19937_64 rng(74);

  SUBCASE("constant candidates score exactly zero") {
    TrainSample s = small_sample(75, 4, 10, 10, 3);
    PatchWordCache cache = make_cache(s, {});
    test::assign_pow2_words(cache, 2);
    GradientMatrix g = test::integer_gradients(rng, 4, 3);
    BitFunction always1;
    always1.kind = BitKind::OnePixel;
    always1.channel = 0;
    always1.threshold = -100.0f;
    BitFunction always0 = always1;
    always0.threshold = +100.0f;
    CHECK(score_R_delta(cache, always1, g) == 0.0);
    CHECK(score_R_delta(cache, always0, g) == 0.0);
  }

  SUBCASE("equals the appendix-formula oracle exactly") {
    // 4 images x 8x8 valid area = 256 patches: every 2^l-cell split leaves
    // power-of-two populations, keeping both computations exact dyadic.
    for (int trial = 0; trial < 10; ++trial) {
      TrainSample s = small_sample(200 + uint64_t(trial), 4, 10, 10, 3);
      PatchWordCache cache = make_cache(s, {});
      test::assign_pow2_words(cache, int(rng() % 4));
      GradientMatrix g = test::integer_gradients(rng, 4, 2 + int(rng() % 3));
      BitFunction cand = test::random_bit(rng, s.images[0], 3);
      std::vector<uint8_t> bits(size_t(cache.patch_count()), 0);
      for (int64_t k = 0; k < cache.patch_count(); ++k) {
        PatchRef p = cache.patch(k);
        bits[size_t(k)] =
            uint8_t(eval_bit(cand, s.images[p.image], p.px, p.py));
      }
      CHECK(score_R_delta(cache, cand, g) ==
            test::brute_score_R_delta(cache, bits, g));
    }
  }

  SUBCASE("lemma property 2: both halves of a cell score alike") {
    for (int trial = 0; trial < 10; ++trial) {
      TrainSample s = small_sample(300 + uint64_t(trial), 4, 10, 10, 3);
      PatchWordCache cache = make_cache(s, {});
      test::assign_pow2_words(cache, 2);
      GradientMatrix g = test::integer_gradients(rng, 3, 2);
      BitFunction cand = test::random_bit(rng, s.images[0], 3);
      std::vector<uint8_t> bits(size_t(cache.patch_count()), 0);
      std::vector<uint8_t> flipped(size_t(cache.patch_count()), 0);
      for (int64_t k = 0; k < cache.patch_count(); ++k) {
        PatchRef p = cache.patch(k);
        bits[size_t(k)] = uint8_t(eval_bit(cand, s.images[p.image], p.px, p.py));
        flipped[size_t(k)] = uint8_t(1 - bits[size_t(k)]);
      }
      CHECK(test::brute_score_R_delta(cache, bits, g) ==
            doctest::Approx(test::brute_score_R_delta(cache, flipped, g))
                .epsilon(1e-12));
    }
  }
}

namespace {

// Exhaustive threshold-enumeration oracle over the 2d+1 effective
// thresholds (below min, at each value, between adjacent values).
double brute_best_threshold(const PatchWordCache& cache,
                            const std::vector<float>& values,
                            const GradientMatrix& g, double* best_score) {
  std::vector<float> distinct = values;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<float> thresholds;
  thresholds.push_back(distinct.front() - 1.0f);
  for (size_t i = 0; i < distinct.size(); ++i) {
    thresholds.push_back(distinct[i]);
    if (i + 1 < distinct.size())
      thresholds.push_back(float((double(distinct[i]) + distinct[i + 1]) / 2));
  }
  thresholds.push_back(distinct.back() + 1.0f);

  double best = -1.0;
  float best_t = 0.0f;
  std::vector<uint8_t> bits(values.size());
  for (float t : thresholds) {
    for (size_t k = 0; k < values.size(); ++k) bits[k] = values[k] >= t;
    const double s = test::brute_score_R_delta(cache, bits, g);
    if (s > best) {
      best = s;
      best_t = t;
    }
  }
  *best_score = best;
  return best_t;
}

}  // namespace

TEST_CASE("optimal_threshold") {
  SUBCASE("two patches with opposite gradients split at the midpoint") {
    test::MicroSample ms = test::micro_sample(2, 1, 1, {0.0f, 10.0f});
    PatchWordCache cache = make_cache(ms.sample, {});
    GradientMatrix g;
    g.rows = 2;
    g.classes = 1;
    g.values = {1.0, -1.0};
    BitFunction cand;
    cand.kind = BitKind::OnePixel;
    cand.channel = 0;
    ThresholdResult r = optimal_threshold(cache, cand, g);
    CHECK(r.threshold == 5.0f);
    // Centered split of a 2-patch cell: |(-1) - E| with E = 0.
    CHECK(r.score == 1.0);
  }

  SUBCASE("identical underlying values score zero") {
    test::MicroSample ms = test::micro_sample(3, 1, 1, {4.0f, 4.0f, 4.0f});
    PatchWordCache cache = make_cache(ms.sample, {});
    GradientMatrix g;
    g.rows = 3;
    g.classes = 2;
    g.values = {1, -1, 2, -2, 3, -3};
    BitFunction cand;
    cand.kind = BitKind::OnePixel;
    cand.channel = 0;
    ThresholdResult r = optimal_threshold(cache, cand, g);
    CHECK(r.score == 0.0);
  }

  SUBCASE("sweep equals exhaustive enumeration exactly") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
      // 64 patches over 4 images; duplicate-heavy values.
      std::vector<float> values(64);
      for (auto& v : values) v = float(int(rng() % 24)) / 4.0f;
      test::MicroSample ms = test::micro_sample(4, 4, 4, values);
      PatchWordCache cache = make_cache(ms.sample, {});
      test::assign_pow2_words(cache, int(rng() % 3));
      GradientMatrix g = test::integer_gradients(rng, 4, 2 + int(rng() % 3));
      BitFunction cand;
      cand.kind = BitKind::OnePixel;
      cand.channel = 0;

      ThresholdResult r = optimal_threshold(cache, cand, g);
      double brute_score = 0.0;
      brute_best_threshold(cache, values, g, &brute_score);
      CHECK(r.score == brute_score);
      // The returned threshold achieves the maximum.
      std::vector<uint8_t> bits(values.size());
      for (size_t k = 0; k < values.size(); ++k) bits[k] = values[k] >= r.threshold;
      CHECK(test::brute_score_R_delta(cache, bits, g) == brute_score);
    }
  }
}

TEST_CASE("grow_fern") {
  GrowthConfig cfg;
  cfg.candidate_count = 24;
  cfg.replacement_sweeps = 1;
  cfg.refinement_sweeps = 1;
  cfg.enforce_spatial_bits = false;
  cfg.seed = 5;

  SUBCASE("fixed seed reproduces the fern exactly") {
    TrainSample s = small_sample(80, 6);
    GradientMatrix g = init_gradients({1, 2, 1, 2, 1, 2}, 2);
    Fern a = grow_fern(s, g, 4, cfg);
    Fern b = grow_fern(s, g, 4, cfg);
    CHECK(a.bits == b.bits);
    GrowthConfig other = cfg;
    other.seed = 6;
    Fern c = grow_fern(s, g, 4, other);
    CHECK(a.bits != c.bits);  // different stream, different fern
  }

  SUBCASE("separable sample: the grown bit separates the classes") {
    LabeledDataset ds = test::separable_dataset(81, 40, 2, 12, 12);
    std::vector<ExtendedImage> ext;
    PrepConfig prep;
    prep.spatial_channels = false;
    for (const auto& img : ds.images) ext.push_back(prepare_channels(img, prep));
    TrainSample s = make_sample(std::move(ext), 5, valid_area(5, 12, 12));
    GradientMatrix g = init_gradients(ds.labels, 2);
    GrowthConfig strong = cfg;
    strong.candidate_count = 200;
    Fern fern = grow_fern(s, g, 1, strong);
    // Every class-2 image must emit a different histogram than class 1.
    // Check separation of summed words.
    std::vector<double> mean(2, 0.0);
    std::vector<int> count(2, 0);
    for (size_t i = 0; i < s.images.size(); ++i) {
      double total = 0.0;
      for (int y = s.area.y0; y < s.area.y1; ++y)
        for (int x = s.area.x0; x < s.area.x1; ++x)
          total += double(eval_fern(fern, s.images[i], x, y));
      mean[size_t(ds.labels[i] - 1)] += total;
      ++count[size_t(ds.labels[i] - 1)];
    }
    mean[0] /= count[0];
    mean[1] /= count[1];
    CHECK(std::abs(mean[0] - mean[1]) > 5.0);
  }

  SUBCASE("spatial enforcement puts exactly the drawn number of get-bits") {
    TrainSample s = small_sample(82, 6);
    GradientMatrix g = init_gradients({1, 2, 1, 2, 1, 2}, 2);
    GrowthConfig enf = cfg;
    enf.enforce_spatial_bits = true;
    enf.enforce_max = 5;
    for (uint64_t seed = 1; seed <= 4; ++seed) {
      enf.seed = seed;
      GrowthStats stats;
      Fern fern = grow_fern(s, g, 6, enf, &stats);
      int getbits = 0;
      for (const auto& b : fern.bits)
        if (b.kind == BitKind::GetBit) ++getbits;
      CHECK(stats.enforced_spatial_bits >= 1);
      CHECK(getbits == stats.enforced_spatial_bits);
    }
  }
}

TEST_CASE("replace_bits") {
  std::mt19937_64 rng(83);
  TrainSample s = small_sample(84, 6);
  GradientMatrix g = test::integer_gradients(rng, 6, 2);
  GrowthConfig cfg;
  cfg.candidate_count = 16;
  cfg.enforce_spatial_bits = false;
  cfg.seed = 9;
  Fern fern = grow_fern(s, g, 4, cfg);

  SUBCASE("zero sweeps is the identity") {
    Fern same = replace_bits(fern, s, g, 0, cfg);
    CHECK(same.bits == fern.bits);
  }

  SUBCASE("score is monotone under replacement") {
    GrowthStats before, after;
    Fern base = replace_bits(fern, s, g, 0, cfg, &before);
    Fern better = replace_bits(fern, s, g, 2, cfg, &after);
    CHECK(after.final_score >= before.final_score);
  }

  SUBCASE("a planted bad bit is recovered") {
    Fern bad = fern;
    bad.bits[0].kind = BitKind::OnePixel;
    bad.bits[0].channel = 0;
    bad.bits[0].threshold = 1000.0f;  // constant 0, contributes nothing
    GrowthStats sbad, srep;
    replace_bits(bad, s, g, 0, cfg, &sbad);
    Fern fixed = replace_bits(bad, s, g, 1, cfg, &srep);
    CHECK(srep.final_score > sbad.final_score);
    CHECK(srep.replacements_accepted >= 1);
  }
}

TEST_CASE("refine_bits") {
  std::mt19937_64 rng(85);
  TrainSample s = small_sample(86, 5);
  GradientMatrix g = test::integer_gradients(rng, 5, 2);
  GrowthConfig cfg;
  cfg.candidate_count = 8;
  cfg.enforce_spatial_bits = false;
  cfg.seed = 11;
  Fern fern = grow_fern(s, g, 3, cfg);
  // Pull offsets toward the interior so the 9-point grid stays in range.
  for (auto& b : fern.bits) {
    b.x1 = int8_t(std::clamp(int(b.x1), -1, 1));
    b.y1 = int8_t(std::clamp(int(b.y1), -1, 1));
    b.x2 = int8_t(std::clamp(int(b.x2), -1, 1));
    b.y2 = int8_t(std::clamp(int(b.y2), -1, 1));
    if (b.kind == BitKind::IntegralBit) {
      b.x1 = -1;
      b.x2 = 1;
      b.y1 = -1;
      b.y2 = 1;
    }
  }

  SUBCASE("zero sweeps is the identity") {
    CHECK(refine_bits(fern, s, g, 0, cfg).bits == fern.bits);
  }

  SUBCASE("the 9-neighbor grid is fully enumerated") {
    GrowthStats stats;
    refine_bits(fern, s, g, 1, cfg, &stats);
    CHECK(stats.refine_candidates == 9 * int64_t(fern.bits.size()));
  }

  SUBCASE("score is monotone under refinement") {
    GrowthStats before, after;
    refine_bits(fern, s, g, 0, cfg, &before);
    refine_bits(fern, s, g, 2, cfg, &after);
    CHECK(after.final_score >= before.final_score);
  }
}

TEST_CASE("train_ensemble end to end") {
  LabeledDataset ds = test::separable_dataset(87, 60, 2, 12, 12);
  TrainConfig cfg;
  cfg.tables = 1;
  cfg.bits = 3;
  cfg.patch_size = 5;
  cfg.growth.candidate_count = 48;
  cfg.growth.replacement_sweeps = 1;
  cfg.growth.refinement_sweeps = 0;
  cfg.growth.enforce_spatial_bits = false;  // tiny K; keep content bits
  cfg.loss.kind = LossKind::Softmax;
  cfg.loss.tolerance = 1e-6;
  cfg.seed = 3;
  cfg.threads = 1;

  SUBCASE("a single table separates the separable set") {
    TrainResult r = train_ensemble(ds, cfg);
    CHECK(r.log.back().train_error == 0.0);
    int wrong = 0;
    for (int64_t i = 0; i < ds.size(); ++i)
      if (classify(r.ensemble, ds.images[size_t(i)]) != ds.labels[size_t(i)])
        ++wrong;
    CHECK(wrong == 0);
  }

  SUBCASE("objective is non-increasing over tables") {
    TrainConfig cfg3 = cfg;
    cfg3.tables = 3;
    TrainResult r = train_ensemble(ds, cfg3);
    REQUIRE(r.log.size() == 3);
    for (size_t m = 1; m < r.log.size(); ++m)
      CHECK(r.log[m].objective <=
            r.log[m - 1].objective + 2 * cfg.loss.tolerance);
  }

  SUBCASE("training is deterministic and thread-count independent") {
    TrainConfig cfg2 = cfg;
    cfg2.tables = 2;
    cfg2.validation_fraction = 0.2;
    TrainResult a = train_ensemble(ds, cfg2);
    TrainResult b = train_ensemble(ds, cfg2);
    CHECK(serialize_model(a.ensemble) == serialize_model(b.ensemble));
    cfg2.threads = 2;
    TrainResult c = train_ensemble(ds, cfg2);
    CHECK(serialize_model(a.ensemble) == serialize_model(c.ensemble));
  }

  SUBCASE("validation split is reported") {
    TrainConfig cfgv = cfg;
    cfgv.validation_fraction = 0.25;
    TrainResult r = train_ensemble(ds, cfgv);
    CHECK(r.log.back().val_error >= 0.0);
  }

  SUBCASE("training log stream emits one line per table") {
    std::ostringstream log;
    TrainConfig cfg2 = cfg;
    cfg2.tables = 2;
    train_ensemble(ds, cfg2, &log);
    const std::string text = log.str();
    CHECK(text.find("table 1/2") != std::string::npos);
    CHECK(text.find("table 2/2") != std::string::npos);
    CHECK(text.find("R=") != std::string::npos);
    CHECK(text.find("train_err=") != std::string::npos);
  }

  SUBCASE("a class without examples is rejected") {
    LabeledDataset bad = ds;
    bad.class_count = 3;  // class 3 empty
    CHECK_THROWS(train_ensemble(bad, cfg));
  }
}
