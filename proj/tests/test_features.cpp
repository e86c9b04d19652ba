#include <doctest.h>

#include <random>

#include "cte/features.hpp"

using namespace cte;

namespace {

FeatureMatrix from_dense(const std::vector<std::vector<uint32_t>>& rows,
                         uint32_t cells) {
  FeatureMatrix m;
  append_block(m, cells, rows);
  return m;
}

}  // namespace

TEST_CASE("column normalization") {
  SUBCASE("column (2,0,2) becomes (1,0,1)") {
    FeatureMatrix m = from_dense({{2}, {0}, {2}}, 1);
    CHECK(m.blocks[0].scale[0] == 2.0);
    CHECK(m.dense_row(0)[0] == 1.0);
    CHECK(m.dense_row(1)[0] == 0.0);
    CHECK(m.dense_row(2)[0] == 1.0);
  }

  SUBCASE("binary columns are unchanged") {
    FeatureMatrix m = from_dense({{1, 0}, {0, 1}, {1, 1}}, 2);
    CHECK(m.blocks[0].scale[0] == 1.0);
    CHECK(m.blocks[0].scale[1] == 1.0);
    CHECK(m.dense_row(0)[0] == 1.0);
  }

  SUBCASE("all-zero columns get scale 1") {
    FeatureMatrix m = from_dense({{0, 3}, {0, 5}}, 2);
    CHECK(m.blocks[0].scale[0] == 1.0);
    CHECK(m.blocks[0].scale[1] == 4.0);
  }

  SUBCASE("mean over nonzero entries is 1 after normalization") {
    std::mt19937_64 rng(51);
    std::vector<std::vector<uint32_t>> rows(40);
    for (auto& r : rows) {
      r.resize(16, 0);
      for (auto& v : r)
        if (rng() % 3 == 0) v = uint32_t(1 + rng() % 50);
    }
    FeatureMatrix m = from_dense(rows, 16);
    for (uint32_t col = 0; col < 16; ++col) {
      double sum = 0.0;
      int64_t active = 0;
      for (size_t i = 0; i < rows.size(); ++i) {
        const double v = m.dense_row(int64_t(i))[col];
        if (v != 0.0) {
          sum += v;
          ++active;
        }
      }
      if (active > 0) CHECK(sum / double(active) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("multi-block layout") {
  FeatureMatrix m = from_dense({{1, 2}, {3, 0}}, 2);
  append_block(m, 3, {{0, 5, 0}, {0, 0, 7}});
  CHECK(m.cols() == 5);
  CHECK(m.block_count() == 2);
  auto r0 = m.dense_row(0);
  REQUIRE(r0.size() == 5);
  CHECK(r0[3] == 1.0);  // 5 / 5
  CHECK(r0[4] == 0.0);
  auto r1 = m.dense_row(1);
  CHECK(r1[4] == 1.0);  // 7 / 7

  SUBCASE("row count mismatch is an error") {
    CHECK_THROWS(append_block(m, 2, {{1, 0}}));
  }
}
