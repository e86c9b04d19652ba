#include <doctest.h>

#include <cstdio>
#include <stdexcept>
#include <random>

#include "cte/model_io.hpp"
#include "support.hpp"

using namespace cte;

TEST_CASE("crc32 known vector") {
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
}

TEST_CASE("model round trip preserves scores exactly") {
  std::mt19937_64 rng(41);
  Ensemble ens = test::random_ensemble(rng, 20, 20, 1, 4, 3, 6, 9);
  auto bytes = serialize_model(ens);
  Ensemble back = deserialize_model(bytes);
  REQUIRE(back.table_count() == ens.table_count());
  CHECK(back.prep == ens.prep);
  for (int i = 0; i < 50; ++i) {
    RawImage img = test::random_image(rng, 20, 20, 1);
    CHECK(class_scores(ens, img) == class_scores(back, img));
  }
}

TEST_CASE("tree models round trip") {
  std::mt19937_64 rng(42);
  ExtendedImage probe = prepare_channels(RawImage::zeros(20, 20, 1), PrepConfig{});
  LongTree tree;
  tree.patch_size = 5;
  tree.stage_bits = {1, 2};
  tree.split_factors = {2};
  tree.stages.resize(2);
  TreeNode root;
  root.bits.push_back(test::random_bit(rng, probe, 5));
  root.children = {0, 1};
  tree.stages[0].push_back(root);
  for (int c = 0; c < 2; ++c) {
    TreeNode child;
    child.bits.push_back(test::random_bit(rng, probe, 5));
    child.bits.push_back(test::random_bit(rng, probe, 5));
    tree.stages[1].push_back(child);
  }
  Ensemble ens;
  ens.width = ens.height = 20;
  ens.depth = 1;
  ens.class_count = 2;
  ConvTable t;
  t.calculator = WordCalculator(tree);
  t.area = default_area(5, 20, 20);
  t.weights.assign(size_t(t.cells()) * 2, 0.25f);
  t.spatial_bit_count = 1;
  ens.tables.push_back(std::move(t));
  ens.biases = {0.5f, -0.5f};

  auto bytes = serialize_model(ens);
  Ensemble back = deserialize_model(bytes);
  CHECK(back.tables[0].spatial_bit_count == 1u);
  CHECK_FALSE(back.tables[0].calculator.is_fern());
  for (int i = 0; i < 20; ++i) {
    RawImage img = test::random_image(rng, 20, 20, 1);
    CHECK(class_scores(ens, img) == class_scores(back, img));
  }
}

TEST_CASE("model file error paths") {
  std::mt19937_64 rng(43);
  Ensemble ens = test::random_ensemble(rng, 16, 16, 1, 2, 1, 3, 5);
  auto bytes = serialize_model(ens);

  SUBCASE("corrupted magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize_model(bad), "model file: bad magic",
                         std::runtime_error);
  }
  SUBCASE("unsupported future version") {
    auto bad = bytes;
    bad[4] = 99;  // version field
    // CRC still matches the old payload, so recompute it.
    const uint32_t crc = crc32(bad.data(), bad.size() - 4);
    for (int i = 0; i < 4; ++i) bad[bad.size() - 4 + size_t(i)] = uint8_t(crc >> (8 * i));
    CHECK_THROWS_WITH_AS(deserialize_model(bad),
                         "model file: unsupported format version 99",
                         std::runtime_error);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    auto bad = bytes;
    bad[20] ^= 0x40;
    CHECK_THROWS_WITH_AS(deserialize_model(bad), "model file: checksum mismatch",
                         std::runtime_error);
  }
  SUBCASE("truncation") {
    auto bad = bytes;
    bad.resize(bad.size() / 2);
    CHECK_THROWS(deserialize_model(bad));
  }

  SUBCASE("file round trip") {
    const std::string path = "cte_test_model.bin";
    save_model(ens, path);
    Ensemble back = load_model(path);
    CHECK(serialize_model(back) == bytes);
    std::remove(path.c_str());
  }
}
