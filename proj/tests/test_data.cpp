#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "cte/data.hpp"
#include "support.hpp"

using namespace cte;

namespace {

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(uint8_t(x >> 24));
  v.push_back(uint8_t(x >> 16));
  v.push_back(uint8_t(x >> 8));
  v.push_back(uint8_t(x));
}

struct IdxFixture {
  std::string images = "cte_test_images.idx";
  std::string labels = "cte_test_labels.idx";

  IdxFixture(int n, int rows, int cols, uint8_t base = 0) {
    std::vector<uint8_t> ib, lb;
    push_be32(ib, 0x00000803u);
    push_be32(ib, uint32_t(n));
    push_be32(ib, uint32_t(rows));
    push_be32(ib, uint32_t(cols));
    for (int i = 0; i < n * rows * cols; ++i) ib.push_back(uint8_t(base + i));
    push_be32(lb, 0x00000801u);
    push_be32(lb, uint32_t(n));
    for (int i = 0; i < n; ++i) lb.push_back(uint8_t(i % 10));
    write_bytes(images, ib);
    write_bytes(labels, lb);
  }
  ~IdxFixture() {
    std::remove(images.c_str());
    std::remove(labels.c_str());
  }
};

}  // namespace

TEST_CASE("IDX parsing") {
  SUBCASE("round trip of a synthetic pair") {
    IdxFixture fx(12, 4, 3);
    LabeledDataset ds = load_idx(fx.images, fx.labels);
    CHECK(ds.size() == 12);
    CHECK(ds.class_count == 10);
    CHECK(ds.images[0].width == 3);
    CHECK(ds.images[0].height == 4);
    CHECK(ds.labels[0] == 1);   // 0-based source shifted to 1-based
    CHECK(ds.labels[11] == 2);  // 11 % 10 = 1 -> 2
    CHECK(ds.images[0].at(1, 0, 0) == doctest::Approx(1.0f / 255.0f));
  }

  SUBCASE("swapped files give a magic error") {
    IdxFixture fx(3, 2, 2);
    CHECK_THROWS_AS(load_idx(fx.labels, fx.images), std::runtime_error);
  }

  SUBCASE("truncated payload") {
    IdxFixture fx(3, 2, 2);
    std::vector<uint8_t> bad;
    push_be32(bad, 0x00000803u);
    push_be32(bad, 3);
    push_be32(bad, 2);
    push_be32(bad, 2);
    bad.push_back(0);  // far too short
    write_bytes(fx.images, bad);
    CHECK_THROWS(load_idx(fx.images, fx.labels));
  }

  SUBCASE("count mismatch between files") {
    IdxFixture fx(3, 2, 2);
    std::vector<uint8_t> lb;
    push_be32(lb, 0x00000801u);
    push_be32(lb, 4);
    for (int i = 0; i < 4; ++i) lb.push_back(uint8_t(i));
    write_bytes(fx.labels, lb);
    CHECK_THROWS(load_idx(fx.images, fx.labels));
  }
}

TEST_CASE("CIFAR-10 parsing") {
  const std::string path = "cte_test_cifar.bin";

  SUBCASE("single record with planar channels") {
    std::vector<uint8_t> b(3073);
    b[0] = 7;  // label
    for (int i = 0; i < 3072; ++i) b[size_t(1 + i)] = uint8_t(i % 251);
    write_bytes(path, b);
    LabeledDataset ds = load_cifar10({path});
    REQUIRE(ds.size() == 1);
    CHECK(ds.labels[0] == 8);
    const RawImage& img = ds.images[0];
    CHECK(img.width == 32);
    CHECK(img.depth == 3);
    // Channel-planar unpacking: red plane first, then green, then blue.
    CHECK(img.at(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(img.at(1, 0, 0) == doctest::Approx(1.0f / 255.0f));
    CHECK(img.at(0, 0, 1) == doctest::Approx(float(1024 % 251) / 255.0f));
    CHECK(img.at(0, 0, 2) == doctest::Approx(float(2048 % 251) / 255.0f));
    std::remove(path.c_str());
  }

  SUBCASE("multiple batches concatenate") {
    std::vector<uint8_t> b(3073 * 3, 1);
    b[0] = 0;
    b[3073] = 1;
    b[2 * 3073] = 2;
    write_bytes(path, b);
    LabeledDataset ds = load_cifar10({path, path});
    CHECK(ds.size() == 6);
    std::remove(path.c_str());
  }

  SUBCASE("wrong length file") {
    write_bytes(path, std::vector<uint8_t>(3072, 0));
    CHECK_THROWS(load_cifar10({path}));
    std::remove(path.c_str());
  }

  SUBCASE("label out of range") {
    std::vector<uint8_t> b(3073, 0);
    b[0] = 10;
    write_bytes(path, b);
    CHECK_THROWS(load_cifar10({path}));
    std::remove(path.c_str());
  }
}

TEST_CASE("CTED round trip") {
  std::mt19937_64 rng(101);
  LabeledDataset ds;
  ds.class_count = 3;
  for (int i = 0; i < 10; ++i) {
    ds.images.push_back(test::random_image(rng, 6, 5, 2));
    ds.labels.push_back(1 + i % 3);
  }
  const std::string path = "cte_test_ds.cted";
  save_cted(ds, path);
  LabeledDataset back = load_cted(path);
  CHECK(back.size() == ds.size());
  CHECK(back.class_count == 3);
  for (int64_t i = 0; i < ds.size(); ++i) {
    CHECK(back.labels[size_t(i)] == ds.labels[size_t(i)]);
    CHECK(back.images[size_t(i)].data == ds.images[size_t(i)].data);
  }
  std::remove(path.c_str());

  SUBCASE("bad magic") {
    write_bytes(path, std::vector<uint8_t>{'X', 'T', 'E', 'D', 0, 0});
    CHECK_THROWS(load_cted(path));
    std::remove(path.c_str());
  }
}

TEST_CASE("stratified split") {
  std::mt19937_64 rng(102);
  LabeledDataset ds;
  ds.class_count = 10;
  for (int i = 0; i < 200; ++i) {
    ds.images.push_back(test::random_image(rng, 4, 4, 1));
    ds.labels.push_back(1 + i % 10);
  }

  SUBCASE("deterministic given the seed") {
    auto [a1, b1] = split(ds, 0.9, 42);
    auto [a2, b2] = split(ds, 0.9, 42);
    CHECK(a1.labels == a2.labels);
    CHECK(b1.labels == b2.labels);
    for (size_t i = 0; i < a1.images.size(); ++i)
      CHECK(a1.images[i].data == a2.images[i].data);
    auto [a3, b3] = split(ds, 0.9, 43);
    CHECK(a1.labels.size() == a3.labels.size());
  }

  SUBCASE("per-class balance within one") {
    auto [a, b] = split(ds, 0.7, 1);
    CHECK(a.size() == 140);
    CHECK(b.size() == 60);
    for (int64_t c : a.class_counts()) CHECK(std::abs(double(c) - 14.0) <= 1.0);
    for (int64_t c : b.class_counts()) CHECK(std::abs(double(c) - 6.0) <= 1.0);
  }

  SUBCASE("part B stays nonempty near fraction 1") {
    auto [a, b] = split(ds, 0.999, 7);
    CHECK(b.size() >= 1);
    CHECK(a.size() + b.size() == 200);
  }

  SUBCASE("degenerate fractions are errors") {
    CHECK_THROWS(split(ds, 0.0, 1));
    CHECK_THROWS(split(ds, 1.0, 1));
    CHECK_THROWS(split(ds, 0.001, 1));  // part A would be empty
  }
}
