#include <doctest.h>

#include <stdexcept>

#include "cte/config.hpp"

using namespace cte;

TEST_CASE("key-value parsing") {
  auto kv = parse_key_values("a = 1\n# comment\n b =  two # trailing\n\n");
  CHECK(kv.size() == 2);
  CHECK(kv["a"] == "1");
  CHECK(kv["b"] == "two");

  CHECK_THROWS(parse_key_values("no equals sign"));
  CHECK_THROWS(parse_key_values("a = 1\na = 2"));
  CHECK_THROWS(parse_key_values("a ="));
}

TEST_CASE("training config file") {
  const char* text = R"(
# toy configuration
dataset = cted
loss = softmax
lambda = 0.5
tolerance = 1e-7
tables = 4
bits = 6
structure = fern
patch_size = 7
orientations = 4
smoothing_radius = 0
channels_integral = off
candidates = 12
replacement_sweeps = 1
refinement_sweeps = 0
optimal_thresholds = on
spatial_enforcement = off
validation_fraction = 0.1
threads = 2
seed = 99
)";
  FileConfig fc = parse_train_config(text);
  CHECK(fc.dataset == DatasetKind::Cted);
  CHECK(fc.train.tables == 4);
  CHECK(fc.train.bits == 6);
  CHECK(fc.train.patch_size == 7);
  CHECK(fc.train.prep.orientation_count == 4);
  CHECK(fc.train.prep.smoothing_radius == 0);
  CHECK_FALSE(fc.train.prep.integral_channels);
  CHECK(fc.train.growth.candidate_count == 12);
  CHECK_FALSE(fc.train.growth.enforce_spatial_bits);
  CHECK(fc.train.loss.lambda == 0.5);
  CHECK(fc.train.loss.tolerance == 1e-7);
  CHECK(fc.train.validation_fraction == 0.1);
  CHECK(fc.train.threads == 2);
  CHECK(fc.train.seed == 99);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(parse_train_config("no_such_key = 1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("tables = many"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("loss = hinge2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_train_config("tables = 0"), std::invalid_argument);
  // Tree structure needs stage bits summing to K.
  CHECK_THROWS_AS(parse_train_config("structure = tree\nbits = 4"),
                  std::invalid_argument);
  FileConfig ok = parse_train_config(
      "structure = tree\nbits = 4\ntree_stage_bits = 2,2\ntree_split_factors = 2");
  CHECK(ok.train.tree);
  REQUIRE(ok.train.tree_stage_bits.size() == 2);
}

TEST_CASE("dataset kind defaults and file conventions") {
  FileConfig fc = parse_train_config("");
  CHECK(fc.dataset == DatasetKind::Cted);
  CHECK_THROWS(load_dataset(DatasetKind::Cted, "/nonexistent-dir", true));
}
