#include "cte/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cte {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return out;
  } catch (...) {
    throw std::invalid_argument("config: bad number for '" + key + "': " + v);
  }
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  if (out.empty())
    throw std::invalid_argument("config: empty list for '" + key + "'");
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config: empty key or value on line " +
                                  std::to_string(lineno));
    if (!out.emplace(key, value).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
  }
  return out;
}

FileConfig parse_train_config(const std::string& text) {
  FileConfig fc;
  TrainConfig& t = fc.train;
  for (const auto& [key, v] : parse_key_values(text)) {
    if (key == "dataset") {
      if (v == "mnist")
        fc.dataset = DatasetKind::Mnist;
      else if (v == "cifar10")
        fc.dataset = DatasetKind::Cifar10;
      else if (v == "cted")
        fc.dataset = DatasetKind::Cted;
      else
        throw std::invalid_argument("config: unknown dataset kind: " + v);
    } else if (key == "tables") {
      t.tables = parse_int(key, v);
    } else if (key == "bits") {
      t.bits = parse_int(key, v);
    } else if (key == "structure") {
      if (v == "fern")
        t.tree = false;
      else if (v == "tree")
        t.tree = true;
      else
        throw std::invalid_argument("config: structure must be fern or tree");
    } else if (key == "tree_stage_bits") {
      t.tree_stage_bits = parse_int_list(key, v);
    } else if (key == "tree_split_factors") {
      t.tree_split_factors = parse_int_list(key, v);
    } else if (key == "patch_size") {
      t.patch_size = parse_int(key, v);
    } else if (key == "orientations") {
      t.prep.orientation_count = parse_int(key, v);
    } else if (key == "smoothing_radius") {
      t.prep.smoothing_radius = parse_int(key, v);
    } else if (key == "channels_gradient") {
      t.prep.gradient_channels = parse_bool(key, v);
    } else if (key == "channels_integral") {
      t.prep.integral_channels = parse_bool(key, v);
    } else if (key == "channels_spatial") {
      t.prep.spatial_channels = parse_bool(key, v);
    } else if (key == "candidates") {
      t.growth.candidate_count = parse_int(key, v);
    } else if (key == "replacement_sweeps") {
      t.growth.replacement_sweeps = parse_int(key, v);
    } else if (key == "refinement_sweeps") {
      t.growth.refinement_sweeps = parse_int(key, v);
    } else if (key == "split_candidates") {
      t.growth.split_candidates = parse_int(key, v);
    } else if (key == "optimal_thresholds") {
      t.growth.optimal_thresholds = parse_bool(key, v);
    } else if (key == "spatial_bits") {
      t.growth.spatial_bits = parse_bool(key, v);
    } else if (key == "spatial_enforcement") {
      t.growth.enforce_spatial_bits = parse_bool(key, v);
    } else if (key == "spatial_enforce_max") {
      t.growth.enforce_max = parse_int(key, v);
    } else if (key == "loss") {
      if (v == "svm")
        t.loss.kind = LossKind::Svm;
      else if (v == "softmax")
        t.loss.kind = LossKind::Softmax;
      else if (v == "softmax-distill")
        t.loss.kind = LossKind::SoftmaxDistill;
      else
        throw std::invalid_argument("config: unknown loss: " + v);
    } else if (key == "lambda") {
      t.loss.lambda = parse_double(key, v);
    } else if (key == "tolerance") {
      t.loss.tolerance = parse_double(key, v);
    } else if (key == "max_iterations") {
      t.loss.max_iterations = parse_int(key, v);
    } else if (key == "distill_alpha") {
      t.loss.distill_alpha = parse_double(key, v);
    } else if (key == "distill_temperature") {
      t.loss.distill_temperature = parse_double(key, v);
    } else if (key == "teacher_file") {
      t.teacher_file = v;
    } else if (key == "validation_fraction") {
      t.validation_fraction = parse_double(key, v);
    } else if (key == "threads") {
      t.threads = parse_int(key, v);
    } else if (key == "seed") {
      t.seed = uint64_t(std::stoull(v));
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  t.validate();
  return fc;
}

FileConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string resolve_data_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  const char* env = std::getenv("CTE_DATA_DIR");
  if (env && *env) return env;
  throw std::runtime_error(
      "no dataset directory: pass --data-dir or set CTE_DATA_DIR");
}

LabeledDataset load_dataset(DatasetKind kind, const std::string& dir,
                            bool train_part) {
  switch (kind) {
    case DatasetKind::Mnist:
      return train_part
                 ? load_idx(dir + "/train-images-idx3-ubyte",
                            dir + "/train-labels-idx1-ubyte")
                 : load_idx(dir + "/t10k-images-idx3-ubyte",
                            dir + "/t10k-labels-idx1-ubyte");
    case DatasetKind::Cifar10: {
      if (train_part) {
        std::vector<std::string> batches;
        for (int b = 1; b <= 5; ++b)
          batches.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
        return load_cifar10(batches);
      }
      return load_cifar10({dir + "/test_batch.bin"});
    }
    case DatasetKind::Cted:
      return load_cted(dir + (train_part ? "/train.cted" : "/test.cted"));
  }
  throw std::logic_error("load_dataset: bad kind");
}

}  // namespace cte
