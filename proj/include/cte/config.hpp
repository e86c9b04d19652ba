#pragma once

#include <map>
#include <string>

#include "cte/train.hpp"

namespace cte {

// Flat "key = value" configuration file: one pair per line, '#' comments,
// blank lines ignored. Unknown keys are errors.
std::map<std::string, std::string> parse_key_values(const std::string& text);

enum class DatasetKind { Mnist, Cifar10, Cted };

struct FileConfig {
  TrainConfig train;
  DatasetKind dataset = DatasetKind::Cted;
};

FileConfig parse_train_config(const std::string& text);
FileConfig load_train_config(const std::string& path);

// Resolve the dataset root: explicit --data-dir beats CTE_DATA_DIR.
std::string resolve_data_dir(const std::string& flag_value);

// Load the train or test portion of a dataset under `dir` using the
// conventional file names for each kind.
LabeledDataset load_dataset(DatasetKind kind, const std::string& dir,
                            bool train_part);

}  // namespace cte
