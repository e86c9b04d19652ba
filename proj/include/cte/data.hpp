#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cte/image.hpp"

namespace cte {

// Uniform-sized labeled images. Labels are 1-based (1..class_count).
struct LabeledDataset {
  std::vector<RawImage> images;
  std::vector<int> labels;
  int class_count = 0;
  std::string provenance;

  int64_t size() const { return int64_t(images.size()); }
  void validate() const;
  std::vector<int64_t> class_counts() const;
};

// IDX pair (big-endian magic 0x803 images / 0x801 labels). Pixels are
// scaled to [0,1]; 0-based source labels are shifted to 1-based.
LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path);

// CIFAR-10 binary batches: per record 1 label byte + 3072 channel-planar
// bytes (32x32x3), values scaled to [0,1].
LabeledDataset load_cifar10(const std::vector<std::string>& batch_paths);

// Generic raw-tensor dataset: magic "CTED", width/height/depth/C/N u32,
// N * (w*h*d) f32 channel-planar payload, N u16 1-based labels.
LabeledDataset load_cted(const std::string& path);
void save_cted(const LabeledDataset& ds, const std::string& path);

// Deterministic seeded stratified split. Part A receives floor(N*fraction)
// examples (per-class largest-remainder allocation, within +-1 of
// proportional); part B gets the rest, so it is nonempty for fraction < 1.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double fraction,
                                                uint64_t seed);

}  // namespace cte
