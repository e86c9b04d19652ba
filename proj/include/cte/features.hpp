#pragma once

#include <cstdint>
#include <vector>

namespace cte {

// One table's histogram block over all examples: a sparse rows-by-cells
// count matrix plus per-column normalization scales. Normalized feature
// values are count / scale; scales are fixed when the block is appended.
struct FeatureBlock {
  uint32_t cells = 0;
  std::vector<uint64_t> row_ptr;  // rows + 1
  std::vector<uint16_t> words;    // block-local cell ids, sorted per row
  std::vector<uint16_t> counts;   // raw histogram counts
  std::vector<double> scale;      // per cell; 1.0 for all-zero columns

  int64_t rows() const { return int64_t(row_ptr.size()) - 1; }
  void validate() const;
};

// Example-major sparse feature matrix, one block per table.
struct FeatureMatrix {
  int64_t rows = 0;
  std::vector<FeatureBlock> blocks;

  uint64_t cols() const;
  int block_count() const { return int(blocks.size()); }

  // Dense normalized row (testing / small problems).
  std::vector<double> dense_row(int64_t i) const;
};

// Column scales: L1(column) / L0(column), the mean count over examples in
// which the column is active. After normalization every nonzero column's
// mean-over-nonzeros is 1.
void normalize_block(FeatureBlock& block);

// Build a block from per-example dense histograms (rows x cells), then
// normalize it and append. Counts must fit uint16.
void append_block(FeatureMatrix& m, uint32_t cells,
                  const std::vector<std::vector<uint32_t>>& histograms);

}  // namespace cte
