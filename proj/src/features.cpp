#include "cte/features.hpp"

#include <limits>
#include <stdexcept>

namespace cte {

void FeatureBlock::validate() const {
  if (row_ptr.empty() || row_ptr.front() != 0 ||
      row_ptr.back() != words.size() || words.size() != counts.size())
    throw std::invalid_argument("FeatureBlock: inconsistent CSR layout");
  if (scale.size() != cells)
    throw std::invalid_argument("FeatureBlock: scale size != cells");
}

uint64_t FeatureMatrix::cols() const {
  uint64_t total = 0;
  for (const auto& b : blocks) total += b.cells;
  return total;
}

std::vector<double> FeatureMatrix::dense_row(int64_t i) const {
  std::vector<double> row(cols(), 0.0);
  uint64_t offset = 0;
  for (const auto& b : blocks) {
    for (uint64_t k = b.row_ptr[size_t(i)]; k < b.row_ptr[size_t(i) + 1]; ++k)
      row[offset + b.words[k]] = double(b.counts[k]) / b.scale[b.words[k]];
    offset += b.cells;
  }
  return row;
}

void normalize_block(FeatureBlock& block) {
  std::vector<double> l1(block.cells, 0.0);
  std::vector<int64_t> l0(block.cells, 0);
  for (size_t k = 0; k < block.words.size(); ++k) {
    l1[block.words[k]] += block.counts[k];
    ++l0[block.words[k]];
  }
  block.scale.assign(block.cells, 1.0);
  for (uint32_t c = 0; c < block.cells; ++c)
    if (l0[c] > 0) block.scale[c] = l1[c] / double(l0[c]);
}

void append_block(FeatureMatrix& m, uint32_t cells,
                  const std::vector<std::vector<uint32_t>>& histograms) {
  if (m.rows == 0 && m.blocks.empty()) m.rows = int64_t(histograms.size());
  if (int64_t(histograms.size()) != m.rows)
    throw std::invalid_argument("append_block: row count mismatch");

  FeatureBlock block;
  block.cells = cells;
  block.row_ptr.reserve(histograms.size() + 1);
  block.row_ptr.push_back(0);
  for (const auto& h : histograms) {
    if (h.size() != cells)
      throw std::invalid_argument("append_block: histogram size != cells");
    for (uint32_t cell = 0; cell < cells; ++cell) {
      if (h[cell] == 0) continue;
      if (h[cell] > std::numeric_limits<uint16_t>::max())
        throw std::invalid_argument("append_block: count exceeds uint16");
      block.words.push_back(uint16_t(cell));
      block.counts.push_back(uint16_t(h[cell]));
    }
    block.row_ptr.push_back(block.words.size());
  }
  normalize_block(block);
  m.blocks.push_back(std::move(block));
}

}  // namespace cte
