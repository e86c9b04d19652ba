#include "cte/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace cte {

void LabeledDataset::validate() const {
  if (images.size() != labels.size())
    throw std::invalid_argument("LabeledDataset: image/label count mismatch");
  if (class_count < 1)
    throw std::invalid_argument("LabeledDataset: class count must be >= 1");
  if (images.empty()) return;
  const int w = images.front().width, h = images.front().height,
            d = images.front().depth;
  for (const auto& img : images) {
    img.validate();
    if (img.width != w || img.height != h || img.depth != d)
      throw std::invalid_argument("LabeledDataset: non-uniform image dims");
  }
  for (int l : labels)
    if (l < 1 || l > class_count)
      throw std::invalid_argument("LabeledDataset: label out of range");
}

std::vector<int64_t> LabeledDataset::class_counts() const {
  std::vector<int64_t> counts(size_t(class_count), 0);
  for (int l : labels) ++counts[size_t(l - 1)];
  return counts;
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

uint32_t be32(const std::vector<uint8_t>& b, size_t pos) {
  return uint32_t(b[pos]) << 24 | uint32_t(b[pos + 1]) << 16 |
         uint32_t(b[pos + 2]) << 8 | uint32_t(b[pos + 3]);
}

uint32_t le32(const std::vector<uint8_t>& b, size_t pos) {
  return uint32_t(b[pos]) | uint32_t(b[pos + 1]) << 8 |
         uint32_t(b[pos + 2]) << 16 | uint32_t(b[pos + 3]) << 24;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const auto ib = read_file(images_path);
  const auto lb = read_file(labels_path);
  if (ib.size() < 16 || be32(ib, 0) != 0x00000803u)
    throw std::runtime_error("IDX images: bad magic in " + images_path);
  if (lb.size() < 8 || be32(lb, 0) != 0x00000801u)
    throw std::runtime_error("IDX labels: bad magic in " + labels_path);

  const uint32_t n = be32(ib, 4);
  const uint32_t rows = be32(ib, 8);
  const uint32_t cols = be32(ib, 12);
  if (ib.size() != 16 + size_t(n) * rows * cols)
    throw std::runtime_error("IDX images: truncated payload in " + images_path);
  const uint32_t nl = be32(lb, 4);
  if (lb.size() != 8 + size_t(nl))
    throw std::runtime_error("IDX labels: truncated payload in " + labels_path);
  if (n != nl)
    throw std::runtime_error("IDX: image/label count mismatch");

  LabeledDataset ds;
  ds.provenance = images_path;
  ds.class_count = 10;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  size_t pos = 16;
  for (uint32_t i = 0; i < n; ++i) {
    RawImage img = RawImage::zeros(int(cols), int(rows), 1);
    for (uint32_t p = 0; p < rows * cols; ++p)
      img.data[p] = float(ib[pos + p]) / 255.0f;
    pos += size_t(rows) * cols;
    ds.images.push_back(std::move(img));
    const uint8_t label = lb[8 + i];
    if (label > 9)
      throw std::runtime_error("IDX labels: label out of range");
    ds.labels.push_back(int(label) + 1);
  }
  return ds;
}

LabeledDataset load_cifar10(const std::vector<std::string>& batch_paths) {
  constexpr size_t kRecord = 1 + 3072;
  LabeledDataset ds;
  ds.class_count = 10;
  ds.provenance = batch_paths.empty() ? "" : batch_paths.front();
  for (const auto& path : batch_paths) {
    const auto b = read_file(path);
    if (b.empty() || b.size() % kRecord != 0)
      throw std::runtime_error("CIFAR-10: file size is not a multiple of 3073: " +
                               path);
    const size_t records = b.size() / kRecord;
    for (size_t rec = 0; rec < records; ++rec) {
      const uint8_t* p = b.data() + rec * kRecord;
      if (p[0] > 9)
        throw std::runtime_error("CIFAR-10: label out of range in " + path);
      RawImage img = RawImage::zeros(32, 32, 3);
      for (size_t v = 0; v < 3072; ++v)
        img.data[v] = float(p[1 + v]) / 255.0f;
      ds.images.push_back(std::move(img));
      ds.labels.push_back(int(p[0]) + 1);
    }
  }
  return ds;
}

namespace {
constexpr char kCtedMagic[4] = {'C', 'T', 'E', 'D'};
}

LabeledDataset load_cted(const std::string& path) {
  const auto b = read_file(path);
  if (b.size() < 24 || std::memcmp(b.data(), kCtedMagic, 4) != 0)
    throw std::runtime_error("CTED: bad magic in " + path);
  const uint32_t w = le32(b, 4), h = le32(b, 8), d = le32(b, 12);
  const uint32_t c = le32(b, 16), n = le32(b, 20);
  const size_t pixels = size_t(w) * h * d;
  const size_t expect = 24 + size_t(n) * pixels * 4 + size_t(n) * 2;
  if (b.size() != expect)
    throw std::runtime_error("CTED: truncated payload in " + path);

  LabeledDataset ds;
  ds.class_count = int(c);
  ds.provenance = path;
  size_t pos = 24;
  for (uint32_t i = 0; i < n; ++i) {
    RawImage img = RawImage::zeros(int(w), int(h), int(d));
    std::memcpy(img.data.data(), b.data() + pos, pixels * 4);
    pos += pixels * 4;
    ds.images.push_back(std::move(img));
  }
  for (uint32_t i = 0; i < n; ++i) {
    const int label = int(b[pos]) | int(b[pos + 1]) << 8;
    pos += 2;
    ds.labels.push_back(label);
  }
  ds.validate();
  return ds;
}

void save_cted(const LabeledDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  auto w32 = [&out](uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  };
  out.write(kCtedMagic, 4);
  const int w = ds.images.empty() ? 0 : ds.images.front().width;
  const int h = ds.images.empty() ? 0 : ds.images.front().height;
  const int d = ds.images.empty() ? 0 : ds.images.front().depth;
  w32(uint32_t(w));
  w32(uint32_t(h));
  w32(uint32_t(d));
  w32(uint32_t(ds.class_count));
  w32(uint32_t(ds.images.size()));
  for (const auto& img : ds.images)
    out.write(reinterpret_cast<const char*>(img.data.data()),
              std::streamsize(img.data.size() * 4));
  for (int l : ds.labels) {
    const uint16_t v = uint16_t(l);
    out.write(reinterpret_cast<const char*>(&v), 2);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double fraction,
                                                uint64_t seed) {
  ds.validate();
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("split: fraction must be in (0,1)");
  const int64_t n = ds.size();
  const int64_t target_a = int64_t(std::floor(double(n) * fraction));
  if (target_a < 1 || target_a >= n)
    throw std::invalid_argument("split: degenerate part sizes");

  // Per-class largest-remainder allocation of part A.
  const auto counts = ds.class_counts();
  const int C = ds.class_count;
  std::vector<int64_t> take(size_t(C), 0);
  std::vector<std::pair<double, int>> remainders;
  int64_t allocated = 0;
  for (int c = 0; c < C; ++c) {
    const double exact = double(counts[size_t(c)]) * fraction;
    take[size_t(c)] = int64_t(std::floor(exact));
    allocated += take[size_t(c)];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](auto& a, auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t r = 0; allocated < target_a && r < remainders.size(); ++r) {
    const int c = remainders[r].second;
    if (take[size_t(c)] < counts[size_t(c)]) {
      ++take[size_t(c)];
      ++allocated;
    }
  }

  // Seeded per-class shuffles (Fisher-Yates on the class index lists).
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int64_t>> by_class;
  by_class.resize(size_t(C));
  for (int64_t i = 0; i < n; ++i)
    by_class[size_t(ds.labels[size_t(i)] - 1)].push_back(i);
  LabeledDataset a, b;
  a.class_count = b.class_count = C;
  a.provenance = ds.provenance + "#a";
  b.provenance = ds.provenance + "#b";
  for (int c = 0; c < C; ++c) {
    auto& idx = by_class[size_t(c)];
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng() % i]);
    for (size_t i = 0; i < idx.size(); ++i) {
      LabeledDataset& part = int64_t(i) < take[size_t(c)] ? a : b;
      part.images.push_back(ds.images[size_t(idx[i])]);
      part.labels.push_back(ds.labels[size_t(idx[i])]);
    }
  }
  return {std::move(a), std::move(b)};
}

}  // namespace cte
