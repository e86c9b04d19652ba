#include "cte/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cte {

uint32_t crc32(const uint8_t* data, size_t size) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < size; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[4] = {'C', 'T', 'E', '1'};

struct Writer {
  std::vector<uint8_t> bytes;

  void u8(uint8_t v) { bytes.push_back(v); }
  void i8(int8_t v) { bytes.push_back(uint8_t(v)); }
  void u16(uint16_t v) {
    bytes.push_back(uint8_t(v));
    bytes.push_back(uint8_t(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(uint8_t(v >> (8 * i)));
  }
  void f32(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
};

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size())
      throw std::runtime_error("model file truncated");
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  int8_t i8() { return int8_t(u8()); }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(bytes[pos]) | uint16_t(bytes[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
};

void write_bit(Writer& w, const BitFunction& f) {
  w.u8(uint8_t(f.kind));
  w.u16(f.channel);
  w.i8(f.x1);
  w.i8(f.y1);
  w.i8(f.x2);
  w.i8(f.y2);
  w.f32(f.threshold);
  w.u8(f.bit_index);
}

BitFunction read_bit(Reader& r) {
  BitFunction f;
  uint8_t kind = r.u8();
  if (kind > uint8_t(BitKind::IntegralBit))
    throw std::runtime_error("model file: bad bit-function kind");
  f.kind = BitKind(kind);
  f.channel = r.u16();
  f.x1 = r.i8();
  f.y1 = r.i8();
  f.x2 = r.i8();
  f.y2 = r.i8();
  f.threshold = r.f32();
  f.bit_index = r.u8();
  return f;
}

}  // namespace

std::vector<uint8_t> serialize_model(const Ensemble& ens) {
  ens.validate();
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u32(kModelFormatVersion);
  w.u32(uint32_t(ens.class_count));
  w.u32(uint32_t(ens.tables.size()));
  const uint32_t k = ens.tables.empty()
                         ? 0u
                         : uint32_t(ens.tables.front().calculator.word_bits());
  w.u32(k);
  w.u32(uint32_t(ens.width));
  w.u32(uint32_t(ens.height));
  w.u32(uint32_t(ens.depth));
  w.u32(uint32_t(ens.prep.orientation_count));
  w.u32(uint32_t(ens.prep.smoothing_radius));
  w.u8(ens.prep.gradient_channels);
  w.u8(ens.prep.integral_channels);
  w.u8(ens.prep.spatial_channels);
  w.u8(0);

  for (const auto& table : ens.tables) {
    const bool is_fern = table.calculator.is_fern();
    w.u8(is_fern ? 0 : 1);
    w.u8(uint8_t(table.calculator.patch_size()));
    w.u8(uint8_t(table.spatial_bit_count));
    if (is_fern) {
      const Fern& fern = table.calculator.fern();
      w.u8(uint8_t(fern.bits.size()));
      for (const auto& b : fern.bits) write_bit(w, b);
    } else {
      const LongTree& tree = table.calculator.tree();
      w.u32(uint32_t(tree.stage_count()));
      for (int s : tree.stage_bits) w.u32(uint32_t(s));
      for (int q : tree.split_factors) w.u32(uint32_t(q));
      for (size_t s = 0; s < tree.stages.size(); ++s) {
        w.u32(uint32_t(tree.stages[s].size()));
        for (const auto& node : tree.stages[s]) {
          for (const auto& b : node.bits) write_bit(w, b);
          for (uint32_t c : node.children) w.u32(c);
        }
      }
    }
    w.u32(uint32_t(table.area.x0));
    w.u32(uint32_t(table.area.y0));
    w.u32(uint32_t(table.area.x1));
    w.u32(uint32_t(table.area.y1));
    for (float v : table.weights) w.f32(v);
  }
  for (float b : ens.biases) w.f32(b);
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  return w.bytes;
}

Ensemble deserialize_model(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw std::runtime_error("model file: bad magic");
  const uint32_t stored_crc = uint32_t(bytes[bytes.size() - 4]) |
                              uint32_t(bytes[bytes.size() - 3]) << 8 |
                              uint32_t(bytes[bytes.size() - 2]) << 16 |
                              uint32_t(bytes[bytes.size() - 1]) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw std::runtime_error("model file: checksum mismatch");

  Reader r{bytes};
  r.pos = 4;
  const uint32_t version = r.u32();
  if (version != kModelFormatVersion)
    throw std::runtime_error("model file: unsupported format version " +
                             std::to_string(version));

  Ensemble ens;
  ens.class_count = int(r.u32());
  const uint32_t m = r.u32();
  const uint32_t k = r.u32();
  ens.width = int(r.u32());
  ens.height = int(r.u32());
  ens.depth = int(r.u32());
  ens.prep.orientation_count = int(r.u32());
  ens.prep.smoothing_radius = int(r.u32());
  ens.prep.gradient_channels = r.u8() != 0;
  ens.prep.integral_channels = r.u8() != 0;
  ens.prep.spatial_channels = r.u8() != 0;
  r.u8();

  ens.tables.reserve(m);
  for (uint32_t t = 0; t < m; ++t) {
    ConvTable table;
    const uint8_t kind = r.u8();
    const int patch = r.u8();
    table.spatial_bit_count = r.u8();
    if (kind == 0) {
      Fern fern;
      fern.patch_size = patch;
      const uint8_t nbits = r.u8();
      if (nbits != k)
        throw std::runtime_error("model file: fern bit count != header K");
      fern.bits.reserve(nbits);
      for (uint8_t i = 0; i < nbits; ++i) fern.bits.push_back(read_bit(r));
      table.calculator = WordCalculator(std::move(fern));
    } else if (kind == 1) {
      LongTree tree;
      tree.patch_size = patch;
      const uint32_t stages = r.u32();
      if (stages == 0 || stages > 16)
        throw std::runtime_error("model file: bad tree stage count");
      tree.stage_bits.resize(stages);
      for (auto& s : tree.stage_bits) s = int(r.u32());
      tree.split_factors.resize(stages - 1);
      for (auto& q : tree.split_factors) q = int(r.u32());
      tree.stages.resize(stages);
      for (uint32_t s = 0; s < stages; ++s) {
        const uint32_t nodes = r.u32();
        tree.stages[s].resize(nodes);
        for (auto& node : tree.stages[s]) {
          node.bits.resize(size_t(tree.stage_bits[s]));
          for (auto& b : node.bits) b = read_bit(r);
          if (s + 1 < stages) {
            node.children.resize(size_t(1) << tree.stage_bits[s]);
            for (auto& c : node.children) c = r.u32();
          }
        }
      }
      if (tree.word_bits() != int(k))
        throw std::runtime_error("model file: tree bit count != header K");
      table.calculator = WordCalculator(std::move(tree));
    } else {
      throw std::runtime_error("model file: bad calculator kind");
    }
    table.area.x0 = int(r.u32());
    table.area.y0 = int(r.u32());
    table.area.x1 = int(r.u32());
    table.area.y1 = int(r.u32());
    table.weights.resize(size_t(table.cells()) * ens.class_count);
    for (auto& v : table.weights) v = r.f32();
    ens.tables.push_back(std::move(table));
  }
  ens.biases.resize(size_t(ens.class_count));
  for (auto& b : ens.biases) b = r.f32();
  if (r.pos != bytes.size() - 4)
    throw std::runtime_error("model file: trailing bytes");
  ens.validate();
  return ens;
}

void save_model(const Ensemble& ens, const std::string& path) {
  const auto bytes = serialize_model(ens);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Ensemble load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace cte
