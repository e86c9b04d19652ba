#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cte/ensemble.hpp"

namespace cte {

// Binary model format, little-endian. Layout:
//   magic "CTE1", version u32,
//   C u32, M u32, K u32, width u32, height u32, depth u32,
//   prep block (orientations u32, smoothing radius u32, 3 flag bytes, pad),
//   per table: kind u8 (0 fern / 1 tree), patch size u8, spatial bits u8,
//     fern: K bit records | tree: topology block with per-node bit records,
//     area x0,y0,x1,y1 u32, weights (cells * C f32),
//   biases (C f32), CRC32 of all preceding bytes.
// Bit record: kind u8, channel u16, x1 y1 x2 y2 i8, threshold f32, bit u8.
inline constexpr uint32_t kModelFormatVersion = 1;

std::vector<uint8_t> serialize_model(const Ensemble& ens);
Ensemble deserialize_model(const std::vector<uint8_t>& bytes);

void save_model(const Ensemble& ens, const std::string& path);
Ensemble load_model(const std::string& path);

// CRC-32 (IEEE 802.3, reflected 0xEDB88320).
uint32_t crc32(const uint8_t* data, size_t size);

}  // namespace cte
