#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hsfuse/tensor.hpp"

namespace hsfuse::io {

// Shared on-disk framing: 8-byte magic, little-endian uint64 header length,
// UTF-8 JSON header, raw payload. Cubes and weight checkpoints only differ
// in magic and header schema.
inline constexpr char kCubeMagic[9] = "HSFCUBE1";
inline constexpr char kCheckpointMagic[9] = "HSFCKPT1";

void write_framed(const std::string& path, const char* magic,
                  const nlohmann::ordered_json& header, const void* payload,
                  std::size_t payload_bytes);

struct Framed {
  nlohmann::json header;
  std::vector<std::uint8_t> payload;
};

Framed read_framed(const std::string& path, const char* magic);

// Band-sequential float32 cube with optional wavelength grid (nm).
void save_cube(const std::string& path, const Tensor<float>& cube,
               const std::vector<double>& wavelengths = {});

struct LoadedCube {
  Tensor<float> data;
  std::vector<double> wavelengths;  // empty when absent
};

LoadedCube load_cube(const std::string& path);

// 8-bit binary portable graymap; values mapped linearly from [lo, hi] and
// clamped.
void save_pgm(const std::string& path, const float* plane, int height,
              int width, double lo, double hi);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace hsfuse::io
