#include "hsfuse/format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "cube/checkpoint payloads are little-endian raw floats");

namespace hsfuse::io {

void write_framed(const std::string& path, const char* magic,
                  const nlohmann::ordered_json& header, const void* payload,
                  std::size_t payload_bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "cannot open for writing: " + path);
  f.write(magic, 8);
  const std::string hdr = header.dump();
  const std::uint64_t hlen = hdr.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  if (payload_bytes)
    f.write(static_cast<const char*>(payload),
            static_cast<std::streamsize>(payload_bytes));
  f.flush();
  check(f.good(), "write failed: " + path);
}

Framed read_framed(const std::string& path, const char* magic) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open: " + path);
  char m[8];
  f.read(m, 8);
  check(f.gcount() == 8 && std::memcmp(m, magic, 8) == 0,
        "bad magic in " + path);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  check(f.gcount() == sizeof(hlen) && hlen < (1ull << 24),
        "bad header length in " + path);
  std::string hdr(hlen, '\0');
  f.read(hdr.data(), static_cast<std::streamsize>(hlen));
  check(static_cast<std::uint64_t>(f.gcount()) == hlen,
        "truncated header in " + path);
  Framed out;
  try {
    out.header = nlohmann::json::parse(hdr);
  } catch (const std::exception& e) {
    throw std::runtime_error("unparseable header in " + path + ": " +
                             e.what());
  }
  out.payload.assign(std::istreambuf_iterator<char>(f), {});
  return out;
}

void save_cube(const std::string& path, const Tensor<float>& cube,
               const std::vector<double>& wavelengths) {
  check(wavelengths.empty() ||
            wavelengths.size() == static_cast<std::size_t>(cube.shape.c),
        "save_cube: wavelength grid length does not match band count");
  for (std::size_t i = 1; i < wavelengths.size(); ++i)
    check(wavelengths[i] > wavelengths[i - 1],
          "save_cube: wavelengths must be strictly increasing");
  nlohmann::ordered_json hdr;
  hdr["bands"] = cube.shape.c;
  hdr["height"] = cube.shape.h;
  hdr["width"] = cube.shape.w;
  hdr["dtype"] = "f32";
  hdr["layout"] = "band-sequential";
  hdr["endianness"] = "little";
  if (!wavelengths.empty()) hdr["wavelengths"] = wavelengths;
  write_framed(path, kCubeMagic, hdr, cube.data.data(),
               cube.data.size() * sizeof(float));
}

LoadedCube load_cube(const std::string& path) {
  Framed fr = read_framed(path, kCubeMagic);
  const auto& h = fr.header;
  check(h.contains("bands") && h.contains("height") && h.contains("width"),
        "cube header missing dimensions in " + path);
  check(h.value("dtype", "") == "f32" &&
            h.value("layout", "") == "band-sequential" &&
            h.value("endianness", "") == "little",
        "unsupported cube encoding in " + path);
  LoadedCube out;
  const int bands = h["bands"].get<int>();
  const int height = h["height"].get<int>();
  const int width = h["width"].get<int>();
  check(bands > 0 && height > 0 && width > 0, "bad cube shape in " + path);
  out.data = Tensor<float>(Shape{bands, height, width});
  const std::size_t expect = out.data.numel() * sizeof(float);
  check(fr.payload.size() == expect,
        "cube payload is " + std::to_string(fr.payload.size()) +
            " bytes, header implies " + std::to_string(expect) + " in " +
            path);
  std::memcpy(out.data.data.data(), fr.payload.data(), expect);
  for (const float v : out.data.data)
    check(std::isfinite(v), "non-finite sample in " + path);
  if (h.contains("wavelengths")) {
    out.wavelengths = h["wavelengths"].get<std::vector<double>>();
    check(out.wavelengths.size() == static_cast<std::size_t>(bands),
          "wavelength grid length mismatch in " + path);
    for (std::size_t i = 1; i < out.wavelengths.size(); ++i)
      check(out.wavelengths[i] > out.wavelengths[i - 1],
            "wavelengths not strictly increasing in " + path);
  }
  return out;
}

void save_pgm(const std::string& path, const float* plane, int height,
              int width, double lo, double hi) {
  check(hi > lo, "save_pgm: empty value range");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "cannot open for writing: " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double t =
          (static_cast<double>(plane[static_cast<std::size_t>(y) * width + x]) -
           lo) /
          (hi - lo);
      row[x] = static_cast<std::uint8_t>(
          std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()), width);
  }
  check(f.good(), "write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), "cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  check(f.good(), "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open: " + path);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace hsfuse::io
