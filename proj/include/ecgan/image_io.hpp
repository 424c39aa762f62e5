#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ecgan {

/// 8-bit interleaved (HWC) image.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

/// Binary PGM (P5) and PPM (P6), maxval 255.
Image8 read_pnm(const std::filesystem::path& path);

}  // namespace ecgan
