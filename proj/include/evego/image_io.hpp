#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "evego/event_core.hpp"

namespace evego {

// 8-bit grayscale raster, row-major.
struct GrayImage {
  SensorGeometry geometry;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  explicit GrayImage(SensorGeometry g, std::uint8_t fill = 0) : geometry(g), pixels(g.pixel_count(), fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * geometry.width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * geometry.width + x]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace evego
