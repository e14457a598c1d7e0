#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evego/event_core.hpp"
#include "evego/image_io.hpp"

namespace evego {

// Locally-normalised event surface: two channels (0 = positive, 1 = negative)
// holding the normalised timestamp of the latest event per pixel.
struct LnesFrame {
  SensorGeometry geometry;
  std::vector<float> data;              // (y * width + x) * 2 + channel
  std::vector<std::uint8_t> occupied;   // same layout; 1 where any event landed
  Timestamp window_start = 0;
  Timestamp window_end = 0;

  float at(int x, int y, int channel) const {
    return data[(static_cast<std::size_t>(y) * geometry.width + x) * 2 + channel];
  }
  bool hit(int x, int y, int channel) const {
    return occupied[(static_cast<std::size_t>(y) * geometry.width + x) * 2 + channel] != 0;
  }
};

struct CloudPoint {
  float x = 0, y = 0, t = 0, p = 0, n = 0;
  friend bool operator==(const CloudPoint&, const CloudPoint&) = default;
};

// Fixed-budget cloud: `points.size()` is the budget; the first `validity`
// points are real events in time order, the rest are all-zero padding.
struct EventCloud {
  std::vector<CloudPoint> points;
  std::uint32_t validity = 0;

  std::size_t budget() const { return points.size(); }
  friend bool operator==(const EventCloud&, const EventCloud&) = default;
};

inline constexpr std::size_t kDefaultCloudBudget = 2048;

// t_s / t_l are the first and last event of each window; a window whose
// events share one timestamp maps them all to 1.0.
LnesFrame build_lnes(const EventWindow& window, const SensorGeometry& geometry);
std::vector<LnesFrame> build_lnes(std::span<const EventWindow> windows, const SensorGeometry& geometry,
                                  unsigned threads = 1);

// Uniform sample without replacement when the window holds more than
// `budget` events. Coordinates are normalised by (width-1, height-1) and
// time by the window extent [start_t, end_t).
EventCloud build_cloud(const EventWindow& window, const SensorGeometry& geometry,
                       std::size_t budget = kDefaultCloudBudget, std::uint64_t seed = 0);

// Indices of `count` elements drawn uniformly without replacement from
// [0, population), ascending. Reproducible across platforms for a seed.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed);

// EVCL: "EVCL", u32 N, u32 validity, N x 5 float32, little-endian.
void write_cloud(const std::filesystem::path& path, const EventCloud& cloud);
EventCloud read_cloud(const std::filesystem::path& path);

// Positive channel mapped to [0,255] with round-half-up.
GrayImage render_lnes_image(const LnesFrame& frame);

}  // namespace evego
