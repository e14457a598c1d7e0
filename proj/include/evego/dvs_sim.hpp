#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "evego/event_core.hpp"
#include "evego/image_io.hpp"

namespace evego {

// Intensity frame in [0,1], row-major.
struct IntensityFrame {
  SensorGeometry geometry;
  std::vector<double> values;

  IntensityFrame() = default;
  explicit IntensityFrame(SensorGeometry g, double fill = 0.0) : geometry(g), values(g.pixel_count(), fill) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * geometry.width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * geometry.width + x]; }
};

// Frame k is stamped at k * frame_period.
struct FrameSequence {
  std::vector<IntensityFrame> frames;
  Timestamp frame_period = 1000;
};

struct DvsConfig {
  double contrast_threshold = 0.15;  // log-intensity step per event
  double log_eps = 1e-3;
  std::uint64_t seed = 0;  // reserved; the threshold model is deterministic
};

// Noise-free threshold model with a per-pixel residual accumulator. Events
// of interval (t_k, t_k+1] are evenly spaced; output is sorted by
// (t, y, x, polarity). Rows are simulated on up to `threads` workers.
EventStream simulate_events(const FrameSequence& frames, const DvsConfig& config, unsigned threads = 1);

IntensityFrame to_intensity(const GrayImage& image);
GrayImage to_gray(const IntensityFrame& frame);

// Directory of `*.pgm` frames (lexicographic order) plus `manifest.txt`
// holding `frame_period_us=N`.
FrameSequence read_frame_directory(const std::filesystem::path& dir);
void write_frame_directory(const std::filesystem::path& dir, const FrameSequence& frames);

}  // namespace evego
