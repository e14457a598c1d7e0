#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evego/event_core.hpp"
#include "evego/representations.hpp"

namespace evego {

struct HandMask {
  SensorGeometry geometry;
  std::vector<std::uint8_t> data;  // 0/1, row-major
  Timestamp timestamp = 0;

  HandMask() = default;
  explicit HandMask(SensorGeometry g, std::uint8_t fill = 0) : geometry(g), data(g.pixel_count(), fill) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * geometry.width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * geometry.width + x]; }
  std::size_t area() const;
  friend bool operator==(const HandMask&, const HandMask&) = default;
};

// Maps T consecutive LNES frames to one mask for the latest frame.
class MaskPredictor {
 public:
  virtual ~MaskPredictor() = default;
  virtual HandMask predict(std::span<const LnesFrame> frames) const = 0;
};

struct DensityParams {
  int blur_radius = 3;
  double density_threshold = 0.25;  // fraction of the peak blurred density
  std::size_t min_component_area = 50;
  std::size_t max_components = 2;
};

// Event-presence density heuristic: accumulate, box blur, threshold, keep
// the largest 4-connected components.
class DensityMaskPredictor final : public MaskPredictor {
 public:
  explicit DensityMaskPredictor(DensityParams params = {}) : params_(params) {}
  HandMask predict(std::span<const LnesFrame> frames) const override;
  const DensityParams& params() const { return params_; }

 private:
  DensityParams params_;
};

// Returns a fixed mask (ground truth or an external network's output),
// re-stamped with the latest frame's window end.
class FixedMaskPredictor final : public MaskPredictor {
 public:
  explicit FixedMaskPredictor(HandMask mask) : mask_(std::move(mask)) {}
  HandMask predict(std::span<const LnesFrame> frames) const override;

 private:
  HandMask mask_;
};

HandMask predict_mask_density(std::span<const LnesFrame> frames, const DensityParams& params);

// PGM P5; any nonzero pixel reads as 1. Saved masks use 0/255.
void save_mask(const std::filesystem::path& path, const HandMask& mask);
HandMask load_mask(const std::filesystem::path& path);
HandMask load_mask(const std::filesystem::path& path, const SensorGeometry& expected);

struct FilterResult {
  EventCloud cloud;
  std::size_t survivors = 0;     // events on mask-1 pixels before subsampling
  std::size_t total_events = 0;  // events across all windows
};

// Concatenates the windows, keeps events on mask-1 pixels (tested on the
// integer event coordinates) and builds one cloud normalised over the whole
// history span.
FilterResult filter_cloud(std::span<const EventWindow> windows, const HandMask& mask,
                          const SensorGeometry& geometry, std::size_t budget = kDefaultCloudBudget,
                          std::uint64_t seed = 0);

// |a & b| / |a | b|; two empty masks score 1.
double iou(const HandMask& pred, const HandMask& gt);

}  // namespace evego
