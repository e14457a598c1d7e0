#include "evego/segmask.hpp"

#include <algorithm>
#include <numeric>

#include "evego/errors.hpp"
#include "evego/image_io.hpp"

namespace evego {

std::size_t HandMask::area() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

namespace {

// Separable box sum, clipped at the borders.
std::vector<double> box_sum(const std::vector<double>& in, const SensorGeometry& g, int r) {
  if (r <= 0) return in;
  const int W = g.width, H = g.height;
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int dx = std::max(0, x - r); dx <= std::min(W - 1, x + r); ++dx) s += in[static_cast<std::size_t>(y) * W + dx];
      tmp[static_cast<std::size_t>(y) * W + x] = s;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double s = 0;
      for (int dy = std::max(0, y - r); dy <= std::min(H - 1, y + r); ++dy) s += tmp[static_cast<std::size_t>(dy) * W + x];
      out[static_cast<std::size_t>(y) * W + x] = s;
    }
  return out;
}

}  // namespace

HandMask predict_mask_density(std::span<const LnesFrame> frames, const DensityParams& params) {
  if (frames.empty()) throw Error(ErrorCode::ConfigError, "mask prediction needs at least one frame");
  const SensorGeometry g = frames.front().geometry;
  for (const auto& f : frames)
    if (f.geometry != g) throw Error(ErrorCode::GeometryMismatch, "LNES frames differ in geometry");

  HandMask mask(g);
  mask.timestamp = frames.back().window_end;
  std::vector<double> presence(g.pixel_count(), 0.0);
  for (const auto& f : frames)
    for (std::size_t i = 0; i < presence.size(); ++i) presence[i] += f.occupied[2 * i] + f.occupied[2 * i + 1];

  const auto density = box_sum(presence, g, params.blur_radius);
  const double peak = *std::max_element(density.begin(), density.end());
  if (peak <= 0.0) return mask;
  const double cut = params.density_threshold * peak;

  std::vector<std::uint8_t> on(g.pixel_count(), 0);
  for (std::size_t i = 0; i < on.size(); ++i) on[i] = density[i] > 0.0 && density[i] >= cut;

  // 4-connected labelling in scan order.
  std::vector<int> label(on.size(), -1);
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < on.size(); ++seed) {
    if (!on[seed] || label[seed] >= 0) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    stack.assign(1, seed);
    label[seed] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      components.back().push_back(i);
      const int x = static_cast<int>(i % g.width), y = static_cast<int>(i / g.width);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (!g.contains(nx[k], ny[k])) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * g.width + nx[k];
        if (on[j] && label[j] < 0) {
          label[j] = id;
          stack.push_back(j);
        }
      }
    }
  }

  std::vector<std::size_t> order(components.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return components[a].size() > components[b].size(); });
  std::size_t kept = 0;
  for (std::size_t c : order) {
    if (kept >= params.max_components || components[c].size() < params.min_component_area) break;
    for (std::size_t i : components[c]) mask.data[i] = 1;
    ++kept;
  }
  return mask;
}

HandMask DensityMaskPredictor::predict(std::span<const LnesFrame> frames) const {
  return predict_mask_density(frames, params_);
}

HandMask FixedMaskPredictor::predict(std::span<const LnesFrame> frames) const {
  HandMask out = mask_;
  if (!frames.empty()) {
    if (frames.back().geometry != mask_.geometry)
      throw Error(ErrorCode::GeometryMismatch, "fixed mask does not match LNES geometry");
    out.timestamp = frames.back().window_end;
  }
  return out;
}

void save_mask(const std::filesystem::path& path, const HandMask& mask) {
  GrayImage image(mask.geometry);
  for (std::size_t i = 0; i < mask.data.size(); ++i) image.pixels[i] = mask.data[i] ? 255 : 0;
  write_pgm(path, image);
}

HandMask load_mask(const std::filesystem::path& path) {
  const GrayImage image = read_pgm(path);
  HandMask mask(image.geometry);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) mask.data[i] = image.pixels[i] != 0;
  return mask;
}

HandMask load_mask(const std::filesystem::path& path, const SensorGeometry& expected) {
  HandMask mask = load_mask(path);
  if (mask.geometry != expected)
    throw Error(ErrorCode::GeometryMismatch,
                path.string() + " is " + std::to_string(mask.geometry.width) + "x" +
                    std::to_string(mask.geometry.height));
  return mask;
}

FilterResult filter_cloud(std::span<const EventWindow> windows, const HandMask& mask,
                          const SensorGeometry& geometry, std::size_t budget, std::uint64_t seed) {
  if (mask.geometry != geometry) throw Error(ErrorCode::GeometryMismatch, "mask geometry differs from sensor");
  EventWindow merged = merge_windows(windows);
  FilterResult result;
  result.total_events = merged.events.size();
  std::erase_if(merged.events, [&](const EventPoint& e) { return mask.at(e.x, e.y) == 0; });
  result.survivors = merged.events.size();
  result.cloud = build_cloud(merged, geometry, budget, seed);
  return result;
}

double iou(const HandMask& pred, const HandMask& gt) {
  if (pred.geometry != gt.geometry) throw Error(ErrorCode::GeometryMismatch, "IoU of masks with different sizes");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] && gt.data[i];
    uni += pred.data[i] || gt.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace evego
