#include "evego/representations.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "evego/errors.hpp"
#include "evego/parallel.hpp"

namespace evego {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (in.gcount() != sizeof v) throw Error(ErrorCode::ParseError, "truncated cloud file " + path.string());
  return v;
}

}  // namespace

LnesFrame build_lnes(const EventWindow& window, const SensorGeometry& geometry) {
  LnesFrame frame;
  frame.geometry = geometry;
  frame.data.assign(geometry.pixel_count() * 2, 0.0f);
  frame.occupied.assign(geometry.pixel_count() * 2, 0);
  frame.window_start = window.start_t;
  frame.window_end = window.end_t;
  if (window.events.empty()) return frame;

  const Timestamp ts = window.events.front().t;
  const Timestamp tl = window.events.back().t;
  const double span = static_cast<double>(tl - ts);
  for (const auto& e : window.events) {
    if (!geometry.contains(e.x, e.y))
      throw Error(ErrorCode::OutOfBounds, "event outside LNES geometry");
    const std::size_t cell =
        (static_cast<std::size_t>(e.y) * geometry.width + e.x) * 2 + (e.polarity == Polarity::Positive ? 0 : 1);
    frame.data[cell] = tl == ts ? 1.0f : static_cast<float>(static_cast<double>(e.t - ts) / span);
    frame.occupied[cell] = 1;
  }
  return frame;
}

std::vector<LnesFrame> build_lnes(std::span<const EventWindow> windows, const SensorGeometry& geometry,
                                  unsigned threads) {
  std::vector<LnesFrame> frames(windows.size());
  parallel_for(windows.size(), threads, [&](std::size_t i) { frames[i] = build_lnes(windows[i], geometry); });
  return frames;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed) {
  count = std::min(count, population);
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

EventCloud build_cloud(const EventWindow& window, const SensorGeometry& geometry, std::size_t budget,
                       std::uint64_t seed) {
  if (budget == 0) throw Error(ErrorCode::ConfigError, "cloud budget must be >= 1");
  EventCloud cloud;
  cloud.points.assign(budget, CloudPoint{});
  const auto& events = window.events;
  const std::size_t keep = std::min(events.size(), budget);
  cloud.validity = static_cast<std::uint32_t>(keep);

  const double sx = geometry.width > 1 ? 1.0 / (geometry.width - 1) : 0.0;
  const double sy = geometry.height > 1 ? 1.0 / (geometry.height - 1) : 0.0;
  const double span = static_cast<double>(window.end_t - window.start_t);
  auto convert = [&](const EventPoint& e) {
    CloudPoint p;
    p.x = static_cast<float>(e.x * sx);
    p.y = static_cast<float>(e.y * sy);
    p.t = span > 0 ? static_cast<float>(std::clamp(static_cast<double>(e.t - window.start_t) / span, 0.0, 1.0))
                   : 0.0f;
    const bool positive = e.polarity == Polarity::Positive;
    p.p = positive ? 1.0f : 0.0f;
    p.n = positive ? 0.0f : 1.0f;
    return p;
  };

  if (events.size() <= budget) {
    for (std::size_t i = 0; i < keep; ++i) cloud.points[i] = convert(events[i]);
  } else {
    const auto chosen = sample_without_replacement(events.size(), budget, seed);
    for (std::size_t i = 0; i < budget; ++i) cloud.points[i] = convert(events[chosen[i]]);
  }
  return cloud;
}

void write_cloud(const std::filesystem::path& path, const EventCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write("EVCL", 4);
  put(out, static_cast<std::uint32_t>(cloud.points.size()));
  put(out, cloud.validity);
  for (const auto& p : cloud.points) {
    const float row[5] = {p.x, p.y, p.t, p.p, p.n};
    out.write(reinterpret_cast<const char*>(row), sizeof row);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

EventCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "EVCL", 4) != 0)
    throw Error(ErrorCode::ParseError, "bad cloud magic in " + path.string());
  const auto n = get<std::uint32_t>(in, path);
  const auto validity = get<std::uint32_t>(in, path);
  if (validity > n) throw Error(ErrorCode::InvariantViolation, "cloud validity exceeds budget");
  EventCloud cloud;
  cloud.validity = validity;
  cloud.points.resize(n);
  for (auto& p : cloud.points) {
    p.x = get<float>(in, path);
    p.y = get<float>(in, path);
    p.t = get<float>(in, path);
    p.p = get<float>(in, path);
    p.n = get<float>(in, path);
  }
  return cloud;
}

GrayImage render_lnes_image(const LnesFrame& frame) {
  GrayImage image(frame.geometry);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double w = std::clamp(static_cast<double>(frame.data[i * 2]), 0.0, 1.0);
    image.pixels[i] = static_cast<std::uint8_t>(std::floor(w * 255.0 + 0.5));
  }
  return image;
}

}  // namespace evego
