#include "evego/dvs_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <tuple>

#include "evego/errors.hpp"
#include "evego/parallel.hpp"

namespace evego {

EventStream simulate_events(const FrameSequence& sequence, const DvsConfig& config, unsigned threads) {
  if (!(config.contrast_threshold > 0.0)) throw Error(ErrorCode::ConfigError, "contrast threshold must be > 0");
  if (!(config.log_eps > 0.0)) throw Error(ErrorCode::ConfigError, "log_eps must be > 0");
  if (sequence.frame_period <= 0) throw Error(ErrorCode::ConfigError, "frame period must be > 0");
  const auto& frames = sequence.frames;
  if (frames.size() < 2) throw Error(ErrorCode::ConfigError, "need at least two frames");
  const SensorGeometry g = frames.front().geometry;
  for (std::size_t k = 0; k < frames.size(); ++k)
    if (frames[k].geometry != g || frames[k].values.size() != g.pixel_count())
      throw Error(ErrorCode::GeometryMismatch, "frame " + std::to_string(k) + " differs in size", k);

  const double C = config.contrast_threshold;
  const Timestamp period = sequence.frame_period;
  std::vector<std::vector<EventPoint>> rows(static_cast<std::size_t>(g.height));

  parallel_for(rows.size(), threads, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    auto& out = rows[row];
    for (int x = 0; x < g.width; ++x) {
      double ref = std::log(frames[0].at(x, y) + config.log_eps);
      for (std::size_t k = 1; k < frames.size(); ++k) {
        const double level = std::log(frames[k].at(x, y) + config.log_eps);
        const double delta = level - ref;
        const auto n = static_cast<std::int64_t>(std::floor(std::abs(delta) / C));
        if (n == 0) continue;
        const Polarity p = delta > 0 ? Polarity::Positive : Polarity::Negative;
        const Timestamp t0 = static_cast<Timestamp>(k - 1) * period;
        for (std::int64_t j = 1; j <= n; ++j) out.push_back({x, y, t0 + (j * period) / n, p});
        ref += (delta > 0 ? C : -C) * static_cast<double>(n);
      }
    }
  });

  std::vector<EventPoint> events;
  std::size_t total = 0;
  for (const auto& r : rows) total += r.size();
  events.reserve(total);
  for (auto& r : rows) events.insert(events.end(), r.begin(), r.end());
  std::sort(events.begin(), events.end(), [](const EventPoint& a, const EventPoint& b) {
    return std::tie(a.t, a.y, a.x, a.polarity) < std::tie(b.t, b.y, b.x, b.polarity);
  });
  return validate_stream(std::move(events), g);
}

IntensityFrame to_intensity(const GrayImage& image) {
  IntensityFrame frame(image.geometry);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) frame.values[i] = image.pixels[i] / 255.0;
  return frame;
}

GrayImage to_gray(const IntensityFrame& frame) {
  GrayImage image(frame.geometry);
  for (std::size_t i = 0; i < frame.values.size(); ++i)
    image.pixels[i] = static_cast<std::uint8_t>(std::floor(std::clamp(frame.values[i], 0.0, 1.0) * 255.0 + 0.5));
  return image;
}

FrameSequence read_frame_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw Error(ErrorCode::MissingFile, "no manifest.txt in " + dir.string());
  FrameSequence seq;
  std::string line;
  bool found = false;
  while (std::getline(manifest, line)) {
    if (line.rfind("frame_period_us=", 0) == 0) {
      try {
        seq.frame_period = std::stoll(line.substr(16));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad frame_period_us line: " + line);
      }
      found = true;
    }
  }
  if (!found || seq.frame_period <= 0) throw Error(ErrorCode::ParseError, "manifest lacks frame_period_us");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) seq.frames.push_back(to_intensity(read_pgm(f)));
  return seq;
}

void write_frame_directory(const std::filesystem::path& dir, const FrameSequence& frames) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest in " + dir.string());
    manifest << "frame_period_us=" << frames.frame_period << '\n';
  }
  for (std::size_t k = 0; k < frames.frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.pgm", k);
    write_pgm(dir / name, to_gray(frames.frames[k]));
  }
}

}  // namespace evego
