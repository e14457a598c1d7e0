#include "evego/event_core.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include "evego/errors.hpp"

namespace evego {

namespace {

Timestamp floor_to_multiple(Timestamp t, Timestamp d) {
  Timestamp q = t / d;
  if (t % d != 0 && t < 0) --q;
  return q * d;
}

template <typename T>
bool parse_int(std::string_view text, T& value) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

EventStream validate_stream(std::vector<EventPoint> events, const SensorGeometry& geometry) {
  if (geometry.width < 1 || geometry.height < 1)
    throw Error(ErrorCode::InvariantViolation, "sensor geometry must be at least 1x1");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!geometry.contains(e.x, e.y))
      throw Error(ErrorCode::OutOfBounds,
                  "event " + std::to_string(i) + " at (" + std::to_string(e.x) + "," + std::to_string(e.y) + ")",
                  i);
    if (e.t < 0) throw Error(ErrorCode::NegativeTimestamp, "event " + std::to_string(i), i);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; });
  return EventStream(std::move(events), geometry);
}

std::vector<EventWindow> partition_windows(const EventStream& stream, const WindowConfig& config) {
  if (config.window_duration <= 0)
    throw Error(ErrorCode::ConfigError, "window_duration must be positive");
  std::vector<EventWindow> windows;
  const auto& events = stream.events();
  if (events.empty()) return windows;

  const Timestamp d = config.window_duration;
  const Timestamp origin = floor_to_multiple(events.front().t, d);
  const auto count = static_cast<std::size_t>((events.back().t - origin) / d) + 1;
  windows.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    windows[i].start_t = origin + static_cast<Timestamp>(i) * d;
    windows[i].end_t = windows[i].start_t + d;
  }
  for (const auto& e : events) windows[static_cast<std::size_t>((e.t - origin) / d)].events.push_back(e);
  return windows;
}

std::vector<EventWindow> window_history(std::span<const EventWindow> windows, std::size_t index,
                                        int history_length) {
  if (history_length < 1) throw Error(ErrorCode::ConfigError, "history length must be >= 1");
  if (index >= windows.size())
    throw Error(ErrorCode::IndexOutOfRange,
                "window " + std::to_string(index) + " of " + std::to_string(windows.size()), index);
  const auto T = static_cast<std::size_t>(history_length);
  std::vector<EventWindow> history;
  history.reserve(T);
  const Timestamp d = windows[index].duration();
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t back = T - 1 - k;  // distance from `index`
    if (back <= index) {
      history.push_back(windows[index - back]);
    } else {
      EventWindow pad;
      pad.start_t = windows[index].start_t - static_cast<Timestamp>(back) * d;
      pad.end_t = pad.start_t + d;
      history.push_back(std::move(pad));
    }
  }
  return history;
}

EventWindow merge_windows(std::span<const EventWindow> windows) {
  EventWindow merged;
  if (windows.empty()) return merged;
  merged.start_t = windows.front().start_t;
  merged.end_t = windows.back().end_t;
  std::size_t total = 0;
  for (const auto& w : windows) total += w.events.size();
  merged.events.reserve(total);
  for (const auto& w : windows) merged.events.insert(merged.events.end(), w.events.begin(), w.events.end());
  return merged;
}

void write_events(std::ostream& out, const EventStream& stream, const EventTextOptions& options) {
  if (options.negative_code != -1 && options.negative_code != 0)
    throw Error(ErrorCode::ConfigError, "negative polarity code must be -1 or 0");
  out << "# evego-events v1 width=" << stream.geometry().width << " height=" << stream.geometry().height
      << '\n';
  std::string line;
  for (const auto& e : stream.events()) {
    line.clear();
    line += std::to_string(e.t);
    line += ',';
    line += std::to_string(e.x);
    line += ',';
    line += std::to_string(e.y);
    line += ',';
    line += e.polarity == Polarity::Positive ? "1" : (options.negative_code == 0 ? "0" : "-1");
    line += '\n';
    out << line;
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing events");
}

void write_events(const std::filesystem::path& path, const EventStream& stream, const EventTextOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  write_events(out, stream, options);
}

EventStream read_events(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing event header");
  SensorGeometry geometry;
  {
    std::istringstream header(line);
    std::string hash, magic, version, w, h;
    header >> hash >> magic >> version >> w >> h;
    if (hash != "#" || magic != "evego-events" || version != "v1" || w.rfind("width=", 0) != 0 ||
        h.rfind("height=", 0) != 0 || !parse_int(std::string_view(w).substr(6), geometry.width) ||
        !parse_int(std::string_view(h).substr(7), geometry.height))
      throw Error(ErrorCode::ParseError, "bad event header: " + line);
  }
  std::vector<EventPoint> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::string_view rest(line);
    std::string_view fields[4];
    for (int f = 0; f < 4; ++f) {
      auto comma = rest.find(',');
      if ((f < 3) != (comma != std::string_view::npos))
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected t,x,y,p");
      fields[f] = rest.substr(0, comma);
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
    EventPoint e;
    int p = 0;
    if (!parse_int(fields[0], e.t) || !parse_int(fields[1], e.x) || !parse_int(fields[2], e.y) ||
        !parse_int(fields[3], p) || (p != 1 && p != 0 && p != -1))
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + line);
    e.polarity = p == 1 ? Polarity::Positive : Polarity::Negative;
    events.push_back(e);
  }
  return validate_stream(std::move(events), geometry);
}

EventStream read_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return read_events(in);
}

}  // namespace evego
