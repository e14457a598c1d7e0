#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace evego {

using Timestamp = std::int64_t;  // microseconds

enum class Polarity : std::uint8_t { Negative = 0, Positive = 1 };

struct EventPoint {
  std::int32_t x = 0;
  std::int32_t y = 0;
  Timestamp t = 0;
  Polarity polarity = Polarity::Positive;

  friend bool operator==(const EventPoint&, const EventPoint&) = default;
};

struct SensorGeometry {
  int width = 346;
  int height = 260;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

struct WindowConfig {
  Timestamp window_duration = 33333;  // 30 fps
  int history_length = 3;
};

// Events sorted by t (stable), all inside `geometry`. Only produced by
// validate_stream or by code that upholds the same contract.
class EventStream {
 public:
  EventStream() = default;

  const std::vector<EventPoint>& events() const { return events_; }
  const SensorGeometry& geometry() const { return geometry_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

 private:
  friend EventStream validate_stream(std::vector<EventPoint> events, const SensorGeometry& geometry);
  EventStream(std::vector<EventPoint> events, SensorGeometry geometry)
      : events_(std::move(events)), geometry_(geometry) {}

  std::vector<EventPoint> events_;
  SensorGeometry geometry_;
};

// Half-open [start_t, end_t).
struct EventWindow {
  Timestamp start_t = 0;
  Timestamp end_t = 0;
  std::vector<EventPoint> events;

  Timestamp duration() const { return end_t - start_t; }
  friend bool operator==(const EventWindow&, const EventWindow&) = default;
};

// Throws OutOfBounds(index) / NegativeTimestamp(index) on the first bad event.
EventStream validate_stream(std::vector<EventPoint> events, const SensorGeometry& geometry);

// Tiles [floor(t_first / d) * d, t_last] with windows of exactly d; empty
// windows are kept so window index maps to wall-clock time.
std::vector<EventWindow> partition_windows(const EventStream& stream, const WindowConfig& config);

// Windows [index - T + 1 .. index]; missing leading windows are empty ones
// with the extents they would have had.
std::vector<EventWindow> window_history(std::span<const EventWindow> windows, std::size_t index,
                                        int history_length);

// Concatenation of consecutive windows spanning [front.start_t, back.end_t).
EventWindow merge_windows(std::span<const EventWindow> windows);

// Text format: header `# evego-events v1 width=W height=H`, then `t,x,y,p`.
struct EventTextOptions {
  int negative_code = -1;  // written for negative events; -1 or 0
};

void write_events(std::ostream& out, const EventStream& stream, const EventTextOptions& options = {});
void write_events(const std::filesystem::path& path, const EventStream& stream,
                  const EventTextOptions& options = {});
// Accepts both -1 and 0 as negative polarity.
EventStream read_events(std::istream& in);
EventStream read_events(const std::filesystem::path& path);

}  // namespace evego
