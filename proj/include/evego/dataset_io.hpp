#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evego/dvs_sim.hpp"
#include "evego/event_core.hpp"
#include "evego/losses.hpp"
#include "evego/mano_rig.hpp"
#include "evego/segmask.hpp"

namespace evego {

struct HandParamsPair {
  std::optional<ManoParams> left;
  std::optional<ManoParams> right;
  friend bool operator==(const HandParamsPair&, const HandParamsPair&) = default;
};

struct SampleRecord {
  std::string sample_id;
  std::string split = "train";  // train | val | test
  std::string event_file;       // relative to the manifest directory
  std::string gt_mask;
  Timestamp window_start = 0;   // start of the latest window of the history
  HandParamsPair gt_params;
  CameraIntrinsics camera;
  // Oracle counts written by the generator: events in the history windows
  // and those landing on mask-1 pixels.
  std::optional<std::uint64_t> history_events;
  std::optional<std::uint64_t> in_mask_events;
  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct DatasetManifest {
  int version = 1;
  SensorGeometry geometry;
  WindowConfig window;
  std::string split_policy = "by-scene";
  std::vector<SampleRecord> records;
  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.version == b.version && a.geometry == b.geometry && a.window.window_duration == b.window.window_duration &&
           a.window.history_length == b.window.history_length && a.split_policy == b.split_policy &&
           a.records == b.records;
  }
};

// JSONL: one header object, then one object per record. Absent hands are
// explicit nulls.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);
std::map<std::string, std::size_t> split_counts(const DatasetManifest& manifest);

// Parameter JSON used by the CLI: {"left": {...} | null, "right": {...} | null}.
std::string params_to_json(const HandParamsPair& params);
HandParamsPair params_from_json(const std::string& text);

struct Sample {
  const SampleRecord* record = nullptr;
  std::vector<EventWindow> history;  // T windows, oldest first
  HandMask gt_mask;
  TwoHands gt;  // outputs filled when rigs were supplied
};

// Windows [start - (T-1) d, start + d) cut from a validated stream; windows
// before the first event are empty.
std::vector<EventWindow> history_at(const EventStream& stream, Timestamp window_start, const WindowConfig& config);

// Reads samples relative to the manifest directory. Event files are parsed
// once and shared; safe to call from several threads.
class SampleLoader {
 public:
  SampleLoader(DatasetManifest manifest, std::filesystem::path base_dir, const RigPair* rigs = nullptr);

  const DatasetManifest& manifest() const { return manifest_; }
  // Throws MissingFile (with the record index) when a referenced file is gone.
  Sample load(std::size_t index) const;
  // Records of `split` in manifest order; an empty split selects all.
  std::vector<std::size_t> select(const std::string& split) const;
  void for_each(const std::string& split, const std::function<void(const Sample&)>& fn) const;

 private:
  std::shared_ptr<const EventStream> events(const std::string& file, std::size_t index) const;

  DatasetManifest manifest_;
  std::filesystem::path base_dir_;
  const RigPair* rigs_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const EventStream>> cache_;
};

struct HandTrack {
  Side side = Side::Right;
  std::array<double, 3> center{0.0, 0.0, 1.0};     // meters, camera frame
  std::array<double, 3> amplitude{0.0, 0.0, 0.0};  // meters
  double frequency_hz = 1.5;
  double pose_amplitude = 0.0;  // radians on every pose coefficient
  double pose_frequency_hz = 1.0;
  std::array<double, 3> rot{0.0, 0.0, 0.0};
  std::array<double, kShapeCoeffs> beta{};
};

struct BackgroundSpec {
  std::array<double, 2> velocity_px_s{0.0, 0.0};
  double mean = 0.5;
  double contrast = 0.35;
  std::array<double, 2> period_px{23.0, 31.0};
};

struct SceneConfig {
  SensorGeometry geometry;
  CameraIntrinsics camera;
  WindowConfig window;
  Timestamp frame_period = 8333;
  int frame_count = 40;
  std::vector<HandTrack> hands;
  BackgroundSpec background;
  double hand_intensity = 0.9;
  std::string split = "train";
  std::string id_prefix = "scene";
  std::uint64_t seed = 0;  // phases of the background and hand motion
  DvsConfig dvs;

  void validate() const;
};

struct FrameTruth {
  Timestamp t = 0;
  HandParamsPair params;
  HandMask mask;
};

struct SyntheticScene {
  SceneConfig config;
  FrameSequence frames;  // 8-bit quantised so the saved PGMs reproduce them
  std::vector<FrameTruth> truth;
  EventStream events;
  DatasetManifest manifest;
  std::vector<HandMask> sample_masks;  // one per manifest record
};

// Renders the rigs over the moving background, simulates events and emits
// one record per window. `right_rig` is mirrored for left hands.
SyntheticScene generate_synthetic_scene(const SceneConfig& config, const HandRig& right_rig, unsigned threads = 1);

// Writes scene/{events.txt, frames/*.pgm, masks/*.pgm, manifest.jsonl}.
void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene);

// Named configurations: "egocentric" (full sensor, two moving hands over a
// panning background), "demo" (small sensor, used by the golden fixture),
// "static-hand" and "static-background" (single-motion variants).
SceneConfig scene_preset(const std::string& name);

SceneConfig scene_config_from_json(const std::string& text);
std::string scene_config_to_json(const SceneConfig& config);

}  // namespace evego
