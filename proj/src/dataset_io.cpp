#include "evego/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "evego/errors.hpp"

namespace evego {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }

Side parse_side(const std::string& s) {
  if (s == "left") return Side::Left;
  if (s == "right") return Side::Right;
  throw Error(ErrorCode::ParseError, "unknown hand side '" + s + "'");
}

void check_split(const std::string& split) {
  if (split != "train" && split != "val" && split != "test")
    throw Error(ErrorCode::ParseError, "unknown split '" + split + "'");
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) throw Error(ErrorCode::ParseError, std::string(what) + " must have " + std::to_string(N) + " values");
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

json params_json(const ManoParams& p) {
  return {{"side", side_name(p.side)}, {"theta", p.theta}, {"beta", p.beta}, {"trans", p.trans}, {"rot", p.rot}};
}

ManoParams params_of(const json& j) {
  ManoParams p;
  p.side = parse_side(j.at("side").get<std::string>());
  p.theta = fixed_array<kPoseCoeffs>(j.at("theta"), "theta");
  p.beta = fixed_array<kShapeCoeffs>(j.at("beta"), "beta");
  p.trans = fixed_array<3>(j.at("trans"), "trans");
  p.rot = fixed_array<3>(j.at("rot"), "rot");
  return p;
}

json pair_json(const HandParamsPair& p) {
  return {{"left", p.left ? params_json(*p.left) : json(nullptr)},
          {"right", p.right ? params_json(*p.right) : json(nullptr)}};
}

HandParamsPair pair_of(const json& j) {
  HandParamsPair p;
  if (!j.at("left").is_null()) p.left = params_of(j.at("left"));
  if (!j.at("right").is_null()) p.right = params_of(j.at("right"));
  if (p.left && p.left->side != Side::Left) throw Error(ErrorCode::SideMismatch, "left entry holds a right hand");
  if (p.right && p.right->side != Side::Right) throw Error(ErrorCode::SideMismatch, "right entry holds a left hand");
  return p;
}

json camera_json(const CameraIntrinsics& c) { return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}}; }

CameraIntrinsics camera_of(const json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
}

template <typename F>
auto parse_guard(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
}

}  // namespace

std::map<std::string, std::size_t> split_counts(const DatasetManifest& manifest) {
  std::map<std::string, std::size_t> counts{{"train", 0}, {"val", 0}, {"test", 0}};
  for (const auto& r : manifest.records) ++counts[r.split];
  return counts;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& r : manifest.records) {
    check_split(r.split);
    if (!ids.insert(r.sample_id).second) throw Error(ErrorCode::InvariantViolation, "duplicate sample_id " + r.sample_id);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const json header = {
      {"format", "evego-manifest"},
      {"version", manifest.version},
      {"geometry", {{"width", manifest.geometry.width}, {"height", manifest.geometry.height}}},
      {"window", {{"duration_us", manifest.window.window_duration}, {"history_length", manifest.window.history_length}}},
      {"split_policy", manifest.split_policy},
      {"split_counts", split_counts(manifest)}};
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) {
    json j = {{"sample_id", r.sample_id},
              {"split", r.split},
              {"event_file", r.event_file},
              {"gt_mask", r.gt_mask},
              {"window_start_us", r.window_start},
              {"camera", camera_json(r.camera)}};
    const json hands = pair_json(r.gt_params);
    j["left"] = hands["left"];
    j["right"] = hands["right"];
    if (r.history_events) j["history_events"] = *r.history_events;
    if (r.in_mask_events) j["in_mask_events"] = *r.in_mask_events;
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  DatasetManifest m;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty manifest");
  parse_guard("manifest header", [&] {
    const json h = json::parse(line);
    if (h.at("format").get<std::string>() != "evego-manifest") throw Error(ErrorCode::ParseError, "not a manifest");
    m.version = h.at("version").get<int>();
    if (m.version != 1) throw Error(ErrorCode::ParseError, "unsupported manifest version");
    m.geometry = {h.at("geometry").at("width").get<int>(), h.at("geometry").at("height").get<int>()};
    m.window.window_duration = h.at("window").at("duration_us").get<Timestamp>();
    m.window.history_length = h.at("window").at("history_length").get<int>();
    m.split_policy = h.at("split_policy").get<std::string>();
    return 0;
  });
  std::set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    SampleRecord r = parse_guard("manifest line " + std::to_string(line_no), [&] {
      const json j = json::parse(line);
      SampleRecord r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.split = j.at("split").get<std::string>();
      r.event_file = j.at("event_file").get<std::string>();
      r.gt_mask = j.at("gt_mask").get<std::string>();
      r.window_start = j.at("window_start_us").get<Timestamp>();
      r.camera = camera_of(j.at("camera"));
      r.gt_params = pair_of(j);
      if (j.contains("history_events")) r.history_events = j.at("history_events").get<std::uint64_t>();
      if (j.contains("in_mask_events")) r.in_mask_events = j.at("in_mask_events").get<std::uint64_t>();
      return r;
    });
    check_split(r.split);
    if (!ids.insert(r.sample_id).second) throw Error(ErrorCode::ParseError, "duplicate sample_id " + r.sample_id);
    m.records.push_back(std::move(r));
  }
  return m;
}

std::string params_to_json(const HandParamsPair& params) { return pair_json(params).dump(2) + "\n"; }

HandParamsPair params_from_json(const std::string& text) {
  return parse_guard("params", [&] { return pair_of(json::parse(text)); });
}

std::vector<EventWindow> history_at(const EventStream& stream, Timestamp window_start, const WindowConfig& config) {
  const auto& ev = stream.events();
  const Timestamp d = config.window_duration;
  std::vector<EventWindow> out;
  for (int k = 0; k < config.history_length; ++k) {
    EventWindow w;
    w.start_t = window_start - static_cast<Timestamp>(config.history_length - 1 - k) * d;
    w.end_t = w.start_t + d;
    auto lo = std::partition_point(ev.begin(), ev.end(), [&](const EventPoint& e) { return e.t < w.start_t; });
    auto hi = std::partition_point(lo, ev.end(), [&](const EventPoint& e) { return e.t < w.end_t; });
    w.events.assign(lo, hi);
    out.push_back(std::move(w));
  }
  return out;
}

SampleLoader::SampleLoader(DatasetManifest manifest, fs::path base_dir, const RigPair* rigs)
    : manifest_(std::move(manifest)), base_dir_(std::move(base_dir)), rigs_(rigs) {}

std::shared_ptr<const EventStream> SampleLoader::events(const std::string& file, std::size_t index) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(file); it != cache_.end()) return it->second;
  }
  const fs::path path = base_dir_ / file;
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, "event file " + path.string(), index);
  auto stream = std::make_shared<const EventStream>(read_events(path));
  if (!(stream->geometry() == manifest_.geometry))
    throw Error(ErrorCode::GeometryMismatch, "event file geometry differs from the manifest");
  std::lock_guard lock(mutex_);
  return cache_.emplace(file, std::move(stream)).first->second;
}

Sample SampleLoader::load(std::size_t index) const {
  if (index >= manifest_.records.size()) throw Error(ErrorCode::IndexOutOfRange, "sample index", index);
  const SampleRecord& r = manifest_.records[index];
  Sample s;
  s.record = &r;
  const auto stream = events(r.event_file, index);
  s.history = history_at(*stream, r.window_start, manifest_.window);
  const fs::path mask_path = base_dir_ / r.gt_mask;
  if (!fs::exists(mask_path))
    throw Error(ErrorCode::MissingFile, "mask of sample " + r.sample_id + ": " + mask_path.string(), index);
  s.gt_mask = load_mask(mask_path, manifest_.geometry);
  s.gt_mask.timestamp = r.window_start + manifest_.window.window_duration;
  auto fill = [&](const std::optional<ManoParams>& p, const HandRig* rig) -> std::optional<HandEstimate> {
    if (!p) return std::nullopt;
    HandEstimate e{*p, {}};
    if (rig) e.output = forward(*rig, *p);
    return e;
  };
  s.gt.left = fill(r.gt_params.left, rigs_ ? &rigs_->left : nullptr);
  s.gt.right = fill(r.gt_params.right, rigs_ ? &rigs_->right : nullptr);
  return s;
}

std::vector<std::size_t> SampleLoader::select(const std::string& split) const {
  if (!split.empty()) check_split(split);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest_.records.size(); ++i)
    if (split.empty() || manifest_.records[i].split == split) out.push_back(i);
  return out;
}

void SampleLoader::for_each(const std::string& split, const std::function<void(const Sample&)>& fn) const {
  for (std::size_t i : select(split)) fn(load(i));
}

void SceneConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (geometry.width < 1 || geometry.height < 1) fail("geometry must be at least 1x1");
  if (window.window_duration <= 0 || window.history_length < 1) fail("invalid window configuration");
  if (frame_period <= 0) fail("frame_period must be positive");
  if (frame_count < 2) fail("frame_count must be >= 2");
  if (static_cast<Timestamp>(frame_count - 1) * frame_period < window.window_duration)
    fail("scene shorter than one window");
  bool seen[2] = {false, false};
  for (const auto& h : hands) {
    auto& s = seen[static_cast<int>(h.side)];
    if (s) fail("at most one hand per side");
    s = true;
    if (h.center[2] <= 0.0) fail("hands must be in front of the camera");
  }
  if (hand_intensity < 0.0 || hand_intensity > 1.0) fail("hand_intensity must be in [0, 1]");
  check_split(split);
}

SyntheticScene generate_synthetic_scene(const SceneConfig& config, const HandRig& right_rig, unsigned threads) {
  config.validate();
  if (right_rig.side != Side::Right) throw Error(ErrorCode::SideMismatch, "scene generator expects the right-hand rig");
  const RigPair rigs = make_rig_pair(right_rig);
  const auto& g = config.geometry;
  const double two_pi = 2.0 * std::numbers::pi;

  std::mt19937_64 rng(config.seed);
  auto phase = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * two_pi; };
  const double bg_phase[2] = {phase(), phase()};
  struct Phases {
    double motion;
    std::array<double, kPoseCoeffs> pose;
  };
  std::vector<Phases> hand_phase;
  for (std::size_t h = 0; h < config.hands.size(); ++h) {
    Phases p{phase(), {}};
    for (double& x : p.pose) x = phase();
    hand_phase.push_back(p);
  }

  SyntheticScene scene;
  scene.config = config;
  scene.frames.frame_period = config.frame_period;
  for (int k = 0; k < config.frame_count; ++k) {
    const Timestamp t = static_cast<Timestamp>(k) * config.frame_period;
    const double ts = static_cast<double>(t) * 1e-6;
    FrameTruth truth;
    truth.t = t;
    truth.mask = HandMask(g);
    truth.mask.timestamp = t;
    for (std::size_t h = 0; h < config.hands.size(); ++h) {
      const HandTrack& track = config.hands[h];
      ManoParams p;
      p.side = track.side;
      for (int c = 0; c < 3; ++c)
        p.trans[c] = track.center[c] + track.amplitude[c] * std::sin(two_pi * track.frequency_hz * ts +
                                                                     hand_phase[h].motion + c * std::numbers::pi / 2);
      for (int i = 0; i < kPoseCoeffs; ++i)
        p.theta[i] = track.pose_amplitude * std::sin(two_pi * track.pose_frequency_hz * ts + hand_phase[h].pose[i]);
      p.beta = track.beta;
      p.rot = track.rot;
      const HandRig& rig = track.side == Side::Left ? rigs.left : rigs.right;
      const HandOutput out = forward(rig, p);
      rasterize_into(truth.mask, out.vertices, rig.faces, config.camera);
      (track.side == Side::Left ? truth.params.left : truth.params.right) = p;
    }

    IntensityFrame frame(g);
    const auto& bg = config.background;
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        const double u = (x - bg.velocity_px_s[0] * ts) / bg.period_px[0];
        const double v = (y - bg.velocity_px_s[1] * ts) / bg.period_px[1];
        frame.at(x, y) = truth.mask.at(x, y)
                             ? config.hand_intensity
                             : bg.mean + bg.contrast * std::sin(two_pi * u + bg_phase[0]) * std::sin(two_pi * v + bg_phase[1]);
      }
    scene.frames.frames.push_back(to_intensity(to_gray(frame)));
    scene.truth.push_back(std::move(truth));
  }

  scene.events = simulate_events(scene.frames, config.dvs, threads);

  auto& m = scene.manifest;
  m.geometry = g;
  m.window = config.window;
  const Timestamp d = config.window.window_duration;
  const Timestamp span = static_cast<Timestamp>(config.frame_count - 1) * config.frame_period;
  const Timestamp windows = span / d;
  const auto& ev = scene.events.events();
  for (Timestamp i = 0; i < windows; ++i) {
    const Timestamp start = i * d;
    const auto k = std::min<std::size_t>(static_cast<std::size_t>((start + d - 1) / config.frame_period),
                                         scene.truth.size() - 1);
    const FrameTruth& truth = scene.truth[k];
    HandMask mask = truth.mask;
    mask.timestamp = start + d;

    SampleRecord r;
    char name[64];
    std::snprintf(name, sizeof name, "%s_%05lld", config.id_prefix.c_str(), static_cast<long long>(i));
    r.sample_id = name;
    r.split = config.split;
    r.event_file = "events.txt";
    std::snprintf(name, sizeof name, "masks/mask_%05lld.pgm", static_cast<long long>(i));
    r.gt_mask = name;
    r.window_start = start;
    r.gt_params = truth.params;
    r.camera = config.camera;
    std::uint64_t total = 0, inside = 0;
    const Timestamp from = start - static_cast<Timestamp>(config.window.history_length - 1) * d;
    for (const auto& e : ev) {
      if (e.t < from || e.t >= start + d) continue;
      ++total;
      if (mask.data[static_cast<std::size_t>(e.y) * g.width + e.x]) ++inside;
    }
    r.history_events = total;
    r.in_mask_events = inside;
    m.records.push_back(std::move(r));
    scene.sample_masks.push_back(std::move(mask));
  }
  return scene;
}

void write_scene(const fs::path& dir, const SyntheticScene& scene) {
  std::error_code ec;
  fs::create_directories(dir / "masks", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + (dir / "masks").string());
  write_events(dir / "events.txt", scene.events);
  write_frame_directory(dir / "frames", scene.frames);
  for (std::size_t i = 0; i < scene.manifest.records.size(); ++i)
    save_mask(dir / scene.manifest.records[i].gt_mask, scene.sample_masks[i]);
  save_manifest(dir / "manifest.jsonl", scene.manifest);
}

SceneConfig scene_preset(const std::string& name) {
  SceneConfig c;
  HandTrack left;
  left.side = Side::Left;
  left.center = {-0.12, 0.0, 1.25};
  left.amplitude = {0.04, 0.03, 0.0};
  left.pose_amplitude = 0.3;
  HandTrack right = left;
  right.side = Side::Right;
  right.center = {0.12, 0.0, 1.25};
  if (name == "egocentric") {
    c.hands = {left, right};
    c.background.velocity_px_s = {60.0, 18.0};
  } else if (name == "demo") {
    c.geometry = {96, 72};
    c.camera = {83.0, 83.0, 47.5, 35.5};
    c.frame_count = 12;
    c.hands = {left, right};
    c.background.velocity_px_s = {20.0, 6.0};
    c.background.period_px = {11.0, 13.0};
    c.id_prefix = "demo";
    c.split = "test";
  } else if (name == "static-hand") {
    right.amplitude = {0.0, 0.0, 0.0};
    right.pose_amplitude = 0.0;
    c.hands = {right};
    c.background.velocity_px_s = {60.0, 18.0};
  } else if (name == "static-background") {
    c.hands = {right};
  } else {
    throw Error(ErrorCode::ConfigError, "unknown scene preset '" + name + "'");
  }
  return c;
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SceneConfig scene_config_from_json(const std::string& text) {
  return parse_guard("scene config", [&] {
    const json j = json::parse(text);
    SceneConfig c;
    if (j.contains("geometry")) c.geometry = {j["geometry"].at("width").get<int>(), j["geometry"].at("height").get<int>()};
    if (j.contains("camera")) c.camera = camera_of(j["camera"]);
    if (j.contains("window")) {
      read_opt(j["window"], "duration_us", c.window.window_duration);
      read_opt(j["window"], "history_length", c.window.history_length);
    }
    read_opt(j, "frame_period_us", c.frame_period);
    read_opt(j, "frame_count", c.frame_count);
    read_opt(j, "hand_intensity", c.hand_intensity);
    read_opt(j, "split", c.split);
    read_opt(j, "id_prefix", c.id_prefix);
    read_opt(j, "seed", c.seed);
    read_opt(j, "contrast_threshold", c.dvs.contrast_threshold);
    if (j.contains("background")) {
      const json& b = j["background"];
      read_opt(b, "velocity_px_s", c.background.velocity_px_s);
      read_opt(b, "mean", c.background.mean);
      read_opt(b, "contrast", c.background.contrast);
      read_opt(b, "period_px", c.background.period_px);
    }
    if (j.contains("hands")) {
      for (const json& h : j["hands"]) {
        HandTrack t;
        t.side = parse_side(h.at("side").get<std::string>());
        read_opt(h, "center", t.center);
        read_opt(h, "amplitude", t.amplitude);
        read_opt(h, "frequency_hz", t.frequency_hz);
        read_opt(h, "pose_amplitude", t.pose_amplitude);
        read_opt(h, "pose_frequency_hz", t.pose_frequency_hz);
        read_opt(h, "rot", t.rot);
        read_opt(h, "beta", t.beta);
        c.hands.push_back(t);
      }
    }
    c.validate();
    return c;
  });
}

std::string scene_config_to_json(const SceneConfig& c) {
  json hands = json::array();
  for (const auto& h : c.hands)
    hands.push_back({{"side", side_name(h.side)},
                     {"center", h.center},
                     {"amplitude", h.amplitude},
                     {"frequency_hz", h.frequency_hz},
                     {"pose_amplitude", h.pose_amplitude},
                     {"pose_frequency_hz", h.pose_frequency_hz},
                     {"rot", h.rot},
                     {"beta", h.beta}});
  const json j = {{"geometry", {{"width", c.geometry.width}, {"height", c.geometry.height}}},
                  {"camera", camera_json(c.camera)},
                  {"window", {{"duration_us", c.window.window_duration}, {"history_length", c.window.history_length}}},
                  {"frame_period_us", c.frame_period},
                  {"frame_count", c.frame_count},
                  {"hand_intensity", c.hand_intensity},
                  {"split", c.split},
                  {"id_prefix", c.id_prefix},
                  {"seed", c.seed},
                  {"contrast_threshold", c.dvs.contrast_threshold},
                  {"background",
                   {{"velocity_px_s", c.background.velocity_px_s},
                    {"mean", c.background.mean},
                    {"contrast", c.background.contrast},
                    {"period_px", c.background.period_px}}},
                  {"hands", hands}};
  return j.dump(2) + "\n";
}

}  // namespace evego
