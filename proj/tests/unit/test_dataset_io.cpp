#include <algorithm>
#include <fstream>

#include "evego/dataset_io.hpp"
#include "support.hpp"

using namespace evego;

namespace {

const HandRig& rig() {
  static const HandRig r = make_synthetic_rig();
  return r;
}

SceneConfig tiny(const std::string& preset, int frames = 10) {
  auto c = scene_preset(preset);
  c.geometry = {96, 72};
  c.camera = {83.0, 83.0, 47.5, 35.5};
  c.frame_count = frames;
  return c;
}

HandMask dilate(const HandMask& m, int radius) {
  HandMask out(m.geometry);
  for (int y = 0; y < m.geometry.height; ++y)
    for (int x = 0; x < m.geometry.width; ++x) {
      if (!m.at(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int u = x + dx, v = y + dy;
          if (u >= 0 && v >= 0 && u < m.geometry.width && v < m.geometry.height) out.at(u, v) = 1;
        }
    }
  return out;
}

// Events emitted between frames k-1 and k carry t in ((k-1)P, kP]; count
// those landing on the (dilated) hand mask of either frame.
double share_in_mask(const SyntheticScene& s, int radius) {
  std::vector<HandMask> masks;
  for (const auto& f : s.truth) masks.push_back(dilate(f.mask, radius));
  const Timestamp period = s.config.frame_period;
  std::size_t inside = 0;
  for (const auto& e : s.events.events()) {
    const auto k = static_cast<std::size_t>((e.t + period - 1) / period);
    inside += masks[k].at(e.x, e.y) || masks[k - 1].at(e.x, e.y);
  }
  return static_cast<double>(inside) / static_cast<double>(s.events.size());
}

}  // namespace

TEST_CASE("static hand on a static background yields no events") {
  auto c = tiny("static-hand");
  c.background.velocity_px_s = {0.0, 0.0};
  const auto s = generate_synthetic_scene(c, rig());
  CHECK(s.events.empty());
}

TEST_CASE("a moving hand over a static background fires inside its mask") {
  const auto s = generate_synthetic_scene(tiny("static-background", 20), rig());
  REQUIRE(s.events.size() > 100);
  CHECK(share_in_mask(s, 2) >= 0.95);
}

TEST_CASE("a static hand over a moving background fires outside its mask") {
  const auto s = generate_synthetic_scene(tiny("static-hand", 20), rig());
  REQUIRE(s.events.size() > 1000);
  CHECK(share_in_mask(s, 0) < 0.05);
}

TEST_CASE("generator is deterministic and thread independent") {
  const auto c = tiny("demo");
  const auto a = generate_synthetic_scene(c, rig(), 1);
  const auto b = generate_synthetic_scene(c, rig(), 4);
  CHECK(a.events.events() == b.events.events());
  CHECK(a.manifest == b.manifest);
  auto other = c;
  other.seed = 5;
  CHECK(generate_synthetic_scene(other, rig()).events.events() != a.events.events());
}

TEST_CASE("record counts agree with a direct count over the history") {
  const auto c = tiny("demo");
  const auto s = generate_synthetic_scene(c, rig());
  REQUIRE(!s.manifest.records.empty());
  for (std::size_t i = 0; i < s.manifest.records.size(); ++i) {
    const auto& r = s.manifest.records[i];
    const Timestamp lo = r.window_start - (static_cast<Timestamp>(c.window.history_length) - 1) * c.window.window_duration;
    const Timestamp hi = r.window_start + c.window.window_duration;
    std::uint64_t total = 0, inside = 0;
    for (const auto& e : s.events.events())
      if (e.t >= lo && e.t < hi) {
        ++total;
        inside += s.sample_masks[i].at(e.x, e.y);
      }
    CHECK(r.history_events == total);
    CHECK(r.in_mask_events == inside);
    std::uint64_t via_history = 0;
    for (const auto& w : history_at(s.events, r.window_start, c.window)) via_history += w.events.size();
    CHECK(via_history == total);
  }
}

TEST_CASE("history_at returns T windows, oldest first, including before the stream") {
  const auto s = generate_synthetic_scene(tiny("demo"), rig());
  WindowConfig w;
  const auto h = history_at(s.events, 0, w);
  REQUIRE(h.size() == w.history_length);
  for (std::size_t i = 0; i + 1 < h.size(); ++i) {
    CHECK(h[i].end_t == h[i + 1].start_t);
    CHECK(h[i].events.empty());
  }
  CHECK(h.back().start_t == 0);
}

TEST_CASE("manifest round trip") {
  const auto dir = testing::scratch_dir("manifest");
  const auto s = generate_synthetic_scene(tiny("demo"), rig());
  DatasetManifest m = s.manifest;
  m.records[0].gt_params.left.reset();
  m.records[0].history_events.reset();
  save_manifest(dir / "m.jsonl", m);
  CHECK(load_manifest(dir / "m.jsonl") == m);
  CHECK(split_counts(m).at("test") == m.records.size());

  HandParamsPair p = m.records[1].gt_params;
  CHECK(params_from_json(params_to_json(p)) == p);

  auto dup = m;
  dup.records.push_back(dup.records[0]);
  CHECK_ERROR_CODE(save_manifest(dir / "d.jsonl", dup), ErrorCode::InvariantViolation);
  auto split = m;
  split.records[0].split = "holdout";
  CHECK_ERROR_CODE(save_manifest(dir / "s.jsonl", split), ErrorCode::ParseError);
  std::ofstream(dir / "bad.jsonl") << "{\"format\": \"evego-manifest\"\n";
  CHECK_ERROR_CODE(load_manifest(dir / "bad.jsonl"), ErrorCode::ParseError);
  CHECK_ERROR_CODE(load_manifest(dir / "none.jsonl"), ErrorCode::MissingFile);
}

TEST_CASE("written scene loads back through the sample loader") {
  const auto dir = testing::scratch_dir("scene");
  auto c = tiny("demo", 16);
  c.split = "val";
  const auto s = generate_synthetic_scene(c, rig());
  write_scene(dir, s);
  const auto rigs = make_rig_pair(rig());
  const SampleLoader loader(load_manifest(dir / "manifest.jsonl"), dir, &rigs);
  CHECK(loader.select("val").size() == s.manifest.records.size());
  CHECK(loader.select("train").empty());
  for (std::size_t i = 0; i < s.manifest.records.size(); ++i) {
    const auto sample = loader.load(i);
    CHECK(sample.gt_mask.data == s.sample_masks[i].data);
    CHECK(sample.history.size() == c.window.history_length);
    REQUIRE(sample.gt.right);
    CHECK(sample.gt.right->output.joints == forward(rigs.right, sample.gt.right->params).joints);
  }
  std::size_t visited = 0;
  loader.for_each("val", [&](const Sample&) { ++visited; });
  CHECK(visited == s.manifest.records.size());

  std::filesystem::remove(dir / s.manifest.records[1].gt_mask);
  try {
    (void)loader.load(1);
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingFile);
    CHECK(e.index() == 1);
  }
}

TEST_CASE("scene config JSON round trip and validation") {
  const auto c = scene_preset("egocentric");
  const auto back = scene_config_from_json(scene_config_to_json(c));
  CHECK(scene_config_to_json(back) == scene_config_to_json(c));
  CHECK_ERROR_CODE(scene_preset("nowhere"), ErrorCode::ConfigError);
  auto bad = c;
  bad.frame_count = 1;
  CHECK_ERROR_CODE(bad.validate(), ErrorCode::ConfigError);
}
