#include <algorithm>
#include <map>
#include <random>
#include <fstream>
#include <set>

#include "evego/representations.hpp"
#include "support.hpp"

using namespace evego;

namespace {

EventWindow random_window(std::mt19937_64& rng, SensorGeometry g, std::size_t n, Timestamp start, Timestamp d) {
  std::vector<EventPoint> ev;
  for (std::size_t i = 0; i < n; ++i)
    ev.push_back({static_cast<int>(rng() % static_cast<unsigned>(g.width)),
                  static_cast<int>(rng() % static_cast<unsigned>(g.height)),
                  start + static_cast<Timestamp>(rng() % static_cast<std::uint64_t>(d)),
                  rng() % 2 ? Polarity::Positive : Polarity::Negative});
  const auto s = validate_stream(ev, g);
  return {start, start + d, s.events()};
}

}  // namespace

TEST_CASE("LNES weights follow the first/last event normalisation") {
  const SensorGeometry g{10, 10};
  EventWindow w{0, 100, {{1, 1, 0, Polarity::Positive}, {2, 2, 5, Polarity::Negative}, {3, 3, 10, Polarity::Positive}}};
  const auto f = build_lnes(w, g);
  CHECK(f.at(1, 1, 0) == 0.0f);
  CHECK(f.at(2, 2, 1) == 0.5f);
  CHECK(f.at(3, 3, 0) == 1.0f);
  CHECK(f.at(2, 2, 0) == 0.0f);
  CHECK(f.hit(1, 1, 0));
  CHECK_FALSE(f.hit(2, 2, 0));
}

TEST_CASE("LNES latest event wins and degenerate windows map to one") {
  const SensorGeometry g{4, 4};
  EventWindow w{0, 100, {{1, 1, 0, Polarity::Positive}, {1, 1, 10, Polarity::Positive}}};
  CHECK(build_lnes(w, g).at(1, 1, 0) == 1.0f);

  EventWindow single{0, 100, {{2, 3, 42, Polarity::Negative}}};
  const auto f = build_lnes(single, g);
  CHECK(f.at(2, 3, 1) == 1.0f);

  const auto empty = build_lnes(EventWindow{0, 100, {}}, g);
  CHECK(std::all_of(empty.data.begin(), empty.data.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("LNES matches a per-cell oracle and is time-shift invariant") {
  std::mt19937_64 rng(17);
  const SensorGeometry g{16, 12};
  for (int trial = 0; trial < 50; ++trial) {
    const auto w = random_window(rng, g, 1 + rng() % 300, 1000 * trial, 33333);
    const auto f = build_lnes(w, g);
    std::map<std::size_t, Timestamp> latest;
    for (const auto& e : w.events)
      latest[(static_cast<std::size_t>(e.y) * g.width + e.x) * 2 + (e.polarity == Polarity::Positive ? 0 : 1)] = e.t;
    const Timestamp ts = w.events.front().t, tl = w.events.back().t;
    for (std::size_t c = 0; c < f.data.size(); ++c) {
      auto it = latest.find(c);
      if (it == latest.end()) {
        CHECK(f.data[c] == 0.0f);
        continue;
      }
      const float expect = tl == ts ? 1.0f : static_cast<float>(double(it->second - ts) / double(tl - ts));
      CHECK(f.data[c] == expect);
      CHECK(f.data[c] >= 0.0f);
      CHECK(f.data[c] <= 1.0f);
    }
    EventWindow shifted = w;
    const Timestamp delta = static_cast<Timestamp>(rng() % 1000000000);
    shifted.start_t += delta;
    shifted.end_t += delta;
    for (auto& e : shifted.events) e.t += delta;
    CHECK(build_lnes(shifted, g).data == f.data);
  }
}

TEST_CASE("build_lnes over a span is thread-independent") {
  std::mt19937_64 rng(2);
  const SensorGeometry g{20, 10};
  std::vector<EventWindow> ws;
  for (int k = 0; k < 6; ++k) ws.push_back(random_window(rng, g, 100, k * 1000, 1000));
  const auto a = build_lnes(ws, g, 1);
  const auto b = build_lnes(ws, g, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].data == b[k].data);
}

TEST_CASE("cloud normalisation endpoints and padding") {
  const SensorGeometry g;
  EventWindow w{0, 1000, {{345, 259, 500, Polarity::Positive}}};
  const auto c = build_cloud(w, g);
  REQUIRE(c.points.size() == 2048);
  CHECK(c.validity == 1);
  CHECK(c.points[0] == CloudPoint{1.0f, 1.0f, 0.5f, 1.0f, 0.0f});
  for (std::size_t i = 1; i < c.points.size(); ++i) CHECK(c.points[i] == CloudPoint{});

  const auto empty = build_cloud(EventWindow{0, 1000, {}}, g);
  CHECK(empty.validity == 0);
  CHECK(std::all_of(empty.points.begin(), empty.points.end(), [](const CloudPoint& p) { return p == CloudPoint{}; }));
}

TEST_CASE("subsampled cloud is a time-ordered subset of the window") {
  std::mt19937_64 rng(99);
  const SensorGeometry g;
  // Distinct coordinates so every event converts to a unique point.
  std::vector<EventPoint> ev;
  for (int i = 0; i < 5000; ++i)
    ev.push_back({i % 346, i / 346, static_cast<Timestamp>(i * 6), i % 3 ? Polarity::Positive : Polarity::Negative});
  const EventWindow w{0, 33333, ev};
  const auto c = build_cloud(w, g, 2048, 5);
  REQUIRE(c.points.size() == 2048);
  CHECK(c.validity == 2048);
  std::map<std::pair<float, float>, CloudPoint> source;
  for (const auto& e : ev) {
    const CloudPoint p{static_cast<float>(e.x * (1.0 / 345)), static_cast<float>(e.y * (1.0 / 259)),
                       static_cast<float>(static_cast<double>(e.t) / 33333.0), e.polarity == Polarity::Positive ? 1.0f : 0.0f,
                       e.polarity == Polarity::Positive ? 0.0f : 1.0f};
    source[{p.x, p.y}] = p;
  }
  std::set<std::pair<float, float>> seen;
  for (std::size_t i = 0; i < c.validity; ++i) {
    const auto& p = c.points[i];
    auto it = source.find({p.x, p.y});
    REQUIRE(it != source.end());
    CHECK(it->second == p);
    CHECK(seen.insert({p.x, p.y}).second);
    CHECK(p.p + p.n == 1.0f);
    if (i > 0) CHECK(c.points[i - 1].t <= p.t);
  }
  CHECK(build_cloud(w, g, 2048, 5) == c);
  CHECK_FALSE(build_cloud(w, g, 2048, 6) == c);
}

TEST_CASE("sample_without_replacement is sorted, unique and reproducible") {
  for (std::uint64_t seed : {0ull, 1ull, 1234ull}) {
    const auto a = sample_without_replacement(1000, 100, seed);
    CHECK(a.size() == 100);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
    CHECK(a.back() < 1000);
    CHECK(sample_without_replacement(1000, 100, seed) == a);
  }
  CHECK(sample_without_replacement(5, 10, 0) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("uniform sampling: inclusion frequency is close to N/M") {
  std::vector<int> hits(50, 0);
  const int trials = 4000;
  for (int s = 0; s < trials; ++s)
    for (auto i : sample_without_replacement(50, 10, static_cast<std::uint64_t>(s))) ++hits[i];
  // Expected 800 per index; binomial sd ~ 25.3, allow 5 sd.
  for (int h : hits) CHECK(std::abs(h - 800) < 127);
}

TEST_CASE("EVCL round-trip and malformed files") {
  std::mt19937_64 rng(1);
  const auto w = random_window(rng, SensorGeometry{}, 700, 0, 33333);
  const auto c = build_cloud(w, SensorGeometry{}, 1024, 3);
  const auto dir = testing::scratch_dir("evcl");
  write_cloud(dir / "c.evcl", c);
  CHECK(read_cloud(dir / "c.evcl") == c);
  CHECK(std::filesystem::file_size(dir / "c.evcl") == 12 + 1024 * 20);

  std::filesystem::resize_file(dir / "c.evcl", 100);
  CHECK_ERROR_CODE(read_cloud(dir / "c.evcl"), ErrorCode::ParseError);
  {
    std::ofstream bad(dir / "bad.evcl", std::ios::binary);
    bad << "NOPE";
  }
  CHECK_ERROR_CODE(read_cloud(dir / "bad.evcl"), ErrorCode::ParseError);
}

TEST_CASE("LNES rendering quantises the positive channel") {
  const SensorGeometry g{3, 1};
  LnesFrame f;
  f.geometry = g;
  f.data = {0.0f, 0.0f, 1.0f, 0.7f, 0.5f, 0.0f};
  f.occupied.assign(6, 0);
  const auto img = render_lnes_image(f);
  CHECK(img.pixels == std::vector<std::uint8_t>{0, 255, 128});
}
