#include <cmath>
#include <fstream>
#include <random>

#include "evego/metrics.hpp"
#include "support.hpp"

using namespace evego;

namespace {

Points3 random_points(std::mt19937_64& rng, int n, double scale = 0.05) {
  Points3 p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = testing::uniform(rng, -scale, scale);
  return p;
}

HandResult random_hand(std::mt19937_64& rng) {
  HandResult h;
  h.joints = random_points(rng, kOutputJoints);
  h.vertices = random_points(rng, 30);
  h.wrist = random_points(rng, 1).row(0);
  return h;
}

}  // namespace

TEST_CASE("MPJPE and MPVPE against a direct oracle") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int sets = 1 + static_cast<int>(rng() % 4);
    std::vector<Points3> p, g;
    double sum = 0.0;
    int count = 0;
    for (int s = 0; s < sets; ++s) {
      const int n = 1 + static_cast<int>(rng() % 25);
      p.push_back(random_points(rng, n));
      g.push_back(random_points(rng, n));
      for (int i = 0; i < n; ++i) {
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) sq += (p[s](i, c) - g[s](i, c)) * (p[s](i, c) - g[s](i, c));
        sum += std::sqrt(sq);
        ++count;
      }
    }
    const double oracle = 1000.0 * sum / count;
    CHECK(std::abs(mpjpe(p, g, 1000.0) - oracle) <= 1e-9);
    CHECK(std::abs(mpvpe(p, g, 1000.0) - oracle) <= 1e-9);
  }
  std::vector<Points3> a = {Points3::Zero(3, 3)}, b = {Points3::Zero(4, 3)};
  CHECK_ERROR_CODE(mpjpe(a, b), ErrorCode::ShapeMismatch);
}

TEST_CASE("PCK of a 50 mm step and its AUC") {
  std::vector<Points3> p = {Points3::Zero(10, 3)}, g = {Points3::Zero(10, 3)};
  g[0].col(0).setConstant(50.0);
  const auto curve = pck_curve(p, g, PckOptions{});
  REQUIRE(curve.thresholds.size() == 101);
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    CHECK(curve.fractions[i] == (curve.thresholds[i] >= 50.0 ? 1.0 : 0.0));
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < curve.thresholds.size(); ++i)
    area += (curve.thresholds[i + 1] - curve.thresholds[i]) * (curve.fractions[i] + curve.fractions[i + 1]) / 2.0;
  CHECK(auc(curve) == area / 100.0);
  CHECK(auc(curve) == doctest::Approx(0.505));
}

TEST_CASE("PCK curve is monotone and AUC lies in [0, 1]") {
  std::mt19937_64 rng(2);
  std::vector<Points3> p = {random_points(rng, 50, 80.0)}, g = {random_points(rng, 50, 80.0)};
  const auto c = pck_curve(p, g, PckOptions{});
  for (std::size_t i = 1; i < c.fractions.size(); ++i) CHECK(c.fractions[i] >= c.fractions[i - 1]);
  CHECK(auc(c) >= 0.0);
  CHECK(auc(c) <= 1.0);
  CHECK(auc(pck_curve(g, g, PckOptions{})) == 1.0);
  CHECK_ERROR_CODE(pck_curve(p, g, PckOptions{0.0, 0.0}), ErrorCode::ConfigError);
  PckOptions rel;
  rel.root_relative = true;
  CHECK_ERROR_CODE(pck_curve(p, g, rel), ErrorCode::MissingWrist);
}

TEST_CASE("root-relative AUC ignores per-hand translation") {
  std::mt19937_64 rng(3);
  std::vector<SampleResult> pred, gt;
  for (int s = 0; s < 6; ++s) {
    SampleResult a{"s" + std::to_string(s), random_hand(rng), random_hand(rng), {}};
    SampleResult b{a.sample_id, random_hand(rng), random_hand(rng), {}};
    pred.push_back(a);
    gt.push_back(b);
  }
  const auto base = evaluate_dataset(pred, gt);
  auto moved = pred;
  for (auto& s : moved)
    for (auto* h : {&s.left, &s.right}) {
      const Eigen::RowVector3d d = random_points(rng, 1, 0.5).row(0);
      (*h)->joints.rowwise() += d;
      (*h)->vertices.rowwise() += d;
      (*h)->wrist += d;
    }
  const auto shifted = evaluate_dataset(moved, gt);
  CHECK(std::abs(shifted.r_auc - base.r_auc) <= 1e-12);
  CHECK(shifted.mpjpe_mm != base.mpjpe_mm);
}

TEST_CASE("evaluate_dataset skips absent hands and is thread independent") {
  std::mt19937_64 rng(4);
  std::vector<SampleResult> pred, gt;
  for (int s = 0; s < 40; ++s) {
    SampleResult a{"s" + std::to_string(s), random_hand(rng), random_hand(rng), {}};
    SampleResult b{a.sample_id, random_hand(rng), random_hand(rng), {}};
    if (s % 3 == 0) b.left.reset();
    pred.push_back(a);
    gt.push_back(b);
  }
  const auto r1 = evaluate_dataset(pred, gt, EvalConfig{1000.0, 100.0, 1.0, 1});
  const auto r8 = evaluate_dataset(pred, gt, EvalConfig{1000.0, 100.0, 1.0, 8});
  CHECK(report_json(r1) == report_json(r8));
  CHECK(r1.hands_skipped == 14);
  CHECK(r1.hands_evaluated == 66);
  CHECK(!r1.iou);

  std::vector<Points3> pj, gj;
  for (std::size_t s = 0; s < gt.size(); ++s)
    for (auto side : {&SampleResult::left, &SampleResult::right})
      if (gt[s].*side) {
        pj.push_back((pred[s].*side)->joints);
        gj.push_back((gt[s].*side)->joints);
      }
  CHECK(std::abs(r1.mpjpe_mm - mpjpe(pj, gj, 1000.0)) <= 1e-9);

  auto short_pred = pred;
  short_pred.pop_back();
  CHECK_ERROR_CODE(evaluate_dataset(short_pred, gt), ErrorCode::SampleCountMismatch);
  auto missing = pred;
  missing[1].right.reset();
  CHECK_ERROR_CODE(evaluate_dataset(missing, gt), ErrorCode::ShapeMismatch);
}

TEST_CASE("identical predictions score perfectly") {
  std::mt19937_64 rng(5);
  std::vector<SampleResult> gt;
  for (int s = 0; s < 3; ++s) gt.push_back({"s", random_hand(rng), random_hand(rng), HandMask({5, 5}, 1)});
  const auto r = evaluate_dataset(gt, gt);
  CHECK(r.mpjpe_mm == 0.0);
  CHECK(r.mpvpe_mm == 0.0);
  CHECK(r.r_auc == 1.0);
  REQUIRE(r.iou);
  CHECK(*r.iou == 1.0);
}

TEST_CASE("result JSONL round trip") {
  std::mt19937_64 rng(6);
  const auto dir = testing::scratch_dir("results");
  HandMask mask({6, 4});
  mask.at(2, 1) = 1;
  save_mask(dir / "m.pgm", mask);
  SampleResult a{"a", random_hand(rng), std::nullopt, {}};
  SampleResult b{"b", std::nullopt, random_hand(rng), {}};
  {
    std::ofstream out(dir / "r.jsonl");
    out << result_to_json(a) << "\n" << result_to_json(b, "m.pgm") << "\n";
  }
  const auto back = read_results(dir / "r.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].sample_id == "a");
  CHECK(back[0].left->joints == a.left->joints);
  CHECK(back[0].left->vertices == a.left->vertices);
  CHECK(back[0].left->wrist == a.left->wrist);
  CHECK(!back[0].right);
  CHECK(!back[1].left);
  REQUIRE(back[1].mask);
  CHECK(back[1].mask->data == mask.data);

  write_results(dir / "w.jsonl", back);
  const auto again = read_results(dir / "w.jsonl");
  CHECK(again[1].right->joints == b.right->joints);

  std::ofstream(dir / "bad.jsonl") << "{\"sample_id\": 3\n";
  CHECK_ERROR_CODE(read_results(dir / "bad.jsonl"), ErrorCode::ParseError);
}
