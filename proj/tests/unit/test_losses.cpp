#include <cmath>
#include <numbers>
#include <random>

#include "evego/losses.hpp"
#include "support.hpp"

using namespace evego;

namespace {

Points3 random_points(std::mt19937_64& rng, int n) {
  Points3 p(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = testing::uniform(rng, -0.2, 0.2);
  return p;
}

HandEstimate estimate(const HandRig& rig, const ManoParams& p) { return {p, forward(rig, p)}; }

}  // namespace

TEST_CASE("BCE of a uniform half prediction is ln 2") {
  const SensorGeometry g{17, 9};
  HandMask gt(g);
  std::mt19937_64 rng(1);
  for (auto& v : gt.data) v = rng() & 1;
  const PixelProbMap pred(g, 0.5);
  CHECK(std::abs(bce_loss(pred, gt) - std::numbers::ln2) <= 1e-9);
}

TEST_CASE("BCE clamps saturated probabilities") {
  const SensorGeometry g{4, 4};
  HandMask gt(g, 1);
  const PixelProbMap zero(g, 0.0);
  CHECK(bce_loss(zero, gt) == doctest::Approx(-std::log(kBceClamp)).epsilon(1e-12));
  CHECK(std::isfinite(mask_loss(zero, gt)));
  CHECK(bce_loss(PixelProbMap::from_mask(gt), gt) == doctest::Approx(-std::log(1.0 - kBceClamp)));
}

TEST_CASE("Dice loss bounds") {
  const SensorGeometry g{8, 8};
  HandMask gt(g);
  for (int x = 2; x < 6; ++x) gt.at(x, 3) = 1;
  CHECK(dice_loss(PixelProbMap::from_mask(gt), gt) == doctest::Approx(0.0).epsilon(1e-12));
  HandMask inv(g);
  for (std::size_t i = 0; i < inv.data.size(); ++i) inv.data[i] = !gt.data[i];
  CHECK(dice_loss(PixelProbMap::from_mask(inv), gt) == doctest::Approx(1.0).epsilon(1e-6));
  // empty prediction against empty truth is perfect thanks to smoothing
  const HandMask empty(g);
  CHECK(dice_loss(PixelProbMap(g, 0.0), empty) == 0.0);
  CHECK(mask_loss(PixelProbMap(g, 0.5), gt) ==
        doctest::Approx(0.7 * bce_loss(PixelProbMap(g, 0.5), gt) + 0.3 * dice_loss(PixelProbMap(g, 0.5), gt)));
}

TEST_CASE("mask losses reject geometry mismatch") {
  CHECK_ERROR_CODE(bce_loss(PixelProbMap({4, 4}), HandMask({4, 5})), ErrorCode::GeometryMismatch);
  CHECK_ERROR_CODE(dice_loss(PixelProbMap({4, 4}), HandMask({5, 4})), ErrorCode::GeometryMismatch);
}

TEST_CASE("joint and vertex losses are mean L1 over points") {
  std::mt19937_64 rng(2);
  const Points3 a = random_points(rng, 21), b = random_points(rng, 21);
  double oracle = 0.0;
  for (int i = 0; i < 21; ++i)
    oracle += std::abs(a(i, 0) - b(i, 0)) + std::abs(a(i, 1) - b(i, 1)) + std::abs(a(i, 2) - b(i, 2));
  oracle /= 21;
  CHECK(std::abs(joints_loss(a, b) - oracle) <= 1e-15);
  CHECK(vertices_loss(a, b) == joints_loss(a, b));
  CHECK(joints_loss(a, a) == 0.0);
  CHECK_ERROR_CODE(joints_loss(a, random_points(rng, 20)), ErrorCode::ShapeMismatch);
}

TEST_CASE("interhand loss on a 3-4-5 offset") {
  // millimetres; only the predicted right hand moves
  Points3 pl = Points3::Zero(20, 3), gl = Points3::Zero(20, 3), gr = Points3::Zero(20, 3);
  gr.col(0).setConstant(60.0);
  Points3 pr = gr;
  pr.col(0).array() += 3.0;
  pr.col(1).array() += 4.0;
  CHECK(interhand_loss(pl, pr, gl, gr) == 5.0);
  // a shared offset on both hands cancels
  Points3 shift = pl;
  CHECK(interhand_loss(pl + shift, pr + shift, gl + shift, gr + shift) == doctest::Approx(5.0));
  CHECK(interhand_loss(gl, gr, gl, gr) == 0.0);
}

TEST_CASE("MANO loss is the sum of two Euclidean norms") {
  ManoParams a, b;
  a.theta[0] = 3;
  a.theta[7] = 4;
  b.beta[9] = 12;
  a.beta[9] = 7;  // |5|
  CHECK(mano_loss(a, b) == doctest::Approx(10.0).epsilon(1e-15));
  b.side = Side::Left;
  CHECK_ERROR_CODE(mano_loss(a, b), ErrorCode::SideMismatch);
}

TEST_CASE("total hand loss: weight isolation and recombination") {
  std::mt19937_64 rng(3);
  const auto rigs = make_rig_pair(make_synthetic_rig());
  TwoHands gt, pred;
  for (int trial = 0; trial < 10; ++trial) {
    ManoParams gl, gr, pl, pr;
    gl.side = pl.side = Side::Left;
    for (auto* p : {&gl, &gr, &pl, &pr}) {
      for (double& v : p->theta) v = testing::uniform(rng, -0.5, 0.5);
      for (double& v : p->beta) v = testing::uniform(rng, -1, 1);
      for (double& v : p->trans) v = testing::uniform(rng, -0.1, 0.1);
    }
    gt.left = estimate(rigs.left, gl);
    gt.right = estimate(rigs.right, gr);
    pred.left = estimate(rigs.left, pl);
    pred.right = estimate(rigs.right, pr);

    const auto b = total_hand_loss(pred, gt);
    CHECK(std::abs(b.total - recombine(b, {})) <= 1e-12);
    const double jl = 0.5 * (joints_loss(pred.left->output.joints, gt.left->output.joints) +
                             joints_loss(pred.right->output.joints, gt.right->output.joints));
    CHECK(std::abs(b.joints - jl) <= 1e-15);
    CHECK(b.mano == doctest::Approx(mano_loss(pl, gl) + mano_loss(pr, gr)));

    const auto only = [&](double g, double d, double e, double z) {
      return total_hand_loss(pred, gt, HandLossWeights{g, d, e, z}).total;
    };
    CHECK(only(1, 0, 0, 0) == b.joints);
    CHECK(only(0, 1, 0, 0) == b.interhand);
    CHECK(only(0, 0, 1, 0) == b.vertices);
    CHECK(only(0, 0, 0, 1) == b.mano);
  }
}

TEST_CASE("total hand loss with one ground-truth hand") {
  const auto rigs = make_rig_pair(make_synthetic_rig());
  ManoParams r;
  r.theta[4] = 0.3;
  TwoHands gt, pred;
  gt.right = estimate(rigs.right, ManoParams{});
  pred.right = estimate(rigs.right, r);
  const auto b = total_hand_loss(pred, gt);
  CHECK(b.interhand == 0.0);
  CHECK(b.joints == joints_loss(pred.right->output.joints, gt.right->output.joints));
  CHECK(b.mano == doctest::Approx(0.3));
  pred.right.reset();
  CHECK_ERROR_CODE(total_hand_loss(pred, gt), ErrorCode::ShapeMismatch);
  CHECK(total_hand_loss(TwoHands{}, TwoHands{}).total == 0.0);
}
