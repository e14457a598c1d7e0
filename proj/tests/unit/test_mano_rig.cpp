#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Geometry>

#include "evego/mano_rig.hpp"
#include "support.hpp"

using namespace evego;

namespace {

ManoParams random_params(std::mt19937_64& rng, Side side = Side::Right) {
  ManoParams p;
  p.side = side;
  for (double& v : p.theta) v = testing::uniform(rng, -0.8, 0.8);
  for (double& v : p.beta) v = testing::uniform(rng, -1.5, 1.5);
  for (double& v : p.trans) v = testing::uniform(rng, -0.3, 0.3);
  for (double& v : p.rot) v = testing::uniform(rng, -1.5, 1.5);
  return p;
}

Eigen::Matrix3d axis_angle(const std::array<double, 3>& aa) {
  const Eigen::Vector3d v(aa[0], aa[1], aa[2]);
  const double a = v.norm();
  if (a == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(a, v / a).toRotationMatrix();
}

double max_abs(const Points3& a, const Points3& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("synthetic rig satisfies the standard shape") {
  const auto rig = make_synthetic_rig();
  CHECK(rig.vertex_count() == kStandardVertices);
  CHECK(rig.joint_count() == kRigJoints);
  CHECK_NOTHROW(rig.validate());
  const auto out = forward(rig, ManoParams{});
  CHECK(out.joints.rows() == kOutputJoints);
  CHECK(out.vertices.rows() == kStandardVertices);
}

TEST_CASE("rest pose reproduces the template exactly") {
  for (const auto& rig : {make_synthetic_rig(), make_test_rig()}) {
    const auto out = forward(rig, ManoParams{});
    CHECK(out.vertices == rig.template_vertices);
    const Points3 regressed = rig.joint_regressor * rig.template_vertices;
    Points3 expect(kOutputJoints, 3);
    for (int j = 1; j < kRigJoints; ++j) expect.row(j - 1) = regressed.row(j);
    for (int k = 0; k < 5; ++k) expect.row(15 + k) = rig.template_vertices.row(rig.fingertip_vertex_ids[k]);
    CHECK(max_abs(out.joints, expect) <= 1e-15);
    CHECK((out.wrist - regressed.row(0)).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("translation commutes with the forward pass") {
  std::mt19937_64 rng(1);
  const auto rig = make_synthetic_rig();
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_params(rng);
    const auto a = forward(rig, p);
    p.trans[0] += 0.1;
    const auto b = forward(rig, p);
    Points3 shifted_j = a.joints, shifted_v = a.vertices;
    shifted_j.col(0).array() += 0.1;
    shifted_v.col(0).array() += 0.1;
    CHECK(max_abs(b.joints, shifted_j) <= 1e-12);
    CHECK(max_abs(b.vertices, shifted_v) <= 1e-12);
  }
}

TEST_CASE("root rotation about z matches an explicit rotation of the rest output") {
  const auto rig = make_synthetic_rig();
  const auto rest = forward(rig, ManoParams{});
  ManoParams p;
  p.rot = {0.0, 0.0, std::numbers::pi / 2};
  const auto out = forward(rig, p);
  const Eigen::Matrix3d R = axis_angle(p.rot);
  const Eigen::RowVector3d w = rest.wrist;
  const Points3 expect_v = ((rest.vertices.rowwise() - w) * R.transpose()).rowwise() + w;
  const Points3 expect_j = ((rest.joints.rowwise() - w) * R.transpose()).rowwise() + w;
  CHECK(max_abs(out.vertices, expect_v) <= 1e-12);
  CHECK(max_abs(out.joints, expect_j) <= 1e-12);
}

TEST_CASE("skinning partition of unity: global transform acts rigidly on every vertex") {
  std::mt19937_64 rng(2);
  const auto rig = make_synthetic_rig();
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_params(rng);
    const auto t = p.trans;
    const auto r = p.rot;
    p.trans = {0, 0, 0};
    p.rot = {0, 0, 0};
    const auto base = forward(rig, p);
    p.trans = t;
    p.rot = r;
    const auto moved = forward(rig, p);
    const Eigen::Matrix3d R = axis_angle(r);
    const Eigen::RowVector3d w = base.wrist, d(t[0], t[1], t[2]);
    const Points3 ev = (((base.vertices.rowwise() - w) * R.transpose()).rowwise() + w).rowwise() + d;
    const Points3 ej = (((base.joints.rowwise() - w) * R.transpose()).rowwise() + w).rowwise() + d;
    CHECK(max_abs(moved.vertices, ev) <= 1e-9);
    CHECK(max_abs(moved.joints, ej) <= 1e-9);
  }
}

TEST_CASE("shape blendshapes are linear at zero pose") {
  std::mt19937_64 rng(3);
  const auto rig = make_synthetic_rig();
  ManoParams p;
  for (double& b : p.beta) b = testing::uniform(rng, -1, 1);
  const auto a = forward(rig, p);
  ManoParams q = p;
  for (double& b : q.beta) b *= 2;
  const auto b = forward(rig, q);
  const Eigen::Map<const Eigen::Matrix<double, kShapeCoeffs, 1>> beta(p.beta.data());
  const Eigen::VectorXd delta = rig.shape_dirs * beta;
  Points3 expect = a.vertices;
  for (int v = 0; v < rig.vertex_count(); ++v)
    for (int c = 0; c < 3; ++c) expect(v, c) += delta(3 * v + c);
  CHECK(max_abs(b.vertices, expect) <= 1e-12);
}

TEST_CASE("left/right mirror fixture") {
  std::mt19937_64 rng(4);
  const auto right = make_synthetic_rig(Side::Right);
  const auto left = mirror_rig(right);
  CHECK(left.side == Side::Left);
  CHECK_NOTHROW(left.validate());
  CHECK(max_abs(make_synthetic_rig(Side::Left).template_vertices, left.template_vertices) == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_params(rng);
    const auto r = forward(right, p);
    const auto l = forward(left, mirror_params(p));
    Points3 jv = r.vertices, jj = r.joints;
    jv.col(0) *= -1.0;
    jj.col(0) *= -1.0;
    CHECK(max_abs(l.vertices, jv) <= 1e-9);
    CHECK(max_abs(l.joints, jj) <= 1e-9);
  }
  CHECK(mirror_params(mirror_params(ManoParams{})) == ManoParams{});
}

TEST_CASE("forward rejects side mismatch and non-finite input") {
  const auto rig = make_test_rig();
  ManoParams p;
  p.side = Side::Left;
  CHECK_ERROR_CODE(forward(rig, p), ErrorCode::SideMismatch);
  p.side = Side::Right;
  p.trans[1] = std::nan("");
  CHECK_ERROR_CODE(forward(rig, p), ErrorCode::NonFinite);
}

TEST_CASE("Rodrigues near zero uses the series and stays orthonormal") {
  for (double a : {0.0, 1e-12, 1e-9, 1e-7, 1e-3, 1.0, 3.0}) {
    const std::array<double, 3> aa = {a * 0.6, -a * 0.8, 0.0};
    const auto m = rodrigues(aa);
    const Eigen::Matrix3d R = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(m.data());
    CHECK((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((R - axis_angle(aa)).cwiseAbs().maxCoeff() <= 1e-14);
  }
  const auto id = rodrigues(std::array<double, 3>{0, 0, 0});
  CHECK(id == std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1});
}

TEST_CASE("bundled test rig loads and matches the generator") {
  const auto rig = load_rig(std::filesystem::path(EVEGO_TEST_DATA) / "test_rig.hrig");
  const auto ref = make_test_rig();
  CHECK(rig.template_vertices == ref.template_vertices);
  CHECK(rig.skinning_weights == ref.skinning_weights);
  CHECK(rig.parents == ref.parents);
  CHECK(rig.fingertip_vertex_ids == ref.fingertip_vertex_ids);
  CHECK(rig.vertex_count() == 16);
}

TEST_CASE("HRIG round-trip and corrupted containers") {
  const auto rig = make_synthetic_rig();
  std::stringstream buf;
  write_rig(buf, rig);
  const std::string bytes = buf.str();
  std::stringstream in(bytes);
  const auto back = read_rig(in);
  CHECK(back.template_vertices == rig.template_vertices);
  CHECK(back.shape_dirs == rig.shape_dirs);
  CHECK(back.pose_dirs == rig.pose_dirs);
  CHECK(back.joint_regressor == rig.joint_regressor);
  CHECK(back.skinning_weights == rig.skinning_weights);
  CHECK(back.pose_basis == rig.pose_basis);
  CHECK(back.parents == rig.parents);
  CHECK(back.faces == rig.faces);
  CHECK(back.side == rig.side);

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_ERROR_CODE(read_rig(truncated), ErrorCode::ParseError);

  HandRig bad = make_test_rig();
  bad.skinning_weights.row(5) *= 0.9;
  std::stringstream bad_buf;
  write_rig(bad_buf, bad);
  CHECK_ERROR_CODE(read_rig(bad_buf), ErrorCode::InvariantViolation);

  HandRig cyclic = make_test_rig();
  cyclic.parents[3] = 5;
  CHECK_ERROR_CODE(cyclic.validate(), ErrorCode::InvariantViolation);
  HandRig negative = make_test_rig();
  negative.skinning_weights(2, 0) = -0.1;
  negative.skinning_weights(2, 2) += 0.1;
  CHECK_ERROR_CODE(negative.validate(), ErrorCode::InvariantViolation);
}

TEST_CASE("project_mask matches a point-in-triangle oracle") {
  const SensorGeometry g{60, 40};
  const CameraIntrinsics cam{50.0, 50.0, 29.5, 19.5};
  Points3 v(3, 3);
  v << -0.31, -0.23, 1.0, 0.37, -0.11, 1.0, 0.02, 0.29, 1.0;
  const std::vector<std::array<int, 3>> faces = {{0, 1, 2}};
  const auto m = project_mask(v, faces, cam, g);
  double u[3], w[3];
  for (int i = 0; i < 3; ++i) {
    u[i] = cam.fx * v(i, 0) / v(i, 2) + cam.cx;
    w[i] = cam.fy * v(i, 1) / v(i, 2) + cam.cy;
  }
  auto edge = [&](int a, int b, double x, double y) { return (u[b] - u[a]) * (y - w[a]) - (w[b] - w[a]) * (x - u[a]); };
  std::size_t inside = 0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const double e0 = edge(0, 1, x, y), e1 = edge(1, 2, x, y), e2 = edge(2, 0, x, y);
      const bool in = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      CHECK(m.at(x, y) == (in ? 1 : 0));
      inside += in;
    }
  CHECK(inside > 100);

  Points3 behind = v;
  behind.col(2).setConstant(-1.0);
  CHECK(project_mask(behind, faces, cam, g).area() == 0);
}

TEST_CASE("moving the hand toward the camera does not shrink its mask") {
  const auto rig = make_synthetic_rig();
  std::size_t prev = 0;
  for (double z : {1.6, 1.2, 0.9, 0.6}) {
    ManoParams p;
    p.trans = {0.0, -0.08, z};
    const auto out = forward(rig, p);
    const auto m = project_mask(out.vertices, rig.faces, CameraIntrinsics{}, SensorGeometry{});
    CHECK(m.area() >= prev);
    prev = m.area();
  }
  CHECK(prev > 0);
}

TEST_CASE("OBJ export writes every vertex and face") {
  const auto rig = make_synthetic_rig();
  const auto out = forward(rig, ManoParams{});
  const auto dir = testing::scratch_dir("obj");
  write_obj(dir / "hand.obj", out, rig.faces);
  std::ifstream in(dir / "hand.obj");
  std::string line;
  std::size_t v = 0, f = 0;
  while (std::getline(in, line)) {
    v += line.rfind("v ", 0) == 0;
    f += line.rfind("f ", 0) == 0;
  }
  CHECK(v == static_cast<std::size_t>(kStandardVertices));
  CHECK(f == rig.faces.size());
}
