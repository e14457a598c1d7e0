#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "evego/scalar_ad.hpp"
#include "evego/segmask.hpp"

namespace evego {

enum class Side : std::uint8_t { Left = 0, Right = 1 };

inline constexpr int kPoseCoeffs = 15;
inline constexpr int kShapeCoeffs = 10;
inline constexpr int kRigJoints = 16;    // wrist + 15 articulated
inline constexpr int kOutputJoints = 20; // 15 articulated + 5 fingertips
inline constexpr int kStandardVertices = 778;
inline constexpr int kParamsPerHand = kPoseCoeffs + kShapeCoeffs + 3 + 3;

using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Parametric hand. Joint 0 is the wrist/root; each articulated joint rotates
// the mesh region it skins. Layouts:
//   shape_dirs  (V*3) x 10        row = vertex * 3 + axis
//   pose_dirs   (V*3) x 9(J-1)    column = (joint - 1) * 9 + row * 3 + col of (R - I)
//   pose_basis  3(J-1) x 15       axis-angle of joint j at rows 3(j-1)..3(j-1)+2
struct HandRig {
  Side side = Side::Right;
  Points3 template_vertices;
  MatrixRM shape_dirs;
  MatrixRM pose_dirs;
  MatrixRM joint_regressor;   // J x V
  MatrixRM skinning_weights;  // V x J
  std::vector<int> parents;   // parents[0] == -1
  MatrixRM pose_basis;
  std::array<int, 5> fingertip_vertex_ids{};  // thumb, index, middle, ring, pinky
  std::vector<std::array<int, 3>> faces;      // optional

  int vertex_count() const { return static_cast<int>(template_vertices.rows()); }
  int joint_count() const { return static_cast<int>(parents.size()); }

  // Throws InvariantViolation describing the first broken invariant.
  void validate() const;
};

struct ManoParams {
  std::array<double, kPoseCoeffs> theta{};
  std::array<double, kShapeCoeffs> beta{};
  std::array<double, 3> trans{};  // meters
  std::array<double, 3> rot{};    // axis-angle, radians
  Side side = Side::Right;

  friend bool operator==(const ManoParams&, const ManoParams&) = default;
};

// J holds internal joints 1..15 followed by the five fingertip vertices in
// fingertip_vertex_ids order. The wrist is reported separately.
struct HandOutput {
  Points3 joints;
  Points3 vertices;
  Eigen::RowVector3d wrist = Eigen::RowVector3d::Zero();
};

template <typename S>
struct HandPoseT {
  std::array<S, kPoseCoeffs> theta{};
  std::array<S, kShapeCoeffs> beta{};
  std::array<S, 3> trans{};
  std::array<S, 3> rot{};
};

template <typename S>
struct HandOutputT {
  std::vector<std::array<S, 3>> joints;
  std::vector<std::array<S, 3>> vertices;
  std::array<S, 3> wrist{};
};

// Shape and pose blendshapes, joint regression on the shaped mesh, linear
// blend skinning along the kinematic chain with `rot` at the root, then
// translation. Instantiated for double and ad::Real.
template <typename S>
HandOutputT<S> forward_generic(const HandRig& rig, const HandPoseT<S>& pose);

HandOutput forward(const HandRig& rig, const ManoParams& params);

// Axis-angle to rotation matrix (row-major), series expansion below 1e-8 rad.
template <typename S>
std::array<S, 9> rodrigues(const std::array<S, 3>& aa);

HandRig load_rig(const std::filesystem::path& path);
void save_rig(const std::filesystem::path& path, const HandRig& rig);
HandRig read_rig(std::istream& in);
void write_rig(std::ostream& out, const HandRig& rig);

// Procedural 778-vertex hand with MANO-style joint ordering
// (0 wrist, 1-3 index, 4-6 middle, 7-9 pinky, 10-12 ring, 13-15 thumb).
HandRig make_synthetic_rig(Side side = Side::Right);
// 16-vertex skeleton-only rig used as a small file fixture.
HandRig make_test_rig();

// Reflection through the x = 0 plane: the mirrored rig evaluated at
// mirror_params(p) equals the original output with x negated.
HandRig mirror_rig(const HandRig& rig);
ManoParams mirror_params(const ManoParams& params);

struct RigPair {
  HandRig left;
  HandRig right;
};
// Left rig obtained by mirroring the right one.
RigPair make_rig_pair(const HandRig& right);

struct CameraIntrinsics {
  double fx = 300.0, fy = 300.0, cx = 172.5, cy = 129.5;
  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

// Pinhole projection with filled-triangle rasterisation; pixel (x, y) is
// sampled at its integer coordinates, edges inclusive. Faces touching
// z <= 1e-6 are culled.
HandMask project_mask(const Points3& vertices, const std::vector<std::array<int, 3>>& faces,
                      const CameraIntrinsics& camera, const SensorGeometry& geometry);
// Adds coverage into an existing mask.
void rasterize_into(HandMask& mask, const Points3& vertices, const std::vector<std::array<int, 3>>& faces,
                    const CameraIntrinsics& camera);

void write_obj(const std::filesystem::path& path, const HandOutput& output,
               const std::vector<std::array<int, 3>>& faces);

}  // namespace evego
