#include "evego/mano_rig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <string>

#include <Eigen/Geometry>

#include "evego/errors.hpp"

namespace evego {

namespace {

using Vec3 = Eigen::Vector3d;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvariantViolation, what);
}

template <typename S>
struct Rigid {
  std::array<S, 9> r{};
  std::array<S, 3> t{};
};

template <typename S>
std::array<S, 9> matmul3(const std::array<S, 9>& a, const std::array<S, 9>& b) {
  using ad::dot;
  std::array<S, 9> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const S row[3] = {a[i * 3], a[i * 3 + 1], a[i * 3 + 2]};
      const S col[3] = {b[j], b[3 + j], b[6 + j]};
      out[i * 3 + j] = dot(row, col, 3, S(0.0));
    }
  return out;
}

template <typename S>
std::array<S, 3> apply3(const std::array<S, 9>& m, const std::array<S, 3>& v, const std::array<S, 3>& c) {
  using ad::dot;
  std::array<S, 3> out;
  for (int i = 0; i < 3; ++i) out[i] = dot(&m[i * 3], v.data(), 3, c[i]);
  return out;
}

}  // namespace

template <typename S>
std::array<S, 9> rodrigues(const std::array<S, 3>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using ad::value;
  const S t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  S a, b;
  if (value(t2) < 1e-16) {
    a = S(1.0) - t2 / S(6.0);
    b = S(0.5) - t2 / S(24.0);
  } else {
    const S t = sqrt(t2);
    a = sin(t) / t;
    b = (S(1.0) - cos(t)) / t2;
  }
  // R = I + a K + b (w w^T - |w|^2 I)
  const S k[9] = {S(0.0), -w[2], w[1], w[2], S(0.0), -w[0], -w[1], w[0], S(0.0)};
  std::array<S, 9> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      S k2 = w[i] * w[j];
      if (i == j) k2 = k2 - t2;
      S e = a * k[i * 3 + j] + b * k2;
      if (i == j) e = e + S(1.0);
      r[i * 3 + j] = e;
    }
  return r;
}

template <typename S>
HandOutputT<S> forward_generic(const HandRig& rig, const HandPoseT<S>& pose) {
  using ad::lincomb;
  const int V = rig.vertex_count();
  const int J = rig.joint_count();
  if (J != kRigJoints) throw Error(ErrorCode::InvariantViolation, "rig must have 16 joints");
  const int P = 9 * (J - 1);

  std::vector<std::array<S, 9>> local(static_cast<std::size_t>(J));
  local[0] = rodrigues(pose.rot);
  std::vector<S> feature(static_cast<std::size_t>(P));
  for (int j = 1; j < J; ++j) {
    std::array<S, 3> aa;
    for (int c = 0; c < 3; ++c)
      aa[c] = lincomb(S(0.0), &rig.pose_basis(3 * (j - 1) + c, 0), pose.theta.data(), kPoseCoeffs);
    local[j] = rodrigues(aa);
    for (int q = 0; q < 9; ++q)
      feature[(j - 1) * 9 + q] = (q % 4 == 0) ? local[j][q] - S(1.0) : local[j][q];
  }

  std::vector<std::array<S, 3>> shaped(static_cast<std::size_t>(V)), posed(static_cast<std::size_t>(V));
  for (int v = 0; v < V; ++v)
    for (int c = 0; c < 3; ++c) {
      shaped[v][c] = lincomb(S(rig.template_vertices(v, c)), &rig.shape_dirs(v * 3 + c, 0), pose.beta.data(),
                             kShapeCoeffs);
      posed[v][c] = lincomb(shaped[v][c], &rig.pose_dirs(v * 3 + c, 0), feature.data(), P);
    }

  std::vector<std::array<S, 3>> rest(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j)
    for (int c = 0; c < 3; ++c) rest[j][c] = lincomb(S(0.0), &rig.joint_regressor(j, 0), &shaped[0][c], V, 3);

  // Per joint: world rotation r and skinning offset t, so that a rest-space
  // point p maps to r p + t. The root rotates about its own rest position.
  // Offsets are accumulated as t_j = t_p + (r_p - r_j) rest_j, which keeps
  // them exactly zero when every rotation is the identity.
  const std::array<S, 3> zero{S(0.0), S(0.0), S(0.0)};
  std::vector<Rigid<S>> skin_tf(static_cast<std::size_t>(J));
  std::vector<std::array<S, 3>> joint_pos(static_cast<std::size_t>(J));
  skin_tf[0].r = local[0];
  {
    const auto r0 = apply3(local[0], rest[0], zero);
    for (int c = 0; c < 3; ++c) skin_tf[0].t[c] = rest[0][c] - r0[c];
    joint_pos[0] = rest[0];
  }
  for (int j = 1; j < J; ++j) {
    const int p = rig.parents[j];
    skin_tf[j].r = matmul3(skin_tf[p].r, local[j]);
    joint_pos[j] = apply3(skin_tf[p].r, rest[j], skin_tf[p].t);
    const auto rj = apply3(skin_tf[j].r, rest[j], zero);
    for (int c = 0; c < 3; ++c) skin_tf[j].t[c] = joint_pos[j][c] - rj[c];
  }

  // Blend (r - I, t) so the identity part is carried exactly by the vertex.
  std::vector<S> skin(static_cast<std::size_t>(J) * 12);
  for (int j = 0; j < J; ++j) {
    for (int q = 0; q < 9; ++q) skin[j * 12 + q] = q % 4 == 0 ? skin_tf[j].r[q] - S(1.0) : skin_tf[j].r[q];
    for (int c = 0; c < 3; ++c) skin[j * 12 + 9 + c] = skin_tf[j].t[c];
  }

  HandOutputT<S> out;
  out.vertices.resize(static_cast<std::size_t>(V));
  std::array<S, 12> blended;
  for (int v = 0; v < V; ++v) {
    const double* w = &rig.skinning_weights(v, 0);
    for (int q = 0; q < 12; ++q) blended[q] = lincomb(S(0.0), w, &skin[q], J, 12);
    std::array<S, 9> r;
    std::copy_n(blended.begin(), 9, r.begin());
    const std::array<S, 3> t = {blended[9], blended[10], blended[11]};
    const auto d = apply3(r, posed[v], t);
    for (int c = 0; c < 3; ++c) out.vertices[v][c] = posed[v][c] + d[c] + pose.trans[c];
  }

  out.joints.reserve(kOutputJoints);
  for (int j = 1; j < J; ++j)
    out.joints.push_back(
        {joint_pos[j][0] + pose.trans[0], joint_pos[j][1] + pose.trans[1], joint_pos[j][2] + pose.trans[2]});
  for (int tip : rig.fingertip_vertex_ids) out.joints.push_back(out.vertices[tip]);
  out.wrist = {joint_pos[0][0] + pose.trans[0], joint_pos[0][1] + pose.trans[1], joint_pos[0][2] + pose.trans[2]};
  return out;
}

template std::array<double, 9> rodrigues(const std::array<double, 3>&);
template std::array<ad::Real, 9> rodrigues(const std::array<ad::Real, 3>&);
template HandOutputT<double> forward_generic(const HandRig&, const HandPoseT<double>&);
template HandOutputT<ad::Real> forward_generic(const HandRig&, const HandPoseT<ad::Real>&);

HandOutput forward(const HandRig& rig, const ManoParams& params) {
  if (params.side != rig.side) throw Error(ErrorCode::SideMismatch, "parameters and rig are for different hands");
  HandPoseT<double> pose{params.theta, params.beta, params.trans, params.rot};
  const auto raw = forward_generic(rig, pose);
  HandOutput out;
  out.joints.resize(static_cast<Eigen::Index>(raw.joints.size()), 3);
  out.vertices.resize(static_cast<Eigen::Index>(raw.vertices.size()), 3);
  for (std::size_t i = 0; i < raw.joints.size(); ++i)
    for (int c = 0; c < 3; ++c) out.joints(static_cast<Eigen::Index>(i), c) = raw.joints[i][c];
  for (std::size_t i = 0; i < raw.vertices.size(); ++i)
    for (int c = 0; c < 3; ++c) out.vertices(static_cast<Eigen::Index>(i), c) = raw.vertices[i][c];
  out.wrist = Eigen::RowVector3d(raw.wrist[0], raw.wrist[1], raw.wrist[2]);
  if (!out.joints.allFinite() || !out.vertices.allFinite() || !out.wrist.allFinite())
    throw Error(ErrorCode::NonFinite, "hand forward produced NaN/Inf");
  return out;
}

void HandRig::validate() const {
  const int V = vertex_count();
  const int J = joint_count();
  require(V >= 1, "rig has no vertices");
  require(J >= 1, "rig has no joints");
  require(shape_dirs.rows() == 3 * V && shape_dirs.cols() == kShapeCoeffs, "shape_dirs must be (3V x 10)");
  require(pose_dirs.rows() == 3 * V && pose_dirs.cols() == 9 * (J - 1), "pose_dirs must be (3V x 9(J-1))");
  require(joint_regressor.rows() == J && joint_regressor.cols() == V, "joint_regressor must be (J x V)");
  require(skinning_weights.rows() == V && skinning_weights.cols() == J, "skinning_weights must be (V x J)");
  require(pose_basis.rows() == 3 * (J - 1) && pose_basis.cols() == kPoseCoeffs, "pose_basis must be (3(J-1) x 15)");
  require(parents[0] == -1, "joint 0 must be the root");
  for (int j = 1; j < J; ++j)
    require(parents[j] >= 0 && parents[j] < j, "joint " + std::to_string(j) + " parent must precede it");
  for (int v = 0; v < V; ++v) {
    double sum = 0.0;
    for (int j = 0; j < J; ++j) {
      require(skinning_weights(v, j) >= 0.0, "negative skinning weight at vertex " + std::to_string(v));
      sum += skinning_weights(v, j);
    }
    require(std::abs(sum - 1.0) <= 1e-6, "skinning row " + std::to_string(v) + " sums to " + std::to_string(sum));
  }
  for (int tip : fingertip_vertex_ids) require(tip >= 0 && tip < V, "fingertip vertex id out of range");
  for (const auto& f : faces)
    for (int i : f) require(i >= 0 && i < V, "face index out of range");
  require(template_vertices.allFinite() && shape_dirs.allFinite() && pose_dirs.allFinite() &&
              joint_regressor.allFinite() && pose_basis.allFinite(),
          "rig contains NaN/Inf");
}

// HRIG container: "HRIG", u32 version, then sections of
// (4-byte tag, u32 rows, u32 cols, rows*cols float64), ending with "END ".
namespace {

constexpr std::uint32_t kRigVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void put_section(std::ostream& out, const char* tag, std::size_t rows, std::size_t cols, const double* data) {
  out.write(tag, 4);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(rows * cols * sizeof(double)));
}

struct Section {
  std::uint32_t rows = 0, cols = 0;
  std::vector<double> data;
};

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (in.gcount() != 4) throw Error(ErrorCode::ParseError, "truncated rig container");
  return v;
}

MatrixRM to_matrix(const Section& s) {
  MatrixRM m(s.rows, s.cols);
  std::copy(s.data.begin(), s.data.end(), m.data());
  return m;
}

int to_index(double v) {
  if (v != std::floor(v) || std::abs(v) > 1e9) throw Error(ErrorCode::ParseError, "non-integer index in rig");
  return static_cast<int>(v);
}

}  // namespace

void write_rig(std::ostream& out, const HandRig& rig) {
  out.write("HRIG", 4);
  put_u32(out, kRigVersion);
  const double side = rig.side == Side::Right ? 1.0 : 0.0;
  put_section(out, "SIDE", 1, 1, &side);
  put_section(out, "TMPL", rig.template_vertices.rows(), 3, rig.template_vertices.data());
  put_section(out, "SHPD", rig.shape_dirs.rows(), rig.shape_dirs.cols(), rig.shape_dirs.data());
  put_section(out, "POSD", rig.pose_dirs.rows(), rig.pose_dirs.cols(), rig.pose_dirs.data());
  put_section(out, "JREG", rig.joint_regressor.rows(), rig.joint_regressor.cols(), rig.joint_regressor.data());
  put_section(out, "SKIN", rig.skinning_weights.rows(), rig.skinning_weights.cols(), rig.skinning_weights.data());
  std::vector<double> parents(rig.parents.begin(), rig.parents.end());
  put_section(out, "PRNT", 1, parents.size(), parents.data());
  put_section(out, "PBAS", rig.pose_basis.rows(), rig.pose_basis.cols(), rig.pose_basis.data());
  std::vector<double> tips(rig.fingertip_vertex_ids.begin(), rig.fingertip_vertex_ids.end());
  put_section(out, "TIPS", 1, tips.size(), tips.data());
  if (!rig.faces.empty()) {
    std::vector<double> faces;
    for (const auto& f : rig.faces) faces.insert(faces.end(), f.begin(), f.end());
    put_section(out, "FACE", rig.faces.size(), 3, faces.data());
  }
  out.write("END ", 4);
  if (!out) throw Error(ErrorCode::IoError, "failed writing rig");
}

HandRig read_rig(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "HRIG", 4) != 0) throw Error(ErrorCode::ParseError, "bad rig magic");
  if (const auto version = get_u32(in); version != kRigVersion)
    throw Error(ErrorCode::ParseError, "unsupported rig version " + std::to_string(version));

  std::map<std::string, Section> sections;
  for (;;) {
    char tag[4];
    in.read(tag, 4);
    if (in.gcount() != 4) throw Error(ErrorCode::ParseError, "truncated rig container");
    const std::string name(tag, 4);
    if (name == "END ") break;
    Section s;
    s.rows = get_u32(in);
    s.cols = get_u32(in);
    const std::size_t n = static_cast<std::size_t>(s.rows) * s.cols;
    if (n > (std::size_t{1} << 28)) throw Error(ErrorCode::ParseError, "rig section too large: " + name);
    s.data.resize(n);
    in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
      throw Error(ErrorCode::ParseError, "truncated rig section " + name);
    sections[name] = std::move(s);
  }
  auto need = [&](const char* name) -> const Section& {
    auto it = sections.find(name);
    if (it == sections.end()) throw Error(ErrorCode::ParseError, std::string("rig lacks section ") + name);
    return it->second;
  };

  HandRig rig;
  rig.side = need("SIDE").data.at(0) != 0.0 ? Side::Right : Side::Left;
  const Section& tmpl = need("TMPL");
  if (tmpl.cols != 3) throw Error(ErrorCode::ParseError, "template must have 3 columns");
  rig.template_vertices.resize(tmpl.rows, 3);
  std::copy(tmpl.data.begin(), tmpl.data.end(), rig.template_vertices.data());
  rig.shape_dirs = to_matrix(need("SHPD"));
  rig.pose_dirs = to_matrix(need("POSD"));
  rig.joint_regressor = to_matrix(need("JREG"));
  rig.skinning_weights = to_matrix(need("SKIN"));
  rig.pose_basis = to_matrix(need("PBAS"));
  for (double p : need("PRNT").data) rig.parents.push_back(to_index(p));
  const Section& tips = need("TIPS");
  if (tips.data.size() != 5) throw Error(ErrorCode::ParseError, "rig needs 5 fingertip ids");
  for (int i = 0; i < 5; ++i) rig.fingertip_vertex_ids[i] = to_index(tips.data[i]);
  if (auto it = sections.find("FACE"); it != sections.end()) {
    if (it->second.cols != 3) throw Error(ErrorCode::ParseError, "faces must have 3 columns");
    for (std::size_t f = 0; f < it->second.rows; ++f)
      rig.faces.push_back({to_index(it->second.data[f * 3]), to_index(it->second.data[f * 3 + 1]),
                           to_index(it->second.data[f * 3 + 2])});
  }
  if (rig.parents.empty()) throw Error(ErrorCode::ParseError, "rig has no joints");
  rig.validate();
  return rig;
}

HandRig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  return read_rig(in);
}

void save_rig(const std::filesystem::path& path, const HandRig& rig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  write_rig(out, rig);
}

namespace {

// Bone chain of one finger in rest pose.
struct FingerSpec {
  std::array<int, 3> joints;
  Vec3 base;
  Vec3 direction;
  std::array<double, 3> lengths;
  double radius;
  std::array<int, 3> rings;  // rings per segment
};

// Order: index, middle, pinky, ring, thumb (matches joint numbering).
std::array<FingerSpec, 5> finger_specs() {
  const Vec3 up(0, 1, 0);
  const Vec3 thumb_dir = Vec3(0.7, 0.7, 0.0).normalized();
  return {{
      {{1, 2, 3}, Vec3(0.022, 0.090, 0.0), up, {0.040, 0.025, 0.020}, 0.0085, {4, 4, 4}},
      {{4, 5, 6}, Vec3(0.003, 0.095, 0.0), up, {0.045, 0.028, 0.022}, 0.0090, {4, 4, 4}},
      {{7, 8, 9}, Vec3(-0.032, 0.080, 0.0), up, {0.033, 0.020, 0.018}, 0.0075, {4, 4, 4}},
      {{10, 11, 12}, Vec3(-0.016, 0.090, 0.0), up, {0.042, 0.026, 0.021}, 0.0085, {4, 4, 4}},
      {{13, 14, 15}, Vec3(0.030, 0.025, 0.0), thumb_dir, {0.035, 0.030, 0.025}, 0.0105, {4, 4, 3}},
  }};
}

// Flexion axis per finger; column k of the pose basis drives joint k+1.
Vec3 flexion_axis(const FingerSpec& f) { return f.direction.cross(Vec3(0, 0, 1)).normalized(); }

MatrixRM synthetic_pose_basis() {
  MatrixRM basis = MatrixRM::Zero(45, kPoseCoeffs);
  for (const auto& f : finger_specs()) {
    const Vec3 axis = flexion_axis(f);
    for (int s = 0; s < 3; ++s) {
      const int j = f.joints[s];
      for (int c = 0; c < 3; ++c) {
        basis(3 * (j - 1) + c, j - 1) += axis[c];
        // Coupled flexion of the next segment, as in a synergy basis.
        if (s > 0) basis(3 * (j - 1) + c, j - 2) += 0.3 * axis[c];
      }
    }
  }
  return basis;
}

double uniform_pm1(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

std::vector<int> synthetic_parents() {
  std::vector<int> parents(kRigJoints, -1);
  for (const auto& f : finger_specs()) {
    parents[f.joints[0]] = 0;
    parents[f.joints[1]] = f.joints[0];
    parents[f.joints[2]] = f.joints[1];
  }
  return parents;
}

}  // namespace

HandRig make_synthetic_rig(Side side) {
  constexpr int kPalmRings = 25, kPalmRingSize = 12, kFingerRingSize = 8;
  constexpr double kPalmLength = 0.09;
  std::vector<Vec3> verts;
  std::vector<std::array<double, kRigJoints>> weights;
  std::vector<Vec3> radial;   // outward offset from the local bone axis
  std::vector<double> along;  // arclength along the finger, 0 on the palm
  std::vector<Vec3> finger_dir;
  std::vector<std::array<int, 3>> faces;
  MatrixRM regressor = MatrixRM::Zero(kRigJoints, kStandardVertices);
  std::array<int, 5> tips{};

  auto add_vertex = [&](const Vec3& p, const Vec3& r, double s, const Vec3& d, int j0, int j1, double w0) {
    verts.push_back(p);
    radial.push_back(r);
    along.push_back(s);
    finger_dir.push_back(d);
    std::array<double, kRigJoints> w{};
    w[j0] += w0;
    w[j1] += 1.0 - w0;
    weights.push_back(w);
    return static_cast<int>(verts.size()) - 1;
  };
  auto tube_faces = [&](int first_a, int first_b, int n) {
    for (int k = 0; k < n; ++k) {
      const int a0 = first_a + k, a1 = first_a + (k + 1) % n;
      const int b0 = first_b + k, b1 = first_b + (k + 1) % n;
      faces.push_back({a0, a1, b1});
      faces.push_back({a0, b1, b0});
    }
  };

  // Palm: flattened tapered tube from the wrist to the knuckle line.
  const int cap = add_vertex(Vec3(0, -0.005, 0), Vec3(0, -0.005, 0), 0.0, Vec3::UnitY(), 0, 0, 1.0);
  int prev_ring = -1;
  for (int i = 0; i < kPalmRings; ++i) {
    const double y = kPalmLength * i / (kPalmRings - 1);
    const double half_width = 0.032 + 0.010 * i / (kPalmRings - 1);
    const int first = static_cast<int>(verts.size());
    for (int k = 0; k < kPalmRingSize; ++k) {
      const double phi = 2.0 * std::numbers::pi * k / kPalmRingSize;
      const Vec3 r(half_width * std::cos(phi), 0.0, 0.012 * std::sin(phi));
      add_vertex(Vec3(0, y, 0) + r, r, 0.0, Vec3::UnitY(), 0, 0, 1.0);
      if (i == 0) regressor(0, first + k) = 1.0 / kPalmRingSize;
    }
    if (i == 0) {
      for (int k = 0; k < kPalmRingSize; ++k) faces.push_back({cap, first + (k + 1) % kPalmRingSize, first + k});
    } else {
      tube_faces(prev_ring, first, kPalmRingSize);
    }
    prev_ring = first;
  }

  const auto specs = finger_specs();
  const std::array<int, 5> tip_slot = {1, 2, 4, 3, 0};  // slot of thumb, index, middle, ring, pinky
  for (int fi = 0; fi < 5; ++fi) {
    const auto& f = specs[fi];
    const Vec3 u = flexion_axis(f);
    const Vec3 w = Vec3::UnitZ();
    Vec3 joint_pos = f.base;
    double arclength = 0.0;
    prev_ring = -1;
    for (int s = 0; s < 3; ++s) {
      const int j = f.joints[s];
      const int parent = s == 0 ? 0 : f.joints[s - 1];
      const double blend = s == 0 ? 0.006 : 0.004;
      for (int ring = 0; ring < f.rings[s]; ++ring) {
        const double local = f.lengths[s] * ring / f.rings[s];
        const Vec3 center = joint_pos + f.direction * local;
        const double wj = local < blend ? 0.5 + 0.5 * local / blend : 1.0;
        const int first = static_cast<int>(verts.size());
        for (int k = 0; k < kFingerRingSize; ++k) {
          const double phi = 2.0 * std::numbers::pi * k / kFingerRingSize;
          const Vec3 r = f.radius * (std::cos(phi) * u + std::sin(phi) * w);
          add_vertex(center + r, r, arclength + local, f.direction, j, parent, wj);
          if (ring == 0) regressor(j, first + k) = 1.0 / kFingerRingSize;
        }
        if (prev_ring >= 0) tube_faces(prev_ring, first, kFingerRingSize);
        prev_ring = first;
      }
      joint_pos += f.direction * f.lengths[s];
      arclength += f.lengths[s];
    }
    const int tip = add_vertex(joint_pos, Vec3::Zero(), arclength, f.direction, f.joints[2], f.joints[2], 1.0);
    for (int k = 0; k < kFingerRingSize; ++k)
      faces.push_back({prev_ring + k, prev_ring + (k + 1) % kFingerRingSize, tip});
    tips[tip_slot[fi]] = tip;
  }
  require(static_cast<int>(verts.size()) == kStandardVertices, "synthetic rig vertex count drifted");

  HandRig rig;
  rig.side = Side::Right;
  const int V = kStandardVertices;
  rig.template_vertices.resize(V, 3);
  rig.skinning_weights = MatrixRM::Zero(V, kRigJoints);
  for (int v = 0; v < V; ++v) {
    rig.template_vertices.row(v) = verts[v].transpose();
    for (int j = 0; j < kRigJoints; ++j) rig.skinning_weights(v, j) = weights[v][j];
  }
  rig.joint_regressor = regressor;
  rig.parents = synthetic_parents();
  rig.pose_basis = synthetic_pose_basis();
  rig.fingertip_vertex_ids = tips;
  rig.faces = faces;

  // Shape space: global scale, finger length, palm width, thickness, then
  // six smooth seeded fields.
  std::mt19937_64 rng(20240917);
  rig.shape_dirs = MatrixRM::Zero(3 * V, kShapeCoeffs);
  std::array<std::array<double, 4>, 18> field{};
  for (auto& row : field)
    for (double& x : row) x = uniform_pm1(rng);
  for (int v = 0; v < V; ++v) {
    const Vec3 p = verts[v];
    for (int c = 0; c < 3; ++c) {
      double* row = &rig.shape_dirs(3 * v + c, 0);
      row[0] = 0.08 * p[c];
      row[1] = 0.1 * along[v] * finger_dir[v][c];
      row[2] = c == 0 ? 0.1 * p[0] : 0.0;
      row[3] = 0.1 * radial[v][c];
      for (int k = 4; k < kShapeCoeffs; ++k) {
        const auto& a = field[(k - 4) * 3 + c];
        row[k] = 0.002 * std::sin(40.0 * (a[0] * p[0] + a[1] * p[1] + a[2] * p[2]) + 3.0 * a[3]);
      }
    }
  }

  // Pose correctives, local to the joints that skin each vertex.
  const auto parents = rig.parents;
  rig.pose_dirs = MatrixRM::Zero(3 * V, 9 * (kRigJoints - 1));
  for (int v = 0; v < V; ++v)
    for (int j = 1; j < kRigJoints; ++j) {
      bool affected = rig.skinning_weights(v, j) > 0.0;
      for (int child = 1; child < kRigJoints; ++child)
        if (parents[child] == j && rig.skinning_weights(v, child) > 0.0) affected = true;
      for (int c = 0; c < 3; ++c)
        for (int q = 0; q < 9; ++q) {
          const double g = uniform_pm1(rng);
          if (affected) rig.pose_dirs(3 * v + c, (j - 1) * 9 + q) = 0.003 * g;
        }
    }

  rig.validate();
  return side == Side::Right ? rig : mirror_rig(rig);
}

HandRig make_test_rig() {
  const HandRig full = make_synthetic_rig(Side::Right);
  HandRig rig;
  rig.side = Side::Right;
  rig.parents = full.parents;
  rig.pose_basis = full.pose_basis;
  const int V = kRigJoints;
  const Points3 joints = full.joint_regressor * full.template_vertices;
  rig.template_vertices = joints;
  rig.template_vertices.col(2).array() += 0.002;
  rig.joint_regressor = MatrixRM::Identity(kRigJoints, V);
  rig.skinning_weights = MatrixRM::Zero(V, kRigJoints);
  rig.skinning_weights(0, 0) = 1.0;
  for (int j = 1; j < kRigJoints; ++j) {
    rig.skinning_weights(j, rig.parents[j]) = 0.7;
    rig.skinning_weights(j, j) = 0.3;
  }
  rig.shape_dirs = MatrixRM::Zero(3 * V, kShapeCoeffs);
  for (int v = 0; v < V; ++v)
    for (int c = 0; c < 3; ++c) rig.shape_dirs(3 * v + c, 0) = 0.08 * rig.template_vertices(v, c);
  rig.pose_dirs = MatrixRM::Zero(3 * V, 9 * (kRigJoints - 1));
  rig.fingertip_vertex_ids = {15, 3, 6, 12, 9};
  rig.validate();
  return rig;
}

HandRig mirror_rig(const HandRig& rig) {
  HandRig m = rig;
  m.side = rig.side == Side::Right ? Side::Left : Side::Right;
  const int V = rig.vertex_count();
  const int J = rig.joint_count();
  m.template_vertices.col(0) = -rig.template_vertices.col(0);
  for (int v = 0; v < V; ++v) m.shape_dirs.row(3 * v) = -rig.shape_dirs.row(3 * v);
  // Under x -> -x a rotation becomes M R M, so (R - I)_{ab} picks up
  // sign(a) * sign(b); the vertex axis contributes one more sign.
  const double sign[3] = {-1.0, 1.0, 1.0};
  for (int v = 0; v < V; ++v)
    for (int c = 0; c < 3; ++c)
      for (int j = 1; j < J; ++j)
        for (int q = 0; q < 9; ++q) {
          const double s = sign[c] * sign[q / 3] * sign[q % 3];
          m.pose_dirs(3 * v + c, (j - 1) * 9 + q) = s * rig.pose_dirs(3 * v + c, (j - 1) * 9 + q);
        }
  // Axis-angle vectors are pseudo-vectors: (a, b, c) -> (a, -b, -c).
  for (int j = 1; j < J; ++j) {
    m.pose_basis.row(3 * (j - 1) + 1) = -rig.pose_basis.row(3 * (j - 1) + 1);
    m.pose_basis.row(3 * (j - 1) + 2) = -rig.pose_basis.row(3 * (j - 1) + 2);
  }
  for (auto& f : m.faces) std::swap(f[1], f[2]);
  return m;
}

ManoParams mirror_params(const ManoParams& p) {
  ManoParams m = p;
  m.side = p.side == Side::Right ? Side::Left : Side::Right;
  m.trans[0] = -p.trans[0];
  m.rot[1] = -p.rot[1];
  m.rot[2] = -p.rot[2];
  return m;
}

RigPair make_rig_pair(const HandRig& right) {
  if (right.side != Side::Right) throw Error(ErrorCode::SideMismatch, "make_rig_pair expects the right-hand rig");
  return {mirror_rig(right), right};
}

void rasterize_into(HandMask& mask, const Points3& vertices, const std::vector<std::array<int, 3>>& faces,
                    const CameraIntrinsics& camera) {
  const SensorGeometry& g = mask.geometry;
  for (const auto& f : faces) {
    double u[3], v[3];
    bool visible = true;
    for (int k = 0; k < 3; ++k) {
      const auto p = vertices.row(f[k]);
      if (p(2) <= 1e-6) {
        visible = false;
        break;
      }
      u[k] = camera.fx * p(0) / p(2) + camera.cx;
      v[k] = camera.fy * p(1) / p(2) + camera.cy;
    }
    if (!visible) continue;
    const double area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0]);
    if (area == 0.0 || !std::isfinite(area)) continue;
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({u[0], u[1], u[2]}))));
    const int x1 = std::min(g.width - 1, static_cast<int>(std::floor(std::max({u[0], u[1], u[2]}))));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({v[0], v[1], v[2]}))));
    const int y1 = std::min(g.height - 1, static_cast<int>(std::floor(std::max({v[0], v[1], v[2]}))));
    const double orient = area > 0 ? 1.0 : -1.0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        bool inside = true;
        for (int k = 0; k < 3 && inside; ++k) {
          const int n = (k + 1) % 3;
          const double e = (u[n] - u[k]) * (y - v[k]) - (v[n] - v[k]) * (x - u[k]);
          inside = orient * e >= 0.0;
        }
        if (inside) mask.at(x, y) = 1;
      }
  }
}

HandMask project_mask(const Points3& vertices, const std::vector<std::array<int, 3>>& faces,
                      const CameraIntrinsics& camera, const SensorGeometry& geometry) {
  HandMask mask(geometry);
  rasterize_into(mask, vertices, faces, camera);
  return mask;
}

void write_obj(const std::filesystem::path& path, const HandOutput& output,
               const std::vector<std::array<int, 3>>& faces) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  for (Eigen::Index i = 0; i < output.vertices.rows(); ++i)
    std::fprintf(f, "v %.9f %.9f %.9f\n", output.vertices(i, 0), output.vertices(i, 1), output.vertices(i, 2));
  for (const auto& face : faces) std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
  if (std::fclose(f) != 0) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace evego
