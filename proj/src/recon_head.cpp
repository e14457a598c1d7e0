#include "evego/recon_head.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include <json.hpp>

#include "evego/errors.hpp"
#include "evego/parallel.hpp"

namespace evego {

using nn::Mat;
using nn::Tape;
using nn::Tensor;

namespace {

const char* side_name(int s) { return s == 0 ? "left" : "right"; }

// Builds the forward graph; `bind(name)` returns the tape node for a
// parameter tensor.
template <typename Bind>
HeadOutputIds build_forward(Tape& tape, const HeadConfig& cfg, const EventCloud& cloud, Bind&& bind) {
  const std::size_t valid = cloud.validity;
  if (valid > cloud.points.size()) throw Error(ErrorCode::InvariantViolation, "cloud validity exceeds its budget");
  Tape::Id global;
  if (valid == 0) {
    global = tape.constant(Mat::Zero(1, cfg.global_dim));
  } else {
    Mat x(static_cast<Eigen::Index>(valid), 5);
    for (std::size_t i = 0; i < valid; ++i) {
      const auto& p = cloud.points[i];
      const auto r = static_cast<Eigen::Index>(i);
      x(r, 0) = p.x;
      x(r, 1) = p.y;
      x(r, 2) = p.t;
      x(r, 3) = p.p;
      x(r, 4) = p.n;
    }
    Tape::Id h = tape.constant(std::move(x));
    for (std::size_t l = 0; l + 1 < cfg.point_feature_dims.size(); ++l) {
      const std::string prefix = "enc." + std::to_string(l);
      h = tape.relu(tape.add_row(tape.matmul(h, bind(prefix + ".W")), bind(prefix + ".b")));
    }
    global = tape.max_rows(h, valid);
  }

  const auto S = static_cast<std::size_t>(cfg.tokens);
  const auto d = static_cast<std::size_t>(cfg.attn_dim);
  Tape::Id tokens[2];
  for (int s = 0; s < 2; ++s) {
    const std::string prefix = std::string("branch.") + side_name(s);
    tokens[s] = tape.reshape(tape.add_row(tape.matmul(global, bind(prefix + ".W")), bind(prefix + ".b")), S, d);
  }

  const auto dh = d / static_cast<std::size_t>(cfg.heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tape::Id out[2];
  for (int s = 0; s < 2; ++s) {
    const std::string prefix = std::string("attn.") + side_name(s);
    const Tape::Id source = cfg.mode == AttentionMode::Cross ? tokens[1 - s] : tokens[s];
    const Tape::Id q = tape.matmul(tokens[s], bind(prefix + ".q"));
    const Tape::Id k = tape.matmul(source, bind(prefix + ".k"));
    const Tape::Id v = tape.matmul(source, bind(prefix + ".v"));
    std::vector<Tape::Id> heads;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const std::size_t b = static_cast<std::size_t>(hd) * dh, e = b + dh;
      const Tape::Id qh = cfg.heads == 1 ? q : tape.slice_cols(q, b, e);
      const Tape::Id kh = cfg.heads == 1 ? k : tape.slice_cols(k, b, e);
      const Tape::Id vh = cfg.heads == 1 ? v : tape.slice_cols(v, b, e);
      const Tape::Id weights = tape.softmax_rows(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt));
      heads.push_back(tape.matmul(weights, vh));
    }
    const Tape::Id mixed = heads.size() == 1 ? heads[0] : tape.concat_cols(heads);
    Tape::Id h = tape.reshape(tape.add(tokens[s], mixed), 1, S * d);
    const std::size_t layers = cfg.decoder_dims.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string name = std::string("dec.") + side_name(s) + "." + std::to_string(l);
      h = tape.add_row(tape.matmul(h, bind(name + ".W")), bind(name + ".b"));
      if (l + 1 < layers) h = tape.relu(h);
    }
    out[s] = h;
  }
  return {out[0], out[1]};
}

double uniform_pm(std::mt19937_64& rng, double bound) {
  return (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * bound;
}

}  // namespace

void HeadConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (point_feature_dims.size() < 2 || point_feature_dims.front() != 5)
    fail("encoder widths must start at 5 (x, y, t, p, n)");
  if (point_feature_dims.back() != global_dim) fail("last encoder width must equal global_dim");
  for (int w : point_feature_dims)
    if (w < 1) fail("encoder widths must be positive");
  if (attn_dim < 1 || heads < 1 || attn_dim % heads != 0) fail("attn_dim must be a positive multiple of heads");
  if (tokens < 1) fail("tokens must be >= 1");
  if (decoder_dims.size() < 2 || decoder_dims.front() != tokens * attn_dim)
    fail("decoder input width must equal tokens * attn_dim");
  if (decoder_dims.back() != kParamsPerHand) fail("decoder must emit 31 values per hand");
  for (int w : decoder_dims)
    if (w < 1) fail("decoder widths must be positive");
}

HeadModel::HeadModel(HeadConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  auto add_linear = [&](const std::string& prefix, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w(static_cast<std::size_t>(in), static_cast<std::size_t>(out));
    for (double& x : w.data) x = uniform_pm(rng, bound);
    Tensor b(1, static_cast<std::size_t>(out));
    for (double& x : b.data) x = uniform_pm(rng, bound);
    params_[prefix + ".W"] = std::move(w);
    params_[prefix + ".b"] = std::move(b);
  };
  auto add_matrix = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w(static_cast<std::size_t>(in), static_cast<std::size_t>(out));
    for (double& x : w.data) x = uniform_pm(rng, bound);
    params_[name] = std::move(w);
  };
  const auto& enc = config_.point_feature_dims;
  for (std::size_t l = 0; l + 1 < enc.size(); ++l) add_linear("enc." + std::to_string(l), enc[l], enc[l + 1]);
  for (int s = 0; s < 2; ++s)
    add_linear(std::string("branch.") + side_name(s), config_.global_dim, config_.tokens * config_.attn_dim);
  for (int s = 0; s < 2; ++s)
    for (const char* m : {".q", ".k", ".v"})
      add_matrix(std::string("attn.") + side_name(s) + m, config_.attn_dim, config_.attn_dim);
  const auto& dec = config_.decoder_dims;
  for (int s = 0; s < 2; ++s)
    for (std::size_t l = 0; l + 1 < dec.size(); ++l)
      add_linear(std::string("dec.") + side_name(s) + "." + std::to_string(l), dec[l], dec[l + 1]);
}

std::size_t HeadModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void HeadModel::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

HeadOutputIds forward_head(Tape& tape, HeadModel& model, const EventCloud& cloud) {
  return build_forward(tape, model.config(), cloud,
                       [&](const std::string& name) { return tape.parameter(model.at(name)); });
}

ManoParams decode_params(std::span<const double> v, Side side) {
  if (v.size() != kParamsPerHand) throw Error(ErrorCode::ShapeMismatch, "decoder output must have 31 values");
  ManoParams p;
  p.side = side;
  std::copy_n(v.begin(), kPoseCoeffs, p.theta.begin());
  std::copy_n(v.begin() + kPoseCoeffs, kShapeCoeffs, p.beta.begin());
  std::copy_n(v.begin() + kPoseCoeffs + kShapeCoeffs, 3, p.trans.begin());
  std::copy_n(v.begin() + kPoseCoeffs + kShapeCoeffs + 3, 3, p.rot.begin());
  return p;
}

std::pair<ManoParams, ManoParams> forward_head(const HeadModel& model, const EventCloud& cloud) {
  Tape tape;
  const auto ids = build_forward(tape, model.config(), cloud, [&](const std::string& name) {
    const Tensor& t = model.parameters().at(name);
    return tape.constant(Eigen::Map<const Mat>(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                                               static_cast<Eigen::Index>(t.cols())));
  });
  const Mat& l = tape.value(ids.left);
  const Mat& r = tape.value(ids.right);
  if (!l.allFinite() || !r.allFinite()) throw Error(ErrorCode::NonFinite, "head produced NaN/Inf");
  return {decode_params({l.data(), kParamsPerHand}, Side::Left), decode_params({r.data(), kParamsPerHand}, Side::Right)};
}

Tape::Id hand_loss_node(Tape& tape, const HeadOutputIds& out, const TwoHands& gt, const RigPair& rigs,
                        const HandLossWeights& weights, HandLossBreakdown* breakdown) {
  using ad::Real;
  const Mat& raw_left = tape.value(out.left);
  const Mat& raw_right = tape.value(out.right);

  ad::TapeScope scope;
  std::array<Real, 2 * kParamsPerHand> vars;
  for (int i = 0; i < kParamsPerHand; ++i) {
    vars[i] = Real::variable(raw_left(0, i));
    vars[kParamsPerHand + i] = Real::variable(raw_right(0, i));
  }
  auto pose_of = [&](int side) {
    const Real* v = vars.data() + side * kParamsPerHand;
    HandPoseT<Real> p;
    std::copy_n(v, kPoseCoeffs, p.theta.begin());
    std::copy_n(v + kPoseCoeffs, kShapeCoeffs, p.beta.begin());
    std::copy_n(v + kPoseCoeffs + kShapeCoeffs, 3, p.trans.begin());
    std::copy_n(v + kPoseCoeffs + kShapeCoeffs + 3, 3, p.rot.begin());
    return p;
  };

  const std::optional<HandEstimate>* gts[2] = {&gt.left, &gt.right};
  const HandRig* rig_of[2] = {&rigs.left, &rigs.right};
  HandOutputT<Real> pred[2];
  Real joints(0.0), vertices(0.0), mano(0.0), interhand(0.0);
  int hands = 0;
  for (int s = 0; s < 2; ++s) {
    const auto& g = *gts[s];
    if (!g) continue;
    if (g->params.side != rig_of[s]->side) throw Error(ErrorCode::SideMismatch, "ground truth stored on the wrong side");
    const auto pose = pose_of(s);
    pred[s] = forward_generic(*rig_of[s], pose);
    if (g->output.joints.rows() != kOutputJoints || g->output.vertices.rows() != rig_of[s]->vertex_count())
      throw Error(ErrorCode::ShapeMismatch, "ground-truth hand output has the wrong shape");
    joints += loss_core::mean_l1(&pred[s].joints[0][0], g->output.joints.data(), kOutputJoints);
    vertices += loss_core::mean_l1(&pred[s].vertices[0][0], g->output.vertices.data(), pred[s].vertices.size());
    mano += loss_core::l2_distance(pose.theta.data(), g->params.theta.data(), kPoseCoeffs) +
            loss_core::l2_distance(pose.beta.data(), g->params.beta.data(), kShapeCoeffs);
    ++hands;
  }
  if (hands > 0) {
    joints = joints / Real(static_cast<double>(hands));
    vertices = vertices / Real(static_cast<double>(hands));
  }
  if (gt.left && gt.right)
    interhand = loss_core::interhand(&pred[0].joints[0][0], &pred[1].joints[0][0], gt.left->output.joints.data(),
                                     gt.right->output.joints.data(), kOutputJoints);
  const Real total = Real(weights.lambda_gamma) * joints + Real(weights.lambda_delta) * interhand +
                     Real(weights.lambda_epsilon) * vertices + Real(weights.lambda_zeta) * mano;
  if (breakdown) *breakdown = {joints.v, interhand.v, vertices.v, mano.v, total.v};

  const auto adj = scope.tape().adjoints(total.id);
  std::vector<double> grad(vars.size(), 0.0);
  for (std::size_t i = 0; i < vars.size(); ++i) grad[i] = adj[static_cast<std::size_t>(vars[i].id)];

  Mat value(1, 1);
  value(0, 0) = total.v;
  return tape.custom({out.left, out.right}, std::move(value),
                     [grad = std::move(grad)](const Mat& dy, std::span<Mat*> g) {
                       for (int i = 0; i < kParamsPerHand; ++i) {
                         (*g[0])(0, i) += dy(0, 0) * grad[static_cast<std::size_t>(i)];
                         (*g[1])(0, i) += dy(0, 0) * grad[static_cast<std::size_t>(kParamsPerHand + i)];
                       }
                     });
}

HandLossBreakdown evaluate_sample_loss(const HeadModel& model, const TrainSample& sample, const RigPair& rigs,
                                       const HandLossWeights& weights) {
  const auto [left, right] = forward_head(model, sample.cloud);
  TwoHands pred;
  if (sample.gt.left) pred.left = HandEstimate{left, forward(rigs.left, left)};
  if (sample.gt.right) pred.right = HandEstimate{right, forward(rigs.right, right)};
  return total_hand_loss(pred, sample.gt, weights);
}

void Adam::step(HeadModel& model) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : model.parameters()) {
    if (p.grad.size() != p.data.size()) continue;
    auto& [m, v] = moments_[name];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      p.data[i] -= config_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
    }
  }
}

namespace {

HandLossBreakdown& operator+=(HandLossBreakdown& a, const HandLossBreakdown& b) {
  a.joints += b.joints;
  a.interhand += b.interhand;
  a.vertices += b.vertices;
  a.mano += b.mano;
  a.total += b.total;
  return a;
}

HandLossBreakdown scaled(HandLossBreakdown b, double s) {
  b.joints *= s;
  b.interhand *= s;
  b.vertices *= s;
  b.mano *= s;
  b.total *= s;
  return b;
}

bool finite(const HandLossBreakdown& b) {
  return std::isfinite(b.joints) && std::isfinite(b.interhand) && std::isfinite(b.vertices) &&
         std::isfinite(b.mano) && std::isfinite(b.total);
}

}  // namespace

HandLossBreakdown dataset_loss(const HeadModel& model, std::span<const TrainSample> dataset, const RigPair& rigs,
                               const HandLossWeights& weights, unsigned threads) {
  std::vector<HandLossBreakdown> per(dataset.size());
  parallel_for(dataset.size(), threads,
               [&](std::size_t i) { per[i] = evaluate_sample_loss(model, dataset[i], rigs, weights); });
  HandLossBreakdown sum;
  for (const auto& b : per) sum += b;
  return dataset.empty() ? sum : scaled(sum, 1.0 / static_cast<double>(dataset.size()));
}

std::vector<EpochLog> train_toy(HeadModel& model, std::span<const TrainSample> dataset, const RigPair& rigs,
                                const TrainConfig& config) {
  if (dataset.empty()) throw Error(ErrorCode::ConfigError, "training set is empty");
  std::vector<std::string> names;
  for (const auto& [name, t] : model.parameters()) names.push_back(name);

  Adam adam(config.optimizer);
  std::vector<EpochLog> log;
  const std::size_t n = dataset.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<HandLossBreakdown> losses(n);
    std::vector<std::vector<std::vector<double>>> grads(n);
    parallel_for(n, config.threads, [&](std::size_t i) {
      Tape tape;
      std::vector<Tape::Id> bound(names.size());
      const auto ids = build_forward(tape, model.config(), dataset[i].cloud, [&](const std::string& name) {
        const Tape::Id id = tape.parameter(model.at(name));
        bound[static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin())] = id;
        return id;
      });
      const auto loss = hand_loss_node(tape, ids, dataset[i].gt, rigs, config.weights, &losses[i]);
      tape.backward(loss, false);
      grads[i].resize(names.size());
      for (std::size_t p = 0; p < names.size(); ++p) {
        const Mat& g = tape.grad(bound[p]);
        grads[i][p].assign(g.data(), g.data() + g.size());
      }
    });

    HandLossBreakdown mean;
    for (const auto& b : losses) mean += b;
    mean = scaled(mean, 1.0 / static_cast<double>(n));
    if (!finite(mean))
      throw Error(ErrorCode::NonFinite, "loss became non-finite at step " + std::to_string(epoch),
                  static_cast<std::size_t>(epoch));
    log.push_back({epoch, mean});

    model.zero_grad();
    for (std::size_t p = 0; p < names.size(); ++p) {
      auto& g = model.at(names[p]).grad;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < g.size(); ++q) g[q] += grads[i][p][q];
      for (double& x : g) {
        x /= static_cast<double>(n);
        if (!std::isfinite(x))
          throw Error(ErrorCode::NonFinite, "gradient became non-finite at step " + std::to_string(epoch),
                      static_cast<std::size_t>(epoch));
      }
    }
    adam.step(model);
  }
  return log;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::fprintf(f, "epoch,L_joints,L_interhand,L_vertices,L_MANO,L_total\n");
  for (const auto& e : log)
    std::fprintf(f, "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", e.epoch, e.loss.joints, e.loss.interhand, e.loss.vertices,
                 e.loss.mano, e.loss.total);
  if (std::fclose(f) != 0) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json config_json(const HeadConfig& c) {
  return {{"point_feature_dims", c.point_feature_dims},
          {"global_dim", c.global_dim},
          {"attn_dim", c.attn_dim},
          {"heads", c.heads},
          {"tokens", c.tokens},
          {"decoder_dims", c.decoder_dims},
          {"mode", c.mode == AttentionMode::Cross ? "cross" : "self"},
          {"seed", c.seed}};
}

HeadConfig config_from_json(const nlohmann::json& j) {
  HeadConfig c;
  c.point_feature_dims = j.at("point_feature_dims").get<std::vector<int>>();
  c.global_dim = j.at("global_dim").get<int>();
  c.attn_dim = j.at("attn_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.tokens = j.at("tokens").get<int>();
  c.decoder_dims = j.at("decoder_dims").get<std::vector<int>>();
  c.mode = j.at("mode").get<std::string>() == "self" ? AttentionMode::Self : AttentionMode::Cross;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (in.gcount() != sizeof v) throw Error(ErrorCode::ParseError, "truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const HeadModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write("EVHD", 4);
  put(out, kCheckpointVersion);
  const std::string cfg = config_json(model.config()).dump();
  put(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  put(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, t] : model.parameters()) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

HeadModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "EVHD", 4) != 0) throw Error(ErrorCode::ParseError, "bad checkpoint magic");
  if (get<std::uint32_t>(in) != kCheckpointVersion) throw Error(ErrorCode::ParseError, "unsupported checkpoint version");
  std::string cfg(get<std::uint32_t>(in), '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  HeadConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("checkpoint config: ") + e.what());
  }
  HeadModel model(config);
  const auto count = get<std::uint32_t>(in);
  if (count != model.parameters().size()) throw Error(ErrorCode::ParseError, "checkpoint tensor count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    auto it = model.parameters().find(name);
    if (it == model.parameters().end()) throw Error(ErrorCode::ParseError, "unknown tensor " + name);
    std::vector<std::size_t> shape(get<std::uint32_t>(in));
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
    if (shape != it->second.shape) throw Error(ErrorCode::ParseError, "tensor " + name + " has the wrong shape");
    in.read(reinterpret_cast<char*>(it->second.data.data()),
            static_cast<std::streamsize>(it->second.data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(it->second.data.size() * sizeof(double)))
      throw Error(ErrorCode::ParseError, "truncated tensor " + name);
  }
  return model;
}

}  // namespace evego
