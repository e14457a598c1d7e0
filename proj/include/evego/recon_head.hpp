#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evego/losses.hpp"
#include "evego/mano_rig.hpp"
#include "evego/representations.hpp"
#include "evego/tensor_tape.hpp"

namespace evego {

enum class AttentionMode : std::uint8_t {
  Cross,  // query from one branch, key/value from the other
  Self,   // query, key and value from the same branch (ablation)
};

struct HeadConfig {
  std::vector<int> point_feature_dims{5, 64, 128};
  int global_dim = 128;  // must equal the last encoder width
  int attn_dim = 64;
  int heads = 1;
  int tokens = 4;  // learned tokens per branch
  std::vector<int> decoder_dims{256, 128, kParamsPerHand};  // first = tokens * attn_dim
  AttentionMode mode = AttentionMode::Cross;
  std::uint64_t seed = 1;

  void validate() const;
};

// Point encoder (shared MLP + masked max-pool), two branch projections to
// `tokens` x `attn_dim` token sets, per-branch Q/K/V attention and one
// decoder per hand emitting 31 MANO values (theta, beta, trans, rot).
class HeadModel {
 public:
  HeadModel() = default;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from config.seed.
  explicit HeadModel(HeadConfig config);

  const HeadConfig& config() const { return config_; }
  std::map<std::string, nn::Tensor>& parameters() { return params_; }
  const std::map<std::string, nn::Tensor>& parameters() const { return params_; }
  nn::Tensor& at(const std::string& name) { return params_.at(name); }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  HeadConfig config_;
  std::map<std::string, nn::Tensor> params_;
};

struct HeadOutputIds {
  nn::Tape::Id left = 0;   // 1 x 31
  nn::Tape::Id right = 0;  // 1 x 31
};

// Records the forward pass. The model's parameters are bound as leaves, so
// the model must outlive the tape.
HeadOutputIds forward_head(nn::Tape& tape, HeadModel& model, const EventCloud& cloud);

// Inference convenience: decoded parameters for (left, right).
std::pair<ManoParams, ManoParams> forward_head(const HeadModel& model, const EventCloud& cloud);

ManoParams decode_params(std::span<const double> values, Side side);

struct TrainSample {
  EventCloud cloud;
  TwoHands gt;  // params and outputs of the hands present
};

// Appends the hand loss of one sample: predicted parameters go through the
// rig, then through total_hand_loss. Returns the 1 x 1 loss node.
nn::Tape::Id hand_loss_node(nn::Tape& tape, const HeadOutputIds& out, const TwoHands& gt, const RigPair& rigs,
                            const HandLossWeights& weights, HandLossBreakdown* breakdown = nullptr);

// Same loss evaluated without recording anything differentiable.
HandLossBreakdown evaluate_sample_loss(const HeadModel& model, const TrainSample& sample, const RigPair& rigs,
                                       const HandLossWeights& weights);

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  // Applies one step using each parameter's grad buffer.
  void step(HeadModel& model);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

struct TrainConfig {
  int epochs = 200;
  AdamConfig optimizer{};
  HandLossWeights weights{};
  unsigned threads = 1;
};

struct EpochLog {
  int epoch = 0;
  HandLossBreakdown loss;  // dataset mean before the epoch's update
};

// Full-batch Adam: one step per epoch on the mean gradient. Per-sample
// gradients are summed in sample order, so results do not depend on
// `threads`. Throws NonFinite with the step index on NaN/Inf.
std::vector<EpochLog> train_toy(HeadModel& model, std::span<const TrainSample> dataset, const RigPair& rigs,
                                const TrainConfig& config);

// Mean loss over a dataset at the current parameters.
HandLossBreakdown dataset_loss(const HeadModel& model, std::span<const TrainSample> dataset, const RigPair& rigs,
                               const HandLossWeights& weights, unsigned threads = 1);

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

// EVHD checkpoint: "EVHD", u32 version, u32 config-json length + bytes,
// u32 tensor count, then per tensor: u32 name length + name, u32 ndims,
// u64 dims, float64 data.
void save_checkpoint(const std::filesystem::path& path, const HeadModel& model);
HeadModel load_checkpoint(const std::filesystem::path& path);

}  // namespace evego
