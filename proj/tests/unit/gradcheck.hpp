#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "evego/recon_head.hpp"

namespace testing {

struct GradCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Tape gradient of the sample loss against central differences on `count`
// parameters drawn uniformly from the whole model.
inline GradCheck gradient_check(evego::HeadModel& model, const evego::TrainSample& sample, const evego::RigPair& rigs,
                                const evego::HandLossWeights& weights, std::size_t count, std::uint64_t seed,
                                double h = 1e-5) {
  model.zero_grad();
  {
    evego::nn::Tape tape;
    const auto out = evego::forward_head(tape, model, sample.cloud);
    tape.backward(evego::hand_loss_node(tape, out, sample.gt, rigs, weights));
  }
  std::vector<std::pair<std::string, std::size_t>> slots;
  for (const auto& [name, t] : model.parameters())
    for (std::size_t i = 0; i < t.size(); ++i) slots.emplace_back(name, i);
  std::mt19937_64 rng(seed);
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(std::min(count, slots.size()));

  GradCheck result;
  for (const auto& [name, i] : slots) {
    auto& t = model.at(name);
    const double saved = t.data[i];
    t.data[i] = saved + h;
    const double up = evego::evaluate_sample_loss(model, sample, rigs, weights).total;
    t.data[i] = saved - h;
    const double down = evego::evaluate_sample_loss(model, sample, rigs, weights).total;
    t.data[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double ad = t.grad[i];
    const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-8});
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst = name + "[" + std::to_string(i) + "] ad=" + std::to_string(ad) + " fd=" + std::to_string(fd);
    }
    ++result.checked;
  }
  return result;
}

}  // namespace testing
