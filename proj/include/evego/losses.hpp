#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "evego/mano_rig.hpp"
#include "evego/scalar_ad.hpp"
#include "evego/segmask.hpp"

namespace evego {

struct MaskLossWeights {
  double lambda_alpha = 0.7;  // BCE
  double lambda_beta = 0.3;   // Dice
};

struct HandLossWeights {
  double lambda_gamma = 0.1;    // joints
  double lambda_delta = 1.0;    // interhand
  double lambda_epsilon = 1.0;  // vertices
  double lambda_zeta = 20.0;    // MANO parameters
};

// Per-pixel foreground probabilities, row-major.
struct PixelProbMap {
  SensorGeometry geometry;
  std::vector<double> values;

  PixelProbMap() = default;
  explicit PixelProbMap(SensorGeometry g, double fill = 0.0) : geometry(g), values(g.pixel_count(), fill) {}
  static PixelProbMap from_mask(const HandMask& mask);
};

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kDiceSmoothing = 1e-6;

double bce_loss(const PixelProbMap& pred, const HandMask& gt);
double dice_loss(const PixelProbMap& pred, const HandMask& gt);
double mask_loss(const PixelProbMap& pred, const HandMask& gt, const MaskLossWeights& w = {});

// Mean over points of the 1-norm of the 3D difference.
double joints_loss(const Points3& pred, const Points3& gt);
double vertices_loss(const Points3& pred, const Points3& gt);
// Mean over joints of || (pL - pR) - (gL - gR) ||_2.
double interhand_loss(const Points3& pred_left, const Points3& pred_right, const Points3& gt_left,
                      const Points3& gt_right);
// ||theta_hat - theta||_2 + ||beta_hat - beta||_2.
double mano_loss(const ManoParams& pred, const ManoParams& gt);

struct HandEstimate {
  ManoParams params;
  HandOutput output;
};

struct TwoHands {
  std::optional<HandEstimate> left;
  std::optional<HandEstimate> right;
};

struct HandLossBreakdown {
  double joints = 0, interhand = 0, vertices = 0, mano = 0, total = 0;
};

// Joint and vertex terms average over the hands present in `gt`; the MANO
// term sums over them; the interhand term needs both hands (else 0).
// Every hand present in `gt` must be present in `pred`.
HandLossBreakdown total_hand_loss(const TwoHands& pred, const TwoHands& gt, const HandLossWeights& w = {});

inline double recombine(const HandLossBreakdown& b, const HandLossWeights& w) {
  return w.lambda_gamma * b.joints + w.lambda_delta * b.interhand + w.lambda_epsilon * b.vertices +
         w.lambda_zeta * b.mano;
}

// Generic cores shared by the double API above and the differentiable
// training path. `pred` and `gt` point at n contiguous xyz triples.
namespace loss_core {

template <typename S>
S mean_l1(const S* pred, const double* gt, std::size_t n) {
  using std::abs;
  using ad::abs;
  S sum(0.0);
  for (std::size_t i = 0; i < 3 * n; ++i) sum += abs(pred[i] - S(gt[i]));
  return sum / S(static_cast<double>(n));
}

template <typename S>
S interhand(const S* pl, const S* pr, const double* gl, const double* gr, std::size_t n) {
  using ad::sqrt_safe;
  S sum(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    S sq(0.0);
    for (int c = 0; c < 3; ++c) {
      const S d = (pl[3 * i + c] - pr[3 * i + c]) - S(gl[3 * i + c] - gr[3 * i + c]);
      sq += d * d;
    }
    sum += sqrt_safe(sq);
  }
  return sum / S(static_cast<double>(n));
}

template <typename S>
S l2_distance(const S* a, const double* b, std::size_t n) {
  using ad::sqrt_safe;
  S sq(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const S d = a[i] - S(b[i]);
    sq += d * d;
  }
  return sqrt_safe(sq);
}

}  // namespace loss_core

}  // namespace evego
