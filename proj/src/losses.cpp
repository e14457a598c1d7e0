#include "evego/losses.hpp"

#include <algorithm>
#include <cmath>

#include "evego/errors.hpp"

namespace evego {

namespace {

void check_same(const PixelProbMap& pred, const HandMask& gt) {
  if (pred.geometry != gt.geometry || pred.values.size() != gt.data.size())
    throw Error(ErrorCode::GeometryMismatch, "probability map and mask differ in size");
}

void check_points(const Points3& a, const Points3& b) {
  if (a.rows() != b.rows() || a.rows() == 0)
    throw Error(ErrorCode::ShapeMismatch,
                "point sets of " + std::to_string(a.rows()) + " and " + std::to_string(b.rows()) + " rows");
}

}  // namespace

PixelProbMap PixelProbMap::from_mask(const HandMask& mask) {
  PixelProbMap map(mask.geometry);
  for (std::size_t i = 0; i < mask.data.size(); ++i) map.values[i] = mask.data[i] ? 1.0 : 0.0;
  return map;
}

double bce_loss(const PixelProbMap& pred, const HandMask& gt) {
  check_same(pred, gt);
  if (pred.values.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double p = std::clamp(pred.values[i], kBceClamp, 1.0 - kBceClamp);
    sum += gt.data[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.values.size());
}

double dice_loss(const PixelProbMap& pred, const HandMask& gt) {
  check_same(pred, gt);
  double inter = 0.0, sum_y = 0.0, sum_p = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double y = gt.data[i] ? 1.0 : 0.0;
    inter += y * pred.values[i];
    sum_y += y;
    sum_p += pred.values[i];
  }
  return 1.0 - (2.0 * inter + kDiceSmoothing) / (sum_y + sum_p + kDiceSmoothing);
}

double mask_loss(const PixelProbMap& pred, const HandMask& gt, const MaskLossWeights& w) {
  return w.lambda_alpha * bce_loss(pred, gt) + w.lambda_beta * dice_loss(pred, gt);
}

double joints_loss(const Points3& pred, const Points3& gt) {
  check_points(pred, gt);
  return loss_core::mean_l1(pred.data(), gt.data(), static_cast<std::size_t>(pred.rows()));
}

double vertices_loss(const Points3& pred, const Points3& gt) { return joints_loss(pred, gt); }

double interhand_loss(const Points3& pred_left, const Points3& pred_right, const Points3& gt_left,
                      const Points3& gt_right) {
  check_points(pred_left, pred_right);
  check_points(pred_left, gt_left);
  check_points(pred_left, gt_right);
  return loss_core::interhand(pred_left.data(), pred_right.data(), gt_left.data(), gt_right.data(),
                              static_cast<std::size_t>(pred_left.rows()));
}

double mano_loss(const ManoParams& pred, const ManoParams& gt) {
  if (pred.side != gt.side) throw Error(ErrorCode::SideMismatch, "MANO loss across different hands");
  return loss_core::l2_distance(pred.theta.data(), gt.theta.data(), kPoseCoeffs) +
         loss_core::l2_distance(pred.beta.data(), gt.beta.data(), kShapeCoeffs);
}

HandLossBreakdown total_hand_loss(const TwoHands& pred, const TwoHands& gt, const HandLossWeights& w) {
  HandLossBreakdown b;
  int hands = 0;
  using Member = std::optional<HandEstimate> TwoHands::*;
  for (Member side : {&TwoHands::left, &TwoHands::right}) {
    const auto& g = gt.*side;
    if (!g) continue;
    const auto& p = pred.*side;
    if (!p) throw Error(ErrorCode::ShapeMismatch, "ground truth hand has no prediction");
    b.joints += joints_loss(p->output.joints, g->output.joints);
    b.vertices += vertices_loss(p->output.vertices, g->output.vertices);
    b.mano += mano_loss(p->params, g->params);
    ++hands;
  }
  if (hands > 0) {
    b.joints /= hands;
    b.vertices /= hands;
  }
  if (gt.left && gt.right)
    b.interhand = interhand_loss(pred.left->output.joints, pred.right->output.joints, gt.left->output.joints,
                                 gt.right->output.joints);
  b.total = recombine(b, w);
  return b;
}

}  // namespace evego
