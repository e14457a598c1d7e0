#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evego/mano_rig.hpp"
#include "evego/segmask.hpp"

namespace evego {

struct PckCurve {
  std::vector<double> thresholds;  // mm, strictly increasing
  std::vector<double> fractions;   // non-decreasing, in [0, 1]
};

struct PckOptions {
  double max_mm = 100.0;
  double step_mm = 1.0;
  bool root_relative = false;
  double to_mm = 1.0;  // scale from input units to millimeters
};

// Mean Euclidean distance over every point of every set, in mm.
double mpjpe(std::span<const Points3> pred, std::span<const Points3> gt, double to_mm = 1.0);
double mpvpe(std::span<const Points3> pred, std::span<const Points3> gt, double to_mm = 1.0);

// Share of joints with error <= threshold. In root-relative mode each set's
// wrist is subtracted from its joints (pred and gt alike) first.
PckCurve pck_curve(std::span<const Points3> pred, std::span<const Points3> gt, const PckOptions& options,
                   std::span<const Eigen::RowVector3d> pred_wrists = {},
                   std::span<const Eigen::RowVector3d> gt_wrists = {});

// Trapezoidal area normalised by the threshold range.
double auc(const PckCurve& curve);

struct HandResult {
  Points3 joints;
  Points3 vertices;
  Eigen::RowVector3d wrist = Eigen::RowVector3d::Zero();
};

struct SampleResult {
  std::string sample_id;
  std::optional<HandResult> left;
  std::optional<HandResult> right;
  std::optional<HandMask> mask;
};

struct EvalConfig {
  double to_mm = 1000.0;  // inputs in meters
  double pck_max_mm = 100.0;
  double pck_step_mm = 1.0;
  unsigned threads = 1;
};

struct MetricReport {
  double r_auc = 0.0;
  double mpjpe_mm = 0.0;
  double mpvpe_mm = 0.0;
  std::optional<double> iou;
  std::size_t sample_count = 0;
  std::size_t hands_evaluated = 0;
  std::size_t hands_skipped = 0;  // absent from ground truth
  PckCurve pck;                   // root-relative curve behind r_auc
};

// Hands absent from the ground truth are skipped and counted. Per-sample
// statistics are reduced in sample order, so the result does not depend on
// the thread count.
MetricReport evaluate_dataset(std::span<const SampleResult> pred, std::span<const SampleResult> gt,
                              const EvalConfig& config = {});

std::string report_json(const MetricReport& report);
void write_report_json(const std::filesystem::path& path, const MetricReport& report);
void write_pck_csv(const std::filesystem::path& path, const PckCurve& curve);

// Result exchange format, one JSON object per line:
//   {"sample_id": ..., "left": {"joints", "vertices", "wrist"} | null,
//    "right": ..., "mask": optional PGM path relative to the file}
// Coordinates are in meters.
HandResult to_result(const HandOutput& output);
std::string result_to_json(const SampleResult& result, const std::string& mask_path = {});
void write_results(const std::filesystem::path& path, std::span<const SampleResult> results);
std::vector<SampleResult> read_results(const std::filesystem::path& path);

}  // namespace evego
