#include "evego/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "evego/errors.hpp"
#include "evego/parallel.hpp"

namespace evego {

namespace {

double mean_distance(std::span<const Points3> pred, std::span<const Points3> gt, double to_mm) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and ground-truth set counts differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].rows() != gt[s].rows())
      throw Error(ErrorCode::ShapeMismatch, "set " + std::to_string(s) + " point counts differ", s);
    for (Eigen::Index i = 0; i < pred[s].rows(); ++i) sum += (pred[s].row(i) - gt[s].row(i)).norm() * to_mm;
    count += static_cast<std::size_t>(pred[s].rows());
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

std::vector<double> threshold_grid(double max_mm, double step_mm) {
  if (!(step_mm > 0.0) || !(max_mm > 0.0)) throw Error(ErrorCode::ConfigError, "PCK grid needs positive step and range");
  const auto steps = static_cast<std::size_t>(std::llround(max_mm / step_mm));
  std::vector<double> t(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) t[i] = static_cast<double>(i) * step_mm;
  return t;
}

PckCurve curve_from_errors(std::vector<double> errors, const std::vector<double>& thresholds) {
  std::sort(errors.begin(), errors.end());
  PckCurve curve;
  curve.thresholds = thresholds;
  curve.fractions.reserve(thresholds.size());
  for (double tau : thresholds) {
    const auto hit = std::upper_bound(errors.begin(), errors.end(), tau) - errors.begin();
    curve.fractions.push_back(errors.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(errors.size()));
  }
  return curve;
}

}  // namespace

double mpjpe(std::span<const Points3> pred, std::span<const Points3> gt, double to_mm) {
  return mean_distance(pred, gt, to_mm);
}

double mpvpe(std::span<const Points3> pred, std::span<const Points3> gt, double to_mm) {
  return mean_distance(pred, gt, to_mm);
}

PckCurve pck_curve(std::span<const Points3> pred, std::span<const Points3> gt, const PckOptions& options,
                   std::span<const Eigen::RowVector3d> pred_wrists, std::span<const Eigen::RowVector3d> gt_wrists) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and ground-truth set counts differ");
  if (options.root_relative && (pred_wrists.size() != pred.size() || gt_wrists.size() != gt.size()))
    throw Error(ErrorCode::MissingWrist, "root-relative PCK needs a wrist for every hand");
  std::vector<double> errors;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].rows() != gt[s].rows())
      throw Error(ErrorCode::ShapeMismatch, "set " + std::to_string(s) + " point counts differ", s);
    for (Eigen::Index i = 0; i < pred[s].rows(); ++i) {
      Eigen::RowVector3d d = pred[s].row(i) - gt[s].row(i);
      if (options.root_relative) d = (pred[s].row(i) - pred_wrists[s]) - (gt[s].row(i) - gt_wrists[s]);
      errors.push_back(d.norm() * options.to_mm);
    }
  }
  return curve_from_errors(std::move(errors), threshold_grid(options.max_mm, options.step_mm));
}

double auc(const PckCurve& curve) {
  const auto& t = curve.thresholds;
  const auto& f = curve.fractions;
  if (t.size() != f.size() || t.size() < 2) throw Error(ErrorCode::ShapeMismatch, "PCK curve needs >= 2 points");
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) area += (t[i + 1] - t[i]) * (f[i] + f[i + 1]) * 0.5;
  return area / (t.back() - t.front());
}

namespace {

struct SampleStats {
  double joint_sum = 0, vertex_sum = 0;
  std::size_t joint_count = 0, vertex_count = 0, hands = 0, skipped = 0;
  std::vector<double> relative_errors;
  std::optional<double> iou;
};

SampleStats sample_stats(const SampleResult& pred, const SampleResult& gt, double to_mm, std::size_t index) {
  SampleStats st;
  using Member = std::optional<HandResult> SampleResult::*;
  for (Member side : {&SampleResult::left, &SampleResult::right}) {
    const auto& g = gt.*side;
    if (!g) {
      ++st.skipped;
      continue;
    }
    const auto& p = pred.*side;
    if (!p) throw Error(ErrorCode::ShapeMismatch, "sample " + gt.sample_id + " lacks a predicted hand", index);
    if (p->joints.rows() != g->joints.rows() || p->vertices.rows() != g->vertices.rows())
      throw Error(ErrorCode::ShapeMismatch, "sample " + gt.sample_id + " shapes differ", index);
    for (Eigen::Index i = 0; i < g->joints.rows(); ++i) {
      st.joint_sum += (p->joints.row(i) - g->joints.row(i)).norm() * to_mm;
      st.relative_errors.push_back(((p->joints.row(i) - p->wrist) - (g->joints.row(i) - g->wrist)).norm() * to_mm);
    }
    for (Eigen::Index i = 0; i < g->vertices.rows(); ++i)
      st.vertex_sum += (p->vertices.row(i) - g->vertices.row(i)).norm() * to_mm;
    st.joint_count += static_cast<std::size_t>(g->joints.rows());
    st.vertex_count += static_cast<std::size_t>(g->vertices.rows());
    ++st.hands;
  }
  if (pred.mask && gt.mask) st.iou = iou(*pred.mask, *gt.mask);
  return st;
}

}  // namespace

MetricReport evaluate_dataset(std::span<const SampleResult> pred, std::span<const SampleResult> gt,
                              const EvalConfig& config) {
  if (pred.size() != gt.size())
    throw Error(ErrorCode::SampleCountMismatch,
                std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) + " ground truths");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!pred[i].sample_id.empty() && !gt[i].sample_id.empty() && pred[i].sample_id != gt[i].sample_id)
      throw Error(ErrorCode::SampleCountMismatch,
                  "sample " + std::to_string(i) + ": '" + pred[i].sample_id + "' vs '" + gt[i].sample_id + "'", i);

  std::vector<SampleStats> stats(pred.size());
  parallel_for(pred.size(), config.threads,
               [&](std::size_t i) { stats[i] = sample_stats(pred[i], gt[i], config.to_mm, i); });

  MetricReport report;
  report.sample_count = pred.size();
  SampleStats total;
  double iou_sum = 0.0;
  std::size_t iou_count = 0;
  for (auto& s : stats) {
    total.joint_sum += s.joint_sum;
    total.vertex_sum += s.vertex_sum;
    total.joint_count += s.joint_count;
    total.vertex_count += s.vertex_count;
    report.hands_evaluated += s.hands;
    report.hands_skipped += s.skipped;
    total.relative_errors.insert(total.relative_errors.end(), s.relative_errors.begin(), s.relative_errors.end());
    if (s.iou) {
      iou_sum += *s.iou;
      ++iou_count;
    }
  }
  report.mpjpe_mm = total.joint_count ? total.joint_sum / static_cast<double>(total.joint_count) : 0.0;
  report.mpvpe_mm = total.vertex_count ? total.vertex_sum / static_cast<double>(total.vertex_count) : 0.0;
  report.pck = curve_from_errors(std::move(total.relative_errors), threshold_grid(config.pck_max_mm, config.pck_step_mm));
  report.r_auc = auc(report.pck);
  if (iou_count) report.iou = iou_sum / static_cast<double>(iou_count);
  return report;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["r_auc"] = report.r_auc;
  j["mpjpe_mm"] = report.mpjpe_mm;
  j["mpvpe_mm"] = report.mpvpe_mm;
  j["iou"] = report.iou ? nlohmann::ordered_json(*report.iou) : nlohmann::ordered_json(nullptr);
  j["sample_count"] = report.sample_count;
  j["hands_evaluated"] = report.hands_evaluated;
  j["hands_skipped"] = report.hands_skipped;
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << report_json(report);
}

void write_pck_csv(const std::filesystem::path& path, const PckCurve& curve) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::fprintf(f, "threshold_mm,fraction\n");
  for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
    std::fprintf(f, "%.6g,%.10f\n", curve.thresholds[i], curve.fractions[i]);
  if (std::fclose(f) != 0) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

HandResult to_result(const HandOutput& output) { return {output.joints, output.vertices, output.wrist}; }

namespace {

nlohmann::json points_json(const Points3& p) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

Points3 points_of(const nlohmann::json& a) {
  Points3 p(static_cast<Eigen::Index>(a.size()), 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != 3) throw Error(ErrorCode::ParseError, "points must have 3 coordinates");
    for (int c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(i), c) = a[i][static_cast<std::size_t>(c)].get<double>();
  }
  return p;
}

nlohmann::json hand_json(const std::optional<HandResult>& h) {
  if (!h) return nullptr;
  return {{"joints", points_json(h->joints)},
          {"vertices", points_json(h->vertices)},
          {"wrist", {h->wrist(0), h->wrist(1), h->wrist(2)}}};
}

std::optional<HandResult> hand_of(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  HandResult h;
  h.joints = points_of(j.at("joints"));
  h.vertices = points_of(j.at("vertices"));
  const auto w = j.at("wrist").get<std::vector<double>>();
  if (w.size() != 3) throw Error(ErrorCode::ParseError, "wrist must have 3 coordinates");
  h.wrist = Eigen::RowVector3d(w[0], w[1], w[2]);
  return h;
}

}  // namespace

std::string result_to_json(const SampleResult& result, const std::string& mask_path) {
  nlohmann::json j = {{"sample_id", result.sample_id}, {"left", hand_json(result.left)}, {"right", hand_json(result.right)}};
  if (!mask_path.empty()) j["mask"] = mask_path;
  return j.dump();
}

void write_results(const std::filesystem::path& path, std::span<const SampleResult> results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  for (const auto& r : results) out << result_to_json(r) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<SampleResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::vector<SampleResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleResult r;
      r.sample_id = j.at("sample_id").get<std::string>();
      r.left = hand_of(j.at("left"));
      r.right = hand_of(j.at("right"));
      if (j.contains("mask")) r.mask = load_mask(path.parent_path() / j.at("mask").get<std::string>());
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace evego
