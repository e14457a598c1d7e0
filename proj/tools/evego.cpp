// evego: command-line front end for the event-based hand pipeline.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "evego/dataset_io.hpp"
#include "evego/dvs_sim.hpp"
#include "evego/errors.hpp"
#include "evego/event_core.hpp"
#include "evego/mano_rig.hpp"
#include "evego/metrics.hpp"
#include "evego/parallel.hpp"
#include "evego/recon_head.hpp"
#include "evego/representations.hpp"
#include "evego/segmask.hpp"

namespace fs = std::filesystem;
using namespace evego;

namespace {

// Resolved configuration printed to stderr before each run.
class Banner {
 public:
  explicit Banner(std::string command) : command_(std::move(command)) {}
  template <typename T>
  Banner& add(const std::string& key, const T& value) {
    std::ostringstream s;
    s << value;
    items_.emplace_back(key, s.str());
    return *this;
  }
  void print() const {
    std::cerr << "# evego " << command_ << "\n";
    for (const auto& [k, v] : items_) std::cerr << "#   " << k << " = " << v << "\n";
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> items_;
};

struct Common {
  unsigned threads = default_thread_count();
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--threads", c.threads, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", c.seed, "Random seed for sampling and initialisation");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string());
}

HandRig rig_or_default(const std::string& path) {
  HandRig rig = path.empty() ? make_synthetic_rig(Side::Right) : load_rig(path);
  if (rig.side != Side::Right) rig = mirror_rig(rig);
  return rig;
}

// Window selection shared by lnes/mask/cloud/filter.
struct WindowSel {
  Timestamp duration = WindowConfig{}.window_duration;
  int history = WindowConfig{}.history_length;
  long long index = -1;  // negative counts from the end
};

void add_window(CLI::App* cmd, WindowSel& w, bool with_history) {
  cmd->add_option("--window-us", w.duration, "Window duration in microseconds")->check(CLI::PositiveNumber);
  if (with_history)
    cmd->add_option("--history", w.history, "History length T in windows")->check(CLI::PositiveNumber);
  cmd->add_option("--index", w.index, "Window index (negative counts from the last window)");
}

std::vector<EventWindow> select_history(const EventStream& stream, const WindowSel& w, std::size_t* resolved) {
  const auto windows = partition_windows(stream, {w.duration, w.history});
  if (windows.empty()) throw Error(ErrorCode::IndexOutOfRange, "event file holds no events");
  const long long n = static_cast<long long>(windows.size());
  const long long i = w.index < 0 ? n + w.index : w.index;
  if (i < 0 || i >= n) throw Error(ErrorCode::IndexOutOfRange, "window index out of range", static_cast<std::size_t>(std::max(0LL, i)));
  *resolved = static_cast<std::size_t>(i);
  return window_history(windows, static_cast<std::size_t>(i), w.history);
}

void add_windows_to_banner(Banner& b, const WindowSel& w, std::size_t resolved, bool history) {
  b.add("window_us", w.duration).add("index", resolved);
  if (history) b.add("history", w.history);
}

std::string side_label(Side s) { return s == Side::Left ? "left" : "right"; }

// Reads a Wavefront OBJ (v and f records only, 1-based, polygon fans).
std::pair<Points3, std::vector<std::array<int, 3>>> read_obj(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::array<double, 3>> v;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::array<double, 3> p{};
      if (!(ls >> p[0] >> p[1] >> p[2])) throw Error(ErrorCode::ParseError, "bad vertex line in " + path.string());
      v.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  Points3 pts(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int c = 0; c < 3; ++c) pts(static_cast<Eigen::Index>(i), c) = v[i][static_cast<std::size_t>(c)];
  for (const auto& f : faces)
    for (int k : f)
      if (k < 0 || k >= pts.rows()) throw Error(ErrorCode::ParseError, "face index out of range in " + path.string());
  return {pts, faces};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based egocentric hand reconstruction toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // simulate
  Common sim_c;
  std::string sim_frames, sim_out;
  DvsConfig dvs;
  int sim_neg = -1;
  auto* sim = app.add_subcommand("simulate", "Convert a PGM frame directory into an event text file");
  add_common(sim, sim_c);
  sim->add_option("--frames", sim_frames, "Frame directory (PGM files + manifest.txt)")->required();
  sim->add_option("--out", sim_out, "Output event text file")->required();
  sim->add_option("--contrast", dvs.contrast_threshold, "Contrast threshold C (log-intensity units)")
      ->check(CLI::PositiveNumber);
  sim->add_option("--log-eps", dvs.log_eps, "Intensity floor inside the log (intensity units in [0,1])")
      ->check(CLI::PositiveNumber);
  sim->add_option("--negative-code", sim_neg, "Code written for negative polarity (-1 or 0)")
      ->check(CLI::IsMember({-1, 0}));

  // lnes
  Common lnes_c;
  std::string lnes_events, lnes_out;
  WindowSel lnes_w;
  bool lnes_all = false;
  auto* lnes = app.add_subcommand("lnes", "Render LNES frames (positive channel) as PGM images");
  add_common(lnes, lnes_c);
  lnes->add_option("--events", lnes_events, "Event text file")->required();
  lnes->add_option("--out-dir", lnes_out, "Output directory for lnes_NNNNN.pgm")->required();
  add_window(lnes, lnes_w, false);
  lnes->add_flag("--all", lnes_all, "Render every window instead of --index");

  // cloud
  Common cloud_c;
  std::string cloud_events, cloud_out;
  WindowSel cloud_w;
  std::size_t cloud_budget = kDefaultCloudBudget;
  auto* cloud = app.add_subcommand("cloud", "Build an event cloud (EVCL) over a window history");
  add_common(cloud, cloud_c);
  cloud->add_option("--events", cloud_events, "Event text file")->required();
  cloud->add_option("--out", cloud_out, "Output EVCL file")->required();
  add_window(cloud, cloud_w, true);
  cloud->add_option("--budget", cloud_budget, "Cloud budget N (points)")->check(CLI::PositiveNumber);

  // mask
  Common mask_c;
  std::string mask_events, mask_out;
  WindowSel mask_w;
  DensityParams density;
  auto* mask = app.add_subcommand("mask", "Predict a hand mask from LNES frames with the density heuristic");
  add_common(mask, mask_c);
  mask->add_option("--events", mask_events, "Event text file")->required();
  mask->add_option("--out", mask_out, "Output mask PGM")->required();
  add_window(mask, mask_w, true);
  mask->add_option("--blur-radius", density.blur_radius, "Box blur radius (pixels)")->check(CLI::NonNegativeNumber);
  mask->add_option("--density-threshold", density.density_threshold, "Threshold as a fraction of peak density")
      ->check(CLI::Range(0.0, 1.0));
  mask->add_option("--min-area", density.min_component_area, "Minimum component area (pixels)");
  mask->add_option("--max-components", density.max_components, "Components kept (count)");

  // filter
  Common filt_c;
  std::string filt_events, filt_mask, filt_out;
  WindowSel filt_w;
  std::size_t filt_budget = kDefaultCloudBudget;
  auto* filt = app.add_subcommand("filter", "Keep events on mask pixels and build an EVCL cloud");
  add_common(filt, filt_c);
  filt->add_option("--events", filt_events, "Event text file")->required();
  filt->add_option("--mask", filt_mask, "Mask PGM (nonzero = hand)")->required();
  filt->add_option("--out", filt_out, "Output EVCL file")->required();
  add_window(filt, filt_w, true);
  filt->add_option("--budget", filt_budget, "Cloud budget N (points)")->check(CLI::PositiveNumber);

  // forward
  Common fwd_c;
  std::string fwd_params, fwd_cloud, fwd_ckpt, fwd_rig, fwd_out, fwd_id = "sample", fwd_mask, fwd_mode = "cross";
  auto* fwd = app.add_subcommand("forward", "Evaluate hands from MANO parameters or from a cloud via the head");
  add_common(fwd, fwd_c);
  auto* fwd_p = fwd->add_option("--params", fwd_params, "Parameter JSON {left, right} (meters, radians)");
  auto* fwd_cl = fwd->add_option("--cloud", fwd_cloud, "EVCL cloud fed to the reconstruction head");
  fwd_p->excludes(fwd_cl);
  fwd->add_option("--checkpoint", fwd_ckpt, "Head checkpoint (EVHD); default: fresh head from --seed")->needs(fwd_cl);
  fwd->add_option("--mode", fwd_mode, "Attention mode of a fresh head")->check(CLI::IsMember({"cross", "self"}));
  fwd->add_option("--rig", fwd_rig, "Rig file (HRIG); default: built-in synthetic rig");
  fwd->add_option("--out-dir", fwd_out, "Output directory (params.json, result.jsonl, OBJ meshes)")->required();
  fwd->add_option("--sample-id", fwd_id, "sample_id written to result.jsonl");
  fwd->add_option("--mask", fwd_mask, "Mask PGM referenced from result.jsonl for IoU");

  // project
  Common proj_c;
  std::string proj_params, proj_obj, proj_rig, proj_out;
  SensorGeometry proj_geom;
  CameraIntrinsics proj_cam;
  auto* proj = app.add_subcommand("project", "Rasterise a hand mesh into a mask PGM");
  add_common(proj, proj_c);
  auto* proj_p = proj->add_option("--params", proj_params, "Parameter JSON; meshes come from the rig");
  auto* proj_o = proj->add_option("--obj", proj_obj, "OBJ mesh in camera coordinates (meters)");
  proj_p->excludes(proj_o);
  proj->add_option("--rig", proj_rig, "Rig file (HRIG); default: built-in synthetic rig");
  proj->add_option("--out", proj_out, "Output mask PGM")->required();
  proj->add_option("--width", proj_geom.width, "Sensor width (pixels)")->check(CLI::PositiveNumber);
  proj->add_option("--height", proj_geom.height, "Sensor height (pixels)")->check(CLI::PositiveNumber);
  proj->add_option("--fx", proj_cam.fx, "Focal length x (pixels)");
  proj->add_option("--fy", proj_cam.fy, "Focal length y (pixels)");
  proj->add_option("--cx", proj_cam.cx, "Principal point x (pixels)");
  proj->add_option("--cy", proj_cam.cy, "Principal point y (pixels)");

  // train-toy
  Common train_c;
  std::string train_scene, train_split = "train", train_log, train_ckpt, train_input = "filtered", train_mode = "cross",
                           train_rig;
  int train_samples = 8;
  std::size_t train_budget = kDefaultCloudBudget;
  TrainConfig tcfg;
  tcfg.optimizer.lr = 1e-2;
  auto* train = app.add_subcommand("train-toy", "Overfit the reconstruction head on a few scene samples");
  add_common(train, train_c);
  train->add_option("--scene", train_scene, "Scene directory holding manifest.jsonl")->required();
  train->add_option("--split", train_split, "Split to draw samples from (train, val, test)")
      ->check(CLI::IsMember({"train", "val", "test"}));
  train->add_option("--samples", train_samples, "Number of samples (count, manifest order)")->check(CLI::PositiveNumber);
  train->add_option("--input", train_input, "Cloud input: filtered (ground-truth mask) or raw")
      ->check(CLI::IsMember({"filtered", "raw"}));
  train->add_option("--budget", train_budget, "Cloud budget N (points)")->check(CLI::PositiveNumber);
  train->add_option("--epochs", tcfg.epochs, "Epochs (one full-batch Adam step each)")->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tcfg.optimizer.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--beta1", tcfg.optimizer.beta1, "Adam beta1");
  train->add_option("--beta2", tcfg.optimizer.beta2, "Adam beta2");
  train->add_option("--adam-eps", tcfg.optimizer.eps, "Adam epsilon");
  train->add_option("--lambda-joints", tcfg.weights.lambda_gamma, "Joint loss weight");
  train->add_option("--lambda-interhand", tcfg.weights.lambda_delta, "Inter-hand loss weight");
  train->add_option("--lambda-vertices", tcfg.weights.lambda_epsilon, "Vertex loss weight");
  train->add_option("--lambda-mano", tcfg.weights.lambda_zeta, "MANO parameter loss weight");
  train->add_option("--mode", train_mode, "Attention mode")->check(CLI::IsMember({"cross", "self"}));
  train->add_option("--rig", train_rig, "Rig file (HRIG); default: built-in synthetic rig");
  train->add_option("--log", train_log, "Training log CSV")->required();
  train->add_option("--checkpoint", train_ckpt, "Write the trained head (EVHD)");

  // evaluate
  Common eval_c;
  std::string eval_pred, eval_gt, eval_report, eval_pck;
  EvalConfig ecfg;
  auto* eval = app.add_subcommand("evaluate", "Compare predicted and ground-truth hands");
  add_common(eval, eval_c);
  eval->add_option("--pred", eval_pred, "Prediction JSONL")->required();
  eval->add_option("--gt", eval_gt, "Ground-truth JSONL")->required();
  eval->add_option("--report", eval_report, "Output report JSON")->required();
  eval->add_option("--pck-csv", eval_pck, "Output PCK curve CSV");
  eval->add_option("--to-mm", ecfg.to_mm, "Scale from file units to millimeters")->check(CLI::PositiveNumber);
  eval->add_option("--pck-max", ecfg.pck_max_mm, "Largest PCK threshold (mm)")->check(CLI::PositiveNumber);
  eval->add_option("--pck-step", ecfg.pck_step_mm, "PCK threshold step (mm)")->check(CLI::PositiveNumber);

  // gen-scene
  Common gen_c;
  std::string gen_preset = "egocentric", gen_config, gen_out, gen_rig;
  auto* gen = app.add_subcommand("gen-scene", "Render a synthetic scene: frames, events, masks, manifest");
  add_common(gen, gen_c);
  auto* gen_pr = gen->add_option("--preset", gen_preset, "Preset (egocentric, demo, static-hand, static-background)");
  auto* gen_cf = gen->add_option("--config", gen_config, "Scene configuration JSON");
  gen_pr->excludes(gen_cf);
  gen->add_option("--out", gen_out, "Output scene directory")->required();
  gen->add_option("--rig", gen_rig, "Rig file (HRIG); default: built-in synthetic rig");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*sim) {
      Banner b("simulate");
      b.add("frames", sim_frames).add("out", sim_out).add("contrast", dvs.contrast_threshold);
      b.add("log_eps", dvs.log_eps).add("negative_code", sim_neg).add("threads", sim_c.threads).add("seed", sim_c.seed);
      b.print();
      dvs.seed = sim_c.seed;
      const auto frames = read_frame_directory(sim_frames);
      const auto stream = simulate_events(frames, dvs, sim_c.threads);
      write_events(fs::path(sim_out), stream, {sim_neg});
      std::cout << "events=" << stream.size() << "\n";
    } else if (*lnes) {
      const auto stream = read_events(fs::path(lnes_events));
      const auto windows = partition_windows(stream, {lnes_w.duration, 1});
      std::vector<std::size_t> picks;
      if (lnes_all) {
        for (std::size_t i = 0; i < windows.size(); ++i) picks.push_back(i);
      } else {
        std::size_t i = 0;
        select_history(stream, {lnes_w.duration, 1, lnes_w.index}, &i);
        picks.push_back(i);
      }
      Banner b("lnes");
      b.add("events", lnes_events).add("out_dir", lnes_out).add("window_us", lnes_w.duration);
      b.add("windows", lnes_all ? std::string("all") : std::to_string(picks.front())).add("threads", lnes_c.threads);
      b.print();
      ensure_dir(lnes_out);
      std::vector<EventWindow> chosen;
      for (std::size_t i : picks) chosen.push_back(windows[i]);
      const auto frames = build_lnes(chosen, stream.geometry(), lnes_c.threads);
      for (std::size_t k = 0; k < picks.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "lnes_%05zu.pgm", picks[k]);
        write_pgm(fs::path(lnes_out) / name, render_lnes_image(frames[k]));
      }
      std::cout << "frames=" << picks.size() << "\n";
    } else if (*cloud) {
      const auto stream = read_events(fs::path(cloud_events));
      std::size_t index = 0;
      const auto history = select_history(stream, cloud_w, &index);
      Banner b("cloud");
      b.add("events", cloud_events).add("out", cloud_out);
      add_windows_to_banner(b, cloud_w, index, true);
      b.add("budget", cloud_budget).add("seed", cloud_c.seed).add("threads", cloud_c.threads);
      b.print();
      const auto c = build_cloud(merge_windows(history), stream.geometry(), cloud_budget, cloud_c.seed);
      write_cloud(cloud_out, c);
      std::cout << "validity=" << c.validity << "\n";
    } else if (*mask) {
      const auto stream = read_events(fs::path(mask_events));
      std::size_t index = 0;
      const auto history = select_history(stream, mask_w, &index);
      Banner b("mask");
      b.add("events", mask_events).add("out", mask_out);
      add_windows_to_banner(b, mask_w, index, true);
      b.add("blur_radius", density.blur_radius).add("density_threshold", density.density_threshold);
      b.add("min_area", density.min_component_area).add("max_components", density.max_components);
      b.add("threads", mask_c.threads);
      b.print();
      const auto frames = build_lnes(history, stream.geometry(), mask_c.threads);
      const HandMask m = DensityMaskPredictor(density).predict(frames);
      save_mask(mask_out, m);
      std::cout << "area=" << m.area() << "\n";
    } else if (*filt) {
      const auto stream = read_events(fs::path(filt_events));
      std::size_t index = 0;
      const auto history = select_history(stream, filt_w, &index);
      Banner b("filter");
      b.add("events", filt_events).add("mask", filt_mask).add("out", filt_out);
      add_windows_to_banner(b, filt_w, index, true);
      b.add("budget", filt_budget).add("seed", filt_c.seed).add("threads", filt_c.threads);
      b.print();
      const HandMask m = load_mask(filt_mask, stream.geometry());
      const auto r = filter_cloud(history, m, stream.geometry(), filt_budget, filt_c.seed);
      write_cloud(filt_out, r.cloud);
      std::cout << "survivors=" << r.survivors << " total=" << r.total_events << " validity=" << r.cloud.validity
                << "\n";
    } else if (*fwd) {
      if (fwd_params.empty() && fwd_cloud.empty())
        throw Error(ErrorCode::Usage, "forward needs --params or --cloud");
      Banner b("forward");
      b.add("input", fwd_params.empty() ? fwd_cloud : fwd_params).add("rig", fwd_rig.empty() ? "synthetic" : fwd_rig);
      if (!fwd_cloud.empty()) {
        b.add("checkpoint", fwd_ckpt.empty() ? std::string("none") : fwd_ckpt);
        if (fwd_ckpt.empty()) b.add("mode", fwd_mode).add("seed", fwd_c.seed);
      }
      b.add("out_dir", fwd_out).add("sample_id", fwd_id).add("threads", fwd_c.threads);
      b.print();
      const RigPair rigs = make_rig_pair(rig_or_default(fwd_rig));
      HandParamsPair params;
      if (!fwd_params.empty()) {
        params = params_from_json(read_text(fwd_params));
      } else {
        HeadModel model;
        if (!fwd_ckpt.empty()) {
          model = load_checkpoint(fwd_ckpt);
        } else {
          HeadConfig hc;
          hc.seed = fwd_c.seed;
          hc.mode = fwd_mode == "self" ? AttentionMode::Self : AttentionMode::Cross;
          model = HeadModel(hc);
        }
        const auto [l, r] = forward_head(model, read_cloud(fwd_cloud));
        params = {l, r};
      }
      ensure_dir(fwd_out);
      write_text(fs::path(fwd_out) / "params.json", params_to_json(params));
      SampleResult result;
      result.sample_id = fwd_id;
      auto run = [&](const std::optional<ManoParams>& p, const HandRig& rig, std::optional<HandResult>& slot) {
        if (!p) return;
        const HandOutput out = forward(rig, *p);
        write_obj(fs::path(fwd_out) / (side_label(p->side) + ".obj"), out, rig.faces);
        slot = to_result(out);
      };
      run(params.left, rigs.left, result.left);
      run(params.right, rigs.right, result.right);
      std::string mask_ref;
      if (!fwd_mask.empty()) mask_ref = fs::relative(fs::absolute(fwd_mask), fs::absolute(fwd_out)).generic_string();
      write_text(fs::path(fwd_out) / "result.jsonl", result_to_json(result, mask_ref) + "\n");
      std::cout << "hands=" << (result.left ? 1 : 0) + (result.right ? 1 : 0) << "\n";
    } else if (*proj) {
      if (proj_params.empty() && proj_obj.empty()) throw Error(ErrorCode::Usage, "project needs --params or --obj");
      Banner b("project");
      b.add("input", proj_params.empty() ? proj_obj : proj_params).add("out", proj_out);
      b.add("width", proj_geom.width).add("height", proj_geom.height).add("fx", proj_cam.fx).add("fy", proj_cam.fy);
      b.add("cx", proj_cam.cx).add("cy", proj_cam.cy).add("threads", proj_c.threads);
      b.print();
      HandMask m(proj_geom);
      if (!proj_obj.empty()) {
        const auto [v, f] = read_obj(proj_obj);
        rasterize_into(m, v, f, proj_cam);
      } else {
        const RigPair rigs = make_rig_pair(rig_or_default(proj_rig));
        const auto params = params_from_json(read_text(proj_params));
        if (params.left) rasterize_into(m, forward(rigs.left, *params.left).vertices, rigs.left.faces, proj_cam);
        if (params.right) rasterize_into(m, forward(rigs.right, *params.right).vertices, rigs.right.faces, proj_cam);
      }
      save_mask(proj_out, m);
      std::cout << "area=" << m.area() << "\n";
    } else if (*train) {
      Banner b("train-toy");
      b.add("scene", train_scene).add("split", train_split).add("samples", train_samples).add("input", train_input);
      b.add("budget", train_budget).add("epochs", tcfg.epochs).add("lr", tcfg.optimizer.lr);
      b.add("beta1", tcfg.optimizer.beta1).add("beta2", tcfg.optimizer.beta2).add("adam_eps", tcfg.optimizer.eps);
      b.add("lambda_joints", tcfg.weights.lambda_gamma).add("lambda_interhand", tcfg.weights.lambda_delta);
      b.add("lambda_vertices", tcfg.weights.lambda_epsilon).add("lambda_mano", tcfg.weights.lambda_zeta);
      b.add("mode", train_mode).add("seed", train_c.seed).add("threads", train_c.threads);
      b.add("rig", train_rig.empty() ? "synthetic" : train_rig).add("log", train_log);
      b.print();
      const RigPair rigs = make_rig_pair(rig_or_default(train_rig));
      const SampleLoader loader(load_manifest(fs::path(train_scene) / "manifest.jsonl"), train_scene, &rigs);
      const auto ids = loader.select(train_split);
      if (ids.size() < static_cast<std::size_t>(train_samples))
        throw Error(ErrorCode::ConfigError, "split '" + train_split + "' holds only " + std::to_string(ids.size()) +
                                                " samples");
      std::vector<TrainSample> data;
      for (int i = 0; i < train_samples; ++i) {
        const Sample s = loader.load(ids[static_cast<std::size_t>(i)]);
        const auto& geom = loader.manifest().geometry;
        EventCloud c = train_input == "filtered"
                           ? filter_cloud(s.history, s.gt_mask, geom, train_budget, train_c.seed).cloud
                           : build_cloud(merge_windows(s.history), geom, train_budget, train_c.seed);
        data.push_back({std::move(c), s.gt});
      }
      HeadConfig hc;
      hc.seed = train_c.seed;
      hc.mode = train_mode == "self" ? AttentionMode::Self : AttentionMode::Cross;
      HeadModel model(hc);
      tcfg.threads = train_c.threads;
      const auto log = train_toy(model, data, rigs, tcfg);
      write_training_log(train_log, log);
      if (!train_ckpt.empty()) save_checkpoint(train_ckpt, model);
      const auto final_loss = dataset_loss(model, data, rigs, tcfg.weights, train_c.threads);
      std::printf("initial_total=%.9g final_total=%.9g\n", log.empty() ? final_loss.total : log.front().loss.total,
                  final_loss.total);
    } else if (*eval) {
      Banner b("evaluate");
      b.add("pred", eval_pred).add("gt", eval_gt).add("report", eval_report);
      b.add("pck_csv", eval_pck.empty() ? std::string("none") : eval_pck).add("to_mm", ecfg.to_mm);
      b.add("pck_max_mm", ecfg.pck_max_mm).add("pck_step_mm", ecfg.pck_step_mm).add("threads", eval_c.threads);
      b.print();
      ecfg.threads = eval_c.threads;
      const auto pred = read_results(eval_pred);
      const auto gt = read_results(eval_gt);
      const MetricReport report = evaluate_dataset(pred, gt, ecfg);
      write_report_json(eval_report, report);
      if (!eval_pck.empty()) write_pck_csv(eval_pck, report.pck);
      std::cout << report_json(report);
    } else if (*gen) {
      SceneConfig sc = gen_config.empty() ? scene_preset(gen_preset) : scene_config_from_json(read_text(gen_config));
      if (gen->count("--seed")) sc.seed = gen_c.seed;
      Banner b("gen-scene");
      b.add("source", gen_config.empty() ? "preset:" + gen_preset : gen_config).add("out", gen_out);
      b.add("rig", gen_rig.empty() ? "synthetic" : gen_rig).add("threads", gen_c.threads);
      b.print();
      std::cerr << scene_config_to_json(sc);
      const auto scene = generate_synthetic_scene(sc, rig_or_default(gen_rig), gen_c.threads);
      write_scene(gen_out, scene);
      write_text(fs::path(gen_out) / "scene_config.json", scene_config_to_json(sc));
      ensure_dir(fs::path(gen_out) / "params");
      for (const auto& r : scene.manifest.records)
        write_text(fs::path(gen_out) / "params" / (r.sample_id + ".json"), params_to_json(r.gt_params));
      std::cout << "frames=" << scene.frames.frames.size() << " events=" << scene.events.size()
                << " samples=" << scene.manifest.records.size() << "\n";
      for (const auto& [split, n] : split_counts(scene.manifest)) std::cerr << "# split " << split << " = " << n << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Usage ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
