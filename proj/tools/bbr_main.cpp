#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bbr/discovery.hpp"
#include "bbr/geometry.hpp"
#include "bbr/heatmap.hpp"
#include "bbr/io.hpp"
#include "bbr/matching.hpp"
#include "bbr/metrics.hpp"
#include "bbr/refinesim.hpp"
#include "bbr/rng.hpp"

namespace fs = std::filesystem;
using namespace bbr;

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

uint64_t default_seed() {
  if (const char* env = std::getenv("BBR_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 0;
}

Heatmap load_heatmap(const std::string& path) {
  Tensor t = read_tensor(path);
  if (!std::holds_alternative<Heatmap>(t)) {
    throw IoError(IoErrorCode::BadDims, "expected a 2-D heatmap tensor: " + path);
  }
  return std::get<Heatmap>(std::move(t));
}

FeatureGrid load_features(const std::string& path) {
  Tensor t = read_tensor(path);
  if (!std::holds_alternative<FeatureGrid>(t)) {
    throw IoError(IoErrorCode::BadDims, "expected a 3-D feature tensor: " + path);
  }
  return std::get<FeatureGrid>(std::move(t));
}

BoxDocument boxes_to_document(const BoxSet& boxes, int width, int height) {
  BoxDocument doc;
  doc.image_width = width;
  doc.image_height = height;
  for (const ScoredBox& b : boxes) {
    BoxDocumentEntry e;
    e.box = b.box;
    e.score = b.score;
    doc.boxes.push_back(e);
  }
  return doc;
}

BoxSet document_to_boxes(const BoxDocument& doc) {
  BoxSet out;
  for (const BoxDocumentEntry& e : doc.boxes) {
    out.push_back({e.box, e.score.value_or(1.0)});
  }
  return out;
}

std::vector<PredBox> document_to_preds(const BoxDocument& doc) {
  std::vector<PredBox> out;
  for (const BoxDocumentEntry& e : doc.boxes) {
    PredBox p;
    p.box = e.box;
    const double prob = std::clamp(e.score.value_or(0.5), kProbClamp, 1.0 - kProbClamp);
    p.logit_obj = std::log(prob);
    p.logit_noobj = std::log(1.0 - prob);
    out.push_back(p);
  }
  return out;
}

int run_extract_boxes(const std::string& heatmap_path, const std::string& mode,
                      const std::string& out_path) {
  const Heatmap m = load_heatmap(heatmap_path);
  BoxDocument doc;
  if (mode == "train") {
    doc = boxes_to_document(extract_boxes(m), m.width, m.height);
  } else {
    const Box box = enclosing_prediction_box(m);
    doc = boxes_to_document({{box, 1.0}}, m.width, m.height);
  }
  doc.metadata["mode"] = mode;
  write_box_document(out_path, doc);
  std::cout << doc.boxes.size() << " box(es) -> " << out_path << "\n";
  return 0;
}

int run_loss(const std::string& targets_path, const std::string& preds_path, int k,
             bool union_prob, uint64_t seed) {
  const BoxSet targets = document_to_boxes(read_box_document(targets_path));
  const std::vector<PredBox> preds = document_to_preds(read_box_document(preds_path));
  if (static_cast<int>(preds.size()) != k) {
    throw IoError(IoErrorCode::BadSchema, "prediction count does not match --k");
  }
  LossWeights w;
  LossBreakdown lb;
  if (union_prob) {
    RngState rng(seed);
    auto [breakdown, used_union] = loss_h_bu(targets, preds, k, w, rng);
    lb = breakdown;
    std::cout << "branch " << (used_union ? "union" : "full") << "\n";
  } else {
    lb = loss_h(targets, preds, k, w).first;
  }
  std::cout << "cls " << fmt9(lb.cls) << "\n"
            << "box " << fmt9(lb.box) << "\n"
            << "giou " << fmt9(lb.giou) << "\n"
            << "total " << fmt9(lb.total) << "\n";
  return 0;
}

void write_discovery(const DiscoveryResult& res, int width, int height,
                     const std::string& out_path, const std::string& method) {
  BoxDocument doc = boxes_to_document({{res.box, 1.0}}, width, height);
  doc.metadata["method"] = method;
  if (res.seed >= 0) doc.metadata["seed_patch"] = std::to_string(res.seed);
  doc.metadata["selected_patches"] = std::to_string(res.selected.size());
  write_box_document(out_path, doc);
  const Corners c = to_corners(res.box);
  std::cout << "box " << fmt9(c.x0) << " " << fmt9(c.y0) << " " << fmt9(c.x1) << " "
            << fmt9(c.y1) << " -> " << out_path << "\n";
}

struct EvalInputs {
  std::vector<EvalSample> samples;
};

// Ground truth: {"schema_version":1, "samples":[{"id":..., "boxes":[...]}]}
std::map<std::string, BoxSet> read_ground_truth(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoErrorCode::BadSchema, "cannot open: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(IoErrorCode::BadSchema, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("samples") || !j["samples"].is_array()) {
    throw IoError(IoErrorCode::BadSchema, "ground truth must contain a samples array");
  }
  std::map<std::string, BoxSet> out;
  for (const auto& s : j["samples"]) {
    BoxSet boxes;
    for (const auto& b : s.at("boxes")) {
      boxes.push_back({{b.at("cx").get<double>(), b.at("cy").get<double>(),
                        b.at("w").get<double>(), b.at("h").get<double>()},
                       1.0});
    }
    out[s.at("id").get<std::string>()] = std::move(boxes);
  }
  return out;
}

int run_eval(const std::string& metric_name, const std::string& preds_path,
             const std::string& gt_path) {
  const std::map<std::string, BoxSet> gt = read_ground_truth(gt_path);
  Metric metric = Metric::Pointing;
  if (metric_name == "bbox") metric = Metric::BBox;
  if (metric_name == "corloc") metric = Metric::CorLoc;

  std::vector<EvalSample> samples;
  std::vector<fs::path> files;
  if (fs::is_directory(preds_path)) {
    for (const auto& entry : fs::directory_iterator(preds_path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(preds_path);
  }
  for (const fs::path& p : files) {
    const std::string id = p.stem().string();
    const auto it = gt.find(id);
    if (it == gt.end()) {
      throw IoError(IoErrorCode::BadSchema, "no ground truth for sample '" + id + "'");
    }
    EvalSample s;
    s.id = id;
    s.ground_truth = it->second;
    if (p.extension() == ".json") {
      const BoxDocument doc = read_box_document(p.string());
      if (doc.boxes.empty()) {
        throw IoError(IoErrorCode::BadSchema, "prediction document has no boxes: " + id);
      }
      s.box = doc.boxes.front().box;
    } else {
      s.heatmap = load_heatmap(p.string());
    }
    samples.push_back(std::move(s));
  }

  const EvalReport report = evaluate(samples, metric);
  for (const auto& [id, hit] : report.per_sample) {
    std::cout << id << " " << (hit ? "hit" : "miss") << "\n";
  }
  std::cout << metric_name << " accuracy " << report.hits << "/" << report.total << " = "
            << fmt9(report.accuracy) << "\n";
  return 0;
}

struct DemoConfig {
  int width = 64;
  int height = 64;
  uint64_t seed = 0;
  Schedule schedule;
  double reg_weight = 1.0;
  BlobParams blobs;
  BoxSet teacher;
};

DemoConfig read_demo_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoErrorCode::BadSchema, "cannot open config: " + path);
  DemoConfig cfg;
  bool seed_given = false;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (eq == std::string::npos) {
      throw IoError(IoErrorCode::BadSchema,
                    "config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto trim = [](std::string s) {
      const size_t a = s.find_first_not_of(" \t");
      const size_t b = s.find_last_not_of(" \t");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::istringstream vs(value);
    if (key == "width") vs >> cfg.width;
    else if (key == "height") vs >> cfg.height;
    else if (key == "seed") { vs >> cfg.seed; seed_given = true; }
    else if (key == "phase1_iters") vs >> cfg.schedule.phase1_iters;
    else if (key == "phase2_iters") vs >> cfg.schedule.phase2_iters;
    else if (key == "lr_phase1") vs >> cfg.schedule.lr_phase1;
    else if (key == "lr_phase2") vs >> cfg.schedule.lr_phase2;
    else if (key == "reg_weight") vs >> cfg.reg_weight;
    else if (key == "blob") {
      GaussianBlob b;
      vs >> b.mu_x >> b.mu_y >> b.sigma_x >> b.sigma_y >> b.amplitude;
      if (vs.fail()) throw IoError(IoErrorCode::BadSchema, "blob needs 5 numbers");
      cfg.blobs.push_back(b);
    } else if (key == "teacher") {
      Box b;
      vs >> b.cx >> b.cy >> b.w >> b.h;
      if (vs.fail()) throw IoError(IoErrorCode::BadSchema, "teacher needs 4 numbers");
      cfg.teacher.push_back({b, 1.0});
    } else {
      throw IoError(IoErrorCode::BadSchema, "unknown config key '" + key + "'");
    }
  }
  if (!seed_given) cfg.seed = default_seed();
  cfg.schedule.seed = cfg.seed;
  if (cfg.blobs.empty()) throw IoError(IoErrorCode::BadSchema, "config needs at least one blob");
  if (cfg.teacher.empty()) throw IoError(IoErrorCode::BadSchema, "config needs a teacher box");
  return cfg;
}

int run_refine_demo(const std::string& config_path, const std::string& out_dir) {
  const DemoConfig cfg = read_demo_config(config_path);
  fs::create_directories(out_dir);

  const Heatmap initial = render(cfg.blobs, cfg.width, cfg.height);
  write_tensor((fs::path(out_dir) / "initial.bbr").string(), initial);

  const Phase1Result p1 = phase1_fit({initial}, Calibration{}, cfg.schedule);
  const Phase2Result p2 = phase2_refine(cfg.blobs, cfg.teacher, p1.calib, cfg.schedule,
                                        cfg.reg_weight, cfg.width, cfg.height);

  const Heatmap refined = render(p2.params, cfg.width, cfg.height);
  write_tensor((fs::path(out_dir) / "refined.bbr").string(), refined);

  {
    std::ofstream trace((fs::path(out_dir) / "trace.txt").string(), std::ios::trunc);
    for (double v : p2.trace) trace << fmt9(v) << "\n";
  }
  {
    std::ofstream params((fs::path(out_dir) / "refined_params.txt").string(),
                         std::ios::trunc);
    for (const GaussianBlob& b : p2.params) {
      params << "blob = " << fmt9(b.mu_x) << " " << fmt9(b.mu_y) << " " << fmt9(b.sigma_x)
             << " " << fmt9(b.sigma_y) << " " << fmt9(b.amplitude) << "\n";
    }
  }
  const BoxSet refined_boxes = extract_boxes(refined);
  BoxDocument doc = boxes_to_document(refined_boxes, cfg.width, cfg.height);
  doc.metadata["phase1_final_loss"] = fmt9(p1.final_loss);
  doc.metadata["phase2_initial_loss"] = fmt9(p2.trace.front());
  doc.metadata["phase2_final_loss"] = fmt9(p2.trace.back());
  write_box_document((fs::path(out_dir) / "refined_boxes.json").string(), doc);

  std::cout << "phase1 loss " << fmt9(p1.initial_loss) << " -> " << fmt9(p1.final_loss)
            << "\n"
            << "phase2 loss " << fmt9(p2.trace.front()) << " -> " << fmt9(p2.trace.back())
            << "\n";
  return 0;
}

int run_grad_check(uint64_t seed, int trials) {
  RngState rng(seed);
  double worst = 0.0;
  const LossWeights w;
  for (int t = 0; t < trials; ++t) {
    const int k = 2 + static_cast<int>(rng.next_u64() % 4);
    const int n_targets = 1 + static_cast<int>(rng.next_u64() % k);
    BoxSet targets;
    for (int i = 0; i < n_targets; ++i) {
      targets.push_back({{rng.next_uniform(0.2, 0.8), rng.next_uniform(0.2, 0.8),
                          rng.next_uniform(0.05, 0.3), rng.next_uniform(0.05, 0.3)},
                         rng.next_uniform()});
    }
    std::vector<PredBox> preds;
    for (int i = 0; i < k; ++i) {
      PredBox p;
      p.box = {rng.next_uniform(0.2, 0.8), rng.next_uniform(0.2, 0.8),
               rng.next_uniform(0.05, 0.3), rng.next_uniform(0.05, 0.3)};
      p.logit_obj = rng.next_uniform(-2.0, 2.0);
      p.logit_noobj = rng.next_uniform(-2.0, 2.0);
      preds.push_back(p);
    }
    worst = std::max(worst, finite_diff_check(targets, preds, k, w, 1e-5));
  }
  std::cout << "max relative error " << fmt9(worst) << " over " << trials << " trials\n";
  return worst < 1e-4 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"box-based refinement pipeline"};
  app.require_subcommand(1);

  std::string heatmap_path, mode = "train", out_path, targets_path, preds_path;
  std::string features_path, metric_name, gt_path, config_path, out_dir;
  int k = 10, a = 100, trials = 1000;
  double tau = 0.2, eps = 1e-5;
  bool union_prob = false;
  uint64_t seed = default_seed();

  auto* extract = app.add_subcommand("extract-boxes", "heatmap to scored boxes");
  extract->add_option("--heatmap", heatmap_path)->required();
  extract->add_option("--mode", mode)->check(CLI::IsMember({"train", "metric"}));
  extract->add_option("--out", out_path)->required();

  auto* loss = app.add_subcommand("loss", "detection loss between box documents");
  loss->add_option("--targets", targets_path)->required();
  loss->add_option("--preds", preds_path)->required();
  loss->add_option("--k", k)->required();
  loss->add_flag("--union-prob", union_prob);
  loss->add_option("--seed", seed);

  auto* lost = app.add_subcommand("lost", "LOST discovery on a feature grid");
  lost->add_option("--features", features_path)->required();
  lost->add_option("--a", a);
  lost->add_option("--out", out_path)->required();

  auto* tokencut = app.add_subcommand("tokencut", "TokenCut discovery on a feature grid");
  tokencut->add_option("--features", features_path)->required();
  tokencut->add_option("--tau", tau);
  tokencut->add_option("--eps", eps);
  tokencut->add_option("--out", out_path)->required();

  auto* move = app.add_subcommand("move", "largest-component box from a segmentation map");
  move->add_option("--heatmap", heatmap_path)->required();
  move->add_option("--out", out_path)->required();

  auto* eval = app.add_subcommand("eval", "localization metrics");
  eval->add_option("--metric", metric_name)
      ->required()
      ->check(CLI::IsMember({"pointing", "bbox", "corloc"}));
  eval->add_option("--preds", preds_path)->required();
  eval->add_option("--gt", gt_path)->required();

  auto* refine = app.add_subcommand("refine-demo", "teacher-student refinement demo");
  refine->add_option("--config", config_path)->required();
  refine->add_option("--out", out_dir)->required();

  auto* gradcheck = app.add_subcommand("grad-check", "finite-difference gradient check");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--trials", trials);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (extract->parsed()) return run_extract_boxes(heatmap_path, mode, out_path);
    if (loss->parsed()) return run_loss(targets_path, preds_path, k, union_prob, seed);
    if (lost->parsed()) {
      const FeatureGrid grid = load_features(features_path);
      write_discovery(lost_discover(grid, a), grid.cols, grid.rows, out_path, "lost");
      return 0;
    }
    if (tokencut->parsed()) {
      const FeatureGrid grid = load_features(features_path);
      write_discovery(tokencut_discover(grid, tau, eps), grid.cols, grid.rows, out_path,
                      "tokencut");
      return 0;
    }
    if (move->parsed()) {
      const Heatmap m = load_heatmap(heatmap_path);
      const Box box = move_box(m);
      BoxDocument doc = boxes_to_document({{box, 1.0}}, m.width, m.height);
      doc.metadata["method"] = "move";
      write_box_document(out_path, doc);
      std::cout << "1 box -> " << out_path << "\n";
      return 0;
    }
    if (eval->parsed()) return run_eval(metric_name, preds_path, gt_path);
    if (refine->parsed()) return run_refine_demo(config_path, out_dir);
    if (gradcheck->parsed()) return run_grad_check(seed, trials);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::cerr << "error: " << what << "\n";
    const bool numerical =
        what.find("diverged") != std::string::npos || what.find("converge") != std::string::npos;
    return numerical ? 3 : 2;
  }
  return 1;
}
