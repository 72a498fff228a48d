// irstd command-line front end: scene synthesis, diffusion, detection,
// evaluation, ROC export, toy training, and gradient checking.
//
// Conventions: machine-readable results go to stdout (JSON unless a CSV path
// is requested), progress and logs go to stderr.  Exit codes: 0 success,
// 1 usage/config error, 2 runtime/data error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "irstd/detectors.hpp"
#include "irstd/diffusion.hpp"
#include "irstd/gad.hpp"
#include "irstd/image.hpp"
#include "irstd/mask.hpp"
#include "irstd/metrics.hpp"
#include "irstd/pipeline.hpp"
#include "irstd/rng.hpp"
#include "irstd/synth.hpp"
#include "irstd/tensor.hpp"
#include "irstd/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace irstd;

namespace {

// Thrown for bad configuration discovered after flag parsing; maps to exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// JSON config files: a flat object whose keys are long option names of the
// invoked subcommand.  Keys are expanded into command-line tokens appended
// after the user's own flags, skipping any key the user already passed, so
// explicit flags override file values and unknown keys are rejected by the
// parser like any other unrecognized argument.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a file path");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw UsageError("config root must be a JSON object");

  const auto given = [&args](const std::string& key) {
    const std::string flag = "--" + key;
    for (const auto& t : args)
      if (t == flag || t.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError("config file cannot set --config");
    if (given(key)) continue;
    const auto push_scalar = [&args, &key](const json& v) {
      if (v.is_object() || v.is_array())
        throw UsageError("config key '" + key + "' must be a scalar or a flat array");
      if (v.is_boolean()) {
        args.push_back("--" + key + "=" + (v.get<bool>() ? "true" : "false"));
      } else {
        args.push_back("--" + key);
        args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
    };
    if (value.is_array()) {
      for (const auto& v : value) push_scalar(v);
    } else {
      push_scalar(value);
    }
  }
  return args;
}

void attach_json_config(CLI::App* sub, std::string& slot) {
  sub->add_option("--config", slot, "JSON config file; explicit flags override file values");
}

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json roc_points_json(const std::vector<metrics::RocPoint>& pts) {
  json arr = json::array();
  for (const auto& p : pts)
    arr.push_back({{"threshold", p.threshold}, {"fa", p.fa}, {"pd", p.pd}});
  return arr;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_roc_csv(const fs::path& path, const std::vector<metrics::RocPoint>& pts) {
  std::string text = "threshold,fa,pd\n";
  for (const auto& p : pts)
    text += format_double(p.threshold) + "," + format_double(p.fa) + "," +
            format_double(p.pd) + "\n";
  write_text_file(path, text);
}

metrics::FaMode parse_fa_mode(const std::string& name) {
  if (name == "component_pixels") return metrics::FaMode::ComponentPixels;
  if (name == "all_false_pixels") return metrics::FaMode::AllFalsePixels;
  throw UsageError("unknown fa mode: " + name +
                   " (expected component_pixels or all_false_pixels)");
}

gad::GadParams load_gad_snapshot(const fs::path& path) {
  gad::GadParams params = gad::init_params(gad::GadConfig{}, 0);
  gad::entries_to_params(autodiff::load_snapshot(path.string()), params);
  return params;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  std::string out_dir;
  int count = 1;
  std::uint64_t seed = 42;
  std::string tag = "suite";
  synth::SceneSpec spec;
};

int cmd_synth(const SynthOptions& o) {
  try {
    o.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.count < 0) throw UsageError("count must be non-negative");

  fs::create_directories(o.out_dir);
  json manifest;
  manifest["dir"] = o.out_dir;
  manifest["count"] = o.count;
  manifest["generator"] = kRngId;
  manifest["scenes"] = json::array();

  for (int i = 0; i < o.count; ++i) {
    synth::SceneSpec spec = o.spec;
    spec.seed = derive_seed(o.seed, o.tag, std::uint64_t(i));
    const synth::Scene scene = synth::generate_scene(spec);

    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%04d", i);
    const fs::path image_path = fs::path(o.out_dir) / (std::string(stem) + ".pgm");
    const fs::path mask_path = fs::path(o.out_dir) / (std::string(stem) + "_mask.pgm");
    const fs::path sidecar_path = fs::path(o.out_dir) / (std::string(stem) + ".json");

    save_pgm(image_path.string(), scene.image);
    save_pgm(mask_path.string(), scene.mask.to_image());
    write_text_file(sidecar_path, synth::scene_sidecar(spec, scene).dump(2) + "\n");

    manifest["scenes"].push_back({{"image", image_path.string()},
                                  {"mask", mask_path.string()},
                                  {"sidecar", sidecar_path.string()},
                                  {"seed", spec.seed},
                                  {"targets", scene.blobs.size()}});
    log_line("wrote " + image_path.string());
  }
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// denoise

struct DenoiseOptions {
  std::string in_path;
  std::string out_path;
  std::string trace_path;  // defaults to out_path + ".energy.csv"
  diffusion::DiffusionParams dp;
  bool oracle = false;  // finite-difference Perona-Malik instead of wavelet flow
};

int cmd_denoise(const DenoiseOptions& o) {
  if (o.dp.steps < 0) throw UsageError("steps must be non-negative");
  if (!(o.dp.k > 0.0)) throw UsageError("k must be positive");
  GrayImage u = load_pgm(o.in_path);

  const std::string trace_path =
      o.trace_path.empty() ? o.out_path + ".energy.csv" : o.trace_path;
  std::string csv = "step,pm_energy\n";
  csv += "0," + format_double(diffusion::pm_energy(u, o.dp.k)) + "\n";
  for (int s = 1; s <= o.dp.steps; ++s) {
    u = o.oracle ? diffusion::pmd_step_fd(u, o.dp) : diffusion::wpmd_step(u, o.dp);
    csv += std::to_string(s) + "," + format_double(diffusion::pm_energy(u, o.dp.k)) + "\n";
  }
  save_pgm(o.out_path, u);
  write_text_file(trace_path, csv);

  json out;
  out["in"] = o.in_path;
  out["out"] = o.out_path;
  out["trace"] = trace_path;
  out["steps"] = o.dp.steps;
  out["k"] = o.dp.k;
  out["gamma"] = o.dp.gamma;
  out["oracle"] = o.oracle;
  out["pm_energy_final"] = diffusion::pm_energy(u, o.dp.k);
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// detect

struct DetectOptions {
  std::string dir;         // scan scene_*.pgm (+ _mask.pgm) pairs
  std::string image_path;  // single image mode
  std::string mask_path;
  std::string out_dir;
  std::string method = "tophat";  // tophat | maxmedian | wpmd-tophat | gad
  std::string snapshot;
  detectors::DetectorConfig det;
  diffusion::DiffusionParams dp;
  double threshold = 0.5;  // learned-pipeline binarization
  double tau = 3.0;
  std::string fa_mode = "component_pixels";
};

struct DetectInput {
  std::string name;
  GrayImage image;
  std::optional<BinaryMask> gt;
};

std::vector<DetectInput> gather_inputs(const DetectOptions& o) {
  std::vector<DetectInput> inputs;
  if (!o.image_path.empty()) {
    DetectInput in{fs::path(o.image_path).stem().string(), load_pgm(o.image_path), {}};
    if (!o.mask_path.empty()) in.gt = threshold_mask(load_pgm(o.mask_path), 0.5);
    inputs.push_back(std::move(in));
    return inputs;
  }
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(o.dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".pgm" && name.find("_mask") == std::string::npos &&
        name.find("_pred") == std::string::npos) {
      images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());
  for (const auto& path : images) {
    DetectInput in{path.stem().string(), load_pgm(path.string()), {}};
    fs::path mask = path.parent_path() / (path.stem().string() + "_mask.pgm");
    if (fs::exists(mask)) in.gt = threshold_mask(load_pgm(mask.string()), 0.5);
    inputs.push_back(std::move(in));
  }
  if (inputs.empty()) throw std::runtime_error("no .pgm images found in " + o.dir);
  return inputs;
}

int cmd_detect(const DetectOptions& o) {
  if (o.dir.empty() == o.image_path.empty())
    throw UsageError("exactly one of --dir or --image is required");
  if (o.method != "tophat" && o.method != "maxmedian" && o.method != "wpmd-tophat" &&
      o.method != "gad")
    throw UsageError("unknown method: " + o.method);
  if (o.method == "gad" && o.snapshot.empty())
    throw UsageError("--snapshot is required for the gad method");
  const metrics::FaMode fa_mode = parse_fa_mode(o.fa_mode);

  std::optional<gad::GadParams> params;
  if (o.method == "gad") params = load_gad_snapshot(o.snapshot);

  std::vector<DetectInput> inputs = gather_inputs(o);
  if (!o.out_dir.empty()) fs::create_directories(o.out_dir);

  std::vector<BinaryMask> preds;
  std::vector<BinaryMask> gts;
  std::vector<std::string> names;
  bool all_have_gt = true;
  for (const auto& in : inputs) {
    BinaryMask pred = [&] {
      if (o.method == "tophat")
        return detectors::threshold_adaptive(detectors::top_hat(in.image, o.det.radius),
                                             o.det.k_sigma);
      if (o.method == "maxmedian")
        return detectors::threshold_adaptive(detectors::max_median(in.image, o.det.window),
                                             o.det.k_sigma);
      if (o.method == "wpmd-tophat") {
        const GrayImage u = diffusion::wpmd_cascade(in.image, o.dp, o.dp.steps).back();
        return detectors::threshold_adaptive(detectors::top_hat(u, o.det.radius), o.det.k_sigma);
      }
      return threshold_mask(pipeline::gad_score(in.image, *params, o.dp), o.threshold);
    }();
    if (in.gt && !in.gt->same_shape(pred))
      throw std::runtime_error("image/mask dimension mismatch for " + in.name);

    if (!o.out_dir.empty()) {
      const fs::path pred_path = fs::path(o.out_dir) / (in.name + "_pred.pgm");
      save_pgm(pred_path.string(), pred.to_image());
      log_line("wrote " + pred_path.string());
    }
    names.push_back(in.name);
    if (in.gt) {
      gts.push_back(*in.gt);
    } else {
      all_have_gt = false;
    }
    preds.push_back(std::move(pred));
  }

  json out;
  out["method"] = o.method;
  out["images"] = inputs.size();
  if (all_have_gt) {
    metrics::EvalReport report = pipeline::evaluate(preds, gts, names, o.tau, fa_mode);
    out["report"] = report.to_json();
  } else {
    json per = json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      per.push_back({{"name", names[i]},
                     {"components", metrics::connected_components(preds[i]).items.size()},
                     {"pixels", preds[i].count()}});
    }
    out["per_image"] = per;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ablate-blocks

struct AblateOptions {
  int count = 50;
  std::uint64_t seed = 42;
  std::string tag = "suite";
  std::vector<int> blocks = {1, 2, 3, 4};
  pipeline::HarnessConfig harness;
  diffusion::DiffusionParams dp;
  std::string csv_path;
};

int cmd_ablate(const AblateOptions& o) {
  if (o.blocks.empty()) throw UsageError("empty block sweep");
  if (o.count <= 0) throw UsageError("count must be positive");
  log_line("generating " + std::to_string(o.count) + " scenes (tag '" + o.tag + "')");
  const auto suite = pipeline::make_suite(o.count, o.seed, o.tag);
  const auto rows = pipeline::ablate_blocks(suite, o.blocks, o.dp, o.harness);

  bool non_decreasing = true;
  int violation_at = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].iou < rows[i - 1].iou) {
      non_decreasing = false;
      violation_at = rows[i].blocks;
      break;
    }
  }

  json out;
  out["rows"] = json::array();
  std::string csv = "blocks,iou,niou,pd,fa\n";
  for (const auto& r : rows) {
    json row;
    row["blocks"] = r.blocks;
    row["iou"] = r.iou;
    row["niou"] = r.niou;
    if (r.pd.has_value()) row["pd"] = *r.pd; else row["pd"] = nullptr;
    row["fa"] = r.fa;
    out["rows"].push_back(row);
    csv += std::to_string(r.blocks) + "," + format_double(r.iou) + "," +
           format_double(r.niou) + "," + (r.pd ? format_double(*r.pd) : "") + "," +
           format_double(r.fa) + "\n";
  }
  out["iou_trend"] = non_decreasing ? "non-decreasing" : "violated";
  if (!non_decreasing) out["iou_trend_violation_at"] = violation_at;
  out["scenes"] = o.count;
  out["seed"] = o.seed;
  if (!o.csv_path.empty()) write_text_file(o.csv_path, csv);
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train-toy

struct TrainOptions {
  int count = 200;
  std::uint64_t seed = 42;
  std::string dir;  // optional: load exported scenes instead of generating
  gad::TrainConfig tc;
  std::string snapshot_path = "gad_snapshot.bin";
  std::string trace_path = "train_trace.csv";
  std::string resume_path;
};

std::vector<synth::Scene> load_scene_dir(const std::string& dir) {
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".pgm" && name.find("_mask") == std::string::npos &&
        name.find("_pred") == std::string::npos)
      images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<synth::Scene> scenes;
  for (const auto& path : images) {
    fs::path mask = path.parent_path() / (path.stem().string() + "_mask.pgm");
    if (!fs::exists(mask))
      throw std::runtime_error("missing mask for " + path.string());
    synth::Scene sc;
    sc.image = load_pgm(path.string());
    sc.clean = sc.image;
    sc.mask = threshold_mask(load_pgm(mask.string()), 0.5);
    scenes.push_back(std::move(sc));
  }
  if (scenes.empty()) throw std::runtime_error("no scenes found in " + dir);
  return scenes;
}

int cmd_train_toy(const TrainOptions& o) {
  if (o.tc.steps < 0) throw UsageError("steps must be non-negative");
  if (o.tc.lr < 0.0) throw UsageError("learning rate must be non-negative");
  if (o.dir.empty() && o.count <= 0) throw UsageError("count must be positive");

  const std::vector<synth::Scene> scenes =
      o.dir.empty() ? pipeline::make_suite(o.count, o.seed, "train") : load_scene_dir(o.dir);
  log_line("building training samples for " + std::to_string(scenes.size()) + " scenes");
  const auto dataset = pipeline::make_train_set(scenes);

  std::optional<gad::GadParams> start;
  if (!o.resume_path.empty()) start = load_gad_snapshot(o.resume_path);

  gad::GadConfig cfg;
  gad::TrainConfig tc = o.tc;
  tc.seed = o.seed;
  log_line("training " + std::to_string(tc.steps) + " steps at lr " + format_double(tc.lr));
  const gad::TrainResult result =
      gad::train_toy(dataset, cfg, tc, start ? &*start : nullptr);

  autodiff::save_snapshot(o.snapshot_path, gad::params_to_entries(result.params));
  std::string csv = "step,dice,bce,total\n";
  for (const auto& row : result.trace) {
    csv += std::to_string(row.step) + "," + format_double(row.dice) + "," +
           format_double(row.bce) + "," + format_double(row.total) + "\n";
  }
  write_text_file(o.trace_path, csv);

  json out;
  out["scenes"] = scenes.size();
  out["steps"] = tc.steps;
  out["lr"] = tc.lr;
  out["seed"] = o.seed;
  out["snapshot"] = o.snapshot_path;
  out["trace"] = o.trace_path;
  out["resumed"] = !o.resume_path.empty();
  if (!result.trace.empty()) {
    out["first_loss"] = result.trace.front().total;
    out["final_loss"] = result.trace.back().total;
    out["loss_ratio"] = result.trace.back().total / result.trace.front().total;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
  int seeds = 20;
  std::string corrupt;  // test hook: name of an op whose gradient is perturbed
};

// Identity node whose backward scales gradients by 1.01; wrapping an op's
// output with it simulates an incorrect backward rule for that op.
autodiff::Tensor corrupt_gradient(const autodiff::Tensor& x) {
  auto xn = x.n;
  autodiff::Tensor out = autodiff::detail::make_op(
      "corrupt", xn->shape, {xn}, [xn](autodiff::Node& node) {
        if (!xn->needs_grad) return;
        for (std::size_t i = 0; i < xn->grad.size(); ++i)
          xn->grad[i] += 1.01 * node.grad[i];
      });
  out.n->data = xn->data;
  return out;
}

struct GradCase {
  std::string name;
  double tolerance;
  // builds a scalar loss from the leaf under test, given a wrap hook applied
  // to the checked op's output
  std::function<autodiff::Tensor(const autodiff::Tensor& x, Rng& rng,
                                 const std::function<autodiff::Tensor(const autodiff::Tensor&)>&)>
      build;
  std::vector<int> leaf_shape;
};

autodiff::Tensor random_const(Rng& rng, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= std::size_t(d);
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0);
  return autodiff::Tensor::from_data(shape, data);
}

// Random-weighted reduction to a scalar so every output element contributes
// a distinct gradient.
autodiff::Tensor weighted_mean(const autodiff::Tensor& y, Rng& rng) {
  return autodiff::mean(autodiff::hadamard(y, random_const(rng, y.shape())));
}

std::vector<GradCase> gradcheck_cases() {
  using autodiff::Tensor;
  using Wrap = std::function<Tensor(const Tensor&)>;
  std::vector<GradCase> cases;

  cases.push_back({"matmul", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::matmul(x, random_const(rng, {6, 5}))), rng);
                   },
                   {4, 6}});
  cases.push_back({"conv2d", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     Tensor k = random_const(rng, {3, 3, 3, 4});
                     Tensor b = random_const(rng, {4});
                     return weighted_mean(w(autodiff::conv2d(x, k, b)), rng);
                   },
                   {6, 5, 3}});
  cases.push_back({"transposed_conv2d", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     Tensor k = random_const(rng, {2, 2, 3, 4});
                     return weighted_mean(w(autodiff::transposed_conv2d(x, k, Tensor{})), rng);
                   },
                   {4, 4, 3}});
  cases.push_back({"add", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     // both the same-shape and trailing-axis broadcast forms
                     Tensor same = autodiff::add(x, random_const(rng, {5, 4}));
                     Tensor bias = autodiff::add(same, random_const(rng, {4}));
                     return weighted_mean(w(bias), rng);
                   },
                   {5, 4}});
  cases.push_back({"hadamard", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::hadamard(x, random_const(rng, {5, 4}))), rng);
                   },
                   {5, 4}});
  cases.push_back({"relu", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::relu(x)), rng);
                   },
                   {6, 6}});
  cases.push_back({"sigmoid", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::sigmoid(x)), rng);
                   },
                   {6, 6}});
  cases.push_back({"softmax", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::softmax(x)), rng);
                   },
                   {5, 7}});
  cases.push_back({"layer_norm", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     Tensor g = random_const(rng, {6});
                     Tensor b = random_const(rng, {6});
                     return weighted_mean(w(autodiff::layer_norm(x, g, b)), rng);
                   },
                   {5, 6}});
  cases.push_back({"mean", 1e-6,
                   [](const Tensor& x, Rng&, const Wrap& w) { return w(autodiff::mean(x)); },
                   {6, 5}});
  cases.push_back({"reshape", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::reshape(x, {5, 8})), rng);
                   },
                   {4, 2, 5}});
  cases.push_back({"concat", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     return weighted_mean(w(autodiff::concat(x, random_const(rng, {3, 4}), 0)),
                                          rng);
                   },
                   {5, 4}});
  cases.push_back({"dice_loss", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     Tensor p = autodiff::sigmoid(x);
                     std::vector<double> lbl(36);
                     for (auto& v : lbl) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
                     return w(gad::dice_loss(p, autodiff::Tensor::from_data({6, 6}, lbl)));
                   },
                   {6, 6}});
  cases.push_back({"bce_loss", 1e-6,
                   [](const Tensor& x, Rng& rng, const Wrap& w) {
                     Tensor p = autodiff::sigmoid(x);
                     std::vector<double> lbl(36);
                     for (auto& v : lbl) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
                     return w(gad::bce_loss(p, autodiff::Tensor::from_data({6, 6}, lbl)));
                   },
                   {6, 6}});
  return cases;
}

// Full pipeline case: total_loss of the decoder on random features, checked
// against the deep feature map (the input every decoder stage depends on).
double gradcheck_pipeline(int seeds, bool corrupt, std::string& detail) {
  gad::GadConfig cfg;
  cfg.embed = 8;
  cfg.c_shallow = 4;
  cfg.c_fine = 4;
  cfg.mask_tokens = 2;
  double worst = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(9001, "gradcheck-pipeline", std::uint64_t(s)));
    gad::GadParams p = gad::init_params(cfg, derive_seed(9002, "gc-params", std::uint64_t(s)));
    autodiff::Tensor x_shallow = random_const(rng, {8, 8, cfg.c_shallow});
    autodiff::Tensor x_deep = random_const(rng, {4, 4, cfg.embed});
    x_deep.n->requires_grad = true;
    x_deep.n->needs_grad = true;
    std::vector<double> lbl(64), edge(64);
    for (auto& v : lbl) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    for (auto& v : edge) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    auto f = [&](const autodiff::Tensor& x) {
      gad::EncoderFeatures feats{x_shallow, x};
      gad::GadOut out = gad::gad_forward(feats, p);
      autodiff::Tensor loss = gad::total_loss(
          out.mask_prob, autodiff::Tensor::from_data({8, 8}, lbl), out.edge_prob,
          autodiff::Tensor::from_data({8, 8}, edge), cfg.lambda);
      return corrupt ? corrupt_gradient(loss) : loss;
    };
    const double err = autodiff::finite_diff_check(f, x_deep);
    if (err > worst) {
      worst = err;
      detail = "seed " + std::to_string(s);
    }
  }
  return worst;
}

int cmd_gradcheck(const GradcheckOptions& o) {
  if (o.seeds < 1) throw UsageError("seeds must be positive");
  auto cases = gradcheck_cases();
  std::vector<std::string> known;
  for (const auto& c : cases) known.push_back(c.name);
  known.push_back("full_pipeline");
  if (!o.corrupt.empty() &&
      std::find(known.begin(), known.end(), o.corrupt) == known.end())
    throw UsageError("unknown op for --corrupt: " + o.corrupt);

  json out;
  out["seeds"] = o.seeds;
  out["checks"] = json::array();
  int failures = 0;
  std::string failed_ops;

  for (const auto& c : cases) {
    const bool corrupt = (o.corrupt == c.name);
    auto wrap = [corrupt](const autodiff::Tensor& t) {
      return corrupt ? corrupt_gradient(t) : t;
    };
    double worst = 0.0;
    for (int s = 0; s < o.seeds; ++s) {
      Rng rng(derive_seed(9000, "gradcheck-" + c.name, std::uint64_t(s)));
      autodiff::Tensor x = random_const(rng, c.leaf_shape);
      x.n->requires_grad = true;
      x.n->needs_grad = true;
      auto f = [&](const autodiff::Tensor& t) { return c.build(t, rng, wrap); };
      // rebuild rng state per evaluation so constants are reproducible
      auto f_fixed = [&, seed = derive_seed(9000, "gradcheck-" + c.name, std::uint64_t(s))](
                         const autodiff::Tensor& t) {
        Rng local(derive_seed(seed, "consts"));
        return c.build(t, local, wrap);
      };
      worst = std::max(worst, autodiff::finite_diff_check(f_fixed, x));
      (void)f;
    }
    const bool ok = worst < c.tolerance;
    if (!ok) {
      ++failures;
      failed_ops += (failed_ops.empty() ? "" : ", ") + c.name;
    }
    out["checks"].push_back({{"op", c.name},
                             {"worst_rel_err", worst},
                             {"tolerance", c.tolerance},
                             {"status", ok ? "pass" : "FAIL"}});
    log_line(c.name + ": worst rel err " + format_double(worst) + (ok ? " pass" : " FAIL"));
  }

  std::string detail;
  const double pipe_err = gradcheck_pipeline(o.seeds, o.corrupt == "full_pipeline", detail);
  const bool pipe_ok = pipe_err < 1e-4;
  if (!pipe_ok) {
    ++failures;
    failed_ops += (failed_ops.empty() ? "" : ", ") + std::string("full_pipeline");
  }
  out["checks"].push_back({{"op", "full_pipeline"},
                           {"worst_rel_err", pipe_err},
                           {"tolerance", 1e-4},
                           {"status", pipe_ok ? "pass" : "FAIL"}});
  log_line("full_pipeline: worst rel err " + format_double(pipe_err) +
           (pipe_ok ? " pass" : " FAIL"));

  out["failures"] = failures;
  if (failures > 0) out["failed_ops"] = failed_ops;
  std::cout << out.dump(2) << "\n";
  return failures == 0 ? 0 : 2;
}

// ---------------------------------------------------------------------------
// roc

struct RocOptions {
  std::string method = "tophat";  // tophat | maxmedian | gad
  std::string snapshot;
  int count = 50;
  std::uint64_t seed = 42;
  std::string tag = "suite";
  int thresholds = 64;
  std::vector<double> threshold_list;  // explicit grid override
  double fa_cap = 1e-2;
  std::string fa_mode = "all_false_pixels";
  double tau = 3.0;
  detectors::DetectorConfig det;
  diffusion::DiffusionParams dp;
  std::string csv_path;
};

int cmd_roc(const RocOptions& o) {
  if (o.method != "tophat" && o.method != "maxmedian" && o.method != "gad")
    throw UsageError("unknown method: " + o.method);
  if (o.method == "gad" && o.snapshot.empty())
    throw UsageError("--snapshot is required for the gad method");
  if (o.count <= 0) throw UsageError("count must be positive");
  if (o.thresholds < 1) throw UsageError("thresholds must be positive");
  const metrics::FaMode fa_mode = parse_fa_mode(o.fa_mode);

  std::optional<gad::GadParams> params;
  if (o.method == "gad") params = load_gad_snapshot(o.snapshot);

  log_line("generating " + std::to_string(o.count) + " scenes (tag '" + o.tag + "')");
  const auto suite = pipeline::make_suite(o.count, o.seed, o.tag);
  std::vector<GrayImage> scores;
  std::vector<BinaryMask> gts;
  for (const auto& sc : suite) {
    if (o.method == "tophat") {
      scores.push_back(pipeline::tophat_score(sc.image, o.det.radius));
    } else if (o.method == "maxmedian") {
      scores.push_back(detectors::max_median(sc.image, o.det.window));
    } else {
      scores.push_back(pipeline::gad_score(sc.image, *params, o.dp));
    }
    gts.push_back(sc.mask);
  }

  const std::vector<double> grid = o.threshold_list.empty()
                                       ? pipeline::descending_thresholds(scores, o.thresholds)
                                       : o.threshold_list;
  std::vector<metrics::RocPoint> points = metrics::roc(scores, gts, grid, o.tau, fa_mode);
  if (o.fa_cap > 0.0) {
    std::vector<metrics::RocPoint> kept;
    for (const auto& p : points)
      if (p.fa <= o.fa_cap) kept.push_back(p);
    points = std::move(kept);
  }
  if (points.empty()) throw std::runtime_error("no ROC points within the fa budget");

  json out;
  out["method"] = o.method;
  out["scenes"] = o.count;
  out["fa_mode"] = o.fa_mode;
  out["fa_cap"] = o.fa_cap;
  out["tau"] = o.tau;
  out["auc"] = metrics::auc(points, o.fa_cap);
  out["points"] = roc_points_json(points);
  if (!o.csv_path.empty()) write_roc_csv(o.csv_path, points);
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"infrared small-target detection workbench"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  SynthOptions so;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic scenes");
  std::string synth_cmd_config;
  attach_json_config(synth_cmd, synth_cmd_config);
  synth_cmd->add_option("--out", so.out_dir, "output directory")->required();
  synth_cmd->add_option("--count", so.count, "number of scenes");
  synth_cmd->add_option("--seed", so.seed, "base seed");
  synth_cmd->add_option("--tag", so.tag, "seed stream tag");
  synth_cmd->add_option("--height", so.spec.height, "scene height");
  synth_cmd->add_option("--width", so.spec.width, "scene width");
  synth_cmd->add_option("--count-min", so.spec.count_min, "min targets per scene");
  synth_cmd->add_option("--count-max", so.spec.count_max, "max targets per scene");
  synth_cmd->add_option("--sigma-min", so.spec.sigma_min, "min target sigma");
  synth_cmd->add_option("--sigma-max", so.spec.sigma_max, "max target sigma");
  synth_cmd->add_option("--amp-min", so.spec.amp_min, "min target amplitude");
  synth_cmd->add_option("--amp-max", so.spec.amp_max, "max target amplitude");
  synth_cmd->add_option("--clutter", so.spec.clutter, "clutter amplitude");
  synth_cmd->add_option("--noise-sigma", so.spec.noise_sigma, "white noise sigma");

  // denoise ------------------------------------------------------------------
  DenoiseOptions dno;
  CLI::App* denoise_cmd = app.add_subcommand("denoise", "wavelet Perona-Malik denoising");
  std::string denoise_cmd_config;
  attach_json_config(denoise_cmd, denoise_cmd_config);
  denoise_cmd->add_option("--in", dno.in_path, "input PGM image")->required();
  denoise_cmd->add_option("--out", dno.out_path, "output PGM image")->required();
  denoise_cmd->add_option("--trace", dno.trace_path, "energy CSV path (default <out>.energy.csv)");
  denoise_cmd->add_option("--steps", dno.dp.steps, "diffusion steps");
  denoise_cmd->add_option("--k", dno.dp.k, "diffusivity contrast parameter");
  denoise_cmd->add_option("--gamma", dno.dp.gamma, "step size");
  denoise_cmd->add_flag("--oracle", dno.oracle, "use the finite-difference flow");

  // detect ------------------------------------------------------------------
  DetectOptions dto;
  CLI::App* detect_cmd = app.add_subcommand("detect", "detect targets and evaluate");
  std::string detect_cmd_config;
  attach_json_config(detect_cmd, detect_cmd_config);
  detect_cmd->add_option("--dir", dto.dir, "directory of scene .pgm files");
  detect_cmd->add_option("--image", dto.image_path, "single input image");
  detect_cmd->add_option("--mask", dto.mask_path, "GT mask for --image");
  detect_cmd->add_option("--out-dir", dto.out_dir, "directory for predicted masks");
  detect_cmd->add_option("--method", dto.method, "tophat | maxmedian | wpmd-tophat | gad");
  detect_cmd->add_option("--snapshot", dto.snapshot, "parameter snapshot for gad");
  detect_cmd->add_option("--radius", dto.det.radius, "top-hat structuring element radius");
  detect_cmd->add_option("--window", dto.det.window, "max-median half window");
  detect_cmd->add_option("--k-sigma", dto.det.k_sigma, "adaptive threshold multiplier");
  detect_cmd->add_option("--steps", dto.dp.steps, "wpmd preprocessing steps");
  detect_cmd->add_option("--k", dto.dp.k, "diffusivity contrast parameter");
  detect_cmd->add_option("--gamma", dto.dp.gamma, "diffusion step size");
  detect_cmd->add_option("--threshold", dto.threshold, "learned-pipeline binarization threshold");
  detect_cmd->add_option("--tau", dto.tau, "centroid match distance");
  detect_cmd->add_option("--fa-mode", dto.fa_mode, "component_pixels | all_false_pixels");

  // ablate-blocks -------------------------------------------------------------
  AblateOptions abo;
  CLI::App* ablate_cmd = app.add_subcommand("ablate-blocks", "sweep diffusion block count");
  std::string ablate_cmd_config;
  attach_json_config(ablate_cmd, ablate_cmd_config);
  ablate_cmd->add_option("--count", abo.count, "suite size");
  ablate_cmd->add_option("--seed", abo.seed, "base seed");
  ablate_cmd->add_option("--tag", abo.tag, "seed stream tag");
  ablate_cmd->add_option("--blocks", abo.blocks, "block counts to sweep");
  ablate_cmd->add_option("--radius", abo.harness.tophat_radius, "detector radius");
  ablate_cmd->add_option("--k-sigma", abo.harness.k_sigma, "adaptive threshold multiplier");
  ablate_cmd->add_option("--tau", abo.harness.tau, "centroid match distance");
  ablate_cmd->add_option("--k", abo.dp.k, "diffusivity contrast parameter");
  ablate_cmd->add_option("--gamma", abo.dp.gamma, "diffusion step size");
  ablate_cmd->add_option("--csv", abo.csv_path, "also write the table as CSV");

  // train-toy -----------------------------------------------------------------
  TrainOptions tro;
  CLI::App* train_cmd = app.add_subcommand("train-toy", "train the toy decoder");
  std::string train_cmd_config;
  attach_json_config(train_cmd, train_cmd_config);
  train_cmd->add_option("--count", tro.count, "generated training scenes");
  train_cmd->add_option("--seed", tro.seed, "base seed (suite and init)");
  train_cmd->add_option("--dir", tro.dir, "train on exported scenes instead");
  train_cmd->add_option("--steps", tro.tc.steps, "gradient steps");
  train_cmd->add_option("--lr", tro.tc.lr, "learning rate");
  train_cmd->add_option("--out", tro.snapshot_path, "parameter snapshot path");
  train_cmd->add_option("--trace", tro.trace_path, "loss trace CSV path");
  train_cmd->add_option("--resume", tro.resume_path, "resume from a snapshot");

  // gradcheck -----------------------------------------------------------------
  GradcheckOptions gco;
  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::string grad_cmd_config;
  attach_json_config(grad_cmd, grad_cmd_config);
  grad_cmd->add_option("--seeds", gco.seeds, "random shapes per op");
  grad_cmd->add_option("--corrupt", gco.corrupt, "test hook: corrupt the named op's gradient");

  // roc -------------------------------------------------------------------------
  RocOptions rco;
  CLI::App* roc_cmd = app.add_subcommand("roc", "threshold sweep and AUC");
  std::string roc_cmd_config;
  attach_json_config(roc_cmd, roc_cmd_config);
  roc_cmd->add_option("--method", rco.method, "tophat | maxmedian | gad");
  roc_cmd->add_option("--snapshot", rco.snapshot, "parameter snapshot for gad");
  roc_cmd->add_option("--count", rco.count, "suite size");
  roc_cmd->add_option("--seed", rco.seed, "base seed");
  roc_cmd->add_option("--tag", rco.tag, "seed stream tag");
  roc_cmd->add_option("--thresholds", rco.thresholds, "grid size over the score range");
  roc_cmd->add_option("--threshold-list", rco.threshold_list,
                      "explicit descending threshold grid");
  roc_cmd->add_option("--fa-cap", rco.fa_cap, "false-alarm budget (fraction of pixels)");
  roc_cmd->add_option("--fa-mode", rco.fa_mode, "component_pixels | all_false_pixels");
  roc_cmd->add_option("--tau", rco.tau, "centroid match distance");
  roc_cmd->add_option("--radius", rco.det.radius, "top-hat structuring element radius");
  roc_cmd->add_option("--window", rco.det.window, "max-median half window");
  roc_cmd->add_option("--csv", rco.csv_path, "also write the curve as CSV");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp" ||
        e.get_name() == "CallForVersion") {
      return app.exit(e);
    }
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(so);
    if (denoise_cmd->parsed()) return cmd_denoise(dno);
    if (detect_cmd->parsed()) return cmd_detect(dto);
    if (ablate_cmd->parsed()) return cmd_ablate(abo);
    if (train_cmd->parsed()) return cmd_train_toy(tro);
    if (grad_cmd->parsed()) return cmd_gradcheck(gco);
    if (roc_cmd->parsed()) return cmd_roc(rco);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
