// hrm: train, detect, eval and synth subcommands.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hrm/hrm.hpp"

namespace fs = std::filesystem;
using namespace hrm;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitModel = 3;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIncompatibleModel:
    case ErrorCode::kCorruptModel:
    case ErrorCode::kDegenerateFit:
    case ErrorCode::kInvalidComponents:
      return kExitModel;
    default:
      return kExitInput;
  }
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int threads = 0;
};

Config load_config(const Common& c) {
  IniSections ini = c.config.empty() ? IniSections{} : load_ini(c.config);
  for (const std::string& o : c.overrides) apply_override(ini, o);
  Config cfg = make_config(ini);
  if (c.threads > 0) cfg.threads = cfg.training.threads = c.threads;
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool config_required) {
  app->add_option("--config", c.config, "configuration file")->required(config_required)->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "override a setting, section.key=value")->take_all();
  app->add_option("--threads", c.threads, "worker threads (HRM_THREADS caps this)")->check(CLI::NonNegativeNumber);
}

int run_train(const Common& common, const std::string& annotations, const std::string& out, const std::string& seed) {
  Config cfg = load_config(common);
  if (!seed.empty()) cfg.training.seed = std::stoull(seed);
  const Dataset ds = load_dataset(annotations);
  for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  const ModelBank bank = train(load_images(ds), cfg.geometry, cfg.training);
  save_model(out, bank);
  std::cerr << "trained " << bank.size() << " context models, reference box " << bank.reference_width << "x"
            << bank.reference_height << "\n";
  return 0;
}

int run_detect(const Common& common, const std::string& model, const std::string& images, const std::string& out,
               const std::string& heatmaps) {
  const Config cfg = load_config(common);
  const ModelBank bank = load_model(model);
  check_bank(bank);
  const std::vector<fs::path> files = list_images(images);
  DetectConfig dc = DetectConfig::from(cfg);
  const int workers = dc.threads;
  dc.threads = 1;
  std::vector<std::vector<Detection>> per_image(files.size());
  parallel_for(static_cast<int>(files.size()), workers, [&](int i) {
    const fs::path& file = files[static_cast<std::size_t>(i)];
    const std::string id = fs::relative(file, images).generic_string();
    const Image img = read_pnm(file);
    if (heatmaps.empty()) {
      for (const Hypothesis& h : trace_detection(img, bank, dc).accepted) {
        per_image[static_cast<std::size_t>(i)].push_back({id, h, detection_box(h, bank)});
      }
    } else {
      const DetectionTrace t = trace_detection(img, bank, dc);
      for (const Hypothesis& h : t.accepted) per_image[static_cast<std::size_t>(i)].push_back({id, h, detection_box(h, bank)});
      write_heatmaps(t.cube, heatmaps, file.stem().string());
    }
  });
  std::vector<Detection> all;
  for (auto& d : per_image) all.insert(all.end(), d.begin(), d.end());
  const double s = 1.0 / bank.train_scale;
  atomic_write(out, format_detections(all, s * bank.reference_width, s * bank.reference_height));
  std::cerr << all.size() << " detections in " << files.size() << " images\n";
  return 0;
}

int run_eval(const std::string& detections, const std::string& annotations, const std::string& out, double iou_min,
             const std::string& ref_box) {
  DetectionsFile f = load_detections(detections);
  if (!ref_box.empty()) {
    const auto x = ref_box.find('x');
    if (x == std::string::npos) fail(ErrorCode::kInvalidInput, "--ref-box expects WxH");
    f.reference_width = detail::to_double(ref_box.substr(0, x), "--ref-box");
    f.reference_height = detail::to_double(ref_box.substr(x + 1), "--ref-box");
  }
  assign_boxes(f.detections, f.reference_width, f.reference_height);
  const Dataset truth = load_dataset(annotations);
  // Detections name images relative to the detect directory; accept a bare
  // file name when it identifies one annotated image.
  std::map<std::string, std::string> by_name;
  std::map<std::string, int> name_count;
  for (const auto& e : truth.entries) {
    const std::string name = fs::path(e.id).filename().string();
    by_name[name] = e.id;
    ++name_count[name];
  }
  for (Detection& d : f.detections) {
    if (truth.find(d.image_id)) continue;
    if (auto it = by_name.find(d.image_id); it != by_name.end() && name_count[d.image_id] == 1) d.image_id = it->second;
  }
  const EvalReport r = evaluate(f.detections, truth, iou_min);
  atomic_write(out, format_pr_csv(r));
  std::printf("ground_truth %d detections %zu eer %.6f\n", r.ground_truth, f.detections.size(), r.eer);
  return 0;
}

int run_synth(const std::string& spec, std::uint64_t seed, const std::string& out) {
  const SynthBatch b = parse_synth_batch(load_ini(spec));
  write_synth_batch(b, seed, out);
  std::cerr << "wrote " << b.train_scenes << " training and " << b.scenes - b.train_scenes << " test scenes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hough regression object detector"};
  app.require_subcommand(1);

  Common train_common, detect_common;
  std::string annotations, out, model, images, heatmaps, detections, spec, ref_box, train_seed;
  double iou_min = 0.5;
  std::uint64_t seed = 0;

  CLI::App* train_cmd = app.add_subcommand("train", "fit the regression model bank");
  add_common(train_cmd, train_common, true);
  train_cmd->add_option("--annotations", annotations, "annotation file")->required();
  train_cmd->add_option("--out", out, "model file to write")->required();
  train_cmd->add_option("--seed", train_seed, "sampling seed (overrides training.seed)");

  CLI::App* detect_cmd = app.add_subcommand("detect", "detect objects in a directory of images");
  add_common(detect_cmd, detect_common, false);
  detect_cmd->add_option("--model", model, "model file")->required();
  detect_cmd->add_option("--images", images, "image directory")->required();
  detect_cmd->add_option("--out", out, "detections file to write")->required();
  detect_cmd->add_option("--heatmaps", heatmaps, "also write per-level Hough images here");

  CLI::App* eval_cmd = app.add_subcommand("eval", "precision/recall against annotations");
  eval_cmd->add_option("--detections", detections, "detections file")->required();
  eval_cmd->add_option("--annotations", annotations, "annotation file")->required();
  eval_cmd->add_option("--out", out, "PR csv to write")->required();
  eval_cmd->add_option("--iou", iou_min, "IoU needed for a match")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--ref-box", ref_box, "reference box WxH, overriding the detections header");

  CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic scenes");
  synth_cmd->add_option("--spec", spec, "scene spec file")->required();
  synth_cmd->add_option("--seed", seed, "random seed")->required();
  synth_cmd->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_common, annotations, out, train_seed);
    if (detect_cmd->parsed()) return run_detect(detect_common, model, images, out, heatmaps);
    if (eval_cmd->parsed()) return run_eval(detections, annotations, out, iou_min, ref_box);
    if (synth_cmd->parsed()) return run_synth(spec, seed, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
