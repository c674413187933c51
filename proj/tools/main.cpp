#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unetkit/checkpoint.hpp"
#include "unetkit/data.hpp"
#include "unetkit/errors.hpp"
#include "unetkit/evaluate.hpp"
#include "unetkit/metrics.hpp"
#include "unetkit/report.hpp"
#include "unetkit/train.hpp"
#include "unetkit/unet.hpp"

namespace fs = std::filesystem;
using namespace unetkit;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
  const std::size_t x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= s.size()) {
    throw ConfigError("size must look like 512x512, got '" + s + "'");
  }
  try {
    const int h = std::stoi(s.substr(0, x));
    const int w = std::stoi(s.substr(x + 1));
    if (h < 1 || w < 1) throw ConfigError("size must be positive, got '" + s + "'");
    return {h, w};
  } catch (const std::invalid_argument&) {
    throw ConfigError("size must look like 512x512, got '" + s + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("size out of range: '" + s + "'");
  }
}

// Effective settings go to stderr so stdout stays parseable.
void log_settings(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) std::cerr << "config " << cmd << ": " << k << "=" << v << "\n";
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Flat key=value settings file. Keys mirror the long flag names; values set
// this way lose to anything given on the command line.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: " + s);
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    CLI::Option* op = cmd->get_option_no_throw("--" + key);
    if (op == nullptr) throw ConfigError("unknown config key: " + key);
    if (op->count() > 0) continue;
    op->add_result(value);
    try {
      op->run_callback();
    } catch (const CLI::ParseError&) {
      throw ConfigError("bad config value for " + key + ": " + value);
    }
  }
}

void require_setting(CLI::App* cmd, const std::string& flag) {
  if (cmd->get_option(flag)->count() == 0) {
    throw ConfigError("missing required setting " + flag + " (flag or config file)");
  }
}

struct AugmentArgs {
  std::string data, out;
  bool no_augment = false;
  std::string size = "512x512";
  double angle = 45.0;
};

int run_augment(const AugmentArgs& a) {
  const auto [h, w] = parse_size(a.size);
  log_settings("augment", {{"data", a.data},
                           {"out", a.out},
                           {"augment", a.no_augment ? "false" : "true"},
                           {"size", a.size},
                           {"angle", std::to_string(a.angle)}});
  Manifest manifest = scan_dataset(a.data);
  AugmentOptions opts;
  opts.enabled = !a.no_augment;
  opts.angle = a.angle;
  opts.target_h = h;
  opts.target_w = w;
  AugmentResult result = augment_dataset(manifest, a.out, opts);
  std::printf("input pairs: %d\n", result.source_pairs);
  std::printf("%d pairs written\n", result.written_pairs);
  return 0;
}

struct TrainArgs {
  std::string data, ckpt;
  std::string size = "64x64";
  int in_channels = 3;
  int out_channels = 1;
  int base_channels = 8;
  int depth = 4;
  int epochs = 50;
  int batch_size = 8;
  double lr = 1e-4;
  double val_ratio = 0.2;
  int scheduler_patience = 5;
  double scheduler_factor = 0.5;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto [h, w] = parse_size(a.size);
  log_settings("train", {{"data", a.data},
                         {"ckpt", a.ckpt},
                         {"size", a.size},
                         {"in_channels", std::to_string(a.in_channels)},
                         {"out_channels", std::to_string(a.out_channels)},
                         {"base_channels", std::to_string(a.base_channels)},
                         {"depth", std::to_string(a.depth)},
                         {"epochs", std::to_string(a.epochs)},
                         {"batch_size", std::to_string(a.batch_size)},
                         {"lr", std::to_string(a.lr)},
                         {"val_ratio", std::to_string(a.val_ratio)},
                         {"scheduler_patience", std::to_string(a.scheduler_patience)},
                         {"scheduler_factor", std::to_string(a.scheduler_factor)},
                         {"seed", std::to_string(a.seed)}});
  Manifest manifest = scan_dataset(a.data);
  auto [train_manifest, val_manifest] = split_train_val(manifest, 1.0 - a.val_ratio, a.seed);
  std::vector<SamplePair> train_set, val_set;
  for (const auto& e : train_manifest.entries) train_set.push_back(load_sample(e, h, w));
  for (const auto& e : val_manifest.entries) val_set.push_back(load_sample(e, h, w));

  UNetConfig mc{a.in_channels, a.out_channels, a.base_channels, a.depth};
  UNetModel model = build_unet<float>(mc, a.seed);

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.lr;
  tc.scheduler_patience = a.scheduler_patience;
  tc.scheduler_factor = a.scheduler_factor;
  tc.checkpoint_path = a.ckpt;
  tc.seed = a.seed;
  tc.log = [](const std::string& line) { std::printf("%s\n", line.c_str()); };
  TrainingSummary summary = train(model, train_set, val_set, tc);
  std::printf("best_epoch=%d best_val_loss=%.6f checkpoint=%s\n", summary.best_epoch,
              summary.best_val_loss, a.ckpt.c_str());
  return 0;
}

struct EvalArgs {
  std::string data, ckpt, out;
  double threshold = 0.5;
  std::string size = "512x512";
};

int run_eval(const EvalArgs& a) {
  const auto [h, w] = parse_size(a.size);
  log_settings("eval", {{"data", a.data},
                        {"ckpt", a.ckpt},
                        {"out", a.out},
                        {"threshold", std::to_string(a.threshold)},
                        {"size", a.size}});
  UNetModel model = model_from_checkpoint(load_checkpoint(a.ckpt));
  Manifest manifest = scan_dataset(a.data);
  EvalResult result = evaluate_dataset(model, manifest, a.threshold, a.out, h, w);
  for (const auto& msg : result.skip_messages) std::cerr << "skipped " << msg << "\n";
  std::printf("images=%zu skipped=%d\n", result.records.size(), result.skipped);
  std::printf("mean jaccard=%.6f f1=%.6f recall=%.6f precision=%.6f accuracy=%.6f\n",
              result.mean.jaccard, result.mean.f1, result.mean.recall, result.mean.precision,
              result.mean.accuracy);
  std::printf("fps=%.3f mean_ms=%.3f\n", result.fps.fps, result.fps.mean_ms);
  std::printf("csv=%s\n", result.csv_path.c_str());
  return 0;
}

struct InferArgs {
  std::string image, ckpt, out;
  double threshold = 0.5;
  std::string size = "512x512";
};

int run_infer(const InferArgs& a) {
  const auto [h, w] = parse_size(a.size);
  std::string out = a.out;
  if (out.empty()) {
    out = (fs::path(a.image).parent_path() / (fs::path(a.image).stem().string() + "_mask.png"))
              .string();
  }
  log_settings("infer", {{"image", a.image},
                         {"ckpt", a.ckpt},
                         {"out", out},
                         {"threshold", std::to_string(a.threshold)},
                         {"size", a.size}});
  UNetModel model = model_from_checkpoint(load_checkpoint(a.ckpt));
  const ImageU8 src = read_image(a.image, 3);
  const Tensor input = image_to_tensor(resize_bilinear(src, h, w));
  const Tensor pred = binarize(predict_probs(model, input), a.threshold);
  // back to the source resolution so the mask overlays the original image
  ImageU8 mask = resize_nearest(mask_to_image(pred), src.h, src.w);
  write_image_png(out, mask);
  std::printf("mask=%s size=%dx%d\n", out.c_str(), mask.h, mask.w);
  return 0;
}

struct ReportArgs {
  std::string masks;
  int grade = 0;
  double threshold = 0.001;
  std::string templates_path, out, endpoint;
  double timeout = 10.0;
};

int run_report(const ReportArgs& a) {
  log_settings("report", {{"masks", a.masks},
                          {"grade", std::to_string(a.grade)},
                          {"threshold", std::to_string(a.threshold)},
                          {"templates", a.templates_path},
                          {"out", a.out},
                          {"endpoint", a.endpoint},
                          {"timeout", std::to_string(a.timeout)}});
  std::map<std::string, Tensor> masks;
  for (const char* key : kLesionKeys) {
    const fs::path p = fs::path(a.masks) / (std::string(key) + ".png");
    if (!fs::exists(p)) continue;
    masks.emplace(key, mask_to_tensor(read_image(p.string(), 1)));
  }
  Findings f = findings_from_masks(masks, a.threshold, a.grade);
  ReportTemplates tpl =
      a.templates_path.empty() ? ReportTemplates::defaults() : load_templates(a.templates_path);
  Report report = compose_report(f, tpl);
  if (!a.endpoint.empty()) {
    ClientConfig cc;
    cc.endpoint = a.endpoint;
    cc.timeout_seconds = a.timeout;
    auto client = make_http_client(cc);
    report = enrich_via_external(f, report, client.get());
  }
  std::fputs(report.text.c_str(), stdout);
  if (!a.out.empty()) {
    std::ofstream block_out(a.out, std::ios::trunc);
    if (!block_out) throw IoError("cannot write findings block to: " + a.out);
    block_out << report.block << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-Net lesion segmentation toolkit"};
  app.require_subcommand(1);

  AugmentArgs aug;
  std::string aug_cfg;
  auto* cmd_augment = app.add_subcommand("augment", "Resize and augment an image/mask dataset");
  cmd_augment->add_option("--config", aug_cfg, "Flat key=value settings file");
  cmd_augment->add_option("--data", aug.data, "Dataset root with images/ and masks/");
  cmd_augment->add_option("--out", aug.out, "Output dataset root");
  cmd_augment->add_flag("--no-augment", aug.no_augment, "Only resize, no flip/rotate variants");
  cmd_augment->add_option("--size", aug.size, "Target size HxW")->capture_default_str();
  cmd_augment->add_option("--angle", aug.angle, "Rotation angle in degrees")
      ->capture_default_str();

  TrainArgs tr;
  std::string tr_cfg;
  auto* cmd_train = app.add_subcommand("train", "Train a model on an augmented dataset");
  cmd_train->add_option("--config", tr_cfg, "Flat key=value settings file");
  cmd_train->add_option("--data", tr.data, "Dataset root with images/ and masks/");
  cmd_train->add_option("--ckpt", tr.ckpt, "Checkpoint output path");
  cmd_train->add_option("--size", tr.size, "Working size HxW")->capture_default_str();
  cmd_train->add_option("--in_channels", tr.in_channels, "Model input channels")
      ->capture_default_str();
  cmd_train->add_option("--out_channels", tr.out_channels, "Model output channels")
      ->capture_default_str();
  cmd_train->add_option("--base_channels", tr.base_channels, "Channels at the first level")
      ->capture_default_str();
  cmd_train->add_option("--depth", tr.depth, "Encoder depth")->capture_default_str();
  cmd_train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  cmd_train->add_option("--batch_size", tr.batch_size, "Batch size")->capture_default_str();
  cmd_train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  cmd_train->add_option("--val_ratio", tr.val_ratio, "Fraction of pairs held out for validation")
      ->capture_default_str();
  cmd_train->add_option("--scheduler_patience", tr.scheduler_patience, "Plateau patience")
      ->capture_default_str();
  cmd_train->add_option("--scheduler_factor", tr.scheduler_factor, "Plateau lr factor")
      ->capture_default_str();
  cmd_train->add_option("--seed", tr.seed, "Seed for init/shuffle/split")->capture_default_str();

  EvalArgs ev;
  std::string ev_cfg;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  cmd_eval->add_option("--config", ev_cfg, "Flat key=value settings file");
  cmd_eval->add_option("--data", ev.data, "Dataset root with images/ and masks/");
  cmd_eval->add_option("--ckpt", ev.ckpt, "Checkpoint path");
  cmd_eval->add_option("--out", ev.out, "Output directory for CSV and triptychs");
  cmd_eval->add_option("--threshold", ev.threshold, "Binarization threshold")
      ->capture_default_str();
  cmd_eval->add_option("--size", ev.size, "Working size HxW")->capture_default_str();

  InferArgs in;
  std::string in_cfg;
  auto* cmd_infer = app.add_subcommand("infer", "Predict a mask for one image");
  cmd_infer->add_option("--config", in_cfg, "Flat key=value settings file");
  cmd_infer->add_option("--image", in.image, "Input image");
  cmd_infer->add_option("--ckpt", in.ckpt, "Checkpoint path");
  cmd_infer->add_option("--out", in.out, "Output mask path (default <stem>_mask.png)");
  cmd_infer->add_option("--threshold", in.threshold, "Binarization threshold")
      ->capture_default_str();
  cmd_infer->add_option("--size", in.size, "Model working size HxW")->capture_default_str();

  ReportArgs rp;
  std::string rp_cfg;
  auto* cmd_report = app.add_subcommand("report", "Compose a screening report from lesion masks");
  cmd_report->add_option("--config", rp_cfg, "Flat key=value settings file");
  cmd_report->add_option("--masks", rp.masks, "Directory with <lesion>.png masks");
  cmd_report->add_option("--grade", rp.grade, "DR grade 0..4");
  cmd_report->add_option("--threshold", rp.threshold, "Presence threshold (pixel fraction)")
      ->capture_default_str();
  cmd_report->add_option("--templates", rp.templates_path, "Phrase template file");
  cmd_report->add_option("--out", rp.out, "Write the machine-readable block here");
  cmd_report->add_option("--endpoint", rp.endpoint, "External text service endpoint");
  cmd_report->add_option("--timeout", rp.timeout, "External service timeout seconds")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (cmd_augment->parsed()) {
      if (!aug_cfg.empty()) apply_config_file(cmd_augment, aug_cfg);
      require_setting(cmd_augment, "--data");
      require_setting(cmd_augment, "--out");
      return run_augment(aug);
    }
    if (cmd_train->parsed()) {
      if (!tr_cfg.empty()) apply_config_file(cmd_train, tr_cfg);
      require_setting(cmd_train, "--data");
      require_setting(cmd_train, "--ckpt");
      return run_train(tr);
    }
    if (cmd_eval->parsed()) {
      if (!ev_cfg.empty()) apply_config_file(cmd_eval, ev_cfg);
      require_setting(cmd_eval, "--data");
      require_setting(cmd_eval, "--ckpt");
      require_setting(cmd_eval, "--out");
      return run_eval(ev);
    }
    if (cmd_infer->parsed()) {
      if (!in_cfg.empty()) apply_config_file(cmd_infer, in_cfg);
      require_setting(cmd_infer, "--image");
      require_setting(cmd_infer, "--ckpt");
      return run_infer(in);
    }
    if (cmd_report->parsed()) {
      if (!rp_cfg.empty()) apply_config_file(cmd_report, rp_cfg);
      require_setting(cmd_report, "--masks");
      require_setting(cmd_report, "--grade");
      return run_report(rp);
    }
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "artifact error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
