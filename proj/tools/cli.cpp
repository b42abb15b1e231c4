#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "wunet/wunet.h"

namespace wunet_cli {

namespace {

namespace fs = std::filesystem;

struct Failure {
  wunet_status status;
};

void check(wunet_status s) {
  if (s != WUNET_OK) throw Failure{s};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<wunet_config, Deleter<wunet_config, wunet_config_free>>;
using DatasetPtr = std::unique_ptr<wunet_dataset, Deleter<wunet_dataset, wunet_dataset_free>>;
using ModelPtr = std::unique_ptr<wunet_model, Deleter<wunet_model, wunet_model_free>>;
using ReportPtr =
    std::unique_ptr<wunet_gradcheck_report, Deleter<wunet_gradcheck_report, wunet_gradcheck_free>>;

fs::path epoch_log_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  p.replace_extension(".epochs.csv");
  return p;
}

void print_epoch(const wunet_epoch_log* e, void* user) {
  const auto total = *static_cast<const std::size_t*>(user);
  std::fprintf(stderr, "epoch %zu/%zu  cls %.6f  seg %.6f  total %.6f  (%.1fs)\n", e->epoch, total,
               e->cls_loss, e->seg_loss, e->total_loss, e->seconds);
}

int cmd_train(const std::string& config_path, const std::string& manifest, const std::string& out) {
  wunet_config* raw_cfg = nullptr;
  check(wunet_config_load(config_path.c_str(), &raw_cfg));
  ConfigPtr cfg(raw_cfg);
  check(wunet_config_set_checkpoint_path(cfg.get(), out.c_str()));
  wunet_config_values v;
  check(wunet_config_get(cfg.get(), &v));

  wunet_dataset* raw_ds = nullptr;
  check(wunet_dataset_load(manifest.c_str(), &raw_ds));
  DatasetPtr ds(raw_ds);
  check(wunet_dataset_split(ds.get(), v.val_fraction, v.seed));

  const fs::path csv = epoch_log_path(out);
  wunet_train_summary summary;
  check(wunet_train(cfg.get(), ds.get(), csv.c_str(), print_epoch, &v.epochs, &summary));

  nlohmann::ordered_json j;
  j["checkpoint"] = out;
  j["epoch_log"] = csv.string();
  j["epochs"] = summary.epochs_run;
  j["best_epoch"] = summary.best_epoch;
  j["best_total_loss"] = summary.best_loss;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& split,
             double threshold) {
  wunet_model* raw_model = nullptr;
  check(wunet_model_load(ckpt.c_str(), &raw_model));
  ModelPtr model(raw_model);
  wunet_config* raw_cfg = nullptr;
  check(wunet_model_config(model.get(), &raw_cfg));
  ConfigPtr cfg(raw_cfg);
  wunet_config_values v;
  check(wunet_config_get(cfg.get(), &v));

  wunet_dataset* raw_ds = nullptr;
  check(wunet_dataset_load(manifest.c_str(), &raw_ds));
  DatasetPtr ds(raw_ds);
  // Same split as training: the checkpoint records the fraction and seed.
  check(wunet_dataset_split(ds.get(), v.val_fraction, v.seed));

  wunet_metrics m;
  check(wunet_evaluate(model.get(), ds.get(), split == "train" ? WUNET_SPLIT_TRAIN : WUNET_SPLIT_VAL,
                       threshold, &m));
  std::size_t needed = 0;
  check(wunet_metrics_to_json(&m, nullptr, 0, &needed));
  std::string json(needed, '\0');
  check(wunet_metrics_to_json(&m, json.data(), json.size(), &needed));
  json.pop_back();
  std::cout << json << '\n';
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& image, const std::string& out,
                double threshold) {
  wunet_model* raw_model = nullptr;
  check(wunet_model_load(ckpt.c_str(), &raw_model));
  ModelPtr model(raw_model);
  wunet_prediction p;
  check(wunet_predict(model.get(), image.c_str(), threshold, out.c_str(), &p));
  nlohmann::ordered_json j;
  j["class"] = p.label_name;
  j["label"] = p.label;
  nlohmann::ordered_json probs;
  for (int k = 0; k < WUNET_NUM_CLASSES; ++k) probs[wunet_class_name(k)] = p.probabilities[k];
  j["probabilities"] = probs;
  j["mask"] = out;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int flags) {
  wunet_gradcheck_report* raw = nullptr;
  check(wunet_gradcheck_run(seed, flags, &raw));
  ReportPtr report(raw);
  std::printf("%-28s %14s %10s %7s %7s  %s\n", "layer", "max_rel_error", "tolerance", "coords", "skipped",
              "result");
  std::string failing;
  for (std::size_t i = 0; i < wunet_gradcheck_count(report.get()); ++i) {
    wunet_gradcheck_entry e;
    check(wunet_gradcheck_entry_at(report.get(), i, &e));
    std::printf("%-28s %14.3e %10.0e %7zu %7zu  %s\n", e.name, e.max_rel_error, e.tolerance, e.coordinates,
                e.skipped, e.passed ? "ok" : "FAIL");
    if (!e.passed) failing += std::string(failing.empty() ? "" : ", ") + e.name;
  }
  if (!wunet_gradcheck_passed(report.get())) {
    std::fprintf(stderr, "gradcheck failed: %s\n", failing.c_str());
    return 2;
  }
  return 0;
}

int cmd_synth(std::size_t n, std::uint64_t seed, const std::string& out) {
  wunet_dataset* raw = nullptr;
  check(wunet_dataset_synth(n, seed, &raw));
  DatasetPtr ds(raw);
  check(wunet_dataset_save(ds.get(), out.c_str()));
  std::cout << (fs::path(out) / "manifest.csv").string() << '\n';
  return 0;
}

}  // namespace

int run(int argc, char** argv, int gradcheck_flags) {
  CLI::App app{"Dual-head U-Net wound classifier and segmenter"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config, manifest, out, ckpt, image, split = "val";
  double threshold = 0.5;
  std::uint64_t seed = 0;
  std::size_t n = 0;

  auto* train = app.add_subcommand("train", "Train on a manifest and write the best checkpoint");
  train->add_option("--config", config, "key = value training config")->required()->check(CLI::ExistingFile);
  train->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  train->add_option("--out", out, "Checkpoint path; the epoch log goes next to it as *.epochs.csv")
      ->required();

  auto* eval = app.add_subcommand("eval", "Print metrics of a checkpoint on a split as JSON");
  eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest CSV")->required();
  eval->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}))->capture_default_str();
  eval->add_option("--threshold", threshold, "Mask probability cutoff")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Classify one image and write its mask PNG");
  predict->add_option("--ckpt", ckpt, "Checkpoint")->required();
  predict->add_option("--image", image, "Input PNG")->required();
  predict->add_option("--out", out, "Output mask PNG")->required();
  predict->add_option("--threshold", threshold, "Mask probability cutoff")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  grad->add_option("--seed", seed, "Base seed")->capture_default_str();

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic dataset (PNGs and manifest)");
  synth->add_option("--n", n, "Samples per class")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Seed")->capture_default_str();
  synth->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(config, manifest, out);
    if (*eval) return cmd_eval(ckpt, manifest, split, threshold);
    if (*predict) return cmd_predict(ckpt, image, out, threshold);
    if (*grad) return cmd_gradcheck(seed, gradcheck_flags);
    if (*synth) return cmd_synth(n, seed, out);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", wunet_status_name(f.status), wunet_last_error());
    return 1;
  }
  return 1;
}

}  // namespace wunet_cli
