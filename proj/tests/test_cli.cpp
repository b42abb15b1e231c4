#include <doctest.h>

#include <filesystem>
#include <json.hpp>

#include "process.hpp"

namespace fs = std::filesystem;
using test_util::run;
using test_util::shell_quote;

namespace {

const std::string kCli = WUNET_CLI_PATH;
const std::string kPerturbedCli = WUNET_PERTURBED_CLI_PATH;

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST_CASE("help and usage errors") {
  test_util::TempDir dir;
  CHECK(run(kCli, "--help", dir.path()).exit_code == 0);
  for (const char* sub : {"train", "eval", "predict", "gradcheck", "synth-data"}) {
    const auto r = run(kCli, std::string(sub) + " --help", dir.path());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("--") != std::string::npos);
  }
  CHECK(run(kCli, "", dir.path()).exit_code == 1);
  CHECK(run(kCli, "frobnicate", dir.path()).exit_code == 1);
  CHECK(run(kCli, "eval --manifest x.csv", dir.path()).exit_code == 1);
  CHECK(run(kCli, "synth-data --n 0 --out x", dir.path()).exit_code == 1);
  CHECK(run(kCli, "eval --ckpt a --manifest b --split test", dir.path()).exit_code == 1);
}

TEST_CASE("synth-data writes a loadable, reproducible dataset") {
  test_util::TempDir dir;
  const auto a = dir.path() / "a";
  const auto b = dir.path() / "b";
  REQUIRE(run(kCli, "synth-data --n 4 --seed 3 --out " + shell_quote(a.string()), dir.path()).exit_code == 0);
  REQUIRE(run(kCli, "synth-data --n 4 --seed 3 --out " + shell_quote(b.string()), dir.path()).exit_code == 0);
  CHECK(count_files(a / "images") == 16);
  CHECK(count_files(a / "masks") == 16);
  const auto manifest = test_util::read_text(a / "manifest.csv");
  CHECK(count_lines(manifest) == 17);
  CHECK(manifest.rfind("image_path,mask_path,class_name\n", 0) == 0);
  CHECK(test_util::read_bytes(b / "manifest.csv") == test_util::read_bytes(a / "manifest.csv"));
  for (const auto& e : fs::directory_iterator(a / "images"))
    CHECK(test_util::read_bytes(e.path()) == test_util::read_bytes(b / "images" / e.path().filename()));
  for (const auto& e : fs::directory_iterator(a / "masks"))
    CHECK(test_util::read_bytes(e.path()) == test_util::read_bytes(b / "masks" / e.path().filename()));
}

TEST_CASE("train, eval and predict end to end") {
  test_util::TempDir dir;
  const auto data = dir.path() / "data";
  REQUIRE(run(kCli, "synth-data --n 2 --seed 1 --out " + shell_quote(data.string()), dir.path()).exit_code == 0);
  const auto manifest = (data / "manifest.csv").string();
  const auto cfg = dir.path() / "cfg.txt";
  const std::string cfg_text = "epochs = 1\nbatch_size = 4\n";
  test_util::write_bytes(cfg, {cfg_text.begin(), cfg_text.end()});
  const auto ckpt = (dir.path() / "model.wunt").string();

  const auto missing = run(kCli, "train --config " + shell_quote(cfg.string()) + " --manifest " +
                                     shell_quote((dir.path() / "none.csv").string()) + " --out " + shell_quote(ckpt),
                           dir.path());
  CHECK(missing.exit_code == 1);
  CHECK(missing.err.find("none.csv") != std::string::npos);

  const auto tr = run(kCli, "train --config " + shell_quote(cfg.string()) + " --manifest " + shell_quote(manifest) +
                                " --out " + shell_quote(ckpt),
                      dir.path());
  REQUIRE(tr.exit_code == 0);
  CHECK(fs::exists(ckpt));
  const auto log = test_util::read_text(dir.path() / "model.epochs.csv");
  CHECK(count_lines(log) == 2);
  const auto summary = nlohmann::json::parse(tr.out);
  CHECK(summary.contains("best_total_loss"));

  const auto ev = run(kCli, "eval --ckpt " + shell_quote(ckpt) + " --manifest " + shell_quote(manifest) +
                                " --split train",
                      dir.path());
  REQUIRE(ev.exit_code == 0);
  const auto metrics = nlohmann::json::parse(ev.out);
  CHECK(metrics.size() == 6);
  for (const char* k : {"accuracy", "f1_classification", "dice_mean", "precision_seg", "recall_seg", "f1_seg"}) {
    REQUIRE(metrics.contains(k));
    CHECK(metrics[k].get<double>() >= 0.0);
    CHECK(metrics[k].get<double>() <= 1.0);
  }

  // Two samples per class at the default fraction leave nothing for val.
  const auto empty = run(kCli, "eval --ckpt " + shell_quote(ckpt) + " --manifest " + shell_quote(manifest),
                         dir.path());
  CHECK(empty.exit_code == 1);
  CHECK(empty.err.find("val split is empty") != std::string::npos);

  const auto bad_ckpt = run(kCli, "eval --ckpt " + shell_quote(manifest) + " --manifest " + shell_quote(manifest),
                            dir.path());
  CHECK(bad_ckpt.exit_code == 1);
  CHECK(bad_ckpt.err.find("checkpoint") != std::string::npos);

  const auto mask = (dir.path() / "mask.png").string();
  const auto pr = run(kCli, "predict --ckpt " + shell_quote(ckpt) + " --image " +
                                shell_quote((data / "images" / "0000.png").string()) + " --out " + shell_quote(mask),
                      dir.path());
  REQUIRE(pr.exit_code == 0);
  CHECK(fs::exists(mask));
  const auto p = nlohmann::json::parse(pr.out);
  CHECK(p.contains("label"));
  CHECK(p.contains("probabilities"));
}

TEST_CASE("gradcheck exits 0, and 2 when a backward pass is corrupted") {
  test_util::TempDir dir;
  const auto ok = run(kCli, "gradcheck", dir.path());
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("conv2d") != std::string::npos);
  CHECK(ok.out.find("network:mask.conv") != std::string::npos);

  const auto bad = run(kPerturbedCli, "gradcheck --seed 3", dir.path());
  CHECK(bad.exit_code == 2);
  CHECK(bad.err.find("gradcheck failed") != std::string::npos);
  CHECK(bad.err.find("conv2d") != std::string::npos);
}
