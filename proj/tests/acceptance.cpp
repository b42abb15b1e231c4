// End-to-end acceptance run: prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Criteria 5 and 6 train the full model twice
// with the default configuration, which takes most of the runtime.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "process.hpp"
#include "wunet/gradcheck.hpp"
#include "wunet/layers.hpp"
#include "wunet/trainer.hpp"

using namespace wunet;
namespace fs = std::filesystem;
using test_util::shell_quote;

namespace {

const std::string kCli = WUNET_CLI_PATH;

// Synthetic overfit set: 4 classes x 8 samples.
constexpr std::size_t kSynthPerClass = 8;
constexpr std::uint64_t kSynthSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <typename T>
  Detail& operator<<(const T& v) {
    s_ << v;
    return *this;
  }
  std::string str() const { return s_.str(); }

 private:
  std::ostringstream s_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.rank(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

Outcome gradient_correctness() {
  GradcheckOptions opts;
  opts.seed = 0;
  opts.seeds = 5;
  const auto report = run_gradcheck(opts);
  bool ok = report.passed();
  Detail d;
  const std::vector<std::pair<std::string, double>> required{
      {"conv2d", 1e-4},  {"convtranspose2d", 1e-4}, {"maxpool2d", 1e-4},     {"relu", 1e-4},
      {"linear", 1e-4},  {"concat", 1e-4},          {"cross_entropy", 1e-6}, {"bce_with_logits", 1e-6}};
  double worst_layer = 0.0;
  for (const auto& [name, tol] : required) {
    bool found = false;
    for (const auto& e : report.entries)
      if (e.name == name) {
        found = true;
        ok &= e.tolerance <= tol && e.max_rel_error < tol && e.coordinates > 0;
        worst_layer = std::max(worst_layer, e.max_rel_error);
      }
    if (!found) {
      ok = false;
      d << "missing " << name << "; ";
    }
  }
  double worst_net = 0.0;
  for (const auto& e : report.entries)
    if (e.name.rfind("network:", 0) == 0) worst_net = std::max(worst_net, e.max_rel_error);

  // Negative control: a corrupted conv backward must be caught.
  testing::set_conv_backward_perturbation(1e-3);
  opts.include_network = false;
  const auto bad = run_gradcheck(opts);
  testing::set_conv_backward_perturbation(0.0);
  ok &= !bad.passed();

  d << report.entries.size() << " entries, worst primitive rel err " << fmt(worst_layer) << ", worst network "
    << fmt(worst_net) << "; perturbed conv backward " << (bad.passed() ? "NOT caught" : "caught");
  if (!report.passed()) {
    d << "; failing:";
    for (const auto& f : report.failures()) d << " " << f;
  }
  return {ok, d.str()};
}

Outcome shape_fidelity() {
  const auto params = build_model<float>(0);
  Rng rng(1);
  const auto fwd = forward(params, oracle::random<float>(Shape{2, 3, 128, 128}, rng, 0.0, 1.0));
  const auto& c = fwd.cache;
  bool ok = true;
  Detail d;
  auto expect = [&](const char* what, const Shape& got, const Shape& want) {
    ok &= got == want;
    d << what << " " << shape_str(got) << (got == want ? "" : " (expected " + shape_str(want) + ")") << "; ";
  };
  expect("bottleneck", c.bottleneck().shape(), Shape{2, 256, 8, 8});
  expect("head", c.head.back().shape(), Shape{2, 32, 8, 8});
  expect("flatten", c.flat.shape(), Shape{2, 2048});
  ok &= c.fc_hidden.size() == 2;
  if (c.fc_hidden.size() == 2) {
    expect("fc1", c.fc_hidden[0].shape(), Shape{2, 120});
    expect("fc2", c.fc_hidden[1].shape(), Shape{2, 84});
  }
  expect("class logits", fwd.output.class_logits.shape(), Shape{2, 4});
  expect("mask logits", fwd.output.mask_logits.shape(), Shape{2, 1, 128, 128});
  return {ok, d.str()};
}

Outcome loss_fidelity() {
  struct Case {
    const char* name;
    double got, want;
  };
  // References come from the explicit-softmax and explicit-sigmoid oracles.
  const std::vector<Case> cases{
      {"CE uniform", cross_entropy_single(std::vector<double>{0, 0, 0, 0}, 2),
       oracle::cross_entropy_literal({0, 0, 0, 0}, 2)},
      {"CE [2,0,0,0]", cross_entropy_single(std::vector<double>{2, 0, 0, 0}, 0),
       oracle::cross_entropy_literal({2, 0, 0, 0}, 0)},
      {"BCE x=0,y=1", bce_with_logits_single(0.0, 1.0), oracle::bce_literal(0.0, 1.0)},
      {"BCE x=2,y=1", bce_with_logits_single(2.0, 1.0), oracle::bce_literal(2.0, 1.0)},
  };
  bool ok = true;
  Detail d;
  for (const auto& c : cases) {
    ok &= std::abs(c.got - c.want) < 1e-6;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.7f (oracle %.7f); ", c.name, c.got, c.want);
    d << buf;
  }
  ok &= std::abs(cases[0].got - 1.386294) < 1e-6 && std::abs(cases[2].got - 0.693147) < 1e-6 &&
        std::abs(cases[3].got - 0.126928) < 1e-6;
  // Batched float path agrees with the scalar values.
  Tensor<float> logits(Shape{2, 4}, std::vector<float>{2, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<int> labels{0, 3};
  const auto ce = cross_entropy(logits, std::span<const int>(labels));
  ok &= std::abs(ce.loss - (cases[1].want + cases[0].want) / 2) < 1e-6;
  Tensor<float> x(Shape{2}, std::vector<float>{0, 2}), y(Shape{2}, std::vector<float>{1, 1});
  const auto bce = bce_with_logits(x, y);
  ok &= std::abs(bce.loss - (cases[2].want + cases[3].want) / 2) < 1e-6;
  const double total = total_loss(ce.loss, bce.loss);
  ok &= total == ce.loss + bce.loss;
  ok &= make_loss_value(ce.loss, bce.loss).total == ce.loss + bce.loss;
  d << "total " << fmt(total) << " = cls + seg exactly";
  return {ok, d.str()};
}

Outcome metric_oracles() {
  Rng rng(31337);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(1024);
    const double density = rng.uniform();
    std::vector<int> pb(n), tb(n), pl(n), tl(n);
    Tensor<float> pt(Shape{n}), tt(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
      pb[i] = rng.uniform() < density;
      tb[i] = rng.uniform() < density;
      pt[i] = static_cast<float>(pb[i]);
      tt[i] = static_cast<float>(tb[i]);
      pl[i] = static_cast<int>(rng.below(4));
      tl[i] = rng.uniform() < 0.5 ? pl[i] : static_cast<int>(rng.below(4));
    }
    const auto o = oracle::count(pb, tb);
    const auto c = confusion(pt, tt);
    const auto prf = precision_recall_f1(c);
    const double op = o.tp + o.fp ? double(o.tp) / double(o.tp + o.fp) : 0.0;
    const double orr = o.tp + o.fn ? double(o.tp) / double(o.tp + o.fn) : 0.0;
    const std::size_t den = 2 * o.tp + o.fp + o.fn;
    const double of1 = den ? double(2 * o.tp) / double(den) : 0.0;
    const double odice = den ? double(2 * o.tp) / double(den) : 1.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pl[i] == tl[i];
    double f1_sum = 0;
    for (int k = 0; k < 4; ++k) {
      std::vector<int> pk(n), tk(n);
      for (std::size_t i = 0; i < n; ++i) {
        pk[i] = pl[i] == k;
        tk[i] = tl[i] == k;
      }
      const auto ok = oracle::count(pk, tk);
      const std::size_t dk = 2 * ok.tp + ok.fp + ok.fn;
      f1_sum += dk ? double(2 * ok.tp) / double(dk) : 0.0;
    }
    const bool same = c.tp == o.tp && c.fp == o.fp && c.fn == o.fn && c.tn == o.tn && prf.precision == op &&
                      prf.recall == orr && prf.f1 == of1 && dice(pt, tt) == odice &&
                      accuracy(pl, tl) == double(correct) / double(n) && macro_f1(pl, tl) == f1_sum / 4;
    mismatches += !same;
  }
  return {mismatches == 0, "1000 random pairs, " + std::to_string(mismatches) + " mismatches"};
}

Outcome checkpoint_integrity(const fs::path& work) {
  Checkpoint ck;
  ck.epoch = 3;
  ck.best_loss = 0.5;
  ck.params = build_model<float>(9);
  ck.adam = adam_init(ck.params.tensors, AdamConfig{});
  ck.adam.step = 77;
  const auto path = work / "ck.wunt";
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  bool ok = back.epoch == ck.epoch && back.best_loss == ck.best_loss && back.adam.step == 77 &&
            back.config == ck.config;
  for (std::size_t i = 0; i < ck.params.count(); ++i)
    ok &= back.params.tensors[i] == ck.params.tensors[i] && back.adam.m[i] == ck.adam.m[i] &&
          back.adam.v[i] == ck.adam.v[i];
  save_checkpoint(back, work / "ck2.wunt");
  const auto bytes = test_util::read_bytes(path);
  ok &= test_util::read_bytes(work / "ck2.wunt") == bytes;

  auto structured = [&](const std::vector<char>& content) {
    test_util::write_bytes(work / "bad.wunt", content);
    try {
      (void)load_checkpoint(work / "bad.wunt");
    } catch (const Error& e) {
      return e.kind() == ErrorKind::kCheckpoint;
    } catch (...) {
      return false;
    }
    return false;
  };
  std::size_t rejected = 0, tried = 0;
  for (std::size_t len : {std::size_t{0}, std::size_t{2}, std::size_t{4}, std::size_t{8}, std::size_t{100},
                          bytes.size() / 3, bytes.size() / 2, bytes.size() - 4, bytes.size() - 1}) {
    ++tried;
    rejected += structured({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len)});
  }
  auto magic = bytes;
  magic[1] = 'Z';
  ++tried;
  rejected += structured(magic);
  ok &= rejected == tried;
  return {ok, std::to_string(bytes.size()) + "-byte checkpoint roundtrips bitwise; " + std::to_string(rejected) +
                  "/" + std::to_string(tried) + " damaged files rejected with checkpoint errors"};
}

struct TrainRun {
  bool ok = false;
  std::string error;
  fs::path dir;
  double seconds = 0.0;
};

TrainRun train_default(const fs::path& dir, const std::string& manifest) {
  TrainRun r;
  r.dir = dir;
  fs::create_directories(dir);
  // Empty config: every key keeps its default.
  test_util::write_bytes(dir / "default.cfg", {'#', '\n'});
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = test_util::run(kCli, "train --config default.cfg --manifest " + shell_quote(manifest) +
                                            " --out model.wunt",
                                  dir, dir);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.ok = res.exit_code == 0;
  if (!r.ok) r.error = "train exited " + std::to_string(res.exit_code) + ": " + res.err.substr(0, 300);
  return r;
}

Outcome overfit(const TrainRun& run, const std::string& manifest) {
  if (!run.ok) return {false, run.error};
  const auto ckpt = run.dir / "model.wunt";
  const auto ev = test_util::run(kCli, "eval --ckpt " + shell_quote(ckpt.string()) + " --manifest " +
                                           shell_quote(manifest) + " --split train",
                                 run.dir);
  if (ev.exit_code != 0) return {false, "eval exited " + std::to_string(ev.exit_code) + ": " + ev.err};
  const auto m = nlohmann::json::parse(ev.out);
  const double acc = m.at("accuracy").get<double>();
  const double dice_mean = m.at("dice_mean").get<double>();

  const auto ck = load_checkpoint(ckpt);
  auto ds = load_manifest(manifest);
  split_dataset(ds, ck.config.val_fraction, ck.config.seed);
  const auto loss = dataset_loss(ck.params, ds, ds.train);

  const bool ok = ck.config.epochs <= 500 && loss.total < 0.05 && acc == 1.0 && dice_mean > 0.95;
  Detail d;
  d << ck.config.epochs << " epochs in " << fmt(run.seconds) << " s (best epoch " << ck.epoch << "), train split "
    << ds.train.size() << " samples: mean total loss " << fmt(loss.total) << ", accuracy " << fmt(acc)
    << ", dice_mean " << fmt(dice_mean);
  return {ok, d.str()};
}

// Drops the wall-clock seconds column, which cannot repeat across runs.
std::string loss_columns(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome determinism(const TrainRun& a, const TrainRun& b) {
  if (!a.ok) return {false, "first run failed: " + a.error};
  if (!b.ok) return {false, "second run failed: " + b.error};
  const auto csv_a = test_util::read_text(a.dir / "model.epochs.csv");
  const auto csv_b = test_util::read_text(b.dir / "model.epochs.csv");
  const auto ck_a = test_util::read_bytes(a.dir / "model.wunt");
  const auto ck_b = test_util::read_bytes(b.dir / "model.wunt");
  const bool csv_same = !csv_a.empty() && loss_columns(csv_a) == loss_columns(csv_b);
  const bool ck_same = !ck_a.empty() && ck_a == ck_b;
  Detail d;
  d << "epoch CSV loss columns " << (csv_same ? "identical" : "DIFFER") << " (" << csv_a.size()
    << " bytes), checkpoints " << (ck_same ? "identical" : "DIFFER") << " (" << ck_a.size() << " bytes)";
  return {csv_same && ck_same, d.str()};
}

Outcome post_processing(const TrainRun& run, const std::string& data_dir) {
  Tensor<float> p(Shape{6}, std::vector<float>{0.5f, 0.499f, 0.0f, 1.0f, 0.5000001f, 0.4999999f});
  const auto m = threshold_mask(p, 0.5);
  Tensor<double> pd(Shape{2}, std::vector<double>{0.5, 0.499});
  const auto md = threshold_mask(pd, 0.5);
  bool ok = m[0] == 1.0f && m[1] == 0.0f && m[2] == 0.0f && m[3] == 1.0f && m[4] == 1.0f && m[5] == 0.0f &&
            md[0] == 1.0 && md[1] == 0.0;
  Detail d;
  d << "0.5->" << m[0] << ", 0.499->" << m[1];
  if (!run.ok) return {false, d.str() + "; no trained checkpoint: " + run.error};

  std::size_t pngs = 0, bivalued = 0;
  for (const char* name : {"0000.png", "0009.png", "0018.png", "0031.png"}) {
    const auto out = run.dir / (std::string("pred_") + name);
    const auto res = test_util::run(kCli, "predict --ckpt " + shell_quote((run.dir / "model.wunt").string()) +
                                              " --image " + shell_quote((fs::path(data_dir) / "images" / name).string()) +
                                              " --out " + shell_quote(out.string()),
                                    run.dir);
    if (res.exit_code != 0) continue;
    ++pngs;
    const auto img = read_png(out, 1);
    bool two = img.width == 128 && img.height == 128;
    for (auto v : img.pixels) two &= v == 0 || v == 255;
    bivalued += two;
  }
  ok &= pngs == 4 && bivalued == 4;
  d << "; " << bivalued << "/4 predicted mask PNGs strictly 0/255";
  return {ok, d.str()};
}

}  // namespace

int main() {
  const auto work = fs::temp_directory_path() / ("wunet_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* title, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d (%s): %s - %s\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "architecture shapes", shape_fidelity);
  report(3, "loss formulas", loss_fidelity);
  report(4, "metric oracles", metric_oracles);

  const auto data_dir = (work / "data").string();
  const auto synth = test_util::run(kCli,
                                    "synth-data --n " + std::to_string(kSynthPerClass) + " --seed " +
                                        std::to_string(kSynthSeed) + " --out " + shell_quote(data_dir),
                                    work);
  const auto manifest = (fs::path(data_dir) / "manifest.csv").string();
  TrainRun a, b;
  if (synth.exit_code == 0) {
    a = train_default(work / "run_a", manifest);
    b = train_default(work / "run_b", manifest);
  } else {
    a.error = b.error = "synth-data failed: " + synth.err;
  }

  report(5, "overfit run", [&] { return overfit(a, manifest); });
  report(6, "determinism", [&] { return determinism(a, b); });
  report(7, "checkpoint integrity", [&] { return checkpoint_integrity(work); });
  report(8, "post-processing", [&] { return post_processing(a, data_dir); });

  std::printf("%d of 8 criteria passed\n", 8 - failures);
  std::error_code ec;
  fs::remove_all(work, ec);
  return failures == 0 ? 0 : 1;
}
