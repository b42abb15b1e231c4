#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "wunet/loss.hpp"
#include "wunet/model.hpp"

using namespace wunet;

namespace {

const ModelParams<float>& standard_model() {
  static const ModelParams<float> p = build_model<float>(1);
  return p;
}

const ForwardResult<float>& standard_forward() {
  static const ForwardResult<float> r = [] {
    Rng rng(2);
    return forward(standard_model(), oracle::random<float>(Shape{2, 3, 128, 128}, rng, 0.0, 1.0));
  }();
  return r;
}

}  // namespace

TEST_CASE("manifest: filter progression, head widths and parameter count") {
  const auto m = param_manifest(ArchConfig::standard());
  CHECK(m.size() == 58);
  std::size_t scalars = 0;
  for (const auto& s : m) scalars += s.shape.numel();
  CHECK(scalars == 2584785);

  std::vector<std::size_t> down;
  for (const auto& s : m)
    if (s.name.starts_with("down") && s.name.ends_with("conv2.weight")) down.push_back(s.shape[0]);
  CHECK(down == std::vector<std::size_t>{16, 32, 64, 128, 256});

  const auto p = standard_model();
  CHECK(p.get("head.conv1.weight").shape() == Shape{128, 256, 3, 3});
  CHECK(p.get("head.conv3.weight").shape() == Shape{32, 64, 3, 3});
  CHECK(p.get("head.fc1.weight").shape() == Shape{2048, 120});
  CHECK(p.get("head.fc2.weight").shape() == Shape{120, 84});
  CHECK(p.get("head.fc3.weight").shape() == Shape{84, 4});
  CHECK(p.get("up1.tconv.weight").shape() == Shape{256, 128, 2, 2});
  CHECK(p.get("up1.conv1.weight").shape() == Shape{128, 256, 3, 3});
  CHECK(p.get("up4.conv2.weight").shape() == Shape{16, 16, 3, 3});
  CHECK(p.get("mask.conv.weight").shape() == Shape{1, 16, 1, 1});
  CHECK_THROWS_AS(p.get("nope"), Error);

  std::set<std::string> names(p.names.begin(), p.names.end());
  CHECK(names.size() == p.count());
}

TEST_CASE("build_model is deterministic per seed") {
  const auto a = build_model<float>(7), b = build_model<float>(7), c = build_model<float>(8);
  CHECK(a.tensors == b.tensors);
  CHECK(a.tensors != c.tensors);
  for (std::size_t i = 0; i < a.count(); ++i) {
    const double bound = std::sqrt(6.0 / static_cast<double>(param_manifest(ArchConfig::standard())[i].fan_in));
    for (float v : a.tensors[i].values()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("forward shape chain on the standard network") {
  const auto& r = standard_forward();
  CHECK(r.output.class_logits.shape() == Shape{2, 4});
  CHECK(r.output.mask_logits.shape() == Shape{2, 1, 128, 128});
  const auto& c = r.cache;
  CHECK(c.bottleneck().shape() == Shape{2, 256, 8, 8});
  CHECK(c.head.back().shape() == Shape{2, 32, 8, 8});
  CHECK(c.flat.shape() == Shape{2, 2048});
  CHECK(c.fc_hidden.at(0).shape() == Shape{2, 120});
  CHECK(c.fc_hidden.at(1).shape() == Shape{2, 84});

  const std::size_t sizes[] = {128, 64, 32, 16, 8};
  const std::size_t widths[] = {16, 32, 64, 128, 256};
  std::size_t pools = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(c.down[i].out.shape() == Shape{2, widths[i], sizes[i], sizes[i]});
    if (!c.down[i].pooled.empty()) {
      ++pools;
      CHECK(c.down[i].pooled.shape() == Shape{2, widths[i], sizes[i] / 2, sizes[i] / 2});
    }
  }
  CHECK(pools == 4);

  const std::size_t up_sizes[] = {16, 32, 64, 128};
  const std::size_t up_widths[] = {128, 64, 32, 16};
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(c.up[k].out.shape() == Shape{2, up_widths[k], up_sizes[k], up_sizes[k]});
    // The skip it merged has the transposed-conv output's resolution.
    CHECK(c.up[k].merged.shape() == Shape{2, 2 * up_widths[k], up_sizes[k], up_sizes[k]});
    CHECK(c.down[3 - k].out.shape()[2] == up_sizes[k]);
  }
  CHECK(r.output.class_logits.all_finite());
  CHECK(r.output.mask_logits.all_finite());
}

TEST_CASE("forward rejects wrong input shapes and is pure") {
  const auto& p = standard_model();
  CHECK_THROWS_AS(forward(p, Tensor<float>(Shape{1, 3, 64, 64})), Error);
  CHECK_THROWS_AS(forward(p, Tensor<float>(Shape{1, 1, 128, 128})), Error);
  const auto before = p.tensors;
  Rng rng(3);
  const auto x = oracle::random<float>(Shape{1, 3, 128, 128}, rng, 0.0, 1.0);
  const auto a = forward(p, x), b = forward(p, x);
  CHECK(a.output.class_logits == b.output.class_logits);
  CHECK(a.output.mask_logits == b.output.mask_logits);
  CHECK(p.tensors == before);
}

TEST_CASE("backward: zero output gradients give zero parameter gradients") {
  const auto& r = standard_forward();
  const auto g = backward(standard_model(), r.cache, Tensor<float>(Shape{2, 4}), Tensor<float>(Shape{2, 1, 128, 128}));
  for (const auto& t : g.tensors)
    for (float v : t.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(backward(standard_model(), r.cache, Tensor<float>(Shape{2, 3}), Tensor<float>(Shape{2, 1, 128, 128})),
                  Error);
}

TEST_CASE("backward: classification-only gradient leaves the up path at zero") {
  const auto& r = standard_forward();
  Rng rng(4);
  const auto g = backward(standard_model(), r.cache, oracle::random<float>(Shape{2, 4}, rng),
                          Tensor<float>(Shape{2, 1, 128, 128}));
  std::size_t nonzero_down = 0;
  for (std::size_t i = 0; i < g.count(); ++i) {
    bool any = false;
    for (float v : g.tensors[i].values()) any |= v != 0.0f;
    if (is_up_path_param(g.names[i]))
      CHECK_MESSAGE(!any, g.names[i]);
    else
      nonzero_down += any;
  }
  CHECK(nonzero_down > 0);
}

TEST_CASE("backward: skip junctions sum both consumers (compact network, finite differences)") {
  // The gradient of the shallowest down block sees the continuing down path
  // and the skip into the last up block. Removing either consumer's output
  // gradient must change it, and finite differences must match the sum.
  const ArchConfig arch = ArchConfig::compact();
  auto params = build_model<double>(5, arch);
  Rng rng(6);
  const auto x = oracle::random<double>(Shape{1, 3, 32, 32}, rng, 0.0, 1.0);
  const auto gc = oracle::random<double>(Shape{1, 4}, rng);
  const auto gm = oracle::random<double>(Shape{1, 1, 32, 32}, rng);
  const auto fr = forward(params, x);
  const auto g_both = backward(params, fr.cache, gc, gm);
  const auto g_cls = backward(params, fr.cache, gc, Tensor<double>(gm.shape()));
  const auto g_seg = backward(params, fr.cache, Tensor<double>(gc.shape()), gm);
  const auto& name = "down1.conv2.weight";
  const auto& both = g_both.get(name);
  for (std::size_t i = 0; i < both.size(); ++i)
    CHECK(both[i] == doctest::Approx(g_cls.get(name)[i] + g_seg.get(name)[i]).epsilon(1e-10));

  const auto objective = [&] {
    const auto o = forward(params, x).output;
    double s = 0;
    for (std::size_t i = 0; i < gc.size(); ++i) s += gc[i] * o.class_logits[i];
    for (std::size_t i = 0; i < gm.size(); ++i) s += gm[i] * o.mask_logits[i];
    return s;
  };
  auto& w = params.get(name);
  const double h = 1e-6;
  for (std::size_t i : {0ul, 17ul, w.size() - 1}) {
    const double orig = w[i];
    w[i] = orig + h;
    const double fp = objective();
    w[i] = orig - h;
    const double fm = objective();
    w[i] = orig;
    const double num = (fp - fm) / (2 * h);
    CHECK(std::abs(num - both[i]) <= 1e-5 * std::max(1.0, std::abs(num)));
  }
}

TEST_CASE("compact configuration validates and builds") {
  const auto a = ArchConfig::compact();
  CHECK(a.bottleneck_size() == 16);
  CHECK(a.flatten_size() == 2 * 16 * 16);
  ArchConfig bad = a;
  bad.input_size = 30;
  bad.down_channels = {4, 6, 8};
  CHECK_THROWS_AS(bad.validate(), Error);
}
