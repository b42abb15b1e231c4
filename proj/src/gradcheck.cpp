#include "wunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "wunet/layers.hpp"
#include "wunet/loss.hpp"
#include "wunet/model.hpp"

namespace wunet {

namespace {

using Td = Tensor<double>;

constexpr double kStep = 1e-5;

struct Tracker {
  double max_rel = 0.0;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;

  void add(double analytic, double numeric) {
    const double den = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    max_rel = std::max(max_rel, std::abs(analytic - numeric) / den);
    ++coordinates;
  }
};

Td random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Td t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

double dot(const Td& a, const Td& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Compares analytic[i] with the central difference of f in t[i], for every i.
// f reads t by reference, so t is perturbed in place and restored.
void check_all(Td& t, const Td& analytic, const std::function<double()>& f, Tracker& tr) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + kStep;
    const double fp = f();
    t[i] = orig - kStep;
    const double fm = f();
    t[i] = orig;
    tr.add(analytic[i], (fp - fm) / (2.0 * kStep));
  }
}

void check_conv(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 3, 6), w = pick(rng, 3, 6), k = 2 * pick(rng, 0, 2) + 1;
  Td x = random_tensor(Shape{b, cin, h, w}, rng);
  Td wt = random_tensor(Shape{cout, cin, k, k}, rng);
  Td bias = random_tensor(Shape{cout}, rng);
  const Td r = random_tensor(Shape{b, cout, h, w}, rng);
  const auto f = [&] { return dot(r, conv2d_forward(x, wt, bias)); };
  const auto g = conv2d_backward(x, wt, r);
  check_all(x, g.input, f, tr);
  check_all(wt, g.weights, f, tr);
  check_all(bias, g.bias, f, tr);
}

void check_tconv(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
  Td x = random_tensor(Shape{b, cin, h, w}, rng);
  Td wt = random_tensor(Shape{cin, cout, 2, 2}, rng);
  Td bias = random_tensor(Shape{cout}, rng);
  const Td r = random_tensor(Shape{b, cout, 2 * h, 2 * w}, rng);
  const auto f = [&] { return dot(r, convtranspose2d_forward(x, wt, bias)); };
  const auto g = convtranspose2d_backward(x, wt, r);
  check_all(x, g.input, f, tr);
  check_all(wt, g.weights, f, tr);
  check_all(bias, g.bias, f, tr);
}

void check_maxpool(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 2), c = pick(rng, 1, 3);
  const std::size_t h = 2 * pick(rng, 1, 3), w = 2 * pick(rng, 1, 3);
  // Distinct values 0.01 apart so no stencil can change a window's argmax.
  Td x(Shape{b, c, h, w});
  std::vector<std::size_t> rank(x.size());
  for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
  rng.shuffle(std::span<std::size_t>(rank));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(rank[i]) - 0.5;
  const Td r = random_tensor(Shape{b, c, h / 2, w / 2}, rng);
  const auto f = [&] { return dot(r, maxpool2d_forward(x).output); };
  const auto g = maxpool2d_backward(maxpool2d_forward(x).cache, r);
  check_all(x, g, f, tr);
}

void check_relu(Rng& rng, Tracker& tr) {
  const std::size_t n = pick(rng, 4, 40);
  Td x(Shape{n});
  for (auto& v : x.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 1.0);
  const Td r = random_tensor(Shape{n}, rng);
  const auto f = [&] { return dot(r, relu_forward(x)); };
  const auto g = relu_backward(relu_forward(x), r);
  check_all(x, g, f, tr);
}

void check_linear(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 3), n_in = pick(rng, 1, 6), n_out = pick(rng, 1, 5);
  Td x = random_tensor(Shape{b, n_in}, rng);
  Td wt = random_tensor(Shape{n_in, n_out}, rng);
  Td bias = random_tensor(Shape{n_out}, rng);
  const Td r = random_tensor(Shape{b, n_out}, rng);
  const auto f = [&] { return dot(r, linear_forward(x, wt, bias)); };
  const auto g = linear_backward(x, wt, r);
  check_all(x, g.input, f, tr);
  check_all(wt, g.weights, f, tr);
  check_all(bias, g.bias, f, tr);
}

void check_concat(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 2), ca = pick(rng, 1, 3), cb = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
  Td a = random_tensor(Shape{b, ca, h, w}, rng);
  Td c = random_tensor(Shape{b, cb, h, w}, rng);
  const Td r = random_tensor(Shape{b, ca + cb, h, w}, rng);
  const auto f = [&] { return dot(r, concat_channels(a, c)); };
  const auto g = split_channels(r, ca);
  check_all(a, g.a, f, tr);
  check_all(c, g.b, f, tr);
}

void check_cross_entropy(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 4), classes = pick(rng, 2, 5);
  Td logits = random_tensor(Shape{b, classes}, rng, -3.0, 3.0);
  std::vector<int> labels(b);
  for (auto& y : labels) y = static_cast<int>(rng.below(classes));
  const auto f = [&] { return cross_entropy(logits, std::span<const int>(labels)).loss; };
  check_all(logits, cross_entropy(logits, std::span<const int>(labels)).grad, f, tr);
}

void check_bce(Rng& rng, Tracker& tr) {
  const std::size_t b = pick(rng, 1, 2), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
  Td logits = random_tensor(Shape{b, 1, h, w}, rng, -4.0, 4.0);
  Td target(logits.shape());
  for (auto& v : target.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  const auto f = [&] { return bce_with_logits(logits, target).loss; };
  check_all(logits, bce_with_logits(logits, target).grad, f, tr);
}

// Every ReLU on/off bit and pooling argmax of a forward pass.
std::vector<std::uint32_t> switch_state(const ForwardCache<double>& c) {
  std::vector<std::uint32_t> s;
  const auto relu_bits = [&s](const Td& t) {
    for (double v : t.values()) s.push_back(v > 0.0);
  };
  for (const auto& d : c.down) {
    relu_bits(d.mid);
    relu_bits(d.out);
    s.insert(s.end(), d.pool.argmax.begin(), d.pool.argmax.end());
  }
  for (const auto& t : c.head) relu_bits(t);
  for (const auto& t : c.fc_hidden) relu_bits(t);
  for (const auto& u : c.up) {
    relu_bits(u.mid);
    relu_bits(u.out);
  }
  return s;
}

std::string layer_of(const std::string& param_name) {
  return param_name.substr(0, param_name.rfind('.'));
}

// Whole compact network under the training objective (cross-entropy plus
// BCE). A sample of coordinates per tensor is checked.
void check_network(Rng& rng, std::map<std::string, Tracker>& per_layer) {
  const ArchConfig arch = ArchConfig::compact();
  ModelParams<double> params = build_model<double>(rng.next_u64(), arch);
  const std::size_t b = 2, s = arch.input_size;
  const Td input = random_tensor(Shape{b, arch.in_channels, s, s}, rng, 0.0, 1.0);
  std::vector<int> labels(b);
  for (auto& y : labels) y = static_cast<int>(rng.below(arch.num_classes));
  Td target(Shape{b, 1, s, s});
  for (auto& v : target.values()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

  const auto objective = [&](const ForwardResult<double>& fr) {
    return cross_entropy(fr.output.class_logits, std::span<const int>(labels)).loss +
           bce_with_logits(fr.output.mask_logits, target).loss;
  };
  const auto base = forward(params, input);
  const auto base_state = switch_state(base.cache);
  const auto ce = cross_entropy(base.output.class_logits, std::span<const int>(labels));
  const auto bce = bce_with_logits(base.output.mask_logits, target);
  const auto grads = backward(params, base.cache, ce.grad, bce.grad);

  constexpr std::size_t kPerTensor = 6;
  for (std::size_t p = 0; p < params.count(); ++p) {
    Td& t = params.tensors[p];
    Tracker& tr = per_layer[layer_of(params.names[p])];
    const std::size_t n = std::min(kPerTensor, t.size());
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = t.size() <= kPerTensor ? j : static_cast<std::size_t>(rng.below(t.size()));
      const double orig = t[i];
      t[i] = orig + kStep;
      const auto plus = forward(params, input);
      t[i] = orig - kStep;
      const auto minus = forward(params, input);
      t[i] = orig;
      if (switch_state(plus.cache) != base_state || switch_state(minus.cache) != base_state) {
        ++tr.skipped;
        continue;
      }
      tr.add(grads.tensors[p][i], (objective(plus) - objective(minus)) / (2.0 * kStep));
    }
  }
}

}  // namespace

bool GradcheckReport::passed() const noexcept {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed(); });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.passed()) out.push_back(e.name);
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  using Check = void (*)(Rng&, Tracker&);
  struct Primitive {
    const char* name;
    Check check;
    double tolerance;
  };
  static constexpr Primitive kPrimitives[] = {
      {"conv2d", check_conv, kLayerTolerance},
      {"convtranspose2d", check_tconv, kLayerTolerance},
      {"maxpool2d", check_maxpool, kLayerTolerance},
      {"relu", check_relu, kLayerTolerance},
      {"linear", check_linear, kLayerTolerance},
      {"concat", check_concat, kLayerTolerance},
      {"cross_entropy", check_cross_entropy, kLossTolerance},
      {"bce_with_logits", check_bce, kLossTolerance},
  };

  GradcheckReport report;
  std::vector<Tracker> prim(std::size(kPrimitives));
  std::map<std::string, Tracker> net;
  for (std::size_t s = 0; s < options.seeds; ++s) {
    std::uint64_t state = options.seed + s;
    Rng rng(splitmix64(state));
    for (std::size_t i = 0; i < std::size(kPrimitives); ++i) kPrimitives[i].check(rng, prim[i]);
    if (options.include_network) check_network(rng, net);
  }
  for (std::size_t i = 0; i < std::size(kPrimitives); ++i)
    report.entries.push_back({kPrimitives[i].name, prim[i].max_rel, kPrimitives[i].tolerance,
                              prim[i].coordinates, prim[i].skipped});
  if (options.include_network) {
    // Manifest order rather than the map's alphabetical order.
    std::vector<std::string> layers;
    for (const auto& spec : param_manifest(ArchConfig::compact())) {
      const std::string l = layer_of(spec.name);
      if (layers.empty() || layers.back() != l) layers.push_back(l);
    }
    for (const auto& l : layers) {
      const Tracker& t = net[l];
      report.entries.push_back({"network:" + l, t.max_rel, kNetworkTolerance, t.coordinates, t.skipped});
    }
  }
  return report;
}

}  // namespace wunet
