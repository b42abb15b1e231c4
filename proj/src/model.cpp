#include "wunet/model.hpp"

#include <algorithm>
#include <utility>

namespace wunet {

namespace {

// Positions of each layer's weight tensor in manifest order; the bias follows
// its weight.
struct LayerIndex {
  std::size_t depth, head, fc;

  explicit LayerIndex(const ArchConfig& a)
      : depth(a.depth()), head(a.head_channels.size()), fc(a.fc_units.size() + 1) {}

  std::size_t down(std::size_t level, std::size_t conv) const { return 4 * level + 2 * conv; }
  std::size_t head_conv(std::size_t j) const { return 4 * depth + 2 * j; }
  std::size_t fc_layer(std::size_t j) const { return 4 * depth + 2 * head + 2 * j; }
  // part 0 = transposed conv, 1 and 2 = the two convs after the merge.
  std::size_t up(std::size_t k, std::size_t part) const {
    return 4 * depth + 2 * head + 2 * fc + 6 * k + 2 * part;
  }
  std::size_t mask() const { return 4 * depth + 2 * head + 2 * fc + 6 * (depth - 1); }
  std::size_t total() const { return mask() + 2; }
};

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape())
    throw_shape("gradient accumulation: " + dst.shape().str() + " vs " + src.shape().str());
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void add_conv(std::vector<ParamSpec>& out, const std::string& prefix, std::size_t cin,
              std::size_t cout, std::size_t k) {
  out.push_back({prefix + ".weight", Shape{cout, cin, k, k}, cin * k * k});
  out.push_back({prefix + ".bias", Shape{cout}, cin * k * k});
}

}  // namespace

ArchConfig ArchConfig::compact() {
  ArchConfig a;
  a.input_size = 32;
  a.down_channels = {4, 6};
  a.head_channels = {6, 4, 2};
  a.fc_units = {6, 5};
  return a;
}

std::size_t ArchConfig::bottleneck_size() const noexcept {
  std::size_t s = input_size;
  for (std::size_t i = 1; i < depth(); ++i) s /= 2;
  return s;
}

std::size_t ArchConfig::flatten_size() const noexcept {
  const std::size_t b = bottleneck_size();
  return head_channels.empty() ? 0 : head_channels.back() * b * b;
}

void ArchConfig::validate() const {
  if (down_channels.empty() || head_channels.empty() || num_classes < 2 || in_channels == 0)
    throw_invalid("architecture needs down blocks, head convs, and >= 2 classes");
  for (std::size_t i = 1; i < depth(); ++i)
    if ((input_size >> (i - 1)) % 2 != 0)
      throw_invalid("input size " + std::to_string(input_size) + " is not divisible by 2^" +
                    std::to_string(depth() - 1));
  const auto zero = [](std::size_t v) { return v == 0; };
  if (input_size == 0 || std::ranges::any_of(down_channels, zero) ||
      std::ranges::any_of(head_channels, zero) || std::ranges::any_of(fc_units, zero))
    throw_invalid("architecture widths must be positive");
}

std::vector<ParamSpec> param_manifest(const ArchConfig& a) {
  a.validate();
  std::vector<ParamSpec> m;
  std::size_t cin = a.in_channels;
  for (std::size_t i = 0; i < a.depth(); ++i) {
    const std::string p = "down" + std::to_string(i + 1);
    add_conv(m, p + ".conv1", cin, a.down_channels[i], 3);
    add_conv(m, p + ".conv2", a.down_channels[i], a.down_channels[i], 3);
    cin = a.down_channels[i];
  }
  for (std::size_t j = 0; j < a.head_channels.size(); ++j) {
    add_conv(m, "head.conv" + std::to_string(j + 1), cin, a.head_channels[j], 3);
    cin = a.head_channels[j];
  }
  std::size_t nin = a.flatten_size();
  for (std::size_t j = 0; j <= a.fc_units.size(); ++j) {
    const std::size_t nout = j < a.fc_units.size() ? a.fc_units[j] : a.num_classes;
    const std::string p = "head.fc" + std::to_string(j + 1);
    m.push_back({p + ".weight", Shape{nin, nout}, nin});
    m.push_back({p + ".bias", Shape{nout}, nin});
    nin = nout;
  }
  cin = a.down_channels.back();
  for (std::size_t k = 0; k + 1 < a.depth(); ++k) {
    const std::size_t c = a.down_channels[a.depth() - 2 - k];
    const std::string p = "up" + std::to_string(k + 1);
    // Each output pixel of the stride-2 transposed conv sees one tap per input channel.
    m.push_back({p + ".tconv.weight", Shape{cin, c, 2, 2}, cin});
    m.push_back({p + ".tconv.bias", Shape{c}, cin});
    add_conv(m, p + ".conv1", 2 * c, c, 3);
    add_conv(m, p + ".conv2", c, c, 3);
    cin = c;
  }
  add_conv(m, "mask.conv", cin, 1, 1);
  return m;
}

bool is_up_path_param(const std::string& name) {
  return name.starts_with("up") || name.starts_with("mask.");
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
const Tensor<T>& ModelParams<T>::get(const std::string& name) const {
  const auto it = std::ranges::find(names, name);
  if (it == names.end()) throw_invalid("no parameter named " + name);
  return tensors[static_cast<std::size_t>(it - names.begin())];
}

template <typename T>
Tensor<T>& ModelParams<T>::get(const std::string& name) {
  return const_cast<Tensor<T>&>(std::as_const(*this).get(name));
}

template <typename T>
ModelParams<T> zero_params(const ArchConfig& arch) {
  ModelParams<T> p;
  p.arch = arch;
  for (auto& spec : param_manifest(arch)) {
    p.names.push_back(spec.name);
    p.tensors.emplace_back(spec.shape);
  }
  return p;
}

template <typename T>
ModelParams<T> build_model(std::uint64_t seed, const ArchConfig& arch) {
  Rng rng(seed);
  ModelParams<T> p;
  p.arch = arch;
  for (auto& spec : param_manifest(arch)) {
    p.names.push_back(spec.name);
    p.tensors.push_back(kaiming_init<T>(spec.shape, spec.fan_in, rng));
  }
  return p;
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Tensor<T>& input) {
  const ArchConfig& a = params.arch;
  const LayerIndex ix(a);
  if (params.count() != ix.total())
    throw_shape("parameter set has " + std::to_string(params.count()) + " tensors, expected " +
                std::to_string(ix.total()));
  const auto& d = input.shape().dims();
  if (input.shape().rank() != 4 || d[1] != a.in_channels || d[2] != a.input_size ||
      d[3] != a.input_size)
    throw_shape("model input must be [B," + std::to_string(a.in_channels) + "," +
                std::to_string(a.input_size) + "," + std::to_string(a.input_size) + "], got " +
                input.shape().str());
  const std::size_t batch = d[0];
  const auto& w = params.tensors;

  ForwardResult<T> r;
  ForwardCache<T>& c = r.cache;
  c.input = input;

  c.down.resize(a.depth());
  const Tensor<T>* x = &c.input;
  for (std::size_t i = 0; i < a.depth(); ++i) {
    auto& lv = c.down[i];
    const std::size_t k1 = ix.down(i, 0), k2 = ix.down(i, 1);
    lv.mid = relu_forward(conv2d_forward(*x, w[k1], w[k1 + 1]));
    lv.out = relu_forward(conv2d_forward(lv.mid, w[k2], w[k2 + 1]));
    if (i + 1 < a.depth()) {
      auto pooled = maxpool2d_forward(lv.out);
      lv.pooled = std::move(pooled.output);
      lv.pool = std::move(pooled.cache);
      x = &lv.pooled;
    }
  }
  const Tensor<T>& bottleneck = c.down.back().out;

  c.head.resize(a.head_channels.size());
  x = &bottleneck;
  for (std::size_t j = 0; j < c.head.size(); ++j) {
    const std::size_t k = ix.head_conv(j);
    c.head[j] = relu_forward(conv2d_forward(*x, w[k], w[k + 1]));
    x = &c.head[j];
  }
  c.flat = c.head.back().reshaped(Shape{batch, a.flatten_size()});
  c.fc_hidden.resize(a.fc_units.size());
  x = &c.flat;
  for (std::size_t j = 0; j < c.fc_hidden.size(); ++j) {
    const std::size_t k = ix.fc_layer(j);
    c.fc_hidden[j] = relu_forward(linear_forward(*x, w[k], w[k + 1]));
    x = &c.fc_hidden[j];
  }
  const std::size_t last_fc = ix.fc_layer(ix.fc - 1);
  r.output.class_logits = linear_forward(*x, w[last_fc], w[last_fc + 1]);

  c.up.resize(a.depth() - 1);
  x = &bottleneck;
  for (std::size_t k = 0; k < c.up.size(); ++k) {
    auto& u = c.up[k];
    const std::size_t kt = ix.up(k, 0), k1 = ix.up(k, 1), k2 = ix.up(k, 2);
    u.merged = concat_channels(convtranspose2d_forward(*x, w[kt], w[kt + 1]),
                               c.down[a.depth() - 2 - k].out);
    u.mid = relu_forward(conv2d_forward(u.merged, w[k1], w[k1 + 1]));
    u.out = relu_forward(conv2d_forward(u.mid, w[k2], w[k2 + 1]));
    x = &u.out;
  }
  r.output.mask_logits = conv2d_forward(*x, w[ix.mask()], w[ix.mask() + 1]);
  return r;
}

template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardCache<T>& c,
                        const Tensor<T>& grad_class_logits, const Tensor<T>& grad_mask_logits) {
  const ArchConfig& a = params.arch;
  const LayerIndex ix(a);
  const auto& w = params.tensors;
  if (c.down.size() != a.depth() || c.up.size() + 1 != a.depth())
    throw_shape("forward cache does not match the architecture");
  const std::size_t batch = c.input.shape()[0];
  if (grad_class_logits.shape() != Shape{batch, a.num_classes})
    throw_shape("class logit gradient has shape " + grad_class_logits.shape().str());
  if (grad_mask_logits.shape() != Shape{batch, 1, a.input_size, a.input_size})
    throw_shape("mask logit gradient has shape " + grad_mask_logits.shape().str());

  ModelParams<T> g;
  g.arch = a;
  g.names = params.names;
  g.tensors.resize(params.count());
  auto store = [&](std::size_t k, Tensor<T> gw, Tensor<T> gb) {
    g.tensors[k] = std::move(gw);
    g.tensors[k + 1] = std::move(gb);
  };

  // Classification head.
  Tensor<T> d = grad_class_logits;
  for (std::size_t j = ix.fc; j-- > 0;) {
    const Tensor<T>& in = j == 0 ? c.flat : c.fc_hidden[j - 1];
    auto lg = linear_backward(in, w[ix.fc_layer(j)], d);
    store(ix.fc_layer(j), std::move(lg.weights), std::move(lg.bias));
    d = j == 0 ? std::move(lg.input) : relu_backward(c.fc_hidden[j - 1], lg.input);
  }
  d = std::move(d).reshaped(c.head.back().shape());
  const Tensor<T>& bottleneck = c.bottleneck();
  for (std::size_t j = c.head.size(); j-- > 0;) {
    d = relu_backward(c.head[j], d);
    const Tensor<T>& in = j == 0 ? bottleneck : c.head[j - 1];
    auto cg = conv2d_backward(in, w[ix.head_conv(j)], d);
    store(ix.head_conv(j), std::move(cg.weights), std::move(cg.bias));
    d = std::move(cg.input);
  }
  Tensor<T> d_bottleneck = std::move(d);

  // Segmentation path, walking back up from the mask.
  std::vector<Tensor<T>> d_skip(a.depth() - 1);
  {
    const Tensor<T>& last = c.up.empty() ? bottleneck : c.up.back().out;
    auto mg = conv2d_backward(last, w[ix.mask()], grad_mask_logits);
    store(ix.mask(), std::move(mg.weights), std::move(mg.bias));
    d = std::move(mg.input);
  }
  for (std::size_t k = c.up.size(); k-- > 0;) {
    const auto& u = c.up[k];
    d = relu_backward(u.out, d);
    auto g2 = conv2d_backward(u.mid, w[ix.up(k, 2)], d);
    store(ix.up(k, 2), std::move(g2.weights), std::move(g2.bias));
    d = relu_backward(u.mid, g2.input);
    auto g1 = conv2d_backward(u.merged, w[ix.up(k, 1)], d);
    store(ix.up(k, 1), std::move(g1.weights), std::move(g1.bias));
    const std::size_t level = a.depth() - 2 - k;
    auto parts = split_channels(g1.input, a.down_channels[level]);
    d_skip[level] = std::move(parts.b);
    const Tensor<T>& tin = k == 0 ? bottleneck : c.up[k - 1].out;
    auto tg = convtranspose2d_backward(tin, w[ix.up(k, 0)], parts.a);
    store(ix.up(k, 0), std::move(tg.weights), std::move(tg.bias));
    d = std::move(tg.input);
  }
  if (!c.up.empty()) add_inplace(d_bottleneck, d);

  // Down path; each skip source sums the pool-path and up-path gradients.
  Tensor<T> d_pooled;
  for (std::size_t i = a.depth(); i-- > 0;) {
    const auto& lv = c.down[i];
    Tensor<T> d_out;
    if (i + 1 == a.depth()) {
      d_out = std::move(d_bottleneck);
    } else {
      d_out = maxpool2d_backward(lv.pool, d_pooled);
      add_inplace(d_out, d_skip[i]);
    }
    d = relu_backward(lv.out, d_out);
    auto g2 = conv2d_backward(lv.mid, w[ix.down(i, 1)], d);
    store(ix.down(i, 1), std::move(g2.weights), std::move(g2.bias));
    d = relu_backward(lv.mid, g2.input);
    const Tensor<T>& in = i == 0 ? c.input : c.down[i - 1].pooled;
    auto g1 = conv2d_backward(in, w[ix.down(i, 0)], d, i > 0);
    store(ix.down(i, 0), std::move(g1.weights), std::move(g1.bias));
    d_pooled = std::move(g1.input);
  }
  return g;
}

#define WUNET_INSTANTIATE_MODEL(T)                                                        \
  template struct ModelParams<T>;                                                         \
  template ModelParams<T> zero_params(const ArchConfig&);                                 \
  template ModelParams<T> build_model(std::uint64_t, const ArchConfig&);                  \
  template ForwardResult<T> forward(const ModelParams<T>&, const Tensor<T>&);             \
  template ModelParams<T> backward(const ModelParams<T>&, const ForwardCache<T>&,         \
                                   const Tensor<T>&, const Tensor<T>&);

WUNET_INSTANTIATE_MODEL(float)
WUNET_INSTANTIATE_MODEL(double)

#undef WUNET_INSTANTIATE_MODEL

}  // namespace wunet
