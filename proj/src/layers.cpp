#include "wunet/layers.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <string>

#include "gemm_kernel.hpp"

namespace wunet {

namespace {

void expect_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.rank() != rank)
    throw_shape(std::string(what) + " must be rank " + std::to_string(rank) + ", got " +
                s.str());
}

template <typename T>
void expect_same(const Tensor<T>& a, const Shape& s, const char* what) {
  if (a.shape() != s)
    throw_shape(std::string(what) + " has shape " + a.shape().str() + ", expected " + s.str());
}

// Patch matrix B[K,N] of a same-padded k x k correlation over one image,
// K = Cin*k*k ordered (ci, ky, kx) and N = H*W pixels, gathered panel by panel.
template <typename T>
struct PatchSource {
  const T* x;
  std::size_t cin, h, w, k;

  void pack(std::size_t j0, std::size_t width, std::size_t k0, std::size_t kc, T* dst) const {
    constexpr std::size_t kNr = detail::panel_width<T>();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(j0 / w);
    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(j0 % w);
    const bool one_row = x0 + static_cast<std::ptrdiff_t>(width) <= ww;
    for (std::size_t kk = 0; kk < kc; ++kk) {
      const std::size_t r = k0 + kk;
      const std::size_t ci = r / (k * k);
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>((r / k) % k) - pad;
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(r % k) - pad;
      const T* plane = x + ci * h * w;
      T* out = dst + kk * kNr;
      if (one_row) {
        const std::ptrdiff_t sy = y0 + dy;
        if (sy < 0 || sy >= hh) {
          std::fill(out, out + kNr, T{0});
          continue;
        }
        // Columns j with 0 <= x0 + j + dx < W come from one contiguous run.
        const std::ptrdiff_t wd = static_cast<std::ptrdiff_t>(width);
        const std::ptrdiff_t lo = std::clamp<std::ptrdiff_t>(-dx - x0, 0, wd);
        const std::ptrdiff_t hi = std::clamp<std::ptrdiff_t>(ww - dx - x0, lo, wd);
        std::fill(out, out + lo, T{0});
        std::memcpy(out + lo, plane + sy * ww + x0 + lo + dx,
                    static_cast<std::size_t>(hi - lo) * sizeof(T));
        std::fill(out + hi, out + wd, T{0});
      } else {
        std::ptrdiff_t y = y0, xo = x0;
        for (std::size_t j = 0; j < width; ++j) {
          const std::ptrdiff_t sy = y + dy, sx = xo + dx;
          out[j] = (sy >= 0 && sy < hh && sx >= 0 && sx < ww) ? plane[sy * ww + sx] : T{0};
          if (++xo == ww) {
            xo = 0;
            ++y;
          }
        }
      }
      std::fill(out + width, out + kNr, T{0});
    }
  }
};

// Transposed patch matrix B[N,K]: one row of K taps per pixel.
template <typename T>
struct PatchRowSource {
  const T* x;
  std::size_t cin, h, w, k;

  // Column by column: along one image row the gathered values are a shifted
  // contiguous run of x, so bounds are resolved once per row segment.
  void pack(std::size_t j0, std::size_t width, std::size_t k0, std::size_t kc, T* dst) const {
    constexpr std::size_t kNr = detail::panel_width<T>();
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::ptrdiff_t hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
    for (std::size_t j = 0; j < kNr; ++j) {
      T* col = dst + j;
      if (j >= width) {
        for (std::size_t kk = 0; kk < kc; ++kk) col[kk * kNr] = T{0};
        continue;
      }
      const std::size_t c = j0 + j;
      const T* plane = x + (c / (k * k)) * h * w;
      const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>((c / k) % k) - pad;
      const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(c % k) - pad;
      std::size_t kk = 0;
      while (kk < kc) {
        const std::size_t pix = k0 + kk;
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(pix / w);
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(pix % w);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(ww, x0 + static_cast<std::ptrdiff_t>(kc - kk));
        const std::ptrdiff_t sy = y + dy;
        T* o = col + kk * kNr;
        if (sy < 0 || sy >= hh) {
          for (std::ptrdiff_t xo = x0; xo < x1; ++xo, o += kNr) *o = T{0};
        } else {
          const T* row = plane + sy * ww + dx;
          const std::ptrdiff_t lo = std::max(x0, -dx), hi = std::min(x1, ww - dx);
          std::ptrdiff_t xo = x0;
          for (; xo < lo && xo < x1; ++xo, o += kNr) *o = T{0};
          for (; xo < hi; ++xo, o += kNr) *o = row[xo];
          for (; xo < x1; ++xo, o += kNr) *o = T{0};
        }
        kk += static_cast<std::size_t>(x1 - x0);
      }
    }
  }
};

// out[Cout, H*W] = weights[Cout, Cin*k*k] * patches(x).
template <typename T>
void correlate(const T* weights, std::size_t cout, const T* x, std::size_t cin, std::size_t h,
               std::size_t w, std::size_t k, T* out) {
  const std::size_t kdim = cin * k * k, n = h * w;
  if (k == 1)
    detail::gemm_driver(cout, n, kdim, weights, kdim, detail::MatrixSource<T>{x, n}, out, n,
                        false);
  else
    detail::gemm_driver(cout, n, kdim, weights, kdim, PatchSource<T>{x, cin, h, w, k}, out, n,
                        false);
}

// Sums per-sample partial buffers in batch order so the result does not
// depend on how samples were spread over threads.
template <typename T>
void reduce_partials(const std::vector<T>& partial, std::size_t batch, T* out, std::size_t n) {
  std::copy(partial.begin(), partial.begin() + static_cast<std::ptrdiff_t>(n), out);
  for (std::size_t b = 1; b < batch; ++b) {
    const T* src = partial.data() + b * n;
    for (std::size_t i = 0; i < n; ++i) out[i] += src[i];
  }
}

template <typename T>
Tensor<T> channel_sums(const Tensor<T>& grad_out) {
  const auto& d = grad_out.shape().dims();
  const std::size_t plane = d[2] * d[3];
  Tensor<T> gb(Shape{d[1]});
  for (std::size_t b = 0; b < d[0]; ++b)
    for (std::size_t c = 0; c < d[1]; ++c) {
      const T* src = grad_out.data() + (b * d[1] + c) * plane;
      T s = gb[c];
      for (std::size_t i = 0; i < plane; ++i) s += src[i];
      gb[c] = s;
    }
  return gb;
}

}  // namespace

namespace testing {

namespace {
std::atomic<double> g_conv_perturbation{0.0};
}  // namespace

void set_conv_backward_perturbation(double offset) noexcept { g_conv_perturbation = offset; }
double conv_backward_perturbation() noexcept { return g_conv_perturbation; }

}  // namespace testing

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias) {
  expect_rank(input.shape(), 4, "conv2d input");
  expect_rank(weights.shape(), 4, "conv2d weights");
  const auto& xd = input.shape().dims();
  const auto& wd = weights.shape().dims();
  const std::size_t batch = xd[0], cin = xd[1], h = xd[2], w = xd[3];
  const std::size_t cout = wd[0], k = wd[2];
  if (wd[1] != cin)
    throw_shape("conv2d channel mismatch: input " + input.shape().str() + ", weights " +
                weights.shape().str());
  if (wd[3] != k || k % 2 == 0) throw_shape("conv2d kernel must be square and odd");
  expect_same(bias, Shape{cout}, "conv2d bias");

  const std::size_t n = h * w;
  Tensor<T> out(Shape{batch, cout, h, w});
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    T* y = out.data() + b * cout * n;
    correlate(weights.data(), cout, input.data() + b * cin * n, cin, h, w, k, y);
    for (std::size_t co = 0; co < cout; ++co) {
      const T bc = bias[co];
      for (std::size_t i = 0; i < n; ++i) y[co * n + i] += bc;
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, bool need_input_grad) {
  expect_rank(input.shape(), 4, "conv2d input");
  expect_rank(weights.shape(), 4, "conv2d weights");
  const auto& xd = input.shape().dims();
  const auto& wd = weights.shape().dims();
  const std::size_t batch = xd[0], cin = xd[1], h = xd[2], w = xd[3];
  const std::size_t cout = wd[0], k = wd[2];
  if (wd[1] != cin) throw_shape("conv2d backward channel mismatch");
  expect_same(grad_out, Shape{batch, cout, h, w}, "conv2d grad_out");

  const std::size_t kdim = cin * k * k, n = h * w;
  ConvGrads<T> g;
  g.weights = Tensor<T>(weights.shape());
  g.bias = channel_sums(grad_out);
  if (need_input_grad) g.input = Tensor<T>(input.shape());

  // Input gradient is a correlation of grad_out with the spatially flipped,
  // channel-transposed kernel.
  const std::size_t kk2 = k * k;
  std::vector<T> flipped(cin * cout * kk2);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t t = 0; t < kk2; ++t)
        flipped[(ci * cout + co) * kk2 + (kk2 - 1 - t)] = weights[(co * cin + ci) * kk2 + t];

  std::vector<T> partial(batch * cout * kdim);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x = input.data() + b * cin * n;
    const T* dy = grad_out.data() + b * cout * n;
    detail::gemm_driver(cout, kdim, n, dy, n, PatchRowSource<T>{x, cin, h, w, k},
                        partial.data() + b * cout * kdim, kdim, false);
    if (need_input_grad)
      correlate(flipped.data(), cin, dy, cout, h, w, k, g.input.data() + b * cin * n);
  }
  reduce_partials(partial, batch, g.weights.data(), cout * kdim);
  if (const double eps = testing::conv_backward_perturbation(); eps != 0.0)
    for (auto& v : g.weights.values()) v += static_cast<T>(eps);
  return g;
}

template <typename T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>& bias) {
  expect_rank(input.shape(), 4, "convtranspose2d input");
  expect_rank(weights.shape(), 4, "convtranspose2d weights");
  const auto& xd = input.shape().dims();
  const auto& wd = weights.shape().dims();
  const std::size_t batch = xd[0], cin = xd[1], h = xd[2], w = xd[3];
  const std::size_t cout = wd[1];
  if (wd[0] != cin || wd[2] != 2 || wd[3] != 2)
    throw_shape("convtranspose2d weights " + weights.shape().str() + " do not fit input " +
                input.shape().str());
  expect_same(bias, Shape{cout}, "convtranspose2d bias");

  const std::size_t n = h * w, taps = cout * 4;
  const Tensor<T> wt = transpose2d(weights.reshaped(Shape{cin, taps}));
  Tensor<T> out(Shape{batch, cout, 2 * h, 2 * w});
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    thread_local std::vector<T> ybuf;
    ybuf.resize(taps * n);
    gemm(taps, n, cin, wt.data(), cin, input.data() + b * cin * n, n, ybuf.data(), n, false);
    T* o = out.data() + b * cout * 4 * n;
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t t = 0; t < 4; ++t) {
        const std::size_t dy = t / 2, dx = t % 2;
        const T* src = ybuf.data() + (co * 4 + t) * n;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            o[(co * 2 * h + 2 * y + dy) * 2 * w + 2 * x + dx] = src[y * w + x] + bias[co];
      }
  }
  return out;
}

template <typename T>
ConvGrads<T> convtranspose2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                      const Tensor<T>& grad_out) {
  expect_rank(input.shape(), 4, "convtranspose2d input");
  expect_rank(weights.shape(), 4, "convtranspose2d weights");
  const auto& xd = input.shape().dims();
  const auto& wd = weights.shape().dims();
  const std::size_t batch = xd[0], cin = xd[1], h = xd[2], w = xd[3];
  const std::size_t cout = wd[1];
  if (wd[0] != cin || wd[2] != 2 || wd[3] != 2) throw_shape("convtranspose2d weights mismatch");
  expect_same(grad_out, Shape{batch, cout, 2 * h, 2 * w}, "convtranspose2d grad_out");

  const std::size_t n = h * w, taps = cout * 4;
  ConvGrads<T> g;
  g.input = Tensor<T>(input.shape());
  g.weights = Tensor<T>(weights.shape());
  g.bias = channel_sums(grad_out);
  std::vector<T> partial(batch * cin * taps);

#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    thread_local std::vector<T> dyt;  // [n, taps]
    thread_local std::vector<T> dyb;  // [taps, n]
    dyt.resize(n * taps);
    dyb.resize(taps * n);
    const T* go = grad_out.data() + b * cout * 4 * n;
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t t = 0; t < 4; ++t) {
        const std::size_t dy = t / 2, dx = t % 2, tap = co * 4 + t;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const T v = go[(co * 2 * h + 2 * y + dy) * 2 * w + 2 * x + dx];
            dyb[tap * n + y * w + x] = v;
            dyt[(y * w + x) * taps + tap] = v;
          }
      }
    const T* x = input.data() + b * cin * n;
    gemm(cin, n, taps, weights.data(), taps, dyb.data(), n, g.input.data() + b * cin * n, n,
         false);
    gemm(cin, taps, n, x, n, dyt.data(), taps, partial.data() + b * cin * taps, taps, false);
  }
  reduce_partials(partial, batch, g.weights.data(), cin * taps);
  return g;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input) {
  expect_rank(input.shape(), 4, "maxpool2d input");
  const auto& d = input.shape().dims();
  const std::size_t planes = d[0] * d[1], h = d[2], w = d[3];
  if (h % 2 || w % 2) throw_shape("maxpool2d needs even spatial dims, got " + input.shape().str());
  if (input.size() > std::numeric_limits<std::uint32_t>::max())
    throw_shape("maxpool2d input too large for 32-bit argmax indices");

  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r;
  r.output = Tensor<T>(Shape{d[0], d[1], oh, ow});
  r.cache.input_shape = input.shape();
  r.cache.argmax.resize(r.output.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + 2 * y * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t c : cand)
          if (input[c] > input[best]) best = c;
        const std::size_t o = (p * oh + y) * ow + x;
        r.output[o] = input[best];
        r.cache.argmax[o] = static_cast<std::uint32_t>(best);
      }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const PoolCache& cache, const Tensor<T>& grad_out) {
  if (cache.input_shape.rank() != 4) throw_shape("maxpool2d backward: empty cache");
  const auto& d = cache.input_shape.dims();
  expect_same(grad_out, Shape{d[0], d[1], d[2] / 2, d[3] / 2}, "maxpool2d grad_out");
  Tensor<T> gi(cache.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) gi[cache.argmax[o]] += grad_out[o];
  return gi;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  out.drop_grad();
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  expect_same(grad_out, output.shape(), "relu grad_out");
  Tensor<T> gi(output.shape());
  for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = output[i] > T{0} ? grad_out[i] : T{0};
  return gi;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias) {
  expect_rank(input.shape(), 2, "linear input");
  expect_rank(weights.shape(), 2, "linear weights");
  if (input.shape()[1] != weights.shape()[0])
    throw_shape("linear: input " + input.shape().str() + " does not match weights " +
                weights.shape().str());
  const std::size_t batch = input.shape()[0], nout = weights.shape()[1];
  expect_same(bias, Shape{nout}, "linear bias");
  Tensor<T> out = matmul(input, weights);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < nout; ++j) out[b * nout + j] += bias[j];
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out) {
  expect_rank(input.shape(), 2, "linear input");
  expect_rank(weights.shape(), 2, "linear weights");
  const std::size_t batch = input.shape()[0], nin = weights.shape()[0], nout = weights.shape()[1];
  if (input.shape()[1] != nin) throw_shape("linear backward: input/weights mismatch");
  expect_same(grad_out, Shape{batch, nout}, "linear grad_out");

  LinearGrads<T> g;
  g.weights = matmul(transpose2d(input), grad_out);
  g.input = matmul(grad_out, transpose2d(weights));
  g.bias = Tensor<T>(Shape{nout});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < nout; ++j) g.bias[j] += grad_out[b * nout + j];
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  expect_rank(a.shape(), 4, "concat lhs");
  expect_rank(b.shape(), 4, "concat rhs");
  const auto& ad = a.shape().dims();
  const auto& bd = b.shape().dims();
  if (ad[0] != bd[0] || ad[2] != bd[2] || ad[3] != bd[3])
    throw_shape("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t plane = ad[2] * ad[3], na = ad[1] * plane, nb = bd[1] * plane;
  Tensor<T> out(Shape{ad[0], ad[1] + bd[1], ad[2], ad[3]});
  for (std::size_t n = 0; n < ad[0]; ++n) {
    T* dst = out.data() + n * (na + nb);
    std::copy_n(a.data() + n * na, na, dst);
    std::copy_n(b.data() + n * nb, nb, dst + na);
  }
  return out;
}

template <typename T>
ChannelSplit<T> split_channels(const Tensor<T>& t, std::size_t ca) {
  expect_rank(t.shape(), 4, "split input");
  const auto& d = t.shape().dims();
  if (ca == 0 || ca >= d[1]) throw_shape("split_channels: bad split point for " + t.shape().str());
  const std::size_t plane = d[2] * d[3], na = ca * plane, nb = (d[1] - ca) * plane;
  ChannelSplit<T> s{Tensor<T>(Shape{d[0], ca, d[2], d[3]}),
                    Tensor<T>(Shape{d[0], d[1] - ca, d[2], d[3]})};
  for (std::size_t n = 0; n < d[0]; ++n) {
    const T* src = t.data() + n * (na + nb);
    std::copy_n(src, na, s.a.data() + n * na);
    std::copy_n(src + na, nb, s.b.data() + n * nb);
  }
  return s;
}

template <typename T>
AdamState<T> adam_init(const std::vector<Tensor<T>>& params, AdamConfig config) {
  AdamState<T> s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw_shape("adam_step: parameter/gradient/moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape() ||
        state.v[i].shape() != params[i].shape())
      throw_shape("adam_step: shape mismatch at tensor " + std::to_string(i));

  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T one_b1 = static_cast<T>(1.0 - c.beta1), one_b2 = static_cast<T>(1.0 - c.beta2);
  const T step_size = static_cast<T>(c.lr / corr1);
  const T inv_sqrt_corr2 = static_cast<T>(1.0 / std::sqrt(corr2));
  const T eps = static_cast<T>(c.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].data();
    const T* g = grads[i].data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      m[j] = b1 * m[j] + one_b1 * g[j];
      v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_corr2 + eps);
    }
  }
}

#define WUNET_INSTANTIATE_LAYERS(T)                                                            \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        bool);                                                 \
  template Tensor<T> convtranspose2d_forward(const Tensor<T>&, const Tensor<T>&,               \
                                             const Tensor<T>&);                                \
  template ConvGrads<T> convtranspose2d_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                 const Tensor<T>&);                            \
  template PoolResult<T> maxpool2d_forward(const Tensor<T>&);                                  \
  template Tensor<T> maxpool2d_backward(const PoolCache&, const Tensor<T>&);                   \
  template Tensor<T> relu_forward(const Tensor<T>&);                                           \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> linear_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template ChannelSplit<T> split_channels(const Tensor<T>&, std::size_t);                      \
  template AdamState<T> adam_init(const std::vector<Tensor<T>>&, AdamConfig);                  \
  template void adam_step(std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, AdamState<T>&);

WUNET_INSTANTIATE_LAYERS(float)
WUNET_INSTANTIATE_LAYERS(double)

#undef WUNET_INSTANTIATE_LAYERS

}  // namespace wunet
