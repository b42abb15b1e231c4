#pragma once

// Straightforward reference implementations used as independent oracles.
// They favour obviousness over speed and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "wunet/tensor.hpp"

namespace oracle {

using wunet::Tensor;

template <typename T>
Tensor<double> to_double(const Tensor<T>& t) {
  Tensor<double> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]);
  return out;
}

template <typename T>
Tensor<T> random(const wunet::Shape& shape, wunet::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Zero-padded "same" cross-correlation.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Co = w.shape()[0], K = w.shape()[2];
  const long pad = static_cast<long>(K / 2);
  Tensor<double> out(wunet::Shape{B, Co, H, W});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double s = b[co];
          for (std::size_t ci = 0; ci < Ci; ++ci)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long sy = static_cast<long>(y + ky) - pad, sx = static_cast<long>(xx + kx) - pad;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
                s += w.at(co, ci, ky, kx) * x.at(n, ci, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
              }
          out.at(n, co, y, xx) = s;
        }
  return out;
}

// Stride-2, 2x2 transposed convolution: every input pixel scatters a 2x2 patch.
inline Tensor<double> conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                       const Tensor<double>& b) {
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t Co = w.shape()[1];
  Tensor<double> out(wunet::Shape{B, Co, 2 * H, 2 * W});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) out.at(n, co, y, xx) = b[co];
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t ci = 0; ci < Ci; ++ci)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx)
          for (std::size_t co = 0; co < Co; ++co)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx)
                out.at(n, co, 2 * y + dy, 2 * xx + dx) += x.at(n, ci, y, xx) * w.at(ci, co, dy, dx);
  return out;
}

inline Tensor<double> maxpool(const Tensor<double>& x) {
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  Tensor<double> out(wunet::Shape{B, C, H / 2, W / 2});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H / 2; ++y)
        for (std::size_t xx = 0; xx < W / 2; ++xx)
          out.at(n, c, y, xx) = std::max({x.at(n, c, 2 * y, 2 * xx), x.at(n, c, 2 * y, 2 * xx + 1),
                                          x.at(n, c, 2 * y + 1, 2 * xx), x.at(n, c, 2 * y + 1, 2 * xx + 1)});
  return out;
}

template <typename T>
std::vector<T> matmul(const std::vector<T>& a, const std::vector<T>& b, std::size_t m, std::size_t k,
                      std::size_t n) {
  std::vector<T> c(m * n, T{0});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T s = T{0};
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Literal sigmoid-then-log form of the binary cross-entropy.
inline double bce_literal(double x, double y) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return -(y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
}

// Softmax followed by the negative log-likelihood, written out explicitly.
inline double cross_entropy_literal(const std::vector<double>& logits, int label) {
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  return -std::log(std::exp(logits[static_cast<std::size_t>(label)]) / z);
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts count(const std::vector<int>& pred, const std::vector<int>& truth) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) c.tp++;
    if (pred[i] == 1 && truth[i] == 0) c.fp++;
    if (pred[i] == 0 && truth[i] == 1) c.fn++;
    if (pred[i] == 0 && truth[i] == 0) c.tn++;
  }
  return c;
}

// Textbook bilinear sampling with half-pixel centers and edge clamping.
inline double bilinear_sample(const std::vector<std::uint8_t>& px, std::size_t w, std::size_t h,
                              std::size_t channels, std::size_t c, double sy, double sx) {
  sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
  sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double wy = sy - static_cast<double>(y0), wx = sx - static_cast<double>(x0);
  const auto p = [&](std::size_t y, std::size_t x) { return static_cast<double>(px[(y * w + x) * channels + c]); };
  return (1 - wy) * (1 - wx) * p(y0, x0) + (1 - wy) * wx * p(y0, x1) + wy * (1 - wx) * p(y1, x0) +
         wy * wx * p(y1, x1);
}

}  // namespace oracle
