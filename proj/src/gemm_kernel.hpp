#pragma once

// Blocked GEMM driver shared by the dense GEMM and the convolution layers.
// B is never read directly by the driver: a source object packs kc x kNr
// panels on demand, which lets convolutions gather image patches straight into
// cache-resident panels instead of materializing a patch matrix.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace wunet::detail {

constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = kMr * 16;

template <typename T>
struct Kernel {
  typedef T Vec __attribute__((vector_size(64)));
  static constexpr std::size_t kLanes = 64 / sizeof(T);
  static constexpr std::size_t kNr = 2 * kLanes;
  static constexpr std::size_t kNc = kNr * 32;

  static Vec load(const T* p) {
    Vec v;
    std::memcpy(&v, p, sizeof(Vec));
    return v;
  }
  static void store(T* p, Vec v) { std::memcpy(p, &v, sizeof(Vec)); }

  // C tile = (load_c ? C : 0) + sum over kk of ap[kk] (x) bp[kk], one kk at a time.
  static void run(std::size_t kc, const T* ap, const T* bp, std::size_t bstride, T* c,
                  std::size_t ldc, std::size_t mr, std::size_t nr, bool load_c) {
    alignas(64) T tile[kMr][kNr];
    Vec acc[kMr][2];
    const bool full = mr == kMr && nr == kNr;
    if (!load_c) {
      for (std::size_t r = 0; r < kMr; ++r) acc[r][0] = acc[r][1] = Vec{};
    } else if (full) {
      for (std::size_t r = 0; r < kMr; ++r) {
        acc[r][0] = load(c + r * ldc);
        acc[r][1] = load(c + r * ldc + kLanes);
      }
    } else {
      std::memset(tile, 0, sizeof(tile));
      for (std::size_t r = 0; r < mr; ++r) std::memcpy(tile[r], c + r * ldc, nr * sizeof(T));
      for (std::size_t r = 0; r < kMr; ++r) {
        acc[r][0] = load(tile[r]);
        acc[r][1] = load(tile[r] + kLanes);
      }
    }

    for (std::size_t kk = 0; kk < kc; ++kk) {
      const Vec b0 = load(bp);
      const Vec b1 = load(bp + kLanes);
      for (std::size_t r = 0; r < kMr; ++r) {
        const T a = ap[r];
        acc[r][0] += a * b0;
        acc[r][1] += a * b1;
      }
      ap += kMr;
      bp += bstride;
    }

    if (full) {
      for (std::size_t r = 0; r < kMr; ++r) {
        store(c + r * ldc, acc[r][0]);
        store(c + r * ldc + kLanes, acc[r][1]);
      }
    } else {
      for (std::size_t r = 0; r < kMr; ++r) {
        store(tile[r], acc[r][0]);
        store(tile[r] + kLanes, acc[r][1]);
      }
      for (std::size_t r = 0; r < mr; ++r) std::memcpy(c + r * ldc, tile[r], nr * sizeof(T));
    }
  }
};

template <typename T>
constexpr std::size_t panel_width() {
  return Kernel<T>::kNr;
}

// Source: void pack(j0, width, k0, kc, dst) fills dst[kk * kNr + j] with
// B(k0 + kk, j0 + j) for j < width and zero for width <= j < kNr.
// Optional: const T* direct(j0, k0, stride&) returns a pointer to read a
// full-width panel in place, or nullptr.
template <typename T, typename Source>
void gemm_driver(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
                 const Source& src, T* c, std::size_t ldc, bool accumulate) {
  using K = Kernel<T>;
  constexpr std::size_t kNr = K::kNr;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, T{0});
    return;
  }

  thread_local std::vector<T> bpack;
  thread_local std::vector<T> apack;
  std::vector<const T*> panel_ptr;
  std::vector<std::size_t> panel_stride;

  for (std::size_t jc = 0; jc < n; jc += K::kNc) {
    const std::size_t nc = std::min(K::kNc, n - jc);
    const std::size_t npanels = (nc + kNr - 1) / kNr;
    panel_ptr.assign(npanels, nullptr);
    panel_stride.assign(npanels, kNr);
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      const std::size_t kc = std::min(kKc, k - pc);
      const bool load_c = accumulate || pc > 0;

      bpack.resize(npanels * kc * kNr);
      for (std::size_t p = 0; p < npanels; ++p) {
        const std::size_t j0 = jc + p * kNr;
        const std::size_t w = std::min(kNr, n - j0);
        const T* direct = nullptr;
        std::size_t stride = kNr;
        if constexpr (requires { src.direct(j0, pc, stride); }) {
          if (w == kNr && m <= 4 * kMr) direct = src.direct(j0, pc, stride);
        }
        if (direct) {
          panel_ptr[p] = direct;
          panel_stride[p] = stride;
        } else {
          T* dst = bpack.data() + p * kc * kNr;
          src.pack(j0, w, pc, kc, dst);
          panel_ptr[p] = dst;
          panel_stride[p] = kNr;
        }
      }

      for (std::size_t ic = 0; ic < m; ic += kMc) {
        const std::size_t mc = std::min(kMc, m - ic);
        const std::size_t mpanels = (mc + kMr - 1) / kMr;
        apack.resize(mpanels * kc * kMr);
        for (std::size_t p = 0; p < mpanels; ++p) {
          const std::size_t i0 = ic + p * kMr;
          const std::size_t h = std::min(kMr, m - i0);
          T* dst = apack.data() + p * kc * kMr;
          for (std::size_t r = 0; r < h; ++r) {
            const T* row = a + (i0 + r) * lda + pc;
            for (std::size_t kk = 0; kk < kc; ++kk) dst[kk * kMr + r] = row[kk];
          }
          for (std::size_t r = h; r < kMr; ++r)
            for (std::size_t kk = 0; kk < kc; ++kk) dst[kk * kMr + r] = T{0};
        }

        for (std::size_t jp = 0; jp < npanels; ++jp) {
          const std::size_t j0 = jc + jp * kNr;
          const std::size_t nr = std::min(kNr, n - j0);
          for (std::size_t ip = 0; ip < mpanels; ++ip) {
            const std::size_t i0 = ic + ip * kMr;
            const std::size_t mr = std::min(kMr, m - i0);
            K::run(kc, apack.data() + ip * kc * kMr, panel_ptr[jp], panel_stride[jp],
                   c + i0 * ldc + j0, ldc, mr, nr, load_c);
          }
        }
      }
    }
  }
}

// Plain row-major matrix as a panel source.
template <typename T>
struct MatrixSource {
  const T* b;
  std::size_t ldb;

  void pack(std::size_t j0, std::size_t width, std::size_t k0, std::size_t kc, T* dst) const {
    constexpr std::size_t kNr = Kernel<T>::kNr;
    for (std::size_t kk = 0; kk < kc; ++kk) {
      std::memcpy(dst + kk * kNr, b + (k0 + kk) * ldb + j0, width * sizeof(T));
      std::fill(dst + kk * kNr + width, dst + (kk + 1) * kNr, T{0});
    }
  }
  const T* direct(std::size_t j0, std::size_t k0, std::size_t& stride) const {
    stride = ldb;
    return b + k0 * ldb + j0;
  }
};

}  // namespace wunet::detail
