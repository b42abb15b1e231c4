#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wunet/error.hpp"

namespace wunet {

// Dimensions of a dense tensor. Rank-4 shapes are batch x channels x height x width.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::vector<std::size_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }

  // Product of dims; 0 for the empty (default) shape.
  std::size_t numel() const noexcept;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

// Dense row-major tensor with an optional gradient buffer of the same length.
// A default-constructed tensor is an empty placeholder with no elements.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }

  // Rank-4 element access (n, c, h, w).
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool has_grad() const noexcept { return grad_.has_value(); }
  // Allocates a zeroed gradient buffer if absent.
  std::span<T> grad();
  std::span<const T> grad() const;
  void drop_grad() noexcept { grad_.reset(); }

  // Same values under a new shape with equal element count.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  T sum() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<T> values_;
  std::optional<std::vector<T>> grad_;
};

// xoshiro256** seeded through splitmix64. The sequence for a given seed is
// fixed across platforms and standard libraries.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256**/splitmix64";

  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  template <typename U>
  void shuffle(std::span<U> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

template <typename T>
Tensor<T> tensor_new(const Shape& shape, T fill);

// Uniform in [-b, b) with b = sqrt(6 / fan_in).
template <typename T>
Tensor<T> kaiming_init(const Shape& shape, std::size_t fan_in, Rng& rng);

// C = A * B for rank-2 tensors.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a);

// Row-major GEMM: C[m,n] = (accumulate ? C : 0) + A[m,k] * B[k,n].
// Every output element is accumulated over k in increasing order, one term at
// a time, so results match a naive triple loop bit for bit when both are built
// with the same floating-point contraction mode.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

}  // namespace wunet
