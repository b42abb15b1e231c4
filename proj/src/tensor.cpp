#include "wunet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace wunet {

namespace {

void validate_dims(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > 4)
    throw_shape("rank must be 1..4, got " + std::to_string(dims.size()));
  for (std::size_t d : dims)
    if (d == 0) throw_shape("zero dimension in shape");
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate_dims(dims_); }

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate_dims(dims_); }

std::size_t Shape::numel() const noexcept {
  if (dims_.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), values_(shape_.numel(), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_.numel())
    throw_shape("buffer of " + std::to_string(values_.size()) + " values for shape " +
                shape_.str());
}

template <typename T>
T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const auto& d = shape_.dims();
  return values_[((n * d[1] + c) * d[2] + h) * d[3] + w];
}

template <typename T>
const T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  const auto& d = shape_.dims();
  return values_[((n * d[1] + c) * d[2] + h) * d[3] + w];
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!grad_) grad_.emplace(values_.size(), T{0});
  return *grad_;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!grad_) return {};
  return *grad_;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  return Tensor(*this).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  if (shape.numel() != values_.size())
    throw_shape("cannot reshape " + shape_.str() + " to " + shape.str());
  Tensor out;
  out.shape_ = std::move(shape);
  out.values_ = std::move(values_);
  return out;
}

template <typename T>
T Tensor<T>::sum() const noexcept {
  T s{0};
  for (T v : values_) s += v;
  return s;
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  for (T v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  for (auto& s : s_) s = splitmix64(seed);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

template <typename T>
Tensor<T> tensor_new(const Shape& shape, T fill) {
  if (shape.rank() == 0) throw_shape("empty shape");
  return Tensor<T>(shape, fill);
}

template <typename T>
Tensor<T> kaiming_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw_invalid("kaiming_init: fan_in must be >= 1");
  Tensor<T> t = tensor_new<T>(shape, T{0});
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : t.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2)
    throw_shape("matmul expects rank-2 operands, got " + a.shape().str() + " x " +
                b.shape().str());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw_shape("matmul inner dims differ: " + a.shape().str() + " x " + b.shape().str());
  Tensor<T> c(Shape{m, n});
  gemm(m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
  return c;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.shape().rank() != 2) throw_shape("transpose2d expects rank 2, got " + a.shape().str());
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor<T> t(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
  return t;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> tensor_new(const Shape&, float);
template Tensor<double> tensor_new(const Shape&, double);
template Tensor<float> kaiming_init(const Shape&, std::size_t, Rng&);
template Tensor<double> kaiming_init(const Shape&, std::size_t, Rng&);
template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> transpose2d(const Tensor<float>&);
template Tensor<double> transpose2d(const Tensor<double>&);

}  // namespace wunet
