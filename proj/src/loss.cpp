#include "wunet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace wunet {

double cross_entropy_single(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw_invalid("label " + std::to_string(label) + " outside [0," +
                  std::to_string(logits.size()) + ")");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::log(z) + mx - logits[static_cast<std::size_t>(label)];
}

double bce_with_logits_single(double x, double y) {
  return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.shape().rank() != 2)
    throw_shape("cross_entropy logits must be [B,C], got " + logits.shape().str());
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch)
    throw_shape("cross_entropy got " + std::to_string(labels.size()) + " labels for batch " +
                std::to_string(batch));

  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  std::vector<double> row(classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw_invalid("label " + std::to_string(y) + " at batch index " + std::to_string(b) +
                    " outside [0," + std::to_string(classes) + ")");
    for (std::size_t c = 0; c < classes; ++c) row[c] = static_cast<double>(logits[b * classes + c]);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    r.loss += std::log(z) + mx - static_cast<double>(logits[b * classes + y]);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = row[c] / z - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0);
      r.grad[b * classes + c] = static_cast<T>(p / static_cast<double>(batch));
    }
  }
  r.loss /= static_cast<double>(batch);
  return r;
}

template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  if (logits.shape() != target.shape())
    throw_shape("bce_with_logits target " + target.shape().str() + " does not match logits " +
                logits.shape().str());
  const std::size_t n = logits.size();
  LossResult<T> r{0.0, Tensor<T>(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = static_cast<double>(target[i]);
    if (y != 0.0 && y != 1.0)
      throw_invalid("bce_with_logits target must be 0 or 1, found " + std::to_string(y) +
                    " at index " + std::to_string(i));
    const double x = static_cast<double>(logits[i]);
    r.loss += bce_with_logits_single(x, y);
    // sigmoid without overflow for large |x|
    const double e = std::exp(-std::abs(x));
    const double s = x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    r.grad[i] = static_cast<T>((s - y) * inv_n);
  }
  r.loss *= inv_n;
  return r;
}

template LossResult<float> cross_entropy(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy(const Tensor<double>&, std::span<const int>);
template LossResult<float> bce_with_logits(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> bce_with_logits(const Tensor<double>&, const Tensor<double>&);

}  // namespace wunet
