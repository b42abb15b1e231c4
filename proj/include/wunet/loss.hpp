#pragma once

#include <cstddef>
#include <span>

#include "wunet/tensor.hpp"

namespace wunet {

// Loss values are accumulated in double whatever the tensor precision; the
// gradient has the logits' type and shape.
template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

struct LossValue {
  double classification = 0.0;
  double segmentation = 0.0;
  double total = 0.0;
};

// Softmax cross-entropy, mean over the batch. logits [B,C], labels in [0,C).
// grad = (softmax - onehot) / B.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Sigmoid + binary cross-entropy, mean over every element.
// Per element: max(x,0) - x*y + log(1 + exp(-|x|)); grad = (sigmoid(x) - y) / N.
template <typename T>
LossResult<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target);

// Single-element forms of the two losses.
double cross_entropy_single(std::span<const double> logits, int label);
double bce_with_logits_single(double x, double y);

inline double total_loss(double cls, double seg) { return cls + seg; }

inline LossValue make_loss_value(double cls, double seg) {
  return {cls, seg, total_loss(cls, seg)};
}

}  // namespace wunet
