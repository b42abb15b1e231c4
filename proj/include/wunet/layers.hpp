#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wunet/tensor.hpp"

namespace wunet {

// Layer primitives. Forward functions are pure; the tensors a backward pass
// needs (the forward input, or the forward output for ReLU) are held by the
// caller and handed back, so nothing is copied into a cache object unless the
// backward pass needs data the forward output does not carry (max-pool argmax).

template <typename T>
struct ConvGrads {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weights;
  Tensor<T> bias;
};

// Cross-correlation, stride 1, zero padding k/2 so spatial size is preserved.
// input [B,Cin,H,W], weights [Cout,Cin,k,k] with odd k, bias [Cout].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, bool need_input_grad = true);

// 2x2 stride-2 transposed convolution. input [B,Cin,H,W], weights [Cin,Cout,2,2],
// bias [Cout] -> [B,Cout,2H,2W].
template <typename T>
Tensor<T> convtranspose2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                                  const Tensor<T>& bias);

template <typename T>
ConvGrads<T> convtranspose2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                      const Tensor<T>& grad_out);

// Flat input index of the maximum of each 2x2 window; the first maximum in
// row-major window order wins ties.
struct PoolCache {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  PoolCache cache;
};

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2d_backward(const PoolCache& cache, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

// Takes the forward *output*: output > 0 exactly where input > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

// input [B,n_in], weights [n_in,n_out], bias [n_out] -> input * W + b.
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         const Tensor<T>& bias);

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out);

// [B,Ca,H,W] ++ [B,Cb,H,W] -> [B,Ca+Cb,H,W]; a takes the leading channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct ChannelSplit {
  Tensor<T> a;
  Tensor<T> b;
};

// Inverse of concat_channels: channels [0,ca) and [ca,C).
template <typename T>
ChannelSplit<T> split_channels(const Tensor<T>& t, std::size_t ca);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

// Zeroed moments shaped like params.
template <typename T>
AdamState<T> adam_init(const std::vector<Tensor<T>>& params, AdamConfig config = {});

// One bias-corrected Adam update of params in place; increments state.step.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state);

namespace testing {

// Adds `offset` to every element of the weight gradient returned by
// conv2d_backward. Exists so the gradient checker can be shown to fail;
// leave at 0 otherwise.
void set_conv_backward_perturbation(double offset) noexcept;
double conv_backward_perturbation() noexcept;

}  // namespace testing

}  // namespace wunet
