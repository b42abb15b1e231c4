#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wunet/layers.hpp"
#include "wunet/tensor.hpp"

namespace wunet {

// Widths and depth of the dual-head U-Net. `standard()` is the production
// network (128x128x3 input, 4 classes); `compact()` is a scaled-down variant
// used for whole-network finite-difference checks.
struct ArchConfig {
  std::size_t input_size = 128;
  std::size_t in_channels = 3;
  // One entry per down block. Every block but the last ends in a 2x2 max-pool;
  // the last is the pool-free bottleneck.
  std::vector<std::size_t> down_channels{16, 32, 64, 128, 256};
  // 3x3 convs of the classification head, applied to the bottleneck.
  std::vector<std::size_t> head_channels{128, 64, 32};
  // Hidden fully-connected widths; a final layer maps to num_classes.
  std::vector<std::size_t> fc_units{120, 84};
  std::size_t num_classes = 4;

  static ArchConfig standard() { return {}; }
  static ArchConfig compact();

  std::size_t depth() const noexcept { return down_channels.size(); }
  std::size_t bottleneck_size() const noexcept;
  std::size_t flatten_size() const noexcept;
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

// Ordered list of every learnable tensor: the architecture manifest that
// checkpoints are validated against.
std::vector<ParamSpec> param_manifest(const ArchConfig& arch);

// Tensors in manifest order. Gradients use the same container.
template <typename T>
struct ModelParams {
  ArchConfig arch;
  std::vector<std::string> names;
  std::vector<Tensor<T>> tensors;

  std::size_t count() const noexcept { return tensors.size(); }
  std::size_t scalar_count() const noexcept;
  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
};

// Zero-filled tensors with the manifest shapes.
template <typename T>
ModelParams<T> zero_params(const ArchConfig& arch);

// Kaiming-uniform initialization of every tensor from one seeded stream.
template <typename T>
ModelParams<T> build_model(std::uint64_t seed, const ArchConfig& arch = ArchConfig::standard());

template <typename T>
struct ModelOutput {
  Tensor<T> class_logits;  // [B, classes], pre-softmax
  Tensor<T> mask_logits;   // [B, 1, S, S], pre-sigmoid
};

template <typename T>
struct DownActivations {
  Tensor<T> mid;     // after conv1 + ReLU
  Tensor<T> out;     // after conv2 + ReLU; skip source for levels above the bottleneck
  PoolCache pool;    // empty at the bottleneck
  Tensor<T> pooled;  // empty at the bottleneck
};

template <typename T>
struct UpActivations {
  Tensor<T> merged;  // transposed-conv output ++ skip
  Tensor<T> mid;
  Tensor<T> out;
};

template <typename T>
struct ForwardCache {
  Tensor<T> input;
  std::vector<DownActivations<T>> down;
  std::vector<Tensor<T>> head;        // post-ReLU head conv outputs
  Tensor<T> flat;                     // [B, flatten_size]
  std::vector<Tensor<T>> fc_hidden;   // post-ReLU hidden FC outputs
  std::vector<UpActivations<T>> up;   // index 0 is the level next to the bottleneck

  const Tensor<T>& bottleneck() const { return down.back().out; }
};

template <typename T>
struct ForwardResult {
  ModelOutput<T> output;
  ForwardCache<T> cache;
};

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const Tensor<T>& input);

// Exact gradient of <grad_class_logits, class_logits> + <grad_mask_logits, mask_logits>.
template <typename T>
ModelParams<T> backward(const ModelParams<T>& params, const ForwardCache<T>& cache,
                        const Tensor<T>& grad_class_logits, const Tensor<T>& grad_mask_logits);

// Parameter-name prefixes by branch, for checks that a branch stays untouched.
bool is_up_path_param(const std::string& name);

}  // namespace wunet
