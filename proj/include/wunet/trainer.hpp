#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wunet/data.hpp"
#include "wunet/layers.hpp"
#include "wunet/loss.hpp"
#include "wunet/metrics.hpp"
#include "wunet/model.hpp"

namespace wunet {

struct TrainConfig {
  std::size_t epochs = 500;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  double threshold = 0.5;
  std::string checkpoint_path = "model.wunt";

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// `key = value` lines; blank lines and lines starting with '#' are skipped.
// Unknown, duplicate or malformed keys are parse errors. Missing keys keep
// their defaults.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_to_text(const TrainConfig& config);

constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::uint32_t epoch = 0;  // 1-based epoch whose parameters are stored
  double best_loss = 0.0;
  ModelParams<float> params;
  AdamState<float> adam;
};

// Little-endian layout:
//   "WUNT", u32 version, u32 len + config text, u32 epoch, f64 best_loss,
//   u64 adam step, f64 lr, beta1, beta2, epsilon,
//   three tensor sections (params, adam m, adam v), each
//     u32 count, then per tensor: u32 len + name, u32 rank, u32 dims[rank],
//     f32 values.
// The file is written to a temporary sibling and renamed into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Validates every tensor name and shape against param_manifest(arch).
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ArchConfig& arch = ArchConfig::standard());

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double cls_loss = 0.0;
  double seg_loss = 0.0;
  double total_loss = 0.0;
  double seconds = 0.0;
};

// Header `epoch,cls_loss,seg_loss,total_loss,seconds`; losses are printed
// with 17 significant digits so the file pins every bit.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

struct TrainOptions {
  ArchConfig arch = ArchConfig::standard();
  // Multiplies the segmentation term of the objective; only used to isolate
  // the classification path in tests. Logged losses stay unweighted.
  double seg_weight = 1.0;
  bool write_checkpoint = true;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

// Mini-batch Adam on dataset.train, shuffled every epoch from the config seed.
// The checkpoint is overwritten whenever an epoch's mean total loss beats the
// best so far.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const TrainOptions& options = {});

// Stacks samples[indices] into [B,3,S,S] images, [B,1,S,S] masks and labels.
struct Batch {
  Tensor<float> images;
  Tensor<float> masks;
  std::vector<int> labels;
};
Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;  // softmax over classes
  Tensor<float> mask;                 // [1,S,S], 0/1
};

// Forward pass, softmax/argmax over class logits, sigmoid then threshold on
// mask logits. images is [B,3,S,S]. Used by both evaluate and predict.
std::vector<Prediction> infer(const ModelParams<float>& params, const Tensor<float>& images,
                              double threshold);

// Runs infer on samples[indices] and aggregates the six metrics.
MetricsReport evaluate(const ModelParams<float>& params, const Dataset& dataset,
                       const std::vector<std::size_t>& indices, double threshold);

// Reads a PNG, resizes it like the training data, and runs infer.
Prediction predict_image(const ModelParams<float>& params, const std::filesystem::path& image,
                         double threshold);

// Mean classification and segmentation loss of samples[indices].
LossValue dataset_loss(const ModelParams<float>& params, const Dataset& dataset,
                       const std::vector<std::size_t>& indices);

}  // namespace wunet
