#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "wunet/tensor.hpp"

namespace wunet {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double f1_classification = 0.0;  // macro over classes
  double dice_mean = 0.0;          // mean of per-image Dice
  double precision_seg = 0.0;      // pooled over every pixel
  double recall_seg = 0.0;
  double f1_seg = 0.0;
};

// 1 where prob >= threshold, else 0. Same shape as the input.
template <typename T>
Tensor<T> threshold_mask(const Tensor<T>& prob, double threshold = 0.5);

// Both inputs must hold only 0 and 1.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& truth);

// A zero denominator makes that quantity 0. f1 is evaluated as
// 2tp / (2tp + fp + fn), which equals 2PR/(P+R) whenever P and R are defined.
PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c);

// 2|A and B| / (|A| + |B|); two empty masks score 1.
template <typename T>
double dice(const Tensor<T>& pred, const Tensor<T>& truth);
double dice(const ConfusionCounts& c);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Unweighted mean over classes of one-vs-rest F1.
double macro_f1(std::span<const int> predicted, std::span<const int> truth,
                int num_classes = 4);

std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace wunet
