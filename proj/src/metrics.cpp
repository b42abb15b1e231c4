#include "wunet/metrics.hpp"

#include <json.hpp>

#include <vector>

namespace wunet {

namespace {

template <typename T>
bool as_bit(T v, const char* what, std::size_t i) {
  if (v == T{0}) return false;
  if (v == T{1}) return true;
  throw_invalid(std::string(what) + " must be binary, found " + std::to_string(v) +
                " at index " + std::to_string(i));
}

void check_labels(std::span<const int> predicted, std::span<const int> truth, const char* op) {
  if (predicted.size() != truth.size())
    throw_shape(std::string(op) + ": " + std::to_string(predicted.size()) +
                " predictions for " + std::to_string(truth.size()) + " labels");
  if (predicted.empty()) throw_invalid(std::string(op) + " of an empty label set");
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

template <typename T>
Tensor<T> threshold_mask(const Tensor<T>& prob, double threshold) {
  Tensor<T> out(prob.shape());
  for (std::size_t i = 0; i < prob.size(); ++i)
    out[i] = static_cast<double>(prob[i]) >= threshold ? T{1} : T{0};
  return out;
}

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& truth) {
  if (pred.shape() != truth.shape())
    throw_shape("prediction " + pred.shape().str() + " vs truth " + truth.shape().str());
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = as_bit(pred[i], "prediction", i);
    const bool t = as_bit(truth[i], "truth", i);
    if (p && t)
      ++c.tp;
    else if (p)
      ++c.fp;
    else if (t)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

PrecisionRecallF1 precision_recall_f1(const ConfusionCounts& c) {
  return {ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn),
          ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)};
}

double dice(const ConfusionCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : ratio(2 * c.tp, den);
}

template <typename T>
double dice(const Tensor<T>& pred, const Tensor<T>& truth) {
  return dice(confusion(pred, truth));
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  check_labels(predicted, truth, "accuracy");
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return ratio(correct, truth.size());
}

double macro_f1(std::span<const int> predicted, std::span<const int> truth, int num_classes) {
  check_labels(predicted, truth, "macro_f1");
  if (num_classes < 1) throw_invalid("macro_f1 needs at least one class");
  std::vector<ConfusionCounts> per(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int k = 0; k < num_classes; ++k) {
      const bool p = predicted[i] == k, t = truth[i] == k;
      auto& c = per[static_cast<std::size_t>(k)];
      if (p && t)
        ++c.tp;
      else if (p)
        ++c.fp;
      else if (t)
        ++c.fn;
      else
        ++c.tn;
    }
  }
  double sum = 0.0;
  for (const auto& c : per) sum += precision_recall_f1(c).f1;
  return sum / num_classes;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["f1_classification"] = r.f1_classification;
  j["dice_mean"] = r.dice_mean;
  j["precision_seg"] = r.precision_seg;
  j["recall_seg"] = r.recall_seg;
  j["f1_seg"] = r.f1_seg;
  return j.dump(2);
}

MetricsReport metrics_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    MetricsReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.f1_classification = j.at("f1_classification").get<double>();
    r.dice_mean = j.at("dice_mean").get<double>();
    r.precision_seg = j.at("precision_seg").get<double>();
    r.recall_seg = j.at("recall_seg").get<double>();
    r.f1_seg = j.at("f1_seg").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, std::string("metrics JSON: ") + e.what());
  }
}

template Tensor<float> threshold_mask(const Tensor<float>&, double);
template Tensor<double> threshold_mask(const Tensor<double>&, double);
template ConfusionCounts confusion(const Tensor<float>&, const Tensor<float>&);
template ConfusionCounts confusion(const Tensor<double>&, const Tensor<double>&);
template double dice(const Tensor<float>&, const Tensor<float>&);
template double dice(const Tensor<double>&, const Tensor<double>&);

}  // namespace wunet
