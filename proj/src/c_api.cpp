#include "wunet/wunet.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <string>

#include "wunet/data.hpp"
#include "wunet/gradcheck.hpp"
#include "wunet/trainer.hpp"

struct wunet_config {
  wunet::TrainConfig value;
};

struct wunet_dataset {
  wunet::Dataset value;
};

struct wunet_model {
  wunet::Checkpoint value;
};

struct wunet_gradcheck_report {
  wunet::GradcheckReport value;
};

namespace {

thread_local std::string g_last_error;

wunet_status status_of(wunet::ErrorKind kind) {
  switch (kind) {
    case wunet::ErrorKind::kShape: return WUNET_ERR_SHAPE;
    case wunet::ErrorKind::kInvalidArgument: return WUNET_ERR_INVALID_ARGUMENT;
    case wunet::ErrorKind::kIo: return WUNET_ERR_IO;
    case wunet::ErrorKind::kParse: return WUNET_ERR_PARSE;
    case wunet::ErrorKind::kValidation: return WUNET_ERR_VALIDATION;
    case wunet::ErrorKind::kCheckpoint: return WUNET_ERR_CHECKPOINT;
    case wunet::ErrorKind::kNumeric: return WUNET_ERR_NUMERIC;
  }
  return WUNET_ERR_INTERNAL;
}

wunet_status fail(wunet_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <typename F>
wunet_status guard(F&& f) {
  try {
    f();
    return WUNET_OK;
  } catch (const wunet::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(WUNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(WUNET_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(WUNET_ERR_INTERNAL, "unknown error");
  }
}

#define WUNET_REQUIRE(ptr)                                                           \
  do {                                                                              \
    if (!(ptr)) return fail(WUNET_ERR_INVALID_ARGUMENT, #ptr " must not be NULL"); \
  } while (0)

wunet_status copy_string(const std::string& s, char* buf, std::size_t capacity, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return WUNET_OK;
  if (capacity < s.size() + 1)
    return fail(WUNET_ERR_INVALID_ARGUMENT, "buffer of " + std::to_string(capacity) +
                                                " bytes is too small, need " + std::to_string(s.size() + 1));
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return WUNET_OK;
}

const std::vector<std::size_t>& split_indices(const wunet::Dataset& d, wunet_split split) {
  return split == WUNET_SPLIT_TRAIN ? d.train : d.val;
}

struct PerturbationScope {
  explicit PerturbationScope(bool on) : on_(on) {
    if (on_) wunet::testing::set_conv_backward_perturbation(1e-3);
  }
  ~PerturbationScope() {
    if (on_) wunet::testing::set_conv_backward_perturbation(0.0);
  }
  bool on_;
};

}  // namespace

extern "C" {

const char* wunet_last_error(void) { return g_last_error.c_str(); }

const char* wunet_status_name(wunet_status status) {
  switch (status) {
    case WUNET_OK: return "ok";
    case WUNET_ERR_INVALID_ARGUMENT: return "invalid argument";
    case WUNET_ERR_SHAPE: return "shape error";
    case WUNET_ERR_IO: return "I/O error";
    case WUNET_ERR_PARSE: return "parse error";
    case WUNET_ERR_VALIDATION: return "validation error";
    case WUNET_ERR_CHECKPOINT: return "checkpoint error";
    case WUNET_ERR_NUMERIC: return "numeric error";
    case WUNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* wunet_version(void) { return "1.0.0"; }

wunet_status wunet_config_default(wunet_config** out) {
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_config{}; });
}

wunet_status wunet_config_load(const char* path, wunet_config** out) {
  WUNET_REQUIRE(path);
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_config{wunet::load_config(path)}; });
}

wunet_status wunet_config_parse(const char* text, wunet_config** out) {
  WUNET_REQUIRE(text);
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_config{wunet::parse_config(text)}; });
}

void wunet_config_free(wunet_config* config) { delete config; }

wunet_status wunet_config_get(const wunet_config* config, wunet_config_values* out) {
  WUNET_REQUIRE(config);
  WUNET_REQUIRE(out);
  const auto& c = config->value;
  *out = {c.epochs, c.batch_size, c.lr, c.seed, c.val_fraction, c.threshold};
  return WUNET_OK;
}

wunet_status wunet_config_set_checkpoint_path(wunet_config* config, const char* path) {
  WUNET_REQUIRE(config);
  WUNET_REQUIRE(path);
  if (!*path) return fail(WUNET_ERR_INVALID_ARGUMENT, "checkpoint path must not be empty");
  return guard([&] { config->value.checkpoint_path = path; });
}

wunet_status wunet_config_get_checkpoint_path(const wunet_config* config, char* buf, size_t capacity,
                                              size_t* needed) {
  WUNET_REQUIRE(config);
  return copy_string(config->value.checkpoint_path, buf, capacity, needed);
}

wunet_status wunet_dataset_load(const char* manifest_path, wunet_dataset** out) {
  WUNET_REQUIRE(manifest_path);
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_dataset{wunet::load_manifest(manifest_path)}; });
}

wunet_status wunet_dataset_synth(size_t n_per_class, uint64_t seed, wunet_dataset** out) {
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_dataset{wunet::synth_generate(n_per_class, seed).dataset}; });
}

wunet_status wunet_dataset_save(const wunet_dataset* dataset, const char* dir) {
  WUNET_REQUIRE(dataset);
  WUNET_REQUIRE(dir);
  return guard([&] { wunet::save_dataset(dataset->value, dir); });
}

wunet_status wunet_dataset_split(wunet_dataset* dataset, double val_fraction, uint64_t seed) {
  WUNET_REQUIRE(dataset);
  return guard([&] { wunet::split_dataset(dataset->value, val_fraction, seed); });
}

wunet_status wunet_dataset_sizes(const wunet_dataset* dataset, size_t* total, size_t* train, size_t* val) {
  WUNET_REQUIRE(dataset);
  if (total) *total = dataset->value.samples.size();
  if (train) *train = dataset->value.train.size();
  if (val) *val = dataset->value.val.size();
  return WUNET_OK;
}

void wunet_dataset_free(wunet_dataset* dataset) { delete dataset; }

wunet_status wunet_train(const wunet_config* config, const wunet_dataset* dataset, const char* csv_path,
                         wunet_epoch_callback callback, void* user, wunet_train_summary* summary) {
  WUNET_REQUIRE(config);
  WUNET_REQUIRE(dataset);
  return guard([&] {
    wunet::TrainOptions options;
    if (callback)
      options.on_epoch = [&](const wunet::EpochLog& e) {
        const wunet_epoch_log log{e.epoch, e.cls_loss, e.seg_loss, e.total_loss, e.seconds};
        callback(&log, user);
      };
    const auto result = wunet::train(config->value, dataset->value, options);
    if (csv_path) {
      std::ofstream f(csv_path, std::ios::binary | std::ios::trunc);
      f << wunet::epoch_log_csv(result.log);
      if (!f.flush()) throw wunet::Error(wunet::ErrorKind::kIo, std::string("cannot write ") + csv_path);
    }
    if (summary) *summary = {result.log.size(), result.best.epoch, result.best.best_loss};
  });
}

wunet_status wunet_model_load(const char* checkpoint_path, wunet_model** out) {
  WUNET_REQUIRE(checkpoint_path);
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_model{wunet::load_checkpoint(checkpoint_path)}; });
}

wunet_status wunet_model_config(const wunet_model* model, wunet_config** out) {
  WUNET_REQUIRE(model);
  WUNET_REQUIRE(out);
  return guard([&] { *out = new wunet_config{model->value.config}; });
}

void wunet_model_free(wunet_model* model) { delete model; }

wunet_status wunet_evaluate(const wunet_model* model, const wunet_dataset* dataset, wunet_split split,
                            double threshold, wunet_metrics* out) {
  WUNET_REQUIRE(model);
  WUNET_REQUIRE(dataset);
  WUNET_REQUIRE(out);
  if (split != WUNET_SPLIT_TRAIN && split != WUNET_SPLIT_VAL)
    return fail(WUNET_ERR_INVALID_ARGUMENT, "unknown split");
  if (!(threshold > 0.0 && threshold < 1.0))
    return fail(WUNET_ERR_INVALID_ARGUMENT, "threshold must be in (0,1)");
  return guard([&] {
    const auto& idx = split_indices(dataset->value, split);
    if (idx.empty())
      throw wunet::Error(wunet::ErrorKind::kValidation,
                         std::string("the ") + (split == WUNET_SPLIT_TRAIN ? "train" : "val") + " split is empty");
    const auto r = wunet::evaluate(model->value.params, dataset->value, idx, threshold);
    *out = {r.accuracy, r.f1_classification, r.dice_mean, r.precision_seg, r.recall_seg, r.f1_seg};
  });
}

wunet_status wunet_metrics_to_json(const wunet_metrics* m, char* buf, size_t capacity, size_t* needed) {
  WUNET_REQUIRE(m);
  std::string json;
  const wunet_status s = guard([&] {
    json = wunet::to_json({m->accuracy, m->f1_classification, m->dice_mean, m->precision_seg, m->recall_seg,
                           m->f1_seg});
  });
  if (s != WUNET_OK) return s;
  return copy_string(json, buf, capacity, needed);
}

wunet_status wunet_predict(const wunet_model* model, const char* image_path, double threshold,
                           const char* mask_path, wunet_prediction* out) {
  WUNET_REQUIRE(model);
  WUNET_REQUIRE(image_path);
  WUNET_REQUIRE(mask_path);
  WUNET_REQUIRE(out);
  if (!(threshold > 0.0 && threshold < 1.0))
    return fail(WUNET_ERR_INVALID_ARGUMENT, "threshold must be in (0,1)");
  return guard([&] {
    const auto p = wunet::predict_image(model->value.params, image_path, threshold);
    wunet::write_png(mask_path, wunet::mask_to_png_image(p.mask));
    out->label = p.label;
    out->label_name = wunet::ClassMap::kNames[static_cast<std::size_t>(p.label)].data();
    for (std::size_t i = 0; i < WUNET_NUM_CLASSES; ++i) out->probabilities[i] = p.probabilities.at(i);
  });
}

const char* wunet_class_name(int label) {
  if (label < 0 || label >= WUNET_NUM_CLASSES) return nullptr;
  return wunet::ClassMap::kNames[static_cast<std::size_t>(label)].data();
}

wunet_status wunet_gradcheck_run(uint64_t seed, int flags, wunet_gradcheck_report** out) {
  WUNET_REQUIRE(out);
  return guard([&] {
    wunet::GradcheckOptions options;
    options.seed = seed;
    options.include_network = (flags & WUNET_GRADCHECK_LAYERS_ONLY) == 0;
    PerturbationScope scope((flags & WUNET_GRADCHECK_PERTURB_CONV) != 0);
    *out = new wunet_gradcheck_report{wunet::run_gradcheck(options)};
  });
}

size_t wunet_gradcheck_count(const wunet_gradcheck_report* report) {
  return report ? report->value.entries.size() : 0;
}

wunet_status wunet_gradcheck_entry_at(const wunet_gradcheck_report* report, size_t index,
                                      wunet_gradcheck_entry* out) {
  WUNET_REQUIRE(report);
  WUNET_REQUIRE(out);
  if (index >= report->value.entries.size())
    return fail(WUNET_ERR_INVALID_ARGUMENT, "gradcheck entry index out of range");
  const auto& e = report->value.entries[index];
  *out = {e.name.c_str(), e.max_rel_error, e.tolerance, e.coordinates, e.skipped, e.passed() ? 1 : 0};
  return WUNET_OK;
}

int wunet_gradcheck_passed(const wunet_gradcheck_report* report) {
  return report && report->value.passed() ? 1 : 0;
}

void wunet_gradcheck_free(wunet_gradcheck_report* report) { delete report; }

}  // extern "C"
