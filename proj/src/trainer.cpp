#include "wunet/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace wunet {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void throw_parse(const std::string& msg) { throw Error(ErrorKind::kParse, msg); }
[[noreturn]] void throw_ckpt(const std::string& msg) {
  throw Error(ErrorKind::kCheckpoint, "checkpoint error: " + msg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw_parse("config: " + key + " = '" + v + "' is not a number");
  }
  if (used != v.size() || !std::isfinite(d)) throw_parse("config: " + key + " = '" + v + "' is not a number");
  return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw_parse("config: " + key + " = '" + v + "' is not a non-negative integer");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw_parse("config: " + key + " = '" + v + "' is out of range");
  }
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) throw_ckpt(std::string("file truncated while reading ") + what);
  }
  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  std::string str(const char* what, std::size_t max_len) {
    const auto n = le<std::uint32_t>(what);
    if (n > max_len) throw_ckpt(std::string(what) + " length " + std::to_string(n) + " is implausible");
    return raw(n, what);
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

void write_tensors(Writer& w, const std::vector<std::string>& names, const std::vector<Tensor<float>>& ts) {
  w.le(static_cast<std::uint32_t>(ts.size()));
  for (std::size_t i = 0; i < ts.size(); ++i) {
    w.str(names[i]);
    const auto& dims = ts[i].shape().dims();
    w.le(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.le(static_cast<std::uint32_t>(d));
    for (float v : ts[i].values()) w.f32(v);
  }
}

[[noreturn]] void throw_arch(const std::string& msg) {
  throw Error(ErrorKind::kShape, "shape error: " + msg);
}

std::vector<Tensor<float>> read_tensors(Reader& r, const std::vector<ParamSpec>& manifest,
                                        const char* section) {
  const auto count = r.le<std::uint32_t>(section);
  std::vector<Tensor<float>> out;
  out.reserve(manifest.size());
  for (const auto& spec : manifest) {
    if (out.size() == count)
      throw_arch(std::string(section) + " holds " + std::to_string(count) + " tensors; architecture expects " +
                 std::to_string(manifest.size()) + ", starting with missing tensor " + spec.name);
    const std::string name = r.str("tensor name", 4096);
    if (name != spec.name)
      throw_arch(std::string(section) + ": checkpoint tensor " + name + " found where architecture expects " +
                 spec.name);
    const auto rank = r.le<std::uint32_t>("tensor rank");
    if (rank < 1 || rank > 4) throw_ckpt("tensor " + name + " has rank " + std::to_string(rank));
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("tensor dims");
    if (dims != spec.shape.dims()) {
      std::string got = "[";
      for (std::size_t i = 0; i < dims.size(); ++i) got += (i ? "," : "") + std::to_string(dims[i]);
      throw_arch("checkpoint tensor " + name + " is " + got + "], architecture expects " + spec.shape.str());
    }
    Tensor<float> t(spec.shape);
    r.need(t.size() * 4, "tensor values");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f32("tensor values");
    out.push_back(std::move(t));
  }
  if (count > manifest.size()) {
    const std::string extra = r.str("tensor name", 4096);
    throw_arch(std::string(section) + " holds " + std::to_string(count) + " tensors; architecture expects " +
               std::to_string(manifest.size()) + ", first extra tensor " + extra);
  }
  return out;
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void softmax_row(const float* logits, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  double mx = logits[0];
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, static_cast<double>(logits[c]));
  double z = 0.0;
  for (std::size_t c = 0; c < n; ++c) z += out[c] = std::exp(static_cast<double>(logits[c]) - mx);
  for (auto& p : out) p /= z;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw_invalid("epochs must be >= 1");
  if (batch_size < 1) throw_invalid("batch_size must be >= 1");
  if (!(lr > 0.0)) throw_invalid("lr must be > 0");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw_invalid("val_fraction must be in (0,1)");
  if (!(threshold > 0.0 && threshold < 1.0)) throw_invalid("threshold must be in (0,1)");
  if (checkpoint_path.empty()) throw_invalid("checkpoint_path must not be empty");
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw_parse(where + "expected key = value");
    const std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (value.empty()) throw_parse(where + "missing value for " + key);
    if (!seen.emplace(key, line_no).second) throw_parse(where + "duplicate key " + key);
    if (key == "epochs")
      c.epochs = parse_uint(key, value);
    else if (key == "batch_size")
      c.batch_size = parse_uint(key, value);
    else if (key == "lr")
      c.lr = parse_double(key, value);
    else if (key == "seed")
      c.seed = parse_uint(key, value);
    else if (key == "val_fraction")
      c.val_fraction = parse_double(key, value);
    else if (key == "threshold")
      c.threshold = parse_double(key, value);
    else if (key == "checkpoint_path")
      c.checkpoint_path = value;
    else
      throw_parse(where + "unknown key " + key);
  }
  c.validate();
  return c;
}

TrainConfig load_config(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "epochs = " << c.epochs << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "lr = " << format_double(c.lr) << '\n'
    << "seed = " << c.seed << '\n'
    << "val_fraction = " << format_double(c.val_fraction) << '\n'
    << "threshold = " << format_double(c.threshold) << '\n'
    << "checkpoint_path = " << c.checkpoint_path << '\n';
  return o.str();
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto& p = ckpt.params;
  if (ckpt.adam.m.size() != p.count() || ckpt.adam.v.size() != p.count())
    throw_invalid("checkpoint Adam state does not match the parameters");
  Writer w;
  w.bytes("WUNT", 4);
  w.le(kCheckpointVersion);
  w.str(config_to_text(ckpt.config));
  w.le(ckpt.epoch);
  w.f64(ckpt.best_loss);
  w.le(static_cast<std::uint64_t>(ckpt.adam.step));
  w.f64(ckpt.adam.config.lr);
  w.f64(ckpt.adam.config.beta1);
  w.f64(ckpt.adam.config.beta2);
  w.f64(ckpt.adam.config.epsilon);
  write_tensors(w, p.names, p.tensors);
  write_tensors(w, p.names, ckpt.adam.m);
  write_tensors(w, p.names, ckpt.adam.v);

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out.flush()) throw Error(ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path, const ArchConfig& arch) {
  Reader r(read_file(path));
  if (r.raw(4, "magic") != "WUNT") throw_ckpt(path.string() + " is not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw_ckpt("unsupported version " + std::to_string(version) + " in " + path.string());
  Checkpoint c;
  try {
    c.config = parse_config(r.str("config", 1 << 16));
  } catch (const Error& e) {
    throw_ckpt(std::string("stored config is invalid: ") + e.what());
  }
  c.epoch = r.le<std::uint32_t>("epoch");
  c.best_loss = r.f64("best loss");
  c.adam.step = r.le<std::uint64_t>("optimizer step");
  c.adam.config.lr = r.f64("optimizer config");
  c.adam.config.beta1 = r.f64("optimizer config");
  c.adam.config.beta2 = r.f64("optimizer config");
  c.adam.config.epsilon = r.f64("optimizer config");

  const auto manifest = param_manifest(arch);
  c.params.arch = arch;
  for (const auto& spec : manifest) c.params.names.push_back(spec.name);
  c.params.tensors = read_tensors(r, manifest, "parameters");
  c.adam.m = read_tensors(r, manifest, "first moments");
  c.adam.v = read_tensors(r, manifest, "second moments");
  if (!r.at_end()) throw_ckpt("trailing bytes after the last tensor in " + path.string());
  return c;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,cls_loss,seg_loss,total_loss,seconds\n";
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.3f\n", e.epoch, e.cls_loss, e.seg_loss,
                  e.total_loss, e.seconds);
    out += buf;
  }
  return out;
}

Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw_invalid("empty batch");
  const Shape& is = dataset.samples.at(indices[0]).image.shape();
  const Shape& ms = dataset.samples.at(indices[0]).mask.shape();
  const std::size_t b = indices.size();
  Batch batch{Tensor<float>(Shape{b, is[0], is[1], is[2]}), Tensor<float>(Shape{b, ms[0], ms[1], ms[2]}), {}};
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = dataset.samples.at(indices[i]);
    if (s.image.shape() != is || s.mask.shape() != ms) throw_shape("samples in one batch differ in shape");
    std::copy(s.image.data(), s.image.data() + s.image.size(), batch.images.data() + i * s.image.size());
    std::copy(s.mask.data(), s.mask.data() + s.mask.size(), batch.masks.data() + i * s.mask.size());
    batch.labels.push_back(s.label);
  }
  return batch;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.train.empty()) throw_invalid("training split is empty");
  for (auto i : dataset.train)
    if (i >= dataset.samples.size()) throw_invalid("training split index out of range");

  ModelParams<float> params = build_model<float>(config.seed, options.arch);
  AdamConfig adam_config;
  adam_config.lr = config.lr;
  AdamState<float> adam = adam_init(params.tensors, adam_config);
  std::uint64_t shuffle_state = config.seed ^ 0x5f0e1d2c3b4a6978ULL;
  Rng shuffle_rng(splitmix64(shuffle_state));

  TrainResult result;
  bool have_best = false;
  std::vector<std::size_t> order = dataset.train;
  const double n_train = static_cast<double>(order.size());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double cls_sum = 0.0, seg_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch batch = make_batch(dataset, idx);
      auto fwd = forward(params, batch.images);
      const auto ce = cross_entropy(fwd.output.class_logits, std::span<const int>(batch.labels));
      auto bce = bce_with_logits(fwd.output.mask_logits, batch.masks);
      if (!std::isfinite(ce.loss) || !std::isfinite(bce.loss))
        throw Error(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                             std::to_string(batch_no + 1) + " (cls " +
                                             format_double(ce.loss) + ", seg " + format_double(bce.loss) + ")");
      if (options.seg_weight != 1.0)
        for (auto& g : bce.grad.values()) g = static_cast<float>(g * options.seg_weight);
      const auto grads = backward(params, fwd.cache, ce.grad, bce.grad);
      adam_step(params.tensors, grads.tensors, adam);
      const double nb = static_cast<double>(idx.size());
      cls_sum += ce.loss * nb;
      seg_sum += bce.loss * nb;
    }
    for (std::size_t i = 0; i < params.count(); ++i)
      if (!params.tensors[i].all_finite())
        throw Error(ErrorKind::kNumeric, "parameter " + params.names[i] + " became non-finite in epoch " +
                                             std::to_string(epoch));

    EpochLog e;
    e.epoch = epoch;
    e.cls_loss = cls_sum / n_train;
    e.seg_loss = seg_sum / n_train;
    e.total_loss = total_loss(e.cls_loss, e.seg_loss);
    if (!have_best || e.total_loss < result.best.best_loss) {
      have_best = true;
      result.best.config = config;
      result.best.epoch = static_cast<std::uint32_t>(epoch);
      result.best.best_loss = e.total_loss;
      result.best.params = params;
      result.best.adam = adam;
      if (options.write_checkpoint) save_checkpoint(result.best, config.checkpoint_path);
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(e);
    if (options.on_epoch) options.on_epoch(e);
  }
  return result;
}

std::vector<Prediction> infer(const ModelParams<float>& params, const Tensor<float>& images,
                              double threshold) {
  const auto fwd = forward(params, images);
  const auto& logits = fwd.output.class_logits;
  const auto& mask_logits = fwd.output.mask_logits;
  const std::size_t b = logits.shape()[0], classes = logits.shape()[1];
  const std::size_t pixels = mask_logits.size() / b;
  const Shape mask_shape{1, mask_logits.shape()[2], mask_logits.shape()[3]};
  std::vector<Prediction> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    softmax_row(logits.data() + i * classes, classes, out[i].probabilities);
    out[i].label = static_cast<int>(std::max_element(out[i].probabilities.begin(), out[i].probabilities.end()) -
                                    out[i].probabilities.begin());
    Tensor<float> prob(mask_shape);
    for (std::size_t p = 0; p < pixels; ++p) {
      const double x = mask_logits[i * pixels + p];
      prob[p] = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
    }
    out[i].mask = threshold_mask(prob, threshold);
  }
  return out;
}

namespace {

template <typename F>
void for_each_chunk(const std::vector<std::size_t>& indices, F&& f) {
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    f(std::vector<std::size_t>(indices.begin() + static_cast<std::ptrdiff_t>(start),
                               indices.begin() + static_cast<std::ptrdiff_t>(end)));
  }
}

}  // namespace

MetricsReport evaluate(const ModelParams<float>& params, const Dataset& dataset,
                       const std::vector<std::size_t>& indices, double threshold) {
  if (indices.empty()) throw_invalid("cannot evaluate an empty split");
  std::vector<int> predicted, truth;
  ConfusionCounts pooled;
  double dice_sum = 0.0;
  for_each_chunk(indices, [&](const std::vector<std::size_t>& idx) {
    const Batch batch = make_batch(dataset, idx);
    const auto preds = infer(params, batch.images, threshold);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      predicted.push_back(preds[i].label);
      truth.push_back(batch.labels[i]);
      const ConfusionCounts c = confusion(preds[i].mask, dataset.samples[idx[i]].mask);
      pooled += c;
      dice_sum += dice(c);
    }
  });
  MetricsReport r;
  r.accuracy = accuracy(predicted, truth);
  r.f1_classification = macro_f1(predicted, truth, static_cast<int>(params.arch.num_classes));
  r.dice_mean = dice_sum / static_cast<double>(indices.size());
  const auto prf = precision_recall_f1(pooled);
  r.precision_seg = prf.precision;
  r.recall_seg = prf.recall;
  r.f1_seg = prf.f1;
  return r;
}

Prediction predict_image(const ModelParams<float>& params, const fs::path& image, double threshold) {
  const std::size_t s = params.arch.input_size;
  Tensor<float> img = resize_image(read_png(image, 3), s);
  auto preds = infer(params, std::move(img).reshaped(Shape{1, 3, s, s}), threshold);
  return std::move(preds[0]);
}

LossValue dataset_loss(const ModelParams<float>& params, const Dataset& dataset,
                       const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw_invalid("cannot compute the loss of an empty split");
  double cls = 0.0, seg = 0.0;
  for_each_chunk(indices, [&](const std::vector<std::size_t>& idx) {
    const Batch batch = make_batch(dataset, idx);
    const auto fwd = forward(params, batch.images);
    const double nb = static_cast<double>(idx.size());
    cls += cross_entropy(fwd.output.class_logits, std::span<const int>(batch.labels)).loss * nb;
    seg += bce_with_logits(fwd.output.mask_logits, batch.masks).loss * nb;
  });
  const double n = static_cast<double>(indices.size());
  return make_loss_value(cls / n, seg / n);
}

}  // namespace wunet
