#include "wunet/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numbers>
#include <sstream>

namespace wunet {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void throw_io(const std::string& msg) { throw Error(ErrorKind::kIo, msg); }

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Splits one CSV record; double quotes may wrap a field and "" escapes a quote.
bool split_csv(const std::string& line, std::vector<std::string>& fields) {
  fields.assign(1, std::string());
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += ch;
      }
    } else if (ch == '"') {
      if (!fields.back().empty()) return false;
      quoted = true;
    } else if (ch == ',') {
      fields.emplace_back();
    } else {
      fields.back() += ch;
    }
  }
  return !quoted;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const int sector = static_cast<int>(h);
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

bool ellipse_contains(const Ellipse& e, double px, double py) {
  const double dx = px - e.cx, dy = py - e.cy;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = dx * c + dy * s, v = -dx * s + dy * c;
  return (u * u) / (e.rx * e.rx) + (v * v) / (e.ry * e.ry) <= 1.0;
}

}  // namespace

Image8 read_png(const fs::path& path, std::size_t channels) {
  if (channels != 1 && channels != 3) throw_invalid("read_png supports 1 or 3 channels");
  if (!fs::exists(path)) throw_io("file not found: " + path.string());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw_io("cannot decode PNG " + path.string() + ": " + img.message);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw_io("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const fs::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw_invalid("write_png supports 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels)
    throw_invalid("write_png: pixel buffer does not match dimensions");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw_io("cannot write PNG " + path.string() + ": " + img.message);
}

Tensor<float> resize_image(const Image8& rgb, std::size_t size) {
  if (rgb.width == 0 || rgb.height == 0 || rgb.pixels.empty()) throw_invalid("resize_image: empty image");
  if (rgb.channels != 3) throw_invalid("resize_image expects 3 channels");
  Tensor<float> out(Shape{3, size, size});
  const double sy = static_cast<double>(rgb.height) / static_cast<double>(size);
  const double sx = static_cast<double>(rgb.width) / static_cast<double>(size);
  const auto clamp_src = [](double v, std::size_t n) {
    return std::clamp(v, 0.0, static_cast<double>(n - 1));
  };
  for (std::size_t y = 0; y < size; ++y) {
    const double fy_src = clamp_src((static_cast<double>(y) + 0.5) * sy - 0.5, rgb.height);
    const std::size_t y0 = static_cast<std::size_t>(fy_src);
    const std::size_t y1 = std::min(y0 + 1, rgb.height - 1);
    const double fy = fy_src - static_cast<double>(y0);
    for (std::size_t x = 0; x < size; ++x) {
      const double fx_src = clamp_src((static_cast<double>(x) + 0.5) * sx - 0.5, rgb.width);
      const std::size_t x0 = static_cast<std::size_t>(fx_src);
      const std::size_t x1 = std::min(x0 + 1, rgb.width - 1);
      const double fx = fx_src - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = rgb.at(y0, x0, c) * (1.0 - fx) + rgb.at(y0, x1, c) * fx;
        const double bot = rgb.at(y1, x0, c) * (1.0 - fx) + rgb.at(y1, x1, c) * fx;
        out[(c * size + y) * size + x] = static_cast<float>((top * (1.0 - fy) + bot * fy) / 255.0);
      }
    }
  }
  return out;
}

Tensor<float> binarize_mask(const Image8& gray, std::size_t size) {
  if (gray.width == 0 || gray.height == 0 || gray.pixels.empty()) throw_invalid("binarize_mask: empty mask");
  if (gray.channels != 1) throw_invalid("binarize_mask expects 1 channel");
  Tensor<float> out(Shape{1, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = std::min(gray.height - 1, (2 * y + 1) * gray.height / (2 * size));
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = std::min(gray.width - 1, (2 * x + 1) * gray.width / (2 * size));
      out[y * size + x] = gray.at(sy, sx, 0) > 127 ? 1.0f : 0.0f;
    }
  }
  return out;
}

Image8 image_from_tensor(const Tensor<float>& image) {
  if (image.shape().rank() != 3 || image.shape()[0] != 3)
    throw_shape("image tensor must be [3,H,W], got " + image.shape().str());
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  Image8 out{w, h, 3, std::vector<std::uint8_t>(w * h * 3)};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i)
      out.pixels[i * 3 + c] = to_byte(static_cast<double>(image[c * h * w + i]) * 255.0);
  return out;
}

Image8 mask_to_png_image(const Tensor<float>& mask) {
  const auto& d = mask.shape().dims();
  if (d.size() < 2) throw_shape("mask tensor must end in [H,W], got " + mask.shape().str());
  const std::size_t h = d[d.size() - 2], w = d[d.size() - 1];
  if (mask.size() != h * w) throw_shape("mask tensor must hold one channel, got " + mask.shape().str());
  Image8 out{w, h, 1, std::vector<std::uint8_t>(w * h)};
  for (std::size_t i = 0; i < h * w; ++i) out.pixels[i] = mask[i] != 0.0f ? 255 : 0;
  return out;
}

int ClassMap::index(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<int>(i);
  throw Error(ErrorKind::kValidation, "unknown class name '" + std::string(name) + "'");
}

std::string_view ClassMap::name(int index) {
  if (index < 0 || index >= kNumClasses) throw_invalid("class index " + std::to_string(index) + " out of range");
  return kNames[static_cast<std::size_t>(index)];
}

Dataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open manifest: " + path.string());
  const fs::path base = path.parent_path();

  struct Row {
    fs::path image, mask;
    int label;
  };
  std::vector<Row> rows;
  std::string line;
  std::vector<std::string> fields;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!header_seen) {
      if (line != "image_path,mask_path,class_name")
        throw Error(ErrorKind::kParse, path.string() + ":1: header must be image_path,mask_path,class_name");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    if (!split_csv(line, fields) || fields.size() != 3 || fields[0].empty() || fields[1].empty())
      throw Error(ErrorKind::kParse, path.string() + ":" + std::to_string(line_no) +
                                         ": expected 3 fields image_path,mask_path,class_name");
    int label;
    try {
      label = ClassMap::index(fields[2]);
    } catch (const Error& e) {
      throw Error(ErrorKind::kValidation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    rows.push_back({base / fields[0], base / fields[1], label});
  }
  if (!header_seen) throw Error(ErrorKind::kParse, path.string() + ": empty manifest");

  Dataset ds;
  ds.samples.resize(rows.size());
  std::vector<std::exception_ptr> errors(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      ds.samples[i].image = resize_image(read_png(rows[i].image, 3));
      ds.samples[i].mask = binarize_mask(read_png(rows[i].mask, 1));
      ds.samples[i].label = rows[i].label;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ds;
}

void split_dataset(Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw_invalid("val_fraction must be in (0,1), got " + std::to_string(val_fraction));
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const int label = dataset.samples[i].label;
    if (label < 0 || label >= kNumClasses) throw_invalid("sample " + std::to_string(i) + " has label out of range");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  Rng rng(seed);
  dataset.train.clear();
  dataset.val.clear();
  for (int k = 0; k < kNumClasses; ++k) {
    auto& idx = by_class[static_cast<std::size_t>(k)];
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw Error(ErrorKind::kValidation, "class " + std::string(ClassMap::name(k)) +
                                              " has 1 sample; a split needs at least 2");
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t n_val = std::min<std::size_t>(
        static_cast<std::size_t>(std::lround(static_cast<double>(idx.size()) * val_fraction)), idx.size() - 1);
    dataset.val.insert(dataset.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    dataset.train.insert(dataset.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(dataset.train.begin(), dataset.train.end());
  std::sort(dataset.val.begin(), dataset.val.end());
}

SynthClassStyle synth_class_style(int label) {
  static constexpr SynthClassStyle kStyles[kNumClasses] = {
      {0.0, 3.0}, {90.0, 6.0}, {180.0, 10.0}, {270.0, 16.0}};
  if (label < 0 || label >= kNumClasses) throw_invalid("class index out of range");
  return kStyles[label];
}

SynthDataset synth_generate(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class < 1) throw_invalid("synth_generate needs n_per_class >= 1");
  constexpr std::size_t S = kImageSize;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  Rng rng(seed);
  SynthDataset out;
  for (int label = 0; label < kNumClasses; ++label) {
    const SynthClassStyle style = synth_class_style(label);
    for (std::size_t n = 0; n < n_per_class; ++n) {
      Ellipse e;
      e.cx = rng.uniform(40.0, 88.0);
      e.cy = rng.uniform(40.0, 88.0);
      e.rx = rng.uniform(14.0, 30.0);
      e.ry = rng.uniform(14.0, 30.0);
      e.angle = rng.uniform(0.0, std::numbers::pi);
      const double hue = style.hue_center + rng.uniform(-12.0, 12.0);
      const double sat = rng.uniform(0.75, 0.95);
      const double val = rng.uniform(0.55, 0.85);
      const double skin = rng.uniform(0.85, 1.0);
      const double stripe_dir = rng.uniform(0.0, std::numbers::pi);
      const double phase = rng.uniform(0.0, kTwoPi);
      const double dir_c = std::cos(stripe_dir), dir_s = std::sin(stripe_dir);

      Image8 img{S, S, 3, std::vector<std::uint8_t>(S * S * 3)};
      Tensor<float> mask(Shape{1, S, S});
      double blob[3];
      hsv_to_rgb(hue, sat, val, blob);
      for (std::size_t y = 0; y < S; ++y) {
        for (std::size_t x = 0; x < S; ++x) {
          const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
          const double noise = rng.uniform(-0.02, 0.02);
          double rgb[3];
          if (ellipse_contains(e, px, py)) {
            mask[y * S + x] = 1.0f;
            for (int c = 0; c < 3; ++c) rgb[c] = blob[c] + noise;
          } else {
            const double t = (px * dir_c + py * dir_s) / static_cast<double>(S);
            const double stripe = 1.0 + 0.12 * std::sin(kTwoPi * style.stripe_cycles * t + phase);
            rgb[0] = 0.80 * skin * stripe + noise;
            rgb[1] = 0.68 * skin * stripe + noise;
            rgb[2] = 0.60 * skin * stripe + noise;
          }
          for (int c = 0; c < 3; ++c) img.pixels[(y * S + x) * 3 + c] = to_byte(rgb[c] * 255.0);
        }
      }
      out.dataset.samples.push_back({resize_image(img), std::move(mask), label});
      out.ellipses.push_back(e);
    }
  }
  return out;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (!ec) fs::create_directories(dir / "masks", ec);
  if (ec) throw_io("cannot create dataset directory " + dir.string() + ": " + ec.message());
  const fs::path manifest = dir / "manifest.csv";
  std::ostringstream csv;
  csv << "image_path,mask_path,class_name\n";
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "%04zu.png", i);
    const std::string image_rel = std::string("images/") + name;
    const std::string mask_rel = std::string("masks/") + name;
    write_png(dir / image_rel, image_from_tensor(s.image));
    write_png(dir / mask_rel, mask_to_png_image(s.mask));
    csv << csv_field(image_rel) << ',' << csv_field(mask_rel) << ',' << ClassMap::name(s.label) << '\n';
  }
  std::ofstream f(manifest, std::ios::binary | std::ios::trunc);
  if (!f) throw_io("cannot write manifest " + manifest.string());
  f << csv.str();
  if (!f.flush()) throw_io("cannot write manifest " + manifest.string());
  return manifest;
}

}  // namespace wunet
