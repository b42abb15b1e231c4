#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wunet/tensor.hpp"

namespace wunet {

constexpr std::size_t kImageSize = 128;
constexpr int kNumClasses = 4;

// Interleaved 8-bit pixels, row-major, `channels` bytes per pixel (1 or 3).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

// Decodes any PNG libpng understands into 1 (grayscale) or 3 (RGB) channels.
Image8 read_png(const std::filesystem::path& path, std::size_t channels);
void write_png(const std::filesystem::path& path, const Image8& image);

// Bilinear resize with half-pixel centers: output pixel (y, x) samples the
// source at ((y + 0.5) * H / size - 0.5, (x + 0.5) * W / size - 0.5), clamped
// to the image. Values are divided by 255. Returns [3, size, size].
Tensor<float> resize_image(const Image8& rgb, std::size_t size = kImageSize);

// Nearest-neighbour resize (source index floor((i + 0.5) * in / size)), then
// pixel > 127 -> 1. Returns [1, size, size].
Tensor<float> binarize_mask(const Image8& gray, std::size_t size = kImageSize);

// Inverse of the scaling in resize_image for same-size images: round(v * 255).
Image8 image_from_tensor(const Tensor<float>& image);
// 0 -> 0, anything else -> 255, single channel.
Image8 mask_to_png_image(const Tensor<float>& mask);

// Fixed alphabetical class order.
struct ClassMap {
  static constexpr std::array<std::string_view, kNumClasses> kNames{
      "foot_ulcer", "infected_wound", "leg_ulcer", "pressure_ulcer"};

  // Throws a validation error for names outside the set.
  static int index(std::string_view name);
  static std::string_view name(int index);
};

struct Sample {
  Tensor<float> image;  // [3,128,128] in [0,1]
  Tensor<float> mask;   // [1,128,128] in {0,1}
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// CSV with header `image_path,mask_path,class_name`; paths are relative to the
// manifest's directory. The split is left empty.
Dataset load_manifest(const std::filesystem::path& path);

// Per class: shuffle that class's indices, then the first
// lround(count * val_fraction) go to validation, capped so at least one sample
// of every class stays in training. train and val come back sorted.
void split_dataset(Dataset& dataset, double val_fraction, std::uint64_t seed);

// Rotated ellipse, tested at pixel centers (x + 0.5, y + 0.5).
struct Ellipse {
  double cx = 0, cy = 0;
  double rx = 1, ry = 1;  // semi-axes before rotation
  double angle = 0;       // radians
};

// Per-class look of the synthetic set: the blob's hue band and the spatial
// frequency of the background stripes.
struct SynthClassStyle {
  double hue_center;  // degrees
  double stripe_cycles;  // stripe periods across the image width
};
SynthClassStyle synth_class_style(int label);

struct SynthDataset {
  Dataset dataset;
  std::vector<Ellipse> ellipses;  // one per sample
};

// n_per_class samples for each class, ordered by class then index.
SynthDataset synth_generate(std::size_t n_per_class, std::uint64_t seed);

// Writes images/NNNN.png, masks/NNNN.png and manifest.csv under dir.
// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace wunet
