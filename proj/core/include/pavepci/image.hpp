#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pavepci/tensor.hpp"

namespace pavepci {

// 8-bit RGB raster, rows top to bottom, channels interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool operator==(const Image&) const = default;
};

// PNG or JPEG, detected from the file signature. Grayscale, palette and
// alpha inputs are converted to RGB (alpha composited on black). Throws
// LoadError for missing or undecodable files.
Image read_image(const std::filesystem::path& path);

// Lossless 8-bit RGB PNG. Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const Image& image);

// (1,3,H,W) in [0,1].
Tensor<float> to_tensor(const Image& image);
// Image b of a (B,3,H,W) tensor in [0,1], clamped and rounded.
Image to_image(const Tensor<float>& t, int b = 0);

// Bilinear resampling with half-pixel centres and edge clamping, applied to
// every (b,c) plane.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& t, int height, int width);

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& t);
template <typename T>
Tensor<T> flip_vertical(const Tensor<T>& t);

}  // namespace pavepci
