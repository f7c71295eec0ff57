#pragma once

// Minimal raster drawing for figures: filled rectangles, lines, markers,
// a 5x7 bitmap font and the jet colormap. Everything is integer pixel
// arithmetic, so output is identical across runs and platforms.

#include <cstdint>
#include <string>

#include "pavepci/image.hpp"

namespace pavepci {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};
inline constexpr Rgb kGray{150, 150, 150};
inline constexpr Rgb kLightGray{225, 225, 225};
inline constexpr Rgb kBlue{31, 90, 200};
inline constexpr Rgb kRed{210, 40, 40};

// Jet: 0 -> dark blue, 0.5 -> green, 1 -> dark red. t is clamped to [0,1]
// and NaN maps to 0.
Rgb jet(double t);

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = kWhite);

  int width() const { return image_.width; }
  int height() const { return image_.height; }
  const Image& image() const { return image_; }

  // Out-of-bounds pixels are ignored by every drawing call.
  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void fill_rect(int x, int y, int w, int h, Rgb c);
  void rect(int x, int y, int w, int h, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  // Draws only every other run of `dash` pixels.
  void dashed_line(int x0, int y0, int x1, int y1, Rgb c, int dash = 4);
  void marker(int cx, int cy, int radius, Rgb c);
  // 5x7 glyphs on a 6x8 cell, scaled by an integer factor. Characters
  // outside printable ASCII render as '?'.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
  void blit(const Image& src, int x, int y);

  static int text_width(const std::string& s, int scale = 1) {
    return static_cast<int>(s.size()) * 6 * scale;
  }
  static int text_height(int scale = 1) { return 8 * scale; }

 private:
  Image image_;
};

// Resamples an RGB image with the bilinear kernel used for tensors.
Image resize_image(const Image& image, int width, int height);

}  // namespace pavepci
