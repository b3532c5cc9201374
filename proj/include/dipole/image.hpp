#pragma once

#include "dipole/util.hpp"

namespace dipole {

// Linear-light RGB image, row-major from the top-left.
struct Image {
  int width = 0, height = 0;
  std::vector<Vec3> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, Vec3::Zero()) {}
  Vec3& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Vec3& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// 8-bit PNG with sRGB encoding on save and decoding on load; values are
// clamped to [0,1] before quantization.
void save_png(const Image& image, const std::string& path);
Image load_png(const std::string& path);

// Portable float map (PF, little-endian, bottom-up rows): lossless storage
// for loss-side comparisons.
void save_pfm(const Image& image, const std::string& path);
Image load_pfm(const std::string& path);

double srgb_encode(double linear);
double srgb_decode(double encoded);

// Mean absolute difference over all pixels and channels.
double image_l1(const Image& a, const Image& b);

}  // namespace dipole
