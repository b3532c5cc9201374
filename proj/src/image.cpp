#include "dipole/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dipole {

double srgb_encode(double linear) {
  double v = std::clamp(linear, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double srgb_decode(double encoded) {
  double v = std::clamp(encoded, 0.0, 1.0);
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

namespace {

struct FileCloser {
  std::FILE* f;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

}  // namespace

void save_png(const Image& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0) throw DataError("save_png: empty image");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("save_png: cannot open " + path);
  FileCloser closer{f};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("save_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("save_png: libpng write failure on " + path);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<png_byte>(std::lround(255.0 * srgb_encode(image.at(x, y)[c])));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("load_png: cannot open " + path);
  FileCloser closer{f};
  png_byte header[8];
  if (std::fread(header, 1, 8, f) != 8 || png_sig_cmp(header, 0, 8))
    throw DataError("load_png: not a PNG file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("load_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("load_png: libpng read failure on " + path);
  }
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  // normalize anything to 8-bit RGB
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  int w = static_cast<int>(png_get_image_width(png, info));
  int h = static_cast<int>(png_get_image_height(png, info));
  Image image(w, h);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(x, y)[c] = srgb_decode(row[static_cast<std::size_t>(x) * 3 + c] / 255.0);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void save_pfm(const Image& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0) throw DataError("save_pfm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_pfm: cannot open " + path);
  out << "PF\n" << image.width << " " << image.height << "\n-1.0\n";
  for (int y = image.height - 1; y >= 0; --y)
    for (int x = 0; x < image.width; ++x) {
      float rgb[3] = {static_cast<float>(image.at(x, y)[0]), static_cast<float>(image.at(x, y)[1]),
                      static_cast<float>(image.at(x, y)[2])};
      out.write(reinterpret_cast<const char*>(rgb), sizeof rgb);
    }
  if (!out) throw DataError("save_pfm: write failure on " + path);
}

Image load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_pfm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> magic >> w >> h >> scale;
  if (magic != "PF" || w <= 0 || h <= 0 || scale >= 0)
    throw DataError("load_pfm: unsupported header in " + path +
                    " (need binary little-endian PF)");
  in.get();  // single whitespace after the scale
  Image image(w, h);
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      float rgb[3];
      in.read(reinterpret_cast<char*>(rgb), sizeof rgb);
      if (!in) throw DataError("load_pfm: truncated data in " + path);
      image.at(x, y) = Vec3(rgb[0], rgb[1], rgb[2]);
    }
  return image;
}

double image_l1(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw DataError("image_l1: size mismatch");
  if (a.pixels.empty()) throw DataError("image_l1: empty image");
  KahanSum sum;
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c) sum.add(std::fabs(a.pixels[i][c] - b.pixels[i][c]));
  return sum.value() / (3.0 * a.pixels.size());
}

}  // namespace dipole
