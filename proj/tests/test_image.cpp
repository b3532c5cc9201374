#include <cmath>
#include <cstdio>
#include <fstream>

#include "dipole/image.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace dipole;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dipole_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

Image random_image(int w, int h, unsigned seed) {
  Image img(w, h);
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (auto& p : img.pixels) p = Vec3(uni(rng), uni(rng), uni(rng));
  return img;
}

}  // namespace

TEST_CASE("srgb transfer curve endpoints and round trip") {
  CHECK(srgb_encode(0.0) == 0.0);
  CHECK(srgb_encode(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(srgb_decode(srgb_encode(0.5)) == doctest::Approx(0.5).epsilon(1e-12));
  for (double v = 0.0; v <= 1.0; v += 0.01)
    CHECK(srgb_decode(srgb_encode(v)) == doctest::Approx(v).epsilon(1e-10));
  CHECK(srgb_encode(-1.0) == 0.0);  // clamped
  CHECK(srgb_encode(2.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("png round trip within 8-bit quantization") {
  auto img = random_image(17, 13, 5);
  TempFile f("roundtrip.png");
  save_png(img, f.path);
  auto back = load_png(f.path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  double worst = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst,
                       std::fabs(srgb_encode(img.pixels[i][c]) - srgb_encode(back.pixels[i][c])));
  CHECK(worst <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("pfm round trip is lossless at float precision") {
  auto img = random_image(9, 21, 6);
  img.at(0, 0) = Vec3(3.5, 0.0, 1e-4);  // out-of-gamut values survive
  TempFile f("roundtrip.pfm");
  save_pfm(img, f.path);
  auto back = load_pfm(f.path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(std::fabs(img.pixels[i][c] - back.pixels[i][c]) <=
            1e-7 * std::max(1.0, std::fabs(img.pixels[i][c])));
}

TEST_CASE("image io error paths") {
  TempFile f("notapng.png");
  {
    std::ofstream out(f.path);
    out << "definitely not an image";
  }
  CHECK_THROWS_AS(load_png(f.path), DataError);
  CHECK_THROWS_AS(load_png("/nonexistent/x.png"), DataError);
  CHECK_THROWS_AS(load_pfm(f.path), DataError);
  CHECK_THROWS_AS(save_png(Image(), "/tmp/dipole_test_empty.png"), DataError);
}

TEST_CASE("image l1 distance") {
  auto a = random_image(8, 8, 7);
  CHECK(image_l1(a, a) == 0.0);
  Image b = a;
  b.at(3, 4) += Vec3(0.3, 0, 0);
  CHECK(image_l1(a, b) == doctest::Approx(0.3 / (3.0 * 64)).epsilon(1e-12));
  CHECK_THROWS_AS(image_l1(a, Image(4, 4)), DataError);
}
