#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gm {

// Grayscale image, row major, values in [0, 1]. Ink is 1, background 0.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> pix;

  Image() = default;
  Image(int h_, int w_, float fill = 0.f) : h(h_), w(w_), pix(static_cast<size_t>(h_) * w_, fill) {}

  float& at(int y, int x) { return pix[static_cast<size_t>(y) * w + x]; }
  float at(int y, int x) const { return pix[static_cast<size_t>(y) * w + x]; }
  // reads outside the canvas are background
  float sample(int y, int x) const {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0.f : at(y, x);
  }
};

// Binary PGM (P5, maxval 255). Float pixels are mapped to round(p * 255).
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

// [-1, 1] -> [0, 255] linear; used for similarity heatmaps.
void write_signed_pgm(const std::string& path, const std::vector<float>& vals, int h, int w);

}  // namespace gm
