#include "glyphmatch/image.h"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace gm {

void write_pgm(const std::string& path, const Image& img) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::fprintf(f, "P5\n%d %d\n255\n", img.w, img.h);
  std::vector<unsigned char> row(img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      float v = img.at(y, x);
      if (v < 0.f) v = 0.f;
      if (v > 1.f) v = 1.f;
      row[x] = static_cast<unsigned char>(std::lround(v * 255.f));
    }
    std::fwrite(row.data(), 1, row.size(), f);
  }
  std::fclose(f);
}

static int read_pgm_token(FILE* f) {
  // skips whitespace and # comments, returns a nonnegative int
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (!std::isspace(c)) {
      break;
    }
    c = std::fgetc(f);
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return v;
}

Image read_pgm(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[3] = {0, 0, 0};
  if (std::fread(magic, 1, 2, f) != 2 || magic[0] != 'P' || magic[1] != '5') {
    std::fclose(f);
    throw std::runtime_error("not a P5 pgm: " + path);
  }
  int w = read_pgm_token(f);
  int h = read_pgm_token(f);
  int maxval = read_pgm_token(f);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    std::fclose(f);
    throw std::runtime_error("bad pgm header: " + path);
  }
  Image img(h, w);
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  size_t got = std::fread(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (got != buf.size()) throw std::runtime_error("truncated pgm: " + path);
  for (size_t i = 0; i < buf.size(); ++i) img.pix[i] = buf[i] / 255.f;
  return img;
}

void write_signed_pgm(const std::string& path, const std::vector<float>& vals, int h, int w) {
  if (vals.size() != static_cast<size_t>(h) * w) throw std::runtime_error("size mismatch");
  Image img(h, w);
  for (size_t i = 0; i < vals.size(); ++i) {
    float v = vals[i];
    if (v < -1.f) v = -1.f;
    if (v > 1.f) v = 1.f;
    img.pix[i] = (v + 1.f) * 0.5f;
  }
  write_pgm(path, img);
}

}  // namespace gm
