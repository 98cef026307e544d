#include <cmath>

#include "doctest.h"
#include "glyphmatch/encoder.h"
#include "glyphmatch/prng.h"
#include "gradcheck.h"

using namespace gm;

namespace {
const std::u32string kAbc = U"abcdefghijklmnopqrstuvwxyz ";

Image random_image(int h, int w, uint64_t seed) {
  Image img(h, w);
  Prng rng(seed);
  for (auto& p : img.pix) p = float(rng.uniform());
  return img;
}
}  // namespace

TEST_CASE("encode produces (W/2, 256) for small, medium and reference widths") {
  ParamStore p;
  Prng rng(1);
  init_encoder_params(p, rng);
  for (int w : {8, 64, 720}) {
    Graph g;
    Var f = encode(g, p, random_image(32, w, 7 + w));
    REQUIRE(f->val().shape == std::vector<int>{w / 2, 256});
    double var = 0, mean = 0;
    for (float v : f->val().v) mean += v;
    mean /= f->val().numel();
    for (float v : f->val().v) var += (v - mean) * (v - mean);
    CHECK(var > 0.0);
    for (float v : f->val().v) CHECK(std::isfinite(v));
  }
}

TEST_CASE("encode validates height, width and pixel range") {
  ParamStore p;
  Prng rng(2);
  init_encoder_params(p, rng);
  Graph g;
  CHECK_THROWS_AS(encode(g, p, random_image(31, 64, 1)), std::invalid_argument);
  CHECK_THROWS_AS(encode(g, p, random_image(32, 66, 1)), std::invalid_argument);
  CHECK_THROWS_AS(encode(g, p, random_image(32, 0, 1)), std::invalid_argument);
  Image bad = random_image(32, 64, 1);
  bad.at(3, 3) = 1.5f;
  CHECK_THROWS_AS(encode(g, p, bad), std::invalid_argument);
}

TEST_CASE("encode is bitwise deterministic across graphs") {
  ParamStore p;
  Prng rng(3);
  init_encoder_params(p, rng);
  Image img = random_image(32, 48, 11);
  Graph g1, g2;
  Var a = encode(g1, p, img);
  Var b = encode(g2, p, img);
  CHECK(a->val().v == b->val().v);
}

TEST_CASE("glyph line pads a fitting alphabet to 720 and spans tile the strip") {
  FontAtlas f = gen_font(9, kAbc);
  GlyphLine line = build_glyph_line(f, kAbc);
  REQUIRE(line.img.w == kRefWidth);
  REQUIRE(line.img.h == kLineHeight);
  REQUIRE(line.entries.size() == kAbc.size() + 1);
  int x = 0;
  for (size_t i = 0; i < line.entries.size(); ++i) {
    const GlyphEntry& e = line.entries[i];
    CHECK(e.x0 == x);
    CHECK(e.x0 % 2 == 0);
    CHECK(e.x1 % 2 == 0);
    x = e.x1;
    if (i + 1 < line.entries.size()) CHECK(e.ch == kAbc[i]);
  }
  CHECK(line.entries.back().ch == 0);
  CHECK(x == kRefWidth);
  // glyph pixels are copied verbatim in the padded case
  const GlyphEntry& e0 = line.entries[0];
  const Image& g0 = f.glyph(kAbc[0]);
  for (int y = 0; y < 32; ++y)
    for (int xx = 0; xx < g0.w; ++xx) CHECK(line.img.at(y, e0.x0 + xx) == g0.at(y, xx));
  // pad region is blank
  for (int y = 0; y < 32; ++y)
    for (int xx = line.entries.back().x0; xx < kRefWidth; ++xx) CHECK(line.img.at(y, xx) == 0.f);
}

TEST_CASE("glyph line squeezes an overflowing alphabet and keeps even boundaries") {
  // 30 synthetic 28px glyphs = 840px > 720
  FontAtlas f;
  std::u32string alpha;
  for (int i = 0; i < 30; ++i) {
    char32_t c = char32_t(0x3b1 + i);  // greek letters
    alpha.push_back(c);
    Image gl(32, 28);
    for (int y = 8; y < 24; ++y)
      for (int x = 2; x < 26; ++x) gl.at(y, x) = ((i + y + x) % 3) ? 1.f : 0.5f;
    f.glyphs[c] = gl;
  }
  GlyphLine line = build_glyph_line(f, alpha);
  REQUIRE(line.img.w == kRefWidth);
  REQUIRE(line.entries.size() == 31);
  int x = 0;
  for (const GlyphEntry& e : line.entries) {
    CHECK(e.x0 == x);
    CHECK(e.x0 % 2 == 0);
    x = e.x1;
  }
  CHECK(x == kRefWidth);
  CHECK(line.entries.back().x0 == kRefWidth);  // pad is empty after a squeeze
  // every real glyph keeps a usable span: 28px * 720/840 = 24
  for (size_t i = 0; i + 1 < line.entries.size(); ++i) {
    CHECK(line.entries[i].x1 - line.entries[i].x0 >= 22);
    CHECK(line.entries[i].x1 - line.entries[i].x0 <= 26);
  }
  // interior ink survives the squeeze
  double ink = 0;
  for (float v : line.img.pix) ink += v;
  CHECK(ink > 0.8 * 30 * 16 * 24 * 720.0 / 840.0);
}

TEST_CASE("glyph line rejects duplicates, empties and uncovered characters") {
  FontAtlas f = gen_font(4, U"ab ");
  CHECK_THROWS_AS(build_glyph_line(f, U""), std::invalid_argument);
  CHECK_THROWS_AS(build_glyph_line(f, U"aba"), std::invalid_argument);
  CHECK_THROWS_AS(build_glyph_line(f, U"abq"), std::invalid_argument);
}

TEST_CASE("similarity matches a double-precision cosine oracle") {
  Prng rng(5);
  Tensor fg({6, 4}), fx({5, 4});
  for (auto& v : fg.v) v = float(rng.uniform(-2, 2));
  for (auto& v : fx.v) v = float(rng.uniform(-2, 2));
  Graph g;
  Var s = similarity(g.leaf(fg), g.leaf(fx));
  REQUIRE(s->val().shape == std::vector<int>{6, 5});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (int k = 0; k < 4; ++k) {
        dot += double(fg.at(i, k)) * fx.at(j, k);
        na += double(fg.at(i, k)) * fg.at(i, k);
        nb += double(fx.at(j, k)) * fx.at(j, k);
      }
      double want = dot / ((std::sqrt(na) + 1e-8) * (std::sqrt(nb) + 1e-8));
      CHECK(s->val().at(i, j) == doctest::Approx(want).epsilon(1e-5));
      CHECK(s->val().at(i, j) <= 1.f);
      CHECK(s->val().at(i, j) >= -1.f);
    }
  // self-similarity diagonal is exactly 1 after clamping
  Graph g2;
  Var ss = similarity(g2.leaf(fg), g2.leaf(fg));
  for (int i = 0; i < 6; ++i) CHECK(ss->val().at(i, i) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("similarity backpropagates like the composed cosine") {
  Prng rng(6);
  std::string msg;
  Tensor fg({3, 4}), fx({2, 4}), w({3, 2});
  for (auto& v : fg.v) v = float(rng.uniform(-1.5, 1.5));
  for (auto& v : fx.v) v = float(rng.uniform(-1.5, 1.5));
  for (auto& v : w.v) v = float(rng.uniform(-1, 1));
  CHECK_MESSAGE(gmtest::check_gradients(
                    {fg, fx},
                    [&](Graph& g, std::vector<Var>& in) {
                      return weighted_sum(similarity(in[0], in[1]), w);
                    },
                    1e-3, 1e-2, &msg),
                msg);
}

TEST_CASE("encoder gradients flow to every parameter") {
  ParamStore p;
  Prng rng(8);
  init_encoder_params(p, rng);
  Graph g;
  Var f = encode(g, p, random_image(32, 16, 21));
  Var loss = weighted_sum(f, Tensor::full(f->val().shape, 1e-2f));
  g.backward(loss);
  g.accumulate_param_grads(p);
  for (const auto& [name, grad] : p.grads) {
    double s = 0;
    for (float v : grad.v) s += std::fabs(v);
    CHECK_MESSAGE(s > 0.0, name, " received no gradient");
  }
}
