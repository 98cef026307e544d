#include "glyphmatch/encoder.h"

#include <cmath>

#include "glyphmatch/prng.h"

namespace gm {

GlyphLine build_glyph_line(const FontAtlas& font, const std::u32string& alphabet) {
  if (alphabet.empty()) throw std::invalid_argument("glyph line needs a non-empty alphabet");
  for (size_t i = 0; i < alphabet.size(); ++i)
    for (size_t j = i + 1; j < alphabet.size(); ++j)
      if (alphabet[i] == alphabet[j])
        throw std::invalid_argument("alphabet has a repeated character");

  int total = 0;
  for (char32_t c : alphabet) total += font.glyph(c).w;

  GlyphLine out;
  if (total <= kRefWidth) {
    out.img = Image(kLineHeight, kRefWidth);
    int x = 0;
    for (char32_t c : alphabet) {
      const Image& gl = font.glyph(c);
      for (int y = 0; y < kLineHeight; ++y)
        for (int xx = 0; xx < gl.w; ++xx) out.img.at(y, x + xx) = gl.at(y, xx);
      out.entries.push_back({c, x, x + gl.w});
      x += gl.w;
    }
    out.entries.push_back({0, x, kRefWidth});  // pad region
    return out;
  }

  // overflow: squeeze the full strip to the reference width
  Image strip(kLineHeight, total);
  std::vector<int> offsets{0};
  int x = 0;
  for (char32_t c : alphabet) {
    const Image& gl = font.glyph(c);
    for (int y = 0; y < kLineHeight; ++y)
      for (int xx = 0; xx < gl.w; ++xx) strip.at(y, x + xx) = gl.at(y, xx);
    x += gl.w;
    offsets.push_back(x);
  }
  out.img = Image(kLineHeight, kRefWidth);
  double scale = double(total) / kRefWidth;
  for (int y = 0; y < kLineHeight; ++y)
    for (int ox = 0; ox < kRefWidth; ++ox) {
      double sx = (ox + 0.5) * scale - 0.5;
      int x0 = int(std::floor(sx));
      double t = sx - x0;
      float a = (x0 >= 0 && x0 < total) ? strip.at(y, x0) : 0.f;
      float b = (x0 + 1 >= 0 && x0 + 1 < total) ? strip.at(y, x0 + 1) : 0.f;
      out.img.at(y, ox) = float((1 - t) * a + t * b);
    }
  // rescale glyph boundaries, keeping them even so feature spans stay exact
  std::vector<int> scaled(offsets.size());
  for (size_t i = 0; i < offsets.size(); ++i) {
    int v = 2 * int(std::lround(offsets[i] / scale / 2.0));
    scaled[i] = std::clamp(v, 0, kRefWidth);
  }
  scaled.front() = 0;
  scaled.back() = kRefWidth;
  for (size_t i = 1; i < scaled.size(); ++i) scaled[i] = std::max(scaled[i], scaled[i - 1]);
  for (size_t i = 0; i < alphabet.size(); ++i)
    out.entries.push_back({alphabet[i], scaled[i], scaled[i + 1]});
  out.entries.push_back({0, kRefWidth, kRefWidth});  // empty pad region
  return out;
}

void init_encoder_params(ParamStore& p, Prng& rng) {
  // Conv biases start small-random rather than zero. With zero biases every
  // blank image region yields exactly-constant channel activations, which sits
  // right on the channel-norm's degenerate point (see kEncNormEps); a spread of
  // bias values keeps per-position channel variance bounded away from zero no
  // matter how much of the line is background.
  auto conv = [&](const std::string& name, int co, int ci, int k) {
    p.add(name + ".w", Tensor::xavier({co, ci, k, k}, ci * k * k, co * k * k, rng));
    Tensor b({co});
    for (auto& x : b.v) x = float(rng.uniform(-0.05, 0.05));
    p.add(name + ".b", std::move(b));
  };
  auto ln = [&](const std::string& name, int c) {
    p.add(name + ".g", Tensor::full({c}, 1.f));
    p.add(name + ".b", Tensor({c}));
  };
  conv("enc.conv1", 64, 1, 3);
  ln("enc.conv1.ln", 64);
  conv("enc.rb1.c1", 64, 64, 3);
  ln("enc.rb1.ln1", 64);
  conv("enc.rb1.c2", 64, 64, 3);
  ln("enc.rb1.ln2", 64);
  conv("enc.rb2.c1", 128, 64, 3);
  ln("enc.rb2.ln1", 128);
  conv("enc.rb2.c2", 128, 128, 3);
  ln("enc.rb2.ln2", 128);
  conv("enc.rb2.sc", 128, 64, 1);
  ln("enc.rb2.scln", 128);
  conv("enc.skip", 128, 192, 3);
  ln("enc.skip.ln", 128);
  conv("enc.conv2", 64, 128, 1);
}

namespace {

// Blank image regions produce near-constant activations across channels, and a
// per-position norm with a tiny eps then divides by a vanishing stddev: its
// backward pass scales like 1/sqrt(var+eps), which detonates gradients on the
// conv biases whenever some position goes channel-flat. The wider floor caps
// that amplification at ~32x while leaving ordinary positions (var >> eps)
// essentially untouched.
constexpr float kEncNormEps = 1e-3f;

Var conv_ln_relu(Graph& g, ParamStore& p, Var x, const std::string& conv, const std::string& lnn) {
  Var c = conv2d(x, g.param(conv + ".w", p), g.param(conv + ".b", p));
  Var n = layernorm_channels(c, g.param(lnn + ".g", p), g.param(lnn + ".b", p), kEncNormEps);
  return relu(n);
}

}  // namespace

Var encode(Graph& g, ParamStore& p, const Image& img) {
  if (img.h != kLineHeight)
    throw std::invalid_argument("encode: image height must be " + std::to_string(kLineHeight) +
                                ", got " + std::to_string(img.h));
  if (img.w < 4 || img.w % 4 != 0)
    throw std::invalid_argument("encode: image width must be a positive multiple of 4, got " +
                                std::to_string(img.w));
  for (float v : img.pix)
    if (!(v >= 0.f && v <= 1.f)) throw std::invalid_argument("encode: pixels must lie in [0,1]");

  Tensor t({1, img.h, img.w});
  t.v = img.pix;
  Var x = g.leaf(std::move(t));

  // 32 x W -> 64ch, 16 x W/2
  Var c1 = conv_ln_relu(g, p, x, "enc.conv1", "enc.conv1.ln");
  c1 = maxpool2d(c1, 2, 2);

  // residual block, height halves
  Var h = conv_ln_relu(g, p, c1, "enc.rb1.c1", "enc.rb1.ln1");
  h = conv2d(h, g.param("enc.rb1.c2.w", p), g.param("enc.rb1.c2.b", p));
  h = layernorm_channels(h, g.param("enc.rb1.ln2.g", p), g.param("enc.rb1.ln2.b", p), kEncNormEps);
  Var rb1 = maxpool2d(relu(add(h, c1)), 2, 1);  // 64ch, 8 x W/2

  // second block widens to 128ch, both dims halve
  Var h2 = conv_ln_relu(g, p, rb1, "enc.rb2.c1", "enc.rb2.ln1");
  h2 = conv2d(h2, g.param("enc.rb2.c2.w", p), g.param("enc.rb2.c2.b", p));
  h2 = layernorm_channels(h2, g.param("enc.rb2.ln2.g", p), g.param("enc.rb2.ln2.b", p), kEncNormEps);
  Var sc = conv2d(rb1, g.param("enc.rb2.sc.w", p), g.param("enc.rb2.sc.b", p));
  sc = layernorm_channels(sc, g.param("enc.rb2.scln.g", p), g.param("enc.rb2.scln.b", p), kEncNormEps);
  Var rb2 = maxpool2d(relu(add(h2, sc)), 2, 2);  // 128ch, 4 x W/4

  // decoder-side fuse with the skip at 8 x W/2
  Var up = upsample2x(rb2);                      // 128ch, 8 x W/2
  Var cat = concat_channels(up, rb1);            // 192ch
  Var fuse = conv_ln_relu(g, p, cat, "enc.skip", "enc.skip.ln");  // 128ch
  Var pooled = avgpool2d(fuse, 2, 1);            // 128ch, 4 x W/2

  // linear projection; features stay signed for the cosine map
  Var feat = conv2d(pooled, g.param("enc.conv2.w", p), g.param("enc.conv2.b", p));  // 64ch, 4 x W/2
  return stack_columns(feat);  // (W/2, 256)
}

Var similarity(Var fg, Var fx) {
  if (fg->val().ndim() != 2 || fx->val().ndim() != 2 || fg->val().dim(1) != fx->val().dim(1))
    throw std::invalid_argument("similarity: feature dims disagree");
  // generous norm floor: feature rows can pass near zero while training and
  // their direction is meaningless there, so damp them instead of amplifying
  Var a = l2_normalize_rows(fg, 1e-3f);
  Var b = l2_normalize_rows(fx, 1e-3f);
  // normalized rows keep every entry in [-1,1]; the clamp only swallows
  // float dust from the products
  return clampv(matmul(a, transpose(b)), -1.f, 1.f);
}

}  // namespace gm
