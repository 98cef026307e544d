#include "glyphmatch/synth.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "glyphmatch/text.h"

namespace fs = std::filesystem;

namespace gm {

const Image& FontAtlas::glyph(char32_t c) const {
  auto it = glyphs.find(c);
  if (it == glyphs.end())
    throw std::invalid_argument("font " + id + " has no glyph for codepoint " + std::to_string(c));
  return it->second;
}

namespace {

constexpr float kBaseline = 26.f;
constexpr float kTopline = 5.f;

using Pt = std::array<float, 2>;  // x, y

float seg_dist(float px, float py, const Pt& a, const Pt& b) {
  float vx = b[0] - a[0], vy = b[1] - a[1];
  float wx = px - a[0], wy = py - a[1];
  float len2 = vx * vx + vy * vy;
  float t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.f;
  t = std::clamp(t, 0.f, 1.f);
  float dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// stamp a polyline with a 2px pen: solid inside radius 1, skirt fading to 0
// at radius 2
void stamp(Image& img, const std::vector<Pt>& poly) {
  if (poly.size() < 2) return;
  float xmin = 1e9f, xmax = -1e9f, ymin = 1e9f, ymax = -1e9f;
  for (auto& p : poly) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  int x0 = std::max(0, int(std::floor(xmin - 2)));
  int x1 = std::min(img.w - 1, int(std::ceil(xmax + 2)));
  int y0 = std::max(0, int(std::floor(ymin - 2)));
  int y1 = std::min(img.h - 1, int(std::ceil(ymax + 2)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float d = 1e9f;
      for (size_t i = 0; i + 1 < poly.size(); ++i)
        d = std::min(d, seg_dist(float(x), float(y), poly[i], poly[i + 1]));
      float v = std::clamp(2.f - d, 0.f, 1.f);
      if (v > img.at(y, x)) img.at(y, x) = v;
    }
}

std::vector<Pt> bezier(const Pt& a, const Pt& c, const Pt& b, int steps = 14) {
  std::vector<Pt> out;
  out.reserve(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    float t = float(i) / steps;
    float u = 1 - t;
    out.push_back({u * u * a[0] + 2 * u * t * c[0] + t * t * b[0],
                   u * u * a[1] + 2 * u * t * c[1] + t * t * b[1]});
  }
  return out;
}

Image gen_glyph(uint64_t seed) {
  Prng rng(seed);
  const int widths[5] = {12, 16, 20, 24, 28};
  int w = widths[rng.uniform_int(uint64_t(5))];
  Image img(kGlyphHeight, w);

  auto jit = [&](float v, float r = 1.5f) { return v + float(rng.uniform(-r, r)); };
  float xl = jit(3.f), xm = jit(w * 0.5f), xr = jit(w - 4.f);
  float yt = jit(kTopline), ym = jit(15.f), yb = jit(kBaseline);

  auto anchor_x = [&](int k) { return k == 0 ? xl : (k == 1 ? xm : xr); };
  auto anchor_y = [&](int k) { return k == 0 ? yt : (k == 1 ? ym : yb); };

  int n_strokes = 2 + int(rng.uniform_int(uint64_t(3)));
  for (int s = 0; s < n_strokes; ++s) {
    switch (rng.uniform_int(uint64_t(5))) {
      case 0: {  // vertical
        float x = anchor_x(int(rng.uniform_int(uint64_t(3))));
        stamp(img, {{x, yt}, {x, yb}});
        break;
      }
      case 1: {  // horizontal
        float y = anchor_y(int(rng.uniform_int(uint64_t(3))));
        stamp(img, {{xl, y}, {xr, y}});
        break;
      }
      case 2: {  // diagonal between two distinct anchors
        int a = int(rng.uniform_int(uint64_t(3))), b = int(rng.uniform_int(uint64_t(3)));
        int c = int(rng.uniform_int(uint64_t(3))), d = int(rng.uniform_int(uint64_t(3)));
        if (a == c && b == d) c = (c + 1) % 3;
        stamp(img, {{anchor_x(a), anchor_y(b)}, {anchor_x(c), anchor_y(d)}});
        break;
      }
      case 3: {  // arc
        Pt p0{anchor_x(int(rng.uniform_int(uint64_t(3)))), anchor_y(int(rng.uniform_int(uint64_t(3))))};
        Pt p1{anchor_x(int(rng.uniform_int(uint64_t(3)))), anchor_y(int(rng.uniform_int(uint64_t(3))))};
        Pt mid{0.5f * (p0[0] + p1[0]) + float(rng.uniform(-6, 6)),
               0.5f * (p0[1] + p1[1]) + float(rng.uniform(-6, 6))};
        stamp(img, bezier(p0, mid, p1));
        break;
      }
      default: {  // small loop
        float cx = xm, cy = rng.coin(0.5) ? ym : yb - 5.f;
        float r = 3.5f + float(rng.uniform(0, 2.5));
        std::vector<Pt> ring;
        for (int i = 0; i <= 16; ++i) {
          float t = 2.f * 3.14159265f * i / 16;
          ring.push_back({cx + r * std::cos(t), cy + r * std::sin(t) * 0.9f});
        }
        stamp(img, ring);
        break;
      }
    }
  }

  // guarantee a visible glyph
  double ink = 0;
  for (float p : img.pix) ink += p;
  if (ink < 40.0) stamp(img, {{xl, yt}, {xr, yb}});
  return img;
}

Image morph3x3(const Image& in, bool dilate) {
  Image out(in.h, in.w);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      float v = dilate ? 0.f : 1.f;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          float s = in.sample(y + dy, x + dx);
          v = dilate ? std::max(v, s) : std::min(v, s);
        }
      out.at(y, x) = v;
    }
  return out;
}

Image shear_italic(const Image& in) {
  // x' = x + 0.25 * (baseline - y), canvas widened by 8
  Image out(in.h, in.w + 8);
  for (int y = 0; y < out.h; ++y) {
    float off = 2.f + 0.25f * (kBaseline - y);
    for (int x = 0; x < out.w; ++x) {
      float sx = x - off;
      int x0 = int(std::floor(sx));
      float t = sx - x0;
      float a = (x0 >= 0 && x0 < in.w) ? in.at(y, x0) : 0.f;
      float b = (x0 + 1 >= 0 && x0 + 1 < in.w) ? in.at(y, x0 + 1) : 0.f;
      out.at(y, x) = (1 - t) * a + t * b;
    }
  }
  return out;
}

Image rotate_jitter(const Image& in, float deg, float jx, float jy) {
  Image out(in.h, in.w);
  float rad = deg * 3.14159265f / 180.f;
  float c = std::cos(rad), s = std::sin(rad);
  float cx = in.w * 0.5f, cy = in.h * 0.5f;
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      float rx = x - cx - jx, ry = y - cy - jy;
      float sx = c * rx + s * ry + cx;
      float sy = -s * rx + c * ry + cy;
      int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      float tx = sx - x0, ty = sy - y0;
      auto px = [&](int yy, int xx) { return in.sample(yy, xx); };
      out.at(y, x) = (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) +
                     ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
    }
  return out;
}

}  // namespace

FontAtlas gen_font(uint64_t seed, const std::u32string& alphabet) {
  FontAtlas f;
  f.style = "regular";
  for (char32_t c : alphabet) {
    if (f.glyphs.count(c)) continue;
    if (c == U' ')
      f.glyphs[c] = Image(kGlyphHeight, 16);
    else
      f.glyphs[c] = gen_glyph(Prng::mix(seed, c));
  }
  return f;
}

FontAtlas apply_style(const FontAtlas& base, const std::string& style, uint64_t seed) {
  FontAtlas f;
  f.id = base.id;
  f.style = style;
  f.height = base.height;
  for (const auto& [c, img] : base.glyphs) {
    if (c == U' ') {
      f.glyphs[c] = img;
      continue;
    }
    if (style == "regular") {
      f.glyphs[c] = img;
    } else if (style == "bold") {
      f.glyphs[c] = morph3x3(img, true);
    } else if (style == "light") {
      Image e = morph3x3(img, false);
      float mx = 0.f;
      for (float p : e.pix) mx = std::max(mx, p);
      if (mx > 0.f && mx < 0.5f)
        for (float& p : e.pix) p *= 0.5f / mx;
      f.glyphs[c] = e;
    } else if (style == "italic") {
      f.glyphs[c] = shear_italic(img);
    } else if (style == "other") {
      Prng rng(Prng::mix(seed, c));
      float deg = float(rng.uniform(-3.0, 3.0));
      float jx = float(rng.uniform(-0.75, 0.75)), jy = float(rng.uniform(-0.75, 0.75));
      f.glyphs[c] = rotate_jitter(img, deg, jx, jy);
    } else {
      throw std::invalid_argument("unknown style: " + style);
    }
  }
  return f;
}

FontAtlas gen_random_alphabet_font(uint64_t seed, int size) {
  if (size < 1 || size > 30)
    throw std::invalid_argument("random alphabet size must be in [1, 30], got " + std::to_string(size));
  FontAtlas f;
  f.style = "omni";
  for (int i = 0; i < size; ++i) {
    char32_t target = i < 26 ? char32_t(U'a' + i) : char32_t(U'0' + (i - 26));
    // glyph identity is the slot, not the mapped letter: fresh shapes per font
    f.glyphs[target] = gen_glyph(Prng::mix(seed, 7000 + i));
  }
  f.glyphs[U' '] = Image(kGlyphHeight, 16);
  return f;
}

LineSample render_line(const FontAtlas& font, const std::u32string& text) {
  if (text.empty()) throw std::invalid_argument("render_line: empty text");
  LineSample s;
  s.text = text;
  int w = 0;
  for (char32_t c : text) w += font.glyph(c).w;
  s.img = Image(font.height, w);
  int x = 0;
  for (char32_t c : text) {
    const Image& gl = font.glyph(c);
    if (gl.h != font.height) throw std::invalid_argument("glyph height mismatch");
    for (int y = 0; y < gl.h; ++y)
      for (int xx = 0; xx < gl.w; ++xx)
        s.img.at(y, x + xx) = std::max(s.img.at(y, x + xx), gl.at(y, xx));
    s.boxes.push_back({c, x, x + gl.w});
    x += gl.w;
  }
  return s;
}

AugmentParams sample_augment(Prng& rng) {
  AugmentParams p;
  p.dx = int(rng.uniform_int(int64_t(-2), int64_t(2)));
  p.dy = int(rng.uniform_int(int64_t(-2), int64_t(2)));
  p.crop_l = std::max<int>(0, int(rng.uniform_int(int64_t(-4), int64_t(4))));
  p.crop_r = std::max<int>(0, int(rng.uniform_int(int64_t(-4), int64_t(4))));
  p.contrast = float(rng.uniform(0.7, 1.3));
  p.blur = rng.coin(0.5) ? 3 : 1;
  return p;
}

LineSample augment_apply(const LineSample& s, const AugmentParams& p) {
  if (std::abs(p.dx) > 2 || std::abs(p.dy) > 2)
    throw std::invalid_argument("augment translation exceeds 2px");
  if (p.crop_l < 0 || p.crop_r < 0 || p.crop_l > 4 || p.crop_r > 4)
    throw std::invalid_argument("augment crop exceeds 4px per side");
  if (p.blur != 1 && p.blur != 3) throw std::invalid_argument("blur kernel must be 1 or 3");

  int W = s.img.w;
  // keep the cropped width a multiple of 4, shrinking the crop as needed
  int cl = p.crop_l, cr = p.crop_r;
  int rem = (W - cl - cr) % 4;
  while (rem % 4 != 0) {
    if (cr > 0)
      --cr;
    else if (cl > 0)
      --cl;
    else
      break;
    rem = (W - cl - cr) % 4;
  }
  if ((W - cl - cr) % 4 != 0) {
    cl = 0;
    cr = 0;
  }

  LineSample out;
  out.text = s.text;
  int Wo = W - cl - cr;
  Image shifted(s.img.h, W);
  for (int y = 0; y < s.img.h; ++y)
    for (int x = 0; x < W; ++x) shifted.at(y, x) = s.img.sample(y - p.dy, x - p.dx);

  Image cropped(s.img.h, Wo);
  for (int y = 0; y < s.img.h; ++y)
    for (int x = 0; x < Wo; ++x) cropped.at(y, x) = shifted.at(y, x + cl);

  for (float& v : cropped.pix) v = std::clamp(v * p.contrast, 0.f, 1.f);

  if (p.blur == 3) {
    Image blurred(cropped.h, cropped.w);
    for (int y = 0; y < cropped.h; ++y)
      for (int x = 0; x < cropped.w; ++x) {
        float acc = 0.f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) acc += cropped.sample(y + dy, x + dx);
        blurred.at(y, x) = acc / 9.f;
      }
    cropped = std::move(blurred);
  }
  out.img = std::move(cropped);

  // boxes ride along with the ink; edge boxes absorb shift and crop
  for (const CharBox& b : s.boxes) {
    CharBox nb{b.ch, b.x0 + p.dx - cl, b.x1 + p.dx - cl};
    nb.x0 = std::clamp(nb.x0, 0, Wo);
    nb.x1 = std::clamp(nb.x1, 0, Wo);
    out.boxes.push_back(nb);
  }
  if (!out.boxes.empty()) {
    out.boxes.front().x0 = 0;
    out.boxes.back().x1 = Wo;
  }
  return out;
}

LineSample augment(const LineSample& s, uint64_t seed) {
  Prng rng(seed);
  return augment_apply(s, sample_augment(rng));
}

FontSplits make_splits(int fonts_per_style, int test_fonts, uint64_t seed) {
  if (fonts_per_style < 0 || test_fonts < 0) throw std::invalid_argument("negative font count");
  (void)seed;  // ids are positional; seed feeds font_for_id later
  FontSplits sp;
  const char* styles = "RBLI";
  char buf[16];
  for (int si = 0; si < 4; ++si) {
    std::vector<std::string> ids;
    for (int i = 0; i < fonts_per_style; ++i) {
      std::snprintf(buf, sizeof buf, "%c%03d", styles[si], i);
      ids.emplace_back(buf);
    }
    sp.train[std::string(1, styles[si])] = std::move(ids);
  }
  for (int i = 0; i < test_fonts; ++i) {
    std::snprintf(buf, sizeof buf, "O%03d", i);
    sp.test.emplace_back(buf);
  }
  return sp;
}

FontAtlas font_for_id(const std::string& id, uint64_t base_seed, const std::u32string& alphabet) {
  if (id.size() < 2) throw std::invalid_argument("font id too short: " + id);
  char sc = id[0];
  int idx = std::atoi(id.c_str() + 1);
  uint64_t fseed = Prng::mix(base_seed, (uint64_t(sc) << 32) | uint64_t(idx));
  std::string style;
  switch (sc) {
    case 'R': style = "regular"; break;
    case 'B': style = "bold"; break;
    case 'L': style = "light"; break;
    case 'I': style = "italic"; break;
    case 'O': style = "other"; break;
    case 'Q': {
      FontAtlas f = gen_random_alphabet_font(fseed, 26);
      f.id = id;
      return f;
    }
    default: throw std::invalid_argument("unknown style letter in font id: " + id);
  }
  FontAtlas base = gen_font(fseed, alphabet);
  FontAtlas f = apply_style(base, style, Prng::mix(fseed, 0x57));
  f.id = id;
  return f;
}

// ---- disk layout ----

static std::string hex_cp(char32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%x", unsigned(c));
  return buf;
}

void save_font(const FontAtlas& font, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "glyphs");
  std::ofstream mf(fs::path(dir) / "font.manifest");
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  mf << "FONT 1 " << font.style << " " << font.id << "\n";
  for (const auto& [c, img] : font.glyphs) {
    std::string rel = "glyphs/" + hex_cp(c) + ".pgm";
    mf << "glyph " << hex_cp(c) << " " << img.w << " " << rel << "\n";
    write_pgm((fs::path(dir) / rel).string(), img);
  }
}

FontAtlas load_font(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "font.manifest");
  if (!mf) throw std::runtime_error("no font.manifest in " + dir);
  std::string tag;
  int version;
  FontAtlas f;
  mf >> tag >> version >> f.style >> f.id;
  if (tag != "FONT" || version != 1) throw std::runtime_error("bad font manifest in " + dir);
  std::string kw;
  while (mf >> kw) {
    if (kw != "glyph") throw std::runtime_error("bad manifest line in " + dir);
    std::string cph, rel;
    int w;
    mf >> cph >> w >> rel;
    char32_t c = char32_t(std::stoul(cph, nullptr, 16));
    Image img = read_pgm((fs::path(dir) / rel).string());
    if (img.w != w)
      throw std::runtime_error("manifest width " + std::to_string(w) + " disagrees with " + rel);
    f.height = img.h;
    f.glyphs[c] = std::move(img);
  }
  return f;
}

static std::string sample_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

void save_line_sample(const LineSample& s, const std::string& dir, int index) {
  fs::create_directories(dir);
  std::string stem = sample_stem(index);
  write_pgm((fs::path(dir) / (stem + ".pgm")).string(), s.img);
  std::ofstream gt(fs::path(dir) / (stem + ".gt"));
  gt << utf8_encode(s.text) << "\n";
  for (const CharBox& b : s.boxes) gt << hex_cp(b.ch) << " " << b.x0 << " " << b.x1 << "\n";
}

LineSample load_line_sample(const std::string& dir, int index) {
  std::string stem = sample_stem(index);
  LineSample s;
  s.img = read_pgm((fs::path(dir) / (stem + ".pgm")).string());
  std::ifstream gt(fs::path(dir) / (stem + ".gt"));
  if (!gt) throw std::runtime_error("missing gt for sample " + stem + " in " + dir);
  std::string line;
  std::getline(gt, line);
  s.text = utf8_decode(line);
  while (std::getline(gt, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string cph;
    CharBox b{};
    is >> cph >> b.x0 >> b.x1;
    b.ch = char32_t(std::stoul(cph, nullptr, 16));
    s.boxes.push_back(b);
  }
  return s;
}

int count_line_samples(const std::string& dir) {
  int n = 0;
  while (fs::exists(fs::path(dir) / (sample_stem(n) + ".pgm"))) ++n;
  return n;
}

std::vector<std::u32string> load_corpus_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open corpus: " + path);
  std::vector<std::u32string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(utf8_decode(line));
  }
  return out;
}

std::u32string normalize_line(const std::u32string& s, const std::u32string& alphabet) {
  std::u32string out;
  for (char32_t c : s) {
    c = to_lower_ascii(c);
    if (alphabet.find(c) == std::u32string::npos) c = U' ';
    if (c == U' ' && (out.empty() || out.back() == U' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == U' ') out.pop_back();
  return out;
}

}  // namespace gm
