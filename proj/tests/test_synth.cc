#include <cstdio>
#include <filesystem>
#include <set>
#include <unistd.h>

#include "doctest.h"
#include "glyphmatch/synth.h"
#include "glyphmatch/text.h"

using namespace gm;
namespace fs = std::filesystem;

namespace {
const std::u32string kAbc = U"abcdefghijklmnopqrstuvwxyz ";

double ink(const Image& im) {
  double s = 0;
  for (float p : im.pix) s += p;
  return s;
}

std::string tmpdir(const char* tag) {
  auto p = fs::temp_directory_path() / (std::string("gmtest_") + tag + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}
}  // namespace

TEST_CASE("gen_font is deterministic per seed and characters differ") {
  FontAtlas a = gen_font(99, kAbc), b = gen_font(99, kAbc), c = gen_font(100, kAbc);
  REQUIRE(a.glyphs.size() == 27);
  for (char32_t ch : kAbc) {
    CHECK(a.glyph(ch).pix == b.glyph(ch).pix);
    CHECK(a.glyph(ch).h == 32);
    CHECK(a.glyph(ch).w % 4 == 0);
    CHECK(a.glyph(ch).w >= 12);
    CHECK(a.glyph(ch).w <= 28);
  }
  CHECK(ink(a.glyph(U' ')) == 0.0);
  // different seeds give different shapes for most characters
  int same = 0;
  for (char32_t ch = U'a'; ch <= U'z'; ++ch)
    if (a.glyph(ch).w == c.glyph(ch).w && a.glyph(ch).pix == c.glyph(ch).pix) ++same;
  CHECK(same <= 2);
  // characters within one font are distinct
  std::set<std::vector<float>> shapes;
  for (char32_t ch = U'a'; ch <= U'z'; ++ch) shapes.insert(a.glyph(ch).pix);
  CHECK(shapes.size() >= 25);
  // every glyph carries real ink
  for (char32_t ch = U'a'; ch <= U'z'; ++ch) CHECK(ink(a.glyph(ch)) > 20.0);
}

TEST_CASE("styles transform glyphs the way morphology says they should") {
  FontAtlas reg = gen_font(7, U"ab ");
  FontAtlas bold = apply_style(reg, "bold", 1);
  FontAtlas light = apply_style(reg, "light", 1);
  FontAtlas italic = apply_style(reg, "italic", 1);
  FontAtlas other = apply_style(reg, "other", 1);

  for (char32_t ch : {U'a', U'b'}) {
    const Image& r = reg.glyph(ch);
    // dilation dominates pointwise
    const Image& bo = bold.glyph(ch);
    REQUIRE(bo.w == r.w);
    for (size_t i = 0; i < r.pix.size(); ++i) CHECK(bo.pix[i] >= r.pix[i]);
    CHECK(ink(bo) > ink(r));
    // erosion thins
    CHECK(ink(light.glyph(ch)) < ink(r));
    // shear widens by 8 and keeps the ink mass roughly put
    CHECK(italic.glyph(ch).w == r.w + 8);
    CHECK(ink(italic.glyph(ch)) == doctest::Approx(ink(r)).epsilon(0.1));
    // rotation/jitter stays on-canvas but moves pixels
    CHECK(other.glyph(ch).w == r.w);
    CHECK(other.glyph(ch).pix != r.pix);
  }
  CHECK_THROWS_AS(apply_style(reg, "wild", 1), std::invalid_argument);
}

TEST_CASE("random alphabet fonts cover the requested symbol count") {
  FontAtlas f = gen_random_alphabet_font(5, 30);
  CHECK(f.glyphs.size() == 31);  // 30 symbols + space
  CHECK(f.covers(U'a'));
  CHECK(f.covers(U'z'));
  CHECK(f.covers(U'0'));
  CHECK(f.covers(U'3'));
  CHECK(f.covers(U' '));
  // slots carry fresh shapes, not the English glyphs for the same seed
  FontAtlas eng = gen_font(5, U"a");
  CHECK(f.glyph(U'a').pix != eng.glyph(U'a').pix);
  FontAtlas f2 = gen_random_alphabet_font(5, 30);
  CHECK(f.glyph(U'q').pix == f2.glyph(U'q').pix);
  CHECK_THROWS_AS(gen_random_alphabet_font(5, 31), std::invalid_argument);
  CHECK_THROWS_AS(gen_random_alphabet_font(5, 0), std::invalid_argument);
}

TEST_CASE("render_line concatenates glyphs and tracks boxes") {
  FontAtlas f = gen_font(3, U"ab ");
  LineSample s = render_line(f, U"ab a");
  int wa = f.glyph(U'a').w, wb = f.glyph(U'b').w, ws = f.glyph(U' ').w;
  REQUIRE(s.img.w == 2 * wa + wb + ws);
  REQUIRE(s.boxes.size() == 4);
  CHECK(s.boxes[0].x0 == 0);
  CHECK(s.boxes[0].x1 == wa);
  CHECK(s.boxes[1].x0 == wa);
  CHECK(s.boxes[3].x1 == s.img.w);
  // the pixels under box 3 equal glyph 'a'
  const Image& ga = f.glyph(U'a');
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < wa; ++x) CHECK(s.img.at(y, s.boxes[3].x0 + x) == ga.at(y, x));
  CHECK_THROWS_AS(render_line(f, U"xyz"), std::invalid_argument);
  CHECK_THROWS_AS(render_line(f, U""), std::invalid_argument);
}

TEST_CASE("identity augmentation is a no-op and the sampler respects its ranges") {
  FontAtlas f = gen_font(17, U"abc ");
  LineSample s = render_line(f, U"cab");
  LineSample same = augment_apply(s, AugmentParams{});
  CHECK(same.img.pix == s.img.pix);
  CHECK(same.boxes.size() == s.boxes.size());
  for (size_t i = 0; i < s.boxes.size(); ++i) {
    CHECK(same.boxes[i].x0 == s.boxes[i].x0);
    CHECK(same.boxes[i].x1 == s.boxes[i].x1);
  }

  Prng rng(8);
  for (int i = 0; i < 200; ++i) {
    AugmentParams p = sample_augment(rng);
    CHECK(std::abs(p.dx) <= 2);
    CHECK(std::abs(p.dy) <= 2);
    CHECK(p.crop_l >= 0);
    CHECK(p.crop_l <= 4);
    CHECK(p.crop_r >= 0);
    CHECK(p.crop_r <= 4);
    CHECK(p.contrast >= 0.7f);
    CHECK(p.contrast <= 1.3f);
    CHECK((p.blur == 1 || p.blur == 3));
    LineSample a = augment_apply(s, p);
    CHECK(a.img.w % 4 == 0);
    CHECK(a.img.h == 32);
    // boxes still partition the width
    CHECK(a.boxes.front().x0 == 0);
    CHECK(a.boxes.back().x1 == a.img.w);
    for (size_t b = 0; b + 1 < a.boxes.size(); ++b) CHECK(a.boxes[b].x1 == a.boxes[b + 1].x0);
    for (const auto& bx : a.boxes) CHECK(bx.x0 < bx.x1);
    for (float px : a.img.pix) {
      CHECK(px >= 0.f);
      CHECK(px <= 1.f);
    }
  }
  // seeded wrapper is deterministic
  CHECK(augment(s, 4242).img.pix == augment(s, 4242).img.pix);
}

TEST_CASE("augmentation pieces do what they claim") {
  FontAtlas f = gen_font(23, U"ab ");
  LineSample s = render_line(f, U"ab");

  AugmentParams shift;
  shift.dx = 2;
  shift.dy = -1;
  LineSample sh = augment_apply(s, shift);
  for (int y = 0; y < 30; ++y)
    for (int x = 2; x < s.img.w; ++x)
      CHECK(sh.img.at(y, x) == s.img.at(y + 1, x - 2));

  AugmentParams crop;
  crop.crop_l = 4;
  crop.crop_r = 4;
  LineSample cr = augment_apply(s, crop);
  CHECK(cr.img.w == s.img.w - 8);
  CHECK(cr.img.at(10, 0) == s.img.at(10, 4));
  CHECK(cr.boxes[0].x0 == 0);

  AugmentParams con;
  con.contrast = 0.7f;
  LineSample co = augment_apply(s, con);
  for (size_t i = 0; i < co.img.pix.size(); ++i)
    CHECK(co.img.pix[i] == doctest::Approx(std::min(1.f, s.img.pix[i] * 0.7f)));

  AugmentParams bl;
  bl.blur = 3;
  LineSample b = augment_apply(s, bl);
  double m = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) m += s.img.sample(10 + dy, 10 + dx);
  CHECK(b.img.at(10, 10) == doctest::Approx(m / 9.0).epsilon(1e-5));
}

TEST_CASE("splits enumerate the four training styles plus held-out fonts") {
  FontSplits sp = make_splits(3, 2, 1);
  CHECK(sp.train.size() == 4);
  int total = 0;
  for (auto& [style, ids] : sp.train) total += int(ids.size());
  CHECK(total == 12);
  CHECK(sp.train["R"][0] == "R000");
  CHECK(sp.train["I"][2] == "I002");
  REQUIRE(sp.test.size() == 2);
  CHECK(sp.test[0] == "O000");

  FontAtlas r0 = font_for_id("R000", 5, U"ab ");
  FontAtlas r0b = font_for_id("R000", 5, U"ab ");
  FontAtlas b0 = font_for_id("B000", 5, U"ab ");
  CHECK(r0.style == "regular");
  CHECK(b0.style == "bold");
  CHECK(r0.glyph(U'a').pix == r0b.glyph(U'a').pix);
  CHECK(r0.glyph(U'a').pix != b0.glyph(U'a').pix);
  FontAtlas q = font_for_id("Q001", 5, kAbc);
  CHECK(q.style == "omni");
  CHECK(q.covers(U'z'));
}

TEST_CASE("fonts and line samples survive the disk round trip") {
  std::string dir = tmpdir("font");
  FontAtlas f = gen_font(31, U"abc ");
  f.id = "R007";
  f.style = "regular";
  save_font(f, dir);
  FontAtlas g = load_font(dir);
  CHECK(g.id == "R007");
  CHECK(g.style == "regular");
  REQUIRE(g.glyphs.size() == 4);
  for (auto& [c, img] : f.glyphs) {
    REQUIRE(g.covers(c));
    const Image& h = g.glyph(c);
    REQUIRE(h.w == img.w);
    for (size_t i = 0; i < img.pix.size(); ++i)
      CHECK(std::abs(h.pix[i] - img.pix[i]) <= 0.5f / 255.f + 1e-6f);
  }

  LineSample s = render_line(f, U"cab ab");
  save_line_sample(s, dir + "/lines", 3);
  CHECK(count_line_samples(dir + "/lines") == 0);  // numbering starts at 0
  save_line_sample(s, dir + "/lines", 0);
  LineSample t = load_line_sample(dir + "/lines", 0);
  CHECK(t.text == s.text);
  REQUIRE(t.boxes.size() == s.boxes.size());
  for (size_t i = 0; i < s.boxes.size(); ++i) {
    CHECK(t.boxes[i].ch == s.boxes[i].ch);
    CHECK(t.boxes[i].x0 == s.boxes[i].x0);
    CHECK(t.boxes[i].x1 == s.boxes[i].x1);
  }
  fs::remove_all(dir);
}

TEST_CASE("normalize_line folds case and squeezes junk to single spaces") {
  CHECK(normalize_line(U"Hello,  World!", kAbc) == U"hello world");
  CHECK(normalize_line(U"  a  b  ", kAbc) == U"a b");
  CHECK(normalize_line(U"123", kAbc) == U"");
}
