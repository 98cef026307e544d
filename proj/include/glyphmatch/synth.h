#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyphmatch/image.h"
#include "glyphmatch/prng.h"

namespace gm {

// Procedural bitmap font: one 32px-tall glyph per character. Every glyph
// width is a multiple of 4 in [12, 28] so the encoder's two width halvings
// stay exact.
struct FontAtlas {
  std::string id;
  std::string style;  // regular | bold | light | italic | other | omni
  std::map<char32_t, Image> glyphs;
  int height = 32;

  const Image& glyph(char32_t c) const;
  bool covers(char32_t c) const { return glyphs.count(c) != 0; }
};

constexpr int kGlyphHeight = 32;

// Fresh stroke-skeleton glyph set for `alphabet` (must include U' ' if text
// will contain spaces; the space glyph is blank).
FontAtlas gen_font(uint64_t seed, const std::u32string& alphabet);

// style in {regular, bold, light, italic, other}; `other` draws its rotation
// and stroke jitter from `seed`.
FontAtlas apply_style(const FontAtlas& base, const std::string& style, uint64_t seed);

// `size` novel symbols (<= 30) mapped onto 'a'.. then '0'..'3'; space added.
FontAtlas gen_random_alphabet_font(uint64_t seed, int size);

struct CharBox {
  char32_t ch;
  int x0, x1;  // [x0, x1) pixel span
};

struct LineSample {
  Image img;  // 32 x W, W a multiple of 4
  std::u32string text;
  std::vector<CharBox> boxes;  // partition of [0, W)
};

// Concatenates glyphs left to right. Throws if a character has no glyph.
LineSample render_line(const FontAtlas& font, const std::u32string& text);

struct AugmentParams {
  int dx = 0, dy = 0;        // translation, |.| <= 2, ink shifted on the canvas
  int crop_l = 0, crop_r = 0;  // pixels removed per side, multiple-of-4 total
  float contrast = 1.f;      // [0.7, 1.3]
  int blur = 1;              // box blur kernel, 1 (none) or 3
};

AugmentParams sample_augment(Prng& rng);
// Applies params; boxes are shifted/cropped with the image and re-clamped so
// they still partition the width. Identity params return the sample unchanged.
LineSample augment_apply(const LineSample& s, const AugmentParams& p);
LineSample augment(const LineSample& s, uint64_t seed);

// FontSynth-style attribute splits: per-style train font ids plus held-out
// test ids of style `other`. Ids look like R000, B001, O000.
struct FontSplits {
  std::map<std::string, std::vector<std::string>> train;  // style letter -> ids
  std::vector<std::string> test;
};
FontSplits make_splits(int fonts_per_style, int test_fonts, uint64_t seed);

// Deterministic font for a split id (style letter + index) under a base seed.
FontAtlas font_for_id(const std::string& id, uint64_t base_seed, const std::u32string& alphabet);

// ---- disk layout ----
// font dir:   font.manifest + one pgm per glyph
// dataset dir: NNNNNN.pgm + NNNNNN.gt (text line, then one box line per char)
void save_font(const FontAtlas& font, const std::string& dir);
FontAtlas load_font(const std::string& dir);
void save_line_sample(const LineSample& s, const std::string& dir, int index);
LineSample load_line_sample(const std::string& dir, int index);
int count_line_samples(const std::string& dir);

std::vector<std::u32string> load_corpus_lines(const std::string& path);
// lowercase, out-of-alphabet -> space, collapse leading/trailing spaces
std::u32string normalize_line(const std::u32string& s, const std::u32string& alphabet);

}  // namespace gm
