#pragma once

#include "glyphmatch/synth.h"
#include "glyphmatch/tensor.h"

namespace gm {

constexpr int kLineHeight = 32;
constexpr int kRefWidth = 720;   // glyph-line strip width
constexpr int kGlyphCols = 360;  // feature columns of the strip
constexpr int kFeatDim = 256;

struct GlyphEntry {
  char32_t ch;  // 0 marks the trailing pad region
  int x0, x1;   // [x0, x1) pixel span in the strip, always even boundaries
};

struct GlyphLine {
  Image img;  // 32 x 720
  std::vector<GlyphEntry> entries;  // alphabet order, pad entry last
};

// One glyph per alphabet character, concatenated; padded with background to
// 720 px, or bilinearly squeezed to 720 px when the glyphs overflow (spans
// rescaled, boundaries kept even).
GlyphLine build_glyph_line(const FontAtlas& font, const std::u32string& alphabet);

// feature-column span of entry i: [x0/2, x1/2)
inline int span_lo(const GlyphEntry& e) { return e.x0 / 2; }
inline int span_hi(const GlyphEntry& e) { return e.x1 / 2; }

// parameters live under "enc."
void init_encoder_params(ParamStore& params, Prng& rng);

// image (h = 32, w % 4 == 0, pixels in [0,1]) -> (w/2, 256) column features
Var encode(Graph& g, ParamStore& params, const Image& img);

// cosine similarity of row features: (Ng, D) x (Nx, D) -> (Ng, Nx) in [-1,1]
Var similarity(Var fg, Var fx);

}  // namespace gm
