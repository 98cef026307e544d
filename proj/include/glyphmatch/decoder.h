#pragma once

#include "glyphmatch/encoder.h"
#include "glyphmatch/tensor.h"

namespace gm {

// Class layout for a glyph line built from `alphabet`:
//   [alphabet chars...] [pad region] [blank]
// so n_classes = alphabet.size() + 2 and blank = n_classes - 1.
inline int n_classes(const std::u32string& alphabet) { return static_cast<int>(alphabet.size()) + 2; }
inline int blank_index(const std::u32string& alphabet) { return n_classes(alphabet) - 1; }
inline int pad_class(const std::u32string& alphabet) { return static_cast<int>(alphabet.size()); }

struct DecodeFlags {
  bool pos_enc = true;    // similarity + position/width features through the MLP
  bool self_attn = true;  // transformer over similarity columns
  bool agg_embed = true;  // learnt aggregation embeddings (l2-normalized)
  bool decoder = true;    // false = raw M*S readout, nothing learnt applies
};

// parameters live under "dec."
void init_decoder_params(ParamStore& params, Prng& rng);

// per strip feature row: width (px) of the glyph that row belongs to
std::vector<float> glyph_width_bands(const GlyphLine& line);

// binary glyph map: (alphabet.size() + 1) x 360; row i marks entry i's span
// (pad row last). Rows for zero-width entries are all zero.
Tensor class_matrix(const GlyphLine& line, const std::u32string& alphabet);

// S (360 x W') -> class scores ((|alphabet|+2) x W'). The glyph line must be
// the one S was computed against.
Var decode_map(Graph& g, ParamStore& params, Var S, const GlyphLine& line,
               const std::u32string& alphabet, const DecodeFlags& flags);

}  // namespace gm
