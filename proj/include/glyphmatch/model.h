#pragma once

#include "glyphmatch/decoder.h"
#include "glyphmatch/encoder.h"

namespace gm {

// Everything learnt, plus the alphabet the model was trained against.
// Recognition may use any other alphabet/glyph line; nothing learnt depends
// on alphabet size.
struct Model {
  ParamStore params;
  std::u32string alphabet;  // letters + trailing space
  int64_t iteration = 0;

  static Model init(uint64_t seed, std::u32string alphabet);
};

struct Forward {
  Var fg = nullptr;  // (360, 256)
  Var fx = nullptr;  // (W', 256)
  Var S = nullptr;   // (360, W')
  Var P = nullptr;   // (n_classes, W')
};

// Full forward pass for one line against one glyph line. `fg` may be passed
// in to reuse an already-encoded strip (same graph); otherwise it is encoded
// here.
Forward model_forward(Graph& g, Model& m, const GlyphLine& line, const std::u32string& alphabet,
                      const Image& img, const DecodeFlags& flags, Var fg = nullptr);

}  // namespace gm
