#include "glyphmatch/model.h"

namespace gm {

Model Model::init(uint64_t seed, std::u32string alphabet) {
  if (alphabet.empty()) throw std::invalid_argument("model: empty alphabet");
  Model m;
  m.alphabet = std::move(alphabet);
  Prng rng(seed);
  init_encoder_params(m.params, rng);
  init_decoder_params(m.params, rng);
  return m;
}

Forward model_forward(Graph& g, Model& m, const GlyphLine& line, const std::u32string& alphabet,
                      const Image& img, const DecodeFlags& flags, Var fg) {
  Forward f;
  f.fg = fg ? fg : encode(g, m.params, line.img);
  f.fx = encode(g, m.params, img);
  f.S = similarity(f.fg, f.fx);
  f.P = decode_map(g, m.params, f.S, line, alphabet, flags);
  return f;
}

}  // namespace gm
