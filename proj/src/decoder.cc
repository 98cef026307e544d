#include "glyphmatch/decoder.h"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "glyphmatch/prng.h"

namespace gm {

namespace {

void validate_line(const GlyphLine& line, const std::u32string& alphabet) {
  if (line.entries.size() != alphabet.size() + 1)
    throw std::invalid_argument("glyph line was built for a different alphabet size");
  for (size_t i = 0; i < alphabet.size(); ++i)
    if (line.entries[i].ch != alphabet[i])
      throw std::invalid_argument("glyph line character order disagrees with the alphabet");
  if (line.entries.back().ch != 0)
    throw std::invalid_argument("glyph line is missing its pad entry");
}

constexpr int kHeads = 4;
constexpr int kHeadDim = kGlyphCols / kHeads;  // 90

}  // namespace

std::vector<float> glyph_width_bands(const GlyphLine& line) {
  std::vector<float> bands(kGlyphCols, 0.f);
  for (const GlyphEntry& e : line.entries) {
    float w = float(e.x1 - e.x0);
    for (int r = span_lo(e); r < span_hi(e); ++r) bands[r] = w;
  }
  return bands;
}

Tensor class_matrix(const GlyphLine& line, const std::u32string& alphabet) {
  validate_line(line, alphabet);
  Tensor m({int(alphabet.size()) + 1, kGlyphCols});
  for (size_t i = 0; i < line.entries.size(); ++i)
    for (int r = span_lo(line.entries[i]); r < span_hi(line.entries[i]); ++r)
      m.at(int(i), r) = 1.f;
  return m;
}

void init_decoder_params(ParamStore& p, Prng& rng) {
  auto lin = [&](const std::string& name, int in, int out) {
    p.add(name + ".w", Tensor::xavier({in, out}, in, out, rng));
    p.add(name + ".b", Tensor({out}));
  };
  auto ln = [&](const std::string& name) {
    p.add(name + ".g", Tensor::full({kGlyphCols}, 1.f));
    p.add(name + ".b", Tensor({kGlyphCols}));
  };
  lin("dec.mlp.l1", 4, 16);
  lin("dec.mlp.l2", 16, 32);
  lin("dec.mlp.l3", 32, 1);
  for (int l = 0; l < 3; ++l) {
    std::string pre = "dec.attn" + std::to_string(l);
    lin(pre + ".q", kGlyphCols, kGlyphCols);
    lin(pre + ".k", kGlyphCols, kGlyphCols);
    lin(pre + ".v", kGlyphCols, kGlyphCols);
    lin(pre + ".o", kGlyphCols, kGlyphCols);
    ln(pre + ".ln1");
    lin(pre + ".ff1", kGlyphCols, kGlyphCols);
    lin(pre + ".ff2", kGlyphCols, kGlyphCols);
    ln(pre + ".ln2");
  }
  // Near-identity start: the feature MLP passes the similarity channel
  // through (relu(s) - relu(-s) = s) and the attention output projections
  // begin as small perturbations, so the aggregation head sees the raw
  // similarity structure from step one instead of init noise. Trains far
  // faster than a fully random start; everything remains free to deform.
  Tensor& l1 = p.value("dec.mlp.l1.w");
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 4; ++i) l1.at(i, u) = 0.f;
  l1.at(0, 0) = 1.f;
  l1.at(0, 1) = -1.f;
  Tensor& l2 = p.value("dec.mlp.l2.w");
  for (auto& x : l2.v) x *= 0.05f;
  l2.at(0, 0) = 1.f;
  l2.at(1, 1) = 1.f;
  Tensor& l3 = p.value("dec.mlp.l3.w");
  for (auto& x : l3.v) x *= 0.05f;
  l3.at(0, 0) = 1.f;
  l3.at(1, 0) = -1.f;
  for (int l = 0; l < 3; ++l) {
    std::string pre = "dec.attn" + std::to_string(l);
    for (auto& x : p.value(pre + ".o.w").v) x *= 0.05f;
    for (auto& x : p.value(pre + ".ff2.w").v) x *= 0.05f;
    // Keys start as a copy of the queries, which puts extra weight on the
    // softmax diagonal: each column mostly attends to itself until training
    // decides otherwise. Independent random projections start near uniform
    // attention instead, and that averaging basin is hard to leave: every
    // token turns into the batch mean and the logits go column-constant.
    // Layer 0 sees raw similarity columns whose norms are far below the
    // normalized tokens later layers see, so its copy is scaled up to reach
    // a comparable self-logit.
    Tensor& qw = p.value(pre + ".q.w");
    Tensor& kw = p.value(pre + ".k.w");
    float a = l == 0 ? 3.f : 0.7f;
    for (size_t i = 0; i < qw.v.size(); ++i) {
      qw.v[i] *= a;
      kw.v[i] = qw.v[i];
    }
  }

  p.add("dec.agg.es", Tensor::xavier({kGlyphCols, kGlyphCols}, kGlyphCols, kGlyphCols, rng));
  p.add("dec.agg.em", Tensor::xavier({kGlyphCols, kGlyphCols}, kGlyphCols, kGlyphCols, rng));
  // small random start: a zero template is a stationary point of the
  // normalized embedding and would never move
  p.add("dec.agg.mb", Tensor::xavier({kGlyphCols}, kGlyphCols, kGlyphCols, rng));
  // cosine logits cap softmax confidence far too low for CTC, so the
  // embedded head gets a learnt temperature
  p.add("dec.agg.scale", Tensor::full({1}, 10.f));
}

namespace {

Var linear(Graph& g, ParamStore& p, Var x, const std::string& name) {
  return add_rowvec(matmul(x, g.param(name + ".w", p)), g.param(name + ".b", p));
}

// similarity + position + width features through the 4-16-32-1 MLP
Var position_encode(Graph& g, ParamStore& p, Var S, const std::vector<float>& bands) {
  int rows = S->val().dim(0), cols = S->val().dim(1);
  int64_t n = int64_t(rows) * cols;
  Tensor coords({int(n), 3});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      size_t r = size_t(i) * cols + j;
      coords.at(int(r), 0) = cols > 1 ? float(j) / (cols - 1) : 0.f;
      coords.at(int(r), 1) = rows > 1 ? float(i) / (rows - 1) : 0.f;
      coords.at(int(r), 2) = bands[i] / kRefWidth;
    }
  Var x = concat_cols({reshape(S, {int(n), 1}), g.leaf(std::move(coords))});
  Var h = relu(linear(g, p, x, "dec.mlp.l1"));
  h = relu(linear(g, p, h, "dec.mlp.l2"));
  Var out = linear(g, p, h, "dec.mlp.l3");
  return reshape(out, {rows, cols});
}

// three post-norm layers of 4-head self-attention over the columns of S
Var self_attend(Graph& g, ParamStore& p, Var S) {
  Var x = transpose(S);  // (W', 360) tokens
  for (int l = 0; l < 3; ++l) {
    std::string pre = "dec.attn" + std::to_string(l);
    Var q = linear(g, p, x, pre + ".q");
    Var k = linear(g, p, x, pre + ".k");
    Var v = linear(g, p, x, pre + ".v");
    std::vector<Var> heads;
    for (int h = 0; h < kHeads; ++h) {
      Var qh = slice_cols(q, h * kHeadDim, kHeadDim);
      Var kh = slice_cols(k, h * kHeadDim, kHeadDim);
      Var vh = slice_cols(v, h * kHeadDim, kHeadDim);
      Var logits = scale(matmul(qh, transpose(kh)), 1.f / std::sqrt(float(kHeadDim)));
      heads.push_back(matmul(softmax_rows(logits), vh));
    }
    Var att = linear(g, p, concat_cols(heads), pre + ".o");
    x = layernorm_rows(add(x, att), g.param(pre + ".ln1.g", p), g.param(pre + ".ln1.b", p));
    Var ff = linear(g, p, relu(linear(g, p, x, pre + ".ff1")), pre + ".ff2");
    x = layernorm_rows(add(x, ff), g.param(pre + ".ln2.g", p), g.param(pre + ".ln2.b", p));
  }
  return transpose(x);
}

}  // namespace

Var decode_map(Graph& g, ParamStore& p, Var S, const GlyphLine& line,
               const std::u32string& alphabet, const DecodeFlags& flags) {
  validate_line(line, alphabet);
  if (S->val().ndim() != 2 || S->val().dim(0) != kGlyphCols)
    throw std::invalid_argument("decode_map: S must be (360, W')");
  int wp = S->val().dim(1);
  Tensor m = class_matrix(line, alphabet);
  int na = int(alphabet.size()) + 1;  // alphabet + pad

  if (!flags.decoder) {
    // raw readout: scores = M*S with the blank pinned far below everything
    Var mleaf = g.leaf(std::move(m));
    Var scores = matmul(mleaf, S);  // (na, W')
    Tensor bias({na + 1, wp});
    for (int j = 0; j < wp; ++j) bias.at(na, j) = -1e9f;
    Tensor zcol({wp, 1});
    Var full = transpose(concat_cols({transpose(scores), g.leaf(std::move(zcol))}));
    return add(full, g.leaf(std::move(bias)));
  }

  Var s1 = flags.pos_enc ? position_encode(g, p, S, glyph_width_bands(line)) : S;
  Var s2 = flags.self_attn ? self_attend(g, p, s1) : s1;

  // stack the learnt boundary template under the glyph map rows
  Var mleaf = g.leaf(std::move(m));
  Var mb = reshape(g.param("dec.agg.mb", p), {kGlyphCols, 1});
  Var m_full = transpose(concat_cols({transpose(mleaf), mb}));  // (na+1, 360)

  if (!flags.agg_embed) return matmul(m_full, s2);

  Var mu = l2_normalize_rows(matmul(m_full, g.param("dec.agg.em", p)));
  Var e = l2_normalize_rows(transpose(matmul(g.param("dec.agg.es", p), s2)));
  Var cos = matmul(mu, transpose(e));  // (na+1, W') in [-1,1]
  return scale_by(cos, g.param("dec.agg.scale", p));
}

}  // namespace gm
