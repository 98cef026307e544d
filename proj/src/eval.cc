#include "glyphmatch/eval.h"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "glyphmatch/metrics.h"
#include "glyphmatch/text.h"

namespace gm {

namespace {

// Log-probs per frame with the pad class folded into blank: pad marks
// exemplar-strip padding, not text, so at decode time its mass is blank mass.
Tensor frame_log_probs(Var P, const std::u32string& alphabet) {
  Tensor logp = log_softmax_rows(transpose(P))->val();  // (W', V)
  int blank = blank_index(alphabet), pad = pad_class(alphabet);
  int T = logp.dim(0);
  for (int t = 0; t < T; ++t) {
    double a = logp.at(t, blank), b = logp.at(t, pad);
    double mx = std::max(a, b);
    logp.at(t, blank) = float(mx + std::log(std::exp(a - mx) + std::exp(b - mx)));
    logp.at(t, pad) = -1e30f;
  }
  return logp;
}

std::u32string run_decode(const Tensor& logp, const std::u32string& alphabet,
                          const RecognizeOptions& opt) {
  int blank = blank_index(alphabet);
  std::vector<int> ids;
  if (opt.lm || opt.beam > 1) {
    BeamConfig bc;
    bc.width = std::max(1, opt.beam);
    bc.alpha = opt.alpha;
    bc.beta = opt.beta;
    size_t sp = alphabet.find(U' ');
    bc.word_sep = sp == std::u32string::npos ? -1 : int(sp);
    std::vector<char32_t> chars(alphabet.begin(), alphabet.end());
    chars.resize(size_t(n_classes(alphabet)), 0);  // pad/blank rows never emit
    ids = beam_search(logp, blank, bc, opt.lm, chars);
  } else {
    ids = greedy_decode(logp, blank);
  }
  std::u32string text;
  for (int id : ids) text += alphabet[size_t(id)];
  return text;
}

}  // namespace

RecognizeResult recognize(Model& m, const FontAtlas& exemplars, const std::u32string& alphabet,
                          const Image& img, const RecognizeOptions& opt) {
  GlyphLine line = build_glyph_line(exemplars, alphabet);
  Graph g;
  Forward f = model_forward(g, m, line, alphabet, img, opt.flags);
  RecognizeResult out;
  out.S = f.S->val();
  out.P = f.P->val();
  out.text = run_decode(frame_log_probs(f.P, alphabet), alphabet, opt);
  return out;
}

double mean_entropy(const Tensor& P) {
  if (P.shape.size() != 2 || !P.dim(0) || !P.dim(1))
    throw std::invalid_argument("mean_entropy: want a non-empty 2d tensor");
  int R = P.dim(0), C = P.dim(1);
  double acc = 0;
  std::vector<double> p(static_cast<size_t>(R));
  for (int j = 0; j < C; ++j) {
    double mx = -1e300;
    for (int r = 0; r < R; ++r) mx = std::max(mx, double(P.at(r, j)));
    double z = 0;
    for (int r = 0; r < R; ++r) z += (p[size_t(r)] = std::exp(double(P.at(r, j)) - mx));
    double h = 0;
    for (int r = 0; r < R; ++r) {
      double q = p[size_t(r)] / z;
      if (q > 0) h -= q * std::log(q);
    }
    acc += h;
  }
  return acc / C;
}

int select_font(Model& m, const std::vector<FontAtlas>& candidates, const std::u32string& alphabet,
                const std::vector<Image>& probes) {
  if (candidates.empty()) throw std::invalid_argument("select_font: no candidates");
  if (probes.empty()) throw std::invalid_argument("select_font: no probe lines");
  DecodeFlags flags;
  int best = 0;
  double best_h = 1e300;
  for (size_t ci = 0; ci < candidates.size(); ++ci) {
    GlyphLine line = build_glyph_line(candidates[ci], alphabet);
    Tensor strip;
    {
      Graph g0;
      strip = encode(g0, m.params, line.img)->val();
    }
    double h = 0;
    for (const Image& img : probes) {
      Graph g;
      Var fg = g.leaf(strip);
      Forward f = model_forward(g, m, line, alphabet, img, flags, fg);
      h += mean_entropy(f.P->val());
    }
    if (h < best_h) {  // strict: ties stay with the lowest index
      best_h = h;
      best = int(ci);
    }
  }
  return best;
}

EvalSummary evaluate(Model& m, const FontAtlas& exemplars, const std::u32string& alphabet,
                     const std::vector<LineSample>& samples, const RecognizeOptions& opt,
                     const std::string& report_path, const std::string& fingerprint) {
  GlyphLine line = build_glyph_line(exemplars, alphabet);
  Tensor strip;
  {
    Graph g0;
    strip = encode(g0, m.params, line.img)->val();
  }
  std::ofstream rep;
  if (!report_path.empty()) {
    rep.open(report_path, std::ios::trunc);
    if (!rep) throw std::runtime_error("evaluate: cannot write " + report_path);
  }
  EvalSummary sum;
  double cer_acc = 0, wer_acc = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const LineSample& s = samples[i];
    Graph g;
    Var fg = g.leaf(strip);
    Forward f = model_forward(g, m, line, alphabet, s.img, opt.flags, fg);
    std::u32string pred = run_decode(frame_log_probs(f.P, alphabet), alphabet, opt);
    double c = cer(s.text, pred);
    double w = wer(s.text, pred);
    cer_acc += c;
    wer_acc += w;
    ++sum.n;
    if (rep) {
      nlohmann::json j;
      j["id"] = int(i);
      j["gt"] = utf8_encode(s.text);
      j["pred"] = utf8_encode(pred);
      j["cer"] = c;
      j["wer_tokens"] = w;
      rep << j.dump() << '\n';
    }
  }
  if (sum.n) {
    sum.cer = cer_acc / sum.n;
    sum.wer = wer_acc / sum.n;
  }
  if (rep) {
    nlohmann::json j;
    j["aggregate"] = true;
    j["n"] = sum.n;
    j["cer"] = sum.cer;
    j["wer"] = sum.wer;
    if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
    rep << j.dump() << '\n';
  }
  return sum;
}

void write_similarity_heatmap(const std::string& path, const Tensor& S) {
  if (S.shape.size() != 2) throw std::invalid_argument("heatmap: want a 2d tensor");
  write_signed_pgm(path, S.v, S.dim(0), S.dim(1));
}

}  // namespace gm
