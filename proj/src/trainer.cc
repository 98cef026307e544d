#include "glyphmatch/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "glyphmatch/checkpoint.h"
#include "glyphmatch/ctc.h"
#include "glyphmatch/metrics.h"

namespace gm {

namespace {

// glyph-line feature-row span of `ch`, or {0,0} if absent/zero width
std::pair<int, int> entry_span(const GlyphLine& line, char32_t ch) {
  for (const auto& e : line.entries)
    if (e.ch == ch) return {span_lo(e), span_hi(e)};
  return {-1, -1};
}

// target character of feature column j: the box covering image pixel 2j+1
char32_t column_char(const std::vector<CharBox>& boxes, int j) {
  int px = 2 * j + 1;
  for (const auto& b : boxes)
    if (b.x0 <= px && px < b.x1) return b.ch;
  throw std::invalid_argument("sim targets: boxes do not cover the image");
}

}  // namespace

Tensor sim_target_weights(const GlyphLine& line, const std::vector<CharBox>& boxes, int w_img) {
  if (w_img <= 0 || w_img % 2) throw std::invalid_argument("sim targets: bad image width");
  int wp = w_img / 2;
  Tensor w({kGlyphCols, wp});
  for (int j = 0; j < wp; ++j) {
    auto [lo, hi] = entry_span(line, column_char(boxes, j));
    if (lo < 0) throw std::invalid_argument("sim targets: character not in glyph line");
    if (hi <= lo) continue;  // zero-width glyph, nothing to supervise
    float val = 1.f / (float(hi - lo) * float(wp));
    for (int r = lo; r < hi; ++r) w.at(r, j) = val;
  }
  return w;
}

Tensor sim_target_weights_rowwise(const GlyphLine& line, const std::vector<CharBox>& boxes, int w_img) {
  if (w_img <= 0 || w_img % 2) throw std::invalid_argument("sim targets: bad image width");
  int wp = w_img / 2;
  // columns of each character present in the text (all occurrences)
  std::map<char32_t, std::vector<int>> cols;
  for (int j = 0; j < wp; ++j) cols[column_char(boxes, j)].push_back(j);
  int active_rows = 0;
  for (const auto& [ch, js] : cols) {
    auto [lo, hi] = entry_span(line, ch);
    if (lo < 0) throw std::invalid_argument("sim targets: character not in glyph line");
    active_rows += std::max(0, hi - lo);
  }
  Tensor w({kGlyphCols, wp});
  if (!active_rows) return w;
  for (const auto& [ch, js] : cols) {
    auto [lo, hi] = entry_span(line, ch);
    float val = 1.f / (float(js.size()) * float(active_rows));
    for (int r = lo; r < hi; ++r)
      for (int j : js) w.at(r, j) = val;
  }
  return w;
}

Var sim_loss(Graph& g, Var S, const Tensor& weights, bool rowwise) {
  (void)g;  // lives on S's graph
  const Tensor& sv = S->val();
  if (sv.shape != weights.shape) throw std::invalid_argument("sim_loss: weight shape mismatch");
  int R = sv.dim(0), C = sv.dim(1);

  // softmax along rowwise ? rows : columns of S in double; loss is the mean
  // over supervised lines of -log(probability mass on the support)
  int lines = rowwise ? R : C;
  int len = rowwise ? C : R;
  auto at = [&](int l, int k) { return rowwise ? sv.at(l, k) : sv.at(k, l); };
  auto wat = [&](int l, int k) { return rowwise ? weights.at(l, k) : weights.at(k, l); };

  auto grad = std::make_shared<Tensor>(sv.shape);
  double loss = 0;
  int supervised = 0;
  std::vector<double> p(static_cast<size_t>(len));
  std::vector<int> hit;
  for (int l = 0; l < lines; ++l) {
    hit.clear();
    for (int k = 0; k < len; ++k)
      if (wat(l, k) > 0.f) hit.push_back(k);
    if (hit.empty()) continue;
    ++supervised;
    double mx = -1e300;
    for (int k = 0; k < len; ++k) mx = std::max(mx, double(at(l, k)));
    double z = 0;
    for (int k = 0; k < len; ++k) z += (p[size_t(k)] = std::exp(double(at(l, k)) - mx));
    double mass = 0;
    for (int k : hit) mass += p[size_t(k)];
    mass /= z;
    loss -= std::log(std::max(mass, 1e-300));
    // d(-log mass)/ds_k = p_k - [k in support] p_k / mass
    for (int k = 0; k < len; ++k) {
      double pk = p[size_t(k)] / z;
      double gk = pk;
      if (wat(l, k) > 0.f) gk -= pk / std::max(mass, 1e-300);
      (rowwise ? grad->at(l, k) : grad->at(k, l)) += float(gk);
    }
  }
  if (supervised) {
    loss /= supervised;
    for (auto& x : grad->v) x /= float(supervised);
  }
  Tensor out({1});
  out.v[0] = float(loss);
  return S->graph->make(std::move(out), {S}, [S, grad](Node& n) {
    Tensor gg(grad->shape);
    float seed = n.grad.v[0];
    for (size_t i = 0; i < gg.v.size(); ++i) gg.v[i] = seed * grad->v[i];
    S->accum(gg);
  });
}

std::vector<int> ctc_targets(const std::u32string& text, const std::u32string& alphabet) {
  std::vector<int> out;
  out.reserve(text.size());
  for (char32_t c : text) {
    size_t i = alphabet.find(c);
    if (i == std::u32string::npos) throw std::invalid_argument("ctc targets: character not in alphabet");
    out.push_back(int(i));
  }
  return out;
}

namespace {

std::u32string sample_corpus_text(Prng& rng, const std::vector<std::u32string>& lines, int min_c,
                                  int max_c) {
  for (int tries = 0; tries < 100; ++tries) {
    const std::u32string& ln = lines[rng.uniform_int(uint64_t(lines.size()))];
    if (int(ln.size()) < min_c) continue;
    int hi = std::min<int>(max_c, int(ln.size()));
    int L = int(rng.uniform_int(int64_t(min_c), int64_t(hi)));
    int start = int(rng.uniform_int(uint64_t(ln.size()) - uint64_t(L) + 1));
    std::u32string s = ln.substr(size_t(start), size_t(L));
    if (s.find_first_not_of(U' ') != std::u32string::npos) return s;
  }
  throw std::runtime_error("trainer: could not sample a usable text window");
}

std::u32string sample_random_text(Prng& rng, const std::u32string& letters, int min_c, int max_c) {
  int L = int(rng.uniform_int(int64_t(min_c), int64_t(max_c)));
  std::u32string s;
  for (int i = 0; i < L; ++i) s += letters[rng.uniform_int(uint64_t(letters.size()))];
  return s;
}

struct Drawn {
  int font = 0;  // index into the combined font pool
  std::u32string text;
  uint64_t aug_seed = 0;
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

double greedy_cer(Model& m, const FontAtlas& font, const std::u32string& alphabet,
                  const std::vector<LineSample>& samples, const DecodeFlags& flags) {
  GlyphLine line = build_glyph_line(font, alphabet);
  Tensor strip;
  {
    Graph g0;
    strip = encode(g0, m.params, line.img)->val();
  }
  int blank = blank_index(alphabet), pad = pad_class(alphabet);
  std::vector<std::u32string> gts, preds;
  for (const LineSample& s : samples) {
    Graph g;
    Var fg = g.leaf(strip);
    Forward f = model_forward(g, m, line, alphabet, s.img, flags, fg);
    Var logp = log_softmax_rows(transpose(f.P));
    std::vector<int> ids = greedy_decode(logp->val(), blank);
    std::u32string pred;
    for (int id : ids)
      if (id != pad) pred += alphabet[size_t(id)];
    gts.push_back(s.text);
    preds.push_back(pred);
  }
  return cer(gts, preds);
}

TrainResult train(Model& m, Adam& adam, const TrainData& data, const TrainConfig& cfg) {
  if (data.fonts.empty()) throw std::invalid_argument("train: no fonts");
  if (data.train_lines.empty()) throw std::invalid_argument("train: no training text");
  if (cfg.batch < 1 || cfg.lambda_sim < 0) throw std::invalid_argument("train: bad config");
  if (cfg.min_chars < 1 || cfg.max_chars < cfg.min_chars) throw std::invalid_argument("train: bad line lengths");
  if (!data.omni_fonts.empty() && data.omni_alphabet.empty())
    throw std::invalid_argument("train: omni fonts need their alphabet");

  adam.config().lr = cfg.lr;
  adam.init(m.params);

  const std::u32string& alph = m.alphabet;
  int n_reg = int(data.fonts.size());
  int n_all = n_reg + int(data.omni_fonts.size());
  auto font_at = [&](int i) -> const FontAtlas& {
    return i < n_reg ? data.fonts[size_t(i)] : data.omni_fonts[size_t(i - n_reg)];
  };
  auto alph_at = [&](int i) -> const std::u32string& { return i < n_reg ? alph : data.omni_alphabet; };

  std::vector<GlyphLine> lines(static_cast<size_t>(n_all));
  for (int i = 0; i < n_all; ++i) lines[size_t(i)] = build_glyph_line(font_at(i), alph_at(i));

  std::u32string omni_letters = data.omni_alphabet;
  omni_letters.erase(std::remove(omni_letters.begin(), omni_letters.end(), U' '), omni_letters.end());

  // validation lines rendered once, per regular font, no augmentation
  std::vector<std::vector<LineSample>> val(static_cast<size_t>(n_reg));
  if (!data.val_lines.empty() && cfg.val_every > 0)
    for (int fi = 0; fi < n_reg; ++fi)
      for (int k = 0; k < cfg.val_lines_per_font; ++k) {
        std::u32string t = data.val_lines[size_t(k) % data.val_lines.size()];
        if (int(t.size()) > cfg.max_chars) t = t.substr(0, size_t(cfg.max_chars));
        if (t.find_first_not_of(U' ') == std::u32string::npos) continue;
        val[size_t(fi)].push_back(render_line(font_at(fi), t));
      }

  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    log.open(cfg.out_dir + "/loss.log", std::ios::trunc);
    log << "iteration\tloss_pred\tloss_sim\ttotal\tval_cer\n";
  }

  Prng rng(cfg.seed);
  TrainResult res;
  int bad_vals = 0;
  std::vector<int> pool(static_cast<size_t>(n_all));
  for (int i = 0; i < n_all; ++i) pool[size_t(i)] = i;

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    // a few fonts per step; every sample draws one of them
    std::vector<int> picked = pool;
    rng.shuffle(picked);
    picked.resize(size_t(std::min(cfg.fonts_per_step, n_all)));

    std::vector<Drawn> batch(static_cast<size_t>(cfg.batch));
    for (auto& d : batch) {
      d.font = picked[rng.uniform_int(uint64_t(picked.size()))];
      d.text = d.font < n_reg
                   ? sample_corpus_text(rng, data.train_lines, cfg.min_chars, cfg.max_chars)
                   : sample_random_text(rng, omni_letters, cfg.min_chars, cfg.max_chars);
      d.aug_seed = rng.next_u64();
    }

    m.params.zero_grads();
    double pred_sum = 0, sim_sum = 0;
    Tensor seed({1});
    seed.v[0] = 1.f / float(cfg.batch);

    for (int fi : picked) {
      std::vector<const Drawn*> group;
      for (const auto& d : batch)
        if (d.font == fi) group.push_back(&d);
      if (group.empty()) continue;

      Graph g;
      Var fg = encode(g, m.params, lines[size_t(fi)].img);  // one strip encode per font per step
      Var total = nullptr;
      for (const Drawn* d : group) {
        LineSample s = render_line(font_at(fi), d->text);
        if (cfg.augment) s = augment(s, d->aug_seed);
        Forward f = model_forward(g, m, lines[size_t(fi)], alph_at(fi), s.img, cfg.flags, fg);
        Var lp = ctc_loss(log_softmax_rows(transpose(f.P)), ctc_targets(d->text, alph_at(fi)),
                          blank_index(alph_at(fi)));
        Tensor wts = cfg.sim_rowwise ? sim_target_weights_rowwise(lines[size_t(fi)], s.boxes, s.img.w)
                                     : sim_target_weights(lines[size_t(fi)], s.boxes, s.img.w);
        Var ls = sim_loss(g, f.S, wts, cfg.sim_rowwise);
        sim_sum += ls->val().v[0];
        Var term = scale(ls, float(cfg.lambda_sim));
        if (std::isfinite(lp->val().v[0])) {  // infeasible targets contribute similarity only
          pred_sum += lp->val().v[0];
          term = add(term, lp);
        }
        total = total ? add(total, term) : term;
      }
      g.backward(total, &seed);
      g.accumulate_param_grads(m.params);
    }

    if (cfg.max_grad_norm > 0) {
      double n2 = 0;
      for (const auto& [name, gt] : m.params.grads)
        for (float x : gt.v) n2 += double(x) * x;
      if (n2 > cfg.max_grad_norm * cfg.max_grad_norm) {
        float sc = float(cfg.max_grad_norm / std::sqrt(n2));
        for (auto& [name, gt] : m.params.grads)
          for (auto& x : gt.v) x *= sc;
      }
    }
    // Linear warmup against the persistent step counter, so a resumed run sees
    // the same schedule as an uninterrupted one. Constant lr afterwards.
    if (cfg.warmup_iters > 0) {
      double t = double(adam.iteration()) + 1.0;
      adam.config().lr = cfg.lr * std::min(1.0, t / cfg.warmup_iters);
    }
    adam.step(m.params);
    m.iteration = adam.iteration();

    double pred = pred_sum / cfg.batch, sim = sim_sum / cfg.batch;
    bool validate = cfg.val_every > 0 && iter % cfg.val_every == 0 && !data.val_lines.empty();
    double vcer = -1;
    if (validate) {
      double acc = 0;
      int counted = 0;
      for (int fi = 0; fi < n_reg; ++fi)
        if (!val[size_t(fi)].empty()) {
          acc += greedy_cer(m, font_at(fi), alph, val[size_t(fi)], cfg.flags);
          ++counted;
        }
      vcer = counted ? acc / counted : -1;
    }

    if (iter % cfg.log_every == 0 || validate) {
      res.loss_pred.push_back(pred);
      res.loss_sim.push_back(sim);
      if (log)
        log << iter << '\t' << fmt(pred) << '\t' << fmt(sim) << '\t'
            << fmt(pred + cfg.lambda_sim * sim) << '\t' << (vcer >= 0 ? fmt(vcer) : "-") << '\n';
    }

    if (vcer >= 0) {
      if (vcer < res.best_val_cer - 1e-12) {
        res.best_val_cer = vcer;
        bad_vals = 0;
        if (!cfg.out_dir.empty()) {
          res.best_checkpoint = cfg.out_dir + "/best.ckpt";
          save_checkpoint(res.best_checkpoint, m, &adam);
        }
      } else if (++bad_vals >= cfg.patience) {
        res.iterations = iter;
        return res;
      }
    }
    res.iterations = iter;
  }
  return res;
}

}  // namespace gm
