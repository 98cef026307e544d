#include "glyphmatch/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>

namespace gm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

double ctc_core(const std::vector<double>& logp, int T, int V, const std::vector<int>& target,
                int blank, std::vector<double>* grad) {
  if (T < 1 || V < 1 || logp.size() != size_t(T) * V)
    throw std::invalid_argument("ctc: log-prob matrix shape mismatch");
  if (blank < 0 || blank >= V) throw std::invalid_argument("ctc: blank index out of range");
  for (int c : target)
    if (c < 0 || c >= V || c == blank)
      throw std::invalid_argument("ctc: target class out of range");
  if (grad) grad->assign(size_t(T) * V, 0.0);

  // shortest feasible path: every char plus a separating blank per repeat
  int need = int(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++need;
  if (T < need) return std::numeric_limits<double>::infinity();

  const int L = 2 * int(target.size()) + 1;
  auto ext = [&](int i) { return i % 2 == 0 ? blank : target[size_t(i) / 2]; };
  auto lp = [&](int t, int i) { return logp[size_t(t) * V + ext(i)]; };

  // alpha and beta both include the emission at their own frame
  std::vector<double> alpha(size_t(T) * L, kNegInf), beta(size_t(T) * L, kNegInf);
  alpha[0] = lp(0, 0);
  if (L > 1) alpha[1] = lp(0, 1);
  for (int t = 1; t < T; ++t)
    for (int i = 0; i < L; ++i) {
      double a = alpha[size_t(t - 1) * L + i];
      if (i >= 1) a = lse2(a, alpha[size_t(t - 1) * L + i - 1]);
      if (i >= 2 && ext(i) != blank && ext(i) != ext(i - 2))
        a = lse2(a, alpha[size_t(t - 1) * L + i - 2]);
      alpha[size_t(t) * L + i] = a == kNegInf ? kNegInf : a + lp(t, i);
    }

  double ll = alpha[size_t(T - 1) * L + L - 1];
  if (L > 1) ll = lse2(ll, alpha[size_t(T - 1) * L + L - 2]);
  if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
  if (!grad) return -ll;

  beta[size_t(T - 1) * L + L - 1] = lp(T - 1, L - 1);
  if (L > 1) beta[size_t(T - 1) * L + L - 2] = lp(T - 1, L - 2);
  for (int t = T - 2; t >= 0; --t)
    for (int i = 0; i < L; ++i) {
      double b = beta[size_t(t + 1) * L + i];
      if (i + 1 < L) b = lse2(b, beta[size_t(t + 1) * L + i + 1]);
      if (i + 2 < L && ext(i + 2) != blank && ext(i + 2) != ext(i))
        b = lse2(b, beta[size_t(t + 1) * L + i + 2]);
      beta[size_t(t) * L + i] = b == kNegInf ? kNegInf : b + lp(t, i);
    }

  // dL/dlogp[t][c] = -P(paths emitting c at t | target)
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < L; ++i) {
      double a = alpha[size_t(t) * L + i], b = beta[size_t(t) * L + i];
      if (a == kNegInf || b == kNegInf) continue;
      (*grad)[size_t(t) * V + ext(i)] -= std::exp(a + b - lp(t, i) - ll);
    }
  return -ll;
}

Var ctc_loss(Var log_probs, const std::vector<int>& target, int blank) {
  const Tensor& lp = log_probs->val();
  if (lp.ndim() != 2) throw std::invalid_argument("ctc_loss: expected (T,V) log probs");
  int T = lp.dim(0), V = lp.dim(1);
  std::vector<double> dlp(lp.v.begin(), lp.v.end());
  auto grad = std::make_shared<std::vector<double>>();
  double loss = ctc_core(dlp, T, V, target, blank, grad.get());
  Tensor out({1});
  out.v[0] = static_cast<float>(loss);
  return log_probs->graph->make(std::move(out), {log_probs}, [log_probs, grad](Node& n) {
    Tensor g(log_probs->val().shape);
    float seed = n.grad.v[0];
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = seed * static_cast<float>((*grad)[i]);
    log_probs->accum(g);
  });
}

std::vector<int> greedy_decode(const Tensor& log_probs, int blank) {
  if (log_probs.ndim() != 2) throw std::invalid_argument("greedy_decode: expected (T,V)");
  int T = log_probs.dim(0), V = log_probs.dim(1);
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < T; ++t) {
    int best = 0;
    for (int c = 1; c < V; ++c)
      if (log_probs.at(t, c) > log_probs.at(t, best)) best = c;
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

namespace {

struct Hyp {
  double pb = kNegInf;   // prefix mass ending in blank
  double pnb = kNegInf;  // prefix mass ending in its last char
  double total() const { return lse2(pb, pnb); }
};

}  // namespace

std::vector<int> beam_search(const Tensor& log_probs, int blank, const BeamConfig& cfg,
                             const CharLm* lm, const std::vector<char32_t>& class_chars) {
  if (log_probs.ndim() != 2) throw std::invalid_argument("beam_search: expected (T,V)");
  if (cfg.width < 1) throw std::invalid_argument("beam_search: width must be positive");
  int T = log_probs.dim(0), V = log_probs.dim(1);
  if (blank < 0 || blank >= V) throw std::invalid_argument("beam_search: blank out of range");
  if (lm && int(class_chars.size()) != V)
    throw std::invalid_argument("beam_search: class_chars must cover every class when fusing an lm");

  auto prefix_chars = [&](const std::vector<int>& prefix) {
    std::u32string s;
    s.reserve(prefix.size());
    for (int c : prefix) s += class_chars[size_t(c)];
    return s;
  };

  std::map<std::vector<int>, Hyp> beam;
  beam[{}] = Hyp{0.0, kNegInf};

  std::vector<int> ranked(static_cast<size_t>(V));
  for (int t = 0; t < T; ++t) {
    // only the best `width` classes of this frame may act; ties to the
    // lowest index, same as the greedy argmax rule
    for (int c = 0; c < V; ++c) ranked[size_t(c)] = c;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](int a, int b) { return log_probs.at(t, a) > log_probs.at(t, b); });
    int acting = std::min(cfg.width, V);

    std::map<std::vector<int>, Hyp> next;
    for (const auto& [prefix, h] : beam) {
      double total = h.total();
      for (int r = 0; r < acting; ++r) {
        int c = ranked[size_t(r)];
        double p = log_probs.at(t, c);
        if (c == blank) {
          Hyp& nb = next[prefix];
          nb.pb = lse2(nb.pb, total + p);
          continue;
        }
        double bonus = 0;
        if (lm) bonus += cfg.alpha * lm->score_next(prefix_chars(prefix), class_chars[size_t(c)]);
        if (c == cfg.word_sep) bonus += cfg.beta;
        if (!prefix.empty() && prefix.back() == c) {
          Hyp& stay = next[prefix];  // repeat frame, no new character
          stay.pnb = lse2(stay.pnb, h.pnb + p);
          std::vector<int> longer = prefix;
          longer.push_back(c);
          Hyp& grown = next[longer];  // blank boundary then the same char again
          grown.pnb = lse2(grown.pnb, h.pb + p + bonus);
        } else {
          std::vector<int> longer = prefix;
          longer.push_back(c);
          Hyp& grown = next[longer];
          grown.pnb = lse2(grown.pnb, total + p + bonus);
        }
      }
    }

    // prune to the beam width; map order makes ties deterministic
    std::vector<std::pair<const std::vector<int>*, double>> order;
    order.reserve(next.size());
    for (const auto& [prefix, h] : next) order.emplace_back(&prefix, h.total());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (int(order.size()) > cfg.width) order.resize(size_t(cfg.width));
    std::map<std::vector<int>, Hyp> pruned;
    for (const auto& [prefix, total] : order) pruned[*prefix] = next[*prefix];
    beam = std::move(pruned);
  }

  const std::vector<int>* best = nullptr;
  double best_total = kNegInf;
  for (const auto& [prefix, h] : beam)
    if (best == nullptr || h.total() > best_total) {
      best = &prefix;
      best_total = h.total();
    }
  return best ? *best : std::vector<int>{};
}

}  // namespace gm
