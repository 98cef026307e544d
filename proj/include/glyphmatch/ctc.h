#pragma once

#include <vector>

#include "glyphmatch/lm.h"
#include "glyphmatch/tensor.h"

namespace gm {

// Forward-backward CTC loss in log space, double precision.
// logp is T x V row major (per-frame log probabilities), target holds class
// indices (no blanks, no repeats-collapsing applied). Returns -log P(target).
// If grad is non-null it receives dL/dlogp (T x V), the negative posteriors.
double ctc_core(const std::vector<double>& logp, int T, int V, const std::vector<int>& target,
                int blank, std::vector<double>* grad);

// Tape op over a (T x V) log-prob node.
Var ctc_loss(Var log_probs, const std::vector<int>& target, int blank);

// Per-frame argmax, collapse repeats, drop blanks. Ties go to the lowest
// class index.
std::vector<int> greedy_decode(const Tensor& log_probs, int blank);

struct BeamConfig {
  int width = 15;
  double alpha = 1.0;     // LM weight
  double beta = 2.0;      // added on emitting word_sep
  int word_sep = -1;      // class index of the word separator, -1 = none
};

// Prefix beam search over blank/non-blank mass. Per frame, only the top
// `width` classes (blank included in the ranking) may act, which makes
// width=1 coincide with greedy decoding exactly. `class_chars` maps class
// index -> character for LM lookups; both may be empty when lm is null.
std::vector<int> beam_search(const Tensor& log_probs, int blank, const BeamConfig& cfg,
                             const CharLm* lm = nullptr,
                             const std::vector<char32_t>& class_chars = {});

}  // namespace gm
