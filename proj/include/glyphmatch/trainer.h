#pragma once

#include <functional>
#include <string>
#include <vector>

#include "glyphmatch/adam.h"
#include "glyphmatch/model.h"
#include "glyphmatch/synth.h"

namespace gm {

struct TrainConfig {
  int batch = 12;
  double lr = 1e-3;
  double lambda_sim = 1.0;
  double max_grad_norm = 5.0;  // global-norm clip, 0 = off
  int warmup_iters = 150;      // linear lr ramp over the first steps, 0 = off
  int max_iters = 4000;
  int val_every = 400;
  int val_lines_per_font = 100;
  int patience = 3;          // stop after this many validations without CER improvement
  int min_chars = 2, max_chars = 12;  // sampled training line length
  int fonts_per_step = 2;
  bool sim_rowwise = false;  // row-wise variant of the similarity loss
  bool augment = true;
  uint64_t seed = 1;
  std::string out_dir;       // loss.log + checkpoints; empty = no files
  DecodeFlags flags;
  int log_every = 1;
};

struct TrainData {
  std::vector<FontAtlas> fonts;       // training fonts (share `alphabet`)
  std::vector<FontAtlas> omni_fonts;  // random-alphabet fonts mixed in, may be empty
  std::u32string omni_alphabet;       // alphabet of the omni fonts (letters + space)
  std::vector<std::u32string> train_lines;
  std::vector<std::u32string> val_lines;
};

struct TrainResult {
  double best_val_cer = 1e9;
  int64_t iterations = 0;
  std::string best_checkpoint;  // empty when out_dir empty
  std::vector<double> loss_pred, loss_sim;  // per logged iteration
};

// Per-column similarity supervision: weights[r, j] = 1/(span * W') on every
// strip row r of the glyph that owns column j (image pixels [2j, 2j+2)), zero
// elsewhere. The nonzero pattern is the supervision support; the values make
// the tensor sum to 1 over target-bearing columns.
Tensor sim_target_weights(const GlyphLine& line, const std::vector<CharBox>& boxes, int w_img);
// Row-wise flavour: for each strip row r owned by a character present in the
// text, nonzero on the text columns of that character (all occurrences).
Tensor sim_target_weights_rowwise(const GlyphLine& line, const std::vector<CharBox>& boxes, int w_img);

// Column-wise: softmax each column of S over its 360 rows, take -log of the
// probability mass on the target span, mean over target-bearing columns.
// Uniform S gives log(360) - log(span). Row-wise mirrors it: softmax per row
// over columns, mass on the character's columns, mean over supervised rows.
// `weights` supplies the support pattern (from sim_target_weights*).
Var sim_loss(Graph& g, Var S, const Tensor& weights, bool rowwise);

// CTC target indices for `text` under the class layout of `alphabet`.
std::vector<int> ctc_targets(const std::u32string& text, const std::u32string& alphabet);

TrainResult train(Model& m, Adam& adam, const TrainData& data, const TrainConfig& cfg);

// greedy CER of the model on rendered samples (used for validation)
double greedy_cer(Model& m, const FontAtlas& font, const std::u32string& alphabet,
                  const std::vector<LineSample>& samples, const DecodeFlags& flags);

}  // namespace gm
