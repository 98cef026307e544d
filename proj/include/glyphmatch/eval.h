#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glyphmatch/ctc.h"
#include "glyphmatch/model.h"
#include "glyphmatch/synth.h"

namespace gm {

struct RecognizeOptions {
  DecodeFlags flags;
  const CharLm* lm = nullptr;
  int beam = 1;  // 1 = greedy
  double alpha = 1.0, beta = 2.0;
};

struct RecognizeResult {
  std::u32string text;
  Tensor S;  // (360, W')
  Tensor P;  // (n_classes, W')
};

RecognizeResult recognize(Model& m, const FontAtlas& exemplars, const std::u32string& alphabet,
                          const Image& img, const RecognizeOptions& opt);

// mean over columns of the entropy (natural log) of softmax(P[:, j])
double mean_entropy(const Tensor& P);

// index of the candidate whose exemplars give the lowest mean entropy summed
// over the probe lines; ties resolved to the lowest index
int select_font(Model& m, const std::vector<FontAtlas>& candidates, const std::u32string& alphabet,
                const std::vector<Image>& probes);

struct EvalSummary {
  int n = 0;
  double cer = 0.0, wer = 0.0;
};

// Evaluates samples against one exemplar set. If report_path is non-empty,
// writes one JSON object per line {id, gt, pred, cer, wer_tokens} followed by
// an aggregate record.
EvalSummary evaluate(Model& m, const FontAtlas& exemplars, const std::u32string& alphabet,
                     const std::vector<LineSample>& samples, const RecognizeOptions& opt,
                     const std::string& report_path = "", const std::string& fingerprint = "");

// similarity heatmap, rows = strip features, cols = line features
void write_similarity_heatmap(const std::string& path, const Tensor& S);

}  // namespace gm
