#include "glyphmatch/metrics.h"

#include <algorithm>
#include <stdexcept>

#include "glyphmatch/text.h"

namespace gm {

namespace {

// classic two-row DP, unit costs
template <class Seq>
int edit_distance(const Seq& a, const Seq& b) {
  size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = int(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = int(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int levenshtein(const std::u32string& a, const std::u32string& b) { return edit_distance(a, b); }

int levenshtein_tokens(const std::vector<std::u32string>& a,
                       const std::vector<std::u32string>& b) {
  return edit_distance(a, b);
}

double cer(const std::u32string& gt, const std::u32string& pred) {
  if (gt.empty()) throw std::invalid_argument("cer: empty ground truth");
  return double(levenshtein(gt, pred)) / double(gt.size());
}

double wer(const std::u32string& gt, const std::u32string& pred) {
  std::vector<std::u32string> g = split_tokens(gt);
  if (g.empty()) throw std::invalid_argument("wer: ground truth has no words");
  return double(levenshtein_tokens(g, split_tokens(pred))) / double(g.size());
}

double cer(const std::vector<std::u32string>& gt, const std::vector<std::u32string>& pred) {
  if (gt.size() != pred.size()) throw std::invalid_argument("cer: list length mismatch");
  if (gt.empty()) throw std::invalid_argument("cer: no samples");
  double sum = 0;
  for (size_t i = 0; i < gt.size(); ++i) sum += cer(gt[i], pred[i]);
  return sum / double(gt.size());
}

double wer(const std::vector<std::u32string>& gt, const std::vector<std::u32string>& pred) {
  if (gt.size() != pred.size()) throw std::invalid_argument("wer: list length mismatch");
  if (gt.empty()) throw std::invalid_argument("wer: no samples");
  double sum = 0;
  for (size_t i = 0; i < gt.size(); ++i) sum += wer(gt[i], pred[i]);
  return sum / double(gt.size());
}

}  // namespace gm
