#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glyphmatch/tensor.h"

namespace gm {

// Character n-gram model with add-k smoothing and hard backoff: if a context
// was never seen, score under the context shortened from the left; the empty
// context is always available. Contexts are padded with kStart at line start.
class CharLm {
 public:
  static constexpr char32_t kStart = 0x2;

  CharLm() = default;
  // lines are used as-is (normalize first); every char must be in vocab
  static CharLm train(const std::vector<std::u32string>& lines, int order, double k,
                      const std::u32string& vocab);

  // context = up to order-1 preceding chars (pad with kStart yourself or use
  // score_next on a raw prefix). next must be in vocab.
  double logprob(const std::u32string& context, char32_t next) const;
  // pads/trims a whole prefix to the context window
  double score_next(const std::u32string& prefix, char32_t next) const;
  double sequence_logprob(const std::u32string& s) const;

  void save(const std::string& path) const;
  static CharLm load(const std::string& path);

  int order() const { return order_; }
  double k() const { return k_; }
  const std::u32string& vocab() const { return vocab_; }
  bool in_vocab(char32_t c) const;

 private:
  int order_ = 0;
  double k_ = 0.0;
  std::u32string vocab_;
  // context string -> successor counts; totals derived as the sum over
  // successors so every conditional sums to one exactly
  std::map<std::u32string, std::map<char32_t, uint64_t>> counts_;
  std::map<std::u32string, uint64_t> totals_;

  friend struct CharLmTestPeek;
};

}  // namespace gm
