#include "glyphmatch/lm.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gm {

namespace {

std::string hex_char(char32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%x", static_cast<unsigned>(c));
  return buf;
}

std::string hex_context(const std::u32string& ctx) {
  if (ctx.empty()) return "-";  // a field the tokenizer can round-trip
  std::string out;
  for (size_t i = 0; i < ctx.size(); ++i) {
    if (i) out += '+';
    out += hex_char(ctx[i]);
  }
  return out;
}

char32_t parse_hex_char(const std::string& s) {
  size_t pos = 0;
  unsigned long v = std::stoul(s, &pos, 16);
  if (pos != s.size()) throw std::runtime_error("bad hex codepoint: " + s);
  return static_cast<char32_t>(v);
}

std::u32string parse_context(const std::string& field) {
  if (field == "-") return U"";
  std::u32string ctx;
  size_t start = 0;
  while (start <= field.size()) {
    size_t plus = field.find('+', start);
    size_t end = plus == std::string::npos ? field.size() : plus;
    ctx += parse_hex_char(field.substr(start, end - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return ctx;
}

}  // namespace

CharLm CharLm::train(const std::vector<std::u32string>& lines, int order, double k,
                     const std::u32string& vocab) {
  if (order < 1) throw std::invalid_argument("lm order must be at least 1");
  if (!(k > 0)) throw std::invalid_argument("lm smoothing constant must be positive");
  std::set<char32_t> vset(vocab.begin(), vocab.end());
  if (vset.empty()) throw std::invalid_argument("lm vocabulary is empty");
  if (vset.count(kStart)) throw std::invalid_argument("lm vocabulary contains the start padding symbol");

  CharLm lm;
  lm.order_ = order;
  lm.k_ = k;
  lm.vocab_.assign(vset.begin(), vset.end());

  size_t total_chars = 0;
  for (const std::u32string& line : lines) {
    total_chars += line.size();
    std::u32string padded(size_t(order - 1), kStart);
    padded += line;
    for (size_t i = 0; i < line.size(); ++i) {
      char32_t next = line[i];
      if (!vset.count(next)) throw std::invalid_argument("corpus character outside the vocabulary");
      size_t pos = i + size_t(order - 1);  // index of `next` in padded
      for (int len = 0; len < order; ++len) {
        std::u32string ctx = padded.substr(pos - size_t(len), size_t(len));
        ++lm.counts_[ctx][next];
        ++lm.totals_[ctx];
      }
    }
  }
  if (total_chars == 0) throw std::invalid_argument("lm corpus is empty");
  return lm;
}

bool CharLm::in_vocab(char32_t c) const { return vocab_.find(c) != std::u32string::npos; }

double CharLm::logprob(const std::u32string& context, char32_t next) const {
  if (!in_vocab(next)) throw std::invalid_argument("lm query character outside the vocabulary");
  std::u32string ctx = context;
  if (int(ctx.size()) > order_ - 1) ctx = ctx.substr(ctx.size() - size_t(order_ - 1));
  const double kv = k_ * double(vocab_.size());
  for (;;) {
    auto it = totals_.find(ctx);
    if (it != totals_.end() && it->second > 0) {
      const auto& succ = counts_.at(ctx);
      auto cit = succ.find(next);
      double c = cit == succ.end() ? 0.0 : double(cit->second);
      return std::log((c + k_) / (double(it->second) + kv));
    }
    if (ctx.empty()) return std::log(1.0 / double(vocab_.size()));  // untrained fallback
    ctx.erase(ctx.begin());
  }
}

double CharLm::score_next(const std::u32string& prefix, char32_t next) const {
  size_t want = size_t(order_ - 1);
  std::u32string ctx;
  if (prefix.size() >= want) {
    ctx = prefix.substr(prefix.size() - want);
  } else {
    ctx.assign(want - prefix.size(), kStart);
    ctx += prefix;
  }
  return logprob(ctx, next);
}

double CharLm::sequence_logprob(const std::u32string& s) const {
  double sum = 0;
  for (size_t i = 0; i < s.size(); ++i) sum += score_next(s.substr(0, i), s[i]);
  return sum;
}

void CharLm::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write lm file: " + path);
  char kbuf[32];
  std::snprintf(kbuf, sizeof kbuf, "%.17g", k_);
  out << "NGLM 1 " << order_ << ' ' << kbuf << ' ' << vocab_.size() << '\n';
  for (char32_t c : vocab_) out << hex_char(c) << '\n';
  for (const auto& [ctx, succ] : counts_)
    for (const auto& [c, n] : succ)
      out << ctx.size() + 1 << ' ' << hex_context(ctx) << ' ' << hex_char(c) << ' ' << n << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

CharLm CharLm::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read lm file: " + path);
  std::string magic;
  int version = 0;
  CharLm lm;
  size_t vsize = 0;
  if (!(in >> magic >> version >> lm.order_ >> lm.k_ >> vsize) || magic != "NGLM" || version != 1)
    throw std::runtime_error("not an lm file: " + path);
  if (lm.order_ < 1 || vsize == 0) throw std::runtime_error("corrupt lm header: " + path);
  std::string tok;
  for (size_t i = 0; i < vsize; ++i) {
    if (!(in >> tok)) throw std::runtime_error("truncated lm vocabulary: " + path);
    lm.vocab_ += parse_hex_char(tok);
  }
  int row_order = 0;
  std::string ctx_field, char_field;
  uint64_t count = 0;
  while (in >> row_order >> ctx_field >> char_field >> count) {
    std::u32string ctx = parse_context(ctx_field);
    if (row_order != int(ctx.size()) + 1 || row_order > lm.order_)
      throw std::runtime_error("corrupt lm row: " + path);
    lm.counts_[ctx][parse_hex_char(char_field)] += count;
    lm.totals_[ctx] += count;
  }
  if (!in.eof()) throw std::runtime_error("corrupt lm file: " + path);
  return lm;
}

}  // namespace gm
