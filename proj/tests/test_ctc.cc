#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "doctest.h"
#include "glyphmatch/ctc.h"
#include "glyphmatch/prng.h"

using namespace gm;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// normalized random log probs, double precision
std::vector<double> random_logp(int T, int V, Prng& rng) {
  std::vector<double> lp(size_t(T) * V);
  for (int t = 0; t < T; ++t) {
    double mx = -kInf;
    for (int c = 0; c < V; ++c) {
      lp[size_t(t) * V + c] = rng.uniform(-3, 3);
      mx = std::max(mx, lp[size_t(t) * V + c]);
    }
    double z = 0;
    for (int c = 0; c < V; ++c) z += std::exp(lp[size_t(t) * V + c] - mx);
    double logz = mx + std::log(z);
    for (int c = 0; c < V; ++c) lp[size_t(t) * V + c] -= logz;
  }
  return lp;
}

std::vector<int> collapse(const std::vector<int>& path, int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int c : path) {
    if (c != prev && c != blank) out.push_back(c);
    prev = c;
  }
  return out;
}

// brute force: walk every V^T path, sum the mass of those collapsing to target
double oracle_loss(const std::vector<double>& logp, int T, int V, const std::vector<int>& target,
                   int blank) {
  double total = 0;
  std::vector<int> path(static_cast<size_t>(T));
  int64_t n = 1;
  for (int t = 0; t < T; ++t) n *= V;
  for (int64_t idx = 0; idx < n; ++idx) {
    int64_t rest = idx;
    double logmass = 0;
    for (int t = 0; t < T; ++t) {
      path[size_t(t)] = int(rest % V);
      rest /= V;
      logmass += logp[size_t(t) * V + path[size_t(t)]];
    }
    if (collapse(path, blank) == target) total += std::exp(logmass);
  }
  return total == 0 ? kInf : -std::log(total);
}

// mass of every collapsed labeling, for optimum checks
std::map<std::vector<int>, double> oracle_all(const std::vector<double>& logp, int T, int V,
                                              int blank) {
  std::map<std::vector<int>, double> mass;
  std::vector<int> path(static_cast<size_t>(T));
  int64_t n = 1;
  for (int t = 0; t < T; ++t) n *= V;
  for (int64_t idx = 0; idx < n; ++idx) {
    int64_t rest = idx;
    double logmass = 0;
    for (int t = 0; t < T; ++t) {
      path[size_t(t)] = int(rest % V);
      rest /= V;
      logmass += logp[size_t(t) * V + path[size_t(t)]];
    }
    mass[collapse(path, blank)] += std::exp(logmass);
  }
  return mass;
}

Tensor to_tensor(const std::vector<double>& lp, int T, int V) {
  Tensor t({T, V});
  for (size_t i = 0; i < lp.size(); ++i) t.v[i] = float(lp[i]);
  return t;
}

// float-rounded copy so oracle and decoder see identical numbers
std::vector<double> rounded(const Tensor& t) {
  return std::vector<double>(t.v.begin(), t.v.end());
}

}  // namespace

TEST_CASE("single frame loss is the target's log probability") {
  Prng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> lp = random_logp(1, 3, rng);
    double loss = ctc_core(lp, 1, 3, {0}, 2, nullptr);
    CHECK(loss == doctest::Approx(-lp[0]).epsilon(1e-12));
  }
}

TEST_CASE("uniform three-frame single-char instance") {
  // six alignments collapse to "a": aaa aa- a-- -aa --a -a-
  std::vector<double> lp(9, std::log(1.0 / 3));
  double loss = ctc_core(lp, 3, 3, {0}, 2, nullptr);
  CHECK(loss == doctest::Approx(-std::log(6.0 / 27)).epsilon(1e-12));
  CHECK(loss == doctest::Approx(oracle_loss(lp, 3, 3, {0}, 2)).epsilon(1e-12));
}

TEST_CASE("loss matches exhaustive alignment enumeration") {
  Prng rng(17);
  int infeasible_seen = 0;
  for (int trial = 0; trial < 500; ++trial) {
    int T = int(rng.uniform_int(1, 6));
    int V = int(rng.uniform_int(2, 4));
    int blank = V - 1;
    std::vector<double> lp = random_logp(T, V, rng);
    std::vector<int> target;
    int len = int(rng.uniform_int(0, 3));
    for (int i = 0; i < len; ++i) target.push_back(int(rng.uniform_int(uint64_t(V - 1))));
    double got = ctc_core(lp, T, V, target, blank, nullptr);
    double want = oracle_loss(lp, T, V, target, blank);
    if (want == kInf) {
      CHECK(got == kInf);
      ++infeasible_seen;
    } else {
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
      CHECK(got >= -1e-12);  // a labeling never has probability above one
    }
  }
  CHECK(infeasible_seen > 0);  // the draw covers the infeasible branch too
}

TEST_CASE("gradient matches central differences in double precision") {
  Prng rng(27);
  for (int trial = 0; trial < 50; ++trial) {
    int T = int(rng.uniform_int(2, 5));
    int V = int(rng.uniform_int(2, 4));
    int blank = V - 1;
    std::vector<int> target;
    int len = int(rng.uniform_int(1, 2));
    for (int i = 0; i < len; ++i) target.push_back(int(rng.uniform_int(uint64_t(V - 1))));
    std::vector<double> lp = random_logp(T, V, rng);
    if (ctc_core(lp, T, V, target, blank, nullptr) == kInf) continue;
    std::vector<double> grad;
    ctc_core(lp, T, V, target, blank, &grad);
    const double h = 1e-5;
    for (size_t i = 0; i < lp.size(); ++i) {
      double orig = lp[i];
      lp[i] = orig + h;
      double up = ctc_core(lp, T, V, target, blank, nullptr);
      lp[i] = orig - h;
      double dn = ctc_core(lp, T, V, target, blank, nullptr);
      lp[i] = orig;
      double num = (up - dn) / (2 * h);
      CHECK(std::fabs(num - grad[i]) / std::max({1.0, std::fabs(num), std::fabs(grad[i])}) <
            1e-3);
    }
  }
}

TEST_CASE("per frame posteriors sum to one") {
  Prng rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    int T = int(rng.uniform_int(2, 6));
    std::vector<double> lp = random_logp(T, 4, rng);
    std::vector<int> target = {0, 1};
    std::vector<double> grad;
    if (ctc_core(lp, T, 4, target, 3, &grad) == kInf) continue;
    for (int t = 0; t < T; ++t) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += grad[size_t(t) * 4 + c];
      CHECK(s == doctest::Approx(-1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("labeling probabilities partition the path space") {
  Prng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    int T = int(rng.uniform_int(2, 4));
    int V = 3, blank = 2;
    std::vector<double> lp = random_logp(T, V, rng);
    // every target writable with classes {0,1} up to length T
    double total = 0;
    std::vector<std::vector<int>> frontier = {{}};
    for (int len = 0; len <= T; ++len) {
      std::vector<std::vector<int>> next;
      for (const auto& tgt : frontier) {
        if (int(tgt.size()) == len) {
          double loss = ctc_core(lp, T, V, tgt, blank, nullptr);
          if (loss != kInf) total += std::exp(-loss);
          for (int c = 0; c < V - 1; ++c) {
            auto longer = tgt;
            longer.push_back(c);
            next.push_back(longer);
          }
        }
      }
      frontier = next;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("too long targets are flagged with infinite loss and zero gradient") {
  std::vector<double> lp(6, std::log(1.0 / 3));  // T=2, V=3
  std::vector<double> grad;
  CHECK(ctc_core(lp, 2, 3, {0, 0}, 2, &grad) == kInf);  // repeat needs a blank frame
  for (double g : grad) CHECK(g == 0.0);
  CHECK(ctc_core(lp, 2, 3, {0, 1, 0}, 2, nullptr) == kInf);
  CHECK(ctc_core(lp, 2, 3, {0, 1}, 2, nullptr) != kInf);
}

TEST_CASE("loss rejects malformed inputs") {
  std::vector<double> lp(6, std::log(1.0 / 3));
  CHECK_THROWS_AS(ctc_core(lp, 2, 3, {2}, 2, nullptr), std::invalid_argument);  // blank target
  CHECK_THROWS_AS(ctc_core(lp, 2, 3, {5}, 2, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(ctc_core(lp, 2, 3, {0}, 7, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(ctc_core(lp, 2, 2, {0}, 1, nullptr), std::invalid_argument);  // size mismatch
}

TEST_CASE("loss node backpropagates the stored posteriors") {
  Prng rng(57);
  std::vector<double> lp = random_logp(4, 3, rng);
  std::vector<int> target = {0, 1};
  std::vector<double> want_grad;
  double want = ctc_core(lp, 4, 3, target, 2, &want_grad);

  Graph g;
  Var leaf = g.leaf(to_tensor(lp, 4, 3), true);
  Var loss = ctc_loss(leaf, target, 2);
  CHECK(double(loss->val().v[0]) == doctest::Approx(want).epsilon(1e-6));
  Var scaled = scale(loss, 0.5);  // seed scaling must flow through
  g.backward(scaled);
  REQUIRE(leaf->has_grad);
  for (size_t i = 0; i < want_grad.size(); ++i)
    CHECK(double(leaf->grad.v[i]) == doctest::Approx(0.5 * want_grad[i]).epsilon(1e-5));
}

TEST_CASE("greedy decoding collapses repeats and drops blanks") {
  // argmax pattern [a, a, blank, a] over three classes
  Tensor lp({4, 3});
  float rows[4][3] = {{0, -1, -2}, {0, -2, -1}, {-3, -2, 0}, {0, -1, -1}};
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 3; ++c) lp.at(t, c) = rows[t][c];
  CHECK(greedy_decode(lp, 2) == std::vector<int>{0, 0});

  Tensor all_blank({3, 3});
  for (int t = 0; t < 3; ++t) {
    all_blank.at(t, 0) = -5;
    all_blank.at(t, 1) = -5;
    all_blank.at(t, 2) = 0;
  }
  CHECK(greedy_decode(all_blank, 2).empty());

  Tensor tie({1, 3});  // equal scores: lowest class index wins
  CHECK(greedy_decode(tie, 2) == std::vector<int>{0});
}

TEST_CASE("width one beam equals greedy decoding") {
  Prng rng(67);
  BeamConfig cfg;
  cfg.width = 1;
  for (int trial = 0; trial < 100; ++trial) {
    int T = int(rng.uniform_int(1, 12));
    int V = int(rng.uniform_int(2, 6));
    Tensor lp = to_tensor(random_logp(T, V, rng), T, V);
    CHECK(beam_search(lp, V - 1, cfg) == greedy_decode(lp, V - 1));
  }
}

TEST_CASE("wide beam finds the most probable labeling on small instances") {
  Prng rng(77);
  BeamConfig cfg;  // width 15
  for (int trial = 0; trial < 60; ++trial) {
    int T = int(rng.uniform_int(1, 3));
    int V = int(rng.uniform_int(2, 3));
    int blank = V - 1;
    Tensor lpt = to_tensor(random_logp(T, V, rng), T, V);
    std::vector<double> lp = rounded(lpt);
    std::map<std::vector<int>, double> mass = oracle_all(lp, T, V, blank);
    double best = 0;
    for (const auto& [tgt, m] : mass) best = std::max(best, m);

    std::vector<int> found = beam_search(lpt, blank, cfg);
    double found_mass = mass.at(found);
    CHECK(found_mass == doctest::Approx(best).epsilon(1e-9));

    // and the exhaustive optimum is never below the greedy result
    double greedy_mass = mass.at(greedy_decode(lpt, blank));
    CHECK(found_mass >= greedy_mass - 1e-12);
  }
}

TEST_CASE("language model fusion steers near-uniform acoustics") {
  // classes: 0='a', 1='b', 2=blank; acoustics tilt gently toward "ba",
  // the model knows only "ab"
  int T = 4, V = 3;
  Tensor lp({T, V});
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < V; ++c) lp.at(t, c) = std::log(1.0f / 3);
  lp.at(0, 1) += 0.10f;  // favor b early
  lp.at(0, 0) -= 0.10f;
  lp.at(3, 0) += 0.10f;  // favor a late
  lp.at(3, 1) -= 0.10f;

  BeamConfig cfg;
  CHECK(beam_search(lp, 2, cfg) == std::vector<int>{1, 0});

  std::vector<std::u32string> corpus(50, U"ab");
  CharLm lm = CharLm::train(corpus, 3, 0.1, U"ab");
  std::vector<char32_t> chars = {U'a', U'b', 0};
  CHECK(beam_search(lp, 2, cfg, &lm, chars) == std::vector<int>{0, 1});
}

TEST_CASE("word bonus rewards emitting the separator") {
  // classes: 0='a', 1=space, 2=blank; space trails slightly
  Tensor lp({1, 3});
  lp.at(0, 0) = std::log(0.45f);
  lp.at(0, 1) = std::log(0.40f);
  lp.at(0, 2) = std::log(0.15f);
  BeamConfig cfg;
  cfg.width = 3;
  CHECK(beam_search(lp, 2, cfg) == std::vector<int>{0});
  cfg.word_sep = 1;  // beta 2.0 outweighs the acoustic gap
  CHECK(beam_search(lp, 2, cfg) == std::vector<int>{1});
}

TEST_CASE("beam search validates its inputs") {
  Tensor lp({2, 3});
  BeamConfig cfg;
  cfg.width = 0;
  CHECK_THROWS_AS(beam_search(lp, 2, cfg), std::invalid_argument);
  cfg.width = 2;
  CHECK_THROWS_AS(beam_search(lp, 5, cfg), std::invalid_argument);
  CharLm lm = CharLm::train({U"ab"}, 2, 0.1, U"ab");
  CHECK_THROWS_AS(beam_search(lp, 2, cfg, &lm, {U'a'}), std::invalid_argument);
}
