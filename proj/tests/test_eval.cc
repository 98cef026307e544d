#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doctest.h"
#include "glyphmatch/eval.h"
#include "glyphmatch/lm.h"
#include "glyphmatch/metrics.h"
#include "glyphmatch/text.h"

using namespace gm;

namespace {

constexpr char32_t kAbc[] = U"abc ";

Tensor tensor2(int r, int c, const std::vector<float>& v) {
  Tensor t({r, c});
  t.v = v;
  return t;
}

}  // namespace

TEST_CASE("mean column entropy matches a direct computation") {
  // uniform logits: every column at maximum entropy log(R)
  Tensor u({7, 4});
  for (auto& x : u.v) x = 0.42f;
  CHECK(mean_entropy(u) == doctest::Approx(std::log(7.0)).epsilon(1e-9));

  // one dominant logit per column: entropy near zero
  Tensor hot({5, 3});
  for (int j = 0; j < 3; ++j) hot.at(j % 5, j) = 50.f;
  CHECK(mean_entropy(hot) < 1e-6);

  // random logits against a straightforward double-precision oracle
  Prng rng(77);
  Tensor r({6, 9});
  for (auto& x : r.v) x = float(rng.uniform(-3.0, 3.0));
  double want = 0;
  for (int j = 0; j < 9; ++j) {
    double z = 0, h = 0;
    for (int i = 0; i < 6; ++i) z += std::exp(double(r.at(i, j)));
    for (int i = 0; i < 6; ++i) {
      double p = std::exp(double(r.at(i, j))) / z;
      h -= p * std::log(p);
    }
    want += h / 9;
  }
  CHECK(mean_entropy(r) == doctest::Approx(want).epsilon(1e-9));

  CHECK_THROWS(mean_entropy(Tensor({3})));
}

TEST_CASE("recognition output stays inside the alphabet") {
  std::u32string alph = kAbc;
  Model m = Model::init(11, alph);
  FontAtlas font = gen_font(13, alph);
  LineSample s = render_line(font, U"ab");

  RecognizeOptions opt;
  RecognizeResult r = recognize(m, font, alph, s.img, opt);
  CHECK(r.S.shape == std::vector<int>{kGlyphCols, s.img.w / 2});
  CHECK(r.P.shape == std::vector<int>{n_classes(alph), s.img.w / 2});
  for (char32_t c : r.text) CHECK(alph.find(c) != std::u32string::npos);

  // beam path, with and without a language model
  opt.beam = 3;
  RecognizeResult rb = recognize(m, font, alph, s.img, opt);
  for (char32_t c : rb.text) CHECK(alph.find(c) != std::u32string::npos);

  CharLm lm = CharLm::train({U"ab ab", U"ba"}, 2, 1.0, alph);
  opt.lm = &lm;
  RecognizeResult rl = recognize(m, font, alph, s.img, opt);
  for (char32_t c : rl.text) CHECK(alph.find(c) != std::u32string::npos);
}

TEST_CASE("identical exemplar sets tie to the lowest index") {
  std::u32string alph = kAbc;
  Model m = Model::init(21, alph);
  FontAtlas f = gen_font(5, alph);
  std::vector<Image> probes = {render_line(f, U"ab").img};
  CHECK(select_font(m, {f, f}, alph, probes) == 0);
  CHECK_THROWS(select_font(m, {}, alph, probes));
  CHECK_THROWS(select_font(m, {f}, alph, {}));
}

TEST_CASE("evaluation report is internally consistent") {
  std::u32string alph = kAbc;
  Model m = Model::init(31, alph);
  FontAtlas font = gen_font(7, alph);
  std::vector<LineSample> samples = {render_line(font, U"ab"), render_line(font, U"ca b"),
                                     render_line(font, U"bc")};
  std::string path = "eval_report_test.jsonl";
  RecognizeOptions opt;
  EvalSummary sum = evaluate(m, font, alph, samples, opt, path, "cfg-hash-1");

  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<nlohmann::json> rows;
  for (std::string ln; std::getline(in, ln);)
    if (!ln.empty()) rows.push_back(nlohmann::json::parse(ln));
  REQUIRE(rows.size() == samples.size() + 1);

  double cer_acc = 0;
  for (size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto& j = rows[i];
    CHECK(j.at("id").get<int>() == int(i));
    CHECK(utf8_decode(j.at("gt").get<std::string>()) == samples[i].text);
    // stored per-sample rate agrees with a recomputation from gt/pred
    std::u32string gt = utf8_decode(j.at("gt").get<std::string>());
    std::u32string pred = utf8_decode(j.at("pred").get<std::string>());
    CHECK(j.at("cer").get<double>() == doctest::Approx(cer(gt, pred)).epsilon(1e-12));
    CHECK(j.at("wer_tokens").get<double>() == doctest::Approx(wer(gt, pred)).epsilon(1e-12));
    cer_acc += j.at("cer").get<double>();
  }
  const auto& agg = rows.back();
  CHECK(agg.at("aggregate").get<bool>());
  CHECK(agg.at("n").get<int>() == int(samples.size()));
  CHECK(agg.at("cer").get<double>() == doctest::Approx(cer_acc / samples.size()).epsilon(1e-12));
  CHECK(agg.at("fingerprint").get<std::string>() == "cfg-hash-1");
  CHECK(sum.n == int(samples.size()));
  CHECK(sum.cer == doctest::Approx(agg.at("cer").get<double>()).epsilon(1e-12));
  std::remove(path.c_str());
}

TEST_CASE("similarity heatmaps round-trip through pgm") {
  Tensor S = tensor2(2, 2, {-1.f, 0.f, 1.f, 0.5f});
  std::string path = "heatmap_test.pgm";
  write_similarity_heatmap(path, S);
  Image img = read_pgm(path);
  REQUIRE(img.h == 2);
  REQUIRE(img.w == 2);
  CHECK(img.at(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(img.at(1, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(img.at(0, 1) == doctest::Approx(0.5).epsilon(0.005));
  CHECK(img.at(1, 1) == doctest::Approx(0.75).epsilon(0.005));
  CHECK_THROWS(write_similarity_heatmap(path, Tensor({4})));
  std::remove(path.c_str());
}
