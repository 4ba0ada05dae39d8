#include <catch2/catch_amalgamated.hpp>
#include <array>
#include <fstream>

#include "support/oracles.hpp"
#include "textmend/metrics.hpp"
#include "textmend/rng.hpp"

using namespace textmend;

namespace {

Sentence cjk(const std::string& s) { return segment(s, SegmentMode::CjkChar); }
Sentence words(const std::string& s) { return segment(s, SegmentMode::LatinWord); }

EvalTriple triple(const std::string& src, const std::string& out, const std::string& tgt) {
  return {cjk(src), cjk(out), cjk(tgt)};
}

std::string fixtures_dir() {
  const char* env = std::getenv("TEXTMEND_FIXTURES");
  return env ? env : std::string(FIXTURES_DIR);
}

}  // namespace

TEST_CASE("prf: perfect corrector") {
  const std::vector<EvalTriple> rows = {triple("ax", "ab", "ab"), triple("cx", "cd", "cd")};
  const PrfScores s = sentence_correction_prf(rows);
  REQUIRE(s.precision == 1.0);
  REQUIRE(s.recall == 1.0);
  REQUIRE(s.f1 == 1.0);
}

TEST_CASE("prf: tp 2 of changed 3 and positive 3") {
  const std::vector<EvalTriple> rows = {
      triple("ax", "ab", "ab"),  // changed, corrected, positive
      triple("cx", "cd", "cd"),  // changed, corrected, positive
      triple("ex", "ey", "ef"),  // changed, wrong, positive
  };
  const PrfScores s = sentence_correction_prf(rows);
  REQUIRE(s.precision == Catch::Approx(2.0 / 3.0).margin(1e-15));
  REQUIRE(s.recall == Catch::Approx(2.0 / 3.0).margin(1e-15));
  REQUIRE(s.f1 == Catch::Approx(2.0 / 3.0).margin(1e-15));
}

TEST_CASE("prf: do-nothing model gets zero by convention") {
  const std::vector<EvalTriple> rows = {triple("ax", "ax", "ab"), triple("cd", "cd", "cd")};
  const PrfScores s = sentence_correction_prf(rows);
  REQUIRE(s.precision == 0.0);
  REQUIRE(s.recall == 0.0);
  REQUIRE(s.f1 == 0.0);
}

TEST_CASE("accuracy examples") {
  REQUIRE(accuracy({triple("a", "b", "b")}) == 1.0);
  REQUIRE(accuracy({triple("a", "c", "b")}) == 0.0);
  const std::vector<EvalTriple> rows = {triple("a", "b", "b"), triple("a", "b", "b"),
                                        triple("a", "b", "b"), triple("a", "x", "b")};
  REQUIRE(accuracy(rows) == 0.75);
  REQUIRE_THROWS_AS(accuracy({}), std::invalid_argument);
}

TEST_CASE("rouge_n examples") {
  REQUIRE(rouge_n(words("a b c"), words("a b c"), 1) == 1.0);
  REQUIRE(rouge_n(words("x y z"), words("a b c"), 1) == 0.0);
  REQUIRE(rouge_n(words("a b c"), words("a x c"), 1) == Catch::Approx(2.0 / 3.0).margin(1e-15));
  REQUIRE_THROWS_AS(rouge_n(words("a"), words(""), 1), std::invalid_argument);
  REQUIRE_THROWS_AS(rouge_n(words("a b"), words("a"), 2), std::invalid_argument);
}

TEST_CASE("rouge_l examples") {
  REQUIRE(rouge_l(words("a b c"), words("a b c")) == 1.0);
  REQUIRE(rouge_l(words("a b c d"), words("a c d")) == 1.0);  // LCS 3 / ref 3
  REQUIRE(rouge_l(words("x y"), words("a b")) == 0.0);
  REQUIRE_THROWS_AS(rouge_l(words("a"), words("")), std::invalid_argument);
}

TEST_CASE("bleu examples") {
  REQUIRE(bleu(words("a b c d"), words("a b c d")) == 1.0);
  REQUIRE(bleu(words("x y"), words("a b")) < 0.05);
  REQUIRE(bleu(words("d c b a"), words("a b c d")) < 1.0);  // order sensitivity
  REQUIRE_THROWS_AS(bleu(words(""), words("a")), std::invalid_argument);
  REQUIRE_THROWS_AS(bleu(words("a"), words("")), std::invalid_argument);
}

TEST_CASE("over_under_counts: trivial cases") {
  const OverUnder perfect = over_under_counts(cjk("axc"), cjk("abc"), cjk("abc"));
  REQUIRE(perfect.over == 0);
  REQUIRE(perfect.under == 0);

  const OverUnder donothing = over_under_counts(cjk("axcyd"), cjk("axcyd"), cjk("abced"));
  REQUIRE(donothing.over == 0);
  REQUIRE(donothing.under == 2);
}

TEST_CASE("over_under_counts: matches the hand-labeled fixture exactly") {
  std::ifstream in(fixtures_dir() + "/over_under_cases.tsv");
  REQUIRE(in.good());
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    REQUIRE(cols.size() == 5);
    const OverUnder ou = over_under_counts(cjk(cols[0]), cjk(cols[1]), cjk(cols[2]));
    INFO("case " << cases << ": " << cols[0] << " / " << cols[1] << " / " << cols[2]);
    REQUIRE(ou.over == static_cast<std::size_t>(std::stoul(cols[3])));
    REQUIRE(ou.under == static_cast<std::size_t>(std::stoul(cols[4])));
    ++cases;
  }
  REQUIRE(cases == 20);
}

TEST_CASE("over_under_counts: invariant under identical suffixes") {
  Rng rng(4242);
  auto random_text = [&](std::size_t max_len) {
    std::string s;
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(4)));
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::string src = random_text(6), out = random_text(6), tgt = random_text(6);
    const std::string suffix = random_text(4);
    const OverUnder plain = over_under_counts(cjk(src), cjk(out), cjk(tgt));
    const OverUnder suffixed =
        over_under_counts(cjk(src + suffix), cjk(out + suffix), cjk(tgt + suffix));
    // brute-force recount through the independent oracle on both forms
    auto u = [&](const std::string& s) { return cjk(s).units(); };
    const auto ref_plain = oracles::over_under(u(src), u(out), u(tgt));
    const auto ref_suffixed =
        oracles::over_under(u(src + suffix), u(out + suffix), u(tgt + suffix));
    REQUIRE(plain.over == ref_plain.first);
    REQUIRE(plain.under == ref_plain.second);
    REQUIRE(suffixed.over == ref_suffixed.first);
    REQUIRE(suffixed.under == ref_suffixed.second);
  }
}

TEST_CASE("metric oracles agree on random pairs") {
  Rng rng(777);
  auto random_sentence = [&](std::size_t min_len) {
    std::string s;
    const std::size_t len = min_len + rng.below(12 - min_len + 1);
    for (std::size_t i = 0; i < len; ++i) {
      s.push_back(static_cast<char>('a' + rng.below(5)));
    }
    return s;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const Sentence gen = cjk(random_sentence(1));
    const Sentence ref = cjk(random_sentence(2));
    REQUIRE(rouge_n(gen, ref, 1) ==
            Catch::Approx(oracles::rouge_n(gen.units(), ref.units(), 1)).margin(1e-12));
    REQUIRE(rouge_n(gen, ref, 2) ==
            Catch::Approx(oracles::rouge_n(gen.units(), ref.units(), 2)).margin(1e-12));
    REQUIRE(rouge_l(gen, ref) ==
            Catch::Approx(oracles::rouge_l(gen.units(), ref.units())).margin(1e-12));
    REQUIRE(bleu(gen, ref) ==
            Catch::Approx(oracles::bleu(gen.units(), ref.units())).margin(1e-12));
  }
}

TEST_CASE("identity metrics are exactly one") {
  Rng rng(31337);
  for (int trial = 0; trial < 20; ++trial) {
    std::string s;
    const std::size_t len = 2 + rng.below(8);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(6)));
    const Sentence x = cjk(s);
    REQUIRE(rouge_n(x, x, 1) == 1.0);
    REQUIRE(rouge_n(x, x, 2) == 1.0);
    REQUIRE(rouge_l(x, x) == 1.0);
    REQUIRE(bleu(x, x) == 1.0);
  }
}

TEST_CASE("evaluate: identity rows give all-ones rates and zero counts") {
  const std::vector<EvalTriple> rows = {triple("ax", "ab", "ab"), triple("by", "bc", "bc")};
  const EvalReport rep = evaluate(rows);
  REQUIRE(rep.precision == 1.0);
  REQUIRE(rep.f1 == 1.0);
  REQUIRE(rep.accuracy == 1.0);
  REQUIRE(rep.rouge1 == 1.0);
  REQUIRE(rep.rougeL == 1.0);
  REQUIRE(rep.bleu == 1.0);
  REQUIRE(rep.overcorrections == 0);
  REQUIRE(rep.undercorrections == 0);
  REQUIRE(rep.rows.size() == 2);
}

TEST_CASE("evaluate: empty rows error") { REQUIRE_THROWS_AS(evaluate({}), std::invalid_argument); }

TEST_CASE("evaluate: aggregate matches component-wise recomputation") {
  Rng rng(55);
  std::vector<EvalTriple> rows;
  auto random_sentence = [&] {
    std::string s;
    const std::size_t len = 2 + rng.below(6);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(4)));
    return s;
  };
  for (int i = 0; i < 40; ++i) rows.push_back(triple(random_sentence(), random_sentence(), random_sentence()));
  const EvalReport rep = evaluate(rows);

  const PrfScores prf = sentence_correction_prf(rows);
  REQUIRE(rep.precision == prf.precision);
  REQUIRE(rep.recall == prf.recall);
  REQUIRE(rep.f1 == prf.f1);
  REQUIRE(rep.accuracy == accuracy(rows));

  double r1 = 0, bl = 0;
  std::size_t over = 0, under = 0;
  for (const auto& t : rows) {
    r1 += rouge_n(t.output, t.target, 1);
    bl += bleu(t.output, t.target);
    const OverUnder ou = over_under_counts(t.source, t.output, t.target);
    over += ou.over;
    under += ou.under;
  }
  REQUIRE(rep.rouge1 == Catch::Approx(r1 / rows.size()).margin(1e-12));
  REQUIRE(rep.bleu == Catch::Approx(bl / rows.size()).margin(1e-12));
  REQUIRE(rep.overcorrections == over);
  REQUIRE(rep.undercorrections == under);
}

TEST_CASE("rates stay in [0,1]") {
  Rng rng(808);
  auto random_sentence = [&] {
    std::string s;
    const std::size_t len = 1 + rng.below(8);
    for (std::size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng.below(3)));
    return s;
  };
  std::vector<EvalTriple> rows;
  for (int i = 0; i < 50; ++i) rows.push_back(triple(random_sentence(), random_sentence(), random_sentence()));
  const EvalReport rep = evaluate(rows);
  for (double v : {rep.precision, rep.recall, rep.f1, rep.accuracy, rep.rouge1, rep.rouge2,
                   rep.rougeL, rep.bleu}) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}
