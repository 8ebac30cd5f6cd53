#include <doctest.h>

#include <cmath>
#include <fstream>

#include "clampcap/metrics/metrics.hpp"
#include "metric_fixture.hpp"
#include "support.hpp"

using namespace clampcap;
using namespace clampcap::metrics;
using testing::thrown_kind;

using testing::fixture;
using testing::kFixtureOracle;
using testing::pair;
using testing::words;

namespace {

constexpr double kOracleTol = 1e-9;

}  // namespace

TEST_CASE("frozen fixture matches the enumeration oracle") {
  const auto corpus = fixture();
  for (int n = 1; n <= 4; ++n) CHECK(std::abs(bleu_n(corpus, n) - kFixtureOracle.bleu[n - 1]) < kOracleTol);
  CHECK(std::abs(rouge_l(corpus) - kFixtureOracle.rouge_l) < kOracleTol);
  CHECK(std::abs(meteor_exact(corpus) - kFixtureOracle.meteor) < kOracleTol);
  CHECK(std::abs(cider_d(corpus) - kFixtureOracle.cider) < kOracleTol);
}

TEST_CASE("BLEU") {
  SUBCASE("clipped unigram precision") {
    const std::vector<EvalPair> c{pair("x", "the the the", {"the cat"})};
    // precision 1/3, candidate longer than reference so no brevity penalty
    CHECK(bleu_n(c, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("brevity penalty at half length") {
    const std::vector<EvalPair> c{pair("x", "a dog", {"a dog is here"})};
    CHECK(bleu_n(c, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("identical corpus scores one for every order") {
    const std::vector<EvalPair> c{pair("x", "a dog barks at night", {"a dog barks at night", "x"}),
                                  pair("y", "birds sing in trees", {"birds sing in trees"})};
    for (int n = 1; n <= 4; ++n) CHECK(bleu_n(c, n) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("monotone in n") {
    const auto c = fixture();
    for (int n = 1; n < 4; ++n) CHECK(bleu_n(c, n) >= bleu_n(c, n + 1));
  }
  SUBCASE("empty candidate") {
    const std::vector<EvalPair> c{pair("x", "", {"a b"})};
    CHECK(bleu_n(c, 1) == 0.0);
  }
}

TEST_CASE("ROUGE-L") {
  CHECK(lcs_length(words("police killed the gunman"), words("police kill the gunman")) == 3);
  CHECK(rouge_l_pair(words("police killed the gunman"), words("police kill the gunman")) ==
        doctest::Approx(0.75).epsilon(1e-12));
  CHECK(rouge_l_pair(words("a b c"), words("a b c")) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rouge_l_pair(words("a b c"), words("x y")) == 0.0);
}

TEST_CASE("METEOR, exact matching") {
  CHECK(meteor_pair(words("a b c d e"), words("a b c d e")) == doctest::Approx(0.996).epsilon(1e-12));
  CHECK(meteor_pair(words("a b"), words("c d")) == 0.0);
  const Alignment al = meteor_align(words("a b x c d"), words("a b c d"));
  CHECK(al.matches == 4);
  CHECK(al.chunks == 2);
  const auto fwd = words("the dog barks at the cat");
  const auto ref = words("the dog barks at the cat");
  auto rev = fwd;
  std::reverse(rev.begin(), rev.end());
  CHECK(meteor_pair(rev, ref) <= meteor_pair(fwd, ref));
}

TEST_CASE("CIDEr-D") {
  SUBCASE("distinct identical captions score ten") {
    // at least four tokens each, so every n-gram order contributes
    const std::vector<EvalPair> c{pair("a", "a dog barks loudly", {"a dog barks loudly"}),
                                  pair("b", "rain falls very hard", {"rain falls very hard"}),
                                  pair("c", "small birds chirp in trees", {"small birds chirp in trees"})};
    CHECK(cider_d(c) == doctest::Approx(10.0).epsilon(1e-12));
  }
  SUBCASE("an n-gram in every clip's references carries no weight") {
    const std::vector<EvalPair> c{pair("a", "noise", {"noise a"}), pair("b", "noise", {"noise b"})};
    CHECK(cider_d(c) == 0.0);
  }
  SUBCASE("disjoint vocabularies") {
    const std::vector<EvalPair> c{pair("a", "x y", {"a b"}), pair("b", "z w", {"c d"})};
    CHECK(cider_d(c) == 0.0);
  }
  SUBCASE("single clip is flagged as degenerate") {
    bool degenerate = false;
    const std::vector<EvalPair> c{pair("a", "a b", {"a b"})};
    CHECK(cider_d(c, {}, &degenerate) == 0.0);
    CHECK(degenerate);
  }
}

TEST_CASE("SPIDEr and relative improvement") {
  CHECK(spider(10.7, 4.0) == doctest::Approx(7.35).epsilon(1e-12));
  CHECK(spider(7.4, 3.3) == doctest::Approx(5.35).epsilon(1e-12));
  CHECK(spider(0.0, 0.0) == 0.0);
  CHECK(thrown_kind([] { spider(1.0, std::optional<double>{}); }) == "MissingSpice");

  MetricReport sys, base;
  sys.spider = 7.4;
  base.spider = 5.4;
  sys.spice = base.spice = 1.0;
  sys.cider = 10.7;
  base.cider = 7.4;
  const auto rel = relative_improvement(sys, base);
  double spider_rel = 0.0;
  for (const auto& [name, v] : rel)
    if (name == "SPIDEr") spider_rel = v;
  CHECK(spider_rel == doctest::Approx(0.37037037037).epsilon(1e-9));
  CHECK(std::round(spider_rel * 100.0) == 37.0);
  const std::string table = format_table(sys, &base);
  CHECK(table.find("SPIDEr") != std::string::npos);
  CHECK(table.find("37.0") != std::string::npos);
}

TEST_CASE("corpus-level invariances") {
  const auto corpus = fixture();
  auto doubled = corpus;
  for (auto p : corpus) {
    p.clip_id += "_copy";
    doubled.push_back(p);
  }
  auto shuffled = corpus;
  std::rotate(shuffled.begin(), shuffled.begin() + 2, shuffled.end());
  for (int n = 1; n <= 4; ++n) {
    CHECK(bleu_n(doubled, n) == doctest::Approx(bleu_n(corpus, n)).epsilon(1e-12));
    CHECK(bleu_n(shuffled, n) == doctest::Approx(bleu_n(corpus, n)).epsilon(1e-12));
  }
  CHECK(rouge_l(doubled) == doctest::Approx(rouge_l(corpus)).epsilon(1e-12));
  CHECK(meteor_exact(doubled) == doctest::Approx(meteor_exact(corpus)).epsilon(1e-12));
  CHECK(cider_d(shuffled) == doctest::Approx(cider_d(corpus)).epsilon(1e-12));

  // IDF is ln(M / df), so duplication is neutral as long as every candidate
  // n-gram occurs in some reference; unseen ones get ln(M) and grow with M.
  std::vector<EvalPair> covered{pair("a", "a dog is barking", {"a dog is barking loudly", "the dog barks"}),
                                pair("b", "rain falls on the roof", {"rain falls on the roof", "it rains"}),
                                pair("c", "the dog barks", {"a bird sings", "the dog barks at a bird"})};
  auto covered_doubled = covered;
  for (auto p : covered) {
    p.clip_id += "_copy";
    covered_doubled.push_back(p);
  }
  CHECK(cider_d(covered_doubled) == doctest::Approx(cider_d(covered)).epsilon(1e-12));
  CHECK(cider_d(doubled) != doctest::Approx(cider_d(corpus)).epsilon(1e-6));
}

TEST_CASE("content-word recall") {
  const std::vector<EvalPair> c{pair("a", "a dog barks", {"a dog is barking", "dog barks"}),
                                pair("b", "a bird", {"a siren wails"})};
  const std::vector<std::string> content{"dog", "barks", "barking", "bird", "siren", "wails"};
  // expected {dog, barking, barks} + {siren, wails}; hits dog, barks
  CHECK(content_word_recall(c, content) == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("files and reports") {
  const auto dir = testing::scratch_dir("metrics");
  std::ofstream(dir / "refs.csv") << "file_name,caption_1,caption_2\n"
                                     "x.wav,A dog barks.,The dog is barking\n"
                                     "y.wav,Rain falls on a roof,Heavy rain\n";
  std::ofstream(dir / "same.csv") << "file_name,caption_predicted\nx.wav,a dog barks\ny.wav,rain falls on a roof\n";
  const MetricReport r = evaluate_corpus(dir / "same.csv", dir / "refs.csv");
  CHECK(r.bleu[0] == doctest::Approx(100.0));
  CHECK(r.rouge_l == doctest::Approx(100.0));
  CHECK_FALSE(r.spider.has_value());
  CHECK(r.clips == 2);

  std::ofstream(dir / "spice.csv") << "file_name,spice\nx.wav,0.2\ny.wav,0.4\n";
  const MetricReport s = evaluate_corpus(dir / "same.csv", dir / "refs.csv", dir / "spice.csv");
  REQUIRE(s.spice.has_value());
  CHECK(*s.spice == doctest::Approx(30.0));
  CHECK(*s.spider == doctest::Approx((s.cider + 30.0) / 2.0));

  const MetricReport back = report_from_json(to_json(s));
  CHECK(back.cider == s.cider);
  CHECK(back.spider == s.spider);

  std::ofstream(dir / "empty.csv") << "file_name,caption_predicted\n";
  CHECK(thrown_kind([&] { evaluate_corpus(dir / "empty.csv", dir / "refs.csv"); }) == "MissingCandidate");
  std::ofstream(dir / "partial.csv") << "file_name,caption_predicted\nx.wav,a dog\n";
  CHECK(thrown_kind([&] { evaluate_corpus(dir / "partial.csv", dir / "refs.csv"); }) == "MissingCandidate");
  std::ofstream(dir / "extra.csv") << "file_name,caption_predicted\nx.wav,a\ny.wav,b\nz.wav,c\n";
  CHECK(thrown_kind([&] { evaluate_corpus(dir / "extra.csv", dir / "refs.csv"); }) == "IdMismatch");
}
