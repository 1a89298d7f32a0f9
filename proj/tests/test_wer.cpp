#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "advspeech/wer.hpp"
#include "testutil.hpp"

using namespace advspeech;

TEST_CASE("normalization keeps dollars and digits, folds case") {
  CHECK(normalize_text("This is the human ASR output") ==
        Transcript{"this", "is", "the", "human", "asr", "output"});
  CHECK(normalize_text("Transfer $1000 from my account!") ==
        Transcript{"transfer", "$1000", "from", "my", "account"});
  CHECK(normalize_text("  ") == Transcript{});
}

TEST_CASE("identity transcripts score zero") {
  const Transcript t{"a", "b", "c"};
  const EditCounts c = wer(t, t);
  CHECK(c.errors() == 0);
  CHECK(c.wer_percent() == 0.0);
}

TEST_CASE("empty reference is an error") {
  CHECK_THROWS_AS(wer({}, {"a"}), std::invalid_argument);
}

TEST_CASE("benign example: two substitutions over six words") {
  const EditCounts c = wer(normalize_text("This is the human ASR output"),
                           normalize_text("Thus is the real ASR output"));
  CHECK(c.substitutions == 2);
  CHECK(c.insertions == 0);
  CHECK(c.deletions == 0);
  CHECK(c.wer_percent() == doctest::Approx(33.3333).epsilon(1e-3));
}

TEST_CASE("adversarial example: substitution plus insertion over five words") {
  const EditCounts c = wer(normalize_text("Transfer $1000 from my account"),
                           normalize_text("Transfer is sand from my account"));
  CHECK(c.substitutions == 1);
  CHECK(c.insertions == 1);
  CHECK(c.deletions == 0);
  CHECK(c.wer_percent() == doctest::Approx(40.0).epsilon(1e-6));
}

TEST_CASE("insertions can push WER beyond 100 percent") {
  const EditCounts c = wer({"a"}, {"b", "c", "d"});
  CHECK(c.errors() == 3);
  CHECK(c.wer_percent() == doctest::Approx(300.0));
}

TEST_CASE("fuzz: error total equals the independent Levenshtein oracle") {
  Rng rng(123);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 1000; ++trial) {
    Transcript ref, hyp;
    const auto nr = rng.uniform_int(1, 10);
    const auto nh = rng.uniform_int(0, 10);
    for (std::int64_t i = 0; i < nr; ++i) {
      ref.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 4))]);
    }
    for (std::int64_t i = 0; i < nh; ++i) {
      hyp.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 4))]);
    }
    REQUIRE(wer(ref, hyp).errors() == testutil::levenshtein_distance(ref, hyp));
  }
}

TEST_CASE("pooled counts are order independent") {
  Rng rng(7);
  const std::vector<std::string> alphabet{"x", "y", "z"};
  std::vector<std::pair<Transcript, Transcript>> pairs;
  for (int i = 0; i < 20; ++i) {
    Transcript ref, hyp;
    for (std::int64_t j = 0, n = rng.uniform_int(1, 6); j < n; ++j) {
      ref.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 2))]);
    }
    for (std::int64_t j = 0, n = rng.uniform_int(0, 6); j < n; ++j) {
      hyp.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(0, 2))]);
    }
    pairs.emplace_back(ref, hyp);
  }
  EditCounts forward, backward;
  for (const auto& [r, h] : pairs) forward += wer(r, h);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) backward += wer(it->first, it->second);
  CHECK(forward.errors() == backward.errors());
  CHECK(forward.ref_len == backward.ref_len);
  CHECK(forward.wer_percent() == backward.wer_percent());
}

TEST_CASE("boxplot statistics") {
  SUBCASE("single report collapses all five statistics") {
    const auto stats = summarize_boxplot({{"sys", 0.01, 42.0}}, std::nullopt);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].min == 42.0);
    CHECK(stats[0].q1 == 42.0);
    CHECK(stats[0].median == 42.0);
    CHECK(stats[0].q3 == 42.0);
    CHECK(stats[0].max == 42.0);
  }
  SUBCASE("nearest-rank quartiles of 1..5") {
    std::vector<SystemCell> cells;
    for (const double v : {3.0, 1.0, 5.0, 2.0, 4.0}) cells.push_back({"sys", 0.01, v});
    const auto stats = summarize_boxplot(cells, std::nullopt);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].min == 1.0);
    CHECK(stats[0].q1 == 2.0);
    CHECK(stats[0].median == 3.0);
    CHECK(stats[0].q3 == 4.0);
    CHECK(stats[0].max == 5.0);
  }
  SUBCASE("exclusion rule removes the configured epsilon") {
    std::vector<SystemCell> cells{{"sys", 0.2, 99.0}, {"sys", 0.01, 10.0}, {"sys", 0.1, 20.0}};
    const auto stats = summarize_boxplot(cells, 0.2);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].n_settings == 2);
    CHECK(stats[0].max == 20.0);
    const auto all = summarize_boxplot(cells, std::nullopt);
    CHECK(all[0].n_settings == 3);
    CHECK(all[0].max == 99.0);
  }
}
