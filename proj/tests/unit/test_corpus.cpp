#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "oracles.hpp"
#include "psearch/corpus/document.hpp"
#include "psearch/corpus/ngram.hpp"
#include "psearch/corpus/passage_io.hpp"
#include "psearch/corpus/stats.hpp"
#include "psearch/errors.hpp"

using namespace psearch;
using namespace psearch::corpus;
using nlohmann::json;

namespace {

Document doc_with_tokens(std::size_t n, const std::string& id = "d") {
  Document d;
  d.doc_id = id;
  d.url = "https://example.com/" + id;
  d.title = "Title";
  for (std::size_t i = 0; i < n; ++i) d.body += (i ? " " : "") + std::string("w") + std::to_string(i);
  return d;
}

Passage passage(const std::string& id, const std::string& text) {
  Passage p;
  p.passage_id = id;
  p.doc_id = id;
  p.text = text;
  return p;
}

std::string words(std::size_t from, std::size_t n, const std::string& prefix = "t") {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + prefix + std::to_string(from + i);
  return s;
}

}  // namespace

TEST(Ingest, ExcludesWikipediaUrls) {
  auto r = ingest_document(json{{"url", "https://en.wikipedia.org/wiki/X"}, {"raw_content", "x y"}}, {});
  ASSERT_TRUE(std::holds_alternative<Skipped>(r));
  EXPECT_EQ(std::get<Skipped>(r).reason, SkipReason::url_excluded);
}

TEST(Ingest, UrlExclusionIsCaseInsensitive) {
  auto r = ingest_document(json{{"url", "https://EN.WIKIPEDIA.ORG/wiki/X"}, {"body", "x"}}, {});
  EXPECT_EQ(std::get<Skipped>(r).reason, SkipReason::url_excluded);
}

TEST(Ingest, EmptyBodyIsReported) {
  auto r = ingest_document(json{{"url", "https://example.com/a"}, {"body", "  "}}, {});
  ASSERT_TRUE(std::holds_alternative<Skipped>(r));
  EXPECT_EQ(std::get<Skipped>(r).reason, SkipReason::empty_body);
}

TEST(Ingest, AcceptsHeadTierDocument) {
  auto r = ingest_document(json{{"id", "b1"},
                                {"url", "https://buala.org/en/mukanda"},
                                {"tier", "head"},
                                {"title", "Mukanda"},
                                {"raw_content", "Joëlle Sambi ..."}},
                           {});
  ASSERT_TRUE(std::holds_alternative<Document>(r));
  const auto& d = std::get<Document>(r);
  EXPECT_EQ(d.doc_id, "b1");
  EXPECT_EQ(d.tier, Tier::head);
  EXPECT_EQ(d.title, "Mukanda");
}

TEST(Ingest, RejectsUnacceptedTier) {
  auto r = ingest_document(json{{"url", "https://a.com"}, {"tier", "tail"}, {"body", "x"}}, {});
  EXPECT_EQ(std::get<Skipped>(r).reason, SkipReason::tier_rejected);
}

TEST(Ingest, MissingFieldsNameTheField) {
  try {
    ingest_document(json{{"body", "x"}}, {});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "url");
  }
  try {
    ingest_document(json{{"url", "https://a.com"}}, {});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "body");
  }
  EXPECT_THROW(ingest_document(json{{"url", 3}, {"body", "x"}}, {}), ParseError);
}

TEST(Ingest, DocIdFallsBackToDigestThenUrl) {
  auto a = ingest_document(json{{"digest", "sha1:X"}, {"url", "https://a.com"}, {"body", "x"}}, {});
  EXPECT_EQ(std::get<Document>(a).doc_id, "sha1:X");
  auto b = ingest_document(json{{"url", "https://a.com"}, {"body", "x"}}, {});
  EXPECT_EQ(std::get<Document>(b).doc_id, "https://a.com");
}

TEST(Chunk, ExampleLengths) {
  auto one = chunk_document(doc_with_tokens(50));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].token_count, 50u);

  auto three = chunk_document(doc_with_tokens(250));
  ASSERT_EQ(three.size(), 3u);
  EXPECT_EQ(three[0].token_count, 100u);
  EXPECT_EQ(three[1].token_count, 100u);
  EXPECT_EQ(three[2].token_count, 50u);
  EXPECT_EQ(three[2].passage_id, "d::2");
  EXPECT_EQ(three[1].title, "Title");

  auto exact = chunk_document(doc_with_tokens(100));
  ASSERT_EQ(exact.size(), 1u);
  EXPECT_EQ(exact[0].token_count, 100u);
}

TEST(Chunk, PassageTextIsTheSourceSpan) {
  Document d = doc_with_tokens(0);
  d.body = "  a  b\tc\n d  ";
  auto ps = chunk_document(d, 2);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].text, "a  b");
  EXPECT_EQ(ps[1].text, "c\n d");
}

TEST(Chunk, RoundTripMatchesWindowOracle) {
  std::mt19937_64 rng(7);
  const char* seps[] = {" ", "  ", "\t", "\n", " \r\n"};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng() % 400;
    const std::size_t window = 1 + rng() % 120;
    Document d = doc_with_tokens(0);
    for (std::size_t i = 0; i < n; ++i) d.body += seps[rng() % 5] + oracle::vocab_word(rng() % 500);
    auto passages = chunk_document(d, window);
    auto expected = oracle::enumerate_windows(oracle::ascii_tokens(d.body), window);
    ASSERT_EQ(passages.size(), expected.size());
    for (std::size_t i = 0; i < passages.size(); ++i) {
      EXPECT_EQ(oracle::ascii_tokens(passages[i].text), expected[i]);
      EXPECT_EQ(passages[i].chunk_index, i);
      EXPECT_EQ(passages[i].token_count, expected[i].size());
    }
  }
}

TEST(Chunk, ZeroWindowIsRejected) { EXPECT_THROW(chunk_document(doc_with_tokens(3), 0), ConfigError); }

TEST(PassageIo, RoundTripsAndRecountsTokens) {
  auto dir = std::filesystem::temp_directory_path() / "psearch_passage_io";
  std::filesystem::create_directories(dir);
  auto path = dir / "p.jsonl";
  auto ps = chunk_document(doc_with_tokens(230, "doc\"q"), 100);
  {
    std::ofstream out(path);
    for (const auto& p : ps) write_passage(out, p);
  }
  EXPECT_EQ(read_passages(path), ps);
  std::filesystem::remove_all(dir);
}

TEST(PassageIo, SchemaErrorsCarryLineNumbers) {
  auto dir = std::filesystem::temp_directory_path() / "psearch_passage_io_bad";
  std::filesystem::create_directories(dir);
  auto path = dir / "p.jsonl";
  {
    std::ofstream out(path);
    out << R"({"passage_id":"a::0","doc_id":"a","title":"","text":"x","chunk_index":0})" << "\n";
    out << R"({"passage_id":"b::0","doc_id":"b","title":""})" << "\n";
  }
  try {
    read_passages(path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::filesystem::remove_all(dir);
}

TEST(Ngram, CountsExamples) {
  std::vector<Passage> seven{passage("a", words(0, 7))};
  EXPECT_EQ(build_ngram_set(seven, {}).count(), 0u);
  std::vector<Passage> eight{passage("a", words(0, 8))};
  EXPECT_EQ(build_ngram_set(eight, {}).count(), 1u);
  std::vector<Passage> shared{passage("a", words(0, 10)), passage("b", words(0, 10))};
  EXPECT_EQ(build_ngram_set(shared, {}).count(), 3u);
  EXPECT_EQ(build_ngram_set(shared, {}, NgramSet::Mode::exact).count(), 3u);
}

TEST(Ngram, OverlapThreshold) {
  std::vector<Passage> ref{passage("r", words(0, 30))};
  auto set = build_ngram_set(ref, {});
  EXPECT_TRUE(is_overlap_based(passage("c", words(0, 30)), set, {}));
  // Seven shared tokens surrounded by foreign ones.
  EXPECT_FALSE(is_overlap_based(passage("c", "x y " + words(5, 7) + " z"), set, {}));
  EXPECT_TRUE(is_overlap_based(passage("c", "x y " + words(5, 8) + " z"), set, {}));
}

TEST(Ngram, CaseFoldingAndWhitespace) {
  std::vector<Passage> ref{passage("r", "The Quick Brown Fox Jumps Over The Lazy Dog")};
  auto set = build_ngram_set(ref, {});
  EXPECT_TRUE(is_overlap_based(passage("c", "the  quick\tbrown fox jumps over the LAZY"), set, {}));
  auto strict = build_ngram_set(ref, {8, false});
  EXPECT_FALSE(is_overlap_based(passage("c", "the quick brown fox jumps over the lazy"), strict, {8, false}));
}

TEST(Ngram, ParamsMismatchIsAConfigError) {
  std::vector<Passage> ref{passage("r", words(0, 10))};
  auto set = build_ngram_set(ref, {});
  EXPECT_THROW(is_overlap_based(ref[0], set, {5, true}), ConfigError);
  EXPECT_THROW(NgramSet({0, true}), ConfigError);
}

TEST(Ngram, OverlapIsMonotoneInN) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Passage> ref, corpus;
    for (int i = 0; i < 5; ++i) {
      std::string a, b;
      for (int t = 0; t < 30; ++t) {
        a += oracle::vocab_word(rng() % 20) + " ";
        b += oracle::vocab_word(rng() % 20) + " ";
      }
      ref.push_back(passage("r" + std::to_string(i), a));
      corpus.push_back(passage("c" + std::to_string(i), b));
    }
    for (std::size_t n = 2; n <= 8; ++n) {
      auto big = build_ngram_set(ref, {n, true});
      auto small = build_ngram_set(ref, {n - 1, true});
      for (const auto& c : corpus) {
        if (is_overlap_based(c, big, {n, true})) {
          EXPECT_TRUE(is_overlap_based(c, small, {n - 1, true}));
        }
      }
    }
  }
}

TEST(Ngram, HashedAndExactModesAgree) {
  auto fx = oracle::make_overlap_fixture(200, 50, 10, 20, 7, 40, 11);
  std::vector<Passage> ref, corpus;
  for (auto& [id, t] : fx.reference) ref.push_back(passage(id, t));
  for (auto& [id, t] : fx.corpus) corpus.push_back(passage(id, t));
  auto hashed = build_ngram_set(ref, {}, NgramSet::Mode::hashed);
  auto exact = build_ngram_set(ref, {}, NgramSet::Mode::exact);
  EXPECT_EQ(hashed.count(), exact.count());
  for (const auto& c : corpus) EXPECT_EQ(hashed.contains_any(c.text), exact.contains_any(c.text));
}

TEST(Stats, EmptyAndCountsOnly) {
  auto empty = corpus_stats({});
  EXPECT_EQ(empty.passage_count, 0u);
  EXPECT_EQ(empty.document_count, 0u);
  EXPECT_FALSE(empty.overlap);

  std::vector<Passage> ps;
  for (int i = 0; i < 10; ++i) {
    auto p = passage("p" + std::to_string(i), words(0, 5));
    p.doc_id = "d" + std::to_string(i / 2);
    p.token_count = 5;
    ps.push_back(p);
  }
  auto r = corpus_stats(ps);
  EXPECT_EQ(r.passage_count, 10u);
  EXPECT_EQ(r.document_count, 5u);
  EXPECT_EQ(r.token_count, 50u);
  EXPECT_EQ(r.token_histogram.at(5), 10u);
  EXPECT_FALSE(r.overlap);
  EXPECT_FALSE(to_json(r).contains("overlap"));
}

TEST(Stats, PlantedOverlapIsRecoveredExactly) {
  auto fx = oracle::make_overlap_fixture(400, 100, 20, 40, 7, 30, 5);
  std::vector<Passage> ref, corpus;
  for (auto& [id, t] : fx.reference) ref.push_back(passage(id, t));
  for (auto& [id, t] : fx.corpus) corpus.push_back(passage(id, t));
  auto set = build_ngram_set(ref, {});
  auto r = corpus_stats(corpus, OverlapReference{ref, set});
  ASSERT_TRUE(r.overlap);
  EXPECT_EQ(r.overlap->flagged, 20u);
  EXPECT_EQ(r.overlap->flagged_fraction, 0.05);
  EXPECT_EQ(r.overlap->reference_covered, fx.reference_covered);
  EXPECT_EQ(r.overlap->reverse_fraction, 0.2);
}
