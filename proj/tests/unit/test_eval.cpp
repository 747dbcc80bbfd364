#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "psearch/errors.hpp"
#include "psearch/eval/data.hpp"
#include "psearch/eval/metrics.hpp"
#include "psearch/eval/report.hpp"

using namespace psearch;
using namespace psearch::eval;

namespace {

EvalExample example(const std::string& id, const std::string& answer, std::optional<std::string> entity = {},
                    std::optional<std::string> category = {}) {
  return EvalExample{id, "question " + id, {answer}, std::move(entity), std::move(category)};
}

// A ranked list of `length` filler passages with `hit` placed at `hit_rank` (0 for none).
std::vector<RankedPassage> ranked(const std::string& qid, std::size_t length, std::size_t hit_rank,
                                  const std::string& hit) {
  std::vector<RankedPassage> out;
  for (std::size_t r = 1; r <= length; ++r) {
    std::string id = r == hit_rank ? hit : qid + "_filler" + std::to_string(r);
    out.push_back({id, 100.0 - static_cast<double>(r), static_cast<std::uint32_t>(r)});
  }
  return out;
}

struct Fixture {
  RunFile run;
  PassageStore store;
  std::vector<EvalExample> examples;
};

// Gold answers at ranks 1, 3, none and 120. The rank-3 passage lacks the entity.
Fixture planted() {
  Fixture f;
  const std::size_t ranks[] = {1, 3, 0, 120};
  for (int i = 0; i < 4; ++i) {
    std::string qid = "q" + std::to_string(i);
    f.examples.push_back(example(qid, "Answer " + qid, "Entity " + qid));
    f.run.lists[qid] = ranked(qid, 150, ranks[i], qid + "_gold");
    std::string text = "some text with answer  " + qid;
    if (i != 1) text += " about entity " + qid;
    f.store.add(qid + "_gold", text);
    for (std::size_t r = 1; r <= 150; ++r) f.store.add(qid + "_filler" + std::to_string(r), "unrelated filler");
  }
  return f;
}

}  // namespace

TEST(Metrics, ContainsAnswerNormalizes) {
  std::vector<std::string> answers{"Steamboat  Willie"};
  EXPECT_TRUE(contains_answer("watch steamboat willie\ttoday", answers));
  EXPECT_FALSE(contains_answer("steamboat bill", answers));
  EXPECT_FALSE(contains_answer("anything", std::vector<std::string>{}));
}

TEST(Metrics, PlantedAicAndAeic) {
  auto f = planted();
  EXPECT_EQ(aic_at_k(f.run, f.store, f.examples, 1).value, 0.25);
  EXPECT_EQ(aic_at_k(f.run, f.store, f.examples, 20).value, 0.5);
  EXPECT_EQ(aic_at_k(f.run, f.store, f.examples, 100).value, 0.5);
  EXPECT_EQ(aic_at_k(f.run, f.store, f.examples, 150).value, 0.75);
  EXPECT_EQ(aeic_at_k(f.run, f.store, f.examples, 1).value, 0.25);
  EXPECT_EQ(aeic_at_k(f.run, f.store, f.examples, 20).value, 0.25);
  EXPECT_EQ(aeic_at_k(f.run, f.store, f.examples, 100).value, 0.25);
  EXPECT_THROW(aic_at_k(f.run, f.store, f.examples, 0), ConfigError);
}

TEST(Metrics, MissingExamplesCountAsMisses) {
  auto f = planted();
  f.run.lists.erase("q0");
  auto r = aic_at_k(f.run, f.store, f.examples, 20);
  EXPECT_EQ(r.missing_from_run, 1u);
  EXPECT_EQ(r.evaluated, 4u);
  EXPECT_EQ(r.value, 0.25);
}

TEST(Metrics, AeicExcludesExamplesWithoutEntity) {
  auto f = planted();
  f.examples[3].entity.reset();
  auto r = aeic_at_k(f.run, f.store, f.examples, 200);
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_EQ(r.evaluated, 3u);
  EXPECT_EQ(r.hits, 1u);
}

TEST(Metrics, EntityInInput) {
  std::vector<EvalExample> ex{
      {"a", "Who directed Steamboat Willie?", {"x"}, "Steamboat Willie", {}},
      {"b", "Who wrote it?", {"x"}, "Mukanda", {}},
      {"c", "no entity", {"x"}, {}, {}},
  };
  auto r = entity_in_input_fraction(ex);
  EXPECT_EQ(r.evaluated, 2u);
  EXPECT_EQ(r.value, 0.5);
  EXPECT_EQ(r.excluded, 1u);
}

TEST(Metrics, AicMonotoneAndAeicBounded) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Fixture f;
    const std::size_t n = 1 + rng() % 20;
    for (std::size_t i = 0; i < n; ++i) {
      std::string qid = "q" + std::to_string(i);
      f.examples.push_back(example(qid, "ans" + qid, rng() % 4 ? std::optional<std::string>("ent" + qid) : std::nullopt));
      std::vector<RankedPassage> list;
      for (std::size_t r = 1, len = rng() % 60; r <= len; ++r) {
        std::string pid = qid + "_" + std::to_string(r);
        std::string text = "filler";
        if (rng() % 10 == 0) text += " ans" + qid;
        if (rng() % 2 == 0) text += " ent" + qid;
        f.store.add(pid, text);
        list.push_back({pid, 0.0, static_cast<std::uint32_t>(r)});
      }
      if (rng() % 8) f.run.lists[qid] = list;
    }
    double prev = 0.0;
    for (std::size_t k = 1; k <= 64; ++k) {
      auto aic = aic_at_k(f.run, f.store, f.examples, k);
      auto aeic = aeic_at_k(f.run, f.store, f.examples, k);
      EXPECT_GE(aic.value, prev);
      prev = aic.value;
      EXPECT_LE(aeic.hits, aic.hits);
    }
  }
}

TEST(Metrics, MedianOverlapBased) {
  RunFile run;
  std::vector<EvalExample> ex;
  const std::size_t flagged_counts[] = {0, 5, 2, 9};
  for (int i = 0; i < 4; ++i) {
    std::string qid = "q" + std::to_string(i);
    ex.push_back(example(qid, "a"));
    for (std::size_t r = 1; r <= 10; ++r) {
      std::string pid = (r <= flagged_counts[i] ? "wiki_" : "web_") + qid + std::to_string(r);
      run.lists[qid].push_back({pid, 0.0, static_cast<std::uint32_t>(r)});
    }
  }
  auto flagged = [](std::string_view id) { return id.starts_with("wiki_"); };
  EXPECT_EQ(median_overlap_based(run, ex, flagged), 2u);
  EXPECT_EQ(median_overlap_based(run, ex, flagged, 3), 2u);
  ex.push_back(example("absent", "a"));
  EXPECT_EQ(median_overlap_based(run, ex, flagged), 2u);
  RunFile empty;
  EXPECT_THROW(median_overlap_based(empty, ex, flagged), Error);
}

TEST(Metrics, CategoryBreakdown) {
  std::vector<EvalExample> ex{example("a", "x", {}, "born"), example("b", "x", {}, "born"),
                              example("c", "x", {}, "died"), example("d", "x")};
  std::map<std::string, double> scores{{"a", 1.0}, {"b", 0.0}, {"c", 1.0}, {"d", 0.0}};
  auto rows = breakdown_by_category(ex, scores);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].category, "born");
  EXPECT_EQ(rows[0].count, 2u);
  EXPECT_EQ(rows[0].mean, 0.5);
  EXPECT_EQ(rows[1].category, std::string(kUncategorized));
  EXPECT_EQ(rows[2].category, "died");
}

TEST(Metrics, ContaminationFilterIsIdempotent) {
  PassageStore store;
  store.add("leak", "Q: Question   Q1 copied verbatim");
  store.add("ok1", "clean passage");
  store.add("ok2", "another clean one");
  RunFile run;
  run.lists["q1"] = {{"ok1", 3, 1}, {"leak", 2, 2}, {"ok2", 1, 3}};
  std::vector<EvalExample> ex{example("q1", "clean")};
  auto once = contamination_filter(run, store, ex);
  EXPECT_EQ(once.removed.at("q1"), 1u);
  ASSERT_EQ(once.run.lists["q1"].size(), 2u);
  EXPECT_EQ(once.run.lists["q1"][1].passage_id, "ok2");
  EXPECT_EQ(once.run.lists["q1"][1].rank, 2u);
  auto twice = contamination_filter(once.run, store, ex);
  EXPECT_EQ(twice.run.lists, once.run.lists);

  std::vector<EvalExample> blank{EvalExample{"q1", "   ", {"a"}, {}, {}}};
  EXPECT_EQ(contamination_filter(run, store, blank).run.lists, run.lists);
}

TEST(Metrics, MinePositive) {
  auto f = planted();
  auto m = mine_positive(f.run, f.store, f.examples[1]);
  ASSERT_TRUE(m);
  EXPECT_EQ(m->passage_id, "q1_gold");
  EXPECT_EQ(m->rank, 3u);
  EXPECT_FALSE(mine_positive(f.run, f.store, f.examples[2]));
}

TEST(Metrics, OracleCombination) {
  std::map<std::string, double> a{{"x", 1}, {"y", 0}, {"z", 0}}, b{{"x", 0}, {"y", 1}, {"z", 0}};
  auto r = oracle_combine(a, b);
  EXPECT_DOUBLE_EQ(r.mean, 2.0 / 3.0);
  EXPECT_EQ(r.per_example.at("y"), 1.0);
  b.erase("z");
  b["w"] = 1;
  try {
    oracle_combine(a, b);
    FAIL();
  } catch (const ConfigError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("z"), std::string::npos);
    EXPECT_NE(what.find("w"), std::string::npos);
  }
}

TEST(Metrics, OracleNeverBelowEitherSystem) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    std::map<std::string, double> a, b;
    bool a_dominates = true, b_dominates = true;
    for (std::size_t i = 0, n = 1 + rng() % 30; i < n; ++i) {
      double x = rng() % 2, y = rng() % 2;
      a["e" + std::to_string(i)] = x;
      b["e" + std::to_string(i)] = y;
      a_dominates &= x >= y;
      b_dominates &= y >= x;
    }
    auto r = oracle_combine(a, b);
    const double best = std::max(mean(a), mean(b));
    EXPECT_GE(r.mean, best);
    EXPECT_EQ(r.mean == best, a_dominates || b_dominates);
  }
}

TEST(Data, RunFileRoundTrip) {
  RunFile run;
  run.passage_store = "/data/passages.jsonl";
  run.lists["b"] = {{"p1", 0.1 + 0.2, 1}, {"p2", -3.5, 2}};
  run.lists["a"] = {{"p3", 1e-17, 1}};
  std::vector<std::string> order{"b", "a"};
  auto dir = std::filesystem::temp_directory_path() / "psearch_run_rt";
  std::filesystem::create_directories(dir);
  std::string text;
  {
    std::ostringstream os;
    write_run(os, run, order);
    text = os.str();
    std::ofstream(dir / "run.tsv") << text;
  }
  EXPECT_TRUE(text.starts_with("#passages\t/data/passages.jsonl\nb\tp1\t1\t"));
  auto back = read_run(dir / "run.tsv");
  EXPECT_EQ(back.passage_store, run.passage_store);
  EXPECT_EQ(back.lists.at("b")[0].score, 0.1 + 0.2);
  std::ostringstream again;
  write_run(again, back, order);
  EXPECT_EQ(again.str(), text);
  std::filesystem::remove_all(dir);
}

TEST(Data, RunFileRejectsGapsAndInterleaving) {
  auto dir = std::filesystem::temp_directory_path() / "psearch_run_bad";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "gap.tsv") << "q\tp1\t1\t1.0\nq\tp2\t3\t0.5\n";
  std::ofstream(dir / "split.tsv") << "q\tp1\t1\t1.0\nr\tp2\t1\t0.5\nq\tp3\t2\t0.1\n";
  std::ofstream(dir / "cols.tsv") << "q\tp1\t1\n";
  EXPECT_THROW(read_run(dir / "gap.tsv"), ParseError);
  EXPECT_THROW(read_run(dir / "split.tsv"), ParseError);
  EXPECT_THROW(read_run(dir / "cols.tsv"), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Data, ExamplesSchema) {
  auto dir = std::filesystem::temp_directory_path() / "psearch_examples";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "ok.jsonl") << R"({"id":"1","input":"q","answers":["a"],"entity":"E","category":"c"})" << "\n";
  std::ofstream(dir / "empty.jsonl") << R"({"id":"1","input":"q","answers":[]})" << "\n";
  std::ofstream(dir / "dup.jsonl") << R"({"id":"1","input":"q","answers":["a"]})" << "\n"
                                   << R"({"id":"1","input":"q","answers":["b"]})" << "\n";
  auto ok = read_examples(dir / "ok.jsonl");
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_EQ(*ok[0].entity, "E");
  EXPECT_THROW(read_examples(dir / "empty.jsonl"), ParseError);
  try {
    read_examples(dir / "dup.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::filesystem::remove_all(dir);
}

TEST(Report, JsonAndTable) {
  auto f = planted();
  auto report = evaluate(f.run, f.store, f.examples, kDefaultKs);
  auto j = to_json(report);
  EXPECT_EQ(j["AIC"]["1"]["value"].get<double>(), 0.25);
  EXPECT_EQ(j["AIC"]["20"]["value"].get<double>(), 0.5);
  EXPECT_EQ(j["AEIC"]["100"]["value"].get<double>(), 0.25);
  auto table = format_table(report);
  EXPECT_NE(table.find("25.00"), std::string::npos);
  EXPECT_NE(table.find("k=100"), std::string::npos);
}
