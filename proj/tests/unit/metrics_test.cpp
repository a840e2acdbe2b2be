#include "doctest.h"

#include "conpare/error.hpp"
#include "conpare/metrics.hpp"
#include "support.hpp"

using namespace conpare;

namespace {

EvaluationRecord rec(std::string key, PromptType type, bool correct,
                     double gold, double top, std::optional<int> rank = {},
                     double entropy = 0.0) {
  EvaluationRecord r;
  r.triple_key = std::move(key);
  r.prompt_type = type;
  r.strategy = type == PromptType::Simple ? Strategy::NotApplicable : Strategy::Quality;
  r.correct = correct;
  r.predicted_token = correct ? "gold" : "other";
  r.gold_prob = gold;
  r.top_prob = top;
  r.gold_rank = rank;
  r.entropy_bits = entropy;
  return r;
}

std::string by_type(const EvaluationRecord& r) {
  return std::string(to_string(r.prompt_type));
}

}  // namespace

TEST_CASE("make_record") {
  const auto t = testing::paris();
  ScoreResult hit{"x", {{"France", 0.6}, {"Italy", 0.2}}, 1.3, 0.6, 1};
  const auto a = make_record(t, PromptType::Simple, Strategy::NotApplicable, hit);
  CHECK(a.correct);
  CHECK(a.predicted_token == "France");
  CHECK(a.gold_prob == a.top_prob);
  CHECK(a.triple_key == "P1376|Paris|France");

  ScoreResult miss{"x", {{"Italy", 0.6}, {"France", 0.2}}, 1.3, 0.2, 2};
  const auto b = make_record(t, PromptType::Compound, Strategy::Quality, miss);
  CHECK_FALSE(b.correct);
  CHECK(b.gold_prob == doctest::Approx(0.2));
  CHECK(b.gold_rank == 2);

  ScoreResult empty{"x", {}, 0.0, 0.0, std::nullopt};
  CHECK_THROWS_AS(make_record(t, PromptType::Simple, Strategy::NotApplicable, empty), Error);

  EvaluationRecord broken = b;
  broken.gold_prob = 0.9;
  CHECK_THROWS_AS(validate(broken), Error);
}

TEST_CASE("P@1 per group") {
  const std::vector<EvaluationRecord> rs{
      rec("a", PromptType::Simple, true, 0.5, 0.5),
      rec("b", PromptType::Simple, false, 0.1, 0.5),
      rec("c", PromptType::Simple, true, 0.4, 0.4),
      rec("a", PromptType::Compound, false, 0.1, 0.3),
  };
  const auto p = p_at_1(rs, by_type);
  CHECK(p.at("simple") == doctest::Approx(2.0 / 3.0));
  CHECK(p.at("compound") == 0.0);

  const std::vector<std::string> expected{"simple", "complex"};
  try {
    p_at_1(rs, by_type, expected);
    FAIL("expected EmptyGroup");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyGroup);
  }
  CHECK_THROWS_AS(p_at_1({}, by_type), Error);
}

TEST_CASE("known subset boundaries") {
  const std::vector<EvaluationRecord> rs{
      rec("r1", PromptType::Simple, true, 0.5, 0.5, 1),
      rec("r10", PromptType::Simple, false, 0.1, 0.5, 10),
      rec("r11", PromptType::Simple, false, 0.1, 0.5, 11),
      rec("none", PromptType::Simple, false, 0.0, 0.5, std::nullopt),
  };
  const auto k = known_subset(rs);
  CHECK(k == std::set<std::string>{"r1", "r10"});
  CHECK(known_subset(rs, 1) == std::set<std::string>{"r1"});
  CHECK_THROWS_AS(known_subset(rs, 0), Error);
  CHECK_THROWS_AS(known_subset(rs, kGoldRankHorizon + 1), Error);
  const std::vector<EvaluationRecord> wrong{rec("x", PromptType::Compound, true, 0.5, 0.5, 1)};
  CHECK_THROWS_AS(known_subset(wrong), Error);
}

TEST_CASE("bounds on hand examples") {
  // t1: complex right and ahead on both. t2: both wrong. t3: equal top
  // probability, so the lower bound takes compound.
  const std::vector<EvaluationRecord> compound{
      rec("t1", PromptType::Compound, false, 0.3, 0.5),
      rec("t2", PromptType::Compound, false, 0.1, 0.6),
      rec("t3", PromptType::Compound, true, 0.4, 0.4),
  };
  const std::vector<EvaluationRecord> complex{
      rec("t1", PromptType::Complex, true, 0.7, 0.7),
      rec("t2", PromptType::Complex, false, 0.2, 0.3),
      rec("t3", PromptType::Complex, false, 0.2, 0.4),
  };
  const auto b = combinability_bounds(compound, complex);
  CHECK(b.at("t1").lower_correct);
  CHECK(b.at("t1").upper_correct);
  CHECK_FALSE(b.at("t2").lower_correct);
  CHECK_FALSE(b.at("t2").upper_correct);
  CHECK(b.at("t3").lower_correct);
  CHECK(b.at("t3").upper_correct);

  const std::vector<EvaluationRecord> combined{
      rec("t1", PromptType::CompoundComplex, true, 0.5, 0.5),
      rec("t2", PromptType::CompoundComplex, true, 0.5, 0.5),
      rec("t3", PromptType::CompoundComplex, false, 0.1, 0.5),
  };
  const auto iv = combinability_interval(compound, complex, combined);
  CHECK(iv.n_triples == 3);
  CHECK(iv.lower == doctest::Approx(2.0 / 3.0));
  CHECK(iv.upper == doctest::Approx(2.0 / 3.0));
  CHECK(iv.observed == doctest::Approx(2.0 / 3.0));
  CHECK(iv.above_upper == 1);
  CHECK(iv.below_lower == 1);
}

TEST_CASE("bounds pick the more confident and the higher-gold record") {
  const std::vector<EvaluationRecord> compound{
      rec("k", PromptType::Compound, true, 0.6, 0.6)};
  const std::vector<EvaluationRecord> complex{
      rec("k", PromptType::Complex, false, 0.1, 0.9)};
  const auto b = combinability_bounds(compound, complex);
  CHECK_FALSE(b.at("k").lower_correct);
  CHECK(b.at("k").upper_correct);
}

TEST_CASE("bounds coverage mismatch") {
  const std::vector<EvaluationRecord> compound{rec("a", PromptType::Compound, true, 0.5, 0.5)};
  const std::vector<EvaluationRecord> complex{rec("b", PromptType::Complex, true, 0.5, 0.5)};
  try {
    combinability_bounds(compound, complex);
    FAIL("expected CoverageMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCoverageMismatch);
  }
}

TEST_CASE("lower never exceeds upper") {
  testing::Gen gen(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto [a, b] = testing::random_record_pair(gen, gen.uniform(1, 40));
    std::vector<EvaluationRecord> combined = a;
    for (auto& r : combined) {
      r.prompt_type = PromptType::CompoundComplex;
      r.correct = gen.coin();
      r.gold_prob = r.correct ? r.top_prob : 0.0;
    }
    const auto iv = combinability_interval(a, b, combined);
    CHECK(iv.lower <= iv.upper);
    for (const auto& [k, o] : combinability_bounds(a, b)) {
      CHECK((!o.lower_correct || o.upper_correct));
    }
  }
}

TEST_CASE("partition of three sets") {
  const NamedSets sets{
      {"simple", {"a", "b", "c"}},
      {"domain", {"b", "c", "d"}},
      {"range", {"c"}},
  };
  const auto p = consistency_partition(sets);
  CHECK(p.set_names == std::vector<std::string>{"simple", "domain", "range"});
  CHECK(p.totals.at("domain") == 3);
  REQUIRE(p.cells.size() == 4);
  // Sizes are all 1, so the order is by membership mask.
  CHECK(p.cells[0].membership == 0b001);
  CHECK(p.cells[0].triples == std::set<std::string>{"a"});
  CHECK(p.cells[1].membership == 0b010);
  CHECK(p.cells[2].membership == 0b011);
  CHECK(p.cells[3].membership == 0b111);
}

TEST_CASE("partition order by size") {
  const NamedSets sets{{"x", {"1", "2", "3"}}, {"y", {"3", "4"}}};
  const auto p = consistency_partition(sets);
  REQUIRE(p.cells.size() == 3);
  CHECK(p.cells[0].membership == 0b01);
  CHECK(p.cells[0].size == 2);
}

TEST_CASE("partition argument errors") {
  NamedSets nine;
  for (int i = 0; i < 9; ++i) nine.emplace_back("s" + std::to_string(i), std::set<std::string>{});
  try {
    consistency_partition(nine);
    FAIL("expected TooManySets");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooManySets);
  }
  CHECK_THROWS_AS(consistency_partition({{"one", {"a"}}}), Error);
  CHECK_THROWS_AS(consistency_partition({{"a", {"1"}}, {"a", {"2"}}}), Error);
}

TEST_CASE("partition matches the brute-force oracle") {
  testing::Gen gen(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sets = testing::random_sets(gen, gen.uniform(2, 4), gen.uniform(0, 300));
    const auto p = consistency_partition(sets);
    const auto oracle = testing::oracle_partition(sets);
    REQUIRE(p.cells.size() == oracle.size());
    std::size_t covered = 0;
    for (const auto& cell : p.cells) {
      CHECK(cell.triples == oracle.at(cell.membership));
      covered += cell.size;
    }
    std::set<std::string> universe;
    for (const auto& [n, keys] : sets) universe.insert(keys.begin(), keys.end());
    CHECK(covered == universe.size());
  }
}

TEST_CASE("mean entropy over known triples") {
  const std::vector<EvaluationRecord> rs{
      rec("a", PromptType::Simple, true, 0.5, 0.5, 1, 2.0),
      rec("b", PromptType::Simple, false, 0.1, 0.5, 50, 9.0),
      rec("c", PromptType::Simple, false, 0.1, 0.5, 3, 1.0),
      rec("a", PromptType::Compound, true, 0.5, 0.5, 1, 0.5),
  };
  const auto known = known_subset(std::span(rs).first(3));
  const auto m = mean_entropy(rs, known, by_type);
  CHECK(m.at("simple") == doctest::Approx(1.5));
  CHECK(m.at("compound") == doctest::Approx(0.5));
  const std::vector<std::string> expected{"complex"};
  CHECK_THROWS_AS(mean_entropy(rs, known, by_type, expected), Error);
  CHECK_THROWS_AS(mean_entropy(rs, {}, by_type), Error);
}

TEST_CASE("record JSON round trip") {
  testing::Gen gen(5);
  auto [a, b] = testing::random_record_pair(gen, 50);
  for (const auto& r : a) CHECK(record_from_json_line(record_to_json_line(r)) == r);
  CHECK(type_strategy_key(b[0]) == "complex/quality");
  CHECK_THROWS_AS(record_from_json_line("{\"triple_key\": 3}"), Error);
}
