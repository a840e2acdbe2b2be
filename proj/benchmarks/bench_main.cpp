#include <benchmark/benchmark.h>

#include <random>

#include "conpare/metrics.hpp"
#include "conpare/probegen.hpp"
#include "conpare/scorer.hpp"
#include "conpare/templater.hpp"

using namespace conpare;

namespace {

std::vector<std::string> labels(std::size_t n, const char* prefix) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Family expansion at the corpus-mean type counts and above.
void BM_RenderFamily(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const RelationSpec spec{"P1376", "is the capital of", labels(n, "domain type "),
                          labels(n, "range type "), false};
  const auto t = make_triple("Paris", "P1376", "France", Corpus::TREx, Grouping::OneToOne);
  std::size_t prompts = 0;
  for (auto _ : state) {
    std::size_t count = 0;
    for_each_in_family(t, spec, spec.domain_types, spec.range_types,
                       [&](PromptInstance&& p) { count += p.text.size() > 0; });
    benchmark::DoNotOptimize(count);
    prompts += count;
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(prompts));
}
BENCHMARK(BM_RenderFamily)->Arg(4)->Arg(12)->Arg(20);

void BM_ConsistencyPartition(benchmark::State& state) {
  const auto n_keys = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(42);
  NamedSets sets;
  for (int s = 0; s < 4; ++s) {
    std::set<std::string> keys;
    for (std::size_t k = 0; k < n_keys; ++k) {
      if (rng() % 2) keys.insert("P17|s" + std::to_string(k) + "|o");
    }
    sets.emplace_back("set" + std::to_string(s), std::move(keys));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(consistency_partition(sets));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n_keys));
}
BENCHMARK(BM_ConsistencyPartition)->Arg(1000)->Arg(30000);

void BM_MockScoring(benchmark::State& state) {
  MockScorer mock;
  std::vector<ScoreRequest> batch;
  for (int i = 0; i < 64; ++i) {
    batch.push_back({std::to_string(i), "Entity " + std::to_string(i) + " is located in [MASK].",
                     "France", kDefaultTopK});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(mock.score_batch(batch));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_MockScoring);

void BM_QualityCompletion(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const RelationSpec spec{"P1376", "is the capital of", labels(n, "kind "),
                          {"country"}, false};
  const auto t = make_triple("Paris", "P1376", "France", Corpus::TREx, Grouping::OneToOne);
  MockScorer mock;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        quality_completion(t, spec, Slot::Domain, SyntaxFamily::Clausal, mock));
  }
}
BENCHMARK(BM_QualityCompletion)->Arg(12)->Arg(40);

}  // namespace

BENCHMARK_MAIN();
