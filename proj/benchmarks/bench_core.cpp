// Throughput of the hot paths: relevance scoring, boolean retrieval,
// neighbor search and a full IQS run over the synthetic planted corpus.

#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "iqs/iqscore.hpp"
#include "iqs/relevance.hpp"
#include "iqs/searchsim.hpp"
#include "planted_corpus.hpp"

namespace {

using namespace iqs;
using namespace iqs::testing;

const PlantedCorpus& corpus() {
  static const PlantedCorpus c = [] {
    PlantedSpec spec;
    spec.total_docs = 10000;
    return make_planted_corpus(spec);
  }();
  return c;
}

TokenizerConfig bench_config() { return small_config({}); }

const BooleanIndex& index() {
  static const BooleanIndex idx =
      BooleanIndex::build(corpus().docs, bench_config(), corpus().store);
  return idx;
}

void BM_MeanRelevanceError(benchmark::State& state) {
  std::mt19937_64 rng(7);
  const auto store = random_store(2000, 100, rng);
  const auto proto = prototype_of(random_words(store, 20, 20, rng));
  std::vector<ResultDoc> results;
  for (int i = 0; i < state.range(0); ++i)
    results.push_back(doc_with_words("d" + std::to_string(i), random_words(store, 5, 15, rng)));
  const ResolvedPrototype resolved(proto, store);
  for (auto _ : state) benchmark::DoNotOptimize(mean_relevance_error(results, resolved));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MeanRelevanceError)->Arg(20)->Arg(500);

void BM_BooleanSearch(benchmark::State& state) {
  const auto& idx = index();
  const auto& topic = corpus().topic_words;
  std::vector<std::string> terms(topic.begin(), topic.begin() + state.range(0));
  const Query q(terms);
  for (auto _ : state) benchmark::DoNotOptimize(idx.search(q, kDefaultRlimit));
}
BENCHMARK(BM_BooleanSearch)->Arg(1)->Arg(2)->Arg(4);

void BM_IndexBuild(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(
        BooleanIndex::build(corpus().docs, bench_config(), corpus().store).doc_count());
  state.SetItemsProcessed(state.iterations() * corpus().docs.size());
}
BENCHMARK(BM_IndexBuild)->Unit(benchmark::kMillisecond);

void BM_NearestNeighbors(benchmark::State& state) {
  std::mt19937_64 rng(11);
  const auto store = random_store(static_cast<std::size_t>(state.range(0)), 100, rng);
  for (auto _ : state) benchmark::DoNotOptimize(store.nearest_neighbors("w0", 10));
}
BENCHMARK(BM_NearestNeighbors)->Arg(10000)->Arg(50000)->Unit(benchmark::kMicrosecond);

void BM_IqsRun(benchmark::State& state) {
  const auto& c = corpus();
  const auto proto = build_prototype(*c.topic.narrative, bench_config(), c.store);
  IqsParams params;
  params.seed = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(iqs_run(proto, index(), params, c.store).queue.size());
}
BENCHMARK(BM_IqsRun)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
