#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "iqs/errors.hpp"
#include "iqs/relevance.hpp"

using namespace iqs;
using Catch::Matchers::WithinAbs;
using testing::doc_with_words;
using testing::prototype_of;
using testing::three_word_store;

namespace {

// Independent brute force: plain loops over raw vectors, no store distance().
double brute_mre(const std::vector<ResultDoc>& results, const PrototypeDocument& proto,
                 const EmbeddingStore& store) {
  if (results.empty()) return 2.0;
  double total = 0.0;
  for (const auto& r : results) {
    if (r.words.empty()) {
      total += 2.0;
      continue;
    }
    double sum = 0.0;
    for (const auto& w : r.words) {
      double best = 1e300;
      for (const auto& d : proto.words) {
        best = std::min(best, cosine_distance(*store.vector(w), *store.vector(d)));
      }
      sum += best;
    }
    total += sum / static_cast<double>(r.words.size());
  }
  return total / static_cast<double>(results.size());
}

}  // namespace

TEST_CASE("word_doc_distance fixture values", "[relevance]") {
  auto store = three_word_store();
  CHECK(word_doc_distance("dog", prototype_of({"dog", "car"}), store) == 0.0);
  CHECK_THAT(word_doc_distance("cat", prototype_of({"dog", "car"}), store), WithinAbs(0.2, 1e-9));
  CHECK_THAT(word_doc_distance("car", prototype_of({"dog"}), store), WithinAbs(1.0, 1e-9));
  CHECK_THROWS_AS(word_doc_distance("zebra", prototype_of({"dog"}), store), ContractViolation);
  CHECK_THROWS_AS(word_doc_distance("dog", prototype_of({}), store), ContractViolation);
}

TEST_CASE("relevance_error fixture values", "[relevance]") {
  auto store = three_word_store();
  CHECK(relevance_error(doc_with_words("r", {"dog", "car"}), prototype_of({"car", "dog", "cat"}),
                        store) == 0.0);
  CHECK_THAT(relevance_error(doc_with_words("r", {"cat"}), prototype_of({"dog", "car"}), store),
             WithinAbs(0.2, 1e-9));
  CHECK_THAT(relevance_error(doc_with_words("r", {"cat", "car"}), prototype_of({"dog"}), store),
             WithinAbs(0.6, 1e-9));
  CHECK(relevance_error(doc_with_words("r", {}), prototype_of({"dog"}), store) == 2.0);
}

TEST_CASE("relevance_error is not symmetric", "[relevance]") {
  auto store = three_word_store();
  const double forward =
      relevance_error(doc_with_words("r", {"dog"}), prototype_of({"cat", "car"}), store);
  const double backward =
      relevance_error(doc_with_words("r", {"cat", "car"}), prototype_of({"dog"}), store);
  CHECK_THAT(forward, WithinAbs(0.2, 1e-9));
  CHECK_THAT(backward, WithinAbs(0.6, 1e-9));
  CHECK(forward != backward);
}

TEST_CASE("mean_relevance_error fixture values", "[relevance]") {
  auto store = three_word_store();
  const auto proto = prototype_of({"dog", "car"});
  CHECK(mean_relevance_error(std::vector<ResultDoc>{}, proto, store) == 2.0);
  CHECK(mean_relevance_error(std::vector{doc_with_words("1", {"dog"})}, proto, store) == 0.0);
  CHECK_THAT(mean_relevance_error(
                 std::vector{doc_with_words("1", {"dog"}), doc_with_words("2", {"cat"})}, proto,
                 store),
             WithinAbs(0.1, 1e-9));
}

TEST_CASE("MRE matches a brute-force triple loop", "[relevance][property]") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    auto store = testing::random_store(120, 12, rng);
    const auto proto = prototype_of(testing::random_words(store, 1, 30, rng));
    std::vector<ResultDoc> results;
    std::uniform_int_distribution<int> count(0, 50);
    for (int i = count(rng); i > 0; --i) {
      results.push_back(doc_with_words(std::to_string(i), testing::random_words(store, 0, 30, rng)));
    }
    const double fast = mean_relevance_error(results, proto, store);
    CHECK_THAT(fast, WithinAbs(brute_mre(results, proto, store), 1e-9));
    CHECK(fast >= 0.0);
    CHECK(fast <= 2.0);
  }
}

TEST_CASE("MRE is permutation and duplication invariant", "[relevance][property]") {
  std::mt19937_64 rng(77);
  auto store = testing::random_store(60, 6, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const auto proto = prototype_of(testing::random_words(store, 1, 10, rng));
    std::vector<ResultDoc> results;
    for (int i = 0; i < 12; ++i) {
      results.push_back(doc_with_words(std::to_string(i), testing::random_words(store, 0, 8, rng)));
    }
    const double base = mean_relevance_error(results, proto, store);
    auto shuffled = results;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK_THAT(mean_relevance_error(shuffled, proto, store), WithinAbs(base, 1e-12));
    auto doubled = results;
    doubled.insert(doubled.end(), results.begin(), results.end());
    CHECK_THAT(mean_relevance_error(doubled, proto, store), WithinAbs(base, 1e-12));
  }
}

TEST_CASE("RE = 0 only for exact vector containment", "[relevance][property]") {
  std::mt19937_64 rng(8);
  auto store = testing::random_store(40, 4, rng);
  for (int trial = 0; trial < 300; ++trial) {
    const auto proto = prototype_of(testing::random_words(store, 1, 10, rng));
    const auto doc = doc_with_words("r", testing::random_words(store, 1, 6, rng));
    const double re = relevance_error(doc, proto, store);
    const bool contained = std::all_of(doc.words.begin(), doc.words.end(), [&](const auto& w) {
      return std::find(proto.words.begin(), proto.words.end(), w) != proto.words.end();
    });
    if (contained) CHECK(re == 0.0);
    if (re == 0.0) CHECK(contained);
  }
}

TEST_CASE("rank_by_re", "[relevance]") {
  auto store = three_word_store();
  const auto proto = prototype_of({"dog", "car"});
  auto ranked = rank_by_re(std::vector{doc_with_words("a", {"cat"}), doc_with_words("b", {"dog"})},
                           proto, store);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].doc.id == "b");
  CHECK(ranked[0].score == 0.0);
  CHECK(ranked[1].doc.id == "a");
  CHECK_THAT(ranked[1].score, WithinAbs(0.2, 1e-9));

  CHECK(rank_by_re(std::vector<ResultDoc>{}, proto, store).empty());

  auto tied = rank_by_re(std::vector{doc_with_words("z", {"cat"}), doc_with_words("m", {"cat"})},
                         proto, store);
  CHECK(tied[0].doc.id == "m");
  CHECK(tied[1].doc.id == "z");
}

TEST_CASE("rank_by_re is invariant to rescaling all vectors", "[relevance][property]") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::pair<std::string, std::vector<double>>> raw;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(5);
    for (auto& x : v) x = g(rng);
    raw.emplace_back(testing::word_name(i), v);
  }
  auto scaled = raw;
  for (auto& [t, v] : scaled) {
    for (auto& x : v) x *= 37.5;
  }
  auto a = EmbeddingStore::from_vectors(5, raw);
  auto b = EmbeddingStore::from_vectors(5, scaled);
  for (int trial = 0; trial < 20; ++trial) {
    const auto proto = prototype_of(testing::random_words(a, 1, 8, rng));
    std::vector<ResultDoc> docs;
    for (int i = 0; i < 15; ++i) {
      docs.push_back(doc_with_words(std::to_string(i), testing::random_words(a, 1, 6, rng)));
    }
    auto ra = rank_by_re(docs, proto, a);
    auto rb = rank_by_re(docs, proto, b);
    for (std::size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra[i].doc.id == rb[i].doc.id);
      CHECK_THAT(ra[i].score, WithinAbs(rb[i].score, 1e-12));
    }
  }
}

TEST_CASE("tfidf_score", "[relevance]") {
  auto cfg = testing::small_config();
  ResultDoc same{"1", "red dog barks", {}, {}};
  ResultDoc other{"2", "blue car", {}, {}};
  std::vector<ResultDoc> pool{same, other};
  auto stats = build_corpus_stats(pool, cfg);
  PrototypeDocument proto{"red dog barks", {}, {}};
  CHECK_THAT(tfidf_score(same, proto, stats, cfg), WithinAbs(1.0, 1e-12));
  CHECK(tfidf_score(other, proto, stats, cfg) == 0.0);

  ResultDoc dogdog{"a", "dog dog", {}, {}};
  std::vector<ResultDoc> two{dogdog, ResultDoc{"b", "dog", {}, {}}};
  auto stats2 = build_corpus_stats(two, cfg);
  CHECK(stats2.doc_count == 2);
  CHECK(stats2.df("dog") == 2);
  CHECK_THAT(tfidf_score(dogdog, PrototypeDocument{"dog", {}, {}}, stats2, cfg),
             WithinAbs(1.0, 1e-12));
}

TEST_CASE("bm25_score", "[relevance]") {
  auto cfg = testing::small_config();
  ResultDoc r{"1", "dog", {}, {}};
  std::vector<ResultDoc> pool{r};
  auto stats = build_corpus_stats(pool, cfg);
  CHECK(bm25_score(r, PrototypeDocument{"car", {}, {}}, stats, cfg) == 0.0);
  // N=1, df=1, |r| = avgdl: reduces to idf = ln(1 + 0.5/1.5).
  CHECK_THAT(bm25_score(r, PrototypeDocument{"dog", {}, {}}, stats, cfg),
             WithinAbs(0.28768207245178085, 1e-12));

  ResultDoc low{"a", "dog cat bird", {}, {}};
  ResultDoc high{"b", "dog dog bird", {}, {}};
  std::vector<ResultDoc> pool2{low, high};
  auto stats2 = build_corpus_stats(pool2, cfg);
  CHECK(bm25_score(high, PrototypeDocument{"dog", {}, {}}, stats2, cfg) >=
        bm25_score(low, PrototypeDocument{"dog", {}, {}}, stats2, cfg));
}

TEST_CASE("bm25 never decreases with term frequency", "[relevance][property]") {
  auto cfg = testing::small_config();
  std::vector<ResultDoc> pool;
  for (int tf = 0; tf < 10; ++tf) {
    std::string text = "filler words here";
    for (int i = 0; i < tf; ++i) text += " dog";
    pool.push_back({std::to_string(tf), text, {}, {}});
  }
  auto stats = build_corpus_stats(pool, cfg);
  PrototypeDocument q{"dog", {}, {}};
  // Same length documents, different tf.
  double prev = -1.0;
  for (int tf = 1; tf <= 6; ++tf) {
    std::string text;
    for (int i = 0; i < 6; ++i) text += i < tf ? " dog" : " pad";
    const double s = bm25_score(ResultDoc{"x", text, {}, {}}, q, stats, cfg);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("desm_score", "[relevance]") {
  auto store = three_word_store();
  CHECK_THAT(desm_score(doc_with_words("r", {"dog"}), prototype_of({"dog"}), store),
             WithinAbs(1.0, 1e-12));
  CHECK_THAT(desm_score(doc_with_words("r", {"dog"}), prototype_of({"car"}), store),
             WithinAbs(0.0, 1e-12));
  CHECK_THAT(desm_score(doc_with_words("r", {"dog", "car"}), prototype_of({"dog"}), store),
             WithinAbs(0.7071067811865475, 1e-9));
  CHECK(desm_score(doc_with_words("r", {}), prototype_of({"dog"}), store) == -1.0);
}

TEST_CASE("rank_by_measure orders best-first per measure", "[relevance]") {
  auto store = three_word_store();
  auto cfg = testing::small_config();
  std::vector<ResultDoc> pool{make_result_doc("far", "car car", {}, cfg, store),
                              make_result_doc("near", "dog", {}, cfg, store),
                              make_result_doc("mid", "cat dog", {}, cfg, store)};
  auto stats = build_corpus_stats(pool, cfg);
  ScoringContext ctx{&store, &cfg, &stats, {}};
  const auto proto = build_prototype("dog", cfg, store);
  for (Measure m : {Measure::RE, Measure::TFIDF, Measure::BM25, Measure::DESM}) {
    auto ranked = rank_by_measure(pool, proto, m, ctx);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked.front().doc.id == "near");
    CHECK(ranked.back().doc.id == "far");
    CHECK(ranked.front().measure == m);
  }
  ScoringContext no_stats{&store, &cfg, nullptr, {}};
  CHECK_THROWS_AS(rank_by_measure(pool, proto, Measure::BM25, no_stats), ContractViolation);
  CHECK(parse_measure("bm25") == Measure::BM25);
  CHECK_FALSE(parse_measure("lsa").has_value());
}
