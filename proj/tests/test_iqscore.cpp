#include <catch_amalgamated.hpp>

#include <array>
#include <map>
#include <random>

#include "fixtures.hpp"
#include "iqs_checks.hpp"
#include "iqs/errors.hpp"
#include "iqs/iqscore.hpp"

using namespace iqs;
using testing::FunctionEngine;

namespace {

// Pearson chi-square against a uniform expectation.
double chi_square(const std::vector<int>& counts) {
  double total = 0;
  for (int c : counts) total += c;
  const double expect = total / static_cast<double>(counts.size());
  double chi = 0;
  for (int c : counts) chi += (c - expect) * (c - expect) / expect;
  return chi;
}

// dog/cat cluster vs an orthogonal distractor cluster.
EmbeddingStore planted_store() {
  return EmbeddingStore::from_vectors(3, {{"dog", {1, 0, 0}},
                                          {"cat", {0.95, 0.3, 0}},
                                          {"car", {0, 0, 1}},
                                          {"bus", {0, 0.1, 1}}});
}

}  // namespace

TEST_CASE("Rng streams are reproducible and distinct", "[iqscore]") {
  Rng a(derive_stream_seed(42, 0));
  Rng b(derive_stream_seed(42, 0));
  Rng c(derive_stream_seed(42, 1));
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
  CHECK_THROWS_AS(a.uniform_index(0), ContractViolation);
  std::vector<int> counts(7);
  for (int i = 0; i < 70000; ++i) ++counts[a.uniform_index(7)];
  CHECK(chi_square(counts) < 22.46);  // df=6, p=0.001
}

TEST_CASE("IqsParams validation", "[iqscore]") {
  IqsParams p;
  CHECK_NOTHROW(p.validate());
  p.itr = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.minq = 7;
  try {
    p.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.fields() == std::vector<std::string>{"maxq"});
  }
  auto preset = IqsParams::collect_preset();
  CHECK(preset.minq == 3);
  CHECK(preset.maxq == 6);
  CHECK(preset.num_queries == 5);
}

TEST_CASE("add_word", "[iqscore]") {
  Rng rng(1);
  CHECK(add_word(Query({"a"}), {"a", "b"}, rng) == Query({"a", "b"}));
  CHECK_THROWS_AS(add_word(Query({"a", "b"}), {"a", "b"}, rng), ContractViolation);
  std::map<std::string, int> seen;
  for (int i = 0; i < 8000; ++i) {
    auto q = add_word(Query({"a"}), {"a", "b", "c", "d", "e"}, rng);
    REQUIRE(q.size() == 2);
    REQUIRE(q.contains("a"));
    for (const auto& t : q.terms()) {
      if (t != "a") ++seen[t];
    }
  }
  std::vector<int> counts;
  for (auto& [k, v] : seen) counts.push_back(v);
  REQUIRE(counts.size() == 4);
  CHECK(chi_square(counts) < 16.27);  // df=3, p=0.001
}

TEST_CASE("remove_word is uniform", "[iqscore]") {
  Rng rng(2);
  CHECK_THROWS_AS(remove_word(Query({"a"}), rng), ContractViolation);
  std::vector<int> counts(2);
  for (int i = 0; i < 10000; ++i) {
    auto q = remove_word(Query({"a", "b"}), rng);
    REQUIRE(q.size() == 1);
    ++counts[q.contains("a") ? 0 : 1];
  }
  CHECK(chi_square(counts) < 10.83);  // df=1, p=0.001
}

TEST_CASE("swap_words composes add then remove", "[iqscore]") {
  Rng rng(3);
  std::vector<int> counts(2);
  for (int i = 0; i < 10000; ++i) {
    auto q = swap_words(Query({"a"}), {"a", "b"}, rng);
    REQUIRE(q.size() == 1);
    ++counts[q.contains("a") ? 0 : 1];
  }
  CHECK(chi_square(counts) < 10.83);
  CHECK_THROWS_AS(swap_words(Query({"a", "b"}), {"a", "b"}, rng), ContractViolation);
  for (int i = 0; i < 1000; ++i) {
    CHECK(swap_words(Query({"a", "b", "c"}), {"a", "b", "c", "d", "e"}, rng).size() == 3);
  }
}

TEST_CASE("QueryQueue", "[iqscore]") {
  CHECK_THROWS_AS(QueryQueue(0), ContractViolation);
  QueryQueue q(2);
  CHECK(q.offer(Query({"a"}), 0.5));
  CHECK_FALSE(q.offer(Query({"a"}), 0.5));  // no improvement
  CHECK(q.offer(Query({"a"}), 0.4));        // improvement replaces
  CHECK(q.size() == 1);
  CHECK(q.offer(Query({"b", "c"}), 0.3));
  CHECK(q.entries()[0].query == Query({"c", "b"}));
  CHECK_FALSE(q.offer(Query({"d"}), 0.9));  // full, worse than worst
  CHECK(q.offer(Query({"d"}), 0.1));        // evicts the worst ("a")
  CHECK(q.size() == 2);
  CHECK(q.entries()[0].query == Query({"d"}));
  CHECK(q.entries()[1].query == Query({"b", "c"}));
}

TEST_CASE("planted fixture reaches MRE 0 inside {dog, cat}", "[iqscore]") {
  auto store = planted_store();
  auto cfg = testing::small_config();
  std::vector<RawDocument> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back({"p" + std::to_string(i), "dog cat", i});
  for (int i = 0; i < 30; ++i) corpus.push_back({"n" + std::to_string(i), "car bus", i});
  auto index = BooleanIndex::build(corpus, cfg, store);
  auto proto = build_prototype("dog cat", cfg, store);
  REQUIRE(proto.candidate_vocab == TokenList{"dog", "cat"});
  IqsParams p;
  p.seed = 7;
  auto result = iqs_run(proto, index, p, store);
  REQUIRE_FALSE(result.queue.empty());
  const auto& top = result.queue.entries().front();
  CHECK(top.mre == 0.0);
  for (const auto& t : top.query.terms()) CHECK((t == "dog" || t == "cat"));
  CHECK(testing::audit_trace(result, p, proto.candidate_vocab).empty());
  CHECK(result.seed == 7);
}

TEST_CASE("zero results suppress AddWord for exactly one iteration", "[iqscore]") {
  auto store = testing::three_word_store();
  // Single-word queries return one relevant doc; anything longer returns nothing.
  FunctionEngine engine([](const Query& q, std::size_t) {
    if (q.size() > 1) return std::vector<ResultDoc>{};
    return std::vector<ResultDoc>{testing::doc_with_words("d", {"dog"})};
  });
  auto proto = testing::prototype_of({"dog", "cat", "car"});
  IqsParams p;
  p.seed = 11;
  p.maxq = 2;
  p.itr = 40;
  p.runs = 4;
  auto result = iqs_run(proto, engine, p, store);
  CHECK(testing::audit_trace(result, p, proto.candidate_vocab).empty());

  std::size_t zero_then_checked = 0;
  std::size_t restored = 0;
  const auto& recs = result.trace.records;
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    if (recs[i].run != recs[i + 1].run) continue;
    if (recs[i].query && recs[i].result_count == 0) {
      CHECK(recs[i].mre == 2.0);
      const auto& next = recs[i + 1].offered;
      CHECK(std::find(next.begin(), next.end(), IqsAction::AddWord) == next.end());
      ++zero_then_checked;
      // The record after a non-empty evaluation offers AddWord again (q_best has one word).
      if (i + 2 < recs.size() && recs[i + 2].run == recs[i].run &&
          recs[i + 1].result_count > 0) {
        const auto& after = recs[i + 2].offered;
        CHECK(std::find(after.begin(), after.end(), IqsAction::AddWord) != after.end());
        ++restored;
      }
    }
  }
  CHECK(zero_then_checked > 0);
  CHECK(restored > 0);
}

TEST_CASE("engine errors skip the iteration", "[iqscore]") {
  auto store = testing::three_word_store();
  int n = 0;
  FunctionEngine engine([&](const Query&, std::size_t) -> std::vector<ResultDoc> {
    if (++n % 2 == 0) throw TransportError("down");
    return {testing::doc_with_words("d", {"cat"})};
  });
  auto proto = testing::prototype_of({"dog", "cat", "car"});
  IqsParams p;
  p.seed = 5;
  auto result = iqs_run(proto, engine, p, store);
  CHECK(result.trace.engine_calls == p.runs * (p.itr + 1));
  std::size_t errors = 0;
  for (const auto& r : result.trace.records) {
    if (r.engine_error) {
      ++errors;
      CHECK_FALSE(r.accepted);
    }
  }
  CHECK(errors > 0);
  CHECK(testing::audit_trace(result, p, proto.candidate_vocab).empty());
}

TEST_CASE("iqs_run is deterministic and conformant on random fixtures", "[iqscore][property]") {
  std::mt19937_64 gen(123);
  auto cfg = testing::small_config();
  for (int trial = 0; trial < 20; ++trial) {
    auto store = testing::random_store(30, 6, gen);
    std::vector<RawDocument> corpus;
    for (int i = 0; i < 200; ++i) {
      std::string text;
      for (const auto& w : testing::random_words(store, 1, 6, gen)) text += w + " ";
      corpus.push_back({"d" + std::to_string(i), text, i});
    }
    auto index = BooleanIndex::build(corpus, cfg, store);
    std::string proto_text;
    for (const auto& w : testing::random_words(store, 3, 10, gen)) proto_text += w + " ";
    auto proto = build_prototype(proto_text, cfg, store);
    IqsParams p;
    p.seed = gen();
    p.minq = 1 + trial % 2;
    p.maxq = 2 + trial % 4;
    p.num_queries = 1 + trial % 6;
    auto a = iqs_run(proto, index, p, store);
    auto b = iqs_run(proto, index, p, store);
    CHECK(testing::same_trace(a, b));
    auto bad = testing::audit_trace(a, p, proto.candidate_vocab);
    CHECK(bad.empty());
    if (!bad.empty()) UNSCOPED_INFO(bad.front());
  }
}

TEST_CASE("iqs_run argument checks", "[iqscore]") {
  auto store = testing::three_word_store();
  FunctionEngine engine([](const Query&, std::size_t) { return std::vector<ResultDoc>{}; });
  IqsParams p;
  p.minq = 3;
  CHECK_THROWS_AS(iqs_run(testing::prototype_of({"dog", "cat"}), engine, p, store),
                  ContractViolation);
  p = {};
  p.itr = 0;
  CHECK_THROWS_AS(iqs_run(testing::prototype_of({"dog"}), engine, p, store), ValidationError);

  // Nothing ever retrieved: queue stays empty, every evaluation is MRE 2.0.
  p = {};
  p.seed = 1;
  auto r = iqs_run(testing::prototype_of({"dog", "cat"}), engine, p, store);
  CHECK(r.queue.empty());
  for (const auto& rec : r.trace.records) CHECK(rec.mre == 2.0);
}

TEST_CASE("hill climbing finds the optimum on a small vocabulary", "[iqscore][property]") {
  auto store = EmbeddingStore::from_vectors(
      3, {{"a", {1, 0, 0}}, {"b", {0.9, 0.4, 0}}, {"c", {0.6, 0.8, 0}},
          {"d", {0.2, 1, 0.1}}, {"x", {0, 0, 1}}, {"y", {0, 0.2, 1}}});
  auto cfg = testing::small_config();
  std::mt19937_64 gen(5);
  std::vector<std::string> words{"a", "b", "c", "d", "x", "y"};
  std::vector<RawDocument> corpus;
  for (int i = 0; i < 300; ++i) {
    std::string text;
    for (const auto& w : words) {
      if (gen() % 3 == 0) text += w + " ";
    }
    corpus.push_back({"d" + std::to_string(i), text, i});
  }
  auto index = BooleanIndex::build(corpus, cfg, store);
  auto proto = build_prototype("a b c d", cfg, store);
  IqsParams p;
  const double optimum =
      testing::exhaustive_best_mre(proto.candidate_vocab, index, p, proto, store);
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    p.seed = seed;
    auto r = iqs_run(proto, index, p, store);
    if (!r.queue.empty() && std::abs(r.queue.entries().front().mre - optimum) < 1e-12) ++hits;
  }
  CHECK(hits >= 80);
}

TEST_CASE("collect unions queue results in order", "[iqscore]") {
  FunctionEngine engine([](const Query& q, std::size_t) {
    if (q.contains("x")) {
      return std::vector<ResultDoc>{testing::doc_with_words("D1", {}),
                                    testing::doc_with_words("D2", {})};
    }
    return std::vector<ResultDoc>{testing::doc_with_words("D2", {}),
                                  testing::doc_with_words("D3", {})};
  });
  QueryQueue q(5);
  q.offer(Query({"x"}), 0.1);
  q.offer(Query({"y"}), 0.2);
  std::vector<std::string> ids;
  for (const auto& d : collect(q, engine, 500)) ids.push_back(d.id);
  CHECK(ids == std::vector<std::string>{"D1", "D2", "D3"});
  CHECK(collect(q, engine, 1).size() <= 2);
  CHECK_THROWS_AS(collect(QueryQueue(3), engine, 10), ContractViolation);
}
