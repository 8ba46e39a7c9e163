#include <catch_amalgamated.hpp>

#include <random>

#include "iqs/errors.hpp"
#include "iqs/metrics.hpp"
#include "reference_metrics.hpp"

using namespace iqs;
using Catch::Matchers::WithinAbs;

namespace {

using Ids = std::vector<std::string>;
using Set = std::unordered_set<std::string>;

}  // namespace

TEST_CASE("average_precision examples", "[metrics]") {
  CHECK(average_precision(Ids{"a", "b"}, Set{"a", "b"}) == 1.0);
  CHECK_THAT(average_precision(Ids{"a", "x", "b"}, Set{"a", "b"}), WithinAbs(5.0 / 6.0, 1e-12));
  CHECK_THAT(average_precision(Ids{"a"}, Set{"a", "b"}), WithinAbs(0.5, 1e-12));  // b never shown
  CHECK(average_precision(Ids{}, Set{"a"}) == 0.0);
  CHECK_THROWS_AS(average_precision(Ids{"a"}, Set{}), ContractViolation);
}

TEST_CASE("r_precision examples", "[metrics]") {
  CHECK(r_precision(Ids{"a", "b", "x"}, Set{"a", "b"}) == 1.0);
  CHECK(r_precision(Ids{"x", "a", "b"}, Set{"a", "b"}) == 0.5);
  CHECK(r_precision(Ids{"a"}, Set{"a", "b"}) == 0.5);
  CHECK_THROWS_AS(r_precision(Ids{"a"}, Set{}), ContractViolation);
}

TEST_CASE("ndcg examples", "[metrics]") {
  std::unordered_map<std::string, int> g{{"a", 3}, {"b", 1}, {"c", 0}};
  CHECK(ndcg(Ids{"a", "b", "c"}, g) == 1.0);
  CHECK(ndcg(Ids{"c", "x"}, g) == 0.0);
  CHECK(ndcg(Ids{"a"}, {{"a", 0}}) == 0.0);
  CHECK(ndcg(Ids{"b", "a"}, g, 1) == 1.0 / 3.0);
}

TEST_CASE("frozen scikit-learn values", "[metrics]") {
  // tests/oracles/metric_values.py
  std::vector<std::pair<double, bool>> scored{{0.9, true}, {0.9, false}, {0.7, true},
                                              {0.4, true}, {0.4, false}, {0.2, false},
                                              {0.1, true}, {0.05, false}};
  CHECK_THAT(roc_auc(scored, ScoreDirection::HigherIsBetter), WithinAbs(0.625, 1e-12));

  std::unordered_map<std::string, int> g{{"d1", 2}, {"d2", 1}, {"d4", 3}, {"d5", 1}};
  Ids order{"d0", "d1", "d2", "d3", "d4", "d5"};
  CHECK_THAT(ndcg(order, g), WithinAbs(0.6314111399085647, 1e-12));
  CHECK_THAT(ndcg(order, g, 3), WithinAbs(0.36999401273810767, 1e-12));
}

TEST_CASE("roc_auc direction and degenerate input", "[metrics]") {
  // Lower RE = more relevant.
  std::vector<std::pair<double, bool>> re{{0.1, true}, {0.2, true}, {0.9, false}};
  CHECK(roc_auc(re, ScoreDirection::LowerIsBetter) == 1.0);
  CHECK(roc_auc(re, ScoreDirection::HigherIsBetter) == 0.0);
  std::vector<std::pair<double, bool>> tied{{0.5, true}, {0.5, false}};
  CHECK(roc_auc(tied, ScoreDirection::HigherIsBetter) == 0.5);
  std::vector<std::pair<double, bool>> one_class{{0.1, true}, {0.3, true}};
  CHECK_THROWS_AS(roc_auc(one_class, ScoreDirection::LowerIsBetter), UndefinedMetric);
  CHECK_THROWS_AS(roc_auc({}, ScoreDirection::LowerIsBetter), UndefinedMetric);
}

TEST_CASE("metrics match naive references on random rankings", "[metrics][property]") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 200; ++trial) {
    const int pool = 5 + static_cast<int>(rng() % 60);
    Ids all;
    for (int i = 0; i < pool; ++i) all.push_back("d" + std::to_string(i));
    std::shuffle(all.begin(), all.end(), rng);
    Ids ranking(all.begin(), all.begin() + 1 + static_cast<long>(rng() % pool));

    std::set<std::string> rel_ref;
    std::map<std::string, int> grades_ref;
    for (const auto& id : all) {
      const int g = static_cast<int>(rng() % 4) - (trial % 3 == 0 ? 0 : 1);
      grades_ref[id] = g;
      if (g > 0) rel_ref.insert(id);
    }
    if (rel_ref.empty()) rel_ref.insert(all.back()), grades_ref[all.back()] = 1;
    Set rel(rel_ref.begin(), rel_ref.end());
    std::unordered_map<std::string, int> grades(grades_ref.begin(), grades_ref.end());

    CHECK_THAT(average_precision(ranking, rel),
               WithinAbs(testing::ref_average_precision(ranking, rel_ref), 1e-9));
    CHECK_THAT(r_precision(ranking, rel),
               WithinAbs(testing::ref_r_precision(ranking, rel_ref), 1e-9));
    CHECK_THAT(ndcg(ranking, grades), WithinAbs(testing::ref_ndcg(ranking, grades_ref, ranking.size()), 1e-9));
    const std::size_t k = 1 + rng() % 20;
    CHECK_THAT(ndcg(ranking, grades, k), WithinAbs(testing::ref_ndcg(ranking, grades_ref, k), 1e-9));

    std::vector<std::pair<double, bool>> scored;
    for (const auto& id : all) {
      scored.emplace_back(static_cast<double>(rng() % 10) / 10.0, rel.contains(id));
    }
    if (rel.size() < all.size()) {
      CHECK_THAT(roc_auc(scored, ScoreDirection::HigherIsBetter),
                 WithinAbs(testing::ref_auc(scored), 1e-9));
      auto flipped = scored;
      for (auto& s : flipped) s.first = -s.first;
      CHECK_THAT(roc_auc(scored, ScoreDirection::LowerIsBetter),
                 WithinAbs(testing::ref_auc(flipped), 1e-9));
    }
  }
}
