#pragma once

// Deliberately naive reference implementations of the ranking metrics.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace iqs::testing {

inline double ref_average_precision(const std::vector<std::string>& ranking,
                                    const std::set<std::string>& relevant) {
  double total = 0.0;
  for (std::size_t k = 1; k <= ranking.size(); ++k) {
    if (!relevant.count(ranking[k - 1])) continue;
    // precision@k recomputed from scratch
    int rel = 0;
    for (std::size_t i = 0; i < k; ++i) rel += relevant.count(ranking[i]) ? 1 : 0;
    total += rel / static_cast<double>(k);
  }
  return total / static_cast<double>(relevant.size());
}

inline double ref_r_precision(const std::vector<std::string>& ranking,
                              const std::set<std::string>& relevant) {
  const std::size_t r = relevant.size();
  int rel = 0;
  for (std::size_t i = 0; i < r && i < ranking.size(); ++i) rel += relevant.count(ranking[i]) ? 1 : 0;
  return rel / static_cast<double>(r);
}

inline double ref_ndcg(const std::vector<std::string>& ranking,
                       const std::map<std::string, int>& grades, std::size_t depth) {
  auto dcg = [&](const std::vector<int>& gains) {
    double s = 0.0;
    for (std::size_t i = 0; i < gains.size() && i < depth; ++i) {
      s += std::max(gains[i], 0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return s;
  };
  std::vector<int> got;
  for (const auto& id : ranking) {
    auto it = grades.find(id);
    got.push_back(it == grades.end() ? 0 : it->second);
  }
  std::vector<int> ideal;
  for (const auto& [id, g] : grades) ideal.push_back(g);
  std::sort(ideal.rbegin(), ideal.rend());
  const double best = dcg(ideal);
  return best > 0 ? dcg(got) / best : 0.0;
}

/// Pairwise count over every (relevant, irrelevant) pair; higher = better.
inline double ref_auc(const std::vector<std::pair<double, bool>>& scored) {
  double wins = 0.0;
  double pairs = 0.0;
  for (const auto& [sp, p] : scored) {
    if (!p) continue;
    for (const auto& [sn, n] : scored) {
      if (n) continue;
      pairs += 1.0;
      wins += sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

}  // namespace iqs::testing
