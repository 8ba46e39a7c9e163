#include "iqs/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "iqs/errors.hpp"

namespace iqs {

double average_precision(std::span<const std::string> presented,
                         const std::unordered_set<std::string>& relevant) {
  if (relevant.empty()) throw ContractViolation("average_precision: no relevant documents");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < presented.size(); ++i) {
    if (!relevant.contains(presented[i])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

double r_precision(std::span<const std::string> presented,
                   const std::unordered_set<std::string>& relevant) {
  if (relevant.empty()) throw ContractViolation("r_precision: no relevant documents");
  const std::size_t r = relevant.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(r, presented.size()); ++i) {
    if (relevant.contains(presented[i])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(r);
}

double ndcg(std::span<const std::string> presented,
            const std::unordered_map<std::string, int>& grades,
            std::optional<std::size_t> cutoff) {
  const std::size_t depth = cutoff.value_or(presented.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(depth, presented.size()); ++i) {
    auto it = grades.find(presented[i]);
    if (it == grades.end() || it->second <= 0) continue;
    dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> ideal;
  for (const auto& [doc, g] : grades) {
    if (g > 0) ideal.push_back(g);
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(depth, ideal.size()); ++i) {
    idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

double roc_auc(std::span<const std::pair<double, bool>> scored, ScoreDirection direction) {
  std::vector<std::pair<double, bool>> items(scored.begin(), scored.end());
  if (direction == ScoreDirection::LowerIsBetter) {
    for (auto& item : items) item.first = -item.first;
  }
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Mann-Whitney U with mid-ranks for ties.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].second) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetric("roc_auc needs both relevant and irrelevant items");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

}  // namespace iqs
