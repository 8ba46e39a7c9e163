#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace iqs {

class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mean over relevant documents of precision at their rank; relevant
/// documents never presented contribute 0. Throws ContractViolation when
/// `relevant` is empty.
double average_precision(std::span<const std::string> presented,
                         const std::unordered_set<std::string>& relevant);

/// Precision at rank |relevant|.
double r_precision(std::span<const std::string> presented,
                   const std::unordered_set<std::string>& relevant);

/// NDCG with linear gain (= grade) and log2(rank + 1) discount. The ideal
/// ordering is built from every positive grade in `grades`. Without a cutoff
/// the whole presented list is scored. Returns 0 when no grade is positive.
double ndcg(std::span<const std::string> presented,
            const std::unordered_map<std::string, int>& grades,
            std::optional<std::size_t> cutoff = std::nullopt);

enum class ScoreDirection { HigherIsBetter, LowerIsBetter };

/// ROC AUC as the probability that a random relevant item outranks a random
/// irrelevant one; ties count one half. Throws UndefinedMetric unless both
/// classes are present.
double roc_auc(std::span<const std::pair<double, bool>> scored, ScoreDirection direction);

}  // namespace iqs
