#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iqs/iqscore.hpp"
#include "iqs/metrics.hpp"
#include "iqs/relevance.hpp"
#include "iqs/searchsim.hpp"
#include "iqs/textprep.hpp"

namespace iqs {

struct Topic {
  std::string id;
  std::string query;
  std::optional<std::string> narrative;
};

/// Topic JSON Lines: {"id", "query", "narrative"?}.
std::vector<Topic> load_topics_jsonl(const std::filesystem::path& path);

/// Graded relevance judgments keyed by topic then document.
class Qrels {
 public:
  /// Negative grades are stored as 0.
  void add(const std::string& topic, const std::string& doc, int grade);

  int grade(const std::string& topic, const std::string& doc) const;
  bool is_relevant(const std::string& topic, const std::string& doc) const {
    return grade(topic, doc) > 0;
  }
  std::unordered_set<std::string> relevant(const std::string& topic) const;
  /// Every judged document of `topic`, in id order.
  std::vector<std::string> judged(const std::string& topic) const;
  const std::unordered_map<std::string, int>& grades(const std::string& topic) const;
  std::size_t topic_count() const noexcept { return by_topic_.size(); }

 private:
  std::map<std::string, std::unordered_map<std::string, int>> by_topic_;
};

/// TREC qrels layout: "<topic> <iteration> <doc> <grade>" per line.
Qrels load_qrels(const std::filesystem::path& path);

enum class Label { Relevant, Irrelevant, Unknown };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view name);

struct SessionParams {
  std::size_t label_budget = 300;  // n
  std::size_t batch_size = 10;     // k

  void validate() const;
};

struct LabeledDoc {
  ResultDoc doc;
  Label label = Label::Unknown;
};

struct Presentation {
  std::string doc_id;
  std::size_t rank = 0;  // position within its batch, 0-based
  std::size_t round = 0;
};

class LabelRejected : public std::runtime_error {
 public:
  LabelRejected(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

/// Relevance-feedback state for one topic: the growing prototype, the label
/// budget and the registry that keeps any document from being shown twice.
class FeedbackSession {
 public:
  FeedbackSession(Topic topic, const TextPipeline& pipeline, SessionParams params,
                  std::optional<std::string> prototype_text = std::nullopt);

  const Topic& topic() const noexcept { return topic_; }
  const PrototypeDocument& prototype() const noexcept { return prototype_; }
  const SessionParams& params() const noexcept { return params_; }

  std::size_t labels_used() const noexcept { return labels_.size(); }
  std::size_t remaining_budget() const noexcept {
    return params_.label_budget - labels_.size();
  }
  bool budget_exhausted() const noexcept { return labels_.size() >= params_.label_budget; }

  /// Presented or labeled.
  bool is_registered(const std::string& doc_id) const { return registered_.contains(doc_id); }
  bool is_labeled(const std::string& doc_id) const { return labels_.contains(doc_id); }
  /// Documents of the latest batch that may still be labeled.
  const std::unordered_set<std::string>& open_batch() const noexcept { return open_batch_; }

  /// Takes the best min(k, remaining budget) unregistered documents from
  /// `ranked` (best first), registers them as presented in `round`.
  std::vector<ScoredResult> present(std::span<const ScoredResult> ranked, std::size_t round);

  /// Records labels for presented, unlabeled documents. All-or-nothing:
  /// throws LabelRejected listing offending ids and leaves state untouched.
  /// Relevant documents expand the prototype.
  void apply_labels(std::span<const LabeledDoc> labels);

  /// Appends each document's text to the prototype once and rebuilds it.
  void expand_prototype(std::span<const ResultDoc> relevant_docs);

  const std::vector<std::string>& presentation_order() const noexcept { return presented_; }
  const std::vector<Presentation>& ranked_history() const noexcept { return history_; }
  const std::unordered_map<std::string, Label>& labels() const noexcept { return labels_; }
  /// Labeled document ids in labeling order.
  const std::vector<std::string>& label_order() const noexcept { return label_order_; }

 private:
  Topic topic_;
  TextPipeline pipeline_;
  SessionParams params_;
  std::string prototype_text_;
  PrototypeDocument prototype_;
  std::unordered_set<std::string> registered_;
  std::unordered_set<std::string> open_batch_;
  std::unordered_set<std::string> expanded_with_;
  std::unordered_map<std::string, Label> labels_;
  std::vector<std::string> label_order_;
  std::vector<std::string> presented_;
  std::vector<Presentation> history_;
};

struct CurvePoint {
  std::size_t labels = 0;
  double map = 0.0;
};

struct TopicRecord {
  std::string topic_id;
  std::string measure;  // re|tfidf|bm25|desm, or "iqs"
  double map = 0.0;
  double r_precision = 0.0;
  std::optional<double> ndcg;
  double recall = 0.0;  // relevant presented / relevant judged
  std::size_t labels_used = 0;
  std::size_t rounds = 0;
  std::size_t engine_calls = 0;
  std::vector<std::string> presented;
  std::vector<CurvePoint> curve;  // MAP after each round
  std::optional<std::string> error;
};

struct ExperimentOptions {
  SessionParams session{};
  std::optional<std::size_t> ndcg_cutoff;
  Bm25Params bm25{};
  /// Consecutive IQS rounds without a new document before giving up.
  std::size_t max_stale_rounds = 3;
};

/// Oracle labels from qrels: positive grade is relevant, anything else
/// (including unjudged) irrelevant.
Label oracle_label(const Qrels& qrels, const std::string& topic, const std::string& doc);

/// Ranks the current candidate documents against the session's prototype.
using FeedbackRanker = std::function<std::vector<ScoredResult>(const PrototypeDocument&)>;

/// The labeling protocol shared by every measure: rank, present the top k
/// unregistered, label through the oracle, expand, repeat until the budget or
/// the ranking runs dry. Returns the number of rounds.
std::size_t run_ranked_feedback(FeedbackSession& session, const FeedbackRanker& rank,
                                const Qrels& qrels, std::vector<CurvePoint>* curve = nullptr);

/// Ranking-measure evaluation over a topic's judged pool, starting from the
/// topic text as prototype. nullopt (with a warning on stderr) when the topic
/// has no relevant judgments.
std::optional<TopicRecord> mre_feedback_experiment(const Topic& topic, const Qrels& qrels,
                                                   std::span<const ResultDoc> pool,
                                                   Measure measure, const TextPipeline& pipeline,
                                                   const ExperimentOptions& options = {});

/// Full loop: IQS rounds against `engine`, the accumulated retrieved documents
/// ranked by RE, the top k labeled by the oracle, the prototype expanded,
/// until the label budget is spent.
std::optional<TopicRecord> iqs_feedback_experiment(const Topic& topic, const Qrels& qrels,
                                                   const SearchEngine& engine,
                                                   const IqsParams& params,
                                                   const TextPipeline& pipeline,
                                                   const ExperimentOptions& options = {});

/// No labels: the narrative is the prototype, IQS picks the queries and the
/// collected results come back ranked by RE. Throws ValidationError when the
/// topic has no narrative.
std::vector<ScoredResult> pseudo_relevance_run(const Topic& topic, const SearchEngine& engine,
                                               const IqsParams& params,
                                               const TextPipeline& pipeline,
                                               std::size_t per_query_cap = kDefaultCollectCap);

/// ROC AUC of RE as a relevance estimator (lower RE = more relevant).
double relevance_estimator_auc(const PrototypeDocument& prototype,
                               std::span<const std::pair<ResultDoc, bool>> labeled,
                               const EmbeddingStore& store);

struct AggregateRecord {
  std::string measure;
  std::size_t topics = 0;
  double map = 0.0;
  double r_precision = 0.0;
  std::optional<double> ndcg;
};

AggregateRecord aggregate(std::span<const TopicRecord> records);

void write_records_jsonl(std::ostream& out, std::span<const TopicRecord> records);
void write_records_csv(std::ostream& out, std::span<const TopicRecord> records);
/// Rows of (topic_id, measure, labels, map) for MAP-vs-labels plots.
void write_curve_csv(std::ostream& out, std::span<const TopicRecord> records);

}  // namespace iqs
