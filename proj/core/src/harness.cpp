#include "iqs/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "iqs/errors.hpp"

namespace iqs {

std::vector<Topic> load_topics_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open topics file: " + path.string());
  std::vector<Topic> topics;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(path.string(), line_no, "expected a JSON object");
    Topic t;
    if (auto it = j.find("id"); it != j.end() && it->is_string()) {
      t.id = it->get<std::string>();
    } else if (it != j.end() && it->is_number_integer()) {
      t.id = std::to_string(it->get<std::int64_t>());
    } else {
      throw ParseError(path.string(), line_no, "missing field \"id\"");
    }
    auto q = j.find("query");
    if (q == j.end() || !q->is_string() || q->get<std::string>().empty()) {
      throw ParseError(path.string(), line_no, "missing non-empty string field \"query\"");
    }
    t.query = q->get<std::string>();
    if (auto it = j.find("narrative"); it != j.end() && it->is_string()) {
      t.narrative = it->get<std::string>();
    }
    topics.push_back(std::move(t));
  }
  return topics;
}

void Qrels::add(const std::string& topic, const std::string& doc, int grade) {
  by_topic_[topic][doc] = std::max(grade, 0);
}

int Qrels::grade(const std::string& topic, const std::string& doc) const {
  auto t = by_topic_.find(topic);
  if (t == by_topic_.end()) return 0;
  auto d = t->second.find(doc);
  return d == t->second.end() ? 0 : d->second;
}

std::unordered_set<std::string> Qrels::relevant(const std::string& topic) const {
  std::unordered_set<std::string> out;
  if (auto t = by_topic_.find(topic); t != by_topic_.end()) {
    for (const auto& [doc, g] : t->second) {
      if (g > 0) out.insert(doc);
    }
  }
  return out;
}

std::vector<std::string> Qrels::judged(const std::string& topic) const {
  std::vector<std::string> out;
  if (auto t = by_topic_.find(topic); t != by_topic_.end()) {
    for (const auto& [doc, g] : t->second) out.push_back(doc);
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::unordered_map<std::string, int>& Qrels::grades(const std::string& topic) const {
  static const std::unordered_map<std::string, int> kEmpty;
  auto t = by_topic_.find(topic);
  return t == by_topic_.end() ? kEmpty : t->second;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open qrels file: " + path.string());
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string topic, iter, doc, grade_text, extra;
    if (!(fields >> topic)) continue;
    if (!(fields >> iter >> doc >> grade_text) || (fields >> extra)) {
      throw ParseError(path.string(), line_no, "expected '<topic> <iter> <doc> <grade>'");
    }
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument(grade_text);
    } catch (const std::exception&) {
      throw ParseError(path.string(), line_no, "grade '" + grade_text + "' is not an integer");
    }
    qrels.add(topic, doc, grade);
  }
  return qrels;
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Relevant: return "relevant";
    case Label::Irrelevant: return "irrelevant";
    case Label::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Label> parse_label(std::string_view name) {
  if (name == "relevant") return Label::Relevant;
  if (name == "irrelevant") return Label::Irrelevant;
  if (name == "unknown") return Label::Unknown;
  return std::nullopt;
}

void SessionParams::validate() const {
  std::vector<std::string> bad;
  if (batch_size < 1) bad.emplace_back("batch_size");
  if (!bad.empty()) throw ValidationError("invalid session parameters", bad);
}

FeedbackSession::FeedbackSession(Topic topic, const TextPipeline& pipeline,
                                 SessionParams params,
                                 std::optional<std::string> prototype_text)
    : topic_(std::move(topic)), pipeline_(pipeline), params_(params) {
  params_.validate();
  prototype_text_ = prototype_text ? std::move(*prototype_text) : topic_.query;
  prototype_ = pipeline_.prototype(prototype_text_);
}

std::vector<ScoredResult> FeedbackSession::present(std::span<const ScoredResult> ranked,
                                                   std::size_t round) {
  const std::size_t take = std::min(params_.batch_size, remaining_budget());
  std::vector<ScoredResult> batch;
  for (const auto& r : ranked) {
    if (batch.size() >= take) break;
    if (registered_.contains(r.doc.id)) continue;
    if (std::any_of(batch.begin(), batch.end(),
                    [&](const ScoredResult& b) { return b.doc.id == r.doc.id; })) {
      continue;
    }
    batch.push_back(r);
  }
  open_batch_.clear();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    registered_.insert(batch[i].doc.id);
    open_batch_.insert(batch[i].doc.id);
    presented_.push_back(batch[i].doc.id);
    history_.push_back({batch[i].doc.id, i, round});
  }
  return batch;
}

void FeedbackSession::apply_labels(std::span<const LabeledDoc> labels) {
  std::vector<std::string> bad;
  std::unordered_set<std::string> in_request;
  for (const auto& l : labels) {
    const bool ok = open_batch_.contains(l.doc.id) && !labels_.contains(l.doc.id) &&
                    in_request.insert(l.doc.id).second;
    if (!ok) bad.push_back(l.doc.id);
  }
  if (!bad.empty()) {
    throw LabelRejected("labels rejected: documents not in the open batch or already labeled",
                        bad);
  }
  if (labels.size() > remaining_budget()) {
    std::vector<std::string> ids;
    for (const auto& l : labels) ids.push_back(l.doc.id);
    throw LabelRejected("labels exceed the remaining budget", ids);
  }

  std::vector<ResultDoc> relevant;
  for (const auto& l : labels) {
    labels_.emplace(l.doc.id, l.label);
    label_order_.push_back(l.doc.id);
    if (l.label == Label::Relevant) relevant.push_back(l.doc);
  }
  open_batch_.clear();
  expand_prototype(relevant);
}

void FeedbackSession::expand_prototype(std::span<const ResultDoc> relevant_docs) {
  bool changed = false;
  for (const auto& d : relevant_docs) {
    if (!expanded_with_.insert(d.id).second) continue;
    if (!prototype_text_.empty()) prototype_text_.push_back(' ');
    prototype_text_ += d.text;
    changed = true;
  }
  if (changed) prototype_ = pipeline_.prototype(prototype_text_);
}

Label oracle_label(const Qrels& qrels, const std::string& topic, const std::string& doc) {
  return qrels.is_relevant(topic, doc) ? Label::Relevant : Label::Irrelevant;
}

std::size_t run_ranked_feedback(FeedbackSession& session, const FeedbackRanker& rank,
                                const Qrels& qrels, std::vector<CurvePoint>* curve) {
  const auto relevant = qrels.relevant(session.topic().id);
  std::size_t rounds = 0;
  while (!session.budget_exhausted()) {
    const auto ranked = rank(session.prototype());
    const auto batch = session.present(ranked, rounds);
    if (batch.empty()) break;
    std::vector<LabeledDoc> labels;
    labels.reserve(batch.size());
    for (const auto& b : batch) {
      labels.push_back({b.doc, oracle_label(qrels, session.topic().id, b.doc.id)});
    }
    session.apply_labels(labels);
    ++rounds;
    if (curve != nullptr && !relevant.empty()) {
      curve->push_back(
          {session.labels_used(), average_precision(session.presentation_order(), relevant)});
    }
  }
  return rounds;
}

namespace {

std::optional<TopicRecord> prepare_record(const Topic& topic, const Qrels& qrels,
                                          std::string measure, const ExperimentOptions& options,
                                          std::unordered_set<std::string>& relevant) {
  relevant = qrels.relevant(topic.id);
  if (relevant.empty()) {
    std::cerr << "warning: skipping topic " << topic.id << ": no relevant judgments\n";
    return std::nullopt;
  }
  TopicRecord record;
  record.topic_id = topic.id;
  record.measure = std::move(measure);
  if (options.session.label_budget == 0) record.error = "label budget is zero";
  return record;
}

void finish_record(TopicRecord& record, const FeedbackSession& session, const Qrels& qrels,
                   const std::unordered_set<std::string>& relevant,
                   const ExperimentOptions& options) {
  record.presented = session.presentation_order();
  record.labels_used = session.labels_used();
  record.map = average_precision(record.presented, relevant);
  record.r_precision = r_precision(record.presented, relevant);
  record.ndcg = ndcg(record.presented, qrels.grades(record.topic_id), options.ndcg_cutoff);
  std::size_t hits = 0;
  for (const auto& id : record.presented) hits += relevant.contains(id) ? 1 : 0;
  record.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
}

}  // namespace

std::optional<TopicRecord> mre_feedback_experiment(const Topic& topic, const Qrels& qrels,
                                                   std::span<const ResultDoc> pool,
                                                   Measure measure, const TextPipeline& pipeline,
                                                   const ExperimentOptions& options) {
  std::unordered_set<std::string> relevant;
  auto record = prepare_record(topic, qrels, std::string(to_string(measure)), options, relevant);
  if (!record || record->error) return record;

  std::optional<FeedbackSession> session;
  try {
    session.emplace(topic, pipeline, options.session);
  } catch (const UntokenizablePrototype& e) {
    record->error = e.what();
    return record;
  }

  const CorpusStats stats = build_corpus_stats(pool, *pipeline.config);
  ScoringContext ctx;
  ctx.store = pipeline.store;
  ctx.config = pipeline.config;
  ctx.stats = &stats;
  ctx.bm25 = options.bm25;

  FeedbackRanker ranker = [&](const PrototypeDocument& prototype) {
    return rank_by_measure(pool, prototype, measure, ctx);
  };
  record->rounds = run_ranked_feedback(*session, ranker, qrels, &record->curve);
  finish_record(*record, *session, qrels, relevant, options);
  return record;
}

std::optional<TopicRecord> iqs_feedback_experiment(const Topic& topic, const Qrels& qrels,
                                                   const SearchEngine& engine,
                                                   const IqsParams& params,
                                                   const TextPipeline& pipeline,
                                                   const ExperimentOptions& options) {
  params.validate();
  std::unordered_set<std::string> relevant;
  auto record = prepare_record(topic, qrels, "iqs", options, relevant);
  if (!record || record->error) return record;

  std::optional<FeedbackSession> session;
  try {
    session.emplace(topic, pipeline, options.session);
  } catch (const UntokenizablePrototype& e) {
    record->error = e.what();
    return record;
  }

  const std::uint64_t base_seed = params.seed.value_or(std::random_device{}());
  std::vector<ResultDoc> retrieved;
  std::unordered_set<std::string> retrieved_ids;
  std::size_t iqs_round = 0;

  // One ranking request = IQS rounds until something unseen turns up (or we
  // give up), then every document retrieved so far ranked by RE.
  FeedbackRanker ranker = [&](const PrototypeDocument& prototype) {
    for (std::size_t stale = 0; stale < std::max<std::size_t>(options.max_stale_rounds, 1);
         ++stale) {
      if (prototype.candidate_vocab.size() < params.minq) break;
      IqsParams round_params = params;
      round_params.seed = derive_stream_seed(base_seed, iqs_round++);
      bool fresh = false;
      auto observer = [&](const Query&, const std::vector<ResultDoc>& docs) {
        for (const auto& d : docs) {
          if (retrieved_ids.insert(d.id).second) retrieved.push_back(d);
          if (!session->is_registered(d.id)) fresh = true;
        }
      };
      const auto run = iqs_run(prototype, engine, round_params, *pipeline.store, observer);
      record->engine_calls += run.trace.engine_calls;
      if (fresh) break;
    }
    return rank_by_re(retrieved, prototype, *pipeline.store);
  };

  record->rounds = run_ranked_feedback(*session, ranker, qrels, &record->curve);
  finish_record(*record, *session, qrels, relevant, options);
  return record;
}

std::vector<ScoredResult> pseudo_relevance_run(const Topic& topic, const SearchEngine& engine,
                                               const IqsParams& params,
                                               const TextPipeline& pipeline,
                                               std::size_t per_query_cap) {
  if (!topic.narrative || topic.narrative->find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError("topic " + topic.id + " has no narrative to use as prototype",
                          {"narrative"});
  }
  const PrototypeDocument prototype = pipeline.prototype(*topic.narrative);
  const auto run = iqs_run(prototype, engine, params, *pipeline.store);
  if (run.queue.empty()) return {};
  const auto docs = collect(run.queue, engine, per_query_cap);
  return rank_by_re(docs, prototype, *pipeline.store);
}

double relevance_estimator_auc(const PrototypeDocument& prototype,
                               std::span<const std::pair<ResultDoc, bool>> labeled,
                               const EmbeddingStore& store) {
  const ResolvedPrototype resolved(prototype, store);
  std::vector<std::pair<double, bool>> scored;
  scored.reserve(labeled.size());
  for (const auto& [doc, rel] : labeled) scored.emplace_back(relevance_error(doc, resolved), rel);
  return roc_auc(scored, ScoreDirection::LowerIsBetter);
}

AggregateRecord aggregate(std::span<const TopicRecord> records) {
  AggregateRecord agg;
  std::size_t with_ndcg = 0;
  double ndcg_sum = 0.0;
  for (const auto& r : records) {
    if (r.error) continue;
    if (agg.measure.empty()) agg.measure = r.measure;
    ++agg.topics;
    agg.map += r.map;
    agg.r_precision += r.r_precision;
    if (r.ndcg) {
      ++with_ndcg;
      ndcg_sum += *r.ndcg;
    }
  }
  if (agg.topics > 0) {
    agg.map /= static_cast<double>(agg.topics);
    agg.r_precision /= static_cast<double>(agg.topics);
  }
  if (with_ndcg > 0) agg.ndcg = ndcg_sum / static_cast<double>(with_ndcg);
  return agg;
}

void write_records_jsonl(std::ostream& out, std::span<const TopicRecord> records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["topic_id"] = r.topic_id;
    j["measure"] = r.measure;
    j["map"] = r.map;
    j["r_precision"] = r.r_precision;
    if (r.ndcg) j["ndcg"] = *r.ndcg;
    j["recall"] = r.recall;
    j["labels_used"] = r.labels_used;
    j["rounds"] = r.rounds;
    if (r.measure == "iqs") j["engine_calls"] = r.engine_calls;
    if (r.error) j["error"] = *r.error;
    out << j.dump() << '\n';
  }
  const auto agg = aggregate(records);
  nlohmann::ordered_json j;
  j["aggregate"] = true;
  j["measure"] = agg.measure;
  j["topics"] = agg.topics;
  j["map"] = agg.map;
  j["r_precision"] = agg.r_precision;
  if (agg.ndcg) j["ndcg"] = *agg.ndcg;
  out << j.dump() << '\n';
}

namespace {

std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_records_csv(std::ostream& out, std::span<const TopicRecord> records) {
  out << "topic_id,measure,map,r_precision,ndcg,recall,labels_used,rounds,error\n";
  for (const auto& r : records) {
    out << csv_field(r.topic_id) << ',' << r.measure << ',' << csv_number(r.map) << ','
        << csv_number(r.r_precision) << ',' << (r.ndcg ? csv_number(*r.ndcg) : "") << ','
        << csv_number(r.recall) << ',' << r.labels_used << ',' << r.rounds << ','
        << csv_field(r.error.value_or("")) << '\n';
  }
  const auto agg = aggregate(records);
  out << "__aggregate__," << agg.measure << ',' << csv_number(agg.map) << ','
      << csv_number(agg.r_precision) << ',' << (agg.ndcg ? csv_number(*agg.ndcg) : "")
      << ",,," << agg.topics << ",\n";
}

void write_curve_csv(std::ostream& out, std::span<const TopicRecord> records) {
  out << "topic_id,measure,labels,map\n";
  for (const auto& r : records) {
    for (const auto& p : r.curve) {
      out << csv_field(r.topic_id) << ',' << r.measure << ',' << p.labels << ','
          << csv_number(p.map) << '\n';
    }
  }
}

}  // namespace iqs
