#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

#include "iqs/errors.hpp"
#include "iqs/harness.hpp"
#include "iqs/http_engine.hpp"
#include "iqs/iqscore.hpp"
#include "iqs/relevance.hpp"
#include "iqs/searchsim.hpp"
#include "iqs/session_service.hpp"
#include "iqs/textprep.hpp"

namespace iqs::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Scores are printed rounded to 12 decimals so that floating-point noise
// (0.19999999999999996) does not leak into machine output.
double tidy(double v) {
  const double r = std::round(v * 1e12) / 1e12;
  return r == 0.0 ? 0.0 : r;
}

// ---------------------------------------------------------------------------
// Flag groups

struct TextFlags {
  std::string embeddings;
  std::size_t max_tokens = kDefaultMaxTokens;
  std::string stopwords;
  std::string synonyms;
  std::string wordclasses;
  std::string expand = "none";
  std::size_t knn_k = kDefaultKnnK;
};

struct IqsFlags {
  std::string preset = "default";
  std::optional<std::size_t> itr, runs, minq, maxq, rlimit, num_queries;
  std::optional<std::uint64_t> seed;
};

struct EngineFlags {
  std::string corpus;
  std::string engine_url;
  std::size_t min_interval_ms = 1000;
};

void add_text_flags(CLI::App* cmd, TextFlags& f) {
  cmd->add_option("--embeddings", f.embeddings,
                  "Word vectors, text format: optional '<count> <dim>' header, then "
                  "'<token> <v1> ... <vdim>' per line")
      ->required();
  cmd->add_option("--max-tokens", f.max_tokens, "Load at most this many vectors (0 = all)")
      ->capture_default_str();
  cmd->add_option("--stopwords", f.stopwords, "Stopword file, one word per line (# comments)");
  cmd->add_option("--synonyms", f.synonyms, "Synonym lexicon: 'word<TAB>syn1,syn2' per line");
  cmd->add_option("--wordclasses", f.wordclasses,
                  "Word-class lexicon: 'word<TAB>noun|verb|adjective|number|other' per line; "
                  "words classed 'other' are dropped from prototypes");
  cmd->add_option("--expand", f.expand, "Prototype vocabulary expansion")
      ->check(CLI::IsMember({"none", "synonyms", "knn", "both"}))
      ->capture_default_str();
  cmd->add_option("--knn-k", f.knn_k, "Neighbours per word for --expand knn")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_iqs_flags(CLI::App* cmd, IqsFlags& f, bool with_preset) {
  if (with_preset) {
    cmd->add_option("--preset", f.preset,
                    "Parameter profile: 'default' (itr=15 runs=3 minq=1 maxq=6 "
                    "num_queries=40) or 'collect' (minq=3 maxq=6 num_queries=5)")
        ->check(CLI::IsMember({"default", "collect"}))
        ->capture_default_str();
  }
  cmd->add_option("--itr", f.itr, "Hill-climbing iterations per run");
  cmd->add_option("--runs", f.runs, "Random restarts");
  cmd->add_option("--minq", f.minq, "Minimum query length");
  cmd->add_option("--maxq", f.maxq, "Maximum query length");
  cmd->add_option("--rlimit", f.rlimit, "Results requested per query");
  cmd->add_option("--num-queries", f.num_queries, "Query queue capacity");
  cmd->add_option("--seed", f.seed, "RNG seed; identical flags and seed give identical output");
}

void add_engine_flags(CLI::App* cmd, EngineFlags& f) {
  auto* corpus = cmd->add_option(
      "--corpus", f.corpus,
      "Corpus JSON Lines {\"id\", \"text\", \"timestamp\"?}, searched by an in-memory AND index");
  auto* url = cmd->add_option("--engine-url", f.engine_url,
                              "Remote search endpoint template with {query} and {limit} slots; "
                              "must return a JSON array of {\"id\", \"text\", \"timestamp\"?}");
  corpus->excludes(url);
  url->excludes(corpus);
  cmd->add_option("--min-interval-ms", f.min_interval_ms,
                  "Minimum spacing between remote requests")
      ->capture_default_str();
}

IqsParams make_params(const IqsFlags& f) {
  IqsParams p = f.preset == "collect" ? IqsParams::collect_preset() : IqsParams{};
  if (f.itr) p.itr = *f.itr;
  if (f.runs) p.runs = *f.runs;
  if (f.minq) p.minq = *f.minq;
  if (f.maxq) p.maxq = *f.maxq;
  if (f.rlimit) p.rlimit = *f.rlimit;
  if (f.num_queries) p.num_queries = *f.num_queries;
  p.seed = f.seed;
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Loading

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) {
    throw ValidationError(flag + ": no such file: " + path, {flag});
  }
}

struct Context {
  EmbeddingStore store;
  TokenizerConfig config;
  std::optional<SynonymLexicon> synonyms;
  TextPipeline pipeline;
};

void check_text_files(const TextFlags& f) {
  require_file(f.embeddings, "--embeddings");
  require_file(f.stopwords, "--stopwords");
  require_file(f.synonyms, "--synonyms");
  require_file(f.wordclasses, "--wordclasses");
  if ((f.expand == "synonyms" || f.expand == "both") && f.synonyms.empty()) {
    throw ValidationError("--expand " + f.expand + " needs --synonyms", {"--synonyms"});
  }
}

std::unique_ptr<Context> load_context(const TextFlags& f, std::ostream& err) {
  auto ctx = std::make_unique<Context>(Context{
      load_embeddings(f.embeddings,
                      f.max_tokens == 0 ? std::nullopt : std::optional<std::size_t>(f.max_tokens)),
      {}, std::nullopt, {}});
  err << "loaded " << ctx->store.token_count() << " vectors (dim " << ctx->store.dim() << ")";
  if (ctx->store.skipped_zero_norm() > 0) {
    err << ", skipped " << ctx->store.skipped_zero_norm() << " zero-norm";
  }
  err << '\n';
  if (!f.stopwords.empty()) ctx->config.stopwords = load_stopwords(f.stopwords);
  if (!f.wordclasses.empty()) ctx->config.wordclass_lexicon = load_wordclass_lexicon(f.wordclasses);
  ctx->config.validate();
  if (!f.synonyms.empty()) ctx->synonyms = load_synonym_lexicon(f.synonyms);

  ctx->pipeline.config = &ctx->config;
  ctx->pipeline.store = &ctx->store;
  ctx->pipeline.expansions.synonyms = f.expand == "synonyms" || f.expand == "both";
  ctx->pipeline.expansions.knn = f.expand == "knn" || f.expand == "both";
  ctx->pipeline.synonyms = ctx->synonyms ? &*ctx->synonyms : nullptr;
  ctx->pipeline.knn_k = f.knn_k;
  return ctx;
}

void check_engine_flags(const EngineFlags& f) {
  if (f.corpus.empty() && f.engine_url.empty()) {
    throw ValidationError("a search engine is required: --corpus or --engine-url",
                          {"--corpus", "--engine-url"});
  }
  require_file(f.corpus, "--corpus");
}

std::unique_ptr<SearchEngine> make_engine(const EngineFlags& f, const Context& ctx,
                                          std::ostream& err) {
  if (!f.corpus.empty()) {
    auto index = std::make_unique<BooleanIndex>(
        BooleanIndex::build(load_corpus_jsonl(f.corpus), ctx.config, ctx.store));
    err << "indexed " << index->doc_count() << " documents, " << index->term_count()
        << " terms\n";
    return index;
  }
  HttpEngineOptions opts;
  opts.min_interval = std::chrono::milliseconds(f.min_interval_ms);
  return std::make_unique<HttpSearchEngine>(f.engine_url, ctx.config, ctx.store, opts);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  return (std::uint64_t{rd()} << 32) ^ rd();
}

Json doc_json(const ResultDoc& d) {
  Json j;
  j["id"] = d.id;
  j["text"] = d.text;
  if (d.timestamp) j["timestamp"] = *d.timestamp;
  return j;
}

Json queue_json(const QueryQueue& queue) {
  Json arr = Json::array();
  for (const auto& e : queue.entries()) {
    arr.push_back(Json{{"query", e.query.to_string()}, {"terms", e.query.terms()},
                       {"mre", tidy(e.mre)}});
  }
  return arr;
}

void print_queue_table(const QueryQueue& queue, std::ostream& err) {
  err << std::left << std::setw(6) << "rank" << std::setw(12) << "MRE" << "query\n";
  std::size_t rank = 1;
  for (const auto& e : queue.entries()) {
    std::ostringstream mre;
    mre << std::fixed << std::setprecision(6) << e.mre;
    err << std::left << std::setw(6) << rank++ << std::setw(12) << mre.str()
        << e.query.to_string() << '\n';
  }
}

// Opens `path` for writing, or returns `fallback` when the path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw IoError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

// ---------------------------------------------------------------------------
// Subcommands

struct IndexCmd {
  TextFlags text;
  std::string corpus;
  std::string report;
};

int cmd_index(const IndexCmd& c, std::ostream& out, std::ostream& err) {
  check_text_files(c.text);
  require_file(c.corpus, "--corpus");
  auto ctx = load_context(c.text, err);
  auto index = BooleanIndex::build(load_corpus_jsonl(c.corpus), ctx->config, ctx->store);
  std::size_t empty = 0;
  std::size_t words = 0;
  std::size_t dated = 0;
  for (const auto& d : index.documents()) {
    words += d.words.size();
    if (d.words.empty()) ++empty;
    if (d.timestamp) ++dated;
  }
  Json j;
  j["documents"] = index.doc_count();
  j["terms"] = index.term_count();
  j["postings"] = index.posting_count();
  j["dated_documents"] = dated;
  j["documents_without_embedded_words"] = empty;
  j["mean_embedded_words"] =
      index.doc_count() == 0 ? 0.0 : tidy(static_cast<double>(words) / index.doc_count());
  Sink sink(c.report, out);
  *sink << j.dump() << '\n';
  return kExitOk;
}

struct ScoreCmd {
  TextFlags text;
  std::string prototype;
  std::string results;
  std::string measure = "re";
};

int cmd_score(const ScoreCmd& c, std::ostream& out, std::ostream& err) {
  check_text_files(c.text);
  require_file(c.prototype, "--prototype");
  require_file(c.results, "--results");
  const Measure measure = *parse_measure(c.measure);
  auto ctx = load_context(c.text, err);
  const auto proto = ctx->pipeline.prototype(read_text_file(c.prototype));

  std::vector<ResultDoc> results;
  for (auto& raw : load_corpus_jsonl(c.results)) {
    results.push_back(make_result_doc(raw.id, raw.text, raw.timestamp, ctx->config, ctx->store));
  }
  const CorpusStats stats = build_corpus_stats(results, ctx->config);
  ScoringContext sc;
  sc.store = &ctx->store;
  sc.config = &ctx->config;
  sc.stats = &stats;

  Json j;
  j["measure"] = to_string(measure);
  j["prototype_words"] = proto.words;
  if (measure == Measure::RE) {
    j["mre"] = tidy(mean_relevance_error(results, proto, ctx->store));
  }
  Json arr = Json::array();
  std::size_t rank = 0;
  for (const auto& r : rank_by_measure(results, proto, measure, sc)) {
    arr.push_back(Json{{"id", r.doc.id}, {"rank", rank++}, {"score", tidy(r.score)}});
  }
  j["results"] = std::move(arr);
  out << j.dump() << '\n';
  return kExitOk;
}

struct IqsCmd {
  TextFlags text;
  IqsFlags iqs;
  EngineFlags engine;
  std::string prototype;
  std::string trace;
};

int cmd_iqs(const IqsCmd& c, std::ostream& out, std::ostream& err) {
  check_text_files(c.text);
  check_engine_flags(c.engine);
  require_file(c.prototype, "--prototype");
  IqsParams params = make_params(c.iqs);
  params.seed = resolve_seed(params.seed);

  auto ctx = load_context(c.text, err);
  auto engine = make_engine(c.engine, *ctx, err);
  const auto proto = ctx->pipeline.prototype(read_text_file(c.prototype));
  const auto result = iqs_run(proto, *engine, params, ctx->store);

  Json j;
  j["seed"] = result.seed;
  j["engine_calls"] = result.trace.engine_calls;
  j["vocabulary"] = proto.candidate_vocab;
  j["queries"] = queue_json(result.queue);
  out << j.dump() << '\n';
  print_queue_table(result.queue, err);

  if (!c.trace.empty()) {
    Sink sink(c.trace, out);
    for (const auto& r : result.trace.records) {
      Json t;
      t["run"] = r.run;
      t["iteration"] = r.iteration;
      t["action"] = to_string(r.action);
      Json offered = Json::array();
      for (auto a : r.offered) offered.push_back(to_string(a));
      t["offered"] = std::move(offered);
      t["query"] = r.query ? Json(r.query->terms()) : Json(nullptr);
      t["mre"] = tidy(r.mre);
      t["results"] = r.result_count;
      t["accepted"] = r.accepted;
      if (r.engine_error) t["engine_error"] = true;
      *sink << t.dump() << '\n';
    }
  }
  return kExitOk;
}

struct FeedbackCmd {
  TextFlags text;
  IqsFlags iqs;
  EngineFlags engine;
  std::string topics;
  std::string qrels;
  std::string mode = "mre";
  std::vector<std::string> measures;
  std::size_t budget = 300;
  std::size_t batch_size = 10;
  std::optional<std::size_t> ndcg_cutoff;
  std::size_t max_stale_rounds = 3;
  std::size_t jobs = 1;
  std::string out;
  std::string csv;
  std::string curve;
};

TopicRecord pseudo_record(const Topic& topic, const Qrels& qrels, const SearchEngine& engine,
                          const IqsParams& params, const TextPipeline& pipeline,
                          const ExperimentOptions& options) {
  TopicRecord rec;
  rec.topic_id = topic.id;
  rec.measure = "pseudo";
  try {
    for (const auto& r : pseudo_relevance_run(topic, engine, params, pipeline)) {
      rec.presented.push_back(r.doc.id);
    }
  } catch (const ValidationError& e) {
    rec.error = e.what();
    return rec;
  } catch (const UntokenizablePrototype& e) {
    rec.error = e.what();
    return rec;
  }
  const auto relevant = qrels.relevant(topic.id);
  rec.map = average_precision(rec.presented, relevant);
  rec.r_precision = r_precision(rec.presented, relevant);
  rec.ndcg = ndcg(rec.presented, qrels.grades(topic.id), options.ndcg_cutoff);
  std::size_t hits = 0;
  for (const auto& id : rec.presented) hits += relevant.contains(id) ? 1 : 0;
  rec.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  return rec;
}

int cmd_feedback(FeedbackCmd c, std::ostream& out, std::ostream& err) {
  check_text_files(c.text);
  require_file(c.topics, "--topics");
  require_file(c.qrels, "--qrels");
  if (c.mode == "mre" && c.engine.corpus.empty()) {
    throw ValidationError("--mode mre scores the judged pool and needs --corpus", {"--corpus"});
  }
  if (c.mode != "mre") check_engine_flags(c.engine);
  require_file(c.engine.corpus, "--corpus");
  if (c.jobs == 0) throw ValidationError("--jobs must be at least 1", {"--jobs"});

  std::vector<Measure> measures;
  if (c.mode == "mre") {
    if (c.measures.empty()) c.measures = {"re", "tfidf", "bm25", "desm"};
    for (const auto& m : c.measures) {
      auto parsed = parse_measure(m);
      if (!parsed) throw ValidationError("unknown measure '" + m + "'", {"--measure"});
      measures.push_back(*parsed);
    }
  } else if (!c.measures.empty()) {
    throw ValidationError("--measure applies to --mode mre only", {"--measure"});
  }
  IqsParams params = make_params(c.iqs);
  const std::uint64_t base_seed = resolve_seed(params.seed);
  ExperimentOptions options;
  options.session = {c.budget, c.batch_size};
  options.session.validate();
  options.ndcg_cutoff = c.ndcg_cutoff;
  options.max_stale_rounds = c.max_stale_rounds;

  auto ctx = load_context(c.text, err);
  const auto topics = load_topics_jsonl(c.topics);
  const auto qrels = load_qrels(c.qrels);
  auto engine = make_engine(c.engine, *ctx, err);
  const auto* index = dynamic_cast<const BooleanIndex*>(engine.get());

  struct Task {
    std::size_t topic;
    std::optional<Measure> measure;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    if (c.mode == "mre") {
      for (auto m : measures) tasks.push_back({t, m});
    } else {
      tasks.push_back({t, std::nullopt});
    }
  }

  std::vector<std::optional<TopicRecord>> results(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Topic& topic = topics[tasks[i].topic];
      IqsParams p = params;
      p.seed = derive_stream_seed(base_seed, tasks[i].topic);
      if (qrels.relevant(topic.id).empty()) {
        if (!tasks[i].measure || *tasks[i].measure == measures.front()) {
          std::lock_guard lock(err_mutex);
          err << "warning: skipping topic " << topic.id << ": no relevant judgments\n";
        }
        continue;
      }
      try {
        if (c.mode == "mre") {
          std::vector<ResultDoc> pool;
          std::size_t missing = 0;
          for (const auto& id : qrels.judged(topic.id)) {
            if (const ResultDoc* d = index->find(id)) {
              pool.push_back(*d);
            } else {
              ++missing;
            }
          }
          if (missing > 0) {
            std::lock_guard lock(err_mutex);
            err << "warning: topic " << topic.id << ": " << missing
                << " judged documents are not in the corpus\n";
          }
          results[i] = mre_feedback_experiment(topic, qrels, pool, *tasks[i].measure,
                                               ctx->pipeline, options);
        } else if (c.mode == "iqs") {
          results[i] = iqs_feedback_experiment(topic, qrels, *engine, p, ctx->pipeline, options);
        } else {
          results[i] = pseudo_record(topic, qrels, *engine, p, ctx->pipeline, options);
        }
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(c.jobs, tasks.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<TopicRecord> records;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!failures[i].empty()) {
      TopicRecord r;
      r.topic_id = topics[tasks[i].topic].id;
      r.measure = tasks[i].measure ? std::string(to_string(*tasks[i].measure)) : c.mode;
      r.error = failures[i];
      records.push_back(std::move(r));
    } else if (results[i]) {
      records.push_back(std::move(*results[i]));
    }
  }

  // One aggregate per measure, so records are written grouped by measure.
  std::vector<std::string> order;
  for (const auto& r : records) {
    if (std::find(order.begin(), order.end(), r.measure) == order.end()) order.push_back(r.measure);
  }
  Sink sink(c.out, out);
  std::optional<Sink> csv;
  if (!c.csv.empty()) csv.emplace(c.csv, out);
  bool csv_header = true;
  for (const auto& m : order) {
    std::vector<TopicRecord> group;
    for (const auto& r : records) {
      if (r.measure == m) group.push_back(r);
    }
    write_records_jsonl(*sink, group);
    if (csv) {
      std::ostringstream s;
      write_records_csv(s, group);
      std::string text = s.str();
      if (!csv_header) text = text.substr(text.find('\n') + 1);
      **csv << text;
      csv_header = false;
    }
    const auto agg = aggregate(group);
    err << m << ": " << agg.topics << " topics, MAP " << std::fixed << std::setprecision(4)
        << agg.map << ", R-prec " << agg.r_precision;
    if (agg.ndcg) err << ", NDCG " << *agg.ndcg;
    err << '\n' << std::defaultfloat;
  }
  if (!c.curve.empty()) {
    Sink curve(c.curve, out);
    write_curve_csv(*curve, records);
  }
  return kExitOk;
}

struct CollectCmd {
  TextFlags text;
  IqsFlags iqs;
  EngineFlags engine;
  std::string prototype;
  std::string prototypes;
  std::size_t cap = kDefaultCollectCap;
  std::string queries;
  std::string out;
};

int cmd_collect(const CollectCmd& c, std::ostream& out, std::ostream& err) {
  check_text_files(c.text);
  check_engine_flags(c.engine);
  if (c.prototype.empty() == c.prototypes.empty()) {
    throw ValidationError("give exactly one of --prototype or --prototypes",
                          {"--prototype", "--prototypes"});
  }
  require_file(c.prototype, "--prototype");
  require_file(c.prototypes, "--prototypes");
  if (c.cap == 0) throw ValidationError("--cap must be at least 1", {"--cap"});
  IqsParams params = make_params(c.iqs);
  const std::uint64_t base_seed = resolve_seed(params.seed);

  auto ctx = load_context(c.text, err);
  auto engine = make_engine(c.engine, *ctx, err);

  std::vector<std::pair<std::optional<std::string>, std::string>> items;
  if (!c.prototype.empty()) {
    items.emplace_back(std::nullopt, read_text_file(c.prototype));
  } else {
    for (auto& raw : load_corpus_jsonl(c.prototypes)) items.emplace_back(raw.id, raw.text);
  }

  Sink docs_out(c.out, out);
  std::optional<Sink> queries_out;
  if (!c.queries.empty()) queries_out.emplace(c.queries, out);
  std::size_t total = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [id, text] = items[i];
    const std::string label = id ? *id : std::string("prototype");
    PrototypeDocument proto;
    try {
      proto = ctx->pipeline.prototype(text);
    } catch (const UntokenizablePrototype& e) {
      err << "warning: skipping " << label << ": " << e.what() << '\n';
      continue;
    }
    if (proto.candidate_vocab.size() < params.minq) {
      err << "warning: skipping " << label << ": vocabulary smaller than minq\n";
      continue;
    }
    IqsParams p = params;
    p.seed = derive_stream_seed(base_seed, i);
    const auto run = iqs_run(proto, *engine, p, ctx->store);
    err << label << ": " << run.queue.size() << " queries\n";
    print_queue_table(run.queue, err);
    if (queries_out) {
      for (const auto& e : run.queue.entries()) {
        Json q;
        if (id) q["prototype_id"] = *id;
        q["query"] = e.query.to_string();
        q["terms"] = e.query.terms();
        q["mre"] = tidy(e.mre);
        **queries_out << q.dump() << '\n';
      }
    }
    if (run.queue.empty()) continue;
    for (const auto& d : collect(run.queue, *engine, c.cap)) {
      Json j;
      if (id) j["prototype_id"] = *id;
      j.update(doc_json(d));
      *docs_out << j.dump() << '\n';
      ++total;
    }
  }
  err << "collected " << total << " documents\n";
  return kExitOk;
}

struct ServeCmd {
  TextFlags text;
  EngineFlags engine;
  std::string topics;
  std::string bind = "127.0.0.1";
  int port = 8080;
  std::string state_dir;
  std::size_t export_cap = kDefaultCollectCap;
};

int cmd_serve(const ServeCmd& c, std::ostream& err) {
  check_text_files(c.text);
  check_engine_flags(c.engine);
  require_file(c.topics, "--topics");
  if (c.port < 0 || c.port > 65535) throw ValidationError("--port out of range", {"--port"});

  auto ctx = load_context(c.text, err);
  auto engine = make_engine(c.engine, *ctx, err);
  ServiceEnvironment env;
  env.pipeline = &ctx->pipeline;
  env.engines["default"] = engine.get();
  env.export_cap = c.export_cap;
  if (!c.topics.empty()) {
    for (auto& t : load_topics_jsonl(c.topics)) env.topics[t.id] = t;
  }
  std::optional<fs::path> state;
  if (!c.state_dir.empty()) {
    fs::create_directories(c.state_dir);
    state = c.state_dir;
  }
  SessionManager manager(std::move(env), state);
  err << "restored " << manager.session_ids().size() << " sessions\n";
  SessionServer server(manager);

  // Stop cleanly on SIGINT/SIGTERM: the signals are blocked here (and in the
  // server threads, which inherit the mask) and picked up by a waiter thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::atomic<bool> done{false};
  std::thread waiter([&] {
    timespec tick{0, 200'000'000};
    while (!done) {
      if (sigtimedwait(&signals, nullptr, &tick) > 0) {
        server.stop();
        return;
      }
    }
  });

  err << "listening on http://" << c.bind << ':' << c.port << '\n' << std::flush;
  const bool ok = server.listen(c.bind, c.port);
  done = true;
  waiter.join();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  if (!ok) {
    err << "error: cannot serve on " << c.bind << ':' << c.port << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative query selection: score results against a prototype document, "
               "search for the keyword queries that retrieve the most relevant results, and "
               "evaluate relevance feedback."};
  app.name("iqs");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  IndexCmd index;
  auto* index_cmd = app.add_subcommand("index", "Build the AND index of a corpus and report its size");
  add_text_flags(index_cmd, index.text);
  index_cmd->add_option("--corpus", index.corpus, "Corpus JSON Lines")->required();
  index_cmd->add_option("--report", index.report, "Write the JSON report here instead of stdout");

  ScoreCmd score;
  auto* score_cmd = app.add_subcommand(
      "score", "Score results against a prototype; lower RE/MRE is more relevant");
  add_text_flags(score_cmd, score.text);
  score_cmd->add_option("--prototype", score.prototype, "Prototype document, plain text")
      ->required();
  score_cmd->add_option("--results", score.results, "Results JSON Lines {\"id\", \"text\"}")
      ->required();
  score_cmd->add_option("--measure", score.measure, "re | tfidf | bm25 | desm")
      ->check(CLI::IsMember({"re", "tfidf", "bm25", "desm"}))
      ->capture_default_str();

  IqsCmd iqs;
  auto* iqs_cmd = app.add_subcommand(
      "iqs", "Search for keyword queries whose results are closest to a prototype");
  add_text_flags(iqs_cmd, iqs.text);
  add_iqs_flags(iqs_cmd, iqs.iqs, true);
  add_engine_flags(iqs_cmd, iqs.engine);
  iqs_cmd->add_option("--prototype", iqs.prototype, "Prototype document, plain text")->required();
  iqs_cmd->add_option("--trace", iqs.trace, "Write the per-iteration trace (JSON Lines) here");

  FeedbackCmd fb;
  auto* fb_cmd = app.add_subcommand(
      "feedback",
      "Relevance-feedback experiment over topics and qrels; writes per-topic metric records "
      "(JSON Lines) followed by an aggregate record per measure");
  add_text_flags(fb_cmd, fb.text);
  add_iqs_flags(fb_cmd, fb.iqs, false);
  add_engine_flags(fb_cmd, fb.engine);
  fb_cmd->add_option("--topics", fb.topics, "Topics JSON Lines {\"id\", \"query\", \"narrative\"?}")
      ->required();
  fb_cmd->add_option("--qrels", fb.qrels, "Judgments, '<topic> <iter> <doc> <grade>' per line")
      ->required();
  fb_cmd->add_option("--mode", fb.mode,
                     "mre: rank the judged pool by --measure; iqs: IQS rounds against the "
                     "engine; pseudo: narrative as prototype, no labels")
      ->check(CLI::IsMember({"mre", "iqs", "pseudo"}))
      ->capture_default_str();
  fb_cmd->add_option("--measure", fb.measures, "re,tfidf,bm25,desm (default: all)")
      ->delimiter(',');
  fb_cmd->add_option("--budget", fb.budget, "Label budget n per topic")->capture_default_str();
  fb_cmd->add_option("--batch-size", fb.batch_size, "Documents labeled per round (k)")
      ->capture_default_str();
  fb_cmd->add_option("--ndcg-cutoff", fb.ndcg_cutoff, "NDCG depth (default: whole ranking)");
  fb_cmd->add_option("--max-stale-rounds", fb.max_stale_rounds,
                     "IQS rounds without an unseen document before a topic stops")
      ->capture_default_str();
  fb_cmd->add_option("--jobs", fb.jobs, "Topics evaluated in parallel")->capture_default_str();
  fb_cmd->add_option("--out", fb.out, "Write records here instead of stdout");
  fb_cmd->add_option("--csv", fb.csv, "Also write the records as CSV");
  fb_cmd->add_option("--curve", fb.curve, "Write MAP-after-each-round rows as CSV");

  CollectCmd col;
  auto* col_cmd = app.add_subcommand(
      "collect", "Find queries for each prototype and collect their results (deduplicated)");
  add_text_flags(col_cmd, col.text);
  add_iqs_flags(col_cmd, col.iqs, true);
  add_engine_flags(col_cmd, col.engine);
  auto* one = col_cmd->add_option("--prototype", col.prototype, "Prototype document, plain text");
  auto* many = col_cmd->add_option("--prototypes", col.prototypes,
                                   "Prototypes JSON Lines {\"id\", \"text\"}; output documents "
                                   "carry \"prototype_id\"");
  one->excludes(many);
  many->excludes(one);
  col_cmd->add_option("--cap", col.cap, "Results retrieved per query")->capture_default_str();
  col_cmd->add_option("--queries", col.queries, "Write the chosen queries (JSON Lines) here");
  col_cmd->add_option("--out", col.out, "Write documents here instead of stdout");

  ServeCmd serve;
  auto* serve_cmd = app.add_subcommand(
      "serve",
      "Serve the labeling session API: POST /sessions, GET /sessions/{id}/batch, "
      "POST /sessions/{id}/labels, GET /sessions/{id}/status, GET /sessions/{id}/export");
  add_text_flags(serve_cmd, serve.text);
  add_engine_flags(serve_cmd, serve.engine);
  serve_cmd->add_option("--topics", serve.topics, "Topics sessions may reference by id");
  serve_cmd->add_option("--bind", serve.bind, "Address to bind")->capture_default_str();
  serve_cmd->add_option("--port", serve.port, "Port")->capture_default_str();
  serve_cmd->add_option("--state-dir", serve.state_dir,
                        "Directory for session event logs; sessions found there are restored");
  serve_cmd->add_option("--export-cap", serve.export_cap, "Results per query on export")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*index_cmd) return cmd_index(index, out, err);
    if (*score_cmd) return cmd_score(score, out, err);
    if (*iqs_cmd) return cmd_iqs(iqs, out, err);
    if (*fb_cmd) return cmd_feedback(fb, out, err);
    if (*col_cmd) return cmd_collect(col, out, err);
    if (*serve_cmd) return cmd_serve(serve, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const UntokenizablePrototype& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace iqs::cli
