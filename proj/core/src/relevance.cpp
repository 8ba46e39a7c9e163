#include "iqs/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "iqs/errors.hpp"

namespace iqs {

namespace {

std::vector<std::string> content_terms(std::string_view text, const TokenizerConfig& config) {
  auto terms = lexical_tokens(text, config);
  std::erase_if(terms, [&](const std::string& t) { return config.stopwords.contains(t); });
  return terms;
}

std::unordered_map<std::string, std::size_t> term_counts(const std::vector<std::string>& terms) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : terms) ++counts[t];
  return counts;
}

}  // namespace

ResultDoc make_result_doc(std::string id, std::string text,
                          std::optional<std::int64_t> timestamp, const TokenizerConfig& config,
                          const EmbeddingStore& store) {
  ResultDoc doc;
  doc.words = tokenize(text, config, store);
  doc.id = std::move(id);
  doc.text = std::move(text);
  doc.timestamp = timestamp;
  return doc;
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::RE: return "re";
    case Measure::TFIDF: return "tfidf";
    case Measure::BM25: return "bm25";
    case Measure::DESM: return "desm";
  }
  return "unknown";
}

std::optional<Measure> parse_measure(std::string_view name) {
  if (name == "re" || name == "mre") return Measure::RE;
  if (name == "tfidf") return Measure::TFIDF;
  if (name == "bm25") return Measure::BM25;
  if (name == "desm") return Measure::DESM;
  return std::nullopt;
}

ResolvedPrototype::ResolvedPrototype(const PrototypeDocument& prototype,
                                     const EmbeddingStore& store)
    : store_(&store) {
  ids_.reserve(prototype.words.size());
  for (const auto& w : prototype.words) {
    if (auto id = store.id_of(w)) ids_.push_back(*id);
  }
  if (ids_.empty()) throw ContractViolation("prototype has no words in the embedding store");
}

double ResolvedPrototype::word_distance(EmbeddingStore::TokenId word) const {
  double best = std::numeric_limits<double>::infinity();
  for (auto id : ids_) {
    best = std::min(best, store_->distance(word, id));
    if (best == 0.0) break;
  }
  return best;
}

double word_doc_distance(std::string_view word, const PrototypeDocument& prototype,
                         const EmbeddingStore& store) {
  auto id = store.id_of(word);
  if (!id) throw ContractViolation("word '" + std::string(word) + "' is not in the store");
  return ResolvedPrototype(prototype, store).word_distance(*id);
}

double relevance_error(const ResultDoc& result, const ResolvedPrototype& prototype) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& w : result.words) {
    auto id = prototype.store().id_of(w);
    if (!id) continue;
    sum += prototype.word_distance(*id);
    ++n;
  }
  if (n == 0) return kMaxRelevanceError;
  return sum / static_cast<double>(n);
}

double relevance_error(const ResultDoc& result, const PrototypeDocument& prototype,
                       const EmbeddingStore& store) {
  return relevance_error(result, ResolvedPrototype(prototype, store));
}

double mean_relevance_error(std::span<const ResultDoc> results,
                            const ResolvedPrototype& prototype) {
  if (results.empty()) return kMaxRelevanceError;
  double sum = 0.0;
  for (const auto& r : results) sum += relevance_error(r, prototype);
  return sum / static_cast<double>(results.size());
}

double mean_relevance_error(std::span<const ResultDoc> results,
                            const PrototypeDocument& prototype, const EmbeddingStore& store) {
  if (results.empty()) return kMaxRelevanceError;
  return mean_relevance_error(results, ResolvedPrototype(prototype, store));
}

std::vector<ScoredResult> rank_by_re(std::span<const ResultDoc> results,
                                     const PrototypeDocument& prototype,
                                     const EmbeddingStore& store) {
  ScoringContext ctx;
  ctx.store = &store;
  return rank_by_measure(results, prototype, Measure::RE, ctx);
}

CorpusStats build_corpus_stats(std::span<const ResultDoc> docs, const TokenizerConfig& config) {
  CorpusStats stats;
  stats.doc_count = docs.size();
  std::size_t total_len = 0;
  for (const auto& d : docs) {
    auto terms = content_terms(d.text, config);
    total_len += terms.size();
    std::unordered_set<std::string> uniq(terms.begin(), terms.end());
    for (const auto& t : uniq) ++stats.doc_freq[t];
  }
  stats.avg_doc_length =
      docs.empty() ? 0.0 : static_cast<double>(total_len) / static_cast<double>(docs.size());
  return stats;
}

double tfidf_score(const ResultDoc& result, const PrototypeDocument& prototype,
                   const CorpusStats& stats, const TokenizerConfig& config) {
  const auto r_counts = term_counts(content_terms(result.text, config));
  const auto d_counts = term_counts(content_terms(prototype.raw_text, config));
  const double n = static_cast<double>(stats.doc_count);
  auto idf = [&](const std::string& t) {
    return std::log((n + 1.0) / (static_cast<double>(stats.df(t)) + 1.0)) + 1.0;
  };

  double dot = 0.0;
  double r_norm = 0.0;
  double d_norm = 0.0;
  for (const auto& [t, c] : r_counts) {
    const double w = static_cast<double>(c) * idf(t);
    r_norm += w * w;
    if (auto it = d_counts.find(t); it != d_counts.end()) {
      dot += w * static_cast<double>(it->second) * idf(t);
    }
  }
  for (const auto& [t, c] : d_counts) {
    const double w = static_cast<double>(c) * idf(t);
    d_norm += w * w;
  }
  if (r_norm == 0.0 || d_norm == 0.0) return 0.0;
  return dot / (std::sqrt(r_norm) * std::sqrt(d_norm));
}

double bm25_score(const ResultDoc& result, const PrototypeDocument& prototype,
                  const CorpusStats& stats, const TokenizerConfig& config, Bm25Params params) {
  const auto r_terms = content_terms(result.text, config);
  const auto r_counts = term_counts(r_terms);
  auto d_terms = content_terms(prototype.raw_text, config);
  std::unordered_set<std::string> query(d_terms.begin(), d_terms.end());

  const double n = static_cast<double>(stats.doc_count);
  const double len = static_cast<double>(r_terms.size());
  const double avgdl = stats.avg_doc_length > 0.0 ? stats.avg_doc_length : len;
  const double norm = avgdl > 0.0 ? len / avgdl : 1.0;

  double score = 0.0;
  for (const auto& t : query) {
    auto it = r_counts.find(t);
    if (it == r_counts.end()) continue;
    const double df = static_cast<double>(stats.df(t));
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double tf = static_cast<double>(it->second);
    score += idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * norm));
  }
  return score;
}

double desm_score(const ResultDoc& result, const PrototypeDocument& prototype,
                  const EmbeddingStore& store) {
  std::vector<double> centroid(store.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& w : result.words) {
    auto v = store.vector(w);
    if (!v) continue;
    for (std::size_t i = 0; i < centroid.size(); ++i) centroid[i] += (*v)[i];
    ++n;
  }
  if (n == 0) return -1.0;
  double norm = 0.0;
  for (double x : centroid) norm += x * x;
  norm = std::sqrt(norm);

  double sum = 0.0;
  std::size_t m = 0;
  for (const auto& w : prototype.words) {
    auto v = store.vector(w);
    if (!v) continue;
    ++m;
    if (norm == 0.0) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < centroid.size(); ++i) dot += (*v)[i] * centroid[i];
    sum += dot / norm;
  }
  if (m == 0) return -1.0;
  return sum / static_cast<double>(m);
}

std::vector<ScoredResult> rank_by_measure(std::span<const ResultDoc> results,
                                          const PrototypeDocument& prototype, Measure measure,
                                          const ScoringContext& ctx) {
  std::vector<ScoredResult> scored;
  scored.reserve(results.size());
  if (results.empty()) return scored;

  const bool lexical = measure == Measure::TFIDF || measure == Measure::BM25;
  if (lexical && (ctx.stats == nullptr || ctx.config == nullptr)) {
    throw ContractViolation("lexical measures need corpus stats and a tokenizer config");
  }
  if (!lexical && ctx.store == nullptr) {
    throw ContractViolation("embedding measures need an embedding store");
  }

  std::optional<ResolvedPrototype> resolved;
  if (measure == Measure::RE) resolved.emplace(prototype, *ctx.store);

  for (const auto& r : results) {
    double s = 0.0;
    switch (measure) {
      case Measure::RE: s = relevance_error(r, *resolved); break;
      case Measure::TFIDF: s = tfidf_score(r, prototype, *ctx.stats, *ctx.config); break;
      case Measure::BM25: s = bm25_score(r, prototype, *ctx.stats, *ctx.config, ctx.bm25); break;
      case Measure::DESM: s = desm_score(r, prototype, *ctx.store); break;
    }
    scored.push_back({r, s, measure});
  }

  const bool asc = ascending(measure);
  std::stable_sort(scored.begin(), scored.end(), [asc](const auto& a, const auto& b) {
    if (a.score != b.score) return asc ? a.score < b.score : a.score > b.score;
    return a.doc.id < b.doc.id;
  });
  return scored;
}

}  // namespace iqs
