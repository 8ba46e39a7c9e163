#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iqs/embeddings.hpp"
#include "iqs/textprep.hpp"

namespace iqs {

/// Score assigned to an empty result batch or a result with no usable words.
inline constexpr double kMaxRelevanceError = 2.0;

struct ResultDoc {
  std::string id;
  std::string text;
  TokenList words;  // filtered word set; may be empty
  std::optional<std::int64_t> timestamp;
};

/// Builds a ResultDoc, deriving `words` from `text` through the pipeline.
ResultDoc make_result_doc(std::string id, std::string text,
                          std::optional<std::int64_t> timestamp, const TokenizerConfig& config,
                          const EmbeddingStore& store);

enum class Measure { RE, TFIDF, BM25, DESM };

std::string_view to_string(Measure m);
std::optional<Measure> parse_measure(std::string_view name);

/// True when smaller scores mean more relevant (only RE).
constexpr bool ascending(Measure m) { return m == Measure::RE; }

struct ScoredResult {
  ResultDoc doc;
  double score = 0.0;
  Measure measure = Measure::RE;
};

/// Prototype words resolved to store ids once, for repeated scoring.
class ResolvedPrototype {
 public:
  /// Throws ContractViolation if no prototype word is in the store.
  ResolvedPrototype(const PrototypeDocument& prototype, const EmbeddingStore& store);

  const EmbeddingStore& store() const noexcept { return *store_; }
  std::span<const EmbeddingStore::TokenId> ids() const noexcept { return ids_; }

  /// Minimum cosine distance from `word` to any prototype word.
  double word_distance(EmbeddingStore::TokenId word) const;

 private:
  const EmbeddingStore* store_;
  std::vector<EmbeddingStore::TokenId> ids_;
};

/// dist(w, d): minimum cosine distance between `word` and the prototype words.
/// Throws ContractViolation when `word` is absent from the store or the
/// prototype has no words.
double word_doc_distance(std::string_view word, const PrototypeDocument& prototype,
                         const EmbeddingStore& store);

/// Mean word-to-prototype distance over the result's words. A result with no
/// words scores kMaxRelevanceError.
double relevance_error(const ResultDoc& result, const PrototypeDocument& prototype,
                       const EmbeddingStore& store);
double relevance_error(const ResultDoc& result, const ResolvedPrototype& prototype);

/// Mean relevance error of a result batch; kMaxRelevanceError when empty.
double mean_relevance_error(std::span<const ResultDoc> results,
                            const PrototypeDocument& prototype, const EmbeddingStore& store);
double mean_relevance_error(std::span<const ResultDoc> results,
                            const ResolvedPrototype& prototype);

/// Ascending by RE, ties by id.
std::vector<ScoredResult> rank_by_re(std::span<const ResultDoc> results,
                                     const PrototypeDocument& prototype,
                                     const EmbeddingStore& store);

/// Document-frequency table for the lexical baselines.
struct CorpusStats {
  std::size_t doc_count = 0;
  double avg_doc_length = 0.0;
  std::unordered_map<std::string, std::size_t> doc_freq;

  std::size_t df(const std::string& term) const {
    auto it = doc_freq.find(term);
    return it == doc_freq.end() ? 0 : it->second;
  }
};

CorpusStats build_corpus_stats(std::span<const ResultDoc> docs, const TokenizerConfig& config);

/// Cosine similarity of raw-count TF x smoothed-IDF vectors,
/// idf = ln((N + 1) / (df + 1)) + 1.
double tfidf_score(const ResultDoc& result, const PrototypeDocument& prototype,
                   const CorpusStats& stats, const TokenizerConfig& config);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

/// Okapi BM25 of the prototype's distinct terms against the result.
double bm25_score(const ResultDoc& result, const PrototypeDocument& prototype,
                  const CorpusStats& stats, const TokenizerConfig& config,
                  Bm25Params params = {});

/// Mean cosine similarity of prototype words to the result's normalized
/// centroid. -1 when the result has no words.
double desm_score(const ResultDoc& result, const PrototypeDocument& prototype,
                  const EmbeddingStore& store);

/// Everything a measure may need. Lexical measures require `stats`.
struct ScoringContext {
  const EmbeddingStore* store = nullptr;
  const TokenizerConfig* config = nullptr;
  const CorpusStats* stats = nullptr;
  Bm25Params bm25{};
};

/// Scores every result with `measure` and sorts best-first (ascending for RE,
/// descending otherwise), ties by id.
std::vector<ScoredResult> rank_by_measure(std::span<const ResultDoc> results,
                                          const PrototypeDocument& prototype, Measure measure,
                                          const ScoringContext& ctx);

}  // namespace iqs
