#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iqs/embeddings.hpp"
#include "iqs/relevance.hpp"
#include "iqs/textprep.hpp"

namespace iqs {

/// A keyword query. Terms keep the order they were added in (which is what
/// gets sent to an engine) but equality and ordering treat the query as a set.
class Query {
 public:
  /// Throws ContractViolation for an empty list or duplicate terms.
  explicit Query(std::vector<std::string> terms);

  const std::vector<std::string>& terms() const noexcept { return terms_; }
  /// Terms in lexicographic order; the identity of the query.
  const std::vector<std::string>& key() const noexcept { return key_; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool contains(std::string_view term) const;

  /// Space-joined terms in insertion order.
  std::string to_string() const;

  bool operator==(const Query& other) const { return key_ == other.key_; }
  std::strong_ordering operator<=>(const Query& other) const { return key_ <=> other.key_; }

 private:
  std::vector<std::string> terms_;
  std::vector<std::string> key_;
};

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();
inline constexpr std::size_t kDefaultRlimit = 20;

struct EngineCapabilities {
  bool boolean = true;
  std::size_t max_rlimit = kUnlimited;
};

/// Network-level failure talking to an engine. Safe to retry.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The engine answered with something that cannot be interpreted.
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Opaque keyword search engine. Implementations never return more than
/// `rlimit` results.
class SearchEngine {
 public:
  virtual ~SearchEngine() = default;
  virtual std::vector<ResultDoc> search(const Query& query, std::size_t rlimit) const = 0;
  virtual EngineCapabilities capabilities() const = 0;
};

struct RawDocument {
  std::string id;
  std::string text;
  std::optional<std::int64_t> timestamp;
};

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a JSON Lines corpus: {"id": string, "text": string, "timestamp"?: int}.
/// Throws IoError / ParseError (with path and line).
std::vector<RawDocument> load_corpus_jsonl(const std::filesystem::path& path);

/// In-memory boolean (AND) inverted index ordered like a microblog search:
/// newest first, then id descending; undated documents come last.
///
/// Every lexical token is indexed, stopwords included, plus each n-gram of up
/// to `entity_max_ngram` tokens that the embedding store knows as an entity
/// (so a query term "new_york" matches the text "New York").
class BooleanIndex final : public SearchEngine {
 public:
  /// Throws IngestionError naming the id on duplicate document ids.
  static BooleanIndex build(std::vector<RawDocument> corpus, const TokenizerConfig& config,
                            const EmbeddingStore& store);

  std::vector<ResultDoc> search(const Query& query, std::size_t rlimit) const override;
  EngineCapabilities capabilities() const override { return {true, kUnlimited}; }

  std::size_t doc_count() const noexcept { return docs_.size(); }
  std::size_t term_count() const noexcept { return postings_.size(); }
  std::size_t posting_count() const noexcept;

  /// Document ids containing `term`, ascending. Empty for unknown terms.
  std::vector<std::string> postings(std::string_view term) const;
  const ResultDoc* find(std::string_view id) const;
  /// All documents in result order.
  const std::vector<ResultDoc>& documents() const noexcept { return docs_; }

 private:
  BooleanIndex() = default;

  std::vector<ResultDoc> docs_;  // position = result rank
  std::unordered_map<std::string, std::uint32_t> id_to_pos_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> postings_;
};

}  // namespace iqs
