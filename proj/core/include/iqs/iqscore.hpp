#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "iqs/embeddings.hpp"
#include "iqs/relevance.hpp"
#include "iqs/searchsim.hpp"
#include "iqs/textprep.hpp"

namespace iqs {

/// Seedable generator with a pinned derivation so runs reproduce across
/// platforms: mt19937_64 (fully specified by the standard) plus our own
/// bounded sampling instead of std::uniform_int_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 of (seed, stream); one independent stream per restart/round.
std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream);

struct IqsParams {
  std::size_t itr = 15;
  std::size_t runs = 3;
  std::size_t minq = 1;
  std::size_t maxq = 6;
  std::size_t rlimit = kDefaultRlimit;
  std::size_t num_queries = 40;
  std::optional<std::uint64_t> seed;

  /// Throws ValidationError listing every offending field.
  void validate() const;

  /// Bulk-collection profile: minq=3, maxq=6, num_queries=5.
  static IqsParams collect_preset();
};

struct QueueEntry {
  Query query;
  double mre = 0.0;
};

/// Best-first set of distinct queries, capped at `capacity`.
class QueryQueue {
 public:
  explicit QueryQueue(std::size_t capacity);

  /// Inserts or improves `query`. When full, a better entry evicts the worst.
  /// Returns true if the queue changed.
  bool offer(const Query& query, double mre);

  /// Ascending by MRE, ties by query.
  const std::vector<QueueEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  std::size_t capacity_;
  std::vector<QueueEntry> entries_;
};

// Query mutations. `vocab` is the candidate vocabulary in its canonical order.
// Each throws ContractViolation when the mutation is impossible.
Query add_word(const Query& q, const TokenList& vocab, Rng& rng);
Query remove_word(const Query& q, Rng& rng);
/// RemoveWord(AddWord(q)): the freshly added word may itself be the one removed.
Query swap_words(const Query& q, const TokenList& vocab, Rng& rng);

enum class IqsAction { Initial, AddWord, RemoveWord, SwapWords, None };

std::string_view to_string(IqsAction action);

struct TraceRecord {
  std::size_t run = 0;
  std::size_t iteration = 0;  // 0 is the initial evaluation
  IqsAction action = IqsAction::None;
  std::vector<IqsAction> offered;  // legal actions this iteration
  std::optional<Query> query;
  double mre = kMaxRelevanceError;
  std::size_t result_count = 0;
  bool accepted = false;
  bool engine_error = false;
};

struct IqsTrace {
  std::vector<TraceRecord> records;
  std::size_t engine_calls = 0;
};

struct IqsResult {
  QueryQueue queue;
  IqsTrace trace;
  std::uint64_t seed = 0;  // seed actually used
};

/// Called with every engine response, including rejected candidates.
using RetrievalObserver = std::function<void(const Query&, const std::vector<ResultDoc>&)>;

/// Iterative query selection: `params.runs` hill-climbing restarts of
/// `params.itr` iterations over prototype.candidate_vocab, all feeding one
/// query queue. A candidate replaces the current query only when its results'
/// mean relevance error is strictly lower. The starting query of each run is
/// queued when it retrieves anything.
///
/// Engine TransportError/AdapterError skip the iteration (recorded in the
/// trace). Throws ValidationError for bad params and ContractViolation when
/// the vocabulary is smaller than minq.
IqsResult iqs_run(const PrototypeDocument& prototype, const SearchEngine& engine,
                  const IqsParams& params, const EmbeddingStore& store,
                  const RetrievalObserver& observer = {});

/// Retrieves up to `per_query_cap` results for every queued query, best query
/// first, and unions them by id (first occurrence wins).
std::vector<ResultDoc> collect(const QueryQueue& queue, const SearchEngine& engine,
                               std::size_t per_query_cap);

inline constexpr std::size_t kDefaultCollectCap = 500;

}  // namespace iqs
