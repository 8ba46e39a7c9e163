#include "iqs/iqscore.hpp"

#include <algorithm>
#include <unordered_set>

#include "iqs/errors.hpp"

namespace iqs {

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw ContractViolation("uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void IqsParams::validate() const {
  std::vector<std::string> bad;
  if (itr < 1) bad.emplace_back("itr");
  if (runs < 1) bad.emplace_back("runs");
  if (minq < 1) bad.emplace_back("minq");
  if (maxq < 1 || minq > maxq) bad.emplace_back("maxq");
  if (rlimit < 1) bad.emplace_back("rlimit");
  if (num_queries < 1) bad.emplace_back("num_queries");
  if (!bad.empty()) {
    std::string msg = "invalid IQS parameters:";
    for (const auto& f : bad) msg += " " + f;
    if (minq > maxq) msg += " (minq must not exceed maxq)";
    throw ValidationError(msg, bad);
  }
}

IqsParams IqsParams::collect_preset() {
  IqsParams p;
  p.minq = 3;
  p.maxq = 6;
  p.num_queries = 5;
  return p;
}

QueryQueue::QueryQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractViolation("query queue capacity must be positive");
}

bool QueryQueue::offer(const Query& query, double mre) {
  auto before = [](const QueueEntry& a, const QueueEntry& b) {
    if (a.mre != b.mre) return a.mre < b.mre;
    return a.query < b.query;
  };
  auto existing = std::find_if(entries_.begin(), entries_.end(),
                               [&](const QueueEntry& e) { return e.query == query; });
  if (existing != entries_.end()) {
    if (!(mre < existing->mre)) return false;
    entries_.erase(existing);
  } else if (entries_.size() >= capacity_) {
    QueueEntry candidate{query, mre};
    if (!before(candidate, entries_.back())) return false;
    entries_.pop_back();
  }
  QueueEntry entry{query, mre};
  entries_.insert(std::upper_bound(entries_.begin(), entries_.end(), entry, before),
                  std::move(entry));
  return true;
}

namespace {

std::vector<const std::string*> outside(const Query& q, const TokenList& vocab) {
  std::vector<const std::string*> out;
  for (const auto& w : vocab) {
    if (!q.contains(w)) out.push_back(&w);
  }
  return out;
}

}  // namespace

Query add_word(const Query& q, const TokenList& vocab, Rng& rng) {
  auto pool = outside(q, vocab);
  if (pool.empty()) throw ContractViolation("add_word: every vocabulary word is already in q");
  auto terms = q.terms();
  terms.push_back(*pool[rng.uniform_index(pool.size())]);
  return Query(std::move(terms));
}

Query remove_word(const Query& q, Rng& rng) {
  if (q.size() < 2) throw ContractViolation("remove_word: query would become empty");
  auto terms = q.terms();
  terms.erase(terms.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(terms.size())));
  return Query(std::move(terms));
}

Query swap_words(const Query& q, const TokenList& vocab, Rng& rng) {
  return remove_word(add_word(q, vocab, rng), rng);
}

std::string_view to_string(IqsAction action) {
  switch (action) {
    case IqsAction::Initial: return "initial";
    case IqsAction::AddWord: return "add_word";
    case IqsAction::RemoveWord: return "remove_word";
    case IqsAction::SwapWords: return "swap_words";
    case IqsAction::None: return "none";
  }
  return "unknown";
}

namespace {

struct Evaluation {
  double mre = kMaxRelevanceError;
  std::size_t result_count = 0;
  bool error = false;
};

Evaluation evaluate(const Query& q, const SearchEngine& engine, std::size_t rlimit,
                    const ResolvedPrototype& prototype, const RetrievalObserver& observer,
                    IqsTrace& trace) {
  ++trace.engine_calls;
  std::vector<ResultDoc> results;
  try {
    results = engine.search(q, rlimit);
  } catch (const TransportError&) {
    return {kMaxRelevanceError, 0, true};
  } catch (const AdapterError&) {
    return {kMaxRelevanceError, 0, true};
  }
  if (results.size() > rlimit) results.resize(rlimit);
  if (observer) observer(q, results);
  return {mean_relevance_error(results, prototype), results.size(), false};
}

Query random_subset(const TokenList& vocab, std::size_t minq, std::size_t maxq, Rng& rng) {
  const std::size_t hi = std::min(maxq, vocab.size());
  const std::size_t size = minq + rng.uniform_index(hi - minq + 1);
  std::vector<std::size_t> order(vocab.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::string> terms;
  terms.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
    terms.push_back(vocab[order[i]]);
  }
  return Query(std::move(terms));
}

}  // namespace

IqsResult iqs_run(const PrototypeDocument& prototype, const SearchEngine& engine,
                  const IqsParams& params, const EmbeddingStore& store,
                  const RetrievalObserver& observer) {
  params.validate();
  const TokenList& vocab = prototype.candidate_vocab;
  {
    std::unordered_set<std::string> uniq(vocab.begin(), vocab.end());
    if (uniq.size() != vocab.size()) {
      throw ContractViolation("candidate vocabulary contains duplicates");
    }
  }
  if (vocab.size() < params.minq) {
    throw ContractViolation("candidate vocabulary (" + std::to_string(vocab.size()) +
                            " words) is smaller than minq");
  }
  const ResolvedPrototype resolved(prototype, store);

  IqsResult result{QueryQueue(params.num_queries), {}, 0};
  result.seed = params.seed ? *params.seed : std::random_device{}() ^
                                                 (std::uint64_t{std::random_device{}()} << 32);

  for (std::size_t run = 0; run < params.runs; ++run) {
    Rng rng(derive_stream_seed(result.seed, run));

    Query best = random_subset(vocab, params.minq, params.maxq, rng);
    Evaluation best_eval = evaluate(best, engine, params.rlimit, resolved, observer, result.trace);
    {
      TraceRecord rec;
      rec.run = run;
      rec.action = IqsAction::Initial;
      rec.query = best;
      rec.mre = best_eval.mre;
      rec.result_count = best_eval.result_count;
      rec.engine_error = best_eval.error;
      rec.accepted = !best_eval.error && best_eval.result_count > 0;
      if (rec.accepted) result.queue.offer(best, best_eval.mre);
      result.trace.records.push_back(std::move(rec));
    }
    bool last_empty = !best_eval.error && best_eval.result_count == 0;

    for (std::size_t it = 1; it <= params.itr; ++it) {
      TraceRecord rec;
      rec.run = run;
      rec.iteration = it;

      const bool can_grow = best.size() < vocab.size();
      if (can_grow && best.size() < params.maxq && !last_empty) {
        rec.offered.push_back(IqsAction::AddWord);
      }
      if (best.size() > params.minq) rec.offered.push_back(IqsAction::RemoveWord);
      if (can_grow) rec.offered.push_back(IqsAction::SwapWords);

      if (rec.offered.empty()) {
        last_empty = false;
        result.trace.records.push_back(std::move(rec));
        continue;
      }
      rec.action = rec.offered[rng.uniform_index(rec.offered.size())];
      Query candidate = rec.action == IqsAction::AddWord      ? add_word(best, vocab, rng)
                        : rec.action == IqsAction::RemoveWord ? remove_word(best, rng)
                                                              : swap_words(best, vocab, rng);

      const Evaluation eval =
          evaluate(candidate, engine, params.rlimit, resolved, observer, result.trace);
      rec.query = candidate;
      rec.mre = eval.mre;
      rec.result_count = eval.result_count;
      rec.engine_error = eval.error;
      last_empty = !eval.error && eval.result_count == 0;

      if (!eval.error && eval.mre < best_eval.mre) {
        rec.accepted = true;
        result.queue.offer(candidate, eval.mre);
        best = std::move(candidate);
        best_eval = eval;
      }
      result.trace.records.push_back(std::move(rec));
    }
  }
  return result;
}

std::vector<ResultDoc> collect(const QueryQueue& queue, const SearchEngine& engine,
                               std::size_t per_query_cap) {
  if (queue.empty()) throw ContractViolation("collect: query queue is empty");
  if (per_query_cap == 0) throw ContractViolation("collect: per-query cap must be >= 1");
  std::vector<ResultDoc> out;
  std::unordered_set<std::string> seen;
  for (const auto& entry : queue.entries()) {
    for (auto& doc : engine.search(entry.query, per_query_cap)) {
      if (seen.insert(doc.id).second) out.push_back(std::move(doc));
    }
  }
  return out;
}

}  // namespace iqs
