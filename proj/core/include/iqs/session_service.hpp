#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqs/harness.hpp"
#include "iqs/iqscore.hpp"
#include "iqs/searchsim.hpp"

namespace iqs {

enum class SessionStatus { Active, BudgetExhausted, Completed, Failed };

std::string_view to_string(SessionStatus status);
std::optional<SessionStatus> parse_session_status(std::string_view name);

class SessionNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request made against a session that is no longer active.
class SessionInactive : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CreateSessionRequest {
  std::optional<std::string> prototype;  // exactly one of prototype / topic_id
  std::optional<std::string> topic_id;
  std::string engine = "default";
  IqsParams iqs{};
  SessionParams session{};
};

struct BatchView {
  std::string session_id;
  std::size_t round = 0;
  SessionStatus status = SessionStatus::Active;
  std::vector<ScoredResult> items;  // ascending RE
};

struct SessionSnapshot {
  std::string session_id;
  SessionStatus status = SessionStatus::Active;
  std::size_t round = 0;
  std::size_t labels_used = 0;
  std::size_t budget = 0;
  std::optional<double> best_mre;
  std::vector<QueueEntry> queue;       // latest round's queries, ascending MRE
  std::vector<double> mre_trajectory;  // best MRE per round
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;
  std::optional<std::string> failure;
};

struct ExportView {
  SessionSnapshot snapshot;
  std::vector<ResultDoc> documents;
};

/// Everything sessions may reference. Pointers are non-owning and must
/// outlive the manager.
struct ServiceEnvironment {
  const TextPipeline* pipeline = nullptr;
  std::map<std::string, const SearchEngine*> engines;
  std::map<std::string, Topic> topics;
  std::size_t export_cap = kDefaultCollectCap;
  /// IQS rounds without an unseen document before a session completes.
  std::size_t max_stale_rounds = 3;
};

/// Human-in-the-loop feedback sessions with an append-only JSON Lines event
/// log per session (`<state_dir>/<id>.jsonl`). Sessions found in the state
/// directory are replayed on construction.
///
/// Each session is serialized by its own mutex; distinct sessions run
/// concurrently.
class SessionManager {
 public:
  SessionManager(ServiceEnvironment env, std::optional<std::filesystem::path> state_dir);
  ~SessionManager();

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Throws ValidationError naming the offending fields.
  std::string create_session(const CreateSessionRequest& request);

  /// The open batch, or a fresh one computed by an IQS round. Repeated calls
  /// without labels in between return the same batch.
  BatchView next_batch(const std::string& id);

  /// Atomic: throws LabelRejected (state unchanged) unless every id belongs
  /// to the open batch, is unlabeled and appears once.
  SessionSnapshot submit_labels(const std::string& id,
                                const std::vector<std::pair<std::string, Label>>& labels);

  SessionSnapshot status(const std::string& id) const;
  ExportView export_results(const std::string& id) const;

  std::vector<std::string> session_ids() const;

 private:
  struct State;

  std::shared_ptr<State> find(const std::string& id) const;
  std::shared_ptr<State> make_state(const std::string& id, const CreateSessionRequest& request,
                                    std::uint64_t seed, std::int64_t created_at) const;
  void append_event(const State& state, const std::string& line) const;
  void load_session(const std::filesystem::path& log);
  SessionSnapshot snapshot_locked(const State& state) const;

  ServiceEnvironment env_;
  std::optional<std::filesystem::path> state_dir_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<State>> sessions_;
};

/// HTTP+JSON front end for a SessionManager:
///   POST /sessions, GET /sessions/{id}/batch, POST /sessions/{id}/labels,
///   GET /sessions/{id}/status, GET /sessions/{id}/export.
class SessionServer {
 public:
  explicit SessionServer(SessionManager& manager);
  ~SessionServer();

  /// Blocks until stop(). Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it (for tests); serve with run().
  int bind_any_port(const std::string& host);
  bool run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace iqs
