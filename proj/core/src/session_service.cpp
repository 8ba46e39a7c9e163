#include "iqs/session_service.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "iqs/errors.hpp"
#include "session_json.hpp"

namespace iqs {

namespace detail {

namespace {

template <typename T>
void read_count(const Json& params, const char* key, T& out, std::vector<std::string>& bad) {
  auto it = params.find(key);
  if (it == params.end() || it->is_null()) return;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    bad.emplace_back(key);
    return;
  }
  out = static_cast<T>(it->get<std::uint64_t>());
}

}  // namespace

CreateSessionRequest request_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("request body must be a JSON object", {"body"});
  CreateSessionRequest r;
  std::vector<std::string> bad;

  auto read_string = [&](const char* key, std::optional<std::string>& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    if (!it->is_string()) {
      bad.emplace_back(key);
      return;
    }
    out = it->get<std::string>();
  };
  read_string("prototype", r.prototype);
  read_string("topic_id", r.topic_id);
  if (r.prototype.has_value() == r.topic_id.has_value()) {
    bad.emplace_back("prototype");
    bad.emplace_back("topic_id");
  }
  if (auto it = j.find("engine"); it != j.end() && !it->is_null()) {
    if (it->is_string()) {
      r.engine = it->get<std::string>();
    } else {
      bad.emplace_back("engine");
    }
  }

  if (auto it = j.find("params"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) {
      bad.emplace_back("params");
    } else {
      const Json& p = *it;
      read_count(p, "itr", r.iqs.itr, bad);
      read_count(p, "runs", r.iqs.runs, bad);
      read_count(p, "minq", r.iqs.minq, bad);
      read_count(p, "maxq", r.iqs.maxq, bad);
      read_count(p, "rlimit", r.iqs.rlimit, bad);
      read_count(p, "num_queries", r.iqs.num_queries, bad);
      read_count(p, "label_budget", r.session.label_budget, bad);
      read_count(p, "batch_size", r.session.batch_size, bad);
      if (auto s = p.find("seed"); s != p.end() && !s->is_null()) {
        if (s->is_number_unsigned()) {
          r.iqs.seed = s->get<std::uint64_t>();
        } else {
          bad.emplace_back("seed");
        }
      }
    }
  }

  try {
    r.iqs.validate();
  } catch (const ValidationError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  try {
    r.session.validate();
  } catch (const ValidationError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  if (!bad.empty()) {
    std::string msg = "invalid session request; check:";
    for (const auto& f : bad) msg += " " + f;
    throw ValidationError(msg, bad);
  }
  return r;
}

Json request_to_json(const CreateSessionRequest& r) {
  Json j;
  if (r.prototype) j["prototype"] = *r.prototype;
  if (r.topic_id) j["topic_id"] = *r.topic_id;
  j["engine"] = r.engine;
  Json p;
  p["itr"] = r.iqs.itr;
  p["runs"] = r.iqs.runs;
  p["minq"] = r.iqs.minq;
  p["maxq"] = r.iqs.maxq;
  p["rlimit"] = r.iqs.rlimit;
  p["num_queries"] = r.iqs.num_queries;
  if (r.iqs.seed) p["seed"] = *r.iqs.seed;
  p["label_budget"] = r.session.label_budget;
  p["batch_size"] = r.session.batch_size;
  j["params"] = std::move(p);
  return j;
}

Json doc_to_json(const ResultDoc& d) {
  Json j;
  j["id"] = d.id;
  j["text"] = d.text;
  if (d.timestamp) j["timestamp"] = *d.timestamp;
  return j;
}

ResultDoc doc_from_json(const Json& j, const TextPipeline& pipeline) {
  std::optional<std::int64_t> ts;
  if (auto it = j.find("timestamp"); it != j.end() && it->is_number_integer()) {
    ts = it->get<std::int64_t>();
  }
  return make_result_doc(j.at("id").get<std::string>(), j.at("text").get<std::string>(), ts,
                         *pipeline.config, *pipeline.store);
}

Json queue_to_json(const std::vector<QueueEntry>& entries) {
  Json arr = Json::array();
  for (const auto& e : entries) {
    Json item;
    item["terms"] = e.query.terms();
    item["mre"] = e.mre;
    arr.push_back(std::move(item));
  }
  return arr;
}

std::vector<QueueEntry> queue_from_json(const Json& j) {
  std::vector<QueueEntry> out;
  for (const auto& item : j) {
    out.push_back({Query(item.at("terms").get<std::vector<std::string>>()),
                   item.at("mre").get<double>()});
  }
  return out;
}

Json snapshot_to_json(const SessionSnapshot& s) {
  Json j;
  j["session_id"] = s.session_id;
  j["status"] = to_string(s.status);
  j["round"] = s.round;
  j["labels_used"] = s.labels_used;
  j["budget"] = s.budget;
  j["best_mre"] = s.best_mre ? Json(*s.best_mre) : Json(nullptr);
  j["queue"] = queue_to_json(s.queue);
  j["mre_trajectory"] = s.mre_trajectory;
  j["created_at"] = s.created_at;
  j["updated_at"] = s.updated_at;
  if (s.failure) j["failure"] = *s.failure;
  return j;
}

Json batch_to_json(const BatchView& b) {
  Json j;
  j["session_id"] = b.session_id;
  j["round"] = b.round;
  j["status"] = to_string(b.status);
  Json items = Json::array();
  for (std::size_t i = 0; i < b.items.size(); ++i) {
    Json item = doc_to_json(b.items[i].doc);
    item["score"] = b.items[i].score;
    item["rank"] = i;
    items.push_back(std::move(item));
  }
  j["items"] = std::move(items);
  return j;
}

}  // namespace detail

using detail::Json;

std::string_view to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::Active: return "active";
    case SessionStatus::BudgetExhausted: return "budget_exhausted";
    case SessionStatus::Completed: return "completed";
    case SessionStatus::Failed: return "failed";
  }
  return "failed";
}

std::optional<SessionStatus> parse_session_status(std::string_view name) {
  if (name == "active") return SessionStatus::Active;
  if (name == "budget_exhausted") return SessionStatus::BudgetExhausted;
  if (name == "completed") return SessionStatus::Completed;
  if (name == "failed") return SessionStatus::Failed;
  return std::nullopt;
}

struct SessionManager::State {
  mutable std::mutex mutex;
  std::string id;
  CreateSessionRequest request;
  std::uint64_t seed = 0;
  const SearchEngine* engine = nullptr;
  SessionStatus status = SessionStatus::Active;
  std::optional<std::string> failure;
  std::int64_t created_at = 0;
  std::int64_t updated_at = 0;

  std::optional<FeedbackSession> feedback;
  std::vector<ResultDoc> retrieved;  // every document any round retrieved
  std::unordered_map<std::string, std::size_t> retrieved_pos;
  std::size_t iqs_round = 0;
  std::size_t round = 0;
  std::optional<BatchView> pending;
  std::vector<QueueEntry> queue;
  std::vector<double> mre_trajectory;
};

namespace {

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string random_session_id() {
  std::random_device rd;
  std::ostringstream out;
  out << std::hex;
  for (int i = 0; i < 4; ++i) {
    out.width(8);
    out.fill('0');
    out << static_cast<std::uint32_t>(rd());
  }
  return out.str();
}

bool valid_session_id(const std::string& id) {
  if (id.size() != 32) return false;
  return std::all_of(id.begin(), id.end(),
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

}  // namespace

SessionManager::SessionManager(ServiceEnvironment env,
                               std::optional<std::filesystem::path> state_dir)
    : env_(std::move(env)), state_dir_(std::move(state_dir)) {
  if (env_.pipeline == nullptr) throw ContractViolation("session manager needs a text pipeline");
  if (!state_dir_) return;
  std::filesystem::create_directories(*state_dir_);
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(*state_dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      logs.push_back(entry.path());
    }
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) {
    try {
      load_session(log);
    } catch (const std::exception& e) {
      std::cerr << "warning: cannot restore session from " << log << ": " << e.what() << '\n';
    }
  }
}

SessionManager::~SessionManager() = default;

std::shared_ptr<SessionManager::State> SessionManager::make_state(
    const std::string& id, const CreateSessionRequest& request, std::uint64_t seed,
    std::int64_t created_at) const {
  std::vector<std::string> bad;
  auto engine = env_.engines.find(request.engine);
  if (engine == env_.engines.end()) bad.emplace_back("engine");
  const Topic* topic = nullptr;
  if (request.topic_id) {
    auto t = env_.topics.find(*request.topic_id);
    if (t == env_.topics.end()) {
      bad.emplace_back("topic_id");
    } else {
      topic = &t->second;
    }
  }
  if (!bad.empty()) throw ValidationError("unknown engine or topic reference", bad);

  auto state = std::make_shared<State>();
  state->id = id;
  state->request = request;
  state->seed = seed;
  state->engine = engine->second;
  state->created_at = created_at;
  state->updated_at = created_at;
  Topic session_topic = topic ? *topic : Topic{id, *request.prototype, std::nullopt};
  try {
    state->feedback.emplace(std::move(session_topic), *env_.pipeline, request.session);
  } catch (const UntokenizablePrototype& e) {
    throw ValidationError(e.what(), {request.topic_id ? "topic_id" : "prototype"});
  }
  if (state->feedback->prototype().candidate_vocab.size() < request.iqs.minq) {
    throw ValidationError("prototype vocabulary is smaller than minq", {"minq"});
  }
  return state;
}

void SessionManager::append_event(const State& state, const std::string& line) const {
  if (!state_dir_) return;
  std::ofstream out(*state_dir_ / (state.id + ".jsonl"), std::ios::app);
  if (!out) throw IoError("cannot write session log for " + state.id);
  out << line << '\n';
  out.flush();
}

std::string SessionManager::create_session(const CreateSessionRequest& request) {
  request.iqs.validate();
  request.session.validate();
  if (request.prototype.has_value() == request.topic_id.has_value()) {
    throw ValidationError("give exactly one of prototype or topic_id", {"prototype", "topic_id"});
  }
  std::string id = random_session_id();
  const std::uint64_t seed =
      request.iqs.seed.value_or((std::uint64_t{std::random_device{}()} << 32) |
                                std::random_device{}());
  auto state = make_state(id, request, seed, now_seconds());

  Json event;
  event["type"] = "create";
  event["at"] = state->created_at;
  event["id"] = id;
  event["seed"] = seed;
  event["request"] = detail::request_to_json(request);
  append_event(*state, event.dump());

  std::unique_lock lock(sessions_mutex_);
  sessions_.emplace(id, std::move(state));
  return id;
}

std::shared_ptr<SessionManager::State> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

BatchView SessionManager::next_batch(const std::string& id) {
  auto state = find(id);
  std::lock_guard lock(state->mutex);
  if (state->pending) return *state->pending;

  BatchView view{id, state->round, state->status, {}};
  if (state->status != SessionStatus::Active) return view;

  auto set_status = [&](SessionStatus s, std::optional<std::string> detail) {
    state->status = s;
    state->failure = detail;
    state->updated_at = now_seconds();
    Json event;
    event["type"] = "status";
    event["at"] = state->updated_at;
    event["status"] = to_string(s);
    if (detail) event["detail"] = *detail;
    append_event(*state, event.dump());
    view.status = s;
  };

  FeedbackSession& session = *state->feedback;
  if (session.budget_exhausted()) {
    set_status(SessionStatus::BudgetExhausted, std::nullopt);
    return view;
  }

  const std::size_t first_iqs_round = state->iqs_round;
  const std::size_t first_new_doc = state->retrieved.size();
  std::optional<IqsResult> last_run;
  try {
    for (std::size_t stale = 0; stale < std::max<std::size_t>(env_.max_stale_rounds, 1);
         ++stale) {
      IqsParams params = state->request.iqs;
      params.seed = derive_stream_seed(state->seed, state->iqs_round++);
      bool fresh = false;
      auto observer = [&](const Query&, const std::vector<ResultDoc>& docs) {
        for (const auto& d : docs) {
          if (state->retrieved_pos.emplace(d.id, state->retrieved.size()).second) {
            state->retrieved.push_back(d);
          }
          if (!session.is_registered(d.id)) fresh = true;
        }
      };
      last_run = iqs_run(session.prototype(), *state->engine, params, *env_.pipeline->store,
                         observer);
      if (fresh) break;
    }
  } catch (const std::exception& e) {
    state->retrieved.resize(first_new_doc);
    std::erase_if(state->retrieved_pos,
                  [&](const auto& kv) { return kv.second >= first_new_doc; });
    state->iqs_round = first_iqs_round;
    set_status(SessionStatus::Failed, std::string(e.what()));
    return view;
  }

  const auto ranked = rank_by_re(state->retrieved, session.prototype(), *env_.pipeline->store);
  auto batch = session.present(ranked, state->round);
  if (last_run) {
    state->queue = last_run->queue.entries();
    state->mre_trajectory.push_back(state->queue.empty() ? kMaxRelevanceError
                                                         : state->queue.front().mre);
  }
  state->updated_at = now_seconds();

  Json event;
  event["type"] = "batch";
  event["at"] = state->updated_at;
  event["round"] = state->round;
  event["iqs_round"] = state->iqs_round;
  Json fresh_docs = Json::array();
  for (std::size_t i = first_new_doc; i < state->retrieved.size(); ++i) {
    fresh_docs.push_back(detail::doc_to_json(state->retrieved[i]));
  }
  event["retrieved"] = std::move(fresh_docs);
  Json items = Json::array();
  for (const auto& b : batch) items.push_back(Json{{"id", b.doc.id}, {"score", b.score}});
  event["items"] = std::move(items);
  event["queue"] = detail::queue_to_json(state->queue);
  event["mre"] = state->mre_trajectory.empty() ? Json(nullptr)
                                               : Json(state->mre_trajectory.back());
  append_event(*state, event.dump());

  if (batch.empty()) {
    set_status(SessionStatus::Completed, std::nullopt);
    return view;
  }
  view.items = std::move(batch);
  state->pending = view;
  return view;
}

SessionSnapshot SessionManager::submit_labels(
    const std::string& id, const std::vector<std::pair<std::string, Label>>& labels) {
  auto state = find(id);
  std::lock_guard lock(state->mutex);
  if (state->status != SessionStatus::Active) {
    throw SessionInactive("session " + id + " is " + std::string(to_string(state->status)));
  }
  std::vector<LabeledDoc> resolved;
  std::vector<std::string> unknown;
  for (const auto& [doc_id, label] : labels) {
    const ScoredResult* hit = nullptr;
    if (state->pending) {
      for (const auto& item : state->pending->items) {
        if (item.doc.id == doc_id) hit = &item;
      }
    }
    if (hit == nullptr) {
      unknown.push_back(doc_id);
    } else {
      resolved.push_back({hit->doc, label});
    }
  }
  if (!unknown.empty()) {
    throw LabelRejected("documents not in the presented batch", unknown);
  }
  if (labels.empty()) throw LabelRejected("no labels submitted", {});

  state->feedback->apply_labels(resolved);
  state->pending.reset();
  ++state->round;
  state->updated_at = now_seconds();

  Json event;
  event["type"] = "labels";
  event["at"] = state->updated_at;
  Json arr = Json::array();
  for (const auto& [doc_id, label] : labels) {
    arr.push_back(Json{{"doc_id", doc_id}, {"label", to_string(label)}});
  }
  event["labels"] = std::move(arr);
  append_event(*state, event.dump());

  if (state->feedback->budget_exhausted()) {
    state->status = SessionStatus::BudgetExhausted;
    Json status;
    status["type"] = "status";
    status["at"] = state->updated_at;
    status["status"] = to_string(state->status);
    append_event(*state, status.dump());
  }
  return snapshot_locked(*state);
}

SessionSnapshot SessionManager::snapshot_locked(const State& state) const {
  SessionSnapshot s;
  s.session_id = state.id;
  s.status = state.status;
  s.round = state.round;
  s.labels_used = state.feedback->labels_used();
  s.budget = state.feedback->params().label_budget;
  s.queue = state.queue;
  if (!state.queue.empty()) s.best_mre = state.queue.front().mre;
  s.mre_trajectory = state.mre_trajectory;
  s.created_at = state.created_at;
  s.updated_at = state.updated_at;
  s.failure = state.failure;
  return s;
}

SessionSnapshot SessionManager::status(const std::string& id) const {
  auto state = find(id);
  std::lock_guard lock(state->mutex);
  return snapshot_locked(*state);
}

ExportView SessionManager::export_results(const std::string& id) const {
  auto state = find(id);
  std::lock_guard lock(state->mutex);
  ExportView view{snapshot_locked(*state), {}};
  if (!state->queue.empty()) {
    QueryQueue queue(state->queue.size());
    for (const auto& e : state->queue) queue.offer(e.query, e.mre);
    try {
      view.documents = collect(queue, *state->engine, env_.export_cap);
      return view;
    } catch (const std::exception& e) {
      std::cerr << "warning: export for " << id << " fell back to retrieved documents: "
                << e.what() << '\n';
    }
  }
  view.documents = state->retrieved;
  return view;
}

void SessionManager::load_session(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw IoError("cannot open " + log.string());
  std::shared_ptr<State> state;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json event;
    try {
      event = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(log.string(), line_no, e.what());
    }
    const std::string type = event.at("type").get<std::string>();
    if (type == "create") {
      const std::string id = event.at("id").get<std::string>();
      if (!valid_session_id(id)) throw ParseError(log.string(), line_no, "bad session id");
      state = make_state(id, detail::request_from_json(event.at("request")),
                         event.at("seed").get<std::uint64_t>(), event.at("at").get<std::int64_t>());
      continue;
    }
    if (!state) throw ParseError(log.string(), line_no, "event before create");
    state->updated_at = event.value("at", state->updated_at);
    if (type == "batch") {
      for (const auto& d : event.at("retrieved")) {
        ResultDoc doc = detail::doc_from_json(d, *env_.pipeline);
        if (state->retrieved_pos.emplace(doc.id, state->retrieved.size()).second) {
          state->retrieved.push_back(std::move(doc));
        }
      }
      state->iqs_round = event.at("iqs_round").get<std::size_t>();
      state->round = event.at("round").get<std::size_t>();
      std::vector<ScoredResult> ranked;
      for (const auto& item : event.at("items")) {
        auto pos = state->retrieved_pos.find(item.at("id").get<std::string>());
        if (pos == state->retrieved_pos.end()) {
          throw ParseError(log.string(), line_no, "batch references an unknown document");
        }
        ranked.push_back({state->retrieved[pos->second], item.at("score").get<double>(),
                          Measure::RE});
      }
      auto batch = state->feedback->present(ranked, state->round);
      state->queue = detail::queue_from_json(event.at("queue"));
      if (!event.at("mre").is_null()) state->mre_trajectory.push_back(event.at("mre").get<double>());
      if (!batch.empty()) {
        state->pending = BatchView{state->id, state->round, state->status, std::move(batch)};
      }
    } else if (type == "labels") {
      std::vector<LabeledDoc> labels;
      for (const auto& l : event.at("labels")) {
        const auto doc_id = l.at("doc_id").get<std::string>();
        auto label = parse_label(l.at("label").get<std::string>());
        auto pos = state->retrieved_pos.find(doc_id);
        if (!label || pos == state->retrieved_pos.end()) {
          throw ParseError(log.string(), line_no, "bad label event");
        }
        labels.push_back({state->retrieved[pos->second], *label});
      }
      state->feedback->apply_labels(labels);
      state->pending.reset();
      ++state->round;
    } else if (type == "status") {
      auto s = parse_session_status(event.at("status").get<std::string>());
      if (!s) throw ParseError(log.string(), line_no, "unknown status");
      state->status = *s;
      if (auto d = event.find("detail"); d != event.end()) state->failure = d->get<std::string>();
    } else {
      throw ParseError(log.string(), line_no, "unknown event type '" + type + "'");
    }
  }
  if (!state) throw ParseError(log.string(), 1, "empty session log");
  if (state->pending) state->pending->status = state->status;
  std::unique_lock lock(sessions_mutex_);
  sessions_.emplace(state->id, std::move(state));
}

}  // namespace iqs
