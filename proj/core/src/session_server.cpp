#include <httplib.h>

#include "iqs/errors.hpp"
#include "iqs/session_service.hpp"
#include "session_json.hpp"

namespace iqs {

using detail::Json;

struct SessionServer::Impl {
  SessionManager* manager;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, std::string code, const std::string& detail,
                 const std::vector<std::string>* fields = nullptr) {
  Json body;
  body["error"] = std::move(code);
  body["detail"] = detail;
  if (fields != nullptr) body["fields"] = *fields;
  reply(res, status, body);
}

// Maps domain exceptions onto HTTP statuses and the error envelope.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const SessionNotFound& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const ValidationError& e) {
    reply_error(res, 400, "validation_error", e.what(), &e.fields());
  } catch (const LabelRejected& e) {
    reply_error(res, 400, "invalid_labels", e.what(), &e.ids());
  } catch (const SessionInactive& e) {
    reply_error(res, 409, "session_inactive", e.what());
  } catch (const Json::exception& e) {
    reply_error(res, 400, "bad_request", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal_error", e.what());
  }
}

Json parse_body(const httplib::Request& req) {
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what(), {"body"});
  }
}

}  // namespace

SessionServer::SessionServer(SessionManager& manager) : impl_(std::make_unique<Impl>()) {
  impl_->manager = &manager;
  auto& srv = impl_->server;
  SessionManager* mgr = &manager;

  srv.Post("/sessions", [mgr](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto request = detail::request_from_json(parse_body(req));
      const std::string id = mgr->create_session(request);
      Json body = detail::snapshot_to_json(mgr->status(id));
      body["id"] = id;
      reply(res, 201, body);
    });
  });

  srv.Get(R"(/sessions/([0-9a-f]+)/batch)",
          [mgr](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, detail::batch_to_json(mgr->next_batch(req.matches[1]))); });
          });

  srv.Post(R"(/sessions/([0-9a-f]+)/labels)",
           [mgr](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               const Json body = parse_body(req);
               if (!body.is_object() || !body.contains("labels") || !body["labels"].is_array()) {
                 throw ValidationError("body must be {\"labels\": [...]}", {"labels"});
               }
               std::vector<std::pair<std::string, Label>> labels;
               std::vector<std::string> bad;
               for (const auto& item : body["labels"]) {
                 if (!item.is_object() || !item.contains("doc_id") ||
                     !item["doc_id"].is_string() || !item.contains("label") ||
                     !item["label"].is_string()) {
                   throw ValidationError("each label needs string doc_id and label", {"labels"});
                 }
                 auto label = parse_label(item["label"].get<std::string>());
                 if (!label) {
                   bad.push_back(item["doc_id"].get<std::string>());
                   continue;
                 }
                 labels.emplace_back(item["doc_id"].get<std::string>(), *label);
               }
               if (!bad.empty()) {
                 throw LabelRejected("labels must be relevant, irrelevant or unknown", bad);
               }
               reply(res, 200, detail::snapshot_to_json(mgr->submit_labels(req.matches[1], labels)));
             });
           });

  srv.Get(R"(/sessions/([0-9a-f]+)/status)",
          [mgr](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, detail::snapshot_to_json(mgr->status(req.matches[1]))); });
          });

  srv.Get(R"(/sessions/([0-9a-f]+)/export)",
          [mgr](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
              const auto view = mgr->export_results(req.matches[1]);
              Json body = detail::snapshot_to_json(view.snapshot);
              body["queries"] = body["queue"];
              Json docs = Json::array();
              for (const auto& d : view.documents) docs.push_back(detail::doc_to_json(d));
              body["documents"] = std::move(docs);
              reply(res, 200, body);
            });
          });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      reply_error(res, res.status, res.status == 404 ? "not_found" : "http_error",
                  "no such route");
    }
  });
}

SessionServer::~SessionServer() { stop(); }

bool SessionServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int SessionServer::bind_any_port(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool SessionServer::run() { return impl_->server.listen_after_bind(); }

void SessionServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace iqs
