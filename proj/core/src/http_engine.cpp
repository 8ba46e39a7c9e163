#include "iqs/http_engine.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "iqs/errors.hpp"

namespace iqs {

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

std::string percent_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    const bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                            (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_' ||
                            c == '~';
    if (unreserved) {
      out.push_back(ch);
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0x0F]);
    }
  }
  return out;
}

HttpSearchEngine::HttpSearchEngine(std::string url_template, const TokenizerConfig& config,
                                   const EmbeddingStore& store, HttpEngineOptions options)
    : url_template_(std::move(url_template)),
      config_(&config),
      store_(&store),
      options_(options) {
  const auto scheme_end = url_template_.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint template needs a scheme: " + url_template_, {"endpoint"});
  }
  const std::string scheme = url_template_.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ValidationError("unsupported endpoint scheme '" + scheme + "'", {"endpoint"});
  }
  auto path_start = url_template_.find('/', scheme_end + 3);
  if (path_start == std::string::npos) path_start = url_template_.size();
  if (path_start == scheme_end + 3) {
    throw ValidationError("endpoint template has no host", {"endpoint"});
  }
  origin_ = url_template_.substr(0, path_start);
  path_template_ = url_template_.substr(path_start);
  if (path_template_.empty()) path_template_ = "/";
  if (path_template_.find("{query}") == std::string::npos) {
    throw ValidationError("endpoint template lacks a {query} slot", {"endpoint"});
  }
}

std::string HttpSearchEngine::request_path(const Query& query, std::size_t rlimit) const {
  std::string path = path_template_;
  replace_all(path, "{query}", percent_encode(query.to_string()));
  replace_all(path, "{limit}", std::to_string(rlimit));
  return path;
}

std::string HttpSearchEngine::request_url(const Query& query, std::size_t rlimit) const {
  return origin_ + request_path(query, rlimit);
}

std::vector<ResultDoc> HttpSearchEngine::parse_response(std::string_view body,
                                                        std::size_t rlimit) const {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw AdapterError(std::string("malformed JSON from search endpoint: ") + e.what());
  }
  if (!j.is_array()) throw AdapterError("search endpoint must return a JSON array");

  std::vector<ResultDoc> out;
  for (const auto& item : j) {
    if (out.size() >= rlimit) break;
    if (!item.is_object()) throw AdapterError("result items must be JSON objects");
    std::string id;
    if (auto it = item.find("id"); it != item.end() && it->is_string()) {
      id = it->get<std::string>();
    } else if (it != item.end() && it->is_number_integer()) {
      id = std::to_string(it->get<std::int64_t>());
    } else {
      throw AdapterError("result item lacks an \"id\"");
    }
    auto text_it = item.find("text");
    if (text_it == item.end() || !text_it->is_string()) {
      throw AdapterError("result item '" + id + "' lacks a string \"text\"");
    }
    std::optional<std::int64_t> ts;
    if (auto it = item.find("timestamp"); it != item.end() && it->is_number_integer()) {
      ts = it->get<std::int64_t>();
    }
    out.push_back(make_result_doc(std::move(id), text_it->get<std::string>(), ts, *config_,
                                  *store_));
  }
  return out;
}

std::vector<ResultDoc> HttpSearchEngine::search(const Query& query, std::size_t rlimit) const {
  if (rlimit == 0) throw ContractViolation("search: rlimit must be >= 1");
  std::lock_guard lock(mutex_);
  const std::string path = request_path(query, rlimit);

  httplib::Client client(origin_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);

  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    auto wait = options_.min_interval;
    if (attempt > 0) {
      wait = std::max<std::chrono::milliseconds>(wait, options_.backoff_base * (1 << (attempt - 1)));
    }
    if (has_requested_) {
      const auto ready = last_request_ + wait;
      const auto now = std::chrono::steady_clock::now();
      if (ready > now) std::this_thread::sleep_for(ready - now);
    }
    last_request_ = std::chrono::steady_clock::now();
    has_requested_ = true;

    auto res = client.Get(path);
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    return parse_response(res->body, rlimit);
  }
  throw TransportError(origin_ + path + ": " + last_error);
}

}  // namespace iqs
