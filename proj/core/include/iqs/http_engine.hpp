#pragma once

#include <chrono>
#include <mutex>
#include <string>

#include "iqs/searchsim.hpp"

namespace iqs {

struct HttpEngineOptions {
  std::chrono::milliseconds min_interval{1000};
  std::chrono::milliseconds backoff_base{500};
  int max_retries = 3;
  std::chrono::seconds timeout{10};
};

/// Percent-encodes everything except RFC 3986 unreserved characters.
std::string percent_encode(std::string_view s);

/// Search engine reached over HTTP GET.
///
/// The URL template carries `{query}` and `{limit}` slots, e.g.
/// "http://host:8080/search?q={query}&count={limit}". Query terms are joined
/// with single spaces and percent-encoded. The response must be a JSON array
/// of {"id", "text", "timestamp"?} objects.
///
/// Requests are serialized and spaced at least `min_interval` apart. Transport
/// failures and non-2xx statuses are retried with exponential backoff, then
/// surface as TransportError; undecodable bodies raise AdapterError.
class HttpSearchEngine final : public SearchEngine {
 public:
  /// Throws ValidationError for a template without a scheme/host or {query}.
  HttpSearchEngine(std::string url_template, const TokenizerConfig& config,
                   const EmbeddingStore& store, HttpEngineOptions options = {});

  std::vector<ResultDoc> search(const Query& query, std::size_t rlimit) const override;
  EngineCapabilities capabilities() const override { return {true, kUnlimited}; }

  /// Full URL that search() would request.
  std::string request_url(const Query& query, std::size_t rlimit) const;

  /// Decodes a response body into at most `rlimit` documents.
  std::vector<ResultDoc> parse_response(std::string_view body, std::size_t rlimit) const;

 private:
  std::string request_path(const Query& query, std::size_t rlimit) const;

  std::string url_template_;
  std::string origin_;         // scheme://host[:port]
  std::string path_template_;  // everything after the origin
  const TokenizerConfig* config_;
  const EmbeddingStore* store_;
  HttpEngineOptions options_;

  mutable std::mutex mutex_;
  mutable std::chrono::steady_clock::time_point last_request_{};
  mutable bool has_requested_ = false;
};

}  // namespace iqs
