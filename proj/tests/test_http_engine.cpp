#include <catch_amalgamated.hpp>

#include <atomic>
#include <httplib.h>
#include <json.hpp>
#include <thread>

#include "fixtures.hpp"
#include "iqs/errors.hpp"
#include "iqs/http_engine.hpp"

using namespace iqs;
using namespace std::chrono_literals;

namespace {

// Local search endpoint whose behaviour each test swaps in.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(httplib::Server::Handler handler) {
    server_.Get("/search", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url_template() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/search?q={query}&count={limit}";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpEngineOptions fast_options() {
  HttpEngineOptions o;
  o.min_interval = 0ms;
  o.backoff_base = 1ms;
  o.max_retries = 2;
  o.timeout = 5s;
  return o;
}

std::string items(int n) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    arr.push_back({{"id", "d" + std::to_string(i)}, {"text", "dog cat"}, {"timestamp", i}});
  }
  return arr.dump();
}

}  // namespace

TEST_CASE("percent_encode", "[http]") {
  CHECK(percent_encode("dog cat") == "dog%20cat");
  CHECK(percent_encode("a-b_c.d~e") == "a-b_c.d~e");
  CHECK(percent_encode("new_york&x=1") == "new_york%26x%3D1");
  CHECK(percent_encode("\xC3\xA9") == "%C3%A9");
}

TEST_CASE("template validation and request URL", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  CHECK_THROWS_AS(HttpSearchEngine("no-scheme/{query}", cfg, store), ValidationError);
  CHECK_THROWS_AS(HttpSearchEngine("http://host/search", cfg, store), ValidationError);
  HttpSearchEngine engine("http://host:1/search?q={query}&count={limit}", cfg, store);
  CHECK(engine.request_url(Query({"dog", "cat"}), 20) ==
        "http://host:1/search?q=dog%20cat&count=20");
}

TEST_CASE("parse_response", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  HttpSearchEngine engine("http://host/s?q={query}", cfg, store);
  CHECK(engine.parse_response("[]", 20).empty());
  auto docs = engine.parse_response(items(25), 20);
  REQUIRE(docs.size() == 20);
  CHECK(docs[0].id == "d0");
  CHECK(docs[0].words == TokenList{"dog", "cat"});
  CHECK(docs[3].timestamp == 3);
  CHECK(engine.parse_response(R"([{"id": 7, "text": "car"}])", 5)[0].id == "7");
  CHECK_THROWS_AS(engine.parse_response("{not json", 20), AdapterError);
  CHECK_THROWS_AS(engine.parse_response(R"({"id": "x"})", 20), AdapterError);
  CHECK_THROWS_AS(engine.parse_response(R"([{"text": "dog"}])", 20), AdapterError);
  CHECK_THROWS_AS(engine.parse_response(R"([{"id": "x"}])", 20), AdapterError);
}

TEST_CASE("search against a live endpoint", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  std::string seen_query;
  std::string seen_count;
  FakeEndpoint endpoint([&](const httplib::Request& req, httplib::Response& res) {
    seen_query = req.get_param_value("q");
    seen_count = req.get_param_value("count");
    res.set_content(items(25), "application/json");
  });
  HttpSearchEngine engine(endpoint.url_template(), cfg, store, fast_options());
  auto docs = engine.search(Query({"dog", "cat"}), 20);
  CHECK(docs.size() == 20);
  CHECK(seen_query == "dog cat");
  CHECK(seen_count == "20");
  CHECK_THROWS_AS(engine.search(Query({"dog"}), 0), ContractViolation);
}

TEST_CASE("malformed body raises AdapterError", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>", "text/html");
  });
  HttpSearchEngine engine(endpoint.url_template(), cfg, store, fast_options());
  CHECK_THROWS_AS(engine.search(Query({"dog"}), 5), AdapterError);
}

TEST_CASE("non-2xx retried then TransportError", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  std::atomic<int> calls{0};
  FakeEndpoint endpoint([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  HttpSearchEngine engine(endpoint.url_template(), cfg, store, fast_options());
  CHECK_THROWS_AS(engine.search(Query({"dog"}), 5), TransportError);
  CHECK(calls == 3);  // one attempt plus max_retries
}

TEST_CASE("transient failure recovers", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  std::atomic<int> calls{0};
  FakeEndpoint endpoint([&](const httplib::Request&, httplib::Response& res) {
    if (++calls == 1) {
      res.status = 500;
      return;
    }
    res.set_content(items(2), "application/json");
  });
  HttpSearchEngine engine(endpoint.url_template(), cfg, store, fast_options());
  CHECK(engine.search(Query({"dog"}), 5).size() == 2);
}

TEST_CASE("unreachable host raises TransportError", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }  // closed again: nothing listens there
  HttpSearchEngine engine("http://127.0.0.1:" + std::to_string(port) + "/s?q={query}", cfg, store,
                          fast_options());
  CHECK_THROWS_AS(engine.search(Query({"dog"}), 5), TransportError);
}

TEST_CASE("requests are spaced by min_interval", "[http]") {
  auto store = testing::three_word_store();
  auto cfg = testing::small_config();
  FakeEndpoint endpoint([](const httplib::Request&, httplib::Response& res) {
    res.set_content("[]", "application/json");
  });
  auto opts = fast_options();
  opts.min_interval = 100ms;
  HttpSearchEngine engine(endpoint.url_template(), cfg, store, opts);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) engine.search(Query({"dog"}), 5);
  CHECK(std::chrono::steady_clock::now() - start >= 200ms);
}
