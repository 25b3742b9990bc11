#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "popt/http_backend.hpp"

using namespace popt;
using namespace popt::gateway;

namespace {

// Scripted local server: fails with 500 for the first `failures` requests,
// then answers with a fixed content body (or garbage when `malformed`).
class StubServer {
public:
    explicit StubServer(int failures, bool malformed = false)
        : failures_(failures), malformed_(malformed) {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         ++hits_;
                         last_body_ = req.body;
                         if (hits_ <= failures_) {
                             res.status = 500;
                             res.set_content("backend overloaded", "text/plain");
                             return;
                         }
                         if (malformed_) {
                             res.set_content("{not json", "application/json");
                             return;
                         }
                         nlohmann::json reply;
                         reply["content"] = "stub reply";
                         res.set_content(reply.dump(), "application/json");
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    int port() const { return port_; }
    int hits() const { return hits_.load(); }
    std::string last_body() const { return last_body_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int failures_;
    bool malformed_;
    std::atomic<int> hits_{0};
    std::string last_body_;
};

HttpBackendConfig fast_config(int port) {
    HttpBackendConfig config;
    config.host = "http://127.0.0.1:" + std::to_string(port);
    config.model = "stub-model";
    config.retry.base_delay_ms = 1.0;
    config.retry.factor = 2.0;
    config.retry.jitter = false;
    return config;
}

ChatRequest simple_request(int max_retries) {
    ChatRequest req;
    req.template_id = TemplateId::fewshot_optimize;
    req.slots = {{"query", "a cat"}};
    req.temperature = 0.7;
    req.seed = 5;
    req.max_retries = max_retries;
    return req;
}

}  // namespace

TEST_CASE("http backend retries transient failures and reports attempts") {
    StubServer server(/*failures=*/2);
    HttpBackend backend(fast_config(server.port()));
    ChatResponse response = complete(simple_request(3), backend);
    CHECK(response.content == "stub reply");
    CHECK(response.attempt_count == 3);
    CHECK(server.hits() == 3);

    // The wire body carries model, messages, temperature, and seed.
    nlohmann::json body = nlohmann::json::parse(server.last_body());
    CHECK(body.at("model") == "stub-model");
    CHECK(body.at("temperature").get<double>() == doctest::Approx(0.7));
    CHECK(body.at("seed").get<std::uint64_t>() == 5);
    REQUIRE(body.at("messages").size() == 1);
    CHECK(body.at("messages")[0].at("role") == "user");
    std::string content = body.at("messages")[0].at("content").get<std::string>();
    CHECK(content.find("a cat") != std::string::npos);
}

TEST_CASE("http backend fails with a typed error after exhausting retries") {
    StubServer server(/*failures=*/100);
    HttpBackend backend(fast_config(server.port()));
    try {
        complete(simple_request(2), backend);
        FAIL("expected backend error");
    } catch (const PipelineError& e) {
        CHECK(e.kind() == ErrorKind::backend);
        CHECK(std::string(e.what()).find("HTTP 500") != std::string::npos);
    }
    CHECK(server.hits() == 3);  // max_retries + 1
}

TEST_CASE("http backend treats a malformed reply as a parse error, not a retry") {
    StubServer server(/*failures=*/0, /*malformed=*/true);
    HttpBackend backend(fast_config(server.port()));
    try {
        complete(simple_request(3), backend);
        FAIL("expected parse error");
    } catch (const PipelineError& e) {
        CHECK(e.kind() == ErrorKind::parse);
    }
    CHECK(server.hits() == 1);
}

TEST_CASE("retry delays grow exponentially without jitter") {
    RetryPolicy policy{100.0, 2.0, false};
    CHECK(policy.delay_ms(1, 0) == doctest::Approx(100.0));
    CHECK(policy.delay_ms(2, 0) == doctest::Approx(200.0));
    CHECK(policy.delay_ms(3, 0) == doctest::Approx(400.0));
}
