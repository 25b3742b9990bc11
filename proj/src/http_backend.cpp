#include "popt/http_backend.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace popt::gateway {

double RetryPolicy::delay_ms(int failed_attempts, std::uint64_t jitter_seed) const {
    double delay = base_delay_ms;
    for (int i = 1; i < failed_attempts; ++i) delay *= factor;
    if (jitter) {
        // Up to +50%, derived deterministically from the seed and attempt.
        std::uint64_t h = derive_seed(jitter_seed, "retry.jitter",
                                      static_cast<std::uint64_t>(failed_attempts));
        delay *= 1.0 + 0.5 * (static_cast<double>(h % 1000) / 1000.0);
    }
    return delay;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {}

std::string HttpBackend::backend_id() const {
    return "http:" + config_.model;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    std::string rendered = render_template(request.template_id, request.slots);

    nlohmann::json body;
    body["model"] = config_.model;
    body["messages"] = nlohmann::json::array(
        {nlohmann::json{{"role", "user"}, {"content", rendered}}});
    body["temperature"] = request.temperature;
    if (request.seed) body["seed"] = *request.seed;
    std::string payload = body.dump();

    std::string api_key;
    if (!config_.credential_env.empty()) {
        if (const char* v = std::getenv(config_.credential_env.c_str())) api_key = v;
    }

    if (config_.verbose) {
        std::cerr << "[http] POST " << config_.host << config_.path
                  << (api_key.empty() ? "" : " authorization=Bearer <redacted>") << "\n"
                  << "[http] request body: " << payload << "\n";
    }

    std::string last_cause = "no attempt made";
    for (int attempt = 1; attempt <= request.max_retries + 1; ++attempt) {
        httplib::Client client(config_.host);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);

        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

        auto result = client.Post(config_.path, headers, payload, "application/json");

        bool transient = false;
        if (!result) {
            last_cause = "connection error: " + httplib::to_string(result.error());
            transient = true;
        } else if (result->status >= 500) {
            last_cause = "server error: HTTP " + std::to_string(result->status);
            transient = true;
        } else if (result->status != 200) {
            fail(ErrorKind::backend, "http backend: permanent failure, HTTP " +
                                         std::to_string(result->status) + ": " + result->body);
        } else {
            if (config_.verbose) {
                std::cerr << "[http] response body: " << result->body << "\n";
            }
            nlohmann::json reply = nlohmann::json::parse(result->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("content") ||
                !reply.at("content").is_string()) {
                fail(ErrorKind::parse,
                     "http backend: malformed reply body: " + result->body);
            }
            ChatResponse response;
            response.content = reply.at("content").get<std::string>();
            response.backend_id = backend_id();
            response.attempt_count = attempt;
            return response;
        }

        if (transient && attempt <= request.max_retries) {
            double delay = config_.retry.delay_ms(attempt, request.seed.value_or(0));
            if (config_.verbose) {
                std::cerr << "[http] attempt " << attempt << " failed (" << last_cause
                          << "), retrying in " << delay << " ms\n";
            }
            std::this_thread::sleep_for(
                std::chrono::duration<double, std::milli>(delay));
        }
    }
    fail(ErrorKind::backend, "http backend: exhausted " +
                                 std::to_string(request.max_retries + 1) +
                                 " attempts; last cause: " + last_cause);
}

}  // namespace popt::gateway
