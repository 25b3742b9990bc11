#pragma once

#include <string>

#include "popt/gateway.hpp"

namespace popt::gateway {

struct RetryPolicy {
    double base_delay_ms = 500.0;
    double factor = 2.0;
    bool jitter = false;  // off under test for determinism

    double delay_ms(int failed_attempts, std::uint64_t jitter_seed) const;
};

struct HttpBackendConfig {
    std::string host;                       // e.g. "http://localhost:8080"
    std::string path = "/v1/chat/completions";
    std::string model = "prompt-optimizer";
    std::string credential_env;             // env var holding the API key; may be empty
    int timeout_seconds = 30;
    RetryPolicy retry;
    bool verbose = false;                   // log request/response bodies, credential redacted
};

/// Chat backend over HTTP. The request body carries the model name, a message
/// list of (role, content), the temperature, and the seed when set; the
/// response body carries a single "content" string. Transient failures
/// (connection errors, 5xx) are retried with exponential backoff up to
/// request.max_retries; a malformed reply is a parse error, not a retry.
class HttpBackend : public ChatBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    ChatResponse complete(const ChatRequest& request) override;
    std::string backend_id() const override;

private:
    HttpBackendConfig config_;
};

}  // namespace popt::gateway
