#pragma once

// HTTP transport for the semantics extractor: single-turn text completion.
// The request body is the verbatim query string (text/plain); the response
// body is the completion. A bearer token is attached when the configured
// credential environment variable is set.

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>

#include "stylegen/common.hpp"
#include "stylegen/semantics.hpp"

namespace stylegen {

struct EndpointParts {
    std::string host;
    int port = 80;
    std::string path = "/";
};

inline EndpointParts parse_endpoint(const std::string& url) {
    EndpointParts parts;
    std::string rest = url;
    if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    } else {
        require(rest.rfind("https://", 0) != 0, ErrorCode::config,
                "https endpoints are not supported by this build; use http");
        require(rest.find("://") == std::string::npos, ErrorCode::config,
                "unsupported endpoint scheme in: " + url);
    }
    const auto slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    if (slash != std::string::npos) parts.path = rest.substr(slash);
    const auto colon = hostport.find(':');
    if (colon == std::string::npos) {
        parts.host = hostport;
    } else {
        parts.host = hostport.substr(0, colon);
        parts.port = std::atoi(hostport.c_str() + colon + 1);
        require(parts.port > 0 && parts.port < 65536, ErrorCode::config,
                "bad endpoint port in: " + url);
    }
    require(!parts.host.empty(), ErrorCode::config, "bad endpoint host in: " + url);
    return parts;
}

class HttpLlmTransport final : public LlmTransport {
public:
    HttpLlmTransport(std::string endpoint, std::string credential_env,
                     int retries = 3, int timeout_s = 30)
        : parts_(parse_endpoint(endpoint)), credential_env_(std::move(credential_env)),
          retries_(retries), timeout_s_(timeout_s) {}

    std::string complete(const std::string& query) override {
        httplib::Client client(parts_.host, parts_.port);
        client.set_read_timeout(timeout_s_, 0);
        client.set_connection_timeout(timeout_s_, 0);

        httplib::Headers headers;
        if (!credential_env_.empty()) {
            if (const char* token = std::getenv(credential_env_.c_str()); token && *token)
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }

        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt < retries_; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(200 << attempt));
            auto res = client.Post(parts_.path, headers, query, "text/plain");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            return res->body;
        }
        fail(ErrorCode::llm, "LLM completion failed after " + std::to_string(retries_) +
                                 " attempts (" + last_error + ")");
    }

private:
    EndpointParts parts_;
    std::string credential_env_;
    int retries_;
    int timeout_s_;
};

} // namespace stylegen
