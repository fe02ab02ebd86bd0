#pragma once

#include <httplib.h>

#include <cstdlib>
#include <string>

#include "diffaudit/llmclient.hpp"

namespace diffaudit::llm {

/// OpenAI-compatible HTTP(S) provider access: POST {base}/chat/completions and {base}/embeddings.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(int timeout_seconds = 120) : timeout_(timeout_seconds) {}

    json send(const TransportRequest& req) override {
        const auto [origin, base_path] = split_url(req.endpoint);
        httplib::Client cli(origin);
        cli.set_connection_timeout(timeout_);
        cli.set_read_timeout(timeout_);
        cli.set_write_timeout(timeout_);
        httplib::Headers headers;
        if (!req.api_key_env.empty()) {
            const char* key = std::getenv(req.api_key_env.c_str());
            if (!key || !*key) fail(ErrorKind::config, "environment variable " + req.api_key_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        const bool chat = req.kind == "chat";
        const std::string path = base_path + (chat ? "/chat/completions" : "/embeddings");
        auto res = cli.Post(path, headers, req.payload.dump(), "application/json");
        if (!res) fail(ErrorKind::transport, "request to " + req.endpoint + path + " failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            fail(ErrorKind::transport, "HTTP " + std::to_string(res->status) + " from " + req.endpoint + path + ": " +
                                           res->body.substr(0, 300));
        const json body = json::parse(res->body, nullptr, false);
        if (body.is_discarded()) fail(ErrorKind::transport, "non-JSON response from " + req.endpoint + path);

        json out;
        if (chat) {
            const auto& msg = body.at("choices").at(0).at("message");
            out["text"] = msg.contains("content") && msg["content"].is_string() ? msg["content"].get<std::string>()
                                                                                 : std::string();
        } else {
            out["vector"] = body.at("data").at(0).at("embedding");
        }
        if (body.contains("usage") && body["usage"].is_object()) {
            const auto& u = body["usage"];
            out["usage"] = {{"input_tokens", u.value("prompt_tokens", std::int64_t{0})},
                            {"output_tokens", u.value("completion_tokens", std::int64_t{0})}};
        }
        return out;
    }

    /// "https://host:port/v1" -> {"https://host:port", "/v1"}
    static std::pair<std::string, std::string> split_url(const std::string& url) {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) fail(ErrorKind::config, "endpoint is not a URL: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {url, ""};
        std::string path = url.substr(path_start);
        while (!path.empty() && path.back() == '/') path.pop_back();
        return {url.substr(0, path_start), path};
    }

private:
    int timeout_;
};

} // namespace diffaudit::llm
