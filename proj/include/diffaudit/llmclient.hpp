#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "diffaudit/error.hpp"
#include "diffaudit/hashing.hpp"
#include "diffaudit/io.hpp"

namespace diffaudit::llm {

enum class Role { subject_m1, subject_m2, hypothesizer, discriminator, summarizer, judge, embedder };

inline constexpr Role all_roles[] = {Role::subject_m1,   Role::subject_m2, Role::hypothesizer, Role::discriminator,
                                     Role::summarizer, Role::judge,      Role::embedder};

inline std::string_view to_string(Role r) {
    switch (r) {
    case Role::subject_m1: return "subject_m1";
    case Role::subject_m2: return "subject_m2";
    case Role::hypothesizer: return "hypothesizer";
    case Role::discriminator: return "discriminator";
    case Role::summarizer: return "summarizer";
    case Role::judge: return "judge";
    case Role::embedder: return "embedder";
    }
    return "unknown";
}

inline Role role_from_string(std::string_view s) {
    for (Role r : all_roles)
        if (to_string(r) == s) return r;
    fail(ErrorKind::config, "unknown role: " + std::string(s));
}

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    bool estimated = false;

    TokenUsage& operator+=(const TokenUsage& o) {
        input_tokens += o.input_tokens;
        output_tokens += o.output_tokens;
        estimated = estimated || o.estimated;
        return *this;
    }
    friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

inline json to_json(const TokenUsage& u) {
    json j = {{"input_tokens", u.input_tokens}, {"output_tokens", u.output_tokens}};
    if (u.estimated) j["estimated"] = true;
    return j;
}

inline TokenUsage usage_from_json(const json& j) {
    TokenUsage u;
    u.input_tokens = j.value("input_tokens", std::int64_t{0});
    u.output_tokens = j.value("output_tokens", std::int64_t{0});
    u.estimated = j.value("estimated", false);
    return u;
}

/// Fallback when a provider omits usage: ceil(bytes / 4).
inline std::int64_t estimate_tokens(std::size_t bytes) { return static_cast<std::int64_t>((bytes + 3) / 4); }

struct RoleConfig {
    Role role = Role::subject_m1;
    std::string endpoint;             // provider base URL, or "mock"
    std::string model;
    json decoding = json::object();   // overrides merged into every request of this role
    std::optional<double> price_in;   // currency per million input tokens
    std::optional<double> price_out;  // currency per million output tokens
    std::string api_key_env;          // environment variable holding the credential
};

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

/// A chat-completion request. `params` holds decoding fields (temperature, top_p,
/// max_tokens, seed, ...) and is passed through to the provider.
struct ChatRequest {
    std::vector<ChatMessage> messages;
    json params = json::object();

    static ChatRequest user(std::string content, json params = json::object()) {
        return {{{"user", std::move(content)}}, std::move(params)};
    }
};

struct Completion {
    std::string text;
    TokenUsage usage;
    std::string call_key;
};

struct Embedding {
    std::vector<double> values;
    TokenUsage usage;
    std::string call_key;
};

enum class Mode { live, record, replay };

inline Mode mode_from_string(std::string_view s) {
    if (s == "live") return Mode::live;
    if (s == "record") return Mode::record;
    if (s == "replay") return Mode::replay;
    fail(ErrorKind::config, "unknown mode: " + std::string(s));
}

struct TransportRequest {
    Role role = Role::subject_m1;
    std::string kind;  // "chat" | "embedding"
    std::string endpoint;
    std::string api_key_env;
    json payload;
};

/// Wire-level provider access. Responses are normalized to
/// {"text": ..., "usage": {...}} for chat and {"vector": [...], "usage": {...}} for embeddings.
class Transport {
public:
    virtual ~Transport() = default;
    virtual json send(const TransportRequest& request) = 0;
};

struct CallRecord {
    std::string call_key;
    Role role = Role::subject_m1;
    std::string kind;
    json request;
    json response;
    TokenUsage usage;
    std::string timestamp;
};

/// Content-addressed fixture directory: one `<call_key>.json` file per call.
class FixtureStore {
public:
    explicit FixtureStore(fs::path dir) : dir_(std::move(dir)) {}

    const fs::path& dir() const { return dir_; }

    fs::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

    static std::string serialize(const CallRecord& r) {
        json j = {{"call_key", r.call_key},      {"role", std::string(to_string(r.role))},
                  {"kind", r.kind},              {"request", r.request},
                  {"response", r.response},      {"usage", to_json(r.usage)},
                  {"timestamp", r.timestamp}};
        return j.dump(2) + "\n";
    }

    static CallRecord parse(const std::string& text) {
        const json j = json::parse(text);
        CallRecord r;
        r.call_key = j.at("call_key").get<std::string>();
        r.role = role_from_string(j.at("role").get<std::string>());
        r.kind = j.at("kind").get<std::string>();
        r.request = j.at("request");
        r.response = j.at("response");
        r.usage = usage_from_json(j.at("usage"));
        r.timestamp = j.value("timestamp", "");
        return r;
    }

    std::optional<CallRecord> find(const std::string& key) const {
        std::shared_lock lock(mutex_);
        const auto p = path_for(key);
        if (!fs::exists(p)) return std::nullopt;
        auto rec = parse(read_file(p));
        if (rec.call_key != key)
            fail(ErrorKind::inconsistency, "fixture " + p.string() + " carries a different call_key");
        return rec;
    }

    void put(const CallRecord& r) {
        std::unique_lock lock(mutex_);
        write_file(path_for(r.call_key), serialize(r));
    }

private:
    fs::path dir_;
    mutable std::shared_mutex mutex_;
};

struct UsageEntry {
    std::string stage;
    Role role = Role::subject_m1;
    std::string call_key;
    TokenUsage usage;
};

inline json to_json(const UsageEntry& e) {
    json j = to_json(e.usage);
    j["stage"] = e.stage;
    j["role"] = std::string(to_string(e.role));
    j["call_key"] = e.call_key;
    return j;
}

inline UsageEntry usage_entry_from_json(const json& j) {
    return {j.at("stage").get<std::string>(), role_from_string(j.at("role").get<std::string>()),
            j.at("call_key").get<std::string>(), usage_from_json(j)};
}

/// Thread-safe per-call token log.
class UsageLedger {
public:
    void add(UsageEntry e) {
        std::lock_guard lock(mutex_);
        entries_.push_back(std::move(e));
    }

    /// Entries in a canonical order, independent of call completion order.
    std::vector<UsageEntry> entries() const {
        std::lock_guard lock(mutex_);
        auto out = entries_;
        std::stable_sort(out.begin(), out.end(), [](const UsageEntry& a, const UsageEntry& b) {
            if (a.stage != b.stage) return a.stage < b.stage;
            if (a.role != b.role) return a.role < b.role;
            return a.call_key < b.call_key;
        });
        return out;
    }

    void clear() {
        std::lock_guard lock(mutex_);
        entries_.clear();
    }

private:
    mutable std::mutex mutex_;
    std::vector<UsageEntry> entries_;
};

struct ClientOptions {
    Mode mode = Mode::live;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{250};  // doubled after each failed attempt
    std::ptrdiff_t max_in_flight = 8;
};

class LlmClient {
public:
    LlmClient(std::map<Role, RoleConfig> roles, ClientOptions options, std::shared_ptr<Transport> transport,
              std::shared_ptr<FixtureStore> store = nullptr)
        : roles_(std::move(roles)), options_(options), transport_(std::move(transport)), store_(std::move(store)),
          in_flight_(std::max<std::ptrdiff_t>(1, std::min<std::ptrdiff_t>(options.max_in_flight, 1024))) {
        if (options_.mode != Mode::live && !store_)
            fail(ErrorKind::config, "record and replay modes require a fixture directory");
        if (options_.mode != Mode::replay && !transport_)
            fail(ErrorKind::config, "live and record modes require a transport");
        if (options_.max_attempts < 1) fail(ErrorKind::config, "max_attempts must be >= 1");
    }

    Mode mode() const { return options_.mode; }
    const RoleConfig& role(Role r) const {
        auto it = roles_.find(r);
        if (it == roles_.end()) fail(ErrorKind::config, "role not bound: " + std::string(to_string(r)));
        return it->second;
    }
    bool has_role(Role r) const { return roles_.count(r) != 0; }
    const std::map<Role, RoleConfig>& roles() const { return roles_; }

    void set_stage(std::string stage) {
        std::lock_guard lock(stage_mutex_);
        stage_ = std::move(stage);
    }
    std::string stage() const {
        std::lock_guard lock(stage_mutex_);
        return stage_;
    }

    UsageLedger& usage() { return usage_; }
    const UsageLedger& usage() const { return usage_; }

    static std::string call_key(Role r, const json& payload) {
        return sha256_hex(std::string(to_string(r)) + "\n" + payload.dump());
    }

    /// Canonical chat payload: request params, then role overrides, then model and messages.
    json chat_payload(Role r, const ChatRequest& req) const {
        const auto& rc = role(r);
        json p = req.params.is_object() ? req.params : json::object();
        for (auto it = rc.decoding.begin(); it != rc.decoding.end(); ++it) p[it.key()] = it.value();
        p["model"] = rc.model;
        json msgs = json::array();
        for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
        p["messages"] = std::move(msgs);
        return p;
    }

    json embedding_payload(Role r, std::string_view text) const {
        return {{"model", role(r).model}, {"input", std::string(text)}};
    }

    Completion complete(Role r, const ChatRequest& req) {
        const json payload = chat_payload(r, req);
        const auto rec = dispatch(r, "chat", payload);
        Completion c;
        c.call_key = rec.call_key;
        c.usage = rec.usage;
        if (!rec.response.contains("text") || !rec.response["text"].is_string())
            fail(ErrorKind::inconsistency, "chat response without text for call " + rec.call_key);
        c.text = rec.response["text"].get<std::string>();
        return c;
    }

    Embedding embed(Role r, std::string_view text) {
        const json payload = embedding_payload(r, text);
        const auto rec = dispatch(r, "embedding", payload);
        Embedding e;
        e.call_key = rec.call_key;
        e.usage = rec.usage;
        if (!rec.response.contains("vector") || !rec.response["vector"].is_array())
            fail(ErrorKind::inconsistency, "embedding response without vector for call " + rec.call_key);
        e.values = rec.response["vector"].get<std::vector<double>>();
        return e;
    }

private:
    static std::size_t request_bytes(const json& payload) {
        if (payload.contains("input")) return payload["input"].get_ref<const std::string&>().size();
        std::size_t n = 0;
        if (payload.contains("messages"))
            for (const auto& m : payload["messages"]) n += m["content"].get_ref<const std::string&>().size();
        return n;
    }

    static TokenUsage response_usage(const json& payload, const json& response) {
        if (response.contains("usage") && response["usage"].is_object()) return usage_from_json(response["usage"]);
        TokenUsage u;
        u.estimated = true;
        u.input_tokens = estimate_tokens(request_bytes(payload));
        if (response.contains("text") && response["text"].is_string())
            u.output_tokens = estimate_tokens(response["text"].get_ref<const std::string&>().size());
        return u;
    }

    static std::string now_utc() {
        const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    CallRecord dispatch(Role r, const std::string& kind, const json& payload) {
        const auto& rc = role(r);
        CallRecord rec;
        rec.call_key = call_key(r, payload);
        rec.role = r;
        rec.kind = kind;
        rec.request = payload;

        if (options_.mode == Mode::replay) {
            auto found = store_->find(rec.call_key);
            if (!found)
                fail(ErrorKind::replay_miss, "replay miss: no fixture for role " + std::string(to_string(r)) +
                                                 " call_key " + rec.call_key);
            usage_.add({stage(), r, rec.call_key, found->usage});
            return *found;
        }

        TransportRequest treq{r, kind, rc.endpoint, rc.api_key_env, payload};
        std::string attempt_log;
        std::optional<json> response;
        auto delay = options_.backoff;
        for (int attempt = 1; attempt <= options_.max_attempts && !response; ++attempt) {
            try {
                in_flight_.acquire();
                struct Release {
                    std::counting_semaphore<1024>& s;
                    ~Release() { s.release(); }
                } release{in_flight_};
                response = transport_->send(treq);
            } catch (const std::exception& e) {
                attempt_log += "\n  attempt " + std::to_string(attempt) + ": " + e.what();
                if (attempt < options_.max_attempts && delay.count() > 0) {
                    std::this_thread::sleep_for(delay);
                    delay *= 2;
                }
            }
        }
        if (!response)
            fail(ErrorKind::transport, "transport failed for role " + std::string(to_string(r)) + " after " +
                                           std::to_string(options_.max_attempts) + " attempts:" + attempt_log);

        rec.usage = response_usage(payload, *response);
        rec.response = std::move(*response);
        rec.response.erase("usage");
        if (options_.mode == Mode::record) {
            rec.timestamp = now_utc();
            store_->put(rec);
        }
        usage_.add({stage(), r, rec.call_key, rec.usage});
        return rec;
    }

    std::map<Role, RoleConfig> roles_;
    ClientOptions options_;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<FixtureStore> store_;
    std::counting_semaphore<1024> in_flight_;
    UsageLedger usage_;
    mutable std::mutex stage_mutex_;
    std::string stage_;
};

// ---------------------------------------------------------------------------
// Cost accounting

struct CostReport {
    double total = 0.0;
    std::map<Role, double> per_role;
};

/// Sum over roles of input/1e6 * price_in + output/1e6 * price_out.
inline CostReport estimate_cost(const std::map<Role, TokenUsage>& usage, const std::map<Role, RoleConfig>& roles) {
    CostReport out;
    for (const auto& [r, u] : usage) {
        if (u.input_tokens == 0 && u.output_tokens == 0) {
            out.per_role[r] = 0.0;
            continue;
        }
        auto it = roles.find(r);
        if (it == roles.end() || !it->second.price_in || !it->second.price_out)
            fail(ErrorKind::config, "missing price for role " + std::string(to_string(r)));
        const double c = static_cast<double>(u.input_tokens) / 1e6 * *it->second.price_in +
                         static_cast<double>(u.output_tokens) / 1e6 * *it->second.price_out;
        out.per_role[r] = c;
        out.total += c;
    }
    return out;
}

struct UsageReport {
    TokenUsage total;
    std::size_t calls = 0;
    std::map<Role, TokenUsage> per_role;
    std::map<std::string, TokenUsage> per_stage;
    std::map<std::pair<std::string, Role>, TokenUsage> per_stage_role;
};

inline UsageReport usage_report(const std::vector<UsageEntry>& entries) {
    UsageReport rep;
    for (const auto& e : entries) {
        ++rep.calls;
        rep.total += e.usage;
        rep.per_role[e.role] += e.usage;
        rep.per_stage[e.stage] += e.usage;
        rep.per_stage_role[{e.stage, e.role}] += e.usage;
    }
    return rep;
}

} // namespace diffaudit::llm
