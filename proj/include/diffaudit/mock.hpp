#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "diffaudit/hashing.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/random.hpp"
#include "diffaudit/templates.hpp"

// Scripted offline provider. Every reply is a pure function of the request
// payload and the mock seed, so mock runs are reproducible.

namespace diffaudit::mock {

struct MockMarker {
    std::string word;          // ignored when from_persona is set
    double rate = 0.0;         // insertion probability per response
    std::string trigger;       // when non-empty, only prompts containing it get the marker
    bool from_persona = false; // use the keyword of the persona wrapper in the prompt, if any
};

struct MockModelSpec {
    std::vector<std::string> base_vocabulary;
    std::vector<MockMarker> markers;
    int min_words = 10;
    int max_words = 15;

    static MockModelSpec with_marker(std::string marker, double rate, std::vector<std::string> vocab = {}) {
        MockModelSpec s;
        s.base_vocabulary = std::move(vocab);
        s.markers.push_back({std::move(marker), rate, "", false});
        return s;
    }
};

struct MockCue {
    std::string word;
    double score = 50.0;
};

/// Scores by marker presence only; the hypothesis text is ignored.
struct MockDiscriminatorSpec {
    std::vector<MockCue> cues;  // first present cue wins
    double score_if_absent = 85.0;
    double noise_sd = 5.0;
};

struct MockConfig {
    MockModelSpec m1;
    MockModelSpec m2;
    MockDiscriminatorSpec discriminator;
    std::uint64_t seed = 0;
    int embedding_dim = 32;
};

inline const std::vector<std::string>& default_vocabulary() {
    static const std::vector<std::string> v = {
        "the",   "a",     "answer", "is",     "we",     "think",  "people", "often", "should", "consider",
        "this",  "view",  "many",   "would",  "agree",  "that",   "it",     "can",   "be",     "true",
        "some",  "might", "say",    "reason", "because", "life",  "world",  "good",  "idea",   "yes",
        "no",    "maybe", "really", "quite",  "simply", "always", "never",  "often", "time",   "work"};
    return v;
}

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// Lower-cased last word of a persona phrasing.
inline std::string persona_keyword(std::string_view phrasing) {
    const auto w = words(phrasing);
    return w.empty() ? std::string() : w.back();
}

inline std::optional<std::string> between(std::string_view s, std::string_view a, std::string_view b) {
    const auto i = s.find(a);
    if (i == std::string_view::npos) return std::nullopt;
    const auto j = s.find(b, i + a.size());
    if (j == std::string_view::npos) return std::nullopt;
    return std::string(s.substr(i + a.size(), j - i - a.size()));
}

class MockTransport : public llm::Transport {
public:
    explicit MockTransport(MockConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.m1.base_vocabulary.empty()) cfg_.m1.base_vocabulary = default_vocabulary();
        if (cfg_.m2.base_vocabulary.empty()) cfg_.m2.base_vocabulary = default_vocabulary();
    }

    const MockConfig& config() const { return cfg_; }

    json send(const llm::TransportRequest& r) override {
        json out;
        if (r.kind == "embedding") {
            out["vector"] = embed(r.payload.at("input").get<std::string>());
        } else {
            const auto& msgs = r.payload.at("messages");
            const std::string first = msgs.at(0).at("content").get<std::string>();
            const std::string last = msgs.back().at("content").get<std::string>();
            switch (r.role) {
            case llm::Role::subject_m1: out["text"] = subject(cfg_.m1, first, r.payload, "m1"); break;
            case llm::Role::subject_m2: out["text"] = subject(cfg_.m2, first, r.payload, "m2"); break;
            case llm::Role::discriminator: out["text"] = discriminate(first); break;
            case llm::Role::hypothesizer: out["text"] = hypothesize(first); break;
            case llm::Role::summarizer: out["text"] = summarize(first); break;
            case llm::Role::judge: out["text"] = judge(first); break;
            case llm::Role::embedder: out["text"] = std::string(); break;
            }
            std::size_t in_bytes = 0;
            for (const auto& m : msgs) in_bytes += m.at("content").get_ref<const std::string&>().size();
            out["usage"] = {{"input_tokens", llm::estimate_tokens(in_bytes)},
                            {"output_tokens", llm::estimate_tokens(out["text"].get_ref<const std::string&>().size())}};
            (void)last;
        }
        return out;
    }

    // Subject: filler words plus markers.
    std::string subject(const MockModelSpec& spec, const std::string& prompt, const json& payload,
                        const std::string& who) const {
        const std::string seed_field = payload.contains("seed") ? payload["seed"].dump() : "none";
        Rng rng(derive_seed(cfg_.seed, {"subject", who, seed_field, sha256_hex(prompt)}));
        const auto persona = between(prompt, "answer like someone who is:\n\n", ".\n\nDo not reference");
        const int span = std::max(0, spec.max_words - spec.min_words);
        const int n = spec.min_words + static_cast<int>(rng.index(static_cast<std::size_t>(span + 1)));
        const auto& vocab = spec.base_vocabulary.empty() ? default_vocabulary() : spec.base_vocabulary;
        std::vector<std::string> out;
        for (int i = 0; i < n; ++i) out.push_back(vocab[rng.index(vocab.size())]);
        for (const auto& m : spec.markers) {
            const double u = rng.uniform();
            const std::size_t pos = rng.index(out.size() + 1);
            std::string word = m.word;
            if (m.from_persona) {
                if (!persona) continue;
                word = persona_keyword(*persona);
            }
            if (word.empty() || u >= m.rate) continue;
            if (!m.trigger.empty() && prompt.find(m.trigger) == std::string::npos) continue;
            out.insert(out.begin() + static_cast<std::ptrdiff_t>(pos), word);
        }
        std::string s;
        for (const auto& w : out) s += (s.empty() ? "" : " ") + w;
        return s + ".";
    }

    std::string discriminate(const std::string& prompt) const {
        const auto text = between(prompt, "\n\nText: ", templates::discriminator_tail).value_or(prompt);
        double score = cfg_.discriminator.score_if_absent;
        const auto ws = words(text);
        const std::set<std::string> present(ws.begin(), ws.end());
        for (const auto& c : cfg_.discriminator.cues)
            if (present.count(c.word)) {
                score = c.score;
                break;
            }
        Rng rng(derive_seed(cfg_.seed, {"discriminator", sha256_hex(prompt)}));
        score += cfg_.discriminator.noise_sd * rng.normal();
        score = std::clamp(score, 0.0, 100.0);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", score);
        return buf;
    }

    // Hypothesizer: the word whose document frequency differs most between the sides.
    std::string hypothesize(const std::string& prompt) const {
        const auto a = between(prompt, "Model 1 selected texts:\n", "Model 2 selected texts:\n");
        const auto b = between(prompt, "Model 2 selected texts:\n", templates::hypothesizer_closing);
        if (!a || !b) return "No clear difference between the two models.";
        std::set<std::string> excluded;
        if (auto t = between(prompt, "different features from the following: ", ". To maintain diversity"))
            for (auto& w : quoted_words(*t)) excluded.insert(w);
        auto df = [](const std::string& block) {
            static const std::regex sep(R"(Model [12] Text \d+: )");
            std::map<std::string, int> out;
            for (std::sregex_token_iterator it(block.begin(), block.end(), sep, -1), end; it != end; ++it) {
                const auto ws = words(it->str());
                for (const auto& w : std::set<std::string>(ws.begin(), ws.end())) ++out[w];
            }
            return out;
        };
        const auto d1 = df(*a), d2 = df(*b);
        std::set<std::string> vocab;
        for (const auto& [w, c] : d1) vocab.insert(w);
        for (const auto& [w, c] : d2) vocab.insert(w);
        std::string best;
        int best_gap = 0;
        for (const auto& w : vocab) {
            if (excluded.count(w)) continue;
            const int g = (d2.count(w) ? d2.at(w) : 0) - (d1.count(w) ? d1.at(w) : 0);
            if (std::abs(g) > std::abs(best_gap)) {
                best_gap = g;
                best = w;
            }
        }
        if (best.empty()) return "No clear difference between the two models.";
        const char* more = best_gap > 0 ? "Model 2" : "Model 1";
        const char* less = best_gap > 0 ? "Model 1" : "Model 2";
        return std::string(more) + " responses frequently mention '" + best + "' while " + less +
               " responses rarely do.";
    }

    static std::vector<std::string> quoted_words(const std::string& s) {
        static const std::regex q(R"('([A-Za-z0-9]+)')");
        std::vector<std::string> out;
        for (auto it = std::sregex_iterator(s.begin(), s.end(), q); it != std::sregex_iterator(); ++it)
            out.push_back((*it)[1].str());
        return out;
    }

    std::string summarize(const std::string& prompt) const {
        if (prompt.starts_with(templates::theme_request)) {
            std::vector<std::string> ws;
            for (auto& w : quoted_words(prompt.substr(templates::theme_request.size())))
                if (std::find(ws.begin(), ws.end(), w) == ws.end()) ws.push_back(w);
            std::string s = "Prior hypotheses focus on the words ";
            for (std::size_t i = 0; i < ws.size(); ++i) s += (i ? ", '" : "'") + ws[i] + "'";
            return ws.empty() ? "No recurring themes" : s;
        }
        // Thematic summary: one item per distinctive word, citing every hypothesis that names it.
        static const std::regex line(R"(Hypothesis \(([^,]+), (\d+)\): (.*))");
        std::map<std::string, std::map<std::string, std::vector<int>>> cites;  // word -> dataset -> ids
        std::map<std::string, std::string> who;
        for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), line); it != std::sregex_iterator(); ++it) {
            const std::string text = (*it)[3].str();
            const auto q = quoted_words(text);
            if (q.empty()) continue;
            cites[q.front()][(*it)[1].str()].push_back(std::stoi((*it)[2].str()));
            who[q.front()] = text.rfind("Model 2", 0) == 0 ? "Model 2" : "Model 1";
        }
        std::string s = "\\begin{tabularx}{\\linewidth}{@{}>{\\raggedright\\arraybackslash}p{0.25\\linewidth} "
                        ">{\\raggedright\\arraybackslash}X@{}}\n\\catrow{Lexical markers}\n";
        for (const auto& [w, by_ds] : cites) {
            std::string refs;
            for (const auto& [ds, ids] : by_ds) {
                refs += refs.empty() ? "(" : ", (";
                refs += ds + ": ";
                for (std::size_t i = 0; i < ids.size(); ++i) refs += (i ? ", " : "") + std::to_string(ids[i]);
                refs += ")";
            }
            s += "\\itemrow{Use of `" + w + "'}\n  {" + who[w] + " mentions `" + w + "' more often " + refs + ".}\n";
        }
        s += "\\end{tabularx}";
        return s;
    }

    // Judge: "Yes" when the hypothesis mentions the stem of the phrasing's last word.
    std::string judge(const std::string& prompt) const {
        const auto phrasing = between(prompt, "Text 1: ", templates::judge_mid);
        const auto hypothesis = between(prompt, templates::judge_mid, templates::judge_tail);
        if (!phrasing || !hypothesis) return "Unclear.";
        const std::string stem = persona_keyword(*phrasing).substr(0, 5);
        if (stem.empty()) return "No";
        std::string h;
        for (char c : *hypothesis) h.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        return h.find(stem) != std::string::npos ? "Yes" : "No";
    }

    // Embedder: signed hashed bag of words.
    std::vector<double> embed(const std::string& input) const {
        const auto q = input.find("Query: ");
        const std::string text = q == std::string::npos ? input : input.substr(q + 7);
        std::vector<double> v(static_cast<std::size_t>(cfg_.embedding_dim), 0.0);
        for (const auto& w : words(text)) {
            std::uint64_t h = 1469598103934665603ULL;
            for (char c : w) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
            v[h % v.size()] += (h >> 63) ? 1.0 : -1.0;
        }
        bool zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
        if (zero) v[0] = 1.0;
        return v;
    }

private:
    MockConfig cfg_;
};

inline MockConfig mock_config_from_json(const json& j);

inline json to_json(const MockModelSpec& s) {
    json markers = json::array();
    for (const auto& m : s.markers) {
        json o = {{"word", m.word}, {"rate", m.rate}};
        if (!m.trigger.empty()) o["trigger"] = m.trigger;
        if (m.from_persona) o["from_persona"] = true;
        markers.push_back(o);
    }
    json o = {{"markers", markers}, {"min_words", s.min_words}, {"max_words", s.max_words}};
    if (!s.base_vocabulary.empty()) o["vocabulary"] = s.base_vocabulary;
    return o;
}

inline MockModelSpec model_spec_from_json(const json& j) {
    MockModelSpec s;
    if (j.contains("vocabulary")) s.base_vocabulary = j["vocabulary"].get<std::vector<std::string>>();
    s.min_words = j.value("min_words", 10);
    s.max_words = j.value("max_words", 15);
    if (j.contains("markers"))
        for (const auto& m : j["markers"])
            s.markers.push_back({m.value("word", ""), m.value("rate", 0.0), m.value("trigger", ""),
                                 m.value("from_persona", false)});
    if (j.contains("marker"))
        s.markers.push_back({j["marker"].get<std::string>(), j.value("injection_rate", 0.0), j.value("trigger", ""), false});
    return s;
}

inline MockConfig mock_config_from_json(const json& j) {
    MockConfig c;
    c.m1 = model_spec_from_json(j.value("m1", json::object()));
    c.m2 = model_spec_from_json(j.value("m2", json::object()));
    const json d = j.value("discriminator", json::object());
    if (d.contains("cues"))
        for (const auto& cue : d["cues"]) c.discriminator.cues.push_back({cue.at("word").get<std::string>(), cue.at("score").get<double>()});
    c.discriminator.score_if_absent = d.value("score_if_absent", 85.0);
    c.discriminator.noise_sd = d.value("noise_sd", 5.0);
    c.seed = j.value("seed", std::uint64_t{0});
    c.embedding_dim = j.value("embedding_dim", 32);
    return c;
}

inline json to_json(const MockConfig& c) {
    json cues = json::array();
    for (const auto& cue : c.discriminator.cues) cues.push_back({{"word", cue.word}, {"score", cue.score}});
    return {{"m1", to_json(c.m1)},
            {"m2", to_json(c.m2)},
            {"discriminator",
             {{"cues", cues}, {"score_if_absent", c.discriminator.score_if_absent}, {"noise_sd", c.discriminator.noise_sd}}},
            {"seed", c.seed},
            {"embedding_dim", c.embedding_dim}};
}

/// Sends "mock" endpoints to the mock and everything else to `live`.
class RoutingTransport : public llm::Transport {
public:
    RoutingTransport(std::shared_ptr<llm::Transport> mock, std::shared_ptr<llm::Transport> live)
        : mock_(std::move(mock)), live_(std::move(live)) {}

    json send(const llm::TransportRequest& r) override {
        if (r.endpoint == "mock") {
            if (!mock_) fail(ErrorKind::config, "mock endpoint requested but no mock configured");
            return mock_->send(r);
        }
        if (!live_) fail(ErrorKind::config, "no live transport for endpoint " + r.endpoint);
        return live_->send(r);
    }

private:
    std::shared_ptr<llm::Transport> mock_, live_;
};

} // namespace diffaudit::mock
