#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "diffaudit/cluster/kmeans.hpp"
#include "diffaudit/embedcluster.hpp"
#include "diffaudit/genpair.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/templates.hpp"

namespace diffaudit::hyp {

struct Hypothesis {
    std::string hypothesis_id;
    std::string run_id;
    std::string dataset;
    std::string intervention;
    std::string context_id;
    int number = 0;  // 1-based index within the dataset, used for citations
    std::string text;
    int k_pairs_shown = 0;
    int pairs_available = 0;
    int diversification_version = 0;
};

struct PriorHypothesis {
    std::string id;
    std::string text;
};

struct DiversificationState {
    std::vector<PriorHypothesis> prior_hypotheses;
    int saffron_pass_count = 0;
    std::string current_instruction;
    int version = 0;
    int n0 = 10;
    int b = 10;
    int k = 5;
    std::vector<std::string> instruction_history;  // index v-1 holds version v
    std::vector<std::string> warnings;

    /// Instruction in force at a given version ("" for version 0).
    const std::string& instruction_at(int v) const {
        static const std::string none;
        if (v <= 0) return none;
        return instruction_history.at(static_cast<std::size_t>(v - 1));
    }
};

inline bool should_update(const DiversificationState& s) {
    return s.b > 0 && s.saffron_pass_count >= s.n0 && s.saffron_pass_count % s.b == 0;
}

struct ShownPairs {
    std::vector<std::string> m1, m2;
};

/// First k (prompt, sample) construction pairs in prompt_id then sample order.
inline ShownPairs select_pairs(const gen::ContextSamples& cs, int k, int* available = nullptr) {
    ShownPairs out;
    int total = 0;
    auto con = cs.side(gen::Side::construction);
    std::sort(con.begin(), con.end(), [](auto* a, auto* b) { return a->prompt_id < b->prompt_id; });
    for (const auto* p : con) {
        const auto n = std::min(p->m1.size(), p->m2.size());
        for (std::size_t s = 0; s < n; ++s) {
            ++total;
            if (static_cast<int>(out.m1.size()) >= k) continue;
            out.m1.push_back(templates::selected_text(p->prompt_text, p->m1[s].text));
            out.m2.push_back(templates::selected_text(p->prompt_text, p->m2[s].text));
        }
    }
    if (available) *available = total;
    return out;
}

/// Full Hypothesizer request text. History is capped at the 3 most recent entries.
inline std::string hypothesis_prompt(const ShownPairs& pairs, const std::string& instruction,
                                     const std::vector<std::string>& same_context_history) {
    std::string s = templates::hypothesizer_prompt(pairs.m1, pairs.m2);
    if (!instruction.empty()) {
        s += "\n\n";
        s += instruction;
    }
    if (!same_context_history.empty()) {
        const auto n = same_context_history.size();
        const auto start = n > 3 ? n - 3 : 0;
        s += "\n\n";
        s += templates::history_header;
        for (std::size_t i = start; i < n; ++i) s += "- " + same_context_history[i] + "\n";
        s += templates::history_request;
    }
    return s;
}

inline Hypothesis propose_hypothesis(const gen::ContextSamples& cs, int k, const DiversificationState& state,
                                     llm::LlmClient& client, const std::vector<std::string>& history = {}) {
    if (k < 1) fail(ErrorKind::invalid_input, "k must be >= 1");
    int available = 0;
    const auto pairs = select_pairs(cs, k, &available);
    if (pairs.m1.empty())
        fail(ErrorKind::stage, "context " + cs.context_id + " has no construction pairs");
    const auto prompt = hypothesis_prompt(pairs, state.current_instruction, history);
    const auto c = client.complete(llm::Role::hypothesizer, llm::ChatRequest::user(prompt));
    if (c.text.empty()) fail(ErrorKind::stage, "empty hypothesis for context " + cs.context_id);
    Hypothesis h;
    h.context_id = cs.context_id;
    h.text = c.text;
    h.k_pairs_shown = static_cast<int>(pairs.m1.size());
    h.pairs_available = available;
    h.diversification_version = state.version;
    return h;
}

/// Indices of the points nearest each k-means center (ties to the lowest index), deduplicated.
inline std::vector<std::size_t> representatives(const Eigen::MatrixXd& x, const cluster::KMeansResult& km) {
    std::vector<std::size_t> reps;
    for (Eigen::Index c = 0; c < km.centers.rows(); ++c) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double d = (x.row(i) - km.centers.row(c)).norm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<std::size_t>(i);
            }
        }
        if (std::find(reps.begin(), reps.end(), best) == reps.end()) reps.push_back(best);
    }
    return reps;
}

/// Refreshes the diversification instruction from all prior hypotheses. On any
/// failure the state is left unchanged apart from an appended warning.
inline void update_diversification(DiversificationState& state, llm::LlmClient& client, std::uint64_t seed,
                                   std::size_t threads = 8) {
    if (state.prior_hypotheses.empty()) {
        state.warnings.push_back("diversification update skipped: no prior hypotheses");
        return;
    }
    try {
        auto prior = state.prior_hypotheses;
        std::sort(prior.begin(), prior.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        std::vector<std::string> texts, ids;
        for (const auto& p : prior) {
            texts.push_back(p.text);
            ids.push_back(p.id);
        }
        const auto vecs = cluster::embed_texts(texts, ids, client, threads);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(vecs.size()), static_cast<Eigen::Index>(vecs.front().size()));
        for (std::size_t i = 0; i < vecs.size(); ++i)
            for (std::size_t j = 0; j < vecs[i].size(); ++j)
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vecs[i][j];
        const int k = std::min<int>(state.k, static_cast<int>(vecs.size()));
        const auto km = cluster::kmeans(x, k, seed);
        std::string request(templates::theme_request);
        for (auto i : representatives(x, km)) request += "- " + texts[i] + "\n";
        const auto themes = client.complete(llm::Role::summarizer, llm::ChatRequest::user(request)).text;
        if (themes.empty()) throw Error(ErrorKind::stage, "empty theme summary");
        state.current_instruction = templates::diversification_instruction(themes);
        ++state.version;
        state.instruction_history.push_back(state.current_instruction);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::replay_miss) throw;
        state.warnings.push_back(std::string("diversification update failed: ") + e.what());
    } catch (const std::exception& e) {
        state.warnings.push_back(std::string("diversification update failed: ") + e.what());
    }
}

inline json to_json(const Hypothesis& h) {
    return {{"hypothesis_id", h.hypothesis_id},
            {"run_id", h.run_id},
            {"dataset", h.dataset},
            {"intervention", h.intervention},
            {"context_id", h.context_id},
            {"number", h.number},
            {"text", h.text},
            {"k_pairs_shown", h.k_pairs_shown},
            {"pairs_available", h.pairs_available},
            {"diversification_version", h.diversification_version}};
}

inline Hypothesis hypothesis_from_json(const json& j) {
    Hypothesis h;
    h.hypothesis_id = j.at("hypothesis_id").get<std::string>();
    h.run_id = j.at("run_id").get<std::string>();
    h.dataset = j.at("dataset").get<std::string>();
    h.intervention = j.at("intervention").get<std::string>();
    h.context_id = j.at("context_id").get<std::string>();
    h.number = j.at("number").get<int>();
    h.text = j.at("text").get<std::string>();
    h.k_pairs_shown = j.at("k_pairs_shown").get<int>();
    h.pairs_available = j.value("pairs_available", h.k_pairs_shown);
    h.diversification_version = j.value("diversification_version", 0);
    return h;
}

} // namespace diffaudit::hyp
