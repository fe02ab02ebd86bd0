#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "diffaudit/corpus.hpp"
#include "diffaudit/hashing.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/parallel.hpp"
#include "diffaudit/random.hpp"
#include "diffaudit/templates.hpp"

namespace diffaudit::gen {

enum class ModelTag { M1, M2 };

inline std::string_view to_string(ModelTag t) { return t == ModelTag::M1 ? "M1" : "M2"; }

inline ModelTag tag_from_string(std::string_view s) {
    if (s == "M1") return ModelTag::M1;
    if (s == "M2") return ModelTag::M2;
    fail(ErrorKind::invalid_input, "unknown model tag: " + std::string(s));
}

struct DecodingConfig {
    double temperature = 1.0;
    double top_p = 0.95;
    int max_tokens = 112;
    int cot_budget = 0;
    int samples_per_prompt = 1;
    std::string cot_marker = "</think>";

    /// Defaults for models that emit a chain of thought before answering.
    static DecodingConfig reasoning() {
        DecodingConfig c;
        c.cot_budget = 196;
        return c;
    }

    void validate() const {
        if (!(temperature >= 0.0)) fail(ErrorKind::config, "temperature must be >= 0");
        if (!(top_p > 0.0 && top_p <= 1.0)) fail(ErrorKind::config, "top_p must be in (0, 1]");
        if (max_tokens < 1) fail(ErrorKind::config, "max_tokens must be positive");
        if (cot_budget < 0) fail(ErrorKind::config, "cot_budget must be non-negative");
        if (samples_per_prompt < 1) fail(ErrorKind::config, "samples_per_prompt must be positive");
    }
};

struct GenerationRecord {
    std::string prompt_id;
    ModelTag model_tag = ModelTag::M1;
    std::string text;  // after chain-of-thought stripping
    llm::TokenUsage usage;
    int sample_index = 0;
};

struct PromptPair {
    std::string prompt_id;
    std::string prompt_text;  // formatted prompt as the evaluator sees it
    std::vector<GenerationRecord> m1;
    std::vector<GenerationRecord> m2;
};

enum class Side { construction, validation };

inline std::string_view to_string(Side s) { return s == Side::construction ? "construction" : "validation"; }

struct GenerationFailure {
    std::string prompt_id;
    std::string error;
};

struct ContextSamples {
    std::string context_id;
    std::vector<PromptPair> pairs;  // sorted by prompt_id
    std::map<std::string, Side> partition;
    std::vector<GenerationFailure> failures;

    std::vector<const PromptPair*> side(Side s) const {
        std::vector<const PromptPair*> out;
        for (const auto& p : pairs) {
            auto it = partition.find(p.prompt_id);
            if (it != partition.end() && it->second == s) out.push_back(&p);
        }
        return out;
    }
};

/// Returns the text after the final marker occurrence; unchanged if absent.
inline std::string strip_chain_of_thought(std::string_view text, std::string_view marker = "</think>") {
    if (marker.empty()) return std::string(text);
    const auto pos = text.rfind(marker);
    if (pos == std::string_view::npos) return std::string(text);
    return std::string(text.substr(pos + marker.size()));
}

/// Decoding fields shared by both subject models. The seed depends only on (run, prompt, sample).
inline json decoding_params(const DecodingConfig& cfg, std::uint64_t run_seed, const std::string& prompt_id,
                            int sample) {
    const auto seed = derive_seed(run_seed, {"generate", prompt_id, std::to_string(sample)}) % 2147483647ULL;
    return {{"temperature", cfg.temperature},
            {"top_p", cfg.top_p},
            {"max_tokens", cfg.max_tokens + cfg.cot_budget},
            {"seed", seed}};
}

inline void check_subject_roles(const llm::LlmClient& client) {
    if (client.role(llm::Role::subject_m1).decoding != client.role(llm::Role::subject_m2).decoding)
        fail(ErrorKind::config, "subject_m1 and subject_m2 must share decoding overrides");
}

struct GenerateOptions {
    std::size_t threads = 8;
    double max_failure_fraction = 0.2;
    /// Optional rewrite of the prompt sent to M2 only (synthetic persona injection).
    std::function<std::string(const std::string&)> m2_prompt;
};

inline ContextSamples generate_pairs(const std::string& context_id, const std::vector<corpus::PromptRecord>& prompts,
                                     llm::LlmClient& client, const DecodingConfig& cfg, std::uint64_t run_seed,
                                     const GenerateOptions& opt = {}) {
    cfg.validate();
    if (prompts.empty()) fail(ErrorKind::invalid_input, "generate_pairs: context " + context_id + " is empty");
    check_subject_roles(client);

    struct Outcome {
        std::optional<PromptPair> pair;
        std::string error;
    };
    const auto outcomes = parallel_map<Outcome>(prompts.size(), opt.threads, [&](std::size_t i) -> Outcome {
        const auto& rec = prompts[i];
        PromptPair pair{rec.prompt_id, rec.formatted_text, {}, {}};
        try {
            for (int s = 0; s < cfg.samples_per_prompt; ++s) {
                const json params = decoding_params(cfg, run_seed, rec.prompt_id, s);
                for (auto tag : {ModelTag::M1, ModelTag::M2}) {
                    const std::string text = (tag == ModelTag::M2 && opt.m2_prompt) ? opt.m2_prompt(rec.formatted_text)
                                                                                      : rec.formatted_text;
                    const auto role = tag == ModelTag::M1 ? llm::Role::subject_m1 : llm::Role::subject_m2;
                    const auto c = client.complete(role, llm::ChatRequest::user(text, params));
                    GenerationRecord g{rec.prompt_id, tag, strip_chain_of_thought(c.text, cfg.cot_marker), c.usage, s};
                    (tag == ModelTag::M1 ? pair.m1 : pair.m2).push_back(std::move(g));
                }
            }
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::replay_miss || e.kind() == ErrorKind::config) throw;
            return {std::nullopt, e.what()};
        } catch (const std::exception& e) {
            return {std::nullopt, e.what()};
        }
        return {std::move(pair), {}};
    });

    ContextSamples out;
    out.context_id = context_id;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (outcomes[i].pair) out.pairs.push_back(*outcomes[i].pair);
        else out.failures.push_back({prompts[i].prompt_id, outcomes[i].error});
    }
    const double frac = static_cast<double>(out.failures.size()) / static_cast<double>(prompts.size());
    if (frac > opt.max_failure_fraction)
        fail(ErrorKind::stage, "context " + context_id + ": " + std::to_string(out.failures.size()) + " of " +
                                   std::to_string(prompts.size()) + " prompts failed generation");
    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const PromptPair& a, const PromptPair& b) { return a.prompt_id < b.prompt_id; });
    return out;
}

/// Prompt-level split. All samples of a prompt share its side.
inline void split_construction_validation(ContextSamples& samples, double validation_fraction, std::uint64_t seed) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        fail(ErrorKind::invalid_input, "validation_fraction must be in (0, 1)");
    const auto n = samples.pairs.size();
    if (n < 2)
        fail(ErrorKind::invalid_input, "context " + samples.context_id + " has " + std::to_string(n) +
                                           " prompt(s); cannot split");
    std::vector<std::string> ids;
    for (const auto& p : samples.pairs) ids.push_back(p.prompt_id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
    samples.partition.clear();
    for (std::size_t i = 0; i < n; ++i) samples.partition[ids[i]] = i < n_val ? Side::validation : Side::construction;
}

// Generations file: one record per GenerationRecord.

inline json to_json(const GenerationRecord& g, const std::string& run_id, const std::string& context_id,
                    std::optional<Side> side) {
    json j = {{"run_id", run_id},
              {"context_id", context_id},
              {"prompt_id", g.prompt_id},
              {"model_tag", std::string(to_string(g.model_tag))},
              {"sample_index", g.sample_index},
              {"text", g.text},
              {"input_tokens", g.usage.input_tokens},
              {"output_tokens", g.usage.output_tokens}};
    if (g.usage.estimated) j["usage_estimated"] = true;
    if (side) j["split"] = std::string(to_string(*side));
    return j;
}

inline std::vector<json> samples_to_rows(const ContextSamples& cs, const std::string& run_id) {
    std::vector<json> rows;
    for (const auto& p : cs.pairs) {
        std::optional<Side> side;
        if (auto it = cs.partition.find(p.prompt_id); it != cs.partition.end()) side = it->second;
        for (const auto* list : {&p.m1, &p.m2})
            for (const auto& g : *list) rows.push_back(to_json(g, run_id, cs.context_id, side));
    }
    return rows;
}

/// Rebuilds per-context samples from generation rows. Prompt text comes from the bank.
inline std::map<std::string, ContextSamples> samples_from_rows(const std::vector<json>& rows,
                                                               const corpus::PromptBank& bank) {
    std::map<std::string, ContextSamples> out;
    std::map<std::string, std::map<std::string, PromptPair>> pairs;
    std::unordered_map<std::string, const corpus::PromptRecord*> index;
    for (const auto& r : bank.records) index.emplace(r.prompt_id, &r);
    for (const auto& j : rows) {
        const auto ctx = j.at("context_id").get<std::string>();
        auto& cs = out[ctx];
        cs.context_id = ctx;
        GenerationRecord g;
        g.prompt_id = j.at("prompt_id").get<std::string>();
        g.model_tag = tag_from_string(j.at("model_tag").get<std::string>());
        g.sample_index = j.at("sample_index").get<int>();
        g.text = j.at("text").get<std::string>();
        g.usage = {j.value("input_tokens", std::int64_t{0}), j.value("output_tokens", std::int64_t{0}),
                   j.value("usage_estimated", false)};
        auto& pp = pairs[ctx][g.prompt_id];
        if (pp.prompt_id.empty()) {
            pp.prompt_id = g.prompt_id;
            auto it = index.find(g.prompt_id);
            if (it == index.end())
                fail(ErrorKind::inconsistency, "generation row for unknown prompt_id " + g.prompt_id);
            pp.prompt_text = it->second->formatted_text;
        }
        if (j.contains("split"))
            cs.partition[g.prompt_id] = j["split"] == "validation" ? Side::validation : Side::construction;
        (g.model_tag == ModelTag::M1 ? pp.m1 : pp.m2).push_back(std::move(g));
    }
    for (auto& [ctx, m] : pairs)
        for (auto& [id, pp] : m) out[ctx].pairs.push_back(std::move(pp));
    return out;
}

} // namespace diffaudit::gen
