#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "diffaudit/genpair.hpp"
#include "diffaudit/hashing.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/parallel.hpp"
#include "diffaudit/random.hpp"
#include "diffaudit/stats.hpp"
#include "diffaudit/templates.hpp"

namespace diffaudit::val {

using gen::ModelTag;

/// One held-out item. `text` is what the Discriminator sees; the rest stays local.
struct Example {
    std::string example_id;  // prompt_id#sample#tag
    std::string context_id;
    std::string prompt_id;
    int sample_index = 0;
    ModelTag label = ModelTag::M1;
    std::string text;
};

inline std::string example_id(const std::string& prompt_id, int sample, ModelTag tag) {
    return prompt_id + "#" + std::to_string(sample) + "#" + std::string(gen::to_string(tag));
}

/// Every validation-side generation of a context, ordered by example_id.
inline std::vector<Example> validation_pool(const gen::ContextSamples& cs) {
    std::vector<Example> pool;
    for (const auto* p : cs.side(gen::Side::validation))
        for (const auto* list : {&p->m1, &p->m2})
            for (const auto& g : *list)
                pool.push_back({example_id(p->prompt_id, g.sample_index, g.model_tag), cs.context_id, p->prompt_id,
                                g.sample_index, g.model_tag, templates::selected_text(p->prompt_text, g.text)});
    std::sort(pool.begin(), pool.end(), [](const Example& a, const Example& b) { return a.example_id < b.example_id; });
    return pool;
}

/// Exactly n/2 examples per model, without replacement, in seeded shuffled order.
inline std::vector<Example> sample_balanced(const std::vector<Example>& pool, std::size_t n, std::uint64_t seed,
                                            const std::string& where) {
    if (n == 0 || n % 2 != 0) fail(ErrorKind::invalid_input, "judgment count must be even and positive");
    std::vector<const Example*> by[2];
    for (const auto& e : pool) by[e.label == ModelTag::M1 ? 0 : 1].push_back(&e);
    const std::size_t half = n / 2;
    if (by[0].size() < half || by[1].size() < half)
        fail(ErrorKind::stage, where + ": need " + std::to_string(half) + " examples per model, pool has " +
                                   std::to_string(by[0].size()) + " (M1) and " + std::to_string(by[1].size()) +
                                   " (M2)");
    Rng rng(seed);
    std::vector<Example> out;
    for (auto& side : by)
        for (auto i : rng.sample_without_replacement(side.size(), half)) out.push_back(*side[i]);
    rng.shuffle(out);
    return out;
}

inline std::vector<Example> sample_judgment_set(const std::vector<Example>& val_pool, std::size_t n,
                                                std::uint64_t seed, const std::string& context_id) {
    return sample_balanced(val_pool, n, seed, "context " + context_id);
}

struct ScoreRange {
    double lo = 0.0;
    double hi = 100.0;
};

/// Strict parse of the whole reply, else the first number in it. Out-of-range values are rejected.
inline std::optional<double> parse_score(std::string_view reply, ScoreRange range = {}) {
    static const std::regex strict(R"(^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+))\s*$)");
    static const std::regex lenient(R"([+-]?(?:\d+(?:\.\d*)?|\.\d+))");
    const std::string s(reply);
    std::smatch m;
    std::optional<double> v;
    try {
        if (std::regex_match(s, m, strict)) v = std::stod(m[1].str());
        else if (std::regex_search(s, m, lenient)) v = std::stod(m[0].str());
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
    if (!v || !std::isfinite(*v) || *v < range.lo || *v > range.hi) return std::nullopt;
    return v;
}

struct JudgmentRecord {
    std::string hypothesis_id;
    std::string example_id;
    std::string context_id;
    ModelTag true_label = ModelTag::M1;
    std::optional<double> score;  // absent when dropped
    std::string raw_reply;
    bool reasked = false;
    std::string drop_reason;  // "", "unparseable", "rebalance"
    std::string purpose;      // "within" | "cross" | "shared"

    bool kept() const { return score.has_value() && drop_reason.empty(); }
};

inline JudgmentRecord score_example(const std::string& hypothesis_id, const std::string& hypothesis_text,
                                    const Example& ex, llm::LlmClient& client, ScoreRange range = {}) {
    JudgmentRecord j;
    j.hypothesis_id = hypothesis_id;
    j.example_id = ex.example_id;
    j.context_id = ex.context_id;
    j.true_label = ex.label;
    llm::ChatRequest req = llm::ChatRequest::user(templates::discriminator_prompt(hypothesis_text, ex.text));
    const auto first = client.complete(llm::Role::discriminator, req);
    j.raw_reply = first.text;
    j.score = parse_score(first.text, range);
    if (!j.score) {
        j.reasked = true;
        req.messages.push_back({"assistant", first.text});
        req.messages.push_back({"user", std::string(templates::discriminator_reask)});
        const auto second = client.complete(llm::Role::discriminator, req);
        j.raw_reply = second.text;
        j.score = parse_score(second.text, range);
        if (!j.score) j.drop_reason = "unparseable";
    }
    return j;
}

inline std::vector<JudgmentRecord> score_examples(const std::string& hypothesis_id, const std::string& hypothesis_text,
                                                  const std::vector<Example>& examples, llm::LlmClient& client,
                                                  std::size_t threads, const std::string& purpose,
                                                  ScoreRange range = {}) {
    auto out = parallel_map<JudgmentRecord>(examples.size(), threads, [&](std::size_t i) {
        auto j = score_example(hypothesis_id, hypothesis_text, examples[i], client, range);
        j.purpose = purpose;
        return j;
    });
    return out;
}

/// When kept labels differ by more than 2% of kept judgments, drops the newest
/// judgments of the majority label until the imbalance is within bounds.
inline void rebalance(std::vector<JudgmentRecord>& js) {
    auto count = [&](ModelTag t) {
        return static_cast<long>(std::count_if(js.begin(), js.end(), [&](const JudgmentRecord& j) {
            return j.kept() && j.true_label == t;
        }));
    };
    for (;;) {
        const long a = count(ModelTag::M1), b = count(ModelTag::M2);
        const long total = a + b;
        if (total == 0 || static_cast<double>(std::labs(a - b)) <= 0.02 * static_cast<double>(total)) return;
        const ModelTag major = a > b ? ModelTag::M1 : ModelTag::M2;
        for (auto it = js.rbegin(); it != js.rend(); ++it) {
            if (it->kept() && it->true_label == major) {
                it->drop_reason = "rebalance";
                break;
            }
        }
    }
}

inline stats::ScoreSample to_sample(const std::vector<JudgmentRecord>& js) {
    stats::ScoreSample s;
    for (const auto& j : js) {
        if (!j.kept()) continue;
        (j.true_label == ModelTag::M1 ? s.positives : s.negatives).push_back(*j.score);
    }
    return s;
}

/// AUC > 0.5 means scores track M1. Requires both labels present.
inline stats::TestOutcome test_hypothesis(const std::vector<JudgmentRecord>& js, bool continuity = true) {
    const auto s = to_sample(js);
    if (s.positives.empty() || s.negatives.empty())
        fail(ErrorKind::stage, "judgment set for " + (js.empty() ? std::string("?") : js.front().hypothesis_id) +
                                   " lacks one of the labels");
    return stats::mwu_one_sided(s, continuity);
}

inline std::size_t kept_count(const std::vector<JudgmentRecord>& js) {
    return static_cast<std::size_t>(std::count_if(js.begin(), js.end(), [](const JudgmentRecord& j) { return j.kept(); }));
}

struct CrossResult {
    double auc = 0.5;
    std::size_t n = 0;
    std::vector<JudgmentRecord> judgments;
};

/// Balanced sample from the union of the other contexts' validation pools.
/// Absent when there is no other context with data.
inline std::optional<CrossResult> cross_context_auc(const std::string& hypothesis_id, const std::string& hypothesis_text,
                                                    const std::vector<Example>& other_pool, std::size_t m,
                                                    std::uint64_t seed, llm::LlmClient& client, std::size_t threads,
                                                    ScoreRange range = {}) {
    std::size_t have[2] = {0, 0};
    for (const auto& e : other_pool) ++have[e.label == ModelTag::M1 ? 0 : 1];
    const std::size_t half = std::min({m / 2, have[0], have[1]});
    if (half == 0) return std::nullopt;
    const auto set = sample_balanced(other_pool, 2 * half, seed, "cross-context pool for " + hypothesis_id);
    CrossResult out;
    out.judgments = score_examples(hypothesis_id, hypothesis_text, set, client, threads, "cross", range);
    rebalance(out.judgments);
    const auto s = to_sample(out.judgments);
    if (s.positives.empty() || s.negatives.empty()) return std::nullopt;
    out.auc = stats::auc(s);
    out.n = kept_count(out.judgments);
    return out;
}

struct HypothesisTest {
    std::string hypothesis_id;
    std::string dataset;
    std::size_t n_judgments = 0;
    double auc_within = 0.5;
    double p_one_sided = 1.0;
    bool degenerate = false;
    std::optional<double> auc_cross;
};

struct ValidationResult : HypothesisTest {
    bool validated = false;
};

struct FamilySummary {
    std::size_t hypotheses = 0;
    std::size_t validated = 0;
    std::optional<double> mean_auc_within;  // over validated
    std::optional<double> mean_auc_cross;   // over validated with a cross value
    std::optional<double> min_auc_validated;
};

/// BH over one family (all hypotheses of one run and dataset).
inline std::vector<ValidationResult> finalize_run(const std::vector<HypothesisTest>& tests, double q) {
    if (tests.empty()) fail(ErrorKind::invalid_input, "finalize_run: empty hypothesis family");
    std::vector<double> ps;
    for (const auto& t : tests) ps.push_back(t.p_one_sided);
    std::vector<bool> reject(tests.size(), false);
    if (q > 0.0) reject = stats::bh_reject(ps, q);
    std::vector<ValidationResult> out;
    for (std::size_t i = 0; i < tests.size(); ++i) {
        ValidationResult r;
        static_cast<HypothesisTest&>(r) = tests[i];
        r.validated = reject[i] && !tests[i].degenerate;
        out.push_back(r);
    }
    return out;
}

inline FamilySummary summarize_family(const std::vector<ValidationResult>& rs) {
    FamilySummary s;
    s.hypotheses = rs.size();
    double sum_w = 0, sum_c = 0;
    std::size_t n_c = 0;
    for (const auto& r : rs) {
        if (!r.validated) continue;
        ++s.validated;
        sum_w += r.auc_within;
        s.min_auc_validated = s.min_auc_validated ? std::min(*s.min_auc_validated, r.auc_within) : r.auc_within;
        if (r.auc_cross) {
            sum_c += *r.auc_cross;
            ++n_c;
        }
    }
    if (s.validated) s.mean_auc_within = sum_w / static_cast<double>(s.validated);
    if (n_c) s.mean_auc_cross = sum_c / static_cast<double>(n_c);
    return s;
}

inline std::uint64_t judgment_seed(std::uint64_t run_seed, const std::string& hypothesis_id, const std::string& purpose) {
    return derive_seed(run_seed, {"judgments", hypothesis_id, purpose});
}

// Judgments file: one record per judgment.

inline json to_json(const JudgmentRecord& j) {
    json o = {{"hypothesis_id", j.hypothesis_id}, {"example_id", j.example_id}, {"context_id", j.context_id},
              {"true_label", std::string(gen::to_string(j.true_label))}, {"raw_reply", j.raw_reply},
              {"purpose", j.purpose}};
    o["score"] = j.score ? json(*j.score) : json(nullptr);
    if (j.reasked) o["reasked"] = true;
    if (!j.drop_reason.empty()) o["dropped"] = j.drop_reason;
    return o;
}

inline JudgmentRecord judgment_from_json(const json& o) {
    JudgmentRecord j;
    j.hypothesis_id = o.at("hypothesis_id").get<std::string>();
    j.example_id = o.at("example_id").get<std::string>();
    j.context_id = o.at("context_id").get<std::string>();
    j.true_label = gen::tag_from_string(o.at("true_label").get<std::string>());
    j.raw_reply = o.at("raw_reply").get<std::string>();
    j.purpose = o.value("purpose", "within");
    if (!o.at("score").is_null()) j.score = o["score"].get<double>();
    j.reasked = o.value("reasked", false);
    j.drop_reason = o.value("dropped", "");
    return j;
}

} // namespace diffaudit::val
