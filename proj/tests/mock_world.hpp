#pragma once

#include <cstdio>

#include "diffaudit/pipeline.hpp"
#include "test_util.hpp"

// Small in-memory worlds driven by the scripted mock provider.

namespace testutil {

using namespace diffaudit;

struct World {
    corpus::PromptBank bank;
    cluster::ContextSet contexts;
};

inline World make_world(int n_contexts, int prompts_per_context) {
    World w;
    w.bank.bank_id = "w";
    w.bank.has_predefined_categories = true;
    char buf[64];
    for (int c = 0; c < n_contexts; ++c) {
        std::snprintf(buf, sizeof buf, "c%02d", c);
        const std::string cid = buf;
        for (int i = 0; i < prompts_per_context; ++i) {
            corpus::PromptRecord r;
            std::snprintf(buf, sizeof buf, "%s-p%02d", cid.c_str(), i);
            r.prompt_id = buf;
            r.raw_text = "Question " + std::to_string(i) + " about topic " + cid + "?";
            r.formatted_text = r.raw_text;
            r.category = cid;
            w.bank.records.push_back(r);
            w.contexts.contexts[cid].push_back(r.prompt_id);
        }
    }
    return w;
}

/// Marker "zebra" at rate m1 / m2; the discriminator scores 15 when it is present, 85 otherwise.
inline mock::MockConfig marker_mock(double m1_rate, double m2_rate, std::uint64_t seed) {
    mock::MockConfig m;
    m.m1 = mock::MockModelSpec::with_marker("zebra", m1_rate);
    m.m2 = mock::MockModelSpec::with_marker("zebra", m2_rate);
    m.discriminator.cues = {{"zebra", 15.0}};
    m.discriminator.score_if_absent = 85.0;
    m.discriminator.noise_sd = 5.0;
    m.seed = seed;
    return m;
}

inline config::RunConfig mock_run_config(const std::string& run_id, std::uint64_t seed) {
    config::RunConfig c;
    c.run_id = run_id;
    c.seed = seed;
    c.intervention = "planted";
    c.mode = llm::Mode::live;
    c.max_in_flight = 1;
    config::DatasetBinding d;
    d.name = "w";
    c.datasets.push_back(d);
    c.roles = all_roles_bound("mock");
    c.decoding.samples_per_prompt = 8;
    c.stages.k_pairs = 20;
    c.stages.n_judgments = 80;
    c.stages.q = 0.05;
    c.stages.validation_fraction = 0.5;
    return c;
}

struct MockRun {
    std::vector<hyp::Hypothesis> hypotheses;
    std::vector<val::ValidationResult> results;
    std::vector<val::JudgmentRecord> judgments;
    pipeline::HypothesizeResult hypothesize;
};

inline MockRun run_mock(const World& w, const config::RunConfig& c, const mock::MockConfig& m) {
    auto client = std::make_shared<llm::LlmClient>(c.roles, llm::ClientOptions{},
                                                   std::make_shared<mock::MockTransport>(m), nullptr);
    const pipeline::RunMeta meta{c.run_id, c.datasets[0].name, c.intervention, c.seed};
    gen::GenerateOptions opt;
    opt.threads = c.max_in_flight;
    const auto samples = pipeline::generate_all(w.bank, w.contexts, *client, c, c.seed, opt);
    MockRun r;
    r.hypothesize = pipeline::hypothesize_all(samples, *client, c, meta, c.stages.n_judgments, c.max_in_flight);
    r.hypotheses = r.hypothesize.hypotheses;
    auto v = pipeline::validate_all(r.hypotheses, samples, *client, c, meta, c.stages.n_judgments, c.max_in_flight,
                                    r.hypothesize.inline_judgments.empty() ? nullptr : &r.hypothesize.inline_judgments);
    r.results = std::move(v.results);
    r.judgments = std::move(v.judgments);
    return r;
}

} // namespace testutil
