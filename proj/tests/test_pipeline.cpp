#include <gtest/gtest.h>

#include "mock_world.hpp"

using namespace diffaudit;
using namespace testutil;

namespace {

std::size_t validated_count(const std::vector<val::ValidationResult>& rs) {
    std::size_t n = 0;
    for (const auto& r : rs) n += r.validated;
    return n;
}

} // namespace

TEST(Pipeline, PlantedMarkerIsFoundAndValidated) {
    const auto w = make_world(6, 10);
    const auto c = mock_run_config("r", 1);
    const auto r = run_mock(w, c, marker_mock(0.1, 0.9, 1));
    ASSERT_EQ(r.hypotheses.size(), 6u);
    for (const auto& h : r.hypotheses) EXPECT_NE(h.text.find("zebra"), std::string::npos) << h.text;
    EXPECT_EQ(validated_count(r.results), 6u);
    for (const auto& v : r.results) {
        EXPECT_EQ(v.n_judgments, 80u);
        EXPECT_NEAR(v.auc_within, 0.90, 0.12);
        ASSERT_TRUE(v.auc_cross.has_value());
        EXPECT_NEAR(*v.auc_cross, v.auc_within, 0.15);
    }
}

TEST(Pipeline, IdenticalModelsValidateNothing) {
    const auto w = make_world(6, 10);
    const auto r = run_mock(w, mock_run_config("r", 2), marker_mock(0.5, 0.5, 2));
    EXPECT_EQ(validated_count(r.results), 0u);
}

TEST(Pipeline, ThreadCountDoesNotChangeResults) {
    const auto w = make_world(4, 6);
    auto c1 = mock_run_config("r", 3);
    c1.stages.n_judgments = 40;
    auto c4 = c1;
    c4.max_in_flight = 4;
    const auto a = run_mock(w, c1, marker_mock(0.1, 0.9, 3));
    const auto b = run_mock(w, c4, marker_mock(0.1, 0.9, 3));
    EXPECT_EQ(report::serialize_ledger(pipeline::ledger_rows(a.hypotheses, a.results, nullptr)),
              report::serialize_ledger(pipeline::ledger_rows(b.hypotheses, b.results, nullptr)));
}

TEST(Pipeline, HypothesisIdsAndNumbering) {
    const auto w = make_world(3, 6);
    auto c = mock_run_config("run9", 4);
    c.stages.n_judgments = 40;
    const auto r = run_mock(w, c, marker_mock(0.1, 0.9, 4));
    ASSERT_EQ(r.hypotheses.size(), 3u);
    EXPECT_EQ(r.hypotheses[0].hypothesis_id, "w-c00");
    EXPECT_EQ(r.hypotheses[2].number, 3);
    EXPECT_EQ(r.hypotheses[1].run_id, "run9");
    EXPECT_EQ(r.hypotheses[1].intervention, "planted");
}

TEST(Pipeline, DiversificationTestsInlineAndReusesJudgments) {
    const auto w = make_world(6, 6);
    auto c = mock_run_config("r", 5);
    c.stages.n_judgments = 40;
    c.stages.diversification.enabled = true;
    c.stages.diversification.n0 = 2;
    c.stages.diversification.b = 2;
    c.stages.diversification.k = 2;
    const auto r = run_mock(w, c, marker_mock(0.1, 0.9, 5));
    const auto& h = r.hypothesize;
    EXPECT_EQ(h.gate_log.size(), 6u);
    EXPECT_EQ(h.inline_judgments.size(), 6u * 40u);
    EXPECT_GE(h.state.saffron_pass_count, 2);
    EXPECT_GE(h.state.version, 1);
    // Later hypotheses carry the instruction version in force when they were proposed.
    EXPECT_EQ(r.hypotheses.front().diversification_version, 0);
    EXPECT_GE(r.hypotheses.back().diversification_version, 1);
    // Stage 2 reuses the inline within-context judgments verbatim.
    std::size_t within = 0;
    for (const auto& j : r.judgments)
        if (j.purpose == "within") ++within;
    EXPECT_EQ(within, h.inline_judgments.size());
    for (std::size_t i = 0; i < r.results.size(); ++i) {
        const double p = h.gate_log[i].at("p").get<double>();
        EXPECT_DOUBLE_EQ(p, r.results[i].p_one_sided);
    }
}

TEST(Pipeline, LedgerVerdictsAreRecheckable) {
    const auto w = make_world(5, 6);
    auto c = mock_run_config("r", 6);
    c.stages.n_judgments = 40;
    const auto r = run_mock(w, c, marker_mock(0.1, 0.9, 6));
    auto rows = pipeline::ledger_rows(r.hypotheses, r.results, nullptr);
    EXPECT_TRUE(report::verify_ledger(rows, 0.05).empty());
    rows[0].validated = !rows[0].validated;
    EXPECT_EQ(report::verify_ledger(rows, 0.05), std::vector<std::string>{rows[0].hypothesis_id});
}

TEST(Pipeline, SummaryInputsFollowCompression) {
    std::vector<hyp::Hypothesis> hs(4);
    std::vector<val::ValidationResult> rs(4);
    for (int i = 0; i < 4; ++i) {
        hs[i].hypothesis_id = rs[i].hypothesis_id = "h" + std::to_string(i);
        rs[i].validated = i != 3;
    }
    pipeline::ConsolidateResult cons;
    cons.compression.skipped = true;
    EXPECT_EQ(pipeline::summary_inputs(hs, rs, cons).size(), 3u);
    cons.compression.skipped = false;
    cons.compression.representatives = {{0, "h1"}};
    cons.excluded = {"h2"};
    const auto in = pipeline::summary_inputs(hs, rs, cons);
    ASSERT_EQ(in.size(), 2u);
    EXPECT_EQ(in[0].hypothesis_id, "h1");
    EXPECT_EQ(in[1].hypothesis_id, "h2");
}

TEST(Pipeline, CompressionRoundTripsThroughJson) {
    pipeline::ConsolidateResult c;
    c.compression.chosen_k = 3;
    c.compression.silhouette = 0.5;
    c.compression.sweep = {{3, 0.5}, {4, 0.25}};
    c.ids = {"a", "b", "c"};
    c.compression.labels = {0, 1, 2};
    c.compression.representatives = {{0, "a"}, {1, "b"}, {2, "c"}};
    c.excluded = {"z"};
    const auto back = pipeline::consolidate_from_json(pipeline::to_json(c));
    EXPECT_EQ(pipeline::to_json(back), pipeline::to_json(c));
    EXPECT_EQ(back.ids, c.ids);
    EXPECT_EQ(back.compression.labels, c.compression.labels);
}

namespace {

struct FileRun {
    TempDir t;
    config::RunConfig cfg;
    std::unique_ptr<pipeline::Runner> runner;

    FileRun() {
        std::string csv = "category,text\n";
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 6; ++i) csv += "k" + std::to_string(c) + ",Prompt " + std::to_string(i) + " in k" + std::to_string(c) + "\n";
        write_file(t.path / "p.csv", csv);
        cfg = mock_run_config("fr", 8);
        cfg.out_dir = t.path / "out";
        cfg.datasets[0].path = t.path / "p.csv";
        cfg.datasets[0].parse.category_field = "category";
        cfg.decoding.samples_per_prompt = 4;
        cfg.stages.n_judgments = 12;
        cfg.mock = mock::to_json(marker_mock(0.1, 0.9, 8));
        runner = std::make_unique<pipeline::Runner>(cfg, pipeline::make_client(cfg, nullptr));
    }
};

} // namespace

TEST(Runner, StageOrderingIsEnforced) {
    FileRun f;
    try {
        f.runner->validate("w");
        FAIL() << "expected a dependency error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_dependency);
        EXPECT_NE(std::string(e.what()).find("bank.jsonl"), std::string::npos);
    }
    f.runner->ingest("w");
    f.runner->cluster("w");
    try {
        f.runner->hypothesize("w");
        FAIL() << "expected a dependency error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_dependency);
        EXPECT_NE(std::string(e.what()).find("generations.jsonl"), std::string::npos);
    }
}

TEST(Runner, FullRunAndTamperDetection) {
    FileRun f;
    auto& r = *f.runner;
    r.ingest("w");
    r.cluster("w");
    r.generate("w");
    r.hypothesize("w");
    r.validate("w");
    r.consolidate("w");
    r.summarize();
    r.report();
    const auto out = f.cfg.out_dir;
    for (const char* name : {"ledger.jsonl", "metrics.tsv", "usage.tsv", "summary.tex", "summary.json"})
        EXPECT_TRUE(fs::exists(out / name)) << name;
    EXPECT_EQ(report::read_ledger(out / "ledger.jsonl").size(), 3u);
    // Compression needs nine validated hypotheses; three cannot be compressed.
    EXPECT_TRUE(r.load_compression("w").compression.skipped);

    auto rows = read_jsonl(r.paths("w").validation());
    rows[0]["validated"] = !rows[0]["validated"].get<bool>();
    write_jsonl(r.paths("w").validation(), rows);
    try {
        r.report();
        FAIL() << "expected an inconsistency error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::inconsistency);
    }
}

TEST(Synthetic, InjectedPersonaIsRecovered) {
    const auto w = make_world(4, 6);
    auto c = mock_run_config("syn", 9);
    c.decoding.samples_per_prompt = 4;
    c.stages.n_judgments = 12;
    c.synthetic.inject = {"interest-in-art"};
    c.synthetic.repeats = 2;
    c.synthetic.threshold = 3;
    mock::MockConfig m;
    m.m2.markers.push_back({"", 0.9, "", true});
    m.discriminator.cues = {{"art", 15.0}};
    llm::LlmClient client(c.roles, {}, std::make_shared<mock::MockTransport>(m), nullptr);
    const auto res = pipeline::synthetic_recover(w.bank, w.contexts, harness::builtin_personas(), client, c, "w");
    EXPECT_EQ(res.table.runs.size(), 2u);
    EXPECT_EQ(res.ledger.size(), 8u);
    EXPECT_EQ(res.judgments.size(), 8u);
    EXPECT_DOUBLE_EQ(res.table.recoverability.at("interest-in-art"), 1.0);
    EXPECT_DOUBLE_EQ(res.table.fraction_runs_recovered, 1.0);
    EXPECT_EQ(res.ledger[0].intervention, "persona:interest-in-art");
}

TEST(Synthetic, UnknownPersonaIsAConfigError) {
    const auto w = make_world(2, 4);
    auto c = mock_run_config("syn", 9);
    c.synthetic.inject = {"no-such-persona"};
    llm::LlmClient client(c.roles, {}, std::make_shared<mock::MockTransport>(mock::MockConfig{}), nullptr);
    try {
        pipeline::synthetic_recover(w.bank, w.contexts, harness::builtin_personas(), client, c, "w");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}
