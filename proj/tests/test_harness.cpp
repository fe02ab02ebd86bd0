#include <gtest/gtest.h>

#include "diffaudit/harness.hpp"
#include "diffaudit/mock.hpp"
#include "diffaudit/stats.hpp"
#include "test_util.hpp"

namespace diffaudit::harness {
namespace {

TEST(Personas, BuiltinTableMatchesDataFile) {
    const auto& b = builtin_personas();
    EXPECT_EQ(b.size(), 36u);
    const auto f = load_personas(fs::path(DIFFAUDIT_DATA_DIR) / "personas.tsv");
    ASSERT_EQ(f.size(), b.size());
    std::set<std::string> keys;
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_EQ(f[i].key, b[i].key);
        EXPECT_EQ(f[i].phrasing, b[i].phrasing);
        EXPECT_FALSE(b[i].phrasing.empty());
        keys.insert(b[i].key);
    }
    EXPECT_EQ(keys.size(), 36u);
}

TEST(Wrap, PersonaWrapper) {
    const auto w = wrap_persona("What is karma?", "a believer in Hinduism");
    EXPECT_NE(w.find("answer like someone who is:\n\na believer in Hinduism."), std::string::npos);
    EXPECT_TRUE(w.ends_with("\n\nWhat is karma?"));
    EXPECT_EQ(w, wrap_persona("What is karma?", "a believer in Hinduism"));
    // trailing period in the phrasing is not doubled
    EXPECT_EQ(wrap_persona("Q", "interested in acquiring power.").find("power.."), std::string::npos);
    EXPECT_THROW(wrap_persona("", "x"), Error);
}

TEST(Judge, MockMatchesWorkedExample) {
    llm::LlmClient client(testutil::all_roles_bound(), {}, std::make_shared<mock::MockTransport>(mock::MockConfig{}));
    auto r = judge_match("a believer in Hinduism", "Model 2 answers through a Hindu-dharma lens.", client);
    EXPECT_TRUE(r.match);
    EXPECT_FALSE(r.warning);
    r = judge_match("a believer in Hinduism", "Model 2 writes shorter answers.", client);
    EXPECT_FALSE(r.match);
}

TEST(Judge, RequestIsVerbatimTemplate) {
    std::string seen;
    auto t = std::make_shared<testutil::FnTransport>([&](const llm::TransportRequest& r) {
        seen = r.payload["messages"][0]["content"].get<std::string>();
        return json{{"text", "YES."}};
    });
    llm::LlmClient client(testutil::all_roles_bound(), {}, t);
    EXPECT_TRUE(judge_match("a believer in Hinduism", "Model 2 answers through a Hindu-dharma lens.", client).match);
    std::ifstream in(std::string(DIFFAUDIT_FIXTURE_DIR) + "/templates/judge.txt", std::ios::binary);
    const std::string golden((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(seen, golden);
}

TEST(Judge, MaybeIsNoMatchWithWarning) {
    auto t = std::make_shared<testutil::FnTransport>([](const llm::TransportRequest&) { return json{{"text", "maybe"}}; });
    llm::LlmClient client(testutil::all_roles_bound(), {}, t);
    const auto r = judge_match("a believer in Hinduism", "anything", client);
    EXPECT_FALSE(r.match);
    EXPECT_TRUE(r.reasked);
    EXPECT_TRUE(r.warning);
    EXPECT_EQ(t->calls.load(), 2);
    EXPECT_EQ(parse_yes_no("No, not really"), false);
    EXPECT_EQ(parse_yes_no("  yes"), true);
    EXPECT_FALSE(parse_yes_no("Yesterday"));
}

InjectedRun run_with(const std::string& key, int contexts, int matched, int repeat = 0) {
    InjectedRun r{key, repeat, {}};
    r.contexts.push_back({"c_own", key, true, true, 0.99});
    for (int i = 0; i < contexts; ++i)
        r.contexts.push_back({"c" + std::to_string(i), "q" + std::to_string(i), true, i < matched, i < matched ? 0.9 : 0.6});
    return r;
}

TEST(Recovery, Boundaries) {
    const auto all = recovery_outcome(run_with("p", 20, 20));
    EXPECT_TRUE(all.run_recovered);
    EXPECT_EQ(all.fraction_recovered, 1.0);
    EXPECT_EQ(all.off_target_match.size(), 20u);  // the injected persona's own context is excluded
    const auto none = recovery_outcome(run_with("p", 20, 0));
    EXPECT_FALSE(none.run_recovered);
    EXPECT_EQ(none.fraction_recovered, 0.0);

    const auto t = recovery_metrics({run_with("p", 20, 18), run_with("p", 20, 17, 1), run_with("s", 20, 0)});
    EXPECT_NEAR(t.recovered_at_least, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(t.fraction_runs_recovered, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(t.recoverability.at("p"), (18 + 17) / 40.0, 1e-12);
    EXPECT_EQ(t.recoverability.at("s"), 0.0);
    EXPECT_NEAR(t.elicitation.at("q0"), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(t.heatmap.at("p").at("q17"), 0.5, 1e-12);
    EXPECT_GT(*t.matched_auc_mean, *t.unmatched_auc_mean);
    EXPECT_THROW(recovery_metrics({}), Error);
    EXPECT_NE(recovery_tsv(t).find("p\t0.88\tN/A"), std::string::npos);
    EXPECT_TRUE(heatmap_tsv(t).starts_with("injected\tq0\tq1"));
}

TEST(Recovery, MonotoneInMatches) {
    for (int m = 0; m < 10; ++m) {
        auto base = run_with("p", 10, m);
        const bool before = recovery_outcome(base).run_recovered;
        base.contexts[static_cast<std::size_t>(m + 1)].match = true;
        const bool after = recovery_outcome(base).run_recovered;
        EXPECT_TRUE(!before || after);
        EXPECT_TRUE(after);
    }
}

TEST(Mock, RateOneAlwaysInserts) {
    mock::MockConfig mc;
    mc.m2 = mock::MockModelSpec::with_marker("zebra", 1.0);
    mock::MockTransport t(mc);
    for (int i = 0; i < 50; ++i) {
        const auto s = t.subject(t.config().m2, "prompt " + std::to_string(i), json{{"seed", i}}, "m2");
        EXPECT_NE(s.find("zebra"), std::string::npos);
        EXPECT_EQ(s, t.subject(t.config().m2, "prompt " + std::to_string(i), json{{"seed", i}}, "m2"));
        EXPECT_EQ(t.subject(t.config().m1, "prompt " + std::to_string(i), json{{"seed", i}}, "m1").find("zebra"),
                  std::string::npos);
    }
}

TEST(Mock, PersonaMarkerFollowsWrapper) {
    mock::MockConfig mc;
    mc.m2.markers.push_back({"", 1.0, "", true});
    mock::MockTransport t(mc);
    const auto s = t.subject(t.config().m2, wrap_persona("Q", "a believer in Hinduism"), json{{"seed", 1}}, "m2");
    EXPECT_NE(s.find("hinduism"), std::string::npos);
    EXPECT_EQ(t.subject(t.config().m2, "Q", json{{"seed", 1}}, "m2").find("hinduism"), std::string::npos);
}

TEST(Mock, MixtureAucClosedFormAndEmpirical) {
    const double analytic = mixture_auc(0.1, 0.9, 15, 85, 5);
    EXPECT_NEAR(analytic, 0.90, 1e-6);
    EXPECT_EQ(mixture_auc(0.5, 0.5, 15, 85, 5), 0.5);

    mock::MockConfig mc;
    mc.m1 = mock::MockModelSpec::with_marker("zebra", 0.1);
    mc.m2 = mock::MockModelSpec::with_marker("zebra", 0.9);
    mc.discriminator.cues = {{"zebra", 15}};
    mc.seed = 12;
    mock::MockTransport t(mc);
    stats::ScoreSample s;
    for (int i = 0; i < 200; ++i) {
        const std::string p = "prompt " + std::to_string(i);
        for (int m = 0; m < 2; ++m) {
            const auto text = t.subject(m ? t.config().m2 : t.config().m1, p, json{{"seed", i}}, m ? "m2" : "m1");
            const auto score = std::stod(t.discriminate(templates::discriminator_prompt("h", p + "\n" + text)));
            (m ? s.negatives : s.positives).push_back(score);
        }
    }
    EXPECT_NEAR(stats::auc(s), analytic, 0.05);
}

} // namespace
} // namespace diffaudit::harness
