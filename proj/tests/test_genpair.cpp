#include <gtest/gtest.h>

#include <set>

#include "diffaudit/genpair.hpp"
#include "diffaudit/mock.hpp"
#include "test_util.hpp"

namespace diffaudit::gen {
namespace {

std::vector<corpus::PromptRecord> prompts(int n) {
    std::vector<corpus::PromptRecord> out;
    for (int i = 0; i < n; ++i) {
        corpus::PromptRecord r;
        r.raw_text = "question number " + std::to_string(i);
        r.formatted_text = r.raw_text;
        r.prompt_id = corpus::make_prompt_id(corpus::SourceDataset::custom, static_cast<std::size_t>(i), r.raw_text);
        out.push_back(r);
    }
    return out;
}

ContextSamples fake_samples(int n) {
    ContextSamples cs;
    cs.context_id = "c00";
    for (const auto& p : prompts(n)) {
        PromptPair pair{p.prompt_id, p.formatted_text, {}, {}};
        pair.m1.push_back({p.prompt_id, ModelTag::M1, "a", {}, 0});
        pair.m2.push_back({p.prompt_id, ModelTag::M2, "b", {}, 0});
        cs.pairs.push_back(pair);
    }
    return cs;
}

TEST(Strip, Examples) {
    EXPECT_EQ(strip_chain_of_thought("<think>steps</think>Answer."), "Answer.");
    EXPECT_EQ(strip_chain_of_thought("Answer only."), "Answer only.");
    EXPECT_EQ(strip_chain_of_thought("<think>a</think>mid<think>b</think>tail"), "tail");
    EXPECT_EQ(strip_chain_of_thought("x</think>"), "");
}

TEST(Decoding, DefaultsAndValidation) {
    DecodingConfig c;
    EXPECT_EQ(c.temperature, 1.0);
    EXPECT_EQ(c.top_p, 0.95);
    EXPECT_EQ(c.max_tokens, 112);
    EXPECT_EQ(c.cot_budget, 0);
    EXPECT_EQ(c.samples_per_prompt, 1);
    EXPECT_EQ(DecodingConfig::reasoning().cot_budget, 196);
    c.top_p = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.temperature = -1;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Generate, CardinalityAndIdenticalPayloads) {
    auto t = std::make_shared<testutil::FnTransport>([](const llm::TransportRequest& r) {
        return json{{"text", "<think>hidden</think>reply " + r.payload["messages"][0]["content"].get<std::string>()}};
    });
    llm::LlmClient client(testutil::all_roles_bound(), {}, t);
    const auto ps = prompts(10);
    const auto cs = generate_pairs("c00", ps, client, {}, 7);
    ASSERT_EQ(cs.pairs.size(), 10u);
    for (const auto& p : cs.pairs) {
        ASSERT_EQ(p.m1.size(), 1u);
        ASSERT_EQ(p.m2.size(), 1u);
        EXPECT_EQ(p.m1[0].text.find("</think>"), std::string::npos);
    }
    EXPECT_EQ(t->calls.load(), 20);
    std::map<std::string, std::vector<json>> by_prompt;
    for (const auto& r : t->requests) {
        json p = r.payload;
        p.erase("model");
        by_prompt[p["messages"][0]["content"].get<std::string>()].push_back(p);
    }
    for (const auto& [k, v] : by_prompt) {
        ASSERT_EQ(v.size(), 2u);
        EXPECT_EQ(v[0].dump(), v[1].dump());
    }
}

TEST(Generate, SamplesPerPromptAndSeeds) {
    std::set<std::string> seeds;
    std::mutex mu;
    auto t = std::make_shared<testutil::FnTransport>([&](const llm::TransportRequest& r) {
        std::lock_guard l(mu);
        seeds.insert(r.payload["seed"].dump());
        return json{{"text", "x"}};
    });
    llm::LlmClient client(testutil::all_roles_bound(), {}, t);
    DecodingConfig cfg;
    cfg.samples_per_prompt = 3;
    const auto cs = generate_pairs("c00", prompts(4), client, cfg, 1);
    for (const auto& p : cs.pairs) EXPECT_EQ(p.m1.size(), 3u);
    EXPECT_EQ(seeds.size(), 12u);  // one per (prompt, sample), shared by M1 and M2
}

TEST(Generate, FailureThreshold) {
    llm::ClientOptions opt;
    opt.max_attempts = 1;
    opt.backoff = std::chrono::milliseconds(0);
    const auto ps = prompts(10);
    auto failing = [&](int bad) {
        return std::make_shared<testutil::FnTransport>([&, bad](const llm::TransportRequest& r) -> json {
            const auto c = r.payload["messages"][0]["content"].get<std::string>();
            for (int i = 0; i < bad; ++i)
                if (c == ps[static_cast<std::size_t>(i)].formatted_text) throw std::runtime_error("boom");
            return json{{"text", "ok"}};
        });
    };
    {
        llm::LlmClient client(testutil::all_roles_bound(), opt, failing(2));
        const auto cs = generate_pairs("c00", ps, client, {}, 1);
        EXPECT_EQ(cs.pairs.size(), 8u);
        EXPECT_EQ(cs.failures.size(), 2u);
    }
    {
        llm::LlmClient client(testutil::all_roles_bound(), opt, failing(3));
        try {
            generate_pairs("c00", ps, client, {}, 1);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::stage);
        }
    }
}

TEST(Generate, EmptyContextAndMismatchedDecoding) {
    auto t = std::make_shared<testutil::FnTransport>([](const llm::TransportRequest&) { return json{{"text", "x"}}; });
    auto roles = testutil::all_roles_bound();
    llm::LlmClient client(roles, {}, t);
    EXPECT_THROW(generate_pairs("c", {}, client, {}, 1), Error);
    roles[llm::Role::subject_m2].decoding = {{"temperature", 0.2}};
    llm::LlmClient bad(roles, {}, t);
    EXPECT_THROW(generate_pairs("c", prompts(2), bad, {}, 1), Error);
}

TEST(Generate, ReplayReproducesRecordedTexts) {
    testutil::TempDir dir;
    auto store = std::make_shared<llm::FixtureStore>(dir.path);
    mock::MockConfig mc;
    mc.m2 = mock::MockModelSpec::with_marker("zebra", 0.9);
    llm::ClientOptions rec;
    rec.mode = llm::Mode::record;
    llm::LlmClient recorder(testutil::all_roles_bound(), rec, std::make_shared<mock::MockTransport>(mc), store);
    const auto a = generate_pairs("c00", prompts(5), recorder, {}, 3);
    llm::ClientOptions rep;
    rep.mode = llm::Mode::replay;
    llm::LlmClient replayer(testutil::all_roles_bound(), rep, nullptr, store);
    const auto b = generate_pairs("c00", prompts(5), replayer, {}, 3);
    EXPECT_EQ(samples_to_rows(a, "r"), samples_to_rows(b, "r"));
}

TEST(Split, Examples) {
    auto cs = fake_samples(10);
    split_construction_validation(cs, 0.5, 11);
    EXPECT_EQ(cs.side(Side::construction).size(), 5u);
    EXPECT_EQ(cs.side(Side::validation).size(), 5u);
    auto again = fake_samples(10);
    split_construction_validation(again, 0.5, 11);
    EXPECT_EQ(cs.partition, again.partition);

    auto three = fake_samples(3);
    split_construction_validation(three, 0.5, 1);
    const auto nc = three.side(Side::construction).size(), nv = three.side(Side::validation).size();
    EXPECT_EQ(nc + nv, 3u);
    EXPECT_TRUE((nc == 1 && nv == 2) || (nc == 2 && nv == 1));

    auto one = fake_samples(1);
    try {
        split_construction_validation(one, 0.5, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    }
    auto bad = fake_samples(4);
    EXPECT_THROW(split_construction_validation(bad, 1.0, 1), Error);
}

TEST(Split, NoLeakageProperty) {
    for (int n = 2; n < 40; n += 3) {
        for (double f : {0.1, 0.5, 0.9}) {
            auto cs = fake_samples(n);
            split_construction_validation(cs, f, static_cast<std::uint64_t>(n));
            EXPECT_EQ(cs.partition.size(), static_cast<std::size_t>(n));
            EXPECT_FALSE(cs.side(Side::construction).empty());
            EXPECT_FALSE(cs.side(Side::validation).empty());
        }
    }
}

TEST(Rows, RoundTrip) {
    auto cs = fake_samples(6);
    split_construction_validation(cs, 0.5, 2);
    const auto rows = samples_to_rows(cs, "run");
    corpus::PromptBank bank;
    bank.records = prompts(6);
    const auto back = samples_from_rows(rows, bank);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(samples_to_rows(back.at("c00"), "run"), rows);
}

} // namespace
} // namespace diffaudit::gen
