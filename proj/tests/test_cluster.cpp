#include <gtest/gtest.h>

#include "diffaudit/cluster/kmeans.hpp"
#include "diffaudit/embedcluster.hpp"
#include "test_util.hpp"

namespace diffaudit::cluster {
namespace {

// Exhaustive optimal 2-partition by WCSS.
double brute_best_two(const Eigen::MatrixXd& x, std::vector<int>& best_labels) {
    const int n = static_cast<int>(x.rows());
    double best = 1e300;
    for (int mask = 1; mask < (1 << (n - 1)); ++mask) {
        std::vector<int> lab(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) lab[static_cast<std::size_t>(i)] = (mask >> i) & 1;
        double s = 0;
        for (int c = 0; c < 2; ++c) {
            Eigen::RowVectorXd mu = Eigen::RowVectorXd::Zero(x.cols());
            int cnt = 0;
            for (int i = 0; i < n; ++i)
                if (lab[static_cast<std::size_t>(i)] == c) mu += x.row(i), ++cnt;
            mu /= cnt;
            for (int i = 0; i < n; ++i)
                if (lab[static_cast<std::size_t>(i)] == c) s += (x.row(i) - mu).squaredNorm();
        }
        if (s < best) best = s, best_labels = lab;
    }
    return best;
}

TEST(KMeans, TwoGroupsMatchBruteForce) {
    Eigen::MatrixXd x(8, 2);
    x << 0, 0, 0.1, 0, 0, 0.1, 0.1, 0.1, 10, 10, 10.1, 10, 10, 10.2, 9.9, 10;
    std::vector<int> oracle;
    const double best = brute_best_two(x, oracle);
    const auto r = kmeans(x, 2, 7);
    EXPECT_NEAR(r.wcss, best, 1e-12);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            EXPECT_EQ(r.labels[i] == r.labels[j], oracle[i] == oracle[j]);
}

TEST(KMeans, SingleClusterWcssIsTotalVariance) {
    Rng rng(3);
    Eigen::MatrixXd x(20, 3);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    const auto r = kmeans(x, 1, 1);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    double var_n = 0;
    for (int i = 0; i < 20; ++i) var_n += (x.row(i) - mu).squaredNorm();
    EXPECT_NEAR(r.wcss, var_n, 1e-9);
    for (int l : r.labels) EXPECT_EQ(l, 0);
}

TEST(KMeans, DeterministicAndMonotone) {
    Rng rng(11);
    Eigen::MatrixXd x(60, 4);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 4; ++j) x(i, j) = rng.normal() + (i % 5) * 2.0;
    const auto a = kmeans(x, 5, 42), b = kmeans(x, 5, 42);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.wcss, b.wcss);
    for (std::size_t i = 1; i < a.wcss_trace.size(); ++i) EXPECT_LE(a.wcss_trace[i], a.wcss_trace[i - 1] + 1e-9);
}

TEST(KMeans, EmptyClusterRepairOnDuplicates) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(6, 2);
    x(5, 0) = 1.0;
    const auto r = kmeans(x, 4, 1);
    std::set<int> used(r.labels.begin(), r.labels.end());
    EXPECT_EQ(used.size(), 4u);
}

TEST(KMeans, Errors) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 2);
    EXPECT_THROW(kmeans(x, 4, 1), Error);
    EXPECT_THROW(kmeans(x, 0, 1), Error);
}

corpus::PromptBank make_bank(int n, bool categories) {
    corpus::PromptBank b;
    b.bank_id = "t";
    b.dataset = corpus::SourceDataset::custom;
    for (int i = 0; i < n; ++i) {
        corpus::PromptRecord r;
        r.raw_text = "prompt " + std::to_string(i);
        r.formatted_text = r.raw_text;
        r.prompt_id = corpus::make_prompt_id(b.dataset, static_cast<std::size_t>(i), r.raw_text);
        if (categories) r.category = std::string("cat") + std::to_string(i % 3);
        b.records.push_back(r);
    }
    b.has_predefined_categories = categories;
    return b;
}

TEST(Contexts, Predefined) {
    const auto bank = make_bank(9, true);
    const auto cs = build_contexts(bank, nullptr, ContextMode::predefined, 0, 1);
    EXPECT_EQ(cs.contexts.size(), 3u);
    EXPECT_TRUE(cs.contexts.count("cat0") && cs.contexts.count("cat1") && cs.contexts.count("cat2"));
    EXPECT_THROW(build_contexts(make_bank(3, false), nullptr, ContextMode::predefined, 0, 1), Error);
}

TEST(Contexts, ClusteredPartition) {
    const auto bank = make_bank(50, false);
    Rng rng(5);
    std::vector<EmbeddingVector> emb;
    for (const auto& r : bank.records) {
        std::vector<double> v(8);
        for (auto& x : v) x = rng.normal();
        emb.push_back({r.prompt_id, v});
    }
    const auto cs = build_contexts(bank, &emb, ContextMode::clustered, 15, 9);
    EXPECT_EQ(cs.contexts.size(), 15u);
    std::set<std::string> all;
    std::size_t total = 0;
    for (const auto& [k, v] : cs.contexts) {
        EXPECT_FALSE(v.empty());
        total += v.size();
        all.insert(v.begin(), v.end());
    }
    EXPECT_EQ(total, 50u);
    EXPECT_EQ(all.size(), 50u);
    EXPECT_TRUE(cs.contexts.count("c00") && cs.contexts.count("c14"));
    // First prompt always lands in c00.
    EXPECT_EQ(cs.contexts.at("c00").front(), bank.records[0].prompt_id);
    try {
        build_contexts(bank, &emb, ContextMode::clustered, 0, 9);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_input);
    }
    const auto js = to_json(cs);
    const auto back = context_set_from_json(js);
    EXPECT_EQ(back.contexts, cs.contexts);
}

TEST(Embed, RequestTextAndDimensionCheck) {
    auto bank = make_bank(4, false);
    std::atomic<int> n{0};
    auto tr = std::make_shared<testutil::FnTransport>([&](const llm::TransportRequest&) -> json {
        return {{"vector", std::vector<double>(n++ == 2 ? 512 : 1024, 0.1)}};
    });
    llm::ClientOptions o;
    o.backoff = std::chrono::milliseconds(0);
    llm::LlmClient c(testutil::all_roles_bound(), o, tr);
    try {
        embed_prompts(bank, c, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::inconsistency);
    }
    for (const auto& r : tr->requests)
        EXPECT_TRUE(r.payload["input"].get<std::string>().starts_with(
            "Instruct: Identify the topic or theme of the given text\nQuery: prompt "));
}

TEST(Embed, UniformDims) {
    auto bank = make_bank(6, false);
    auto tr = std::make_shared<testutil::FnTransport>([](const llm::TransportRequest&) -> json {
        return {{"vector", {1.0, 2.0, 3.0}}};
    });
    llm::LlmClient c(testutil::all_roles_bound(), {}, tr);
    const auto v = embed_prompts(bank, c, 3);
    ASSERT_EQ(v.size(), 6u);
    for (std::size_t i = 0; i < v.size(); ++i) {
        EXPECT_EQ(v[i].prompt_id, bank.records[i].prompt_id);
        EXPECT_EQ(v[i].values.size(), 3u);
    }
}

} // namespace
} // namespace diffaudit::cluster
