#include <gtest/gtest.h>

#include <set>

#include "diffaudit/consolidate.hpp"
#include "diffaudit/mock.hpp"
#include "test_util.hpp"

namespace diffaudit::consol {
namespace {

using gen::ModelTag;

// Rows drawn as block factor + noise; block b owns rows [b*size, (b+1)*size).
ScoreMatrix planted(int blocks, int size, int cols, std::uint64_t seed, double noise = 5.0) {
    Rng rng(seed);
    std::vector<std::vector<double>> factor(static_cast<std::size_t>(blocks), std::vector<double>(static_cast<std::size_t>(cols)));
    for (auto& f : factor)
        for (auto& v : f) v = rng.normal();
    ScoreMatrix m;
    m.values.resize(blocks * size, cols);
    for (int b = 0; b < blocks; ++b)
        for (int i = 0; i < size; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "h%02d", b * size + i);
            m.rows.push_back(id);
            for (int c = 0; c < cols; ++c)
                m.values(b * size + i, c) = 50 + 20 * factor[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)] + noise * rng.normal();
        }
    for (int c = 0; c < cols; ++c) {
        m.cols.push_back("e" + std::to_string(c));
        m.labels.push_back(c % 2 ? ModelTag::M2 : ModelTag::M1);
    }
    return m;
}

bool same_partition(const std::vector<int>& labels, int size) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = 0; j < labels.size(); ++j)
            if ((labels[i] == labels[j]) != (static_cast<int>(i) / size == static_cast<int>(j) / size)) return false;
    return true;
}

Eigen::MatrixXd block_affinity(int blocks, int size, double within, double between) {
    const int n = blocks * size;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = i == j ? 1.0 : (i / size == j / size ? within : between);
    return a;
}

TEST(Affinity, Examples) {
    ScoreMatrix m;
    m.rows = {"a", "b", "c", "d"};
    m.values.resize(4, 5);
    m.values << 1, 2, 3, 4, 5,  //
        1, 2, 3, 4, 5,          //
        5, 4, 3, 2, 1,          //
        7, 7, 7, 7, 7;
    const auto a = affinity_matrix(m);
    ASSERT_EQ(a.ids.size(), 3u);
    EXPECT_EQ(a.excluded, std::vector<std::string>{"d"});
    EXPECT_NEAR(a.a(0, 1), 1.0, 1e-12);
    EXPECT_NEAR(a.a(0, 2), 0.0, 1e-12);
    EXPECT_EQ(a.a(1, 1), 1.0);
    EXPECT_TRUE(a.a.isApprox(a.a.transpose()));

    Rng rng(2);
    ScoreMatrix noise;
    noise.rows = {"x", "y"};
    noise.values.resize(2, 4000);
    for (int c = 0; c < 4000; ++c) noise.values(0, c) = rng.normal(), noise.values(1, c) = rng.normal();
    EXPECT_NEAR(affinity_matrix(noise).a(0, 1), 0.5, 0.03);

    ScoreMatrix flat;
    flat.rows = {"x"};
    flat.values = Eigen::MatrixXd::Constant(1, 3, 4.0);
    EXPECT_THROW(affinity_matrix(flat), Error);
}

TEST(Spectral, PlantedBlocksAndBoundaries) {
    const auto a = block_affinity(3, 4, 0.95, 0.5);
    const auto r = spectral_cluster(a, 3, 1);
    EXPECT_TRUE(same_partition(r.labels, 4));
    EXPECT_LE(r.max_residual, 1e-8);
    EXPECT_EQ(spectral_cluster(a, 3, 1).labels, r.labels);

    const auto s = spectral_cluster(block_affinity(2, 3, 0.9, 0.4), 6, 5);
    EXPECT_EQ(std::set<int>(s.labels.begin(), s.labels.end()).size(), 6u);
    EXPECT_THROW(spectral_cluster(a, 1, 1), Error);
    EXPECT_THROW(spectral_cluster(a, 13, 1), Error);
}

TEST(Silhouette, HandExampleAndRange) {
    // Two tight pairs far apart: a = 0.1, b = 0.9 for every point.
    Eigen::MatrixXd d(4, 4);
    d << 0, 0.1, 0.9, 0.9,  //
        0.1, 0, 0.9, 0.9,   //
        0.9, 0.9, 0, 0.1,   //
        0.9, 0.9, 0.1, 0;
    EXPECT_NEAR(silhouette(d, {0, 0, 1, 1}), (0.9 - 0.1) / 0.9, 1e-12);
    EXPECT_EQ(silhouette(d, {0, 1, 2, 3}), 0.0);
    Rng rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        const auto m = planted(3, 4, 30, static_cast<std::uint64_t>(rep), 30.0);
        const auto a = affinity_matrix(m);
        std::vector<int> lab(12);
        for (auto& l : lab) l = static_cast<int>(rng.index(3));
        lab[0] = 0, lab[1] = 1, lab[2] = 2;
        const double s = silhouette((1.0 - a.a.array()).matrix(), lab);
        EXPECT_GE(s, -1.0);
        EXPECT_LE(s, 1.0);
    }
}

TEST(SelectK, FeasibleSets) {
    EXPECT_TRUE(select_k(block_affinity(2, 4, 0.9, 0.5), 1).skipped);  // n=8
    const auto r9 = select_k(block_affinity(3, 3, 0.9, 0.5), 1);
    ASSERT_FALSE(r9.skipped);
    EXPECT_EQ(r9.sweep.size(), 1u);
    EXPECT_EQ(r9.sweep.begin()->first, 3);
    EXPECT_EQ(r9.chosen_k, 3);

    const auto m = planted(10, 10, 60, 9, 20.0);
    const auto r100 = select_k(affinity_matrix(m).a, 2);
    std::vector<int> ks;
    for (const auto& [k, s] : r100.sweep) ks.push_back(k);
    EXPECT_EQ(ks, (std::vector<int>{3, 4, 5, 6, 7, 8}));
}

TEST(SelectK, FourPlantedBlocksOf24) {
    const auto m = planted(4, 6, 200, 21);
    const auto a = affinity_matrix(m);
    auto r = select_k(a.a, 3);
    ASSERT_FALSE(r.skipped);
    EXPECT_EQ(r.chosen_k, 4);
    EXPECT_TRUE(same_partition(r.labels, 6));
    // exhaustive sweep: chosen silhouette equals the sweep maximum, smallest k on ties
    double best = -2;
    int best_k = 0;
    for (const auto& [k, s] : r.sweep)
        if (s > best) best = s, best_k = k;
    EXPECT_EQ(best_k, r.chosen_k);
    EXPECT_EQ(best, r.silhouette);
    std::map<std::string, double> auc;
    for (std::size_t i = 0; i < a.ids.size(); ++i) auc[a.ids[i]] = 0.6 + 0.01 * static_cast<double>(i % 5);
    assign_representatives(r, a, auc);
    ASSERT_EQ(r.representatives.size(), 4u);
    std::set<std::string> reps;
    for (const auto& [c, id] : r.representatives) {
        reps.insert(id);
        const auto pos = std::find(a.ids.begin(), a.ids.end(), id) - a.ids.begin();
        EXPECT_EQ(r.labels[static_cast<std::size_t>(pos)], c);
    }
    EXPECT_EQ(reps.size(), 4u);
}

TEST(Representative, TwoStageRule) {
    const std::vector<std::string> ids = {"h1", "h2", "h3", "h4"};
    const std::map<std::string, double> rhobar = {{"h1", 0.9}, {"h2", 0.8}, {"h3", 0.1}, {"h4", 0.0}};
    const std::map<std::string, double> auc = {{"h1", 0.70}, {"h2", 0.95}, {"h3", 0.99}, {"h4", 0.99}};
    EXPECT_EQ(pick_representative_by_rhobar(ids, rhobar, auc), "h2");

    const std::map<std::string, double> flat_r = {{"h3", 0.5}, {"h1", 0.5}, {"h2", 0.5}};
    const std::map<std::string, double> flat_a = {{"h3", 0.8}, {"h1", 0.8}, {"h2", 0.8}};
    EXPECT_EQ(pick_representative_by_rhobar({"h3", "h2", "h1"}, flat_r, flat_a), "h1");

    Eigen::MatrixXd rho = Eigen::MatrixXd::Identity(1, 1);
    EXPECT_EQ(pick_representative({"solo"}, rho, {{"solo", 0}}, {{"solo", 0.51}}), "solo");
    EXPECT_THROW(pick_representative_by_rhobar({}, {}, {}), Error);
}

TEST(Representative, FromCorrelationMatrix) {
    // h0..h2 tightly correlated, h3 loosely attached; top 2 by mean rho are h0, h1.
    Eigen::MatrixXd rho(4, 4);
    rho << 1, 0.9, 0.8, 0.1,  //
        0.9, 1, 0.85, 0.0,    //
        0.8, 0.85, 1, 0.2,    //
        0.1, 0.0, 0.2, 1;
    const std::map<std::string, Eigen::Index> index = {{"h0", 0}, {"h1", 1}, {"h2", 2}, {"h3", 3}};
    const std::map<std::string, double> auc = {{"h0", 0.7}, {"h1", 0.8}, {"h2", 0.9}, {"h3", 0.99}};
    // rhobar: h0 .6, h1 .583, h2 .617, h3 .1 -> retain h2, h0 -> pick h2
    EXPECT_EQ(pick_representative({"h0", "h1", "h2", "h3"}, rho, index, auc), "h2");
}

std::vector<val::Example> shared_pool() {
    std::vector<val::Example> out;
    for (int c = 0; c < 5; ++c)
        for (int i = 0; i < 60; ++i)
            for (auto t : {ModelTag::M1, ModelTag::M2}) {
                const std::string pid = "c" + std::to_string(c) + "p" + std::to_string(i);
                out.push_back({val::example_id(pid, 0, t), "c" + std::to_string(c), pid, 0, t, "text " + pid});
            }
    return out;
}

TEST(SharedSet, BalanceShortfallDeterminism) {
    const auto pool = shared_pool();
    const auto s = build_shared_eval_set(pool, 200, 4);
    ASSERT_EQ(s.size(), 200u);
    EXPECT_EQ(std::count_if(s.begin(), s.end(), [](const auto& e) { return e.label == ModelTag::M1; }), 100);
    std::set<std::string> ctxs;
    for (const auto& e : s) ctxs.insert(e.context_id);
    EXPECT_EQ(ctxs.size(), 5u);
    EXPECT_THROW(build_shared_eval_set(pool, 602, 4), Error);
    const auto again = build_shared_eval_set(pool, 200, 4);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i].example_id, again[i].example_id);
}

TEST(ScoreMatrixBuild, DroppedCellDropsColumnAndRebalances) {
    auto t = std::make_shared<testutil::FnTransport>([](const llm::TransportRequest& r) {
        const auto c = r.payload["messages"][0]["content"].get<std::string>();
        if (c.find("text c0p0") != std::string::npos && c.find("hyp B") != std::string::npos) return json{{"text", "no idea"}};
        return json{{"text", std::to_string(c.size() % 97)}};
    });
    llm::LlmClient client(testutil::all_roles_bound(), {}, t);
    std::vector<val::Example> ex;
    for (const auto& e : shared_pool())
        if (e.context_id == "c0" && (e.prompt_id == "c0p0" || e.prompt_id == "c0p1" || e.prompt_id == "c0p2")) ex.push_back(e);
    std::vector<hyp::Hypothesis> hs(2);
    hs[0].hypothesis_id = "A", hs[0].text = "hyp A";
    hs[1].hypothesis_id = "B", hs[1].text = "hyp B";
    std::vector<val::JudgmentRecord> log;
    const auto m = build_score_matrix(hs, ex, client, 2, &log);
    EXPECT_EQ(m.values.rows(), 2);
    EXPECT_EQ(m.values.cols(), 4);  // both c0p0 columns lost: one dropped, its twin rebalanced away
    for (const auto& id : m.cols) EXPECT_EQ(id.find("c0p0"), std::string::npos);
    EXPECT_EQ(log.size(), 12u);
}

TEST(Summary, CitationsAndWarnings) {
    ThematicSummary s;
    s.text = "\\catrow{Style}\n\\itemrow{Terse}{Model 2 is terse (TQA: 1, 4), (BOLD: 2).}\n"
             "\\itemrow{Ghost}{Cites a missing one (TQA: 9).}\n";
    parse_summary(s, {{"TQA", 1}, {"TQA", 4}, {"BOLD", 2}});
    ASSERT_TRUE(s.parsed);
    ASSERT_EQ(s.categories.size(), 1u);
    ASSERT_EQ(s.categories[0].items.size(), 2u);
    EXPECT_EQ(s.categories[0].items[0].citations.size(), 3u);
    ASSERT_EQ(s.warnings.size(), 1u);
    EXPECT_NE(s.warnings[0].find("TQA: 9"), std::string::npos);

    ThematicSummary plain;
    plain.text = "Just prose.";
    parse_summary(plain, {});
    EXPECT_FALSE(plain.parsed);
    EXPECT_EQ(plain.warnings.size(), 1u);
}

TEST(Summary, MockReferentialIntegrity) {
    mock::MockConfig mc;
    llm::LlmClient client(testutil::all_roles_bound(), {}, std::make_shared<mock::MockTransport>(mc));
    std::vector<hyp::Hypothesis> hs;
    const char* words[] = {"zebra", "apple", "storm", "zebra", "piano"};
    for (int i = 0; i < 10; ++i) {
        hyp::Hypothesis h;
        h.dataset = i < 5 ? "TQA" : "BOLD";
        h.number = i % 5 + 1;
        h.hypothesis_id = h.dataset + std::to_string(h.number);
        h.text = std::string("Model 2 responses frequently mention '") + words[i % 5] + "' while Model 1 responses rarely do.";
        hs.push_back(h);
    }
    const auto s = thematic_summary(hs, client);
    EXPECT_TRUE(s.parsed);
    EXPECT_TRUE(s.warnings.empty());
    std::size_t cites = 0;
    for (const auto& c : s.categories)
        for (const auto& i : c.items) cites += i.citations.size();
    EXPECT_EQ(cites, 10u);
    EXPECT_EQ(thematic_summary(hs, client).text, s.text);
    EXPECT_THROW(thematic_summary({}, client), Error);
}

} // namespace
} // namespace diffaudit::consol
