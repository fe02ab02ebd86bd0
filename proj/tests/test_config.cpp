#include <gtest/gtest.h>

#include "diffaudit/config.hpp"
#include "test_util.hpp"

using namespace diffaudit;
using namespace diffaudit::config;

namespace {

json minimal() {
    return json::parse(R"({
      "datasets": [{"name": "d", "path": "p.csv", "category_field": "cat"}],
      "roles": {"default": {"endpoint": "mock", "model": "m"}}
    })");
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::stage;
}

} // namespace

TEST(Config, DefaultsAndRelativePaths) {
    const auto c = parse_config(minimal(), "/base");
    EXPECT_EQ(c.datasets.at(0).path, fs::path("/base/p.csv"));
    EXPECT_EQ(c.out_dir, fs::path("/base/out"));
    EXPECT_DOUBLE_EQ(c.stages.q, 0.05);
    EXPECT_EQ(c.stages.k_pairs, 20u);
    EXPECT_EQ(c.stages.n_judgments, 80u);
    EXPECT_FALSE(c.stages.diversification.enabled);
    EXPECT_EQ(c.roles.size(), std::size(llm::all_roles));
    EXPECT_EQ(c.roles.at(llm::Role::judge).endpoint, "mock");
    EXPECT_NO_THROW(validate_config(c));
}

TEST(Config, RoleOverridesMergeWithDefault) {
    auto j = minimal();
    j["roles"]["subject_m2"] = {{"model", "tuned"}, {"price_in", 3.0}};
    const auto c = parse_config(j, "/b");
    EXPECT_EQ(c.roles.at(llm::Role::subject_m2).model, "tuned");
    EXPECT_EQ(c.roles.at(llm::Role::subject_m2).endpoint, "mock");
    EXPECT_EQ(*c.roles.at(llm::Role::subject_m2).price_in, 3.0);
    EXPECT_EQ(c.roles.at(llm::Role::subject_m1).model, "m");
}

TEST(Config, UnknownRoleRejected) {
    auto j = minimal();
    j["roles"]["oracle"] = {{"model", "x"}};
    EXPECT_EQ(kind_of([&] { parse_config(j, "/b"); }), ErrorKind::config);
}

TEST(Config, ReasoningFlagSetsBudget) {
    auto j = minimal();
    j["decoding"] = {{"reasoning", true}};
    EXPECT_EQ(parse_config(j, "/b").decoding.cot_budget, 196);
}

TEST(Config, ValidationRules) {
    auto check = [](const std::function<void(json&)>& mutate) {
        auto j = minimal();
        mutate(j);
        return kind_of([&] { validate_config(parse_config(j, "/b")); });
    };
    EXPECT_EQ(check([](json& j) { j["stages"]["q"] = 0.0; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["q"] = 1.0; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["n_judgments"] = 81; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["cross_budget"] = 7; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["compression"] = {{"eval_set_size", 199}}; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["validation_fraction"] = 1.0; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["mode"] = "replay"; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["datasets"].push_back(j["datasets"][0]); }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["datasets"][0]["context_mode"] = "clustered"; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["datasets"][0]["name"] = "a/b"; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["datasets"][0]["n_judgments"] = 3; }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["roles"]["default"].erase("model"); }), ErrorKind::config);
    EXPECT_EQ(check([](json& j) { j["stages"]["k_pairs"] = "many"; }), ErrorKind::config);
}

TEST(Config, PerDatasetJudgmentOverride) {
    auto j = minimal();
    j["datasets"][0]["n_judgments"] = 120;
    const auto c = parse_config(j, "/b");
    EXPECT_EQ(c.n_judgments(c.dataset("d")), 120u);
    EXPECT_EQ(kind_of([&] { c.dataset("missing"); }), ErrorKind::config);
}

TEST(Config, LoadFromFile) {
    testutil::TempDir t;
    EXPECT_EQ(kind_of([&] { load_config(t.path / "none.json"); }), ErrorKind::io);
    write_file(t.path / "bad.json", "{not json");
    EXPECT_EQ(kind_of([&] { load_config(t.path / "bad.json"); }), ErrorKind::config);
    write_file(t.path / "ok.json", minimal().dump());
    const auto c = load_config(t.path / "ok.json");
    EXPECT_EQ(c.datasets[0].path, fs::absolute(t.path) / "p.csv");
}
