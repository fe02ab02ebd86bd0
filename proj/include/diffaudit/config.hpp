#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffaudit/corpus.hpp"
#include "diffaudit/embedcluster.hpp"
#include "diffaudit/genpair.hpp"
#include "diffaudit/io.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/validate.hpp"

// Run configuration. One JSON file; relative paths resolve against its directory.

namespace diffaudit::config {

struct DatasetBinding {
    std::string name;  // directory name under out_dir and the dataset column of the ledger
    fs::path path;
    corpus::SourceDataset source = corpus::SourceDataset::custom;
    corpus::ParseSpec parse;
    cluster::ContextMode context_mode = cluster::ContextMode::predefined;
    int p = 0;
    std::optional<std::size_t> n_judgments;  // per-dataset override
};

struct DiversificationConfig {
    bool enabled = false;
    int n0 = 10;
    int b = 10;
    int k = 5;
    double alpha = 0.05;
    double lambda = 0.5;
};

struct CompressionConfig {
    int k_min = 3;
    int k_max = 8;
    std::size_t eval_set_size = 200;
    bool reuse_stage2 = false;
};

struct StageParams {
    int k_pairs = 20;
    std::size_t n_judgments = 80;
    double q = 0.05;
    double validation_fraction = 0.5;
    std::optional<std::size_t> cross_budget;  // defaults to the within budget
    bool continuity = true;
    val::ScoreRange score_range;
    double max_failure_fraction = 0.2;
    DiversificationConfig diversification;
    CompressionConfig compression;
};

struct SyntheticConfig {
    std::string dataset;                   // binding holding the Persona prompts
    std::optional<fs::path> personas;      // TSV; built-in table when unset
    std::vector<std::string> inject;       // persona keys; all when empty
    int repeats = 4;
    int threshold = 18;
};

struct RunConfig {
    fs::path base_dir;
    std::string run_id = "run";
    std::uint64_t seed = 0;
    std::string intervention = "intervention";
    fs::path out_dir = "out";
    llm::Mode mode = llm::Mode::live;
    std::optional<fs::path> fixtures;
    std::size_t max_in_flight = 8;
    std::vector<DatasetBinding> datasets;
    std::map<llm::Role, llm::RoleConfig> roles;
    gen::DecodingConfig decoding;
    StageParams stages;
    std::optional<json> mock;
    SyntheticConfig synthetic;

    const DatasetBinding& dataset(const std::string& name) const {
        for (const auto& d : datasets)
            if (d.name == name) return d;
        fail(ErrorKind::config, "no dataset named " + name + " in the configuration");
    }
    std::size_t n_judgments(const DatasetBinding& d) const { return d.n_judgments.value_or(stages.n_judgments); }
    fs::path dataset_dir(const std::string& name) const { return out_dir / name; }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

inline corpus::InputFormat format_from_string(const std::string& s) {
    if (s == "auto" || s.empty()) return corpus::InputFormat::automatic;
    if (s == "jsonl") return corpus::InputFormat::jsonl;
    if (s == "csv") return corpus::InputFormat::csv;
    if (s == "tsv") return corpus::InputFormat::tsv;
    fail(ErrorKind::config, "unknown input format: " + s);
}

inline llm::RoleConfig role_from_json(llm::Role r, const json& j) {
    llm::RoleConfig rc;
    rc.role = r;
    rc.endpoint = j.value("endpoint", "");
    rc.model = j.value("model", "");
    rc.decoding = j.value("decoding", json::object());
    if (j.contains("price_in") && !j["price_in"].is_null()) rc.price_in = j["price_in"].get<double>();
    if (j.contains("price_out") && !j["price_out"].is_null()) rc.price_out = j["price_out"].get<double>();
    rc.api_key_env = j.value("api_key_env", "");
    if (rc.endpoint.empty()) fail(ErrorKind::config, "role " + std::string(llm::to_string(r)) + " has no endpoint");
    if (rc.model.empty()) fail(ErrorKind::config, "role " + std::string(llm::to_string(r)) + " has no model");
    return rc;
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

} // namespace detail

inline RunConfig parse_config(const json& j, const fs::path& base_dir) {
    RunConfig c;
    c.base_dir = base_dir;
    try {
        detail::get_if(j, "run_id", c.run_id);
        detail::get_if(j, "seed", c.seed);
        detail::get_if(j, "intervention", c.intervention);
        c.out_dir = detail::resolve(base_dir, j.value("out_dir", "out"));
        c.mode = llm::mode_from_string(j.value("mode", "live"));
        if (j.contains("fixtures")) c.fixtures = detail::resolve(base_dir, j["fixtures"].get<std::string>());
        detail::get_if(j, "max_in_flight", c.max_in_flight);

        for (const auto& d : j.value("datasets", json::array())) {
            DatasetBinding b;
            b.name = d.at("name").get<std::string>();
            b.path = detail::resolve(base_dir, d.at("path").get<std::string>());
            b.source = corpus::dataset_from_string(d.value("source", "custom"));
            b.parse.text_field = d.value("text_field", "text");
            if (d.contains("category_field")) b.parse.category_field = d["category_field"].get<std::string>();
            b.parse.format = detail::format_from_string(d.value("format", "auto"));
            const auto mode = d.value("context_mode", "predefined");
            if (mode == "predefined") b.context_mode = cluster::ContextMode::predefined;
            else if (mode == "clustered") b.context_mode = cluster::ContextMode::clustered;
            else fail(ErrorKind::config, "unknown context_mode: " + mode);
            b.p = d.value("p", 0);
            if (d.contains("n_judgments")) b.n_judgments = d["n_judgments"].get<std::size_t>();
            c.datasets.push_back(std::move(b));
        }

        // "default" supplies fields shared by every role.
        const json roles = j.value("roles", json::object());
        const json defaults = roles.value("default", json::object());
        for (auto r : llm::all_roles) {
            const auto name = std::string(llm::to_string(r));
            if (!roles.contains(name) && defaults.empty()) continue;
            json merged = defaults;
            if (roles.contains(name)) merged.update(roles[name]);
            c.roles[r] = detail::role_from_json(r, merged);
        }
        for (auto it = roles.begin(); it != roles.end(); ++it)
            if (it.key() != "default") (void)llm::role_from_string(it.key());

        const json dec = j.value("decoding", json::object());
        detail::get_if(dec, "temperature", c.decoding.temperature);
        detail::get_if(dec, "top_p", c.decoding.top_p);
        detail::get_if(dec, "max_tokens", c.decoding.max_tokens);
        if (dec.value("reasoning", false)) c.decoding.cot_budget = gen::DecodingConfig::reasoning().cot_budget;
        detail::get_if(dec, "cot_budget", c.decoding.cot_budget);
        detail::get_if(dec, "samples_per_prompt", c.decoding.samples_per_prompt);
        detail::get_if(dec, "cot_marker", c.decoding.cot_marker);

        const json st = j.value("stages", json::object());
        auto& s = c.stages;
        detail::get_if(st, "k_pairs", s.k_pairs);
        detail::get_if(st, "n_judgments", s.n_judgments);
        detail::get_if(st, "q", s.q);
        detail::get_if(st, "validation_fraction", s.validation_fraction);
        if (st.contains("cross_budget") && !st["cross_budget"].is_null()) s.cross_budget = st["cross_budget"].get<std::size_t>();
        detail::get_if(st, "continuity", s.continuity);
        if (st.contains("score_range")) s.score_range = {st["score_range"].at(0).get<double>(), st["score_range"].at(1).get<double>()};
        detail::get_if(st, "max_failure_fraction", s.max_failure_fraction);
        const json dv = st.value("diversification", json::object());
        detail::get_if(dv, "enabled", s.diversification.enabled);
        detail::get_if(dv, "n0", s.diversification.n0);
        detail::get_if(dv, "b", s.diversification.b);
        detail::get_if(dv, "k", s.diversification.k);
        detail::get_if(dv, "alpha", s.diversification.alpha);
        detail::get_if(dv, "lambda", s.diversification.lambda);
        const json cp = st.value("compression", json::object());
        detail::get_if(cp, "k_min", s.compression.k_min);
        detail::get_if(cp, "k_max", s.compression.k_max);
        detail::get_if(cp, "eval_set_size", s.compression.eval_set_size);
        detail::get_if(cp, "reuse_stage2", s.compression.reuse_stage2);

        if (j.contains("mock")) c.mock = j["mock"];

        const json sy = j.value("synthetic", json::object());
        detail::get_if(sy, "dataset", c.synthetic.dataset);
        if (sy.contains("personas")) c.synthetic.personas = detail::resolve(base_dir, sy["personas"].get<std::string>());
        detail::get_if(sy, "inject", c.synthetic.inject);
        detail::get_if(sy, "repeats", c.synthetic.repeats);
        detail::get_if(sy, "threshold", c.synthetic.threshold);
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed configuration: ") + e.what());
    }
    return c;
}

inline void validate_config(const RunConfig& c) {
    const auto& s = c.stages;
    if (!(s.q > 0.0 && s.q < 1.0)) fail(ErrorKind::config, "q must lie in (0, 1)");
    auto even = [](std::size_t n) { return n > 0 && n % 2 == 0; };
    if (!even(s.n_judgments)) fail(ErrorKind::config, "n_judgments must be even and positive");
    for (const auto& d : c.datasets)
        if (d.n_judgments && !even(*d.n_judgments))
            fail(ErrorKind::config, "n_judgments for " + d.name + " must be even and positive");
    if (s.cross_budget && !even(*s.cross_budget)) fail(ErrorKind::config, "cross_budget must be even and positive");
    if (!(s.validation_fraction > 0.0 && s.validation_fraction < 1.0))
        fail(ErrorKind::config, "validation_fraction must lie in (0, 1)");
    if (s.k_pairs < 1) fail(ErrorKind::config, "k_pairs must be >= 1");
    if (s.compression.k_min < 2 || s.compression.k_max < s.compression.k_min)
        fail(ErrorKind::config, "compression k range is invalid");
    if (!even(s.compression.eval_set_size)) fail(ErrorKind::config, "eval_set_size must be even and positive");
    if (c.max_in_flight < 1) fail(ErrorKind::config, "max_in_flight must be >= 1");
    if (c.mode != llm::Mode::live && !c.fixtures) fail(ErrorKind::config, "record and replay modes need a fixtures directory");
    std::set<std::string> names;
    for (const auto& d : c.datasets) {
        if (d.name.empty() || d.name.find('/') != std::string::npos) fail(ErrorKind::config, "invalid dataset name: " + d.name);
        if (!names.insert(d.name).second) fail(ErrorKind::config, "duplicate dataset name: " + d.name);
        if (d.context_mode == cluster::ContextMode::clustered && d.p < 1)
            fail(ErrorKind::config, "dataset " + d.name + " uses clustered contexts but p is not set");
    }
    c.decoding.validate();
}

/// With `validate` false the caller applies overrides first and validates afterwards.
inline RunConfig load_config(const fs::path& path, bool validate = true) {
    if (!fs::exists(path)) fail(ErrorKind::io, "configuration file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, "configuration is not valid JSON: " + std::string(e.what()));
    }
    auto c = parse_config(j, fs::absolute(path).parent_path());
    if (validate) validate_config(c);
    return c;
}

} // namespace diffaudit::config
