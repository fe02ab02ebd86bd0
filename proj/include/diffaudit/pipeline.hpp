#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "diffaudit/config.hpp"
#include "diffaudit/consolidate.hpp"
#include "diffaudit/corpus.hpp"
#include "diffaudit/embedcluster.hpp"
#include "diffaudit/genpair.hpp"
#include "diffaudit/harness.hpp"
#include "diffaudit/hypothesis.hpp"
#include "diffaudit/mock.hpp"
#include "diffaudit/report.hpp"
#include "diffaudit/stats.hpp"
#include "diffaudit/validate.hpp"

// Stage orchestration. The in-memory functions are shared by the file-backed
// stages (one subcommand each) and the synthetic recovery harness.

namespace diffaudit::pipeline {

struct RunMeta {
    std::string run_id;
    std::string dataset;
    std::string intervention;
    std::uint64_t seed = 0;
};

/// Client for a configuration. Endpoints named "mock" go to the scripted provider
/// built from the config's mock section; everything else goes to `live`.
inline std::shared_ptr<llm::LlmClient> make_client(const config::RunConfig& c, std::shared_ptr<llm::Transport> live) {
    std::shared_ptr<llm::Transport> transport;
    if (c.mode != llm::Mode::replay) {
        std::shared_ptr<llm::Transport> m;
        if (c.mock) m = std::make_shared<mock::MockTransport>(mock::mock_config_from_json(*c.mock));
        transport = std::make_shared<mock::RoutingTransport>(m, std::move(live));
    }
    std::shared_ptr<llm::FixtureStore> store;
    if (c.fixtures) store = std::make_shared<llm::FixtureStore>(*c.fixtures);
    llm::ClientOptions o;
    o.mode = c.mode;
    o.max_in_flight = static_cast<std::ptrdiff_t>(c.max_in_flight);
    return std::make_shared<llm::LlmClient>(c.roles, o, transport, store);
}

inline std::string hypothesis_id(const RunMeta& m, const std::string& context_id) { return m.dataset + "-" + context_id; }

// ---------------------------------------------------------------------------
// Stage 1

inline std::map<std::string, gen::ContextSamples> generate_all(const corpus::PromptBank& bank,
                                                                const cluster::ContextSet& contexts,
                                                                llm::LlmClient& client, const config::RunConfig& c,
                                                                std::uint64_t seed, const gen::GenerateOptions& opt) {
    std::map<std::string, const corpus::PromptRecord*> index;
    for (const auto& r : bank.records) index[r.prompt_id] = &r;
    std::map<std::string, gen::ContextSamples> out;
    for (const auto& [cid, ids] : contexts.contexts) {
        std::vector<corpus::PromptRecord> prompts;
        for (const auto& id : ids) {
            auto it = index.find(id);
            if (it == index.end()) fail(ErrorKind::inconsistency, "context " + cid + " lists unknown prompt " + id);
            prompts.push_back(*it->second);
        }
        auto cs = gen::generate_pairs(cid, prompts, client, c.decoding, seed, opt);
        gen::split_construction_validation(cs, c.stages.validation_fraction, derive_seed(seed, {"split", cid}));
        out.emplace(cid, std::move(cs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stage 2

struct WithinResult {
    std::vector<val::JudgmentRecord> judgments;
    stats::TestOutcome outcome;
};

inline WithinResult within_test(const hyp::Hypothesis& h, const std::vector<val::Example>& pool, std::size_t n,
                                std::uint64_t seed, llm::LlmClient& client, const config::StageParams& s,
                                std::size_t threads) {
    WithinResult r;
    const auto set = val::sample_judgment_set(pool, n, val::judgment_seed(seed, h.hypothesis_id, "within"), h.context_id);
    r.judgments = val::score_examples(h.hypothesis_id, h.text, set, client, threads, "within", s.score_range);
    val::rebalance(r.judgments);
    r.outcome = val::test_hypothesis(r.judgments, s.continuity);
    return r;
}

struct HypothesizeResult {
    std::vector<hyp::Hypothesis> hypotheses;
    hyp::DiversificationState state;
    std::vector<val::JudgmentRecord> inline_judgments;
    std::vector<json> gate_log;  // one entry per SAFFRON test
};

/// One hypothesis per context. With diversification on, contexts run in id
/// order and each hypothesis is tested at once so SAFFRON can drive updates.
inline HypothesizeResult hypothesize_all(const std::map<std::string, gen::ContextSamples>& samples,
                                         llm::LlmClient& client, const config::RunConfig& c, const RunMeta& meta,
                                         std::size_t n_judgments, std::size_t threads) {
    const auto& dv = c.stages.diversification;
    HypothesizeResult r;
    r.state.n0 = dv.n0;
    r.state.b = dv.b;
    r.state.k = dv.k;
    std::vector<const gen::ContextSamples*> order;
    for (const auto& [cid, cs] : samples) order.push_back(&cs);

    auto finish = [&](hyp::Hypothesis h, std::size_t i) {
        h.hypothesis_id = hypothesis_id(meta, order[i]->context_id);
        h.run_id = meta.run_id;
        h.dataset = meta.dataset;
        h.intervention = meta.intervention;
        h.number = static_cast<int>(i) + 1;
        return h;
    };

    if (!dv.enabled) {
        auto hs = parallel_map<hyp::Hypothesis>(order.size(), threads, [&](std::size_t i) {
            return finish(hyp::propose_hypothesis(*order[i], c.stages.k_pairs, r.state, client), i);
        });
        r.hypotheses = std::move(hs);
        return r;
    }

    stats::SaffronConfig sc;
    sc.alpha = dv.alpha;
    sc.lambda = dv.lambda;
    auto gate = stats::saffron_init(sc);
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto h = finish(hyp::propose_hypothesis(*order[i], c.stages.k_pairs, r.state, client), i);
        const auto pool = val::validation_pool(*order[i]);
        auto w = within_test(h, pool, n_judgments, meta.seed, client, c.stages, threads);
        const auto step = stats::saffron_step(gate, w.outcome.p_one_sided);
        gate = step.state;
        r.gate_log.push_back({{"hypothesis_id", h.hypothesis_id},
                              {"p", w.outcome.p_one_sided},
                              {"level", step.decision.level},
                              {"candidate", step.decision.candidate},
                              {"reject", step.decision.reject},
                              {"instruction_version", h.diversification_version}});
        for (auto& j : w.judgments) r.inline_judgments.push_back(std::move(j));
        r.state.prior_hypotheses.push_back({h.hypothesis_id, h.text});
        r.hypotheses.push_back(std::move(h));
        if (step.decision.reject) {
            ++r.state.saffron_pass_count;
            if (hyp::should_update(r.state))
                hyp::update_diversification(r.state, client,
                                            derive_seed(meta.seed, {"diversify", meta.dataset, std::to_string(r.state.version)}),
                                            threads);
        }
    }
    return r;
}

struct ValidateResult {
    std::vector<val::ValidationResult> results;
    std::vector<val::JudgmentRecord> judgments;
};

inline ValidateResult validate_all(const std::vector<hyp::Hypothesis>& hyps,
                                   const std::map<std::string, gen::ContextSamples>& samples, llm::LlmClient& client,
                                   const config::RunConfig& c, const RunMeta& meta, std::size_t n_judgments,
                                   std::size_t threads, const std::vector<val::JudgmentRecord>* reuse = nullptr) {
    std::map<std::string, std::vector<val::Example>> pools;
    for (const auto& [cid, cs] : samples) pools[cid] = val::validation_pool(cs);
    std::map<std::string, std::vector<val::JudgmentRecord>> reused;
    if (reuse)
        for (const auto& j : *reuse)
            if (j.purpose == "within") reused[j.hypothesis_id].push_back(j);

    ValidateResult out;
    std::vector<val::HypothesisTest> tests;
    const std::size_t cross_budget = c.stages.cross_budget.value_or(n_judgments);
    for (const auto& h : hyps) {
        auto pool = pools.find(h.context_id);
        if (pool == pools.end()) fail(ErrorKind::inconsistency, "no samples for context " + h.context_id);
        WithinResult w;
        if (auto it = reused.find(h.hypothesis_id); it != reused.end()) {
            w.judgments = it->second;
            w.outcome = val::test_hypothesis(w.judgments, c.stages.continuity);
        } else {
            w = within_test(h, pool->second, n_judgments, meta.seed, client, c.stages, threads);
        }
        std::vector<val::Example> others;
        for (const auto& [cid, p] : pools)
            if (cid != h.context_id) others.insert(others.end(), p.begin(), p.end());
        const auto cross = val::cross_context_auc(h.hypothesis_id, h.text, others, cross_budget,
                                                  val::judgment_seed(meta.seed, h.hypothesis_id, "cross"), client,
                                                  threads, c.stages.score_range);
        val::HypothesisTest t;
        t.hypothesis_id = h.hypothesis_id;
        t.dataset = h.dataset;
        t.n_judgments = val::kept_count(w.judgments);
        t.auc_within = w.outcome.auc;
        t.p_one_sided = w.outcome.p_one_sided;
        t.degenerate = w.outcome.degenerate;
        if (cross) t.auc_cross = cross->auc;
        tests.push_back(t);
        for (auto& j : w.judgments) out.judgments.push_back(std::move(j));
        if (cross)
            for (const auto& j : cross->judgments) out.judgments.push_back(j);
    }
    out.results = val::finalize_run(tests, c.stages.q);
    return out;
}

// ---------------------------------------------------------------------------
// Stage 3

struct ConsolidateResult {
    consol::CompressionResult compression;
    std::vector<std::string> ids;       // hypotheses entering the affinity, aligned with labels
    std::vector<std::string> excluded;  // constant score rows
    std::string note;
    std::vector<val::JudgmentRecord> judgments;
};

inline ConsolidateResult consolidate_all(const std::vector<hyp::Hypothesis>& hyps,
                                         const std::vector<val::ValidationResult>& results,
                                         const std::map<std::string, gen::ContextSamples>& samples,
                                         llm::LlmClient& client, const config::RunConfig& c, const RunMeta& meta,
                                         std::size_t threads, const std::vector<val::JudgmentRecord>* stage2 = nullptr) {
    ConsolidateResult out;
    std::set<std::string> validated;
    std::map<std::string, double> auc;
    for (const auto& r : results) {
        auc[r.hypothesis_id] = r.auc_within;
        if (r.validated) validated.insert(r.hypothesis_id);
    }
    std::vector<hyp::Hypothesis> vh;
    for (const auto& h : hyps)
        if (validated.count(h.hypothesis_id)) vh.push_back(h);
    const auto& cc = c.stages.compression;
    if (vh.size() < 9) {
        out.compression.skipped = true;
        out.note = "compression skipped: " + std::to_string(vh.size()) + " validated hypotheses (needs 9)";
        return out;
    }
    std::vector<val::Example> pooled;
    for (const auto& [cid, cs] : samples) {
        auto p = val::validation_pool(cs);
        pooled.insert(pooled.end(), p.begin(), p.end());
    }
    const auto set = consol::build_shared_eval_set(pooled, cc.eval_set_size, derive_seed(meta.seed, {"shared-eval", meta.dataset}));
    consol::JudgmentCache cache;
    if (cc.reuse_stage2 && stage2)
        for (const auto& j : *stage2) cache.emplace(std::make_pair(j.hypothesis_id, j.example_id), j);
    const auto m = consol::build_score_matrix(vh, set, client, threads, &out.judgments, c.stages.score_range,
                                              cc.reuse_stage2 ? &cache : nullptr);
    const auto aff = consol::affinity_matrix(m);
    out.ids = aff.ids;
    out.excluded = aff.excluded;
    if (aff.ids.size() < 9) {
        out.compression.skipped = true;
        out.note = "compression skipped: " + std::to_string(aff.ids.size()) + " non-constant score rows (needs 9)";
        return out;
    }
    out.compression = consol::select_k(aff.a, derive_seed(meta.seed, {"spectral", meta.dataset}), cc.k_min, cc.k_max);
    if (out.compression.skipped) {
        out.note = "compression skipped: no feasible k";
        return out;
    }
    consol::assign_representatives(out.compression, aff, auc);
    return out;
}

/// Hypotheses fed to the thematic summary: cluster representatives when
/// compression ran, every validated hypothesis otherwise. Constant-score
/// hypotheses stay in either way.
inline std::vector<hyp::Hypothesis> summary_inputs(const std::vector<hyp::Hypothesis>& hyps,
                                                   const std::vector<val::ValidationResult>& results,
                                                   const ConsolidateResult& cons) {
    std::set<std::string> keep;
    for (const auto& r : results)
        if (r.validated) keep.insert(r.hypothesis_id);
    if (!cons.compression.skipped) {
        std::set<std::string> reps(cons.excluded.begin(), cons.excluded.end());
        for (const auto& [k, id] : cons.compression.representatives) reps.insert(id);
        std::set<std::string> both;
        for (const auto& id : keep)
            if (reps.count(id)) both.insert(id);
        keep = both;
    }
    std::vector<hyp::Hypothesis> out;
    for (const auto& h : hyps)
        if (keep.count(h.hypothesis_id)) out.push_back(h);
    return out;
}

inline std::vector<report::RunLedgerRow> ledger_rows(const std::vector<hyp::Hypothesis>& hyps,
                                                     const std::vector<val::ValidationResult>& results,
                                                     const ConsolidateResult* cons) {
    std::map<std::string, const val::ValidationResult*> by_id;
    for (const auto& r : results) by_id[r.hypothesis_id] = &r;
    std::map<std::string, int> cluster_of;
    std::set<std::string> reps;
    if (cons && !cons->compression.skipped) {
        for (std::size_t i = 0; i < cons->ids.size(); ++i) cluster_of[cons->ids[i]] = cons->compression.labels[i];
        for (const auto& [k, id] : cons->compression.representatives) reps.insert(id);
    }
    std::vector<report::RunLedgerRow> rows;
    for (const auto& h : hyps) {
        auto it = by_id.find(h.hypothesis_id);
        if (it == by_id.end()) fail(ErrorKind::inconsistency, "no validation result for " + h.hypothesis_id);
        const auto& v = *it->second;
        report::RunLedgerRow r;
        r.run_id = h.run_id;
        r.dataset = h.dataset;
        r.intervention = h.intervention;
        r.hypothesis_id = h.hypothesis_id;
        r.context_id = h.context_id;
        r.text = h.text;
        r.n_judgments = v.n_judgments;
        r.auc_within = v.auc_within;
        r.auc_cross = v.auc_cross;
        r.p_value = v.p_one_sided;
        r.validated = v.validated;
        r.degenerate = v.degenerate;
        r.k_pairs_shown = h.k_pairs_shown;
        r.diversification_version = h.diversification_version;
        if (auto c = cluster_of.find(h.hypothesis_id); c != cluster_of.end()) r.cluster = c->second;
        r.representative = reps.count(h.hypothesis_id) != 0;
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialization of stage outputs

inline json to_json(const val::ValidationResult& r) {
    return {{"hypothesis_id", r.hypothesis_id},
            {"dataset", r.dataset},
            {"n_judgments", r.n_judgments},
            {"auc_within", r.auc_within},
            {"p_one_sided", r.p_one_sided},
            {"degenerate", r.degenerate},
            {"auc_cross", r.auc_cross ? json(*r.auc_cross) : json(nullptr)},
            {"validated", r.validated}};
}

inline val::ValidationResult validation_from_json(const json& j) {
    val::ValidationResult r;
    r.hypothesis_id = j.at("hypothesis_id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.n_judgments = j.at("n_judgments").get<std::size_t>();
    r.auc_within = j.at("auc_within").get<double>();
    r.p_one_sided = j.at("p_one_sided").get<double>();
    r.degenerate = j.at("degenerate").get<bool>();
    if (!j.at("auc_cross").is_null()) r.auc_cross = j["auc_cross"].get<double>();
    r.validated = j.at("validated").get<bool>();
    return r;
}

inline json to_json(const ConsolidateResult& c) {
    json j = {{"skipped", c.compression.skipped}, {"note", c.note}, {"excluded", c.excluded}};
    if (!c.compression.skipped) {
        j["chosen_k"] = c.compression.chosen_k;
        j["silhouette"] = c.compression.silhouette;
        j["sweep"] = json::object();
        for (const auto& [k, s] : c.compression.sweep) j["sweep"][std::to_string(k)] = s;
        j["assignment"] = json::object();
        for (std::size_t i = 0; i < c.ids.size(); ++i) j["assignment"][c.ids[i]] = c.compression.labels[i];
        j["representatives"] = json::object();
        for (const auto& [k, id] : c.compression.representatives) j["representatives"][std::to_string(k)] = id;
    }
    return j;
}

inline ConsolidateResult consolidate_from_json(const json& j) {
    ConsolidateResult c;
    c.compression.skipped = j.at("skipped").get<bool>();
    c.note = j.value("note", "");
    c.excluded = j.value("excluded", std::vector<std::string>{});
    if (!c.compression.skipped) {
        c.compression.chosen_k = j.at("chosen_k").get<int>();
        c.compression.silhouette = j.at("silhouette").get<double>();
        for (auto it = j.at("sweep").begin(); it != j.at("sweep").end(); ++it)
            c.compression.sweep[std::stoi(it.key())] = it.value().get<double>();
        for (auto it = j.at("assignment").begin(); it != j.at("assignment").end(); ++it) {
            c.ids.push_back(it.key());
            c.compression.labels.push_back(it.value().get<int>());
        }
        for (auto it = j.at("representatives").begin(); it != j.at("representatives").end(); ++it)
            c.compression.representatives[std::stoi(it.key())] = it.value().get<std::string>();
    }
    return c;
}

template <class T, class F>
std::vector<json> rows_of(const std::vector<T>& xs, F f) {
    std::vector<json> out;
    for (const auto& x : xs) out.push_back(f(x));
    return out;
}

// ---------------------------------------------------------------------------
// File-backed stages

struct Paths {
    fs::path dir;
    fs::path bank() const { return dir / "bank.jsonl"; }
    fs::path embeddings() const { return dir / "embeddings.jsonl"; }
    fs::path contexts() const { return dir / "contexts.json"; }
    fs::path generations() const { return dir / "generations.jsonl"; }
    fs::path generation_failures() const { return dir / "generation_failures.jsonl"; }
    fs::path hypotheses() const { return dir / "hypotheses.jsonl"; }
    fs::path diversification() const { return dir / "diversification.json"; }
    fs::path inline_judgments() const { return dir / "inline_judgments.jsonl"; }
    fs::path judgments() const { return dir / "judgments.jsonl"; }
    fs::path validation() const { return dir / "validation.jsonl"; }
    fs::path compression() const { return dir / "compression.json"; }
    fs::path shared_judgments() const { return dir / "shared_judgments.jsonl"; }
};

class Runner {
public:
    Runner(config::RunConfig cfg, std::shared_ptr<llm::LlmClient> client)
        : cfg_(std::move(cfg)), client_(std::move(client)) {}

    const config::RunConfig& config() const { return cfg_; }
    llm::LlmClient& client() { return *client_; }

    Paths paths(const std::string& dataset) const { return {cfg_.dataset_dir(dataset)}; }
    RunMeta meta(const std::string& dataset) const { return {cfg_.run_id, dataset, cfg_.intervention, cfg_.seed}; }
    std::size_t threads() const { return cfg_.max_in_flight; }

    void ingest(const std::string& ds) {
        const auto& d = cfg_.dataset(ds);
        const auto bank = corpus::load_bank(d.path, d.source, d.parse, d.name);
        corpus::write_bank(paths(ds).bank(), bank);
    }

    void cluster(const std::string& ds) {
        const auto& d = cfg_.dataset(ds);
        const auto p = paths(ds);
        require_input(p.bank(), "ingest");
        const auto bank = corpus::read_bank(p.bank());
        begin("cluster");
        std::vector<cluster::EmbeddingVector> emb;
        if (d.context_mode == cluster::ContextMode::clustered) {
            emb = cluster::embed_prompts(bank, *client_, threads());
            write_jsonl(p.embeddings(), rows_of(emb, [](const auto& e) { return cluster::to_json(e); }));
        }
        const auto cs = cluster::build_contexts(bank, emb.empty() ? nullptr : &emb, d.context_mode, d.p,
                                                derive_seed(cfg_.seed, {"cluster", ds}));
        write_file(p.contexts(), cluster::to_json(cs).dump(2) + "\n");
        end("cluster", ds);
    }

    void generate(const std::string& ds) {
        const auto p = paths(ds);
        require_input(p.bank(), "ingest");
        require_input(p.contexts(), "cluster");
        const auto bank = corpus::read_bank(p.bank());
        const auto cs = cluster::context_set_from_json(json::parse(read_file(p.contexts())));
        begin("generate");
        gen::GenerateOptions opt;
        opt.threads = threads();
        opt.max_failure_fraction = cfg_.stages.max_failure_fraction;
        const auto samples = generate_all(bank, cs, *client_, cfg_, cfg_.seed, opt);
        std::vector<json> rows, failures;
        for (const auto& [cid, s] : samples) {
            for (auto& r : gen::samples_to_rows(s, cfg_.run_id)) rows.push_back(std::move(r));
            for (const auto& f : s.failures)
                failures.push_back({{"context_id", cid}, {"prompt_id", f.prompt_id}, {"error", f.error}});
        }
        write_jsonl(p.generations(), rows);
        write_jsonl(p.generation_failures(), failures);
        end("generate", ds);
    }

    std::map<std::string, gen::ContextSamples> load_samples(const std::string& ds) const {
        const auto p = paths(ds);
        require_input(p.bank(), "ingest");
        require_input(p.generations(), "generate");
        return gen::samples_from_rows(read_jsonl(p.generations()), corpus::read_bank(p.bank()));
    }

    std::vector<hyp::Hypothesis> load_hypotheses(const std::string& ds) const {
        require_input(paths(ds).hypotheses(), "hypothesize");
        std::vector<hyp::Hypothesis> out;
        for (const auto& j : read_jsonl(paths(ds).hypotheses())) out.push_back(hyp::hypothesis_from_json(j));
        return out;
    }

    std::vector<val::ValidationResult> load_validation(const std::string& ds) const {
        require_input(paths(ds).validation(), "validate");
        std::vector<val::ValidationResult> out;
        for (const auto& j : read_jsonl(paths(ds).validation())) out.push_back(validation_from_json(j));
        return out;
    }

    static std::vector<val::JudgmentRecord> load_judgments(const fs::path& path) {
        std::vector<val::JudgmentRecord> out;
        for (const auto& j : read_jsonl(path)) out.push_back(val::judgment_from_json(j));
        return out;
    }

    ConsolidateResult load_compression(const std::string& ds) const {
        require_input(paths(ds).compression(), "consolidate");
        return consolidate_from_json(json::parse(read_file(paths(ds).compression())));
    }

    void hypothesize(const std::string& ds) {
        const auto p = paths(ds);
        const auto samples = load_samples(ds);
        begin("hypothesize");
        const auto r = hypothesize_all(samples, *client_, cfg_, meta(ds), cfg_.n_judgments(cfg_.dataset(ds)), threads());
        write_jsonl(p.hypotheses(), rows_of(r.hypotheses, [](const auto& h) { return hyp::to_json(h); }));
        json div = {{"enabled", cfg_.stages.diversification.enabled},
                    {"version", r.state.version},
                    {"saffron_pass_count", r.state.saffron_pass_count},
                    {"instructions", r.state.instruction_history},
                    {"warnings", r.state.warnings},
                    {"gate", r.gate_log}};
        write_file(p.diversification(), div.dump(2) + "\n");
        write_jsonl(p.inline_judgments(), rows_of(r.inline_judgments, [](const auto& j) { return val::to_json(j); }));
        end("hypothesize", ds);
    }

    void validate(const std::string& ds) {
        const auto p = paths(ds);
        const auto samples = load_samples(ds);
        const auto hyps = load_hypotheses(ds);
        std::vector<val::JudgmentRecord> inline_js;
        if (fs::exists(p.inline_judgments())) inline_js = load_judgments(p.inline_judgments());
        begin("validate");
        const auto r = validate_all(hyps, samples, *client_, cfg_, meta(ds), cfg_.n_judgments(cfg_.dataset(ds)),
                                    threads(), inline_js.empty() ? nullptr : &inline_js);
        write_jsonl(p.judgments(), rows_of(r.judgments, [](const auto& j) { return val::to_json(j); }));
        write_jsonl(p.validation(), rows_of(r.results, [](const auto& v) { return to_json(v); }));
        end("validate", ds);
    }

    void consolidate(const std::string& ds) {
        const auto p = paths(ds);
        const auto hyps = load_hypotheses(ds);
        const auto results = load_validation(ds);
        const auto samples = load_samples(ds);
        std::vector<val::JudgmentRecord> stage2;
        if (cfg_.stages.compression.reuse_stage2) {
            require_input(p.judgments(), "validate");
            stage2 = load_judgments(p.judgments());
        }
        begin("consolidate");
        const auto r = consolidate_all(hyps, results, samples, *client_, cfg_, meta(ds), threads(), &stage2);
        write_file(p.compression(), to_json(r).dump(2) + "\n");
        write_jsonl(p.shared_judgments(), rows_of(r.judgments, [](const auto& j) { return val::to_json(j); }));
        end("consolidate", ds);
    }

    /// Thematic summary across every configured dataset.
    void summarize() {
        std::vector<hyp::Hypothesis> inputs;
        for (const auto& d : cfg_.datasets) {
            const auto hyps = load_hypotheses(d.name);
            const auto results = load_validation(d.name);
            const auto cons = load_compression(d.name);
            for (auto& h : summary_inputs(hyps, results, cons)) inputs.push_back(std::move(h));
        }
        begin("summarize");
        consol::ThematicSummary s;
        if (inputs.empty()) s.warnings.push_back("no validated hypotheses; summary not requested");
        else s = consol::thematic_summary(inputs, *client_);
        report::emit_summary(cfg_.out_dir / "summary.tex", cfg_.out_dir / "summary.json", s);
        end("summarize", "all");
    }

    std::vector<report::RunLedgerRow> ledger() const {
        std::vector<report::RunLedgerRow> rows;
        for (const auto& d : cfg_.datasets) {
            const auto hyps = load_hypotheses(d.name);
            const auto results = load_validation(d.name);
            const auto cons = load_compression(d.name);
            for (auto& r : ledger_rows(hyps, results, &cons)) rows.push_back(std::move(r));
        }
        return rows;
    }

    std::vector<llm::UsageEntry> usage_entries() const {
        std::vector<llm::UsageEntry> out;
        const auto dir = cfg_.out_dir / "usage";
        if (!fs::exists(dir)) return out;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".jsonl") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files)
            for (const auto& j : read_jsonl(f)) out.push_back(llm::usage_entry_from_json(j));
        return out;
    }

    /// Ledger, metrics (optionally pooled with other runs' ledgers) and the usage file.
    void report(const std::vector<fs::path>& extra_ledgers = {}) {
        auto rows = ledger();
        const auto bad = report::verify_ledger(rows, cfg_.stages.q);
        if (!bad.empty()) fail(ErrorKind::inconsistency, "ledger verdicts disagree with BH for " + bad.front());
        report::emit_ledger(cfg_.out_dir / "ledger.jsonl", rows);
        for (const auto& path : extra_ledgers) {
            if (!fs::exists(path)) fail(ErrorKind::io, "ledger not found: " + path.string());
            for (auto& r : report::read_ledger(path)) rows.push_back(std::move(r));
        }
        report::sort_ledger(rows);
        report::emit_metrics(cfg_.out_dir / "metrics.tsv", report::compute_metrics(rows));
        write_file(cfg_.out_dir / "usage.tsv", usage_text(false));
    }

    /// Usage report; with `require_prices` a missing price is an error, otherwise cost is omitted.
    std::string usage_text(bool require_prices) const {
        const auto entries = usage_entries();
        const auto rep = llm::usage_report(entries);
        std::optional<llm::CostReport> cost;
        try {
            cost = llm::estimate_cost(rep.per_role, cfg_.roles);
        } catch (const Error& e) {
            if (require_prices) throw;
        }
        std::size_t n_hyp = 0;
        for (const auto& d : cfg_.datasets)
            if (fs::exists(paths(d.name).hypotheses())) n_hyp += read_jsonl(paths(d.name).hypotheses()).size();
        return report::usage_tsv(rep, cost, n_hyp);
    }

private:
    void begin(const std::string& stage) {
        client_->usage().clear();
        client_->set_stage(stage);
    }

    void end(const std::string& stage, const std::string& ds) {
        std::vector<json> rows;
        for (const auto& e : client_->usage().entries()) rows.push_back(llm::to_json(e));
        write_jsonl(cfg_.out_dir / "usage" / (stage + "-" + ds + ".jsonl"), rows);
    }

    config::RunConfig cfg_;
    std::shared_ptr<llm::LlmClient> client_;
};

// ---------------------------------------------------------------------------
// Synthetic behavior recovery

struct SyntheticResult {
    harness::RecoveryTable table;
    std::vector<report::RunLedgerRow> ledger;
    std::vector<json> judgments;  // one row per (run, context)
    std::vector<std::string> warnings;
};

/// Injects each persona into M2 through the prompt wrapper and checks whether
/// validated hypotheses on the other categories' prompts recover it.
inline SyntheticResult synthetic_recover(const corpus::PromptBank& bank, const cluster::ContextSet& contexts,
                                         const std::vector<harness::PersonaSpec>& personas, llm::LlmClient& client,
                                         const config::RunConfig& c, const std::string& dataset) {
    std::map<std::string, std::string> phrasing;
    for (const auto& p : personas) phrasing[p.key] = p.phrasing;
    std::vector<std::string> keys = c.synthetic.inject;
    if (keys.empty())
        for (const auto& p : personas) keys.push_back(p.key);
    SyntheticResult out;
    std::vector<harness::InjectedRun> runs;
    const auto n = c.n_judgments(c.dataset(dataset));
    for (const auto& key : keys) {
        auto ph = phrasing.find(key);
        if (ph == phrasing.end()) fail(ErrorKind::config, "unknown persona key to inject: " + key);
        for (int rep = 0; rep < c.synthetic.repeats; ++rep) {
            RunMeta meta{c.run_id + "-" + key + "-r" + std::to_string(rep), dataset, "persona:" + key,
                         derive_seed(c.seed, {"synthetic", key, std::to_string(rep)})};
            gen::GenerateOptions opt;
            opt.threads = c.max_in_flight;
            opt.max_failure_fraction = c.stages.max_failure_fraction;
            const std::string injected = ph->second;
            opt.m2_prompt = [injected](const std::string& prompt) { return harness::wrap_persona(prompt, injected); };
            client.set_stage("synthetic");
            const auto samples = generate_all(bank, contexts, client, c, meta.seed, opt);
            const auto hr = hypothesize_all(samples, client, c, meta, n, c.max_in_flight);
            const auto vr = validate_all(hr.hypotheses, samples, client, c, meta, n, c.max_in_flight,
                                         hr.inline_judgments.empty() ? nullptr : &hr.inline_judgments);
            for (auto& row : ledger_rows(hr.hypotheses, vr.results, nullptr)) out.ledger.push_back(std::move(row));
            harness::InjectedRun run{key, rep, {}};
            for (std::size_t i = 0; i < hr.hypotheses.size(); ++i) {
                const auto& h = hr.hypotheses[i];
                const auto& v = vr.results[i];
                harness::ContextJudgment cj{h.context_id, h.context_id, v.validated, false, v.auc_within};
                std::string reply;
                if (v.validated) {
                    const auto jm = harness::judge_match(injected, h.text, client);
                    cj.match = jm.match;
                    reply = jm.raw_reply;
                    if (jm.warning) out.warnings.push_back(h.hypothesis_id + " (" + meta.run_id + "): " + *jm.warning);
                }
                out.judgments.push_back({{"run_id", meta.run_id},
                                         {"injected", key},
                                         {"repeat", rep},
                                         {"context_id", h.context_id},
                                         {"validated", v.validated},
                                         {"match", cj.match},
                                         {"auc_within", v.auc_within},
                                         {"judge_reply", reply}});
                run.contexts.push_back(cj);
            }
            runs.push_back(std::move(run));
        }
    }
    out.table = harness::recovery_metrics(runs, c.synthetic.threshold);
    return out;
}

inline json to_json(const harness::RecoveryTable& t) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"runs", t.runs.size()},
            {"threshold", t.threshold},
            {"fraction_runs_recovered", t.fraction_runs_recovered},
            {"recovered_at_least_threshold", t.recovered_at_least},
            {"mean_elicitation", t.mean_recoveries},
            {"matched_auc_mean", opt(t.matched_auc_mean)},
            {"unmatched_auc_mean", opt(t.unmatched_auc_mean)},
            {"recoverability", t.recoverability},
            {"elicitation", t.elicitation}};
}

} // namespace diffaudit::pipeline
