#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

// Eigen first: httplib pulls in <resolv.h>, whose _res macro collides with Eigen internals.
#include "diffaudit/pipeline.hpp"
#include "diffaudit/http_transport.hpp"

using namespace diffaudit;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> run_id;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<std::string> out;
    std::optional<std::string> fixtures;
    std::optional<std::size_t> max_in_flight;
    std::vector<std::string> datasets;
};

void add_common(CLI::App* sub, Overrides& o, bool per_dataset) {
    sub->add_option("-c,--config", o.config, "Run configuration (JSON)")->required();
    sub->add_option("--run-id", o.run_id, "Override run_id");
    sub->add_option("--seed", o.seed, "Override seed");
    sub->add_option("--mode", o.mode, "live | record | replay")->check(CLI::IsMember({"live", "record", "replay"}));
    sub->add_option("--out", o.out, "Override output directory");
    sub->add_option("--fixtures", o.fixtures, "Override fixture directory");
    sub->add_option("--max-in-flight", o.max_in_flight, "Concurrent LLM calls");
    if (per_dataset) sub->add_option("--dataset", o.datasets, "Restrict to these datasets");
}

config::RunConfig load(const Overrides& o) {
    auto c = config::load_config(o.config, false);
    const fs::path cwd = fs::current_path();
    if (o.run_id) c.run_id = *o.run_id;
    if (o.seed) c.seed = *o.seed;
    if (o.mode) c.mode = llm::mode_from_string(*o.mode);
    if (o.out) c.out_dir = config::detail::resolve(cwd, *o.out);
    if (o.fixtures) c.fixtures = config::detail::resolve(cwd, *o.fixtures);
    if (o.max_in_flight) c.max_in_flight = *o.max_in_flight;
    config::validate_config(c);
    return c;
}

pipeline::Runner runner(const Overrides& o) {
    auto c = load(o);
    auto client = pipeline::make_client(c, std::make_shared<llm::HttpTransport>());
    return pipeline::Runner(std::move(c), std::move(client));
}

std::vector<std::string> selected(const Overrides& o, const config::RunConfig& c) {
    if (!o.datasets.empty()) {
        for (const auto& d : o.datasets) c.dataset(d);
        return o.datasets;
    }
    std::vector<std::string> all;
    for (const auto& d : c.datasets) all.push_back(d.name);
    return all;
}

int synthetic(const Overrides& o) {
    auto r = runner(o);
    const auto& c = r.config();
    const std::string ds = c.synthetic.dataset.empty() ? c.datasets.front().name : c.synthetic.dataset;
    const auto p = r.paths(ds);
    require_input(p.bank(), "ingest");
    require_input(p.contexts(), "cluster");
    const auto bank = corpus::read_bank(p.bank());
    const auto contexts = cluster::context_set_from_json(json::parse(read_file(p.contexts())));
    const auto personas = c.synthetic.personas ? harness::load_personas(*c.synthetic.personas) : harness::builtin_personas();
    r.client().usage().clear();
    const auto res = pipeline::synthetic_recover(bank, contexts, personas, r.client(), c, ds);
    const auto dir = c.out_dir / "synthetic";
    write_jsonl(dir / "runs.jsonl", res.judgments);
    report::emit_ledger(dir / "ledger.jsonl", res.ledger);
    write_file(dir / "recovery.tsv", harness::recovery_tsv(res.table));
    write_file(dir / "heatmap.tsv", harness::heatmap_tsv(res.table));
    json summary = pipeline::to_json(res.table);
    summary["warnings"] = res.warnings;
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    std::vector<json> usage;
    for (const auto& e : r.client().usage().entries()) usage.push_back(llm::to_json(e));
    write_jsonl(c.out_dir / "usage" / ("synthetic-" + ds + ".jsonl"), usage);
    std::cout << harness::recovery_tsv(res.table);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Paired-model behavioral difference auditing"};
    app.require_subcommand(1);

    Overrides o;
    std::vector<std::string> extra_ledgers;
    std::function<int()> action;

    auto stage = [&](const char* name, const char* help, bool per_dataset, std::function<void(pipeline::Runner&, const std::vector<std::string>&)> f) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, o, per_dataset);
        sub->callback([&, f] {
            action = [&, f] {
                auto r = runner(o);
                f(r, selected(o, r.config()));
                return 0;
            };
        });
        return sub;
    };

    stage("ingest", "Load prompt files into normalized banks", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.ingest(d); });
    stage("cluster", "Build contexts (embedding clusters or predefined categories)", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.cluster(d); });
    stage("generate", "Paired generation from both models", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.generate(d); });
    stage("hypothesize", "One hypothesis per context", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.hypothesize(d); });
    stage("validate", "Held-out scoring, AUC tests and BH", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.validate(d); });
    stage("consolidate", "Spectral compression of validated hypotheses", true,
          [](auto& r, const auto& ds) { for (const auto& d : ds) r.consolidate(d); });
    stage("summarize", "Thematic summary of validated hypotheses", false,
          [](auto& r, const auto&) { r.summarize(); });
    auto* rep = stage("report", "Ledger, metrics and usage files", false,
                      [&](auto& r, const auto&) {
                          std::vector<fs::path> extra(extra_ledgers.begin(), extra_ledgers.end());
                          r.report(extra);
                      });
    rep->add_option("--extra-ledger", extra_ledgers, "Other runs' ledgers to pool into metrics");

    auto* syn = app.add_subcommand("synthetic-recover", "Persona injection recovery experiment");
    add_common(syn, o, false);
    syn->callback([&] { action = [&] { return synthetic(o); }; });

    std::optional<std::int64_t> n;
    std::optional<double> delta, power;
    double alpha = 0.05;
    auto* pw = app.add_subcommand("power", "Power planning for the AUC test");
    pw->add_option("--n", n, "Total judgments (even)");
    pw->add_option("--alpha", alpha, "One-sided level")->capture_default_str();
    pw->add_option("--delta", delta, "AUC gap to detect (AUC - 0.5)");
    pw->add_option("--power", power, "Target power (with --n: minimum detectable AUC; with --delta: required N)");
    pw->callback([&] {
        action = [&] {
            if (n && delta) fail(ErrorKind::invalid_input, "power: give --n or --delta, not both");
            if (n) {
                const double v = power ? stats::min_detectable_auc(*n, alpha, 1.0 - *power)
                                       : stats::min_significant_auc(*n, alpha);
                std::printf("%.3f\n", v);
            } else if (delta) {
                std::printf("%lld\n", static_cast<long long>(stats::required_judgments(*delta, alpha, 1.0 - power.value_or(0.8))));
            } else {
                fail(ErrorKind::invalid_input, "power: one of --n or --delta is required");
            }
            return 0;
        };
    });

    Overrides co;
    std::optional<std::int64_t> in_tok, out_tok;
    std::optional<double> price_in, price_out;
    auto* cost = app.add_subcommand("cost", "Token usage and estimated cost");
    cost->add_option("-c,--config", co.config, "Run configuration; prints the run's usage report");
    cost->add_option("--out", co.out, "Override output directory");
    cost->add_option("--input-tokens", in_tok, "Ad hoc: input tokens");
    cost->add_option("--output-tokens", out_tok, "Ad hoc: output tokens");
    cost->add_option("--price-in", price_in, "Ad hoc: price per million input tokens");
    cost->add_option("--price-out", price_out, "Ad hoc: price per million output tokens");
    cost->callback([&] {
        action = [&] {
            if (!co.config.empty()) {
                auto c = load(co);
                pipeline::Runner r(c, pipeline::make_client(c, nullptr));
                std::cout << r.usage_text(true);
                return 0;
            }
            if (!in_tok || !out_tok || !price_in || !price_out)
                fail(ErrorKind::invalid_input, "cost: give --config, or all of --input-tokens --output-tokens --price-in --price-out");
            llm::RoleConfig rc;
            rc.price_in = *price_in;
            rc.price_out = *price_out;
            llm::TokenUsage u;
            u.input_tokens = *in_tok;
            u.output_tokens = *out_tok;
            const auto c = llm::estimate_cost({{llm::Role::subject_m1, u}}, {{llm::Role::subject_m1, rc}});
            std::printf("%.6f\n", c.total);
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        return action ? action() : 0;
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
