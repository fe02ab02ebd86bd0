#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "diffaudit/consolidate.hpp"
#include "diffaudit/io.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/stats/fdr.hpp"

namespace diffaudit::report {

struct RunLedgerRow {
    std::string run_id;
    std::string dataset;
    std::string intervention;
    std::string hypothesis_id;
    std::string context_id;
    std::string text;
    std::size_t n_judgments = 0;
    double auc_within = 0.5;
    std::optional<double> auc_cross;
    double p_value = 1.0;
    bool validated = false;
    bool degenerate = false;
    int k_pairs_shown = 0;
    int diversification_version = 0;
    std::optional<int> cluster;           // compression cluster, when compression ran
    bool representative = false;

    auto key() const { return std::tie(run_id, dataset, intervention, hypothesis_id); }
};

inline json to_json(const RunLedgerRow& r) {
    json j;
    j["run_id"] = r.run_id;
    j["dataset"] = r.dataset;
    j["intervention"] = r.intervention;
    j["hypothesis_id"] = r.hypothesis_id;
    j["context_id"] = r.context_id;
    j["text"] = r.text;
    j["n_judgments"] = r.n_judgments;
    j["auc_within"] = r.auc_within;
    j["auc_cross"] = r.auc_cross ? json(*r.auc_cross) : json(nullptr);
    j["p_value"] = r.p_value;
    j["validated"] = r.validated;
    j["degenerate"] = r.degenerate;
    j["k_pairs_shown"] = r.k_pairs_shown;
    j["diversification_version"] = r.diversification_version;
    j["cluster"] = r.cluster ? json(*r.cluster) : json(nullptr);
    j["representative"] = r.representative;
    return j;
}

inline RunLedgerRow ledger_row_from_json(const json& j) {
    RunLedgerRow r;
    r.run_id = j.at("run_id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.intervention = j.at("intervention").get<std::string>();
    r.hypothesis_id = j.at("hypothesis_id").get<std::string>();
    r.context_id = j.at("context_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.n_judgments = j.at("n_judgments").get<std::size_t>();
    r.auc_within = j.at("auc_within").get<double>();
    if (!j.at("auc_cross").is_null()) r.auc_cross = j["auc_cross"].get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.validated = j.at("validated").get<bool>();
    r.degenerate = j.value("degenerate", false);
    r.k_pairs_shown = j.value("k_pairs_shown", 0);
    r.diversification_version = j.value("diversification_version", 0);
    if (j.contains("cluster") && !j["cluster"].is_null()) r.cluster = j["cluster"].get<int>();
    r.representative = j.value("representative", false);
    return r;
}

inline void sort_ledger(std::vector<RunLedgerRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].key() == rows[i - 1].key())
            fail(ErrorKind::inconsistency, "duplicate ledger key (" + rows[i].run_id + ", " + rows[i].dataset + ", " +
                                               rows[i].intervention + ", " + rows[i].hypothesis_id + ")");
}

inline std::string serialize_ledger(std::vector<RunLedgerRow> rows) {
    sort_ledger(rows);
    std::vector<json> js;
    for (const auto& r : rows) js.push_back(to_json(r));
    return to_jsonl(js);
}

inline void emit_ledger(const fs::path& path, const std::vector<RunLedgerRow>& rows) {
    write_file(path, serialize_ledger(rows));
}

inline std::vector<RunLedgerRow> read_ledger(const fs::path& path) {
    std::vector<RunLedgerRow> rows;
    for (const auto& j : read_jsonl(path)) rows.push_back(ledger_row_from_json(j));
    return rows;
}

/// Re-derives BH verdicts per (run, dataset, intervention) family and returns
/// the ids whose stored verdict disagrees.
inline std::vector<std::string> verify_ledger(const std::vector<RunLedgerRow>& rows, double q) {
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<const RunLedgerRow*>> fam;
    for (const auto& r : rows) fam[{r.run_id, r.dataset, r.intervention}].push_back(&r);
    std::vector<std::string> bad;
    for (const auto& [k, members] : fam) {
        std::vector<double> ps;
        for (auto* r : members) ps.push_back(r->p_value);
        std::vector<bool> rej(ps.size(), false);
        if (q > 0) rej = stats::bh_reject(ps, q);
        for (std::size_t i = 0; i < members.size(); ++i)
            if (members[i]->validated != (rej[i] && !members[i]->degenerate)) bad.push_back(members[i]->hypothesis_id);
    }
    return bad;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // population
    std::size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
    MeanSd m;
    m.n = v.size();
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size()));
    return m;
}

inline std::string format_count(const MeanSd& m) {
    char buf[64];
    if (m.n <= 1) std::snprintf(buf, sizeof buf, "%.0f", m.mean);
    else std::snprintf(buf, sizeof buf, "%.1f \xC2\xB1 %.1f", m.mean, m.sd);
    return buf;
}

inline std::string format_auc(const std::optional<double>& v) {
    if (!v) return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return buf;
}

struct MetricsRow {
    std::string intervention;
    std::string dataset;
    std::size_t runs = 0;
    MeanSd hypotheses;
    MeanSd validated;
    std::optional<double> mean_auc_within;  // over validated rows of all runs
    std::optional<double> mean_auc_cross;
    std::optional<double> min_auc_validated;
};

inline std::vector<MetricsRow> compute_metrics(const std::vector<RunLedgerRow>& rows) {
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<const RunLedgerRow*>>> g;
    for (const auto& r : rows) g[{r.intervention, r.dataset}][r.run_id].push_back(&r);
    std::vector<MetricsRow> out;
    for (const auto& [key, runs] : g) {
        MetricsRow m;
        m.intervention = key.first;
        m.dataset = key.second;
        m.runs = runs.size();
        std::vector<double> hyp, val;
        double sw = 0, sc = 0;
        std::size_t nw = 0, nc = 0;
        for (const auto& [run, members] : runs) {
            hyp.push_back(static_cast<double>(members.size()));
            double v = 0;
            for (auto* r : members) {
                if (!r->validated) continue;
                ++v;
                sw += r->auc_within;
                ++nw;
                if (r->auc_cross) {
                    sc += *r->auc_cross;
                    ++nc;
                }
                m.min_auc_validated = m.min_auc_validated ? std::min(*m.min_auc_validated, r->auc_within) : r->auc_within;
            }
            val.push_back(v);
        }
        m.hypotheses = mean_sd(hyp);
        m.validated = mean_sd(val);
        if (nw) m.mean_auc_within = sw / static_cast<double>(nw);
        if (nc) m.mean_auc_cross = sc / static_cast<double>(nc);
        out.push_back(m);
    }
    return out;
}

inline std::string metrics_tsv(const std::vector<MetricsRow>& rows) {
    std::string s = "intervention\tdataset\truns\thypotheses\tvalidated\tauc_within\tauc_cross\tmin_auc_validated\n";
    for (const auto& m : rows) {
        s += m.intervention + "\t" + m.dataset + "\t" + std::to_string(m.runs) + "\t" + format_count(m.hypotheses) +
             "\t" + format_count(m.validated) + "\t" + format_auc(m.mean_auc_within) + "\t" +
             format_auc(m.mean_auc_cross) + "\t" + format_auc(m.min_auc_validated) + "\n";
    }
    return s;
}

inline void emit_metrics(const fs::path& path, const std::vector<MetricsRow>& rows) {
    write_file(path, metrics_tsv(rows));
}

inline void emit_summary(const fs::path& tex_path, const fs::path& json_path, const consol::ThematicSummary& s) {
    write_file(tex_path, s.text.ends_with("\n") ? s.text : s.text + "\n");
    write_file(json_path, to_json(s).dump(2) + "\n");
}

inline std::string usage_tsv(const llm::UsageReport& rep, const std::optional<llm::CostReport>& cost,
                             std::size_t hypothesis_count) {
    std::string s = "scope\tkey\tcalls_or_role\tinput_tokens\toutput_tokens\testimated\n";
    auto line = [&](const std::string& scope, const std::string& key, const std::string& extra, const llm::TokenUsage& u) {
        s += scope + "\t" + key + "\t" + extra + "\t" + std::to_string(u.input_tokens) + "\t" +
             std::to_string(u.output_tokens) + "\t" + (u.estimated ? "yes" : "no") + "\n";
    };
    line("total", "all", std::to_string(rep.calls), rep.total);
    for (const auto& [r, u] : rep.per_role) line("role", std::string(llm::to_string(r)), "", u);
    for (const auto& [st, u] : rep.per_stage) line("stage", st, "", u);
    for (const auto& [k, u] : rep.per_stage_role) line("stage_role", k.first, std::string(llm::to_string(k.second)), u);
    char buf[64];
    if (hypothesis_count) {
        std::snprintf(buf, sizeof buf, "%.1f\t%.1f", static_cast<double>(rep.total.input_tokens) / hypothesis_count,
                      static_cast<double>(rep.total.output_tokens) / hypothesis_count);
        s += "per_hypothesis\tmean\t" + std::to_string(hypothesis_count) + "\t" + buf + "\t\n";
    }
    if (cost) {
        std::snprintf(buf, sizeof buf, "%.6f", cost->total);
        s += "cost\ttotal\t\t" + std::string(buf) + "\t\t\n";
        for (const auto& [r, c] : cost->per_role) {
            std::snprintf(buf, sizeof buf, "%.6f", c);
            s += "cost\trole\t" + std::string(llm::to_string(r)) + "\t" + buf + "\t\t\n";
        }
        if (hypothesis_count) {
            std::snprintf(buf, sizeof buf, "%.6f", cost->total / static_cast<double>(hypothesis_count));
            s += "cost\tper_hypothesis\t\t" + std::string(buf) + "\t\t\n";
        }
    }
    return s;
}

} // namespace diffaudit::report
