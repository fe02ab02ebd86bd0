#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "diffaudit/cluster/kmeans.hpp"
#include "diffaudit/hypothesis.hpp"
#include "diffaudit/stats.hpp"
#include "diffaudit/validate.hpp"

namespace diffaudit::consol {

inline std::vector<val::Example> build_shared_eval_set(const std::vector<val::Example>& pooled, std::size_t size,
                                                       std::uint64_t seed) {
    if (pooled.empty()) fail(ErrorKind::invalid_input, "shared evaluation set: empty pool");
    return val::sample_balanced(pooled, size, seed, "shared evaluation set");
}

struct ScoreMatrix {
    std::vector<std::string> rows;  // hypothesis ids
    std::vector<std::string> cols;  // example ids
    std::vector<gen::ModelTag> labels;
    Eigen::MatrixXd values;         // rows x cols
};

using JudgmentCache = std::map<std::pair<std::string, std::string>, val::JudgmentRecord>;  // (hypothesis, example)

/// Scores every (hypothesis, example) cell. Columns with any dropped cell are
/// removed for all rows, then the newest majority-label columns are removed until balanced.
/// Cells found in `cache` with a kept score are reused instead of re-requested.
inline ScoreMatrix build_score_matrix(const std::vector<hyp::Hypothesis>& hyps, const std::vector<val::Example>& examples,
                                      llm::LlmClient& client, std::size_t threads,
                                      std::vector<val::JudgmentRecord>* log = nullptr, val::ScoreRange range = {},
                                      const JudgmentCache* cache = nullptr) {
    const std::size_t R = hyps.size(), C = examples.size();
    auto cells = parallel_map<val::JudgmentRecord>(R * C, threads, [&](std::size_t idx) {
        const auto& h = hyps[idx / C];
        if (cache) {
            auto it = cache->find({h.hypothesis_id, examples[idx % C].example_id});
            if (it != cache->end() && it->second.kept()) {
                auto j = it->second;
                j.purpose = "shared";
                return j;
            }
        }
        auto j = val::score_example(h.hypothesis_id, h.text, examples[idx % C], client, range);
        j.purpose = "shared";
        return j;
    });
    std::vector<bool> keep(C, true);
    for (std::size_t idx = 0; idx < cells.size(); ++idx)
        if (!cells[idx].kept()) keep[idx % C] = false;
    long bal = 0;
    for (std::size_t c = 0; c < C; ++c)
        if (keep[c]) bal += examples[c].label == gen::ModelTag::M1 ? 1 : -1;
    for (std::size_t c = C; c-- > 0 && bal != 0;) {
        if (!keep[c]) continue;
        const long v = examples[c].label == gen::ModelTag::M1 ? 1 : -1;
        if ((v > 0) == (bal > 0)) {
            keep[c] = false;
            bal -= v;
        }
    }
    ScoreMatrix m;
    for (const auto& h : hyps) m.rows.push_back(h.hypothesis_id);
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < C; ++c)
        if (keep[c]) {
            cols.push_back(c);
            m.cols.push_back(examples[c].example_id);
            m.labels.push_back(examples[c].label);
        }
    m.values.resize(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t k = 0; k < cols.size(); ++k)
            m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = *cells[r * C + cols[k]].score;
    if (log) {
        for (auto& c : cells) log->push_back(std::move(c));
    }
    return m;
}

struct Affinity {
    std::vector<std::string> ids;       // rows kept (non-constant)
    std::vector<std::string> excluded;  // constant score rows
    Eigen::MatrixXd rho;                // Pearson correlations among kept rows
    Eigen::MatrixXd a;                  // (rho + 1) / 2, unit diagonal
};

inline Affinity affinity_matrix(const ScoreMatrix& s) {
    Affinity out;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
        const auto row = s.values.row(r);
        if (row.size() >= 2 && row.maxCoeff() > row.minCoeff()) {
            kept.push_back(r);
            out.ids.push_back(s.rows[static_cast<std::size_t>(r)]);
        } else {
            out.excluded.push_back(s.rows[static_cast<std::size_t>(r)]);
        }
    }
    if (kept.empty()) fail(ErrorKind::invalid_input, "affinity: every score row is constant");
    const auto n = static_cast<Eigen::Index>(kept.size());
    out.rho = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd xi = s.values.row(kept[static_cast<std::size_t>(i)]).transpose();
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Eigen::VectorXd xj = s.values.row(kept[static_cast<std::size_t>(j)]).transpose();
            const auto r = stats::pearson(std::span<const double>(xi.data(), static_cast<std::size_t>(xi.size())),
                                          std::span<const double>(xj.data(), static_cast<std::size_t>(xj.size())));
            out.rho(i, j) = out.rho(j, i) = r.value_or(0.0);
        }
    }
    out.a = (out.rho.array() + 1.0) / 2.0;
    out.a.diagonal().setOnes();
    return out;
}

struct SpectralResult {
    std::vector<int> labels;
    Eigen::VectorXd eigenvalues;   // retained (k smallest)
    double max_residual = 0.0;     // max ||L v - lambda v|| over retained pairs
};

inline SpectralResult spectral_cluster(const Eigen::MatrixXd& a, int k, std::uint64_t seed) {
    const auto n = a.rows();
    if (a.cols() != n) fail(ErrorKind::invalid_input, "spectral_cluster: affinity must be square");
    if (k < 2 || k > n) fail(ErrorKind::invalid_input, "spectral_cluster: need 2 <= k <= n");
    if (!a.isApprox(a.transpose(), 1e-12)) fail(ErrorKind::invalid_input, "spectral_cluster: affinity not symmetric");
    const Eigen::VectorXd deg = a.rowwise().sum();
    Eigen::VectorXd dinv(n);
    for (Eigen::Index i = 0; i < n; ++i) dinv(i) = deg(i) > 0 ? 1.0 / std::sqrt(deg(i)) : 0.0;
    const Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n, n) - dinv.asDiagonal() * a * dinv.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    if (es.info() != Eigen::Success) fail(ErrorKind::stage, "spectral_cluster: eigendecomposition failed");
    SpectralResult out;
    Eigen::MatrixXd u = es.eigenvectors().leftCols(k);
    out.eigenvalues = es.eigenvalues().head(k);
    for (int j = 0; j < k; ++j)
        out.max_residual = std::max(out.max_residual, (l * u.col(j) - out.eigenvalues(j) * u.col(j)).norm());
    if (out.max_residual > 1e-8)
        fail(ErrorKind::inconsistency, "spectral_cluster: eigen residual " + std::to_string(out.max_residual));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = u.row(i).norm();
        if (norm > 0) u.row(i) /= norm;
    }
    out.labels = cluster::kmeans(u, k, seed).labels;
    return out;
}

/// Mean silhouette on a precomputed distance matrix; singleton members score 0.
inline double silhouette(const Eigen::MatrixXd& d, const std::vector<int>& labels) {
    const auto n = static_cast<std::size_t>(d.rows());
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sum[static_cast<std::size_t>(labels[j])] += d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            ++cnt[static_cast<std::size_t>(labels[j])];
        }
        const auto own = static_cast<std::size_t>(labels[i]);
        if (cnt[own] == 0) continue;
        const double a = sum[own] / cnt[own];
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
            if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
        if (!std::isfinite(b)) continue;
        const double m = std::max(a, b);
        total += m > 0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(n);
}

struct CompressionResult {
    bool skipped = false;  // fewer than 9 hypotheses
    int chosen_k = 0;
    std::vector<int> labels;            // aligned with the affinity ids
    double silhouette = 0.0;
    std::map<int, double> sweep;        // k -> silhouette
    std::map<int, std::string> representatives;
};

inline CompressionResult select_k(const Eigen::MatrixXd& a, std::uint64_t seed, int k_min = 3, int k_max = 8) {
    const int n = static_cast<int>(a.rows());
    CompressionResult out;
    const int hi = std::min(k_max, n / 3);
    if (n < 9 || hi < k_min) {
        out.skipped = true;
        return out;
    }
    const Eigen::MatrixXd d = (1.0 - a.array()).matrix();
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= hi; ++k) {
        const auto sc = spectral_cluster(a, k, seed);
        const double s = silhouette(d, sc.labels);
        out.sweep[k] = s;
        if (s > best) {  // strict: ties keep the smaller k
            best = s;
            out.chosen_k = k;
            out.labels = sc.labels;
            out.silhouette = s;
        }
    }
    return out;
}

/// Two-stage rule: keep the top ceil(|C|/2) members by mean within-cluster
/// correlation, then take the highest AUC. All ties go to the lowest id.
inline std::string pick_representative_by_rhobar(const std::vector<std::string>& members,
                                                 const std::map<std::string, double>& rhobar,
                                                 const std::map<std::string, double>& auc_within) {
    if (members.empty()) fail(ErrorKind::invalid_input, "pick_representative: empty cluster");
    auto sorted = members;
    std::sort(sorted.begin(), sorted.end(), [&](const std::string& x, const std::string& y) {
        const double rx = rhobar.at(x), ry = rhobar.at(y);
        return rx != ry ? rx > ry : x < y;
    });
    sorted.resize((members.size() + 1) / 2);
    std::string best = sorted.front();
    for (const auto& id : sorted) {
        const double a = auc_within.at(id), b = auc_within.at(best);
        if (a > b || (a == b && id < best)) best = id;
    }
    return best;
}

inline std::string pick_representative(const std::vector<std::string>& members, const Eigen::MatrixXd& rho,
                                       const std::map<std::string, Eigen::Index>& index,
                                       const std::map<std::string, double>& auc_within) {
    std::map<std::string, double> rhobar;
    for (const auto& i : members) {
        if (members.size() == 1) {
            rhobar[i] = 1.0;
            continue;
        }
        double s = 0.0;
        for (const auto& j : members)
            if (j != i) s += rho(index.at(i), index.at(j));
        rhobar[i] = s / static_cast<double>(members.size() - 1);
    }
    return pick_representative_by_rhobar(members, rhobar, auc_within);
}

/// Fills representatives for every cluster of a finished compression.
inline void assign_representatives(CompressionResult& cr, const Affinity& aff,
                                   const std::map<std::string, double>& auc_within) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t i = 0; i < aff.ids.size(); ++i) index[aff.ids[i]] = static_cast<Eigen::Index>(i);
    std::map<int, std::vector<std::string>> members;
    for (std::size_t i = 0; i < cr.labels.size(); ++i) members[cr.labels[i]].push_back(aff.ids[i]);
    for (const auto& [c, ids] : members) cr.representatives[c] = pick_representative(ids, aff.rho, index, auc_within);
}

// Thematic summary.

struct Citation {
    std::string dataset;
    int number = 0;
    auto operator<=>(const Citation&) const = default;
};

struct SummaryItem {
    std::string name;
    std::string description;
    std::vector<Citation> citations;
};

struct SummaryCategory {
    std::string name;
    std::vector<SummaryItem> items;
};

struct ThematicSummary {
    std::string prompt;
    std::string text;  // verbatim reply
    bool parsed = false;
    std::vector<SummaryCategory> categories;
    std::vector<std::string> warnings;
};

/// Reads a balanced {...} group starting at `pos` (which must point at '{').
inline std::optional<std::string> brace_group(const std::string& s, std::size_t& pos) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos >= s.size() || s[pos] != '{') return std::nullopt;
    int depth = 0;
    const std::size_t start = pos + 1;
    for (; pos < s.size(); ++pos) {
        if (s[pos] == '\\' && pos + 1 < s.size()) {
            ++pos;
            continue;
        }
        if (s[pos] == '{') ++depth;
        else if (s[pos] == '}' && --depth == 0) return s.substr(start, pos++ - start);
    }
    return std::nullopt;
}

inline std::vector<Citation> parse_citations(const std::string& text) {
    static const std::regex group(R"(\(\s*([A-Za-z][A-Za-z0-9_\- ]*?)\s*:\s*([0-9][0-9,\s]*)\))");
    static const std::regex num(R"(\d+)");
    std::vector<Citation> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), group); it != std::sregex_iterator(); ++it) {
        const std::string ds = (*it)[1].str(), nums = (*it)[2].str();
        for (auto n = std::sregex_iterator(nums.begin(), nums.end(), num); n != std::sregex_iterator(); ++n)
            out.push_back({ds, std::stoi(n->str())});
    }
    return out;
}

inline void parse_summary(ThematicSummary& s, const std::set<Citation>& valid) {
    const std::string& t = s.text;
    static const std::string cat = "\\catrow", item = "\\itemrow";
    std::size_t pos = 0;
    while (true) {
        const auto c = t.find(cat, pos), i = t.find(item, pos);
        if (c == std::string::npos && i == std::string::npos) break;
        if (c != std::string::npos && (i == std::string::npos || c < i)) {
            pos = c + cat.size();
            auto name = brace_group(t, pos);
            if (!name) {
                s.warnings.push_back("malformed \\catrow");
                break;
            }
            s.categories.push_back({*name, {}});
        } else {
            pos = i + item.size();
            auto name = brace_group(t, pos);
            auto desc = name ? brace_group(t, pos) : std::nullopt;
            if (!name || !desc) {
                s.warnings.push_back("malformed \\itemrow");
                break;
            }
            if (s.categories.empty()) {
                s.warnings.push_back("\\itemrow before any \\catrow");
                s.categories.push_back({"", {}});
            }
            SummaryItem it{*name, *desc, parse_citations(*desc)};
            for (const auto& ci : it.citations)
                if (!valid.count(ci))
                    s.warnings.push_back("citation (" + ci.dataset + ": " + std::to_string(ci.number) +
                                         ") does not match a validated hypothesis");
            s.categories.back().items.push_back(std::move(it));
        }
    }
    s.parsed = !s.categories.empty();
    if (!s.parsed) s.warnings.push_back("summary reply does not follow the row markers; stored verbatim only");
}

inline ThematicSummary thematic_summary(const std::vector<hyp::Hypothesis>& validated, llm::LlmClient& client) {
    if (validated.empty()) fail(ErrorKind::invalid_input, "thematic_summary: no validated hypotheses");
    std::vector<templates::CitedHypothesis> cited;
    std::set<Citation> valid;
    for (const auto& h : validated) {
        cited.push_back({h.dataset, h.number, h.text});
        valid.insert({h.dataset, h.number});
    }
    ThematicSummary s;
    s.prompt = templates::summary_prompt(cited);
    s.text = client.complete(llm::Role::summarizer, llm::ChatRequest::user(s.prompt)).text;
    parse_summary(s, valid);
    return s;
}

inline json to_json(const ThematicSummary& s) {
    json cats = json::array();
    for (const auto& c : s.categories) {
        json items = json::array();
        for (const auto& i : c.items) {
            json cites = json::array();
            for (const auto& ci : i.citations) cites.push_back({{"dataset", ci.dataset}, {"number", ci.number}});
            items.push_back({{"name", i.name}, {"description", i.description}, {"citations", cites}});
        }
        cats.push_back({{"name", c.name}, {"items", items}});
    }
    return {{"parsed", s.parsed}, {"categories", cats}, {"warnings", s.warnings}};
}

} // namespace diffaudit::consol
