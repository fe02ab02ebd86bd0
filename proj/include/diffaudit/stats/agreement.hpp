#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diffaudit/error.hpp"
#include "diffaudit/stats/ranks.hpp"

namespace diffaudit::stats {

/// Mean of (score/100 - label)^2; label true means the item came from M1.
inline double brier(std::span<const double> scores_0_100, const std::vector<bool>& labels) {
    if (scores_0_100.size() != labels.size()) fail(ErrorKind::invalid_input, "brier: length mismatch");
    if (labels.empty()) fail(ErrorKind::invalid_input, "brier: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double s = scores_0_100[i];
        if (!(s >= 0.0 && s <= 100.0)) fail(ErrorKind::invalid_input, "brier: scores must lie in [0, 100]");
        const double d = s / 100.0 - (labels[i] ? 1.0 : 0.0);
        sum += d * d;
    }
    return sum / static_cast<double>(labels.size());
}

/// Product-moment correlation; nullopt when either input is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::invalid_input, "pearson: length mismatch");
    if (x.size() < 2) fail(ErrorKind::invalid_input, "pearson: need at least two observations");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson correlation of midranks.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::invalid_input, "spearman: length mismatch");
    const auto rx = midranks(x), ry = midranks(y);
    return pearson(rx.ranks, ry.ranks);
}

/// Cohen's kappa for two raters; nullopt when chance agreement is 1.
template <class Label>
std::optional<double> cohen_kappa(const std::vector<Label>& r1, const std::vector<Label>& r2) {
    if (r1.size() != r2.size()) fail(ErrorKind::invalid_input, "cohen_kappa: length mismatch");
    if (r1.empty()) fail(ErrorKind::invalid_input, "cohen_kappa: empty input");
    const double n = static_cast<double>(r1.size());
    std::map<Label, double> m1, m2;
    double agree = 0.0;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        m1[r1[i]] += 1.0;
        m2[r2[i]] += 1.0;
        if (r1[i] == r2[i]) agree += 1.0;
    }
    double pe = 0.0;
    for (const auto& [label, c] : m1) {
        auto it = m2.find(label);
        if (it != m2.end()) pe += (c / n) * (it->second / n);
    }
    if (pe >= 1.0) return std::nullopt;
    return (agree / n - pe) / (1.0 - pe);
}

/// Fleiss' kappa from an item x category count table with a constant number of
/// raters per item; nullopt when expected agreement is 1.
inline std::optional<double> fleiss_kappa(const std::vector<std::vector<int>>& table) {
    if (table.empty()) fail(ErrorKind::invalid_input, "fleiss_kappa: empty table");
    const std::size_t k = table.front().size();
    int raters = -1;
    for (const auto& row : table) {
        if (row.size() != k) fail(ErrorKind::invalid_input, "fleiss_kappa: ragged table");
        int s = 0;
        for (int c : row) {
            if (c < 0) fail(ErrorKind::invalid_input, "fleiss_kappa: negative count");
            s += c;
        }
        if (raters < 0) raters = s;
        if (s != raters) fail(ErrorKind::invalid_input, "fleiss_kappa: raters per item must be constant");
    }
    if (raters < 2) fail(ErrorKind::invalid_input, "fleiss_kappa: need at least two raters");
    const double n = raters, items = static_cast<double>(table.size());
    double p_bar = 0.0;
    std::vector<double> col(k, 0.0);
    for (const auto& row : table) {
        double sq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            sq += static_cast<double>(row[j]) * row[j];
            col[j] += row[j];
        }
        p_bar += (sq - n) / (n * (n - 1.0));
    }
    p_bar /= items;
    double pe = 0.0;
    for (double c : col) {
        const double pj = c / (items * n);
        pe += pj * pj;
    }
    if (pe >= 1.0) return std::nullopt;
    return (p_bar - pe) / (1.0 - pe);
}

/// Jaccard index of the top ceil(frac * n) ids under two AUC maps
/// (descending AUC, ties broken by id).
inline double jaccard_top_fraction(const std::map<std::string, double>& auc_a,
                                   const std::map<std::string, double>& auc_b, double frac) {
    if (!(frac > 0.0 && frac <= 1.0)) fail(ErrorKind::invalid_input, "jaccard_top_fraction: frac must lie in (0, 1]");
    if (auc_a.size() != auc_b.size() ||
        !std::equal(auc_a.begin(), auc_a.end(), auc_b.begin(),
                    [](const auto& x, const auto& y) { return x.first == y.first; }))
        fail(ErrorKind::invalid_input, "jaccard_top_fraction: key sets differ");
    if (auc_a.empty()) fail(ErrorKind::invalid_input, "jaccard_top_fraction: empty maps");
    const auto top = [&](const std::map<std::string, double>& m) {
        std::vector<std::pair<std::string, double>> v(m.begin(), m.end());
        std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) {
            return x.second != y.second ? x.second > y.second : x.first < y.first;
        });
        const auto k = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(v.size()) - 1e-12));
        std::set<std::string> s;
        for (std::size_t i = 0; i < k && i < v.size(); ++i) s.insert(v[i].first);
        return s;
    };
    const auto a = top(auc_a), b = top(auc_b);
    std::size_t inter = 0;
    for (const auto& id : a) inter += b.count(id);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Lower-cased word set. Words are maximal runs of ASCII alphanumerics or
/// non-ASCII bytes, so multi-byte UTF-8 words stay intact.
inline std::set<std::string> unigram_set(std::string_view text) {
    std::set<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!cur.empty()) {
            words.insert(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.insert(std::move(cur));
    return words;
}

/// 1 - mean pairwise Jaccard similarity of unigram sets.
inline double unigram_jaccard_diversity(const std::vector<std::string>& texts) {
    if (texts.size() < 2) fail(ErrorKind::invalid_input, "diversity: need at least two texts");
    std::vector<std::set<std::string>> sets;
    sets.reserve(texts.size());
    for (const auto& t : texts) sets.push_back(unigram_set(t));
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            std::size_t inter = 0;
            for (const auto& w : sets[i]) inter += sets[j].count(w);
            const std::size_t uni = sets[i].size() + sets[j].size() - inter;
            total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
            ++pairs;
        }
    }
    return 1.0 - total / static_cast<double>(pairs);
}

} // namespace diffaudit::stats
