#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "diffaudit/error.hpp"

namespace diffaudit::stats {

struct FactorObservation {
    double value = 0.0;
    std::array<std::string, 3> levels;  // factor A, B, C
};

/// Main-effects decomposition Y = mu + a_i + b_j + c_k + e. Each factor's sum of
/// squares is computed from its level means against the grand mean; the residual
/// takes whatever the main effects leave of the total.
struct VarianceDecomposition {
    std::array<double, 3> ss_factor{};
    double ss_residual = 0.0;
    double ss_total = 0.0;
    std::array<double, 3> pct_factor{};
    double pct_residual = 0.0;
};

inline VarianceDecomposition variance_decomposition(const std::vector<FactorObservation>& obs) {
    if (obs.size() < 2) fail(ErrorKind::invalid_input, "variance_decomposition: need observations");
    double grand = 0.0;
    for (const auto& o : obs) grand += o.value;
    grand /= static_cast<double>(obs.size());

    VarianceDecomposition out;
    for (const auto& o : obs) out.ss_total += (o.value - grand) * (o.value - grand);

    for (std::size_t f = 0; f < 3; ++f) {
        std::map<std::string, std::pair<double, std::size_t>> by_level;
        for (const auto& o : obs) {
            auto& [sum, count] = by_level[o.levels[f]];
            sum += o.value;
            ++count;
        }
        if (by_level.size() < 2)
            fail(ErrorKind::invalid_input,
                 "variance_decomposition: factor " + std::to_string(f) + " has a single level");
        for (const auto& [level, sc] : by_level) {
            const double mean = sc.first / static_cast<double>(sc.second);
            out.ss_factor[f] += static_cast<double>(sc.second) * (mean - grand) * (mean - grand);
        }
    }
    out.ss_residual = out.ss_total - out.ss_factor[0] - out.ss_factor[1] - out.ss_factor[2];
    if (out.ss_total > 0.0) {
        for (std::size_t f = 0; f < 3; ++f) out.pct_factor[f] = 100.0 * out.ss_factor[f] / out.ss_total;
        out.pct_residual = 100.0 - out.pct_factor[0] - out.pct_factor[1] - out.pct_factor[2];
    }
    return out;
}

} // namespace diffaudit::stats
