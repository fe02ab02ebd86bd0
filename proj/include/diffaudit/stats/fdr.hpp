#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "diffaudit/error.hpp"

namespace diffaudit::stats {

/// Benjamini-Hochberg step-up. Finds the largest i with p_(i) <= (i/M) q and
/// rejects every hypothesis whose p-value is <= p_(i).
inline std::vector<bool> bh_reject(std::span<const double> pvalues, double q) {
    const std::size_t m = pvalues.size();
    std::vector<bool> reject(m, false);
    if (m == 0) return reject;
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::invalid_input, "bh_reject: p-values must lie in [0, 1]");
    if (!(q > 0.0 && q < 1.0)) fail(ErrorKind::invalid_input, "bh_reject: q must lie in (0, 1)");

    std::vector<double> sorted(pvalues.begin(), pvalues.end());
    std::sort(sorted.begin(), sorted.end());
    std::optional<double> cutoff;
    for (std::size_t i = m; i >= 1; --i) {
        if (sorted[i - 1] <= static_cast<double>(i) / static_cast<double>(m) * q) {
            cutoff = sorted[i - 1];
            break;
        }
    }
    if (!cutoff) return reject;
    for (std::size_t j = 0; j < m; ++j) reject[j] = pvalues[j] <= *cutoff;
    return reject;
}

/// Riemann zeta for s > 1 (Euler-Maclaurin tail after 1000 terms).
inline double zeta(double s) {
    constexpr int n = 1000;
    double sum = 0.0;
    for (int j = n - 1; j >= 1; --j) sum += std::pow(static_cast<double>(j), -s);
    const double nd = n;
    sum += std::pow(nd, 1.0 - s) / (s - 1.0) + 0.5 * std::pow(nd, -s) +
           s * std::pow(nd, -s - 1.0) / 12.0 -
           s * (s + 1.0) * (s + 2.0) * std::pow(nd, -s - 3.0) / 720.0;
    return sum;
}

struct SaffronConfig {
    double alpha = 0.05;           // target FDR
    double lambda = 0.5;           // candidacy threshold
    std::optional<double> w0;      // initial wealth; alpha/2 when unset
    double gamma_exponent = 1.6;   // gamma_j proportional to j^-exponent, summing to 1

    double initial_wealth() const { return w0.value_or(alpha / 2.0); }
};

/// Online FDR state (SAFFRON). Holds the full decision history so the test
/// level at step t can be recomputed from the p-value prefix alone.
struct SaffronState {
    SaffronConfig config;
    bool initialized = false;
    double gamma_norm = 1.0;
    std::vector<bool> candidate;           // C_j, j = 1..t
    std::vector<std::size_t> rejections;   // tau_1 < tau_2 < ... (1-based)
    std::vector<double> levels;            // alpha_j
    double spent = 0.0;                    // sum of alpha_j / (1 - lambda) over non-candidates

    std::size_t tested() const { return candidate.size(); }
    std::size_t rejected() const { return rejections.size(); }

    double gamma(std::size_t j) const {
        return std::pow(static_cast<double>(j), -config.gamma_exponent) / gamma_norm;
    }

    /// Budget earned so far minus budget spent; never negative by construction.
    double wealth() const {
        const double a = config.alpha, w0 = config.initial_wealth();
        const std::size_t r = rejected();
        double earned = w0;
        if (r >= 1) earned += a - w0;
        if (r >= 2) earned += a * static_cast<double>(r - 1);
        return earned - spent;
    }

    /// Estimated false discovery proportion tracked by the procedure.
    double estimated_fdp() const {
        return spent / static_cast<double>(std::max<std::size_t>(rejected(), 1));
    }

    /// Test level for the next hypothesis (t = tested() + 1).
    double next_level() const {
        const std::size_t t = tested() + 1;
        const double a = config.alpha, lam = config.lambda, w0 = config.initial_wealth();
        auto candidates_between = [&](std::size_t from, std::size_t to) {  // (from, to), 1-based exclusive
            std::size_t c = 0;
            for (std::size_t i = from + 1; i < to; ++i) c += candidate[i - 1] ? 1 : 0;
            return c;
        };
        double sum = w0 * gamma(t - candidates_between(0, t));
        for (std::size_t j = 0; j < rejections.size(); ++j) {
            const std::size_t tau = rejections[j];
            const std::size_t idx = t - tau - candidates_between(tau, t);
            sum += (j == 0 ? a - w0 : a) * gamma(idx);
        }
        return std::min(lam, (1.0 - lam) * sum);
    }
};

inline SaffronState saffron_init(const SaffronConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) fail(ErrorKind::invalid_input, "saffron: alpha must lie in (0, 1)");
    if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0)) fail(ErrorKind::invalid_input, "saffron: lambda must lie in (0, 1)");
    if (!(cfg.gamma_exponent > 1.0)) fail(ErrorKind::invalid_input, "saffron: gamma exponent must exceed 1");
    const double w0 = cfg.initial_wealth();
    if (!(w0 >= 0.0 && w0 <= (1.0 - cfg.lambda) * cfg.alpha + 1e-15))
        fail(ErrorKind::invalid_input, "saffron: initial wealth must lie in [0, (1 - lambda) alpha]");
    SaffronState s;
    s.config = cfg;
    s.initialized = true;
    s.gamma_norm = zeta(cfg.gamma_exponent);
    return s;
}

struct SaffronDecision {
    bool reject = false;
    bool candidate = false;
    double level = 0.0;  // alpha_t used for this test
};

struct SaffronStep {
    SaffronDecision decision;
    SaffronState state;
};

inline SaffronStep saffron_step(SaffronState state, double p) {
    if (!state.initialized) fail(ErrorKind::invalid_input, "saffron_step: state not initialized");
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::invalid_input, "saffron_step: p must lie in [0, 1]");
    SaffronDecision d;
    d.level = state.next_level();
    d.candidate = p < state.config.lambda;
    d.reject = p <= d.level;
    const std::size_t t = state.tested() + 1;
    state.candidate.push_back(d.candidate);
    state.levels.push_back(d.level);
    if (!d.candidate) state.spent += d.level / (1.0 - state.config.lambda);
    if (d.reject) state.rejections.push_back(t);
    return {d, std::move(state)};
}

} // namespace diffaudit::stats
