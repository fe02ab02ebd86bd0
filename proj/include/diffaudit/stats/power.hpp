#pragma once

#include <cmath>
#include <cstdint>

#include "diffaudit/error.hpp"
#include "diffaudit/stats/normal.hpp"

namespace diffaudit::stats {

// Planning approximations for a balanced one-sided AUC test (m = n = N/2).
// Under H0 the AUC has standard error sqrt((N + 1) / (3 N^2)).

inline double auc_null_se(std::int64_t total_judgments) {
    const double n = static_cast<double>(total_judgments);
    return std::sqrt((n + 1.0) / (3.0 * n * n));
}

namespace detail {
inline void check_power_domain(std::int64_t n, double alpha) {
    if (n < 4 || n % 2 != 0) fail(ErrorKind::invalid_input, "power: N must be even and >= 4");
    if (!(alpha > 0.0 && alpha <= 0.5)) fail(ErrorKind::invalid_input, "power: alpha must lie in (0, 0.5]");
}
} // namespace detail

/// Smallest AUC reaching one-sided significance at level alpha.
inline double min_significant_auc(std::int64_t total_judgments, double alpha) {
    detail::check_power_domain(total_judgments, alpha);
    return 0.5 + upper_quantile(alpha) * auc_null_se(total_judgments);
}

/// Smallest AUC detected with power 1 - beta at level alpha.
inline double min_detectable_auc(std::int64_t total_judgments, double alpha, double beta) {
    detail::check_power_domain(total_judgments, alpha);
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::invalid_input, "power: beta must lie in (0, 1)");
    return 0.5 + (upper_quantile(alpha) + upper_quantile(beta)) * auc_null_se(total_judgments);
}

/// Judgments needed to detect an AUC gap delta = AUC - 0.5, rounded up to an even
/// count so the design stays balanced.
inline std::int64_t required_judgments(double delta, double alpha, double beta) {
    if (!(delta > 0.0 && delta < 0.5)) fail(ErrorKind::invalid_input, "power: delta must lie in (0, 0.5)");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::invalid_input, "power: alpha must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::invalid_input, "power: beta must lie in (0, 1)");
    const double z = upper_quantile(alpha) + upper_quantile(beta);
    auto n = static_cast<std::int64_t>(std::ceil(z * z / (3.0 * delta * delta)));
    if (n % 2 != 0) ++n;
    return n;
}

} // namespace diffaudit::stats
