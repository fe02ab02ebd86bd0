#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

namespace diffaudit::stats {

struct RankResult {
    std::vector<double> ranks;       // 1-based midranks, input order
    std::vector<std::size_t> ties;   // sizes of tie groups with t > 1
};

inline RankResult midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    RankResult out;
    out.ranks.assign(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // positions i..j-1 (0-based) share rank ((i+1) + j) / 2
        const double r = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) out.ranks[order[k]] = r;
        if (j - i > 1) out.ties.push_back(j - i);
        i = j;
    }
    return out;
}

/// sum over tie groups of (t^3 - t)
inline double tie_term(const std::vector<std::size_t>& ties) {
    double s = 0.0;
    for (auto t : ties) {
        const double td = static_cast<double>(t);
        s += td * td * td - td;
    }
    return s;
}

} // namespace diffaudit::stats
