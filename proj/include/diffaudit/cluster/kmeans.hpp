#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <vector>

#include "diffaudit/error.hpp"
#include "diffaudit/random.hpp"

namespace diffaudit::cluster {

struct KMeansOptions {
    int n_init = 10;
    int max_iter = 300;
};

struct KMeansResult {
    std::vector<int> labels;           // one per row of the input
    Eigen::MatrixXd centers;           // k x d
    double wcss = 0.0;                 // within-cluster sum of squares
    std::vector<double> wcss_trace;    // per Lloyd iteration, winning restart
    int iterations = 0;
};

namespace detail {

inline double wcss_of(const Eigen::MatrixXd& x, const std::vector<int>& labels, const Eigen::MatrixXd& centers) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - centers.row(labels[i])).squaredNorm();
    return s;
}

inline Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& x, int k, Rng& rng) {
    const auto n = x.rows();
    Eigen::MatrixXd centers(k, x.cols());
    centers.row(0) = x.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
        } else {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (r < acc && d2(i) > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

inline void assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, std::vector<int>& labels) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const double d = (x.row(i) - centers.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                arg = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
    }
}

/// Moves the farthest member of the largest cluster into each empty cluster.
inline void repair_empty(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, std::vector<int>& labels, int k) {
    for (;;) {
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
        int empty = -1, largest = 0;
        for (int c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] == 0 && empty < 0) empty = c;
            if (sizes[static_cast<std::size_t>(c)] > sizes[static_cast<std::size_t>(largest)]) largest = c;
        }
        if (empty < 0) return;
        Eigen::Index far = -1;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (labels[static_cast<std::size_t>(i)] != largest) continue;
            const double d = (x.row(i) - centers.row(largest)).squaredNorm();
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        labels[static_cast<std::size_t>(far)] = empty;
    }
}

inline Eigen::MatrixXd update_centers(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k) {
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        centers.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return centers;
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding; best of n_init restarts by WCSS.
/// Rows of `x` are points. Deterministic for a given seed.
inline KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, KMeansOptions opt = {}) {
    const auto n = x.rows();
    if (k < 1) fail(ErrorKind::invalid_input, "kmeans: k must be >= 1");
    if (n < k) fail(ErrorKind::invalid_input, "kmeans: k=" + std::to_string(k) + " exceeds point count " +
                                                  std::to_string(n));
    if (opt.n_init < 1 || opt.max_iter < 1) fail(ErrorKind::invalid_input, "kmeans: n_init and max_iter must be >= 1");
    if (!x.allFinite()) fail(ErrorKind::invalid_input, "kmeans: non-finite input");

    Rng rng(seed);
    KMeansResult best;
    best.wcss = std::numeric_limits<double>::infinity();
    for (int run = 0; run < opt.n_init; ++run) {
        KMeansResult cur;
        cur.centers = detail::plus_plus_init(x, k, rng);
        cur.labels.assign(static_cast<std::size_t>(n), -1);
        std::vector<int> prev;
        for (int it = 0; it < opt.max_iter; ++it) {
            detail::assign(x, cur.centers, cur.labels);
            detail::repair_empty(x, cur.centers, cur.labels, k);
            cur.centers = detail::update_centers(x, cur.labels, k);
            cur.wcss_trace.push_back(detail::wcss_of(x, cur.labels, cur.centers));
            cur.iterations = it + 1;
            if (cur.labels == prev) break;
            prev = cur.labels;
        }
        cur.wcss = cur.wcss_trace.back();
        if (cur.wcss < best.wcss) best = std::move(cur);
    }
    return best;
}

inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                           KMeansOptions opt = {}) {
    if (points.empty()) fail(ErrorKind::invalid_input, "kmeans: no points");
    const auto d = points.front().size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != d) fail(ErrorKind::invalid_input, "kmeans: ragged input");
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
    }
    return kmeans(x, k, seed, opt);
}

} // namespace diffaudit::cluster
