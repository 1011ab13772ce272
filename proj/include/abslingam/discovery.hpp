#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "abslingam/errors.hpp"
#include "abslingam/scm.hpp"

namespace abslingam {

/// Forbidden directed paths (k, h): no path k -> ... -> h may appear in the
/// discovered graph.
struct PriorKnowledge {
    std::set<std::pair<int, int>> forbidden_paths;

    bool forbids(int k, int h) const { return forbidden_paths.contains({k, h}); }
    bool empty() const { return forbidden_paths.empty(); }

    void check_bounds(int n_vars) const {
        for (const auto& [k, h] : forbidden_paths) {
            if (k == h) throw std::invalid_argument("PriorKnowledge: self pair (" + std::to_string(k) + ")");
            if (k < 0 || h < 0 || k >= n_vars || h >= n_vars)
                throw IndexOutOfRange("PriorKnowledge: pair out of range");
        }
    }
};

struct DiscoveryConfig {
    double prune_threshold = 0.05;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (prune_threshold < 0.0)
            throw std::invalid_argument("DiscoveryConfig: prune_threshold must be nonnegative");
    }
};

namespace detail {

// Maximum-entropy approximation of differential entropy for a standardized
// variable (Hyvarinen's constants, as used by DirectLiNGAM).
constexpr double kEntropyK1 = 79.047;
constexpr double kEntropyK2 = 7.4129;
constexpr double kEntropyGamma = 0.37457;

inline double approx_entropy(const Eigen::ArrayXd& u) {
    // E log cosh u via |u| + log1p(exp(-2|u|)) - log 2, which vectorizes.
    const Eigen::ArrayXd a = u.abs();
    const double log_cosh = (a + (-2.0 * a).exp().log1p()).mean() - std::numbers::ln2;
    const double skew_proxy = (u * (-0.5 * u.square()).exp()).mean();
    const double h_gauss = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
    return h_gauss - kEntropyK1 * (log_cosh - kEntropyGamma) * (log_cosh - kEntropyGamma) -
           kEntropyK2 * skew_proxy * skew_proxy;
}

inline Eigen::ArrayXd standardized(const Eigen::ArrayXd& u, const char* who) {
    const double mean = u.mean();
    const Eigen::ArrayXd centered = u - mean;
    const double var = centered.square().mean();
    if (var < 1e-12) throw DegenerateColumn(std::string(who) + ": zero-variance column");
    return centered / std::sqrt(var);
}

}  // namespace detail

/// Entropy-based likelihood-ratio statistic; positive favors x -> y.
inline double pairwise_statistic(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw ShapeMismatch("pairwise_statistic: column length mismatch");
    if (x.size() == 0) throw DegenerateColumn("pairwise_statistic: empty columns");
    const Eigen::ArrayXd xs = detail::standardized(x.array(), "pairwise_statistic");
    const Eigen::ArrayXd ys = detail::standardized(y.array(), "pairwise_statistic");
    const double corr = (xs * ys).mean();
    const double res_var = 1.0 - corr * corr;
    if (res_var < 1e-12)
        throw DegenerateColumn("pairwise_statistic: residual has zero variance");
    const double inv_std = 1.0 / std::sqrt(res_var);
    const Eigen::ArrayXd res_x_on_y = (xs - corr * ys) * inv_std;
    const Eigen::ArrayXd res_y_on_x = (ys - corr * xs) * inv_std;
    return (detail::approx_entropy(ys) + detail::approx_entropy(res_x_on_y)) -
           (detail::approx_entropy(xs) + detail::approx_entropy(res_y_on_x));
}

struct CausalOrderResult {
    std::vector<int> order;
    long long pair_evals = 0;
};

/// Greedy root extraction: each round picks the variable minimizing
/// sum_j min(0, statistic)^2, then regresses it out of the rest. Candidate
/// scores are evaluated per ordered pair: when the knowledge says j cannot be
/// an ancestor of i, the pair carries no evidence against i being a root, so
/// its term is zero and the statistic is never computed. That skip is where
/// the prior knowledge saves work.
inline CausalOrderResult causal_order(const Eigen::MatrixXd& data, const PriorKnowledge& k = {}) {
    const int d = static_cast<int>(data.cols());
    const Eigen::Index n = data.rows();
    if (n == 0 || d == 0) throw DegenerateColumn("causal_order: empty data");
    k.check_bounds(d);
    if (n <= d)
        std::cerr << "causal_order: warning, n_samples <= n_vars (" << n << " <= " << d << ")\n";

    Eigen::MatrixXd x(n, d);
    for (int c = 0; c < d; ++c)
        x.col(c) = detail::standardized(data.col(c).array(), "causal_order").matrix();

    CausalOrderResult res;
    std::vector<int> remaining(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) remaining[static_cast<std::size_t>(i)] = i;

    while (remaining.size() > 1) {
        const std::size_t m = remaining.size();
        std::vector<double> score(m, 0.0);
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = 0; b < m; ++b) {
                if (a == b) continue;
                const int i = remaining[a];
                const int j = remaining[b];
                if (k.forbids(j, i)) continue;  // j cannot precede i
                const double s = pairwise_statistic(x.col(i), x.col(j));
                ++res.pair_evals;
                score[a] += std::min(0.0, s) * std::min(0.0, s);
            }
        }
        std::size_t best = 0;
        for (std::size_t a = 1; a < m; ++a)
            if (score[a] < score[best]) best = a;  // ties keep the smallest index
        const int root = remaining[best];

        for (std::size_t a = 0; a < m; ++a) {
            const int i = remaining[a];
            if (i == root) continue;
            const double corr = (x.col(i).array() * x.col(root).array()).mean();
            const double res_var = 1.0 - corr * corr;
            if (res_var < 1e-12)
                throw DegenerateColumn("causal_order: residual collapse on variable " +
                                       std::to_string(i));
            x.col(i) = ((x.col(i).array() - corr * x.col(root).array()) / std::sqrt(res_var)).matrix();
        }
        res.order.push_back(root);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    }
    res.order.push_back(remaining.front());
    return res;
}

namespace detail {

/// Finds one directed path src -> ... -> dst in the support, returned as a
/// vertex sequence; empty if none.
inline std::vector<int> find_path(const Eigen::MatrixXd& w, int src, int dst) {
    const int n = static_cast<int>(w.rows());
    std::vector<int> parent(static_cast<std::size_t>(n), -2);
    std::vector<int> queue{src};
    parent[static_cast<std::size_t>(src)] = -1;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int u = queue[head];
        for (int v = 0; v < n; ++v) {
            if (w(u, v) == 0.0 || parent[static_cast<std::size_t>(v)] != -2) continue;
            parent[static_cast<std::size_t>(v)] = u;
            if (v == dst) {
                std::vector<int> path{v};
                for (int p = u; p != -1; p = parent[static_cast<std::size_t>(p)]) path.push_back(p);
                std::reverse(path.begin(), path.end());
                return path;
            }
            queue.push_back(v);
        }
    }
    return {};
}

}  // namespace detail

struct PruneResult {
    Eigen::MatrixXd weights;
    Eigen::MatrixXd scores;        // unthresholded coefficients, for ranking edges
    bool used_ridge = false;       // collinear predecessors hit the ridge fallback
    int closure_removals = 0;      // edges dropped to restore forbidden-path safety
};

/// Least-squares pruning along a causal order. Forbidden direct parents are
/// excluded from each regression; any surviving forbidden *path* is broken by
/// deleting the weakest edge on it until none remains.
inline PruneResult prune_edges(const Eigen::MatrixXd& data, const std::vector<int>& order,
                               const PriorKnowledge& k, const DiscoveryConfig& cfg) {
    cfg.validate();
    const int d = static_cast<int>(data.cols());
    k.check_bounds(d);
    Eigen::MatrixXd x(data.rows(), d);
    for (int c = 0; c < d; ++c)
        x.col(c) = detail::standardized(data.col(c).array(), "prune_edges").matrix();

    PruneResult res;
    res.weights = Eigen::MatrixXd::Zero(d, d);
    res.scores = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t pos = 1; pos < order.size(); ++pos) {
        const int target = order[pos];
        std::vector<int> preds;
        for (std::size_t p = 0; p < pos; ++p)
            if (!k.forbids(order[p], target)) preds.push_back(order[p]);
        if (preds.empty()) continue;

        Eigen::MatrixXd p(data.rows(), preds.size());
        for (std::size_t c = 0; c < preds.size(); ++c)
            p.col(static_cast<Eigen::Index>(c)) = x.col(preds[c]);
        const Eigen::MatrixXd gram = p.transpose() * p;
        const Eigen::VectorXd rhs = p.transpose() * x.col(target);
        Eigen::VectorXd beta = gram.ldlt().solve(rhs);
        if (!beta.allFinite() || (gram * beta - rhs).norm() > 1e-6 * rhs.norm() + 1e-9) {
            const Eigen::MatrixXd ridge =
                gram + 1e-8 * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
            beta = ridge.ldlt().solve(rhs);
            res.used_ridge = true;
            if (!beta.allFinite())
                throw SingularRegression("prune_edges: regression failed for variable " +
                                         std::to_string(target));
        }
        for (std::size_t c = 0; c < preds.size(); ++c) {
            res.scores(preds[c], target) = beta(static_cast<Eigen::Index>(c));
            if (std::abs(beta(static_cast<Eigen::Index>(c))) >= cfg.prune_threshold)
                res.weights(preds[c], target) = beta(static_cast<Eigen::Index>(c));
        }
    }

    // Direct-parent exclusion does not rule out indirect paths; iterate to a
    // fixpoint removing the weakest edge on any violating path.
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& [src, dst] : k.forbidden_paths) {
            const std::vector<int> path = detail::find_path(res.weights, src, dst);
            if (path.empty()) continue;
            int best_u = path[0];
            int best_v = path[1];
            for (std::size_t i = 0; i + 1 < path.size(); ++i)
                if (std::abs(res.weights(path[i], path[i + 1])) <
                    std::abs(res.weights(best_u, best_v))) {
                    best_u = path[i];
                    best_v = path[i + 1];
                }
            res.weights(best_u, best_v) = 0.0;
            ++res.closure_removals;
            changed = true;
        }
    }
    return res;
}

struct DiscoveryResult {
    LinearScm scm;
    Eigen::MatrixXd scores;  // unthresholded coefficients along the order
    std::vector<int> order;
    long long pair_evals = 0;
    double seconds_order = 0.0;
    double seconds_prune = 0.0;
    bool used_ridge = false;
};

inline DiscoveryResult direct_lingam(const Eigen::MatrixXd& data, const PriorKnowledge& k = {},
                                     const DiscoveryConfig& cfg = {}) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    CausalOrderResult ord = causal_order(data, k);
    const auto t1 = clock::now();
    PruneResult pruned = prune_edges(data, ord.order, k, cfg);
    const auto t2 = clock::now();

    // Estimated mechanism only; noise distributions are not fitted here.
    LinearScm scm = LinearScm::with_noise(std::move(pruned.weights), NoiseSpec::gaussian(0.0, 1.0));
    return {std::move(scm),
            std::move(pruned.scores),
            std::move(ord.order),
            ord.pair_evals,
            std::chrono::duration<double>(t1 - t0).count(),
            std::chrono::duration<double>(t2 - t1).count(),
            pruned.used_ridge};
}

}  // namespace abslingam
