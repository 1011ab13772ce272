#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "abslingam/errors.hpp"
#include "abslingam/rng.hpp"

namespace abslingam {

/// Noise distribution of a single endogenous variable. A Gaussian with zero
/// variance doubles as a Dirac constant (used for intervened variables).
struct NoiseSpec {
    enum class Kind { Exponential, Uniform, Gaussian };

    Kind kind = Kind::Exponential;
    double p1 = 1.0;  // rate | lo | mean
    double p2 = 0.0;  // unused | hi | variance

    static NoiseSpec exponential(double rate) {
        if (rate <= 0.0) throw std::invalid_argument("NoiseSpec: rate must be positive");
        return {Kind::Exponential, rate, 0.0};
    }
    static NoiseSpec uniform(double lo, double hi) {
        if (lo >= hi) throw std::invalid_argument("NoiseSpec: lo must be below hi");
        return {Kind::Uniform, lo, hi};
    }
    static NoiseSpec gaussian(double mean, double variance) {
        if (variance < 0.0) throw std::invalid_argument("NoiseSpec: variance must be nonnegative");
        return {Kind::Gaussian, mean, variance};
    }
    static NoiseSpec constant(double value) { return gaussian(value, 0.0); }

    double sample(Rng& rng) const {
        switch (kind) {
            case Kind::Exponential: return rng.exponential(p1);
            case Kind::Uniform: return rng.uniform(p1, p2);
            case Kind::Gaussian: return p2 == 0.0 ? p1 : rng.normal(p1, std::sqrt(p2));
        }
        return 0.0;
    }

    double mean() const {
        switch (kind) {
            case Kind::Exponential: return 1.0 / p1;
            case Kind::Uniform: return 0.5 * (p1 + p2);
            case Kind::Gaussian: return p1;
        }
        return 0.0;
    }

    double variance() const {
        switch (kind) {
            case Kind::Exponential: return 1.0 / (p1 * p1);
            case Kind::Uniform: return (p2 - p1) * (p2 - p1) / 12.0;
            case Kind::Gaussian: return p2;
        }
        return 0.0;
    }

    bool operator==(const NoiseSpec&) const = default;
};

/// Hard intervention: a set of variables clamped to constants.
struct Intervention {
    std::map<int, double> assignments;

    Intervention() = default;
    explicit Intervention(std::map<int, double> a) : assignments(std::move(a)) {}

    bool empty() const { return assignments.empty(); }

    void check_bounds(int n_vars) const {
        for (const auto& [idx, _] : assignments)
            if (idx < 0 || idx >= n_vars)
                throw IndexOutOfRange("Intervention: variable index " + std::to_string(idx) +
                                      " out of range for " + std::to_string(n_vars) + " variables");
    }
};

namespace detail {

/// Kahn's algorithm over the exact-zero support, smallest index first.
/// Throws NotADag on a cycle.
inline std::vector<int> kahn_order(const Eigen::MatrixXd& weights) {
    const int n = static_cast<int>(weights.rows());
    std::vector<int> in_degree(n, 0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (i != j && weights(i, j) != 0.0) ++in_degree[j];

    std::vector<bool> placed(n, false);
    std::vector<int> order;
    order.reserve(n);
    for (int round = 0; round < n; ++round) {
        int next = -1;
        for (int v = 0; v < n; ++v) {
            if (!placed[v] && in_degree[v] == 0) {
                next = v;
                break;
            }
        }
        if (next < 0) throw NotADag("weight matrix support contains a cycle");
        placed[next] = true;
        order.push_back(next);
        for (int j = 0; j < n; ++j)
            if (!placed[j] && weights(next, j) != 0.0) --in_degree[j];
    }
    return order;
}

}  // namespace detail

/// Linear SCM X = W^T X + E. Entry w_ij is the direct effect of variable i
/// on variable j; the support must be a DAG and the diagonal exactly zero.
class LinearScm {
public:
    LinearScm(Eigen::MatrixXd weights, std::vector<NoiseSpec> noise)
        : weights_(std::move(weights)), noise_(std::move(noise)) {
        if (weights_.rows() != weights_.cols())
            throw ShapeMismatch("LinearScm: weight matrix must be square");
        n_vars_ = static_cast<int>(weights_.rows());
        if (static_cast<int>(noise_.size()) != n_vars_)
            throw ShapeMismatch("LinearScm: one NoiseSpec per variable required");
        for (int i = 0; i < n_vars_; ++i)
            if (weights_(i, i) != 0.0)
                throw NotADag("LinearScm: nonzero diagonal entry (self-loop)");
        detail::kahn_order(weights_);  // DAG invariant
    }

    static LinearScm with_noise(Eigen::MatrixXd weights, const NoiseSpec& spec) {
        const auto n = static_cast<std::size_t>(weights.rows());
        return LinearScm(std::move(weights), std::vector<NoiseSpec>(n, spec));
    }

    int n_vars() const { return n_vars_; }
    const Eigen::MatrixXd& weights() const { return weights_; }
    const std::vector<NoiseSpec>& noise() const { return noise_; }
    const NoiseSpec& noise(int i) const { return noise_.at(static_cast<std::size_t>(i)); }

private:
    Eigen::MatrixXd weights_;
    std::vector<NoiseSpec> noise_;
    int n_vars_ = 0;
};

/// F = (I - W)^{-1}, the map from exogenous to endogenous values (transposed).
inline Eigen::MatrixXd reduced_form(const LinearScm& scm) {
    const int n = scm.n_vars();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - scm.weights();
    return a.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
}

inline std::vector<int> topological_order(const LinearScm& scm) {
    return detail::kahn_order(scm.weights());
}

/// Hard intervention: incoming edges of intervened variables removed, their
/// noise replaced by the assigned constant.
inline LinearScm apply_intervention(const LinearScm& scm, const Intervention& iv) {
    iv.check_bounds(scm.n_vars());
    Eigen::MatrixXd w = scm.weights();
    std::vector<NoiseSpec> noise = scm.noise();
    for (const auto& [idx, value] : iv.assignments) {
        w.col(idx).setZero();
        noise[static_cast<std::size_t>(idx)] = NoiseSpec::constant(value);
    }
    return LinearScm(std::move(w), std::move(noise));
}

/// Deterministic evaluation of the (possibly intervened) reduced form on a
/// single exogenous configuration: intervened coordinates of e are replaced
/// by their assigned constants.
inline Eigen::VectorXd evaluate(const LinearScm& scm, const Eigen::VectorXd& e,
                                const Intervention& iv = {}) {
    if (e.size() != scm.n_vars()) throw ShapeMismatch("evaluate: exogenous vector size mismatch");
    iv.check_bounds(scm.n_vars());
    Eigen::MatrixXd w = scm.weights();
    Eigen::VectorXd e_mod = e;
    for (const auto& [idx, value] : iv.assignments) {
        w.col(idx).setZero();
        e_mod(idx) = value;
    }
    const int n = scm.n_vars();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - w;
    return a.transpose().partialPivLu().solve(e_mod);
}

/// X = F_iv^T E with E drawn i.i.d. per NoiseSpec; rows are samples.
inline Eigen::MatrixXd simulate(const LinearScm& scm, int n_samples, std::uint64_t rng_seed,
                                const std::optional<Intervention>& iv = std::nullopt) {
    const int n = scm.n_vars();
    Eigen::MatrixXd w = scm.weights();
    std::vector<NoiseSpec> noise = scm.noise();
    if (iv) {
        iv->check_bounds(n);
        for (const auto& [idx, value] : iv->assignments) {
            w.col(idx).setZero();
            noise[static_cast<std::size_t>(idx)] = NoiseSpec::constant(value);
        }
    }
    Rng rng(rng_seed);
    Eigen::MatrixXd e(n_samples, n);
    for (int r = 0; r < n_samples; ++r)
        for (int c = 0; c < n; ++c) e(r, c) = noise[static_cast<std::size_t>(c)].sample(rng);
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - w;
    const Eigen::MatrixXd f = a.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
    return e * f;  // row-wise x^T = e^T F
}

/// Block decomposition of F = (I - W)^{-1} for a block upper triangular W.
/// F_ij = F_ii (W_ij + R_ij) F_jj with R_ij = sum_{i<k<j} W_ik F_kk (W_kj + R_kj).
struct BlockDecomposition {
    std::vector<int> block_sizes;
    std::vector<Eigen::MatrixXd> diag_blocks;                 // F_kk
    std::vector<std::vector<Eigen::MatrixXd>> off_diag_blocks;  // F_ij, i<j
    std::vector<std::vector<Eigen::MatrixXd>> remainder_terms;  // R_ij, i<j

    Eigen::MatrixXd assemble() const {
        int n = 0;
        for (int s : block_sizes) n += s;
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, n);
        const int b = static_cast<int>(block_sizes.size());
        std::vector<int> offset(static_cast<std::size_t>(b), 0);
        for (int k = 1; k < b; ++k) offset[k] = offset[k - 1] + block_sizes[k - 1];
        for (int i = 0; i < b; ++i) {
            f.block(offset[i], offset[i], block_sizes[i], block_sizes[i]) = diag_blocks[i];
            for (int j = i + 1; j < b; ++j)
                f.block(offset[i], offset[j], block_sizes[i], block_sizes[j]) =
                    off_diag_blocks[i][j];
        }
        return f;
    }
};

inline BlockDecomposition blockwise_reduced_form(const LinearScm& scm,
                                                 const std::vector<int>& block_sizes) {
    const int n = scm.n_vars();
    int total = 0;
    for (int s : block_sizes) {
        if (s <= 0) throw ShapeMismatch("blockwise_reduced_form: block sizes must be positive");
        total += s;
    }
    if (total != n) throw ShapeMismatch("blockwise_reduced_form: block sizes must sum to n_vars");

    const int b = static_cast<int>(block_sizes.size());
    std::vector<int> offset(static_cast<std::size_t>(b), 0);
    for (int k = 1; k < b; ++k) offset[k] = offset[k - 1] + block_sizes[k - 1];

    const Eigen::MatrixXd& w = scm.weights();
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < i; ++j)
            if (!w.block(offset[i], offset[j], block_sizes[i], block_sizes[j]).isZero(0.0))
                throw NotBlockTriangular("blockwise_reduced_form: nonzero lower block (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");

    BlockDecomposition dec;
    dec.block_sizes = block_sizes;
    dec.diag_blocks.resize(static_cast<std::size_t>(b));
    dec.off_diag_blocks.assign(static_cast<std::size_t>(b),
                               std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(b)));
    dec.remainder_terms.assign(static_cast<std::size_t>(b),
                               std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(b)));

    for (int k = 0; k < b; ++k) {
        const Eigen::MatrixXd wkk = w.block(offset[k], offset[k], block_sizes[k], block_sizes[k]);
        const Eigen::MatrixXd akk =
            Eigen::MatrixXd::Identity(block_sizes[k], block_sizes[k]) - wkk;
        dec.diag_blocks[static_cast<std::size_t>(k)] =
            akk.partialPivLu().solve(Eigen::MatrixXd::Identity(block_sizes[k], block_sizes[k]));
    }

    // R_ij only involves R_kj with i < k < j, so increasing gap works.
    for (int gap = 1; gap < b; ++gap) {
        for (int i = 0; i + gap < b; ++i) {
            const int j = i + gap;
            Eigen::MatrixXd r = Eigen::MatrixXd::Zero(block_sizes[i], block_sizes[j]);
            for (int k = i + 1; k < j; ++k) {
                const Eigen::MatrixXd wik =
                    w.block(offset[i], offset[k], block_sizes[i], block_sizes[k]);
                const Eigen::MatrixXd wkj =
                    w.block(offset[k], offset[j], block_sizes[k], block_sizes[j]);
                r += wik * dec.diag_blocks[static_cast<std::size_t>(k)] *
                     (wkj + dec.remainder_terms[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
            }
            dec.remainder_terms[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = r;
            const Eigen::MatrixXd wij =
                w.block(offset[i], offset[j], block_sizes[i], block_sizes[j]);
            dec.off_diag_blocks[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                dec.diag_blocks[static_cast<std::size_t>(i)] * (wij + r) *
                dec.diag_blocks[static_cast<std::size_t>(j)];
        }
    }
    return dec;
}

// --- JSON serialization -----------------------------------------------------

inline void to_json(nlohmann::json& j, const NoiseSpec& spec) {
    switch (spec.kind) {
        case NoiseSpec::Kind::Exponential:
            j = {{"kind", "exponential"}, {"rate", spec.p1}};
            break;
        case NoiseSpec::Kind::Uniform:
            j = {{"kind", "uniform"}, {"lo", spec.p1}, {"hi", spec.p2}};
            break;
        case NoiseSpec::Kind::Gaussian:
            j = {{"kind", "gaussian"}, {"mean", spec.p1}, {"variance", spec.p2}};
            break;
    }
}

inline void from_json(const nlohmann::json& j, NoiseSpec& spec) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "exponential")
        spec = NoiseSpec::exponential(j.at("rate").get<double>());
    else if (kind == "uniform")
        spec = NoiseSpec::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
    else if (kind == "gaussian")
        spec = NoiseSpec::gaussian(j.at("mean").get<double>(), j.at("variance").get<double>());
    else
        throw std::invalid_argument("NoiseSpec: unknown kind '" + kind + "'");
}

inline nlohmann::json scm_to_json(const LinearScm& scm) {
    const int n = scm.n_vars();
    std::vector<double> flat(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            flat[static_cast<std::size_t>(i * n + j)] = scm.weights()(i, j);
    return {{"n_vars", n}, {"weights", flat}, {"noise", scm.noise()}};
}

inline LinearScm scm_from_json(const nlohmann::json& j) {
    const int n = j.at("n_vars").get<int>();
    const auto flat = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != n * n)
        throw ShapeMismatch("scm_from_json: weights length must be n_vars^2");
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < n; ++c) w(i, c) = flat[static_cast<std::size_t>(i * n + c)];
    auto noise = j.at("noise").get<std::vector<NoiseSpec>>();
    return LinearScm(std::move(w), std::move(noise));
}

}  // namespace abslingam
