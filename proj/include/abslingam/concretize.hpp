#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "abslingam/abstraction.hpp"
#include "abslingam/errors.hpp"
#include "abslingam/rng.hpp"
#include "abslingam/scm.hpp"

namespace abslingam {

struct ConcretizeConfig {
    double inner_edge_prob = 0.5;
    double dirichlet_alpha = 1.0;
    int ignored_block_size = 0;   // extra ignored variables appended beyond T's rows
    std::uint64_t rng_seed = 0;
    int max_resample = 100;
    double min_s_abs = 1e-3;      // reject inner blocks with near-zero exogenous coefficients
    bool barycenter = false;      // replace Dirichlet draws by the deterministic barycenter
    NoiseSpec noise = NoiseSpec::exponential(1.0);

    void validate() const {
        if (inner_edge_prob < 0.0 || inner_edge_prob > 1.0)
            throw std::invalid_argument("ConcretizeConfig: inner_edge_prob must be in [0,1]");
        if (dirichlet_alpha <= 0.0)
            throw std::invalid_argument("ConcretizeConfig: dirichlet_alpha must be positive");
        if (ignored_block_size < 0)
            throw std::invalid_argument("ConcretizeConfig: ignored_block_size must be nonnegative");
        if (max_resample < 1)
            throw std::invalid_argument("ConcretizeConfig: max_resample must be at least 1");
    }
};

struct InnerBlockSample {
    Eigen::MatrixXd weights;  // strictly upper triangular in block-local order
    Eigen::VectorXd s;        // (I - W)^{-1} t
};

/// Samples inner-block weights so that every irrelevant variable has a
/// directed path to a relevant one and all exogenous coefficients stay away
/// from zero. Relevant variables must close the block (last position).
inline InnerBlockSample sample_inner_block(int n_vars, const std::vector<bool>& relevant_mask,
                                           const Eigen::VectorXd& t_block,
                                           const ConcretizeConfig& cfg, Rng& rng) {
    if (static_cast<int>(relevant_mask.size()) != n_vars || t_block.size() != n_vars)
        throw ShapeMismatch("sample_inner_block: mask and t must have n_vars entries");
    std::vector<int> relevant_after;  // relevant positions, used for forced edges
    for (int i = 0; i < n_vars; ++i)
        if (relevant_mask[static_cast<std::size_t>(i)]) relevant_after.push_back(i);
    if (relevant_after.empty())
        throw InvalidAbstraction("sample_inner_block: block has no relevant variable");
    if (!relevant_mask[static_cast<std::size_t>(n_vars - 1)])
        throw InvalidAbstraction("sample_inner_block: an irrelevant variable closes the block");

    for (int attempt = 0; attempt < cfg.max_resample; ++attempt) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_vars, n_vars);
        for (int i = 0; i < n_vars; ++i)
            for (int j = i + 1; j < n_vars; ++j)
                if (rng.bernoulli(cfg.inner_edge_prob)) w(i, j) = rng.normal();

        // Every irrelevant variable needs a relevant descendant; force an
        // edge when the random draw left one stranded.
        for (int i = 0; i < n_vars; ++i) {
            if (relevant_mask[static_cast<std::size_t>(i)]) continue;
            std::vector<bool> seen(static_cast<std::size_t>(n_vars), false);
            std::vector<int> stack{i};
            bool hits_relevant = false;
            while (!stack.empty() && !hits_relevant) {
                const int u = stack.back();
                stack.pop_back();
                for (int v = u + 1; v < n_vars; ++v) {
                    if (w(u, v) == 0.0 || seen[static_cast<std::size_t>(v)]) continue;
                    seen[static_cast<std::size_t>(v)] = true;
                    if (relevant_mask[static_cast<std::size_t>(v)]) {
                        hits_relevant = true;
                        break;
                    }
                    stack.push_back(v);
                }
            }
            if (!hits_relevant) {
                std::vector<int> candidates;
                for (int r : relevant_after)
                    if (r > i) candidates.push_back(r);
                const int target = candidates[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
                double weight = rng.normal();
                while (weight == 0.0) weight = rng.normal();
                w(i, target) = weight;
            }
        }

        const Eigen::VectorXd s =
            (Eigen::MatrixXd::Identity(n_vars, n_vars) - w).partialPivLu().solve(t_block);
        if (s.cwiseAbs().minCoeff() >= cfg.min_s_abs) return {w, s};
    }
    throw ResampleExhausted("sample_inner_block: no draw with |s_i| >= " +
                            std::to_string(cfg.min_s_abs) + " within max_resample");
}

struct BlockLayout {
    std::vector<std::vector<int>> blocks;  // concrete rows per abstract variable
    std::vector<int> ignored;              // rows outside every block
};

/// Partition of T's rows into blocks: each supported row belongs to its
/// column's block, each zero row to the block of the next supported row below
/// it, trailing zero rows to the ignored block.
inline BlockLayout infer_block_layout(const AbstractionMap& t) {
    const RelevantSets rel = relevant_sets(t);
    if (!rel.valid())
        throw InvalidAbstraction("infer_block_layout: relevant sets empty or non-disjoint");
    const auto owner = rel.owner(t.d());
    BlockLayout layout;
    layout.blocks.resize(static_cast<std::size_t>(t.b()));
    for (int i = t.d() - 1; i >= 0; --i) {
        // Walk bottom-up so each zero row inherits the block below it.
        if (owner[static_cast<std::size_t>(i)] >= 0) {
            layout.blocks[static_cast<std::size_t>(owner[static_cast<std::size_t>(i)])].insert(
                layout.blocks[static_cast<std::size_t>(owner[static_cast<std::size_t>(i)])].begin(), i);
        } else {
            int next = -1;
            for (int k = i + 1; k < t.d(); ++k)
                if (owner[static_cast<std::size_t>(k)] >= 0) {
                    next = owner[static_cast<std::size_t>(k)];
                    break;
                }
            if (next >= 0)
                layout.blocks[static_cast<std::size_t>(next)].insert(
                    layout.blocks[static_cast<std::size_t>(next)].begin(), i);
            else
                layout.ignored.insert(layout.ignored.begin(), i);
        }
    }
    return layout;
}

struct Concretization {
    LinearScm scm;
    AbstractionMap t_extended;  // input T plus zero rows for appended ignored variables
    BlockLayout layout;         // row indices in the returned model
};

/// Algorithm-1 sampling of a concrete model T-abstracted by (m, t). Inner
/// blocks are random DAGs, cross-block rows are m_ij [t_i]_k c^T with c a
/// Dirichlet simplex draw divided elementwise by s_j.
inline Concretization sample_concretization(const LinearScm& m, const AbstractionMap& t,
                                            const ConcretizeConfig& cfg, Rng& rng) {
    cfg.validate();
    if (t.b() != m.n_vars())
        throw DimensionMismatch("sample_concretization: T columns must match abstract model size");
    if (!t.full_column_rank())
        throw InvalidAbstraction("sample_concretization: T is rank deficient");
    BlockLayout layout = infer_block_layout(t);

    const int d = t.d() + cfg.ignored_block_size;
    for (int q = t.d(); q < d; ++q) layout.ignored.push_back(q);

    AbstractionMap t_ext = t;
    if (cfg.ignored_block_size > 0) {
        t_ext.t.conservativeResize(d, Eigen::NoChange);
        t_ext.t.bottomRows(cfg.ignored_block_size).setZero();
    }

    const int b = m.n_vars();
    const std::vector<int> abstract_order = topological_order(m);
    const RelevantSets rel = relevant_sets(t_ext);

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
    std::vector<Eigen::VectorXd> s_vec(static_cast<std::size_t>(b));

    for (int j : abstract_order) {
        const auto& blk = layout.blocks[static_cast<std::size_t>(j)];
        const int n_j = static_cast<int>(blk.size());
        std::vector<bool> mask(static_cast<std::size_t>(n_j), false);
        Eigen::VectorXd t_local(n_j);
        for (int r = 0; r < n_j; ++r) {
            t_local(r) = t_ext.t(blk[static_cast<std::size_t>(r)], j);
            mask[static_cast<std::size_t>(r)] = t_ext.in_support(blk[static_cast<std::size_t>(r)], j);
        }
        const InnerBlockSample inner = sample_inner_block(n_j, mask, t_local, cfg, rng);
        s_vec[static_cast<std::size_t>(j)] = inner.s;
        for (int r = 0; r < n_j; ++r)
            for (int c = 0; c < n_j; ++c)
                w(blk[static_cast<std::size_t>(r)], blk[static_cast<std::size_t>(c)]) = inner.weights(r, c);

        // Cross-block rows from every abstract source with a nonzero weight.
        for (int i = 0; i < b; ++i) {
            if (i == j || m.weights()(i, j) == 0.0) continue;
            const auto& src = layout.blocks[static_cast<std::size_t>(i)];
            for (int k = 0; k < static_cast<int>(src.size()); ++k) {
                const double t_ik = t_ext.t(src[static_cast<std::size_t>(k)], i);
                if (t_ik == 0.0) continue;  // irrelevant source rows stay zero
                std::vector<double> v;
                if (cfg.barycenter)
                    v.assign(static_cast<std::size_t>(n_j), 1.0 / n_j);
                else
                    v = rng.dirichlet(n_j, cfg.dirichlet_alpha);
                for (int c = 0; c < n_j; ++c) {
                    const double coef = v[static_cast<std::size_t>(c)] /
                                        s_vec[static_cast<std::size_t>(j)](c);
                    w(src[static_cast<std::size_t>(k)], blk[static_cast<std::size_t>(c)]) =
                        m.weights()(i, j) * t_ik * coef;
                }
            }
        }
    }

    // Ignored variables only receive edges, from block variables and from
    // earlier ignored variables (Submodel Abstraction keeps this harmless).
    std::vector<int> block_vars;
    for (const auto& blk : layout.blocks) block_vars.insert(block_vars.end(), blk.begin(), blk.end());
    for (std::size_t qi = 0; qi < layout.ignored.size(); ++qi) {
        const int q = layout.ignored[qi];
        for (int u : block_vars)
            if (rng.bernoulli(cfg.inner_edge_prob)) w(u, q) = rng.normal();
        for (std::size_t pj = 0; pj < qi; ++pj)
            if (rng.bernoulli(cfg.inner_edge_prob)) w(layout.ignored[pj], q) = rng.normal();
    }

    (void)rel;
    LinearScm scm = LinearScm::with_noise(std::move(w), cfg.noise);
    return {std::move(scm), std::move(t_ext), std::move(layout)};
}

inline Concretization sample_concretization(const LinearScm& m, const AbstractionMap& t,
                                            const ConcretizeConfig& cfg) {
    Rng rng(cfg.rng_seed);
    return sample_concretization(m, t, cfg, rng);
}

}  // namespace abslingam
