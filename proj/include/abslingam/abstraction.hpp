#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abslingam/errors.hpp"
#include "abslingam/scm.hpp"

namespace abslingam {

/// Linear abstraction function tau(x) = T^T x. Column j holds the
/// coefficients of abstract variable Y_j; entries with magnitude at or below
/// `threshold` count as zero when deriving supports.
struct AbstractionMap {
    Eigen::MatrixXd t;          // d x b
    double threshold = 1e-9;

    int d() const { return static_cast<int>(t.rows()); }
    int b() const { return static_cast<int>(t.cols()); }

    bool in_support(int row, int col) const { return std::abs(t(row, col)) > threshold; }

    bool full_column_rank() const {
        if (t.size() == 0) return false;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(t);
        return qr.rank() == t.cols();
    }
};

struct RelevantSets {
    std::vector<std::vector<int>> sets;  // Pi_R(Y_j) per abstract variable
    bool disjoint = true;
    bool nonempty = true;

    bool valid() const { return disjoint && nonempty; }

    /// Abstract variable owning concrete variable i, or -1 if irrelevant.
    std::vector<int> owner(int d) const {
        std::vector<int> res(static_cast<std::size_t>(d), -1);
        for (int j = 0; j < static_cast<int>(sets.size()); ++j)
            for (int i : sets[static_cast<std::size_t>(j)])
                res[static_cast<std::size_t>(i)] = j;
        return res;
    }
};

inline RelevantSets relevant_sets(const AbstractionMap& t) {
    RelevantSets res;
    res.sets.resize(static_cast<std::size_t>(t.b()));
    std::vector<int> hits(static_cast<std::size_t>(t.d()), 0);
    for (int j = 0; j < t.b(); ++j) {
        for (int i = 0; i < t.d(); ++i) {
            if (t.in_support(i, j)) {
                res.sets[static_cast<std::size_t>(j)].push_back(i);
                ++hits[static_cast<std::size_t>(i)];
            }
        }
        if (res.sets[static_cast<std::size_t>(j)].empty()) res.nonempty = false;
    }
    for (int h : hits)
        if (h > 1) res.disjoint = false;
    return res;
}

/// Reachability restricted to paths whose interior vertices are irrelevant.
/// Entry (a, c) is true iff a path a -> ... -> c exists with every
/// intermediate vertex outside `relevant`.
inline std::vector<std::vector<bool>> t_direct_reachability(const Eigen::MatrixXd& weights,
                                                            const std::vector<bool>& relevant) {
    const int n = static_cast<int>(weights.rows());
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && weights(i, j) != 0.0) succ[static_cast<std::size_t>(i)].push_back(j);

    std::vector<std::vector<bool>> reach(static_cast<std::size_t>(n),
                                         std::vector<bool>(static_cast<std::size_t>(n), false));
    for (int src = 0; src < n; ++src) {
        std::vector<int> stack = succ[static_cast<std::size_t>(src)];
        auto& row = reach[static_cast<std::size_t>(src)];
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            if (row[static_cast<std::size_t>(v)]) continue;
            row[static_cast<std::size_t>(v)] = true;
            // Expand only through irrelevant vertices: they may sit in the
            // interior of a T-direct path, relevant ones may not.
            if (!relevant[static_cast<std::size_t>(v)])
                for (int w : succ[static_cast<std::size_t>(v)]) stack.push_back(w);
        }
    }
    return reach;
}

struct BlockStructure {
    std::vector<std::vector<int>> relevant_sets;  // Pi_R(Y_j)
    std::vector<std::vector<int>> blocks;         // Pi(Y_j), ascending indices
    std::vector<int> ignored;                     // variables in no block
    std::vector<int> block_order;                 // concrete permutation: blocks in order, ignored last
    std::vector<int> block_sequence;              // abstract indices in the order blocks appear
    bool order_acyclic = true;                    // block-level graph had no cycle
};

namespace detail {

struct BlockAssignment {
    std::vector<std::vector<int>> blocks;
    std::vector<int> ignored;
    std::vector<int> owner;                      // block index per concrete var, -1 = ignored
    std::vector<std::vector<int>> multi_owner;   // vars claimed by >1 block
};

/// Lemma-style block membership: relevant variables plus irrelevant ones with
/// a T-direct path into the relevant set. Overlaps are recorded, not thrown;
/// a multiply-claimed variable is assigned to its lowest-index block.
inline BlockAssignment assign_blocks(const LinearScm& l, const RelevantSets& rel) {
    const int d = l.n_vars();
    const int b = static_cast<int>(rel.sets.size());
    std::vector<bool> relevant(static_cast<std::size_t>(d), false);
    const auto owner_rel = rel.owner(d);
    for (int i = 0; i < d; ++i) relevant[static_cast<std::size_t>(i)] = owner_rel[static_cast<std::size_t>(i)] >= 0;

    const auto reach = t_direct_reachability(l.weights(), relevant);

    BlockAssignment res;
    res.blocks.resize(static_cast<std::size_t>(b));
    res.owner.assign(static_cast<std::size_t>(d), -1);
    res.multi_owner.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        if (relevant[static_cast<std::size_t>(i)]) {
            const int j = owner_rel[static_cast<std::size_t>(i)];
            res.owner[static_cast<std::size_t>(i)] = j;
            res.blocks[static_cast<std::size_t>(j)].push_back(i);
            continue;
        }
        std::vector<int> claims;
        for (int j = 0; j < b; ++j) {
            const bool hits = std::any_of(
                rel.sets[static_cast<std::size_t>(j)].begin(), rel.sets[static_cast<std::size_t>(j)].end(),
                [&](int target) { return reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(target)]; });
            if (hits) claims.push_back(j);
        }
        if (claims.empty()) {
            res.ignored.push_back(i);
        } else {
            res.owner[static_cast<std::size_t>(i)] = claims.front();
            res.blocks[static_cast<std::size_t>(claims.front())].push_back(i);
            if (claims.size() > 1) res.multi_owner[static_cast<std::size_t>(i)] = claims;
        }
    }
    return res;
}

/// Topological order of blocks induced by cross-block edges, ties by index.
inline std::pair<std::vector<int>, bool> block_topological_order(const LinearScm& l,
                                                                 const BlockAssignment& asg) {
    const int b = static_cast<int>(asg.blocks.size());
    const int d = l.n_vars();
    std::vector<std::vector<bool>> edge(static_cast<std::size_t>(b),
                                        std::vector<bool>(static_cast<std::size_t>(b), false));
    for (int u = 0; u < d; ++u)
        for (int v = 0; v < d; ++v)
            if (l.weights()(u, v) != 0.0) {
                const int bu = asg.owner[static_cast<std::size_t>(u)];
                const int bv = asg.owner[static_cast<std::size_t>(v)];
                if (bu >= 0 && bv >= 0 && bu != bv) edge[static_cast<std::size_t>(bu)][static_cast<std::size_t>(bv)] = true;
            }
    std::vector<int> in_degree(static_cast<std::size_t>(b), 0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            if (edge[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) ++in_degree[static_cast<std::size_t>(j)];
    std::vector<bool> placed(static_cast<std::size_t>(b), false);
    std::vector<int> order;
    bool acyclic = true;
    for (int round = 0; round < b; ++round) {
        int next = -1;
        for (int v = 0; v < b; ++v)
            if (!placed[static_cast<std::size_t>(v)] && in_degree[static_cast<std::size_t>(v)] == 0) {
                next = v;
                break;
            }
        if (next < 0) {
            acyclic = false;
            for (int v = 0; v < b; ++v)
                if (!placed[static_cast<std::size_t>(v)]) order.push_back(v);
            break;
        }
        placed[static_cast<std::size_t>(next)] = true;
        order.push_back(next);
        for (int j = 0; j < b; ++j)
            if (edge[static_cast<std::size_t>(next)][static_cast<std::size_t>(j)]) --in_degree[static_cast<std::size_t>(j)];
    }
    return {order, acyclic};
}

}  // namespace detail

/// Concrete blocks per Block Composition; throws OverlappingBlocks when a
/// variable is claimed by two blocks (abstract causal sufficiency violated).
inline BlockStructure concrete_blocks(const LinearScm& l, const AbstractionMap& t) {
    if (t.d() != l.n_vars())
        throw DimensionMismatch("concrete_blocks: T rows must match concrete model size");
    const RelevantSets rel = relevant_sets(t);
    if (!rel.valid())
        throw InvalidAbstraction("concrete_blocks: relevant sets empty or non-disjoint");

    const auto asg = detail::assign_blocks(l, rel);
    for (int i = 0; i < l.n_vars(); ++i)
        if (asg.multi_owner[static_cast<std::size_t>(i)].size() > 1)
            throw OverlappingBlocks("concrete_blocks: variable " + std::to_string(i) +
                                    " reaches relevant variables of multiple abstract variables");

    BlockStructure res;
    res.relevant_sets = rel.sets;
    res.blocks = asg.blocks;
    res.ignored = asg.ignored;
    auto [seq, acyclic] = detail::block_topological_order(l, asg);
    res.block_sequence = seq;
    res.order_acyclic = acyclic;
    for (int j : seq)
        for (int i : asg.blocks[static_cast<std::size_t>(j)]) res.block_order.push_back(i);
    for (int i : asg.ignored) res.block_order.push_back(i);
    return res;
}

/// Exogenous abstraction S: block-diagonal with s_k = (I - W_kk)^{-1} t_k.
struct ExogenousMap {
    Eigen::MatrixXd matrix_s;  // d x b, original variable order
};

inline ExogenousMap exogenous_map(const LinearScm& l, const AbstractionMap& t,
                                  const BlockStructure& blocks) {
    const int d = l.n_vars();
    const int b = static_cast<int>(blocks.blocks.size());
    if (t.d() != d || t.b() != b)
        throw DimensionMismatch("exogenous_map: T shape does not match model and blocks");
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, b);
    for (int k = 0; k < b; ++k) {
        const auto& blk = blocks.blocks[static_cast<std::size_t>(k)];
        const int n = static_cast<int>(blk.size());
        Eigen::MatrixXd wkk(n, n);
        Eigen::VectorXd tk(n);
        for (int r = 0; r < n; ++r) {
            tk(r) = t.t(blk[static_cast<std::size_t>(r)], k);
            for (int c = 0; c < n; ++c)
                wkk(r, c) = l.weights()(blk[static_cast<std::size_t>(r)], blk[static_cast<std::size_t>(c)]);
        }
        const Eigen::MatrixXd akk = Eigen::MatrixXd::Identity(n, n) - wkk;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(akk);
        const Eigen::VectorXd sk = lu.solve(tk);
        if (!sk.allFinite())
            throw SingularBlock("exogenous_map: singular inner block " + std::to_string(k));
        for (int r = 0; r < n; ++r) s(blk[static_cast<std::size_t>(r)], k) = sk(r);
    }
    return {s};
}

struct ConnectivityViolation {
    int source_var;        // relevant variable with no T-direct path to the target set
    int witness_var;       // relevant variable of the same abstract source that has one
    int target_abstract;   // abstract variable whose relevant set is the target
};

struct CancellationReport {
    int source_var;        // variable whose T-direct path carries ~zero total effect
    int target_abstract;   // abstract variable whose relevant set is the target
};

struct ImpliedAbstractGraph {
    std::vector<std::vector<bool>> adjacency;  // b x b
    std::vector<ConnectivityViolation> violations;
    std::vector<CancellationReport> cancellations;  // unfaithful pairs, edge withheld
};

/// Abstract edge iff every relevant source variable has a T-direct path into
/// the target's relevant set. A some-but-not-all pair certifies that no
/// abstract model can T-abstract l (Connectivity Violation). A path whose
/// total effect cancels below `cancel_tol` is unfaithful: the edge is
/// withheld and the pair reported, since path existence alone cannot decide
/// the case.
inline ImpliedAbstractGraph implied_abstract_graph(const LinearScm& l, const AbstractionMap& t,
                                                   double cancel_tol = 1e-3) {
    if (t.d() != l.n_vars())
        throw DimensionMismatch("implied_abstract_graph: T rows must match concrete model size");
    const RelevantSets rel = relevant_sets(t);
    const int b = t.b();
    const int d = l.n_vars();
    std::vector<bool> relevant(static_cast<std::size_t>(d), false);
    for (const auto& set : rel.sets)
        for (int i : set) relevant[static_cast<std::size_t>(i)] = true;
    const auto reach = t_direct_reachability(l.weights(), relevant);
    const Eigen::MatrixXd f = reduced_form(l);

    ImpliedAbstractGraph res;
    res.adjacency.assign(static_cast<std::size_t>(b), std::vector<bool>(static_cast<std::size_t>(b), false));
    for (int a = 0; a < b; ++a) {
        for (int c = 0; c < b; ++c) {
            if (a == c) continue;
            int with_path = -1;
            int without_path = -1;
            std::vector<int> canceled;
            for (int src : rel.sets[static_cast<std::size_t>(a)]) {
                const bool hits = std::any_of(
                    rel.sets[static_cast<std::size_t>(c)].begin(), rel.sets[static_cast<std::size_t>(c)].end(),
                    [&](int dst) { return reach[static_cast<std::size_t>(src)][static_cast<std::size_t>(dst)]; });
                if (hits) {
                    with_path = src;
                    double effect = 0.0;
                    for (int dst : rel.sets[static_cast<std::size_t>(c)])
                        effect = std::max(effect, std::abs(f(src, dst)));
                    if (effect < cancel_tol) canceled.push_back(src);
                } else {
                    without_path = src;
                }
            }
            if (with_path >= 0 && without_path < 0) {
                if (canceled.empty()) {
                    res.adjacency[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] = true;
                } else {
                    for (int src : canceled) res.cancellations.push_back({src, c});
                }
            } else if (with_path >= 0 && without_path >= 0) {
                res.violations.push_back({without_path, with_path, c});
            }
        }
    }
    return res;
}

struct BlockAbstractionReport {
    bool ok = false;
    double max_residual = 0.0;
    bool ordering_ok = true;
    bool blocks_ok = true;  // false when blocks overlap (Lemma 7 violated)
    std::string message;
};

namespace detail {

inline std::vector<std::vector<bool>> transitive_closure(const Eigen::MatrixXd& weights) {
    const int n = static_cast<int>(weights.rows());
    std::vector<std::vector<bool>> reach(static_cast<std::size_t>(n),
                                         std::vector<bool>(static_cast<std::size_t>(n), false));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && weights(i, j) != 0.0) reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    for (int k = 0; k < n; ++k)
        for (int i = 0; i < n; ++i)
            if (reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)])
                for (int j = 0; j < n; ++j)
                    if (reach[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)])
                        reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
    return reach;
}

}  // namespace detail

/// Theorem-3 check: block ordering consistent with every abstract topological
/// order, and W_ij s_j = m_ij t_i on all cross-block pairs within `tol`.
inline BlockAbstractionReport check_block_abstraction(const LinearScm& l, const LinearScm& h,
                                                      const AbstractionMap& t, double tol) {
    if (t.d() != l.n_vars() || t.b() != h.n_vars())
        throw DimensionMismatch("check_block_abstraction: T must be d x b for the given models");
    const RelevantSets rel = relevant_sets(t);
    if (!rel.valid())
        throw InvalidAbstraction("check_block_abstraction: relevant sets empty or non-disjoint");

    BlockAbstractionReport report;
    const auto asg = detail::assign_blocks(l, rel);
    for (int i = 0; i < l.n_vars(); ++i)
        if (asg.multi_owner[static_cast<std::size_t>(i)].size() > 1) {
            report.blocks_ok = false;
            report.message = "blocks overlap at variable " + std::to_string(i);
        }

    const int b = h.n_vars();

    // Ordering consistency: a topological order must exist that serves both
    // graphs at once, i.e. the union of the abstract edges and the
    // block-level projection of the concrete edges is acyclic, with ignored
    // variables placeable last (so edges from ignored variables into blocks
    // are out of order). Ancestry alone would be too strict: a cross-block
    // edge whose total contribution cancels is legal without an abstract
    // counterpart.
    Eigen::MatrixXd combined = h.weights();
    for (int u = 0; u < l.n_vars(); ++u) {
        for (int v = 0; v < l.n_vars(); ++v) {
            if (l.weights()(u, v) == 0.0) continue;
            const int bu = asg.owner[static_cast<std::size_t>(u)];
            const int bv = asg.owner[static_cast<std::size_t>(v)];
            if (bu == bv) continue;
            if (bv < 0) continue;  // edges into ignored variables are free
            if (bu < 0) {
                report.ordering_ok = false;
                report.message = "edge " + std::to_string(u) + "->" + std::to_string(v) +
                                 " leaves the ignored set, which must come last";
                continue;
            }
            combined(bu, bv) = 1.0;
        }
    }
    const auto closure = detail::transitive_closure(combined);
    for (int i = 0; i < b; ++i)
        if (closure[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)]) {
            report.ordering_ok = false;
            report.message = "no shared topological order for block " + std::to_string(i);
        }

    // Blockwise residual max_{i != j} ||W_ij s_j - m_ij t_i||_inf.
    std::vector<Eigen::VectorXd> s_vec(static_cast<std::size_t>(b));
    for (int k = 0; k < b; ++k) {
        const auto& blk = asg.blocks[static_cast<std::size_t>(k)];
        const int n = static_cast<int>(blk.size());
        Eigen::MatrixXd wkk(n, n);
        Eigen::VectorXd tk(n);
        for (int r = 0; r < n; ++r) {
            tk(r) = t.t(blk[static_cast<std::size_t>(r)], k);
            for (int c = 0; c < n; ++c)
                wkk(r, c) = l.weights()(blk[static_cast<std::size_t>(r)], blk[static_cast<std::size_t>(c)]);
        }
        s_vec[static_cast<std::size_t>(k)] =
            (Eigen::MatrixXd::Identity(n, n) - wkk).partialPivLu().solve(tk);
    }
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            if (i == j) continue;
            const auto& bi = asg.blocks[static_cast<std::size_t>(i)];
            const auto& bj = asg.blocks[static_cast<std::size_t>(j)];
            Eigen::MatrixXd wij(bi.size(), bj.size());
            Eigen::VectorXd ti(bi.size());
            for (std::size_t r = 0; r < bi.size(); ++r) {
                ti(static_cast<Eigen::Index>(r)) = t.t(bi[r], i);
                for (std::size_t c = 0; c < bj.size(); ++c)
                    wij(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        l.weights()(bi[r], bj[c]);
            }
            const Eigen::VectorXd residual =
                wij * s_vec[static_cast<std::size_t>(j)] - h.weights()(i, j) * ti;
            report.max_residual =
                std::max(report.max_residual, residual.lpNorm<Eigen::Infinity>());
        }
    }

    report.ok = report.blocks_ok && report.ordering_ok && report.max_residual <= tol;
    return report;
}

/// Intervention map omega: defined only when the concrete targets are exactly
/// the union of relevant sets of some abstract variables.
inline std::optional<Intervention> map_intervention(const AbstractionMap& t,
                                                    const Intervention& iv_concrete) {
    iv_concrete.check_bounds(t.d());
    if (iv_concrete.empty()) return Intervention{};
    const RelevantSets rel = relevant_sets(t);
    const auto owner = rel.owner(t.d());

    std::vector<bool> touched(static_cast<std::size_t>(t.b()), false);
    for (const auto& [idx, _] : iv_concrete.assignments) {
        const int y = owner[static_cast<std::size_t>(idx)];
        if (y < 0) return std::nullopt;  // intervening on an irrelevant variable
        touched[static_cast<std::size_t>(y)] = true;
    }
    for (int y = 0; y < t.b(); ++y) {
        if (!touched[static_cast<std::size_t>(y)]) continue;
        for (int i : rel.sets[static_cast<std::size_t>(y)])
            if (!iv_concrete.assignments.contains(i))
                return std::nullopt;  // strict subset of a relevant set
    }
    Intervention iv_abstract;
    for (int y = 0; y < t.b(); ++y) {
        if (!touched[static_cast<std::size_t>(y)]) continue;
        double value = 0.0;
        for (int i : rel.sets[static_cast<std::size_t>(y)])
            value += t.t(i, y) * iv_concrete.assignments.at(i);
        iv_abstract.assignments[y] = value;
    }
    return iv_abstract;
}

struct ConsistencyGrid {
    int subset_cap = -1;       // -1: min(b, 3)
    int n_random_draws = 8;
    std::uint64_t rng_seed = 0;
};

namespace detail {

inline Eigen::MatrixXd intervened_reduced_form(const Eigen::MatrixXd& weights,
                                               const Intervention& iv) {
    Eigen::MatrixXd w = weights;
    for (const auto& [idx, _] : iv.assignments) w.col(idx).setZero();
    const int n = static_cast<int>(w.rows());
    return (Eigen::MatrixXd::Identity(n, n) - w)
        .partialPivLu()
        .solve(Eigen::MatrixXd::Identity(n, n));
}

}  // namespace detail

/// Finite interventional-consistency protocol: abstract subsets up to a size
/// cap with +-1 targets, the full target value placed on one relevant
/// variable per abstract variable, evaluated on the canonical exogenous basis
/// plus random draws. Returns max |T^T L^i(e) - H^{omega(i)}(S^T e)|.
inline double brute_force_consistency(const LinearScm& l, const LinearScm& h,
                                      const AbstractionMap& t, const ConsistencyGrid& grid = {}) {
    if (t.d() != l.n_vars() || t.b() != h.n_vars())
        throw DimensionMismatch("brute_force_consistency: T must be d x b for the given models");
    const int d = l.n_vars();
    const int b = h.n_vars();
    const int cap = grid.subset_cap < 0 ? std::min(b, 3) : grid.subset_cap;

    const RelevantSets rel = relevant_sets(t);
    if (!rel.valid())
        throw InvalidAbstraction("brute_force_consistency: relevant sets empty or non-disjoint");

    // The unique linear candidate for the exogenous abstraction, independent
    // of the block machinery: S = F T G^{-1}.
    const Eigen::MatrixXd f = reduced_form(l);
    const int n_h = h.n_vars();
    const Eigen::MatrixXd g = reduced_form(h);
    const Eigen::MatrixXd s =
        g.transpose().partialPivLu().solve((f * t.t).transpose()).transpose();
    (void)n_h;

    // Evaluation points: canonical basis rows plus random draws.
    Rng rng(grid.rng_seed);
    const int n_points = d + grid.n_random_draws;
    Eigen::MatrixXd points(n_points, d);
    points.topRows(d) = Eigen::MatrixXd::Identity(d, d);
    for (int r = d; r < n_points; ++r)
        for (int c = 0; c < d; ++c) points(r, c) = rng.normal();

    double deviation = 0.0;
    std::vector<int> subset;
    const auto run_protocol = [&](const std::vector<int>& target_ys, int sign_mask) {
        Intervention iv_c;
        Intervention iv_a;
        for (std::size_t pos = 0; pos < target_ys.size(); ++pos) {
            const int y = target_ys[pos];
            const double target = (sign_mask >> pos) & 1 ? 1.0 : -1.0;
            const auto& set = rel.sets[static_cast<std::size_t>(y)];
            const int carrier = set.front();
            for (int i : set) iv_c.assignments[i] = 0.0;
            iv_c.assignments[carrier] = target / t.t(carrier, y);
            iv_a.assignments[y] = target;
        }
        const Eigen::MatrixXd f_iv = detail::intervened_reduced_form(l.weights(), iv_c);
        const Eigen::MatrixXd g_iv = detail::intervened_reduced_form(h.weights(), iv_a);

        Eigen::MatrixXd e_mod = points;
        for (const auto& [idx, value] : iv_c.assignments) e_mod.col(idx).setConstant(value);
        const Eigen::MatrixXd lhs = e_mod * f_iv * t.t;

        Eigen::MatrixXd u_mod = points * s;
        for (const auto& [idx, value] : iv_a.assignments) u_mod.col(idx).setConstant(value);
        const Eigen::MatrixXd rhs = u_mod * g_iv;

        deviation = std::max(deviation, (lhs - rhs).cwiseAbs().maxCoeff());
    };

    const auto enumerate = [&](auto&& self, int start) -> void {
        const int size = static_cast<int>(subset.size());
        for (int mask = 0; mask < (1 << size); ++mask) run_protocol(subset, mask);
        if (size == cap) return;
        for (int y = start; y < b; ++y) {
            subset.push_back(y);
            self(self, y + 1);
            subset.pop_back();
        }
    };
    enumerate(enumerate, 0);
    return deviation;
}

// --- JSON serialization -----------------------------------------------------

inline nlohmann::json abstraction_to_json(const AbstractionMap& t) {
    std::vector<double> flat(static_cast<std::size_t>(t.d()) * static_cast<std::size_t>(t.b()));
    for (int i = 0; i < t.d(); ++i)
        for (int j = 0; j < t.b(); ++j)
            flat[static_cast<std::size_t>(i * t.b() + j)] = t.t(i, j);
    return {{"d", t.d()}, {"b", t.b()}, {"t", flat}, {"threshold", t.threshold}};
}

inline AbstractionMap abstraction_from_json(const nlohmann::json& j) {
    const int d = j.at("d").get<int>();
    const int b = j.at("b").get<int>();
    const auto flat = j.at("t").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != d * b)
        throw ShapeMismatch("abstraction_from_json: t length must be d*b");
    AbstractionMap res;
    res.t.resize(d, b);
    for (int i = 0; i < d; ++i)
        for (int c = 0; c < b; ++c) res.t(i, c) = flat[static_cast<std::size_t>(i * b + c)];
    res.threshold = j.value("threshold", 1e-9);
    return res;
}

}  // namespace abslingam
