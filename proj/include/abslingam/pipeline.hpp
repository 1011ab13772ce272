#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "abslingam/abstraction.hpp"
#include "abslingam/discovery.hpp"
#include "abslingam/errors.hpp"
#include "abslingam/scenario.hpp"

namespace abslingam {

enum class TStrategy { Plain, Top1, Top1Refit };

struct PipelineConfig {
    double t_threshold = 0.05;
    TStrategy t_strategy = TStrategy::Plain;
    int n_bootstrap = 0;                  // 0 = single abstract discovery run
    double bootstrap_fraction = 0.5;      // subsample fraction, without replacement
    double abstract_edge_vote = 0.5;      // keep an edge present in >= this fraction of runs
    DiscoveryConfig discovery;

    void validate() const {
        if (t_threshold < 0.0) throw std::invalid_argument("PipelineConfig: t_threshold >= 0 required");
        if (n_bootstrap < 0) throw std::invalid_argument("PipelineConfig: n_bootstrap >= 0 required");
        if (bootstrap_fraction <= 0.0 || bootstrap_fraction > 1.0)
            throw std::invalid_argument("PipelineConfig: bootstrap_fraction in (0,1] required");
        if (abstract_edge_vote <= 0.0 || abstract_edge_vote > 1.0)
            throw std::invalid_argument("PipelineConfig: abstract_edge_vote in (0,1] required");
        discovery.validate();
    }
};

struct FitAbstractionResult {
    AbstractionMap t_hat;
    RelevantSets relevant;       // supports of the masked estimate
    bool overlap_resolved = false;  // rows claimed by multiple columns were Top-1 resolved for K
};

/// Column-wise least squares T-reconstruction with optional Top-1 and
/// Top-1-Refit support selection for noisy abstract observations.
inline FitAbstractionResult fit_abstraction(const JointDataset& d_j, const PipelineConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = d_j.x.rows();
    const int d = static_cast<int>(d_j.x.cols());
    const int b = static_cast<int>(d_j.y.cols());
    if (n < 1) throw std::invalid_argument("fit_abstraction: |D_J| must be at least 1");
    if (d_j.y.rows() != n) throw DimensionMismatch("fit_abstraction: paired row counts differ");
    if (n < d)
        std::cerr << "fit_abstraction: warning, |D_J| < d (" << n << " < " << d
                  << "); using the minimum-norm solution\n";

    // Both sides are centered first: the paired abstract columns may carry a
    // constant offset against the concrete columns (their standardizations
    // use different sample statistics), and an uncorrected offset leaks into
    // every coefficient. Minimum-norm least squares handles the
    // underdetermined regime.
    const Eigen::MatrixXd xc = d_j.x.rowwise() - d_j.x.colwise().mean();
    const Eigen::MatrixXd yc = d_j.y.rowwise() - d_j.y.colwise().mean();
    Eigen::MatrixXd t_full = xc.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(yc);

    AbstractionMap t_hat;
    t_hat.threshold = cfg.t_threshold;
    t_hat.t = t_full;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < b; ++j)
            if (std::abs(t_hat.t(i, j)) < cfg.t_threshold) t_hat.t(i, j) = 0.0;

    if (cfg.t_strategy == TStrategy::Top1 || cfg.t_strategy == TStrategy::Top1Refit) {
        for (int i = 0; i < d; ++i) {
            int best = -1;
            for (int j = 0; j < b; ++j)
                if (t_hat.t(i, j) != 0.0 &&
                    (best < 0 || std::abs(t_hat.t(i, j)) > std::abs(t_hat.t(i, best))))
                    best = j;
            for (int j = 0; j < b; ++j)
                if (j != best) t_hat.t(i, j) = 0.0;
        }
    }
    if (cfg.t_strategy == TStrategy::Top1Refit) {
        for (int j = 0; j < b; ++j) {
            if (yc.col(j).squaredNorm() <= 0.0)
                throw DegenerateColumn("fit_abstraction: zero abstract column");
            std::vector<int> sel;
            for (int i = 0; i < d; ++i)
                if (t_hat.t(i, j) != 0.0) sel.push_back(i);
            if (sel.empty()) continue;
            Eigen::MatrixXd x_sel(n, static_cast<Eigen::Index>(sel.size()));
            for (std::size_t k = 0; k < sel.size(); ++k)
                x_sel.col(static_cast<Eigen::Index>(k)) = xc.col(sel[k]);
            const Eigen::VectorXd coef =
                x_sel.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(yc.col(j));
            for (std::size_t k = 0; k < sel.size(); ++k) {
                const double c = coef(static_cast<Eigen::Index>(k));
                t_hat.t(sel[k], j) = std::abs(c) < cfg.t_threshold ? 0.0 : c;
            }
        }
    }

    // The support threshold is already applied; keep derived sets exact.
    t_hat.threshold = 0.0;
    FitAbstractionResult res{std::move(t_hat), {}, false};
    res.relevant = relevant_sets(res.t_hat);
    return res;
}

inline Eigen::MatrixXd abstract_dataset(const Eigen::MatrixXd& d_l, const AbstractionMap& t_hat) {
    if (d_l.cols() != t_hat.d())
        throw DimensionMismatch("abstract_dataset: data columns must match T rows");
    return d_l * t_hat.t;
}

struct AbstractDiscoveryResult {
    LinearScm scm;
    long long pair_evals = 0;
    double seconds = 0.0;
};

/// Single DirectLiNGAM run, or bootstrap aggregation over row subsamples with
/// an edge vote and mean weights over supporting runs.
inline AbstractDiscoveryResult discover_abstract(const Eigen::MatrixXd& d_h_hat,
                                                 const PipelineConfig& cfg) {
    cfg.validate();

    // A heavily masked fitted T can zero out an entire abstract column; the
    // resulting constant column carries no signal, so discovery runs on the
    // informative columns and the degenerate variables stay isolated. Their
    // relevant sets are empty, so no constraint can involve them.
    {
        std::vector<int> active;
        const int b_all = static_cast<int>(d_h_hat.cols());
        for (int j = 0; j < b_all; ++j) {
            const double mean = d_h_hat.col(j).mean();
            if ((d_h_hat.col(j).array() - mean).abs().maxCoeff() > 0.0) active.push_back(j);
        }
        if (static_cast<int>(active.size()) < b_all) {
            Eigen::MatrixXd w_full = Eigen::MatrixXd::Zero(b_all, b_all);
            if (active.size() > 0) {
                Eigen::MatrixXd sub(d_h_hat.rows(), static_cast<Eigen::Index>(active.size()));
                for (std::size_t k = 0; k < active.size(); ++k)
                    sub.col(static_cast<Eigen::Index>(k)) = d_h_hat.col(active[k]);
                AbstractDiscoveryResult inner = discover_abstract(sub, cfg);
                for (std::size_t r = 0; r < active.size(); ++r)
                    for (std::size_t c = 0; c < active.size(); ++c)
                        w_full(active[r], active[c]) =
                            inner.scm.weights()(static_cast<Eigen::Index>(r),
                                                static_cast<Eigen::Index>(c));
                return {LinearScm::with_noise(std::move(w_full), NoiseSpec::gaussian(0.0, 1.0)),
                        inner.pair_evals, inner.seconds};
            }
            return {LinearScm::with_noise(std::move(w_full), NoiseSpec::gaussian(0.0, 1.0)), 0,
                    0.0};
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.n_bootstrap == 0) {
        DiscoveryResult single = direct_lingam(d_h_hat, {}, cfg.discovery);
        const auto t1 = std::chrono::steady_clock::now();
        return {std::move(single.scm), single.pair_evals,
                std::chrono::duration<double>(t1 - t0).count()};
    }

    const Eigen::Index n = d_h_hat.rows();
    const int b = static_cast<int>(d_h_hat.cols());
    const auto m = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::llround(cfg.bootstrap_fraction * static_cast<double>(n))));
    Eigen::MatrixXd votes = Eigen::MatrixXd::Zero(b, b);
    Eigen::MatrixXd weight_sum = Eigen::MatrixXd::Zero(b, b);
    long long pair_evals = 0;
    for (int run = 0; run < cfg.n_bootstrap; ++run) {
        Rng rng(cfg.discovery.rng_seed * 1000003ULL + static_cast<std::uint64_t>(run) + 1);
        const std::vector<int> perm = rng.permutation(static_cast<int>(n));
        Eigen::MatrixXd sub(m, b);
        for (Eigen::Index r = 0; r < m; ++r) sub.row(r) = d_h_hat.row(perm[static_cast<std::size_t>(r)]);
        DiscoveryResult fit = direct_lingam(sub, {}, cfg.discovery);
        pair_evals += fit.pair_evals;
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < b; ++j)
                if (fit.scm.weights()(i, j) != 0.0) {
                    votes(i, j) += 1.0;
                    weight_sum(i, j) += fit.scm.weights()(i, j);
                }
    }
    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(b, b);
    const double needed = cfg.abstract_edge_vote * cfg.n_bootstrap - 1e-9;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            if (votes(i, j) >= needed && votes(i, j) > 0.0) agg(i, j) = weight_sum(i, j) / votes(i, j);

    // The vote can disagree with acyclicity in pathological splits; drop the
    // weakest edge of any remaining cycle.
    for (;;) {
        try {
            LinearScm scm = LinearScm::with_noise(agg, NoiseSpec::gaussian(0.0, 1.0));
            const auto t1 = std::chrono::steady_clock::now();
            return {std::move(scm), pair_evals, std::chrono::duration<double>(t1 - t0).count()};
        } catch (const NotADag&) {
            double best = std::numeric_limits<double>::infinity();
            int bi = -1, bj = -1;
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < b; ++j)
                    if (agg(i, j) != 0.0 && std::abs(agg(i, j)) < best) {
                        best = std::abs(agg(i, j));
                        bi = i;
                        bj = j;
                    }
            agg(bi, bj) = 0.0;
        }
    }
}

/// K = all relevant-set pairs whose abstract pair has no directed path;
/// multiply-claimed concrete variables are Top-1 resolved first so K stays
/// sound.
inline PriorKnowledge derive_constraints(const LinearScm& m_hat,
                                         const std::vector<std::vector<int>>& rel_sets) {
    PriorKnowledge k;
    for (const auto& [src, dst] : implied_forbidden_paths(rel_sets, m_hat.weights()))
        k.forbidden_paths.insert({src, dst});
    return k;
}

struct PipelineReport {
    double fit_seconds = 0.0;
    double abstract_seconds = 0.0;
    double constraints_seconds = 0.0;
    double concrete_seconds = 0.0;
    long long abstract_pair_evals = 0;
    long long concrete_pair_evals = 0;
    std::size_t k_size = 0;
    bool relevant_overlap_resolved = false;
};

struct AbsLingamResult {
    AbstractionMap t_hat;
    LinearScm m_hat;
    LinearScm w_hat;
    Eigen::MatrixXd w_scores;  // unthresholded concrete coefficients
    PriorKnowledge knowledge;
    PipelineReport report;
};

namespace detail {

/// Top-1 resolution of row support, used when a fitted T claims one concrete
/// variable for several abstract variables.
inline std::vector<std::vector<int>> top1_relevant_sets(const AbstractionMap& t_hat,
                                                        bool& resolved) {
    std::vector<std::vector<int>> sets(static_cast<std::size_t>(t_hat.b()));
    for (int i = 0; i < t_hat.d(); ++i) {
        int best = -1;
        int claims = 0;
        for (int j = 0; j < t_hat.b(); ++j)
            if (t_hat.in_support(i, j)) {
                ++claims;
                if (best < 0 || std::abs(t_hat.t(i, j)) > std::abs(t_hat.t(i, best))) best = j;
            }
        if (claims > 1) resolved = true;
        if (best >= 0) sets[static_cast<std::size_t>(best)].push_back(i);
    }
    return sets;
}

}  // namespace detail

/// Abs-LiNGAM: reconstruct T, abstract the concrete dataset, discover the
/// abstract model, derive forbidden paths, run constrained concrete discovery.
inline AbsLingamResult abs_lingam(const Eigen::MatrixXd& d_l, const JointDataset& d_j,
                                  const PipelineConfig& cfg) {
    using clock = std::chrono::steady_clock;
    cfg.validate();

    const auto t0 = clock::now();
    FitAbstractionResult fit = fit_abstraction(d_j, cfg);
    const auto t1 = clock::now();

    const Eigen::MatrixXd d_h_hat = abstract_dataset(d_l, fit.t_hat);
    AbstractDiscoveryResult abstract_fit = discover_abstract(d_h_hat, cfg);
    const auto t2 = clock::now();

    bool overlap = false;
    const std::vector<std::vector<int>> k_sets = detail::top1_relevant_sets(fit.t_hat, overlap);
    PriorKnowledge knowledge = derive_constraints(abstract_fit.scm, k_sets);
    const auto t3 = clock::now();

    DiscoveryResult concrete = direct_lingam(d_l, knowledge, cfg.discovery);
    const auto t4 = clock::now();

    AbsLingamResult res{std::move(fit.t_hat),  std::move(abstract_fit.scm),
                        std::move(concrete.scm), std::move(concrete.scores),
                        std::move(knowledge),  {}};
    res.report.fit_seconds = std::chrono::duration<double>(t1 - t0).count();
    res.report.abstract_seconds = std::chrono::duration<double>(t2 - t1).count();
    res.report.constraints_seconds = std::chrono::duration<double>(t3 - t2).count();
    res.report.concrete_seconds = std::chrono::duration<double>(t4 - t3).count();
    res.report.abstract_pair_evals = abstract_fit.pair_evals;
    res.report.concrete_pair_evals = concrete.pair_evals;
    res.report.k_size = res.knowledge.forbidden_paths.size();
    res.report.relevant_overlap_resolved = overlap;
    return res;
}

}  // namespace abslingam
