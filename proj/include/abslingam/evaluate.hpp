#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "abslingam/errors.hpp"
#include "abslingam/pipeline.hpp"
#include "abslingam/scenario.hpp"

namespace abslingam {

struct RunReport {
    double roc_auc = std::numeric_limits<double>::quiet_NaN();
    double pk_precision = std::numeric_limits<double>::quiet_NaN();
    double pk_recall = std::numeric_limits<double>::quiet_NaN();
    double t_support_f1 = std::numeric_limits<double>::quiet_NaN();
    double t_support_nhd = std::numeric_limits<double>::quiet_NaN();
    double abstract_per_concrete = std::numeric_limits<double>::quiet_NaN();
    double time_total_s = 0.0;
    double time_concrete_s = 0.0;
    long long pair_evals = 0;
};

/// Midrank AUC over all ordered off-diagonal pairs; score = |w_hat|, label =
/// (w_true nonzero). Degenerate label sets are an error, not a silent value.
inline double roc_auc_edges(const Eigen::MatrixXd& w_true, const Eigen::MatrixXd& w_hat) {
    if (w_true.rows() != w_hat.rows() || w_true.cols() != w_hat.cols() ||
        w_true.rows() != w_true.cols())
        throw ShapeMismatch("roc_auc_edges: matrices must be square and equal-sized");
    const int d = static_cast<int>(w_true.rows());
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(static_cast<std::size_t>(d) * static_cast<std::size_t>(d - 1));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) scored.emplace_back(std::abs(w_hat(i, j)), w_true(i, j) != 0.0);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::size_t n_pos = 0;
    double rank_sum_pos = 0.0;
    for (std::size_t lo = 0; lo < scored.size();) {
        std::size_t hi = lo;
        while (hi < scored.size() && scored[hi].first == scored[lo].first) ++hi;
        const double midrank = 0.5 * (static_cast<double>(lo + 1) + static_cast<double>(hi));
        for (std::size_t k = lo; k < hi; ++k)
            if (scored[k].second) {
                ++n_pos;
                rank_sum_pos += midrank;
            }
        lo = hi;
    }
    const std::size_t n_neg = scored.size() - n_pos;
    if (n_pos == 0) throw NoPositives("roc_auc_edges: true graph has no edges");
    if (n_neg == 0) throw NoNegatives("roc_auc_edges: true graph has no non-edges");
    return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Precision/recall over forbidden pairs. Empty K_hat makes no claims, so its
/// precision is 1 by convention; empty K_true likewise gives recall 1.
inline std::pair<double, double> pk_scores(const std::set<std::pair<int, int>>& k_hat,
                                           const std::set<std::pair<int, int>>& k_true) {
    std::size_t hits = 0;
    for (const auto& p : k_hat)
        if (k_true.contains(p)) ++hits;
    const double precision =
        k_hat.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(k_hat.size());
    const double recall =
        k_true.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(k_true.size());
    return {precision, recall};
}

struct TSupportMetrics {
    double nhd = 0.0;
    double f1 = 0.0;
    double abstract_per_concrete = 0.0;
    std::vector<int> alignment;  // estimated column j matched to true column alignment[j]
};

namespace detail {

/// Greedy maximum-overlap assignment of estimated support columns to true
/// ones; the learned abstract variables carry no labels.
inline std::vector<int> align_support_columns(const std::vector<std::vector<bool>>& sup_hat,
                                              const std::vector<std::vector<bool>>& sup_true) {
    const int b = static_cast<int>(sup_hat.size());
    std::vector<int> match(static_cast<std::size_t>(b), -1);
    std::vector<bool> taken(static_cast<std::size_t>(b), false);
    for (int round = 0; round < b; ++round) {
        int best_j = -1, best_k = -1;
        long best_overlap = -1;
        for (int j = 0; j < b; ++j) {
            if (match[static_cast<std::size_t>(j)] >= 0) continue;
            for (int k = 0; k < b; ++k) {
                if (taken[static_cast<std::size_t>(k)]) continue;
                long overlap = 0;
                const auto& a = sup_hat[static_cast<std::size_t>(j)];
                const auto& t = sup_true[static_cast<std::size_t>(k)];
                for (std::size_t r = 0; r < a.size(); ++r)
                    if (a[r] && t[r]) ++overlap;
                if (overlap > best_overlap) {
                    best_overlap = overlap;
                    best_j = j;
                    best_k = k;
                }
            }
        }
        match[static_cast<std::size_t>(best_j)] = best_k;
        taken[static_cast<std::size_t>(best_k)] = true;
    }
    return match;
}

}  // namespace detail

/// Boolean-support comparison after thresholding and column alignment:
/// normalized Hamming distance, entry-level F1, and the mean number of
/// abstract variables each concrete variable maps to.
inline TSupportMetrics t_support_metrics(const Eigen::MatrixXd& t_hat,
                                         const Eigen::MatrixXd& t_true, double threshold) {
    if (t_hat.rows() != t_true.rows() || t_hat.cols() != t_true.cols())
        throw ShapeMismatch("t_support_metrics: shape mismatch");
    const int d = static_cast<int>(t_true.rows());
    const int b = static_cast<int>(t_true.cols());
    if (d == 0 || b == 0) throw ShapeMismatch("t_support_metrics: empty matrices");

    std::vector<std::vector<bool>> sup_hat(static_cast<std::size_t>(b)),
        sup_true(static_cast<std::size_t>(b));
    for (int j = 0; j < b; ++j) {
        sup_hat[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(d));
        sup_true[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            sup_hat[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
                std::abs(t_hat(i, j)) >= threshold;
            sup_true[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] =
                std::abs(t_true(i, j)) >= threshold;
        }
    }

    TSupportMetrics m;
    m.alignment = detail::align_support_columns(sup_hat, sup_true);
    long hamming = 0, tp = 0, fp = 0, fn = 0, nnz_hat = 0;
    for (int j = 0; j < b; ++j) {
        const auto& a = sup_hat[static_cast<std::size_t>(j)];
        const auto& t = sup_true[static_cast<std::size_t>(m.alignment[static_cast<std::size_t>(j)])];
        for (int i = 0; i < d; ++i) {
            const bool ah = a[static_cast<std::size_t>(i)];
            const bool at = t[static_cast<std::size_t>(i)];
            if (ah) ++nnz_hat;
            if (ah != at) ++hamming;
            if (ah && at) ++tp;
            else if (ah) ++fp;
            else if (at) ++fn;
        }
    }
    m.nhd = static_cast<double>(hamming) / (static_cast<double>(d) * static_cast<double>(b));
    m.f1 = (2 * tp + fp + fn) == 0
               ? 1.0
               : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    m.abstract_per_concrete = static_cast<double>(nnz_hat) / static_cast<double>(d);
    return m;
}

// --- Benchmark harness -------------------------------------------------------

enum class BenchMethod { DirectLingam, AbsLingam, AbsLingamGt };

inline const char* bench_method_name(BenchMethod m) {
    switch (m) {
        case BenchMethod::DirectLingam: return "directlingam";
        case BenchMethod::AbsLingam: return "abslingam";
        case BenchMethod::AbsLingamGt: return "abslingam_gt";
    }
    return "?";
}

struct BenchmarkCell {
    ScenarioConfig scenario;
    PipelineConfig pipeline;
};

struct BenchmarkRow {
    int cell = 0;
    int rep = 0;           // -1 marks an aggregate row
    int b = 0;
    int d = 0;
    int edges = 0;
    int n_l = 0;
    int n_j = 0;
    double sigma2 = 0.0;
    std::uint64_t seed = 0;
    std::string method;
    std::string status = "ok";  // "ok" or the failure message
    bool agg = false;
    RunReport report;
};

namespace detail {

inline std::vector<int> inverse_permutation(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i)
        inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    return inv;
}

/// Ground-truth concrete weights expressed in the scenario's observed
/// (permuted) column order.
inline Eigen::MatrixXd permuted_true_weights(const Scenario& sc) {
    const int d = sc.l.n_vars();
    Eigen::MatrixXd w(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            w(i, j) = sc.l.weights()(sc.perm_concrete[static_cast<std::size_t>(i)],
                                     sc.perm_concrete[static_cast<std::size_t>(j)]);
    return w;
}

inline Eigen::MatrixXd permuted_true_t(const Scenario& sc) {
    const int d = sc.l.n_vars();
    const int b = sc.h.n_vars();
    Eigen::MatrixXd t(d, b);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < b; ++j)
            t(i, j) = sc.t.t(sc.perm_concrete[static_cast<std::size_t>(i)],
                             sc.perm_abstract[static_cast<std::size_t>(j)]);
    return t;
}

inline std::set<std::pair<int, int>> permuted_k_true(const Scenario& sc) {
    const std::vector<int> inv = inverse_permutation(sc.perm_concrete);
    std::set<std::pair<int, int>> k;
    for (const auto& [src, dst] : sc.ground_truth.k_true)
        k.insert({inv[static_cast<std::size_t>(src)], inv[static_cast<std::size_t>(dst)]});
    return k;
}

inline bool has_path(const Eigen::MatrixXd& w, int src, int dst) {
    return !find_path(w, src, dst).empty();
}

}  // namespace detail

/// One benchmark run: generate the scenario for (cell, rep) and evaluate one
/// method against the ground truth, all in the observed index order.
inline BenchmarkRow run_benchmark_cell(const BenchmarkCell& cell, int cell_index, int rep,
                                       std::uint64_t seed, BenchMethod method) {
    BenchmarkRow row;
    row.cell = cell_index;
    row.rep = rep;
    row.b = cell.scenario.b;
    row.edges = cell.scenario.abstract_edges;
    row.n_l = cell.scenario.n_concrete_samples;
    row.n_j = cell.scenario.n_joint_samples;
    row.sigma2 = cell.scenario.abstract_obs_noise_variance;
    row.seed = seed;
    row.method = bench_method_name(method);
    try {
        ScenarioConfig scfg = cell.scenario;
        scfg.seed = seed;
        const Scenario sc = generate(scfg);
        row.d = sc.l.n_vars();

        const Eigen::MatrixXd w_true = detail::permuted_true_weights(sc);
        const std::set<std::pair<int, int>> k_true = detail::permuted_k_true(sc);

        PipelineConfig pcfg = cell.pipeline;
        pcfg.discovery.rng_seed = seed;

        switch (method) {
            case BenchMethod::DirectLingam: {
                DiscoveryResult res = direct_lingam(sc.d_l, {}, pcfg.discovery);
                row.report.roc_auc = roc_auc_edges(w_true, res.scores);
                row.report.pair_evals = res.pair_evals;
                row.report.time_concrete_s = res.seconds_order + res.seconds_prune;
                row.report.time_total_s = row.report.time_concrete_s;
                break;
            }
            case BenchMethod::AbsLingam: {
                AbsLingamResult res = abs_lingam(sc.d_l, sc.d_j, pcfg);
                row.report.roc_auc = roc_auc_edges(w_true, res.w_scores);
                const auto [prec, rec] = pk_scores(res.knowledge.forbidden_paths, k_true);
                row.report.pk_precision = prec;
                row.report.pk_recall = rec;
                const TSupportMetrics tm =
                    t_support_metrics(res.t_hat.t, detail::permuted_true_t(sc), 1e-12);
                row.report.t_support_f1 = tm.f1;
                row.report.t_support_nhd = tm.nhd;
                row.report.abstract_per_concrete = tm.abstract_per_concrete;
                row.report.pair_evals = res.report.concrete_pair_evals;
                row.report.time_concrete_s = res.report.concrete_seconds;
                row.report.time_total_s = res.report.fit_seconds + res.report.abstract_seconds +
                                          res.report.constraints_seconds +
                                          res.report.concrete_seconds;
                break;
            }
            case BenchMethod::AbsLingamGt: {
                // Oracle mode: true T and M injected, only the constrained
                // concrete discovery is learned.
                PriorKnowledge k;
                k.forbidden_paths = k_true;
                const auto t0 = std::chrono::steady_clock::now();
                DiscoveryResult res = direct_lingam(sc.d_l, k, pcfg.discovery);
                const auto t1 = std::chrono::steady_clock::now();
                row.report.roc_auc = roc_auc_edges(w_true, res.scores);
                const auto [prec, rec] = pk_scores(k.forbidden_paths, k_true);
                row.report.pk_precision = prec;
                row.report.pk_recall = rec;
                row.report.pair_evals = res.pair_evals;
                row.report.time_concrete_s = res.seconds_order + res.seconds_prune;
                row.report.time_total_s = std::chrono::duration<double>(t1 - t0).count();
                break;
            }
        }
    } catch (const std::exception& e) {
        row.status = e.what();
    }
    return row;
}

namespace detail {

inline std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

inline std::string benchmark_csv_header() {
    return "cell,rep,method,b,d,edges,n_l,n_j,sigma2,seed,status,agg,"
           "roc_auc,pk_precision,pk_recall,t_f1,t_nhd,apc,"
           "time_total_s,time_concrete_s,pair_evals";
}

inline std::string benchmark_csv_row(const BenchmarkRow& r) {
    std::string status = r.status;
    for (char& c : status)
        if (c == ',' || c == '\n') c = ';';
    std::string out;
    out += std::to_string(r.cell) + ',' + std::to_string(r.rep) + ',' + r.method + ',';
    out += std::to_string(r.b) + ',' + std::to_string(r.d) + ',' + std::to_string(r.edges) + ',';
    out += std::to_string(r.n_l) + ',' + std::to_string(r.n_j) + ',';
    out += detail::csv_number(r.sigma2) + ',' + std::to_string(r.seed) + ',';
    out += status + ',' + (r.agg ? "true" : "false") + ',';
    out += detail::csv_number(r.report.roc_auc) + ',';
    out += detail::csv_number(r.report.pk_precision) + ',';
    out += detail::csv_number(r.report.pk_recall) + ',';
    out += detail::csv_number(r.report.t_support_f1) + ',';
    out += detail::csv_number(r.report.t_support_nhd) + ',';
    out += detail::csv_number(r.report.abstract_per_concrete) + ',';
    out += detail::csv_number(r.report.time_total_s) + ',';
    out += detail::csv_number(r.report.time_concrete_s) + ',';
    out += std::to_string(r.report.pair_evals);
    return out;
}

namespace detail {

inline void accumulate(std::vector<double>& values, double v) {
    if (!std::isnan(v)) values.push_back(v);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Per-(cell, method) mean rows over successful repetitions, flagged agg=true.
inline std::vector<BenchmarkRow> aggregate_rows(const std::vector<BenchmarkRow>& rows) {
    std::vector<BenchmarkRow> aggs;
    std::set<std::pair<int, std::string>> seen;
    for (const auto& r : rows) {
        if (!seen.insert({r.cell, r.method}).second) continue;
        BenchmarkRow agg;
        agg.cell = r.cell;
        agg.rep = -1;
        agg.b = r.b;
        agg.edges = r.edges;
        agg.n_l = r.n_l;
        agg.n_j = r.n_j;
        agg.sigma2 = r.sigma2;
        agg.method = r.method;
        agg.agg = true;
        std::vector<double> auc, prec, rec, f1, nhd, apc, total, concrete, pairs, dims;
        int n_ok = 0, n_fail = 0;
        for (const auto& x : rows) {
            if (x.cell != r.cell || x.method != r.method) continue;
            if (x.status != "ok") {
                ++n_fail;
                continue;
            }
            ++n_ok;
            detail::accumulate(auc, x.report.roc_auc);
            detail::accumulate(prec, x.report.pk_precision);
            detail::accumulate(rec, x.report.pk_recall);
            detail::accumulate(f1, x.report.t_support_f1);
            detail::accumulate(nhd, x.report.t_support_nhd);
            detail::accumulate(apc, x.report.abstract_per_concrete);
            detail::accumulate(total, x.report.time_total_s);
            detail::accumulate(concrete, x.report.time_concrete_s);
            pairs.push_back(static_cast<double>(x.report.pair_evals));
            dims.push_back(static_cast<double>(x.d));
        }
        agg.status = "ok=" + std::to_string(n_ok) + ";fail=" + std::to_string(n_fail);
        agg.d = static_cast<int>(std::llround(detail::mean_of(dims)));
        agg.report.roc_auc = detail::mean_of(auc);
        agg.report.pk_precision = detail::mean_of(prec);
        agg.report.pk_recall = detail::mean_of(rec);
        agg.report.t_support_f1 = detail::mean_of(f1);
        agg.report.t_support_nhd = detail::mean_of(nhd);
        agg.report.abstract_per_concrete = detail::mean_of(apc);
        agg.report.time_total_s = detail::mean_of(total);
        agg.report.time_concrete_s = detail::mean_of(concrete);
        agg.report.pair_evals = static_cast<long long>(std::llround(detail::mean_of(pairs)));
        aggs.push_back(std::move(agg));
    }
    return aggs;
}

/// Runs every (cell, repetition, method) task, optionally across a thread
/// pool, and returns per-run rows followed by aggregate rows.
inline std::vector<BenchmarkRow> run_benchmark(const std::vector<BenchmarkCell>& grid,
                                               int repetitions, std::uint64_t base_seed,
                                               int jobs = 1) {
    if (repetitions < 0) throw std::invalid_argument("run_benchmark: repetitions must be >= 0");
    if (jobs < 1) jobs = 1;
    constexpr BenchMethod kMethods[] = {BenchMethod::DirectLingam, BenchMethod::AbsLingam,
                                        BenchMethod::AbsLingamGt};
    struct Task {
        int cell;
        int rep;
        BenchMethod method;
    };
    std::vector<Task> tasks;
    for (int c = 0; c < static_cast<int>(grid.size()); ++c)
        for (int rep = 0; rep < repetitions; ++rep)
            for (BenchMethod m : kMethods) tasks.push_back({c, rep, m});

    std::vector<BenchmarkRow> rows(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& t = tasks[i];
            const std::uint64_t seed =
                base_seed + 7919ULL * static_cast<std::uint64_t>(t.cell) +
                static_cast<std::uint64_t>(t.rep);
            rows[i] = run_benchmark_cell(grid[static_cast<std::size_t>(t.cell)], t.cell, t.rep,
                                         seed, t.method);
        }
    };
    if (jobs == 1 || tasks.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(tasks.size()));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<BenchmarkRow> aggs = aggregate_rows(rows);
    rows.insert(rows.end(), aggs.begin(), aggs.end());
    return rows;
}

inline void write_benchmark_csv(const std::string& path, const std::vector<BenchmarkRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_benchmark_csv: cannot open " + path);
    out << benchmark_csv_header() << '\n';
    for (const auto& r : rows) out << benchmark_csv_row(r) << '\n';
    if (!out) throw std::runtime_error("write_benchmark_csv: write failed for " + path);
}

}  // namespace abslingam
