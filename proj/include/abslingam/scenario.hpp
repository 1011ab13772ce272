#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "abslingam/abstraction.hpp"
#include "abslingam/concretize.hpp"
#include "abslingam/csv.hpp"
#include "abslingam/errors.hpp"
#include "abslingam/rng.hpp"
#include "abslingam/scm.hpp"

namespace abslingam {

struct ScenarioConfig {
    int b = 5;
    int abstract_edges = 8;
    std::pair<int, int> block_size_range = {5, 10};
    std::pair<int, int> ignored_block_size_range = {0, 0};
    int n_concrete_samples = 15000;
    int n_joint_samples = 150;
    NoiseSpec noise_kind = NoiseSpec::exponential(1.0);
    double abstract_obs_noise_variance = 0.0;
    std::uint64_t seed = 0;
    ConcretizeConfig concretize;
    double min_total_effect = 1e-3;  // no-cancellation rejection threshold
    int max_rejections = 100;

    void validate() const {
        if (b < 1) throw std::invalid_argument("ScenarioConfig: b must be positive");
        if (block_size_range.first < 1 || block_size_range.first > block_size_range.second)
            throw std::invalid_argument("ScenarioConfig: block_size_range must be ordered and positive");
        if (ignored_block_size_range.first < 0 ||
            ignored_block_size_range.first > ignored_block_size_range.second)
            throw std::invalid_argument("ScenarioConfig: ignored_block_size_range must be ordered");
        if (n_joint_samples > n_concrete_samples)
            throw std::invalid_argument("ScenarioConfig: |D_J| must not exceed |D_L|");
        if (abstract_obs_noise_variance < 0.0)
            throw std::invalid_argument("ScenarioConfig: noise variance must be nonnegative");
    }
};

struct GroundTruth {
    std::vector<std::vector<int>> relevant_sets;   // canonical concrete indices
    std::vector<std::vector<int>> blocks;
    std::vector<int> ignored;
    std::vector<std::pair<int, int>> k_true;       // forbidden concrete paths
};

struct JointDataset {
    Eigen::MatrixXd x;  // n_j x d
    Eigen::MatrixXd y;  // n_j x b
};

struct Scenario {
    LinearScm h;
    LinearScm l;
    AbstractionMap t;
    std::vector<int> perm_concrete;   // permuted column i holds canonical perm_concrete[i]
    std::vector<int> perm_abstract;
    Eigen::MatrixXd d_l;              // standardized, permuted
    JointDataset d_j;                 // standardized, permuted; rows share exogenous draws
    GroundTruth ground_truth;
    Eigen::MatrixXd raw_x;            // canonical, pre-standardization (first |D_J| rows pair with raw_y)
    Eigen::MatrixXd raw_y;
    Eigen::VectorXd concrete_mean, concrete_std;  // D_L statistics, canonical order
    Eigen::VectorXd abstract_mean, abstract_std;  // D_J statistics, canonical order
};

/// Erdős-Rényi DAG with exactly n_edges edges, weight magnitudes in [0.5, 2].
inline LinearScm sample_abstract_model(int b, int n_edges, Rng& rng,
                                       const NoiseSpec& noise = NoiseSpec::exponential(1.0)) {
    const int max_edges = b * (b - 1) / 2;
    if (n_edges > max_edges)
        throw TooManyEdges("sample_abstract_model: at most " + std::to_string(max_edges) +
                           " edges for " + std::to_string(b) + " nodes");
    const std::vector<int> order = rng.permutation(b);
    std::vector<int> position(static_cast<std::size_t>(b));
    for (int p = 0; p < b; ++p) position[static_cast<std::size_t>(order[static_cast<std::size_t>(p)])] = p;

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < b; ++i)
        for (int j = i + 1; j < b; ++j) pairs.emplace_back(i, j);
    rng.shuffle(pairs);

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(b, b);
    for (int e = 0; e < n_edges; ++e) {
        auto [u, v] = pairs[static_cast<std::size_t>(e)];
        if (position[static_cast<std::size_t>(u)] > position[static_cast<std::size_t>(v)]) std::swap(u, v);
        m(u, v) = rng.signed_uniform(0.5, 2.0);
    }
    return LinearScm::with_noise(std::move(m), noise);
}

/// Abstraction map with one contiguous block per abstract variable
/// (irrelevant rows first, relevant rows last) plus a trailing ignored block.
/// At least half of each block is relevant; coefficients in +-[0.5, 2].
inline AbstractionMap sample_abstraction_map(const LinearScm& m,
                                             std::pair<int, int> block_size_range,
                                             std::pair<int, int> ignored_block_size_range,
                                             Rng& rng) {
    const int b = m.n_vars();
    std::vector<int> sizes(static_cast<std::size_t>(b));
    std::vector<int> n_relevant(static_cast<std::size_t>(b));
    int d = 0;
    for (int j = 0; j < b; ++j) {
        const int n = rng.uniform_int(block_size_range.first, block_size_range.second);
        int rel = (n + 1) / 2;
        for (int extra = rel; extra < n; ++extra)
            if (rng.bernoulli(0.5)) ++rel;
        sizes[static_cast<std::size_t>(j)] = n;
        n_relevant[static_cast<std::size_t>(j)] = rel;
        d += n;
    }
    const int ignored =
        rng.uniform_int(ignored_block_size_range.first, ignored_block_size_range.second);
    d += ignored;

    AbstractionMap t;
    t.t = Eigen::MatrixXd::Zero(d, b);
    int row = 0;
    for (int j = 0; j < b; ++j) {
        const int n = sizes[static_cast<std::size_t>(j)];
        const int rel = n_relevant[static_cast<std::size_t>(j)];
        for (int r = n - rel; r < n; ++r) t.t(row + r, j) = rng.signed_uniform(0.5, 2.0);
        row += n;
    }
    return t;
}

namespace detail {

inline void standardize_columns(Eigen::MatrixXd& data, Eigen::VectorXd& mean,
                                Eigen::VectorXd& std_dev) {
    mean = data.colwise().mean();
    data.rowwise() -= mean.transpose();
    std_dev = (data.array().square().colwise().mean()).sqrt();
    for (int c = 0; c < data.cols(); ++c)
        if (std_dev(c) <= 0.0) std_dev(c) = 1.0;
    data.array().rowwise() /= std_dev.transpose().array();
}

inline Eigen::MatrixXd permute_columns(const Eigen::MatrixXd& data, const std::vector<int>& perm) {
    Eigen::MatrixXd res(data.rows(), data.cols());
    for (int c = 0; c < data.cols(); ++c) res.col(c) = data.col(perm[static_cast<std::size_t>(c)]);
    return res;
}

}  // namespace detail

/// Forbidden concrete paths implied by (relevant sets, abstract ancestry):
/// all cross-relevant pairs whose abstract pair has no directed path.
inline std::vector<std::pair<int, int>> implied_forbidden_paths(
    const std::vector<std::vector<int>>& rel_sets, const Eigen::MatrixXd& abstract_weights) {
    const auto closure = detail::transitive_closure(abstract_weights);
    const int b = static_cast<int>(rel_sets.size());
    std::vector<std::pair<int, int>> k;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            if (i == j || closure[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) continue;
            for (int src : rel_sets[static_cast<std::size_t>(i)])
                for (int dst : rel_sets[static_cast<std::size_t>(j)]) k.emplace_back(src, dst);
        }
    return k;
}

/// Full generator: abstract model, abstraction map, concretization with
/// no-cancellation rejection, datasets, permutations, ground truth.
inline Scenario generate(const ScenarioConfig& config) {
    config.validate();
    Rng rng(config.seed);

    for (int attempt = 0; attempt < config.max_rejections; ++attempt) {
        LinearScm m = sample_abstract_model(config.b, config.abstract_edges, rng, config.noise_kind);
        AbstractionMap t =
            sample_abstraction_map(m, config.block_size_range, config.ignored_block_size_range, rng);

        ConcretizeConfig ccfg = config.concretize;
        ccfg.ignored_block_size = 0;  // ignored rows already live in T
        ccfg.noise = config.noise_kind;
        Concretization conc = [&]() -> Concretization {
            return sample_concretization(m, t, ccfg, rng);
        }();
        const LinearScm& l = conc.scm;

        // No-cancellation rejection: every abstract edge must carry a
        // non-negligible total effect from each relevant source variable.
        const Eigen::MatrixXd f = reduced_form(l);
        const RelevantSets rel = relevant_sets(t);
        bool faithful = true;
        for (int i = 0; i < config.b && faithful; ++i)
            for (int j = 0; j < config.b && faithful; ++j) {
                if (m.weights()(i, j) == 0.0) continue;
                for (int src : rel.sets[static_cast<std::size_t>(i)]) {
                    double best = 0.0;
                    for (int dst : rel.sets[static_cast<std::size_t>(j)])
                        best = std::max(best, std::abs(f(src, dst)));
                    if (best < config.min_total_effect) {
                        faithful = false;
                        break;
                    }
                }
            }
        if (!faithful) continue;

        const ImpliedAbstractGraph implied = implied_abstract_graph(l, t);
        bool graph_matches = implied.violations.empty();
        for (int i = 0; i < config.b && graph_matches; ++i)
            for (int j = 0; j < config.b; ++j)
                if (implied.adjacency[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] !=
                    (m.weights()(i, j) != 0.0)) {
                    graph_matches = false;
                    break;
                }
        if (!graph_matches) continue;

        const BlockStructure blocks = concrete_blocks(l, t);
        const Eigen::MatrixXd s = exogenous_map(l, t, blocks).matrix_s;
        const Eigen::MatrixXd g = reduced_form(m);

        const int d = l.n_vars();
        Eigen::MatrixXd e(config.n_concrete_samples, d);
        for (int r = 0; r < config.n_concrete_samples; ++r)
            for (int c = 0; c < d; ++c) e(r, c) = config.noise_kind.sample(rng);

        Eigen::MatrixXd raw_x = e * f;
        Eigen::MatrixXd raw_y = e.topRows(config.n_joint_samples) * s * g;
        if (config.abstract_obs_noise_variance > 0.0) {
            const double sigma = std::sqrt(config.abstract_obs_noise_variance);
            for (int r = 0; r < raw_y.rows(); ++r)
                for (int c = 0; c < raw_y.cols(); ++c) raw_y(r, c) += rng.normal(0.0, sigma);
        }

        Scenario sc{.h = m,
                    .l = l,
                    .t = t,
                    .perm_concrete = rng.permutation(d),
                    .perm_abstract = rng.permutation(config.b),
                    .d_l = {},
                    .d_j = {},
                    .ground_truth = {},
                    .raw_x = raw_x,
                    .raw_y = raw_y,
                    .concrete_mean = {},
                    .concrete_std = {},
                    .abstract_mean = {},
                    .abstract_std = {}};

        // Concrete columns (both datasets) use the D_L statistics so the
        // fitted abstraction lives in a single scale basis.
        Eigen::MatrixXd x_std = raw_x;
        detail::standardize_columns(x_std, sc.concrete_mean, sc.concrete_std);
        Eigen::MatrixXd y_std = raw_y;
        detail::standardize_columns(y_std, sc.abstract_mean, sc.abstract_std);

        sc.d_l = detail::permute_columns(x_std, sc.perm_concrete);
        sc.d_j.x = detail::permute_columns(x_std.topRows(config.n_joint_samples), sc.perm_concrete);
        sc.d_j.y = detail::permute_columns(y_std, sc.perm_abstract);

        sc.ground_truth.relevant_sets = rel.sets;
        sc.ground_truth.blocks = blocks.blocks;
        sc.ground_truth.ignored = blocks.ignored;
        sc.ground_truth.k_true = implied_forbidden_paths(rel.sets, m.weights());
        return sc;
    }
    throw ResampleExhausted("generate: no faithful scenario within max_rejections");
}

// --- Manifest persistence ---------------------------------------------------

inline void save_scenario(const Scenario& sc, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_csv(dir + "/d_l.csv", sc.d_l, "x");
    write_csv(dir + "/d_j_x.csv", sc.d_j.x, "x");
    write_csv(dir + "/d_j_y.csv", sc.d_j.y, "y");

    nlohmann::json manifest{
        {"h", scm_to_json(sc.h)},
        {"l", scm_to_json(sc.l)},
        {"t", abstraction_to_json(sc.t)},
        {"perm_concrete", sc.perm_concrete},
        {"perm_abstract", sc.perm_abstract},
        {"k_true", sc.ground_truth.k_true},
        {"relevant_sets", sc.ground_truth.relevant_sets},
        {"blocks", sc.ground_truth.blocks},
        {"ignored", sc.ground_truth.ignored},
        {"files", {{"d_l", "d_l.csv"}, {"d_j_x", "d_j_x.csv"}, {"d_j_y", "d_j_y.csv"}}},
    };
    std::ofstream out(dir + "/scenario.json");
    if (!out) throw std::runtime_error("save_scenario: cannot open manifest");
    out << manifest.dump(2) << '\n';
}

inline Scenario load_scenario(const std::string& dir) {
    std::ifstream in(dir + "/scenario.json");
    if (!in) throw std::runtime_error("load_scenario: cannot open manifest in " + dir);
    nlohmann::json manifest;
    in >> manifest;

    Scenario sc{.h = scm_from_json(manifest.at("h")),
                .l = scm_from_json(manifest.at("l")),
                .t = abstraction_from_json(manifest.at("t")),
                .perm_concrete = manifest.at("perm_concrete").get<std::vector<int>>(),
                .perm_abstract = manifest.at("perm_abstract").get<std::vector<int>>(),
                .d_l = {},
                .d_j = {},
                .ground_truth = {},
                .raw_x = {},
                .raw_y = {},
                .concrete_mean = {},
                .concrete_std = {},
                .abstract_mean = {},
                .abstract_std = {}};
    const auto& files = manifest.at("files");
    sc.d_l = read_csv(dir + "/" + files.at("d_l").get<std::string>());
    sc.d_j.x = read_csv(dir + "/" + files.at("d_j_x").get<std::string>());
    sc.d_j.y = read_csv(dir + "/" + files.at("d_j_y").get<std::string>());
    sc.ground_truth.k_true = manifest.at("k_true").get<std::vector<std::pair<int, int>>>();
    sc.ground_truth.relevant_sets =
        manifest.at("relevant_sets").get<std::vector<std::vector<int>>>();
    sc.ground_truth.blocks = manifest.at("blocks").get<std::vector<std::vector<int>>>();
    sc.ground_truth.ignored = manifest.at("ignored").get<std::vector<int>>();
    return sc;
}

}  // namespace abslingam
