// Command-line surface: generate | verify | concretize | discover |
// abslingam | bench. Exit codes: 0 success / verification holds,
// 1 verification negative, 2 usage or IO error.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abslingam/abslingam.hpp"

namespace {

using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

void dump_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

abslingam::NoiseSpec noise_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "exponential") return abslingam::NoiseSpec::exponential(j.at("rate").get<double>());
    if (kind == "uniform")
        return abslingam::NoiseSpec::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
    if (kind == "gaussian")
        return abslingam::NoiseSpec::gaussian(j.at("mean").get<double>(),
                                              j.at("variance").get<double>());
    throw std::runtime_error("unknown noise kind: " + kind);
}

void apply_scenario_overrides(abslingam::ScenarioConfig& cfg, const json& j) {
    if (j.contains("b")) cfg.b = j.at("b").get<int>();
    if (j.contains("abstract_edges")) cfg.abstract_edges = j.at("abstract_edges").get<int>();
    if (j.contains("block_size_range"))
        cfg.block_size_range = j.at("block_size_range").get<std::pair<int, int>>();
    if (j.contains("ignored_block_size_range"))
        cfg.ignored_block_size_range = j.at("ignored_block_size_range").get<std::pair<int, int>>();
    if (j.contains("n_concrete_samples"))
        cfg.n_concrete_samples = j.at("n_concrete_samples").get<int>();
    if (j.contains("n_joint_samples")) cfg.n_joint_samples = j.at("n_joint_samples").get<int>();
    if (j.contains("noise")) cfg.noise_kind = noise_from_json(j.at("noise"));
    if (j.contains("abstract_obs_noise_variance"))
        cfg.abstract_obs_noise_variance = j.at("abstract_obs_noise_variance").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
}

void apply_pipeline_overrides(abslingam::PipelineConfig& cfg, const json& j) {
    if (j.contains("t_threshold")) cfg.t_threshold = j.at("t_threshold").get<double>();
    if (j.contains("t_strategy")) {
        const std::string s = j.at("t_strategy").get<std::string>();
        if (s == "plain") cfg.t_strategy = abslingam::TStrategy::Plain;
        else if (s == "top1") cfg.t_strategy = abslingam::TStrategy::Top1;
        else if (s == "top1refit") cfg.t_strategy = abslingam::TStrategy::Top1Refit;
        else throw std::runtime_error("unknown t_strategy: " + s);
    }
    if (j.contains("n_bootstrap")) cfg.n_bootstrap = j.at("n_bootstrap").get<int>();
    if (j.contains("bootstrap_fraction"))
        cfg.bootstrap_fraction = j.at("bootstrap_fraction").get<double>();
    if (j.contains("abstract_edge_vote"))
        cfg.abstract_edge_vote = j.at("abstract_edge_vote").get<double>();
    if (j.contains("prune_threshold"))
        cfg.discovery.prune_threshold = j.at("prune_threshold").get<double>();
}

int cmd_generate(const std::string& config_path, std::uint64_t seed, const std::string& out) {
    abslingam::ScenarioConfig cfg;
    if (!config_path.empty()) apply_scenario_overrides(cfg, load_json(config_path));
    cfg.seed = seed;
    cfg.validate();
    const abslingam::Scenario sc = abslingam::generate(cfg);
    abslingam::save_scenario(sc, out);
    std::cout << "scenario: b=" << sc.h.n_vars() << " d=" << sc.l.n_vars()
              << " |D_L|=" << sc.d_l.rows() << " |D_J|=" << sc.d_j.x.rows()
              << " |K_true|=" << sc.ground_truth.k_true.size() << " -> " << out << "\n";
    return 0;
}

int cmd_verify(const std::string& model_l, const std::string& model_h, const std::string& t_path,
               double tol) {
    const abslingam::LinearScm l = abslingam::scm_from_json(load_json(model_l));
    const abslingam::LinearScm h = abslingam::scm_from_json(load_json(model_h));
    const abslingam::AbstractionMap t = abslingam::abstraction_from_json(load_json(t_path));
    const abslingam::BlockAbstractionReport rep = abslingam::check_block_abstraction(l, h, t, tol);
    std::cout << "max residual: " << rep.max_residual << "\n"
              << "block ordering ok: " << (rep.ordering_ok ? "yes" : "no") << "\n"
              << "blocks disjoint: " << (rep.blocks_ok ? "yes" : "no") << "\n";
    const abslingam::ImpliedAbstractGraph implied = abslingam::implied_abstract_graph(l, t);
    for (const auto& v : implied.violations)
        std::cout << "connectivity violation: source x" << v.source_var << " (witness x"
                  << v.witness_var << ") cannot reach targets of y" << v.target_abstract << "\n";
    std::cout << (rep.ok ? "VERIFIED" : "NOT AN ABSTRACTION") << "\n";
    return rep.ok ? 0 : 1;
}

int cmd_concretize(const std::string& model_h, const std::string& t_path, std::uint64_t seed,
                   const std::string& config_path, const std::string& out, double tol) {
    const abslingam::LinearScm h = abslingam::scm_from_json(load_json(model_h));
    const abslingam::AbstractionMap t = abslingam::abstraction_from_json(load_json(t_path));
    abslingam::ConcretizeConfig cfg;
    if (!config_path.empty()) {
        const json j = load_json(config_path);
        if (j.contains("inner_edge_prob")) cfg.inner_edge_prob = j.at("inner_edge_prob").get<double>();
        if (j.contains("dirichlet_alpha")) cfg.dirichlet_alpha = j.at("dirichlet_alpha").get<double>();
        if (j.contains("ignored_block_size"))
            cfg.ignored_block_size = j.at("ignored_block_size").get<int>();
        if (j.contains("noise")) cfg.noise = noise_from_json(j.at("noise"));
    }
    cfg.rng_seed = seed;
    const abslingam::Concretization conc = abslingam::sample_concretization(h, t, cfg);
    const abslingam::BlockAbstractionReport rep =
        abslingam::check_block_abstraction(conc.scm, h, conc.t_extended, tol);
    if (!rep.ok) {
        std::cerr << "self-check failed: residual " << rep.max_residual << "\n";
        return 1;
    }
    dump_json(out, abslingam::scm_to_json(conc.scm));
    std::cout << "concrete model: d=" << conc.scm.n_vars() << " residual=" << rep.max_residual
              << " -> " << out << "\n";
    return 0;
}

int cmd_discover(const std::string& data_path, const std::string& knowledge_path,
                 const std::string& config_path, std::uint64_t seed, const std::string& out) {
    const Eigen::MatrixXd data = abslingam::read_csv(data_path);
    abslingam::PriorKnowledge k;
    if (!knowledge_path.empty()) {
        const json j = load_json(knowledge_path);
        for (const auto& p : j.at("forbidden_paths"))
            k.forbidden_paths.insert({p.at(0).get<int>(), p.at(1).get<int>()});
    }
    abslingam::DiscoveryConfig cfg;
    if (!config_path.empty()) {
        const json j = load_json(config_path);
        if (j.contains("prune_threshold")) cfg.prune_threshold = j.at("prune_threshold").get<double>();
    }
    cfg.rng_seed = seed;
    const abslingam::DiscoveryResult res = abslingam::direct_lingam(data, k, cfg);
    dump_json(out, abslingam::scm_to_json(res.scm));
    int n_edges = 0;
    for (int i = 0; i < res.scm.n_vars(); ++i)
        for (int j = 0; j < res.scm.n_vars(); ++j)
            if (res.scm.weights()(i, j) != 0.0) ++n_edges;
    std::cout << "discovered: d=" << res.scm.n_vars() << " edges=" << n_edges
              << " pair_evals=" << res.pair_evals << " order_s=" << res.seconds_order
              << " prune_s=" << res.seconds_prune << " -> " << out << "\n";
    return 0;
}

int cmd_abslingam(const std::string& d_l_path, const std::string& d_j_x_path,
                  const std::string& d_j_y_path, const std::string& config_path,
                  std::uint64_t seed, const std::string& out_dir) {
    const Eigen::MatrixXd d_l = abslingam::read_csv(d_l_path);
    abslingam::JointDataset d_j;
    d_j.x = abslingam::read_csv(d_j_x_path);
    d_j.y = abslingam::read_csv(d_j_y_path);
    abslingam::PipelineConfig cfg;
    if (!config_path.empty()) apply_pipeline_overrides(cfg, load_json(config_path));
    cfg.discovery.rng_seed = seed;
    const abslingam::AbsLingamResult res = abslingam::abs_lingam(d_l, d_j, cfg);

    std::filesystem::create_directories(out_dir);
    dump_json(out_dir + "/t_hat.json", abslingam::abstraction_to_json(res.t_hat));
    dump_json(out_dir + "/m_hat.json", abslingam::scm_to_json(res.m_hat));
    dump_json(out_dir + "/w_hat.json", abslingam::scm_to_json(res.w_hat));
    json report{{"fit_seconds", res.report.fit_seconds},
                {"abstract_seconds", res.report.abstract_seconds},
                {"constraints_seconds", res.report.constraints_seconds},
                {"concrete_seconds", res.report.concrete_seconds},
                {"abstract_pair_evals", res.report.abstract_pair_evals},
                {"concrete_pair_evals", res.report.concrete_pair_evals},
                {"k_size", res.report.k_size},
                {"relevant_overlap_resolved", res.report.relevant_overlap_resolved}};
    dump_json(out_dir + "/report.json", report);

    std::cout << "stage           seconds\n"
              << "fit T           " << res.report.fit_seconds << "\n"
              << "abstract        " << res.report.abstract_seconds << "\n"
              << "constraints     " << res.report.constraints_seconds << "\n"
              << "concrete        " << res.report.concrete_seconds << "\n"
              << "|K| = " << res.report.k_size
              << ", concrete pair evals = " << res.report.concrete_pair_evals << "\n"
              << "outputs -> " << out_dir << "\n";
    return 0;
}

int cmd_bench(const std::string& grid_path, int repetitions, std::uint64_t seed, int jobs,
              const std::string& out_csv) {
    const json grid_json = load_json(grid_path);
    std::vector<abslingam::BenchmarkCell> grid;
    for (const auto& cell : grid_json.at("cells")) {
        abslingam::BenchmarkCell c;
        if (cell.contains("scenario")) apply_scenario_overrides(c.scenario, cell.at("scenario"));
        if (cell.contains("pipeline")) apply_pipeline_overrides(c.pipeline, cell.at("pipeline"));
        grid.push_back(c);
    }
    if (grid_json.contains("repetitions") && repetitions < 0)
        repetitions = grid_json.at("repetitions").get<int>();
    if (repetitions < 0) repetitions = 1;
    const std::vector<abslingam::BenchmarkRow> rows =
        abslingam::run_benchmark(grid, repetitions, seed, jobs);
    abslingam::write_benchmark_csv(out_csv, rows);
    std::cout << "cell method       roc_auc pk_prec pk_rec  pairs\n";
    for (const auto& r : rows) {
        if (!r.agg) continue;
        std::printf("%4d %-12s %7.3f %7.3f %7.3f %8lld\n", r.cell, r.method.c_str(),
                    r.report.roc_auc, r.report.pk_precision, r.report.pk_recall,
                    r.report.pair_evals);
    }
    std::cout << rows.size() << " rows -> " << out_csv << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear causal abstraction toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string config_path, out = "out", out_file = "model.json";
    int jobs = 1;
    double tol = 1e-8;

    auto* gen = app.add_subcommand("generate", "Generate a synthetic scenario");
    gen->add_option("--seed", seed);
    gen->add_option("--config", config_path)->check(CLI::ExistingFile);
    gen->add_option("--out", out);

    std::string model_l, model_h, t_path;
    auto* verify = app.add_subcommand("verify", "Check that T abstracts a concrete model");
    verify->add_option("--model-l", model_l)->required()->check(CLI::ExistingFile);
    verify->add_option("--model-h", model_h)->required()->check(CLI::ExistingFile);
    verify->add_option("--t", t_path)->required()->check(CLI::ExistingFile);
    verify->add_option("--tol", tol);

    auto* conc = app.add_subcommand("concretize", "Sample a concrete model abstracted by (M, T)");
    conc->add_option("--model-h", model_h)->required()->check(CLI::ExistingFile);
    conc->add_option("--t", t_path)->required()->check(CLI::ExistingFile);
    conc->add_option("--seed", seed);
    conc->add_option("--config", config_path)->check(CLI::ExistingFile);
    conc->add_option("--out", out_file);
    conc->add_option("--tol", tol);

    std::string data_path, knowledge_path;
    auto* disc = app.add_subcommand("discover", "Run causal discovery on a dataset");
    disc->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
    disc->add_option("--knowledge", knowledge_path)->check(CLI::ExistingFile);
    disc->add_option("--config", config_path)->check(CLI::ExistingFile);
    disc->add_option("--seed", seed);
    disc->add_option("--out", out_file);

    std::string d_l_path, d_j_x_path, d_j_y_path;
    auto* absl = app.add_subcommand("abslingam", "Run the full abstraction-aided pipeline");
    absl->add_option("--d-l", d_l_path)->required()->check(CLI::ExistingFile);
    absl->add_option("--d-j-x", d_j_x_path)->required()->check(CLI::ExistingFile);
    absl->add_option("--d-j-y", d_j_y_path)->required()->check(CLI::ExistingFile);
    absl->add_option("--config", config_path)->check(CLI::ExistingFile);
    absl->add_option("--seed", seed);
    absl->add_option("--out", out);

    std::string grid_path, out_csv = "bench.csv";
    int repetitions = -1;
    auto* bench = app.add_subcommand("bench", "Run a benchmark grid and emit CSV");
    bench->add_option("--grid", grid_path)->required()->check(CLI::ExistingFile);
    bench->add_option("--reps", repetitions);
    bench->add_option("--seed", seed);
    bench->add_option("--jobs", jobs);
    bench->add_option("--out", out_csv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(config_path, seed, out);
        if (verify->parsed()) return cmd_verify(model_l, model_h, t_path, tol);
        if (conc->parsed())
            return cmd_concretize(model_h, t_path, seed, config_path, out_file, tol);
        if (disc->parsed())
            return cmd_discover(data_path, knowledge_path, config_path, seed, out_file);
        if (absl->parsed())
            return cmd_abslingam(d_l_path, d_j_x_path, d_j_y_path, config_path, seed, out);
        if (bench->parsed()) return cmd_bench(grid_path, repetitions, seed, jobs, out_csv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
