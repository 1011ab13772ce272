#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "abslingam/abslingam.hpp"

using namespace abslingam;
namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("ABSLINGAM_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    return WEXITSTATUS(rc);
}

fs::path workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "abslingam_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

void dump(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Two-block fixture: abstract edge y0 -> y1 with weight 1, T sums pairs of
// concrete variables, one inner edge x0 -> x1.
LinearScm two_block_h() {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
    m(0, 1) = 1.0;
    return LinearScm::with_noise(m, NoiseSpec::exponential(1.0));
}

AbstractionMap two_block_t() {
    AbstractionMap t;
    t.t = Eigen::MatrixXd::Zero(4, 2);
    t.t(0, 0) = 1.0;
    t.t(1, 0) = 1.0;
    t.t(2, 1) = 1.0;
    t.t(3, 1) = 1.0;
    return t;
}

LinearScm two_block_model(const Eigen::Matrix2d& cross) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
    w(0, 1) = 1.0;
    w.block(0, 2, 2, 2) = cross;
    return LinearScm::with_noise(w, NoiseSpec::exponential(1.0));
}

}  // namespace

TEST_CASE("generate is deterministic byte for byte") {
    const fs::path a = workdir() / "gen_a";
    const fs::path b = workdir() / "gen_b";
    const fs::path cfg = workdir() / "gen.json";
    dump(cfg, {{"b", 3}, {"abstract_edges", 2}, {"block_size_range", {2, 3}},
               {"n_concrete_samples", 500}, {"n_joint_samples", 30}});
    REQUIRE(run_cli("generate --seed 11 --config " + cfg.string() + " --out " + a.string()) == 0);
    REQUIRE(run_cli("generate --seed 11 --config " + cfg.string() + " --out " + b.string()) == 0);
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const fs::path other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        REQUIRE(slurp(entry.path()) == slurp(other));
        ++compared;
    }
    REQUIRE(compared > 0);
    // A different seed changes the data.
    const fs::path c = workdir() / "gen_c";
    REQUIRE(run_cli("generate --seed 12 --config " + cfg.string() + " --out " + c.string()) == 0);
    bool any_diff = false;
    for (const auto& entry : fs::directory_iterator(a))
        if (slurp(entry.path()) != slurp(c / entry.path().filename())) any_diff = true;
    REQUIRE(any_diff);
}

TEST_CASE("verify accepts valid models and rejects invalid ones") {
    const fs::path h_path = workdir() / "h.json";
    const fs::path t_path = workdir() / "t.json";
    const fs::path good = workdir() / "model_good.json";
    const fs::path bad = workdir() / "model_bad.json";
    dump(h_path, scm_to_json(two_block_h()));
    dump(t_path, abstraction_to_json(two_block_t()));
    dump(good, scm_to_json(two_block_model(Eigen::Matrix2d::Identity())));
    Eigen::Matrix2d uneven;
    uneven << 0.0, 0.0, 1.0, 0.0;  // row sums 0 and 1 instead of 1 and 1
    dump(bad, scm_to_json(two_block_model(uneven)));

    const std::string common =
        " --model-h " + h_path.string() + " --t " + t_path.string();
    REQUIRE(run_cli("verify --model-l " + good.string() + common) == 0);
    REQUIRE(run_cli("verify --model-l " + bad.string() + common) == 1);

    Eigen::Matrix2d mixed;
    mixed << 0.5, 0.5, 0.5, 0.5;  // both rows sum to 1: also a valid model
    const fs::path good2 = workdir() / "model_good2.json";
    dump(good2, scm_to_json(two_block_model(mixed)));
    REQUIRE(run_cli("verify --model-l " + good2.string() + common) == 0);
}

TEST_CASE("concretize output passes verification") {
    const fs::path h_path = workdir() / "h.json";
    const fs::path t_path = workdir() / "t.json";
    const fs::path out = workdir() / "concrete.json";
    dump(h_path, scm_to_json(two_block_h()));
    dump(t_path, abstraction_to_json(two_block_t()));
    REQUIRE(run_cli("concretize --model-h " + h_path.string() + " --t " + t_path.string() +
                    " --seed 5 --out " + out.string()) == 0);
    REQUIRE(run_cli("verify --model-l " + out.string() + " --model-h " + h_path.string() +
                    " --t " + t_path.string()) == 0);
}

TEST_CASE("concretize rejects a rank-deficient T") {
    const fs::path h_path = workdir() / "h.json";
    const fs::path t_path = workdir() / "t_bad.json";
    dump(h_path, scm_to_json(two_block_h()));
    AbstractionMap t;
    t.t = Eigen::MatrixXd::Zero(4, 2);
    t.t(0, 0) = 1.0;
    t.t(0, 1) = 1.0;
    t.t(1, 0) = 2.0;
    t.t(1, 1) = 2.0;
    dump(t_path, abstraction_to_json(t));
    REQUIRE(run_cli("concretize --model-h " + h_path.string() + " --t " + t_path.string() +
                    " --out " + (workdir() / "unused.json").string()) == 2);
}

TEST_CASE("discover recovers most of a chain from data") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
    w(0, 1) = 1.2;
    w(1, 2) = -0.9;
    w(2, 3) = 1.1;
    const auto scm = LinearScm::with_noise(w, NoiseSpec::exponential(1.0));
    const Eigen::MatrixXd data = simulate(scm, 20000, 321);
    const fs::path csv = workdir() / "data.csv";
    write_csv(csv.string(), data, "x");
    const fs::path out = workdir() / "w_hat.json";
    REQUIRE(run_cli("discover --data " + csv.string() + " --out " + out.string()) == 0);
    std::ifstream in(out);
    nlohmann::json j;
    in >> j;
    const LinearScm w_hat = scm_from_json(j);
    REQUIRE(roc_auc_edges(w, w_hat.weights()) > 0.9);

    // A knowledge file that forbids everything forces the empty graph.
    const fs::path k_path = workdir() / "k.json";
    nlohmann::json forbid = {{"forbidden_paths", nlohmann::json::array()}};
    for (int i = 0; i < 4; ++i)
        for (int jdx = 0; jdx < 4; ++jdx)
            if (i != jdx) forbid["forbidden_paths"].push_back({i, jdx});
    dump(k_path, forbid);
    const fs::path out2 = workdir() / "w_empty.json";
    REQUIRE(run_cli("discover --data " + csv.string() + " --knowledge " + k_path.string() +
                    " --out " + out2.string()) == 0);
    std::ifstream in2(out2);
    nlohmann::json j2;
    in2 >> j2;
    REQUIRE(scm_from_json(j2).weights().isZero(0.0));
}

TEST_CASE("abslingam subcommand writes the full output bundle") {
    ScenarioConfig cfg;
    cfg.b = 3;
    cfg.abstract_edges = 2;
    cfg.block_size_range = {2, 3};
    cfg.n_concrete_samples = 2000;
    cfg.n_joint_samples = 60;
    cfg.seed = 9;
    const Scenario sc = generate(cfg);
    const fs::path d_l = workdir() / "d_l.csv";
    const fs::path d_j_x = workdir() / "d_j_x.csv";
    const fs::path d_j_y = workdir() / "d_j_y.csv";
    write_csv(d_l.string(), sc.d_l, "x");
    write_csv(d_j_x.string(), sc.d_j.x, "x");
    write_csv(d_j_y.string(), sc.d_j.y, "y");
    const fs::path out = workdir() / "pipe_out";
    REQUIRE(run_cli("abslingam --d-l " + d_l.string() + " --d-j-x " + d_j_x.string() +
                    " --d-j-y " + d_j_y.string() + " --out " + out.string()) == 0);
    for (const char* name : {"t_hat.json", "m_hat.json", "w_hat.json", "report.json"})
        REQUIRE(fs::exists(out / name));
    std::ifstream in(out / "report.json");
    nlohmann::json rep;
    in >> rep;
    REQUIRE(rep.contains("k_size"));
    REQUIRE(rep.at("concrete_pair_evals").get<long long>() > 0);
}

TEST_CASE("bench subcommand writes the expected CSV") {
    const fs::path grid = workdir() / "grid.json";
    dump(grid, {{"cells",
                 {{{"scenario",
                    {{"b", 3}, {"abstract_edges", 2}, {"block_size_range", {2, 3}},
                     {"n_concrete_samples", 1000}, {"n_joint_samples", 40}}}}}},
                {"repetitions", 1}});
    const fs::path out = workdir() / "bench.csv";
    REQUIRE(run_cli("bench --grid " + grid.string() + " --seed 3 --out " + out.string()) == 0);
    std::ifstream in(out);
    std::string header;
    REQUIRE(std::getline(in, header));
    REQUIRE(header == benchmark_csv_header());
    int data_rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++data_rows;
    REQUIRE(data_rows == 6);  // 1 rep x 3 methods + 3 aggregates
}

TEST_CASE("usage errors exit with code two") {
    REQUIRE(run_cli("") == 2);
    REQUIRE(run_cli("frobnicate") == 2);
    REQUIRE(run_cli("verify --model-l /nonexistent.json --model-h /nonexistent.json --t "
                    "/nonexistent.json") == 2);
    REQUIRE(run_cli("discover") == 2);
    REQUIRE(run_cli("--help") == 0);
}
