#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace kdvstar;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "kdvstar_cli_tests";

int run(const std::string& args, const std::string& log = "log.txt") {
    fs::create_directories(kWork);
    const std::string cmd = std::string(KDVSTAR_CLI_PATH) + " " + args + " > " + (kWork / log).string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config(const std::string& name, const std::string& body) {
    fs::create_directories(kWork);
    const fs::path p = kWork / name;
    std::ofstream(p) << body;
    return p.string();
}

const char* kNet = R"("network": {"lengths": [1.0, 1.4142135623730951, 2.718281828459045], "alpha": 2.0},
  "grid": {"nodes_per_unit": 24})";

std::vector<std::vector<double>> csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) r.push_back(std::stod(c));
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("critical subcommand", "[cli]") {
    REQUIRE(run("critical 6.283185307", "crit1.txt") == 0);
    const json a = json::parse(slurp(kWork / "crit1.txt"));
    CHECK(a["edges"][0]["is_critical"] == true);
    CHECK(a["edges"][0]["witness"] == json::array({1, 1}));

    REQUIRE(run("critical 1.0 2.0", "crit2.txt") == 0);
    const json b = json::parse(slurp(kWork / "crit2.txt"));
    CHECK(b["regime"] == "NonCritical");
    CHECK(b["count"] == 0);

    // 9.597457 is 2 pi sqrt(7/3) to six decimals only, hence the looser tolerance
    REQUIRE(run("critical 6.283185307 9.597457 --tol 1e-3", "crit3.txt") == 0);
    const json c = json::parse(slurp(kWork / "crit3.txt"));
    CHECK(c["regime"] == "Critical");
    CHECK(c["count"] == 2);
    CHECK(c["edges"][1]["witness"] == json::array({1, 2}));

    CHECK(run("critical -- -1.0") == 2);
    CHECK(run("critical") == 2);
}

TEST_CASE("simulate subcommand", "[cli]") {
    const auto zero = config("zero.json", std::string("{") + kNet + R"(, "time": {"T": 0.5}, "initial": "zero"})");
    REQUIRE(run("simulate -c " + zero + " -o " + (kWork / "zero").string()) == 0);
    for (const auto& r : csv_rows(kWork / "zero" / "trajectory.csv")) CHECK(r[1] == 0.0);
    const json m = json::parse(slurp(kWork / "zero" / "manifest.json"));
    CHECK(m["subcommand"] == "simulate");
    CHECK(m["config"]["initial"] == "zero");

    const auto cfg = config("sim.json", std::string("{") + kNet + R"(, "time": {"T": 1.0}, "initial": "random", "seed": 4})");
    const std::string out1 = (kWork / "run1").string(), out2 = (kWork / "run2").string();
    REQUIRE(run("simulate -c " + cfg + " -o " + out1 + " --emit-plot --states") == 0);
    REQUIRE(run("simulate -c " + cfg + " -o " + out2 + " --emit-plot --states") == 0);
    for (const char* f : {"trajectory.csv", "summary.json", "energy.svg", "final_state.csv", "manifest.json"})
        CHECK(slurp(fs::path(out1) / f) == slurp(fs::path(out2) / f));
    CHECK(slurp(fs::path(out1) / "trajectory.csv").rfind("t,E,u1_at_0,dxu_at_0_edge1", 0) == 0);

    REQUIRE(run("simulate -c " + cfg + " -o " + (kWork / "nl").string() + " --scheme nonlinear --amplitude 1e-3 --T 2") == 0);
    const auto rows = csv_rows(kWork / "nl" / "trajectory.csv");
    const json s = json::parse(slurp(kWork / "nl" / "summary.json"));
    CHECK(rows.size() == s["steps"].get<size_t>() + 1);
    for (size_t n = 1; n < rows.size(); ++n) CHECK(rows[n][1] <= rows[n - 1][1] * (1 + 1e-12));
    CHECK(s["energy_nonincreasing"] == true);

    const auto mtx = (kWork / "A.mtx").string();
    REQUIRE(run("simulate -c " + cfg + " -o " + out1 + " --T 0.25 --export-operator " + mtx) == 0);
    CHECK(read_matrix_market(mtx).rows() > 0);
}

TEST_CASE("exit codes for bad input", "[cli]") {
    CHECK(run("simulate -c /nonexistent.json") == 2);
    const auto bad = config("bad.json", "{\"network\": {\"lengths\": [1, 2, 3], \"alpha\": 1.0}}");
    CHECK(run("simulate -c " + bad, "bad.txt") == 2);
    CHECK(slurp(kWork / "bad.txt").find("coupling not dissipative") != std::string::npos);
    const auto dt = config("dt.json", std::string("{") + kNet + R"(, "time": {"T": 1.0, "dt": 0.3}})");
    CHECK(run("simulate -c " + dt) == 2);
    const auto big = config("big.json", std::string("{") + kNet + R"(, "time": {"T": 1.0}, "scheme": "nonlinear"})");
    CHECK(run("simulate -c " + big + " --amplitude 1e7 -o " + (kWork / "big").string(), "big.txt") == 3);
    CHECK(run("nosuchcommand") == 2);
}

TEST_CASE("control subcommand", "[cli]") {
    const auto crit = config("crit.json", R"({"network": {"lengths": [6.283185307179586, 6.283185307179586, 1], "alpha": 2},
                                              "grid": {"M": [32, 32, 8]}, "time": {"T": 1}, "initial": "zero"})");
    CHECK(run("control -c " + crit + " -o " + (kWork / "crit").string(), "crit.txt") == 4);
    CHECK(slurp(kWork / "crit.txt").find("Critical") != std::string::npos);

    const auto zero = config("czero.json", std::string("{") + kNet + R"(, "time": {"T": 1}, "initial": "zero", "target": "zero"})");
    REQUIRE(run("control -c " + zero + " -o " + (kWork / "czero").string() + " --verify") == 0);
    for (const auto& r : csv_rows(kWork / "czero" / "controls.csv"))
        for (size_t k = 1; k < r.size(); ++k) CHECK(r[k] == 0.0);
    CHECK(json::parse(slurp(kWork / "czero" / "hum.json"))["miss"] == 0.0);

    const auto null = config("null.json", std::string("{") + kNet + R"(, "time": {"T": 3, "dt": 0.041666666666666664},
        "initial": "bump 1.4 0.8 1 3", "control": {"epsilons": [1e-2, 1e-4, 1e-6], "cg_maxit": 100}})");
    const auto out = kWork / "null";
    REQUIRE(run("control -c " + null + " -o " + out.string() + " --epsilon-sweep --verify", "null.txt") == 0);
    const json h = json::parse(slurp(out / "hum.json"));
    CHECK(h["sweep_monotone"] == true);
    CHECK(h["verified"] == true);
    CHECK(h["relative_miss"].get<double>() <= 0.05);
    CHECK(slurp(out / "controls.csv").rfind("t,g,g_1,g_2,g_3\n", 0) == 0);
    CHECK(csv_rows(out / "sweep.csv").size() == 3);
}

TEST_CASE("decay, observability and modes subcommands", "[cli]") {
    const auto dec = config("decay.json", std::string("{") + kNet + R"(, "time": {"T": 8, "dt": 0.0208333333333333333}, "seeds": 2})");
    REQUIRE(run("decay -c " + dec + " -o " + (kWork / "decay").string()) == 0);
    const json c = json::parse(slurp(kWork / "decay" / "campaign.json"));
    CHECK(c["verdict"] == "exponential decay observed");
    CHECK(c["fits"].size() == 2);
    CHECK(c["rng_seed"] == 20240607);

    const auto obs = config("obs.json", std::string("{") + kNet + R"(, "time": {"T": 1},
        "observability": {"gramian": "stabilization", "k_cut": 5, "n_eigs": 2}})");
    REQUIRE(run("observability -c " + obs + " -o " + (kWork / "obs").string() + " --test-vector \"sine 1\"") == 0);
    const json s = json::parse(slurp(kWork / "obs" / "spectrum.json"));
    CHECK(s["eigenvalues"].size() == 2);
    CHECK(s["eigenvalues"][0].get<double>() > 0.0);
    CHECK(s["eigenvalues"][0].get<double>() <= s["rayleigh_quotient"].get<double>() * (1 + 1e-9));

    REQUIRE(run("modes 6.283185307179586 6.283185307179586 1 --nodes-per-unit 16 -o " + (kWork / "modes").string()) == 0);
    const json m = json::parse(slurp(kWork / "modes" / "modes.json"));
    CHECK(m["edge_modes"].size() == 2);
    CHECK(m["network_mode"]["energy"].get<double>() == Catch::Approx(3 * th::pi).epsilon(1e-8));
    CHECK(fs::exists(kWork / "modes" / "mode.csv"));
}
