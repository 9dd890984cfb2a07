#include <doctest.h>

#include <sstream>

#include "ldpg/commands.hpp"
#include "test_support.hpp"

using namespace ldpg;

namespace {

Json example_doc() { return read_json_file(test::config_dir() / "example.json"); }

ExperimentConfig quick_config() {
    Json j = example_doc();
    j["T"] = 300;
    j["M"] = 24;
    return parse_config(j, test::config_dir());
}

int run(const std::string& name, const ExperimentConfig& c, const std::filesystem::path& out) {
    std::ostringstream err;
    const int code = run_command(name, c, out, err);
    if (code != kExitOk) MESSAGE(name << ": " << err.str());
    return code;
}

}  // namespace

TEST_CASE("solve writes a converged, reproducible solution") {
    const ExperimentConfig c = quick_config();
    const auto a = test::scratch("solve_a");
    const auto b = test::scratch("solve_b");
    REQUIRE(run("solve", c, a) == kExitOk);
    REQUIRE(run("solve", c, b) == kExitOk);
    const Json j = read_json_file(a / "solution.json");
    CHECK(j["bellman_residual"].get<double>() < 1e-10);
    CHECK(j["tool_version"] == kToolVersion);
    CHECK(j["config_hash"] == c.hash);
    CHECK(test::slurp(a / "solution.json") == test::slurp(b / "solution.json"));
}

TEST_CASE("theory reports infeasible schedules without failing") {
    Json j = example_doc();
    j["schedule"]["eta"] = 1.0;
    const ExperimentConfig c = parse_config(j, test::config_dir());
    const auto out = test::scratch("theory_infeasible");
    REQUIRE(run("theory", c, out) == kExitOk);
    const Json t = read_json_file(out / "theory.json");
    CHECK(t["feasible"] == false);
    REQUIRE(t["binding_constraints"].size() == 1);
    CHECK(t["binding_constraints"][0].get<std::string>().find("mu*eta") != std::string::npos);
    CHECK(t["t0"].is_null());
}

TEST_CASE("doubling C never decreases K") {
    double prev = 0.0;
    for (double cu : {1.0, 2.0, 4.0}) {
        Json j = example_doc();
        j["schedule"]["eta"] = 400.0;
        j["theory"] = {{"C", cu}};
        const auto out = test::scratch("theory_c");
        REQUIRE(run("theory", parse_config(j, test::config_dir()), out) == kExitOk);
        const Json t = read_json_file(out / "theory.json");
        REQUIRE(t["feasible"] == true);
        const double k = t["K"].get<double>();
        CHECK(k >= prev);
        prev = k;
    }
}

TEST_CASE("simulate output is identical across worker counts") {
    ExperimentConfig c = quick_config();
    c.workers = 1;
    const auto a = test::scratch("sim_w1");
    REQUIRE(run("simulate", c, a) == kExitOk);
    c.workers = 8;
    const auto b = test::scratch("sim_w8");
    REQUIRE(run("simulate", c, b) == kExitOk);
    for (const char* f : {"checkpoints.csv", "curves.csv", "trajectory.csv", "manifest.json", "summary.json"})
        CHECK_MESSAGE(test::slurp(a / f) == test::slurp(b / f), f);
    const std::string csv = test::slurp(a / "checkpoints.csv");
    CHECK(csv.rfind("# tool_version=0.1.0 config_hash=" + c.hash, 0) == 0);
}

TEST_CASE("simulate runs with a single replica") {
    Json j = example_doc();
    j["T"] = 100;
    j["M"] = 1;
    const auto out = test::scratch("sim_m1");
    REQUIRE(run("simulate", parse_config(j, test::config_dir()), out) == kExitOk);
    CHECK(read_json_file(out / "manifest.json")["n_replicas"] == 1);
}

TEST_CASE("rate and check succeed on the example") {
    const ExperimentConfig c = quick_config();
    const auto out = test::scratch("rate_check");
    REQUIRE(run("rate", c, out) == kExitOk);
    const Json r = read_json_file(out / "rate.json");
    CHECK(r["retained_dim"] == 2);
    CHECK(r["null_dim"] == 2);
    CHECK(r["rate_value"].get<double>() == doctest::Approx(0.002).epsilon(1e-8));
    REQUIRE(run("check", c, out) == kExitOk);
    const Json k = read_json_file(out / "check.json");
    for (const auto& suite : k["suites"]) CHECK_MESSAGE(suite["status"] != "fail", suite["name"].get<std::string>());
}

TEST_CASE("errors map onto exit codes") {
    Json j = example_doc();
    j["mdp"] = {{"file", "does-not-exist.json"}};
    std::ostringstream err;
    CHECK(run_command("solve", parse_config(j, test::config_dir()), test::scratch("bad"), err) == kExitConfig);
    CHECK_FALSE(err.str().empty());

    j = example_doc();
    j["schedule"]["delta_init"] = 1e-6;
    CHECK(run_command("theory", parse_config(j, test::config_dir()), test::scratch("bad"), err) == kExitConfig);
    CHECK(run_command("frobnicate", quick_config(), test::scratch("bad"), err) != kExitOk);
    CHECK(exit_code_for(NumericalError("x")) == kExitNumerical);
    CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
}

TEST_CASE("generate writes a loadable random MDP") {
    const auto out = test::scratch("gen") / "m.json";
    REQUIRE(cmd_generate(3, 4, 0.85, 5, out) == kExitOk);
    const Mdp m = load_mdp(out);
    CHECK(m.n_states == 3);
    CHECK(m.n_actions == 4);
    CHECK(m.discount == 0.85);
}
