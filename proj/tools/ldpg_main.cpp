#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ldpg/commands.hpp"

namespace {

int default_workers() {
    if (const char* env = std::getenv("LDPG_WORKERS")) {
        try {
            const int w = std::stoi(env);
            if (w >= 0) return w;
        } catch (const std::exception&) {
        }
        std::cerr << "ldpg: ignoring invalid LDPG_WORKERS='" << env << "'\n";
    }
    return -1;
}

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "override base_seed");
    cmd->add_option("--out", f.out, "output directory (default: config 'output')");
    cmd->add_option("--workers", f.workers, "OpenMP worker threads, 0 = runtime default")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Large-deviations toolkit for stochastic softmax policy gradient"};
    app.set_version_flag("--version", std::string(ldpg::kToolVersion));
    app.require_subcommand(1);

    RunFlags flags;
    const char* names[] = {"solve", "theory", "simulate", "rate", "compare", "check"};
    const char* help[] = {"solve for the soft-optimal policy",
                          "print the tail-bound constant ledger",
                          "run the Monte Carlo ensemble",
                          "evaluate rate functions and region rates",
                          "simulate and compare against the theory",
                          "run the invariant suite"};
    for (int i = 0; i < 6; ++i) add_run_flags(app.add_subcommand(names[i], help[i]), flags);

    long states = 2;
    long actions = 2;
    double discount = 0.9;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("generate", "write a random MDP document");
    gen->add_option("--states", states, "number of states")->check(CLI::PositiveNumber);
    gen->add_option("--actions", actions, "number of actions")->check(CLI::PositiveNumber);
    gen->add_option("--discount", discount, "discount factor in (0, 1)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ldpg::kExitOk : ldpg::kExitConfig;
    }

    if (gen->parsed()) {
        try {
            return ldpg::cmd_generate(states, actions, discount, gen_seed, gen_out);
        } catch (const std::exception& e) {
            std::cerr << "ldpg generate: " << e.what() << "\n";
            return ldpg::exit_code_for(e);
        }
    }

    const std::string name = app.get_subcommands().front()->get_name();
    ldpg::ExperimentConfig config;
    try {
        config = ldpg::load_config(flags.config);
        if (flags.seed) ldpg::override_seed(config, *flags.seed);
        if (flags.workers) {
            config.workers = *flags.workers;
        } else if (const int w = default_workers(); w >= 0) {
            config.workers = w;
        }
    } catch (const std::exception& e) {
        std::cerr << "ldpg " << name << ": " << e.what() << "\n";
        return ldpg::exit_code_for(e);
    }
    const std::string out = flags.out.empty() ? config.output_dir : flags.out;
    return ldpg::run_command(name, config, out, std::cerr);
}
