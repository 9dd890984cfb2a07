#pragma once

#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ldpg/config.hpp"
#include "ldpg/montecarlo.hpp"

namespace ldpg {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitNumerical = 2, kExitInvariant = 3 };

/// Maps a library exception to the CLI exit code.
int exit_code_for(const std::exception& e);

/// Everything derived from a config: MDP, θ*, θ₁, theory constants, schedule and the rate function.
struct Experiment {
    ExperimentConfig config;
    Mdp mdp;
    SoftSolution soft;
    PolicyParams theta_init;
    double delta_init = 0.0;
    bool delta_derived = true;
    double gap1 = 0.0;

    bool has_theory = false;
    L1Estimate l1;
    double pl_factor = 0.0;
    double mu_prepass = 0.0;  // μ(θ₁)
    double mu = 0.0;
    bool mu_derived = true;
    double sigma = 0.0;
    double eta = 0.0;
    bool eta_derived = true;
    std::optional<TheoryConstants> constants;
    std::string infeasible_constraint;
    std::string infeasible_reason;
    std::optional<StepSchedule> schedule;
    std::string schedule_error;
    double conditioning_min_prob = 0.0;

    bool has_ldp = false;
    Matrix hess;
    SpectralData spec;
    std::optional<RateFunction> rate_fn;
    std::string rate_error;
    std::vector<RegionSpec> regions;

    /// True when the gap tail bound applies to the simulated schedule.
    bool bound_matches_schedule() const;
    const StepSchedule& require_schedule() const;
    const RateFunction& require_rate() const;
};

/// Loads the MDP, solves for θ*, builds θ₁; optionally the theory and LDP layers.
Experiment prepare_experiment(const ExperimentConfig& config, bool theory, bool ldp);

/// Ensemble config for the experiment's schedule and monitors.
EnsembleConfig make_ensemble_config(const Experiment& exp);

// Each command writes its outputs into out_dir and returns an exit code.
int cmd_solve(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_theory(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_rate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_compare(const ExperimentConfig& config, const std::filesystem::path& out_dir);
int cmd_check(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Writes a seeded random MDP document.
int cmd_generate(Index n_states, Index n_actions, double discount, std::uint64_t seed,
                 const std::filesystem::path& out_file);

/// Dispatches by name and converts exceptions into exit codes, reporting to err.
int run_command(const std::string& name, const ExperimentConfig& config, const std::filesystem::path& out_dir,
                std::ostream& err);

}  // namespace ldpg
