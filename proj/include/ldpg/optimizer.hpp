#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ldpg/mdp.hpp"
#include "ldpg/noise.hpp"

namespace ldpg {

/// η_t = η / (t + t₀ + 1), t ≥ 1.
struct StepSchedule {
    double eta = 0.0;
    long t0 = 0;

    double step(long t) const { return eta / double(t + t0 + 1); }
    double first_step() const { return step(1); }
};

struct Trajectory {
    std::vector<PolicyParams> thetas;  // θ_1 … θ_{T+1}
    std::vector<double> gaps;          // V(θ_t) − V(θ*) for each stored θ_t
    std::vector<Vector> noises;        // Z_1 … Z_T
    std::vector<double> min_probs;     // min_{s,a} π_{θ_t}(a|s)
    StepSchedule schedule;
    std::uint64_t seed = 0;

    long steps() const { return long(noises.size()); }
};

/// Per-iterate snapshot handed to streaming observers.
struct IterateView {
    long t;               // iterate index, θ_t with t = 1 … T+1
    const Table& theta;
    double gap;
    double min_prob;
    const Vector* noise;  // Z_t that produced θ_{t+1}; null for t = T+1
};

using IterateObserver = std::function<void(const IterateView&)>;

/// Hard limit on ‖θ_t‖_∞ before a run is declared divergent.
inline constexpr double kDivergenceLimit = 1e8;

/**
 * Runs θ_{t+1} = θ_t − η_t (g(θ_t) − Z_t) for t = 1..T and calls the
 * observer for every iterate. Deterministic given the seed. Throws
 * DivergenceError (with the step index) on a non-finite or exploding iterate.
 */
void sgd_stream(const Mdp& mdp, double tau, const SoftSolution& soft, const PolicyParams& theta_init,
                const StepSchedule& schedule, const NoiseModel& model, long T, std::uint64_t seed,
                const IterateObserver& observer);

/// sgd_stream() that records the whole path.
Trajectory sgd_run(const Mdp& mdp, double tau, const SoftSolution& soft, const PolicyParams& theta_init,
                   const StepSchedule& schedule, const NoiseModel& model, long T, std::uint64_t seed);

}  // namespace ldpg
