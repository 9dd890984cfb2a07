#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldpg/mdp.hpp"
#include "ldpg/noise.hpp"
#include "ldpg/optimizer.hpp"
#include "ldpg/region.hpp"
#include "ldpg/theory.hpp"

namespace ldpg {

/// A monitored event: membership of P(θ_t − θ*) in a region, or gap_t ≥ δ.
struct Monitor {
    enum class Kind { Region, Gap };

    std::string id;
    Kind kind = Kind::Gap;
    RegionSpec region;
    double delta = 0.0;

    static Monitor gap(std::string id, double delta);
    static Monitor in_region(RegionSpec region);
};

/// Distinct values ⌈growth^k⌉, k = 0, 1, …, not exceeding T.
std::vector<long> geometric_checkpoints(long T, double growth = 1.3);

struct EnsembleConfig {
    Mdp mdp;
    double tau = 0.0;
    SoftSolution soft;
    PolicyParams theta_init;
    StepSchedule schedule;
    NoiseModel noise;
    long T = 0;
    long M = 0;
    std::uint64_t base_seed = 0;
    std::vector<long> checkpoints;  // t = number of completed updates, 1 ≤ t ≤ T
    std::vector<Monitor> monitors;
    Matrix projector;  // applied to θ_t − θ* before region tests; empty means identity
    /// Conditioning event inf_t min_{s,a} π_{θ_t}(a|s) ≥ this value.
    double conditioning_min_prob = 0.0;
    int workers = 0;  // 0: OpenMP default
    std::string config_hash;
};

struct ReplicaStatus {
    long index = 0;
    std::uint64_t seed = 0;
    bool diverged = false;
    long divergence_step = 0;
    double min_prob = 1.0;  // inf over the run of min π_{θ_t}
    bool conditioning_event = true;
};

/// Replica 0 at each checkpoint. theta_norm is ‖θ_t − θ*‖₂, noise_norm is
/// ‖Z_t‖₂ for the noise of the last update.
struct TrajectoryRow {
    long t = 0;
    double gap = 0.0;
    double theta_norm = 0.0;
    double noise_norm = 0.0;
};

struct EnsembleStats {
    std::vector<long> checkpoints;
    std::vector<Monitor> monitors;
    std::vector<std::vector<long>> counts;  // [monitor][checkpoint]
    long n_requested = 0;
    long n_replicas = 0;  // replicas that finished, M
    long n_divergent = 0;
    bool flagged = false;  // more than 1% divergent
    long conditioning_hits = 0;
    double min_prob_observed = 1.0;
    std::vector<ReplicaStatus> replicas;
    std::vector<TrajectoryRow> first_trajectory;
    std::string config_hash;

    /// log((count + 1) / (M + 1)).
    double log_prob(std::size_t monitor, std::size_t checkpoint) const;
    bool censored(std::size_t monitor, std::size_t checkpoint) const { return counts[monitor][checkpoint] == 0; }
    std::size_t monitor_index(const std::string& id) const;
};

namespace detail {

struct ReplicaResult {
    ReplicaStatus status;
    std::vector<std::uint8_t> hits;  // [monitor * n_checkpoints + checkpoint]
    std::vector<TrajectoryRow> rows;
};

void validate(const EnsembleConfig& config);
ReplicaResult run_replica(const EnsembleConfig& config, long index);
EnsembleStats aggregate(const EnsembleConfig& config, const std::vector<ReplicaResult>& results);

}  // namespace detail

/// Serial reference: replicas in index order on the calling thread.
EnsembleStats run_ensemble_serial(const EnsembleConfig& config);

/// Replicas spread over config.workers OpenMP threads. The reduction runs
/// in replica order, so the result equals run_ensemble_serial().
EnsembleStats run_ensemble(const EnsembleConfig& config);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double residual_norm = 0.0;
    long t_lo = 0;
    long t_hi = 0;
    int n_points = 0;

    double rate() const { return -slope; }
};

/// Ordinary least squares y ≈ intercept + slope·t.
SlopeFit fit_line(const std::vector<double>& t, const std::vector<double>& y);

struct DecayFit {
    SlopeFit windowed;  // last window_fraction of the valid checkpoints
    SlopeFit full;      // all valid checkpoints
};

/// Fits log_prob against t over checkpoints with count ≥ min_count.
/// Throws EstimationError with fewer than 4 valid checkpoints.
DecayFit fit_decay_slope(const EnsembleStats& stats, std::size_t monitor, double window_fraction = 0.6,
                         long min_count = 10);

struct BinomialInterval {
    double lower = 0.0;
    double upper = 1.0;
};

/// Exact one-sided Clopper-Pearson bounds, each at level alpha.
BinomialInterval clopper_pearson(long k, long n, double alpha);

struct BoundCheck {
    std::string monitor_id;
    long t = 0;
    double delta = 0.0;
    long count = 0;
    long n = 0;
    double frequency = 0.0;
    double cp_lower = 0.0;
    double cp_upper = 0.0;
    double bound = 1.0;
    double bound_raw = 0.0;  // exponent before clamping
    bool violated = false;   // cp_lower > bound
};

struct RegionCheck {
    std::string monitor_id;
    double rate_theory = 0.0;
    double rate_empirical = 0.0;
    double slope_se = 0.0;
    double margin = 0.0;  // r̂ − r
    bool fit_ok = false;
    bool violated = false;  // r̂ < r − slack · SE
    std::string note;
    DecayFit fit;
};

struct CompareOptions {
    double confidence_level = 1e-3;
    double slack_se = 3.0;
    double window_fraction = 0.6;
    long min_count = 10;
    int region_starts = 16;
};

struct ComparisonReport {
    std::vector<BoundCheck> bounds;
    std::vector<RegionCheck> regions;
    long bound_violations = 0;
    long region_violations = 0;
    double conditioning_frequency = 1.0;
    bool ensemble_flagged = false;

    bool ok() const { return bound_violations == 0 && region_violations == 0 && !ensemble_flagged; }
};

/**
 * Gap monitors are checked against the tail bound at every checkpoint
 * (skipped when constants is null); region monitors compare the fitted
 * decay slope with region_rate() and need rate_fn. Throws ConfigError when the stats were
 * produced under a different config hash.
 */
ComparisonReport compare_bounds(const EnsembleStats& stats, const TheoryConstants* constants,
                                const RateFunction* rate_fn, const std::string& expected_hash,
                                const CompareOptions& opts = {});

}  // namespace ldpg
