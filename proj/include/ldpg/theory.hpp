#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ldpg/mdp.hpp"
#include "ldpg/optimizer.hpp"

namespace ldpg {

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
double spectral_norm_power(const Matrix& sym, double tol = 1e-8, int max_iter = 100000);

struct L1Estimate {
    double value = 0.0;         // safety_factor × max sampled norm, or the override
    double max_sampled = 0.0;   // max spectral norm over the samples
    int n_samples = 0;
    double radius = 0.0;
    double safety_factor = 1.5;
    bool overridden = false;
};

using HessianFn = std::function<Matrix(const Vector&)>;

/// Smoothness constant from sampled Hessians at `center` and n_samples points
/// drawn uniformly from the radius-ball around it.
L1Estimate estimate_l1(const HessianFn& hessian_at, const Vector& center, int n_samples, double radius,
                       std::uint64_t seed, double safety_factor = 1.5);

L1Estimate estimate_l1(const Mdp& mdp, double tau, const SoftSolution& soft, int n_samples, double radius,
                       std::uint64_t seed, double safety_factor = 1.5, std::optional<double> override_value = {});

/// μ(θ) = factor · min_{s,a} π_θ(a|s)², factor = 2τ/|S| · min ρ / ‖d*/ρ‖_∞.
double pl_factor(const Mdp& mdp, double tau, const SoftSolution& soft);
double pl_constant(const Mdp& mdp, const PolicyParams& theta, double tau, const SoftSolution& soft);

struct Lemma5Inputs {
    double l1 = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    double c_universal = 2.0;
    double eta = 0.0;
    double epsilon = 0.1;
    double delta_init = 0.0;
    long T = 1;
    double gap1 = 0.0;
    Index dim = 0;  // |S|·|A|
};

struct TheoryConstants {
    double l1 = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
    double c_universal = 0.0;
    double c_m = 0.0;
    double b0 = 0.0;
    double c0 = 0.0;
    double eta = 0.0;
    long t0 = 0;
    double k_const = 0.0;
    double epsilon = 0.0;
    double delta_init = 0.0;
    double gap1 = 0.0;
    long T = 0;
    Index dim = 0;

    std::vector<double> a;  // a_t, t = 1..T (index t-1)
    std::vector<double> b;
    std::vector<double> c;
    std::vector<std::string> binding_constraints;

    StepSchedule schedule() const { return {eta, t0}; }
    double gamma_bar() const;
};

/// Smallest t₀ and K satisfying every lower bound for the exponential tail
/// bound. Throws InfeasibleError naming the violated inequality.
TheoryConstants lemma5_constants(const Lemma5Inputs& in);

/// Smallest η with μη − 1 > σ²/C_M, inflated by (1 + margin).
double auto_eta(double mu, double sigma, double c_universal, Index dim, double margin = 0.1);

/// 1 − (t + t₀ + 1)δ/K, the exponent of the tail bound before clamping.
double exp_bound_exponent(const TheoryConstants& k, long t, double delta);
/// min(1, exp(exponent)).
double exp_bound(const TheoryConstants& k, long t, double delta);

struct InequalityReport {
    long samples = 0;
    long smoothness_violations = 0;  // V(θ') > V(θ) + ⟨g, θ'−θ⟩ + L₁/2 ‖θ'−θ‖²
    long gradient_violations = 0;    // ‖g‖² > 2L₁(V − V*)
    long pl_violations = 0;          // ‖g‖² < μ(θ)(V − V*)
    double max_smoothness_excess = -std::numeric_limits<double>::infinity();  // max of lhs − rhs
    double worst_gradient = 0.0;     // largest ‖g‖² / (2L₁(V − V*))
    double worst_pl = 0.0;           // largest μ(θ)(V − V*) / ‖g‖²

    bool ok() const { return smoothness_violations == 0 && gradient_violations == 0 && pl_violations == 0; }
};

/**
 * Draws n_samples points θ uniformly from the radius-ball around θ* (plus a
 * second independent point θ' for the smoothness test) and checks the
 * smoothness, gradient-domination and PL inequalities with relative
 * tolerance 1e-10.
 */
InequalityReport check_inequalities(const Mdp& mdp, double tau, const SoftSolution& soft, double l1, int n_samples,
                                    double radius, std::uint64_t seed);

struct RecursionViolation {
    long t;            // index of the iterate on the left-hand side
    std::string which; // "gap" or "distance"
    double lhs;
    double rhs;
};

struct RecursionReport {
    long steps_checked = 0;
    long gap_violations = 0;
    long distance_violations = 0;
    std::optional<RecursionViolation> first_violation;
    bool ok() const { return gap_violations == 0 && distance_violations == 0; }
};

/**
 * Checks at every step
 *   gap_{t+1} ≤ (1 − μη_t + μη_t²L₁) gap_t + η_t⟨g(θ_t), Z_t⟩ + η_t² L₁ ‖Z_t‖²
 * with μ the running minimum of μ(θ_ℓ), and
 *   ‖θ_{t+1} − θ*‖ ≤ γ_t ‖θ_t − θ*‖ + η_t ‖Z_t‖,
 *   γ_t = (1 + η_tL₁ + η_tL₁²/μ(θ_t) + η_t²L₁²)^{1/2}.
 * Gaps come from the trajectory record, gradients are recomputed exactly.
 */
RecursionReport check_recursion(const Trajectory& traj, const TheoryConstants& constants, const Mdp& mdp,
                                double tau, const SoftSolution& soft);

}  // namespace ldpg
