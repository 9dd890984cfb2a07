#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "ldpg/types.hpp"

namespace ldpg {

/**
 * Finite discounted MDP (S, A, P, c, γ, ρ) with costs to be minimized.
 *
 * Transitions are stored as an (S·A) × S row-major table: row s·A + a is
 * the distribution P(· | s, a). Construction does not validate; use
 * validate_mdp() for a report or Mdp::checked() to throw on bad input.
 */
struct Mdp {
    Index n_states = 0;
    Index n_actions = 0;
    Table transition;  // (S*A) x S
    Table cost;        // S x A
    double discount = 0.0;
    Vector init_dist;  // S

    Index dim() const { return n_states * n_actions; }
    Index row(Index s, Index a) const { return s * n_actions + a; }

    static Mdp checked(Mdp mdp);
};

struct Violation {
    std::string invariant;
    std::string location;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

ValidationReport validate_mdp(const Mdp& mdp);

/// Regularized evaluation of a fixed policy under per-stage cost c + τ·log π.
struct PolicyValue {
    Vector v;       // V_τ^π(s)
    Table q;        // c(s,a) + γ⟨P(s,a,·), v⟩
    double objective = 0.0;  // ⟨ρ, v⟩
};

PolicyValue policy_value(const Mdp& mdp, const Policy& policy, double tau);

struct SoftSolution {
    Vector v_star;
    Table q_star;
    Policy pi_star;
    PolicyParams theta_star;
    double objective = 0.0;
    double bellman_residual = 0.0;
    double stationarity = 0.0;  // ‖g(θ*)‖_∞
    long iterations = 0;
};

/// Soft value iteration to sup-norm residual below `tol`; θ* = −Q*/τ.
SoftSolution soft_optimal(const Mdp& mdp, double tau, double tol = 1e-12, long max_iter = 1'000'000);

/// Discounted state-visitation distribution (1−γ)·ρᵀ(I − γP_π)⁻¹.
Vector visitation(const Mdp& mdp, const Policy& policy);

/// Q_τ + τ·log π − V_τ at π_θ.
Table soft_advantage(const Mdp& mdp, const PolicyParams& theta, double tau);

/// Exact policy gradient of V_τ^θ(ρ) with respect to θ.
Table exact_gradient(const Mdp& mdp, const PolicyParams& theta, double tau);

/// Central differences of the objective, coordinate by coordinate, with step h.
Table fd_gradient(const Mdp& mdp, const PolicyParams& theta, double tau, double h = 1e-5);

/// Default central-difference step for hessian(): 1e-5 · max(1, ‖θ‖_∞).
double default_fd_step(const PolicyParams& theta);

/// Symmetrized central-difference Hessian of V_τ^θ(ρ) over the flattened θ.
Matrix hessian(const Mdp& mdp, const PolicyParams& theta, double tau, std::optional<double> fd_step = {});

/**
 * Reusable evaluator for the objective and its gradient. Holds scratch
 * buffers so repeated calls (the SGD inner loop) do not allocate.
 * Not thread-safe; give each thread its own instance.
 */
class ObjectiveEvaluator {
public:
    ObjectiveEvaluator(const Mdp& mdp, double tau);

    /// Computes π_θ, V, Q, d, advantage and gradient at θ.
    void evaluate(const Table& theta);

    double objective() const { return objective_; }
    const Table& gradient() const { return grad_; }
    const Table& policy() const { return pi_; }
    const Vector& values() const { return v_; }
    const Vector& visitation() const { return d_; }
    const Table& advantage() const { return adv_; }
    double min_prob() const { return pi_.minCoeff(); }

    /// Objective only, skips the visitation solve.
    double value_only(const Table& theta);

private:
    void build_system(const Table& theta);

    const Mdp& mdp_;
    double tau_;
    Table pi_;
    Table log_pi_;
    Matrix system_;  // I - γ P_π
    Vector cost_pi_;
    Vector v_;
    Vector d_;
    Vector pv_;      // P v over (s,a) rows
    Table adv_;
    Table grad_;
    Eigen::PartialPivLU<Matrix> lu_;
    double objective_ = 0.0;
};

}  // namespace ldpg
