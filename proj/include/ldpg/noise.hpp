#pragma once

#include <optional>
#include <span>
#include <string>

#include "ldpg/mdp.hpp"
#include "ldpg/types.hpp"

namespace ldpg {

enum class NoiseKind { GaussianIsotropic, GaussianDiagonal, TruncatedGaussian, TrajectoryEstimator };

std::string to_string(NoiseKind kind);

/**
 * Law of the gradient error Z = g(θ) − g̃(θ).
 *
 * The Gaussian and truncated kinds do not depend on θ, so their LMGF is
 * available in closed form and L_Λ = 0. The trajectory estimator is the
 * empirical error of trajectory_gradient_estimate(); its σ is a bound
 * derived from the truncated-horizon cost range, not an exact constant.
 */
class NoiseModel {
public:
    static NoiseModel gaussian_isotropic(double sigma);
    static NoiseModel gaussian_diagonal(Vector sigmas);
    /// Coordinates are independent N(0, σ²) conditioned on |z_j| ≤ radius.
    static NoiseModel truncated_gaussian(double sigma, double radius);
    static NoiseModel trajectory_estimator(int n_rollouts, int horizon);

    NoiseKind kind() const { return kind_; }
    double sigma() const { return sigma_; }
    const Vector& sigmas() const { return sigmas_; }
    double radius() const { return radius_; }
    int n_rollouts() const { return n_rollouts_; }
    int horizon() const { return horizon_; }

    bool theta_independent() const { return kind_ != NoiseKind::TrajectoryEstimator; }
    double lmgf_lipschitz() const { return theta_independent() ? 0.0 : lipschitz_; }
    void set_lmgf_lipschitz(double l) { lipschitz_ = l; }

    /// σ with Λ(λ) ≤ σ²‖λ‖²/2. For the trajectory kind this needs the MDP.
    double sub_gaussian_sigma() const;
    double sub_gaussian_sigma(const Mdp& mdp, double tau) const;

    bool has_lmgf() const { return theta_independent(); }
    /// Λ(λ) = log E exp⟨λ, Z⟩ (θ-independent kinds only).
    double lmgf(const Vector& lambda) const;
    Vector lmgf_gradient(const Vector& lambda) const;

    /// Covariance for the Gaussian kinds.
    std::optional<Matrix> gaussian_covariance(Index dim) const;

    /// Draws Z for a θ-independent kind into `out`.
    void sample_into(Rng& rng, std::span<double> out) const;

    std::string describe() const;

private:
    NoiseKind kind_ = NoiseKind::GaussianIsotropic;
    double sigma_ = 0.0;
    Vector sigmas_;
    double radius_ = 0.0;
    int n_rollouts_ = 0;
    int horizon_ = 0;
    double lipschitz_ = 0.0;
};

/// Monte Carlo gradient estimate with per-coordinate standard errors.
struct GradientEstimate {
    Table mean;
    Table std_error;
};

/**
 * REINFORCE estimate of the regularized policy gradient from n_rollouts
 * rollouts of length `horizon`, s_0 ~ ρ. Truncation bias is at most
 * γ^horizon · max|c̃| / (1 − γ) per coordinate.
 */
GradientEstimate trajectory_gradient_estimate(const Mdp& mdp, const PolicyParams& theta, double tau,
                                              int n_rollouts, int horizon, Rng& rng);

/// Z drawn from the model's conditional law at θ.
Vector sample_noise(const NoiseModel& model, const Mdp& mdp, double tau, const PolicyParams& theta, Rng& rng);

}  // namespace ldpg
