#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ldpg/mdp.hpp"
#include "ldpg/noise.hpp"
#include "ldpg/parametrization.hpp"
#include "ldpg/quadrature.hpp"
#include "ldpg/theory.hpp"

namespace ldpg {

/// Eigendecomposition of H(θ*) with the numerical null space marked.
struct SpectralData {
    Matrix q;                     // eigenvectors as columns, eigenvalues descending
    Vector rho_eigs;
    std::vector<bool> null_mask;  // rho_eigs(i) < null_tol
    double null_tol = 1e-8;

    Index dim() const { return rho_eigs.size(); }
    Index retained_dim() const;
    Matrix retained_basis() const;  // d × r
    Vector retained_eigs() const;
    /// Orthogonal projection onto the span of the retained eigenvectors.
    Vector project(const Vector& x) const;
};

SpectralData spectral(const Matrix& hessian_at_opt, double null_tol = 1e-8);

enum class PsiMode { Leading, WithResidual };

std::string to_string(PsiMode mode);
PsiMode parse_psi_mode(const std::string& name);

/**
 * Ingredients of r(λ) = 4 L_Λ η² ‖λ‖² δ̄(λ) + 2η ‖λ‖ h̄(δ̄(λ)),
 * δ̄(λ) = c_delta · γ̄ ‖λ‖ K / L₁.
 */
struct ResidualParams {
    double l_lambda = 0.0;
    double gamma_bar = 0.0;
    double k_const = 0.0;
    double l1 = 1.0;
    double c_delta = 1.0;
    std::function<double(double)> h_bar;

    double delta_bar(double lambda_norm) const { return c_delta * gamma_bar * lambda_norm * k_const / l1; }
};

/// max over n_samples points on the δ-sphere around θ* of ‖g(θ) − H(θ*)(θ − θ*)‖.
double linearization_residual(const Mdp& mdp, double tau, const SoftSolution& soft, const Matrix& hess, double delta,
                              int n_samples, std::uint64_t seed);

/**
 * h̄ tabulated on a geometric δ grid (factor √2 from 1e-8 to 1e8) with a
 * running maximum so it is nondecreasing; values between grid points take
 * the next grid point up.
 */
ResidualParams make_residual_params(const Mdp& mdp, double tau, const SoftSolution& soft, const Matrix& hess,
                                    const TheoryConstants& constants, double l_lambda, double c_delta,
                                    int sphere_samples, std::uint64_t seed);

struct PsiOptions {
    PsiMode mode = PsiMode::Leading;
    int quad_points = 64;
    double quad_tol = 1e-15;
};

struct RateResult {
    double value = 0.0;
    Vector maximizer;  // λ* attaining the supremum, equals ∇I(θ′)
    bool converged = true;
    bool infinite = false;
    std::string method;
};

/**
 * Limiting LMGF Ψ and its Legendre-Fenchel conjugate I on the retained
 * subspace. Every argument is first projected onto the span of the
 * non-null eigenvectors, so I(θ′) means I(Pθ′).
 *
 * For the Gaussian kinds in leading mode Ψ(λ) = ½ λᵀ A_Ψ λ with
 *   A_Ψ = η² Q_r [ S̃_ij / (ηρ_i + ηρ_j − 1) ] Q_rᵀ,  S̃ = Q_rᵀ Σ Q_r,
 * and I(θ′) = ½ θ′ᵀ A_Ψ⁺ θ′. Other noise kinds integrate Λ numerically;
 * the trajectory estimator has no closed-form Λ and uses the
 * sub-Gaussian envelope σ²‖v‖²/2 in its place.
 */
class RateFunction {
public:
    RateFunction(SpectralData spec, NoiseModel noise, double eta, PsiOptions opts = {},
                 std::optional<ResidualParams> residual = {}, double sigma_envelope = 0.0);

    const SpectralData& spectral() const { return spec_; }
    const NoiseModel& noise() const { return noise_; }
    double eta() const { return eta_; }
    const PsiOptions& options() const { return opts_; }
    Index dim() const { return spec_.dim(); }
    bool uses_lmgf_envelope() const { return !noise_.has_lmgf(); }

    bool is_quadratic() const { return a_psi_.has_value(); }
    const Matrix& a_psi() const;
    const Matrix& a_psi_pinv() const;

    double psi(const Vector& lambda) const;
    /// Integral term by graded Gauss-Legendre quadrature, regardless of mode.
    double psi_quadrature(const Vector& lambda) const;
    std::optional<double> psi_closed_form(const Vector& lambda) const;
    Vector psi_gradient(const Vector& lambda) const;
    /// r(λ); zero in leading mode.
    double residual(const Vector& lambda) const;

    double rate(const Vector& theta_prime) const { return rate_detail(theta_prime).value; }
    RateResult rate_detail(const Vector& theta_prime) const;
    /// Conjugate by gradient ascent even when the closed form exists.
    RateResult rate_numeric(const Vector& theta_prime) const;
    /// ∇I(θ′), the maximizing λ.
    Vector rate_gradient(const Vector& theta_prime) const;

    /// Quadratic form whose conjugate is used for start points and for
    /// region searches when Ψ is not exactly quadratic.
    const Matrix& surrogate_pinv() const { return surrogate_pinv_; }

private:
    double lmgf(const Vector& v) const;
    Vector lmgf_gradient(const Vector& v) const;
    double psi_integral(const Vector& lambda_proj) const;
    Vector psi_integral_gradient(const Vector& lambda_proj) const;

    SpectralData spec_;
    NoiseModel noise_;
    double eta_;
    PsiOptions opts_;
    std::optional<ResidualParams> residual_;
    double sigma_envelope_;
    Matrix basis_;   // d × r
    Vector eigs_;    // retained eigenvalues
    GaussLegendre rule_;
    std::optional<Matrix> a_psi_;
    std::optional<Matrix> a_psi_pinv_;
    Matrix surrogate_pinv_;
};

double psi(const Vector& lambda, const RateFunction& rate_fn);
double rate(const Vector& theta_prime, const RateFunction& rate_fn);

struct ContractResult {
    double value = 0.0;
    Vector preimage;
    bool feasible = true;
    double feasibility = 0.0;  // ‖f(u) − w‖_∞ at the reported preimage
    std::string method;
};

/**
 * I′(w) = inf { I(u) : f(u) = w }. Maps with an inverse take I(f⁻¹(w));
 * otherwise an augmented-Lagrangian penalty method runs 6 rounds of
 * increasing ρ from n_starts starts and requires ‖f(u) − w‖_∞ < 1e-7.
 */
ContractResult contract_rate(const RateFunction& rate_fn, const ParamMap& map, const Vector& w, int n_starts = 4,
                             std::uint64_t seed = 0);

}  // namespace ldpg
