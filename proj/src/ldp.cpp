#include "ldpg/ldp.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ldpg/minimize.hpp"

namespace ldpg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUnboundedNorm = 1e8;
// A certified I above this is reported as infinite.
constexpr double kRateCeiling = 1e4;

}  // namespace

Index SpectralData::retained_dim() const {
    Index r = 0;
    for (bool is_null : null_mask) r += is_null ? 0 : 1;
    return r;
}

Matrix SpectralData::retained_basis() const {
    Matrix b(dim(), retained_dim());
    Index k = 0;
    for (Index i = 0; i < dim(); ++i) {
        if (!null_mask[std::size_t(i)]) b.col(k++) = q.col(i);
    }
    return b;
}

Vector SpectralData::retained_eigs() const {
    Vector e(retained_dim());
    Index k = 0;
    for (Index i = 0; i < dim(); ++i) {
        if (!null_mask[std::size_t(i)]) e(k++) = rho_eigs(i);
    }
    return e;
}

Vector SpectralData::project(const Vector& x) const {
    const Matrix b = retained_basis();
    return b * (b.transpose() * x);
}

SpectralData spectral(const Matrix& h, double null_tol) {
    if (h.rows() != h.cols() || h.rows() == 0) throw DomainError("spectral() needs a nonempty square matrix");
    const double asym = (h - h.transpose()).norm();
    if (asym > 1e-10 * std::max(1.0, h.norm())) throw DomainError("spectral() needs a symmetric matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
    const Index n = h.rows();
    SpectralData s;
    s.null_tol = null_tol;
    s.q.resize(n, n);
    s.rho_eigs.resize(n);
    s.null_mask.resize(std::size_t(n));
    for (Index i = 0; i < n; ++i) {
        s.rho_eigs(i) = es.eigenvalues()(n - 1 - i);
        s.q.col(i) = es.eigenvectors().col(n - 1 - i);
        s.null_mask[std::size_t(i)] = s.rho_eigs(i) < null_tol;
    }
    return s;
}

std::string to_string(PsiMode mode) { return mode == PsiMode::Leading ? "leading" : "with-residual"; }

PsiMode parse_psi_mode(const std::string& name) {
    if (name == "leading") return PsiMode::Leading;
    if (name == "with-residual") return PsiMode::WithResidual;
    throw ConfigError("unknown psi mode '" + name + "' (expected leading or with-residual)");
}

double linearization_residual(const Mdp& mdp, double tau, const SoftSolution& soft, const Matrix& hess, double delta,
                              int n_samples, std::uint64_t seed) {
    if (delta <= 0.0) return 0.0;
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ObjectiveEvaluator eval(mdp, tau);
    const Index d = mdp.dim();
    const Vector center = soft.theta_star.flat();
    Vector u(d);
    Vector x(d);
    double best = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        for (Index i = 0; i < d; ++i) u(i) = normal(rng);
        u *= delta / u.norm();
        x = center + u;
        eval.evaluate(Eigen::Map<const Table>(x.data(), mdp.n_states, mdp.n_actions));
        const Eigen::Map<const Vector> g(eval.gradient().data(), d);
        best = std::max(best, (g - hess * u).norm());
    }
    return best;
}

ResidualParams make_residual_params(const Mdp& mdp, double tau, const SoftSolution& soft, const Matrix& hess,
                                    const TheoryConstants& constants, double l_lambda, double c_delta,
                                    int sphere_samples, std::uint64_t seed) {
    constexpr double kFirst = 1e-8;
    constexpr int kGrid = 107;
    const double factor = std::sqrt(2.0);
    auto table = std::make_shared<std::vector<double>>(std::size_t(kGrid));
    double running = 0.0;
    double delta = kFirst;
    for (int k = 0; k < kGrid; ++k, delta *= factor) {
        running = std::max(running, linearization_residual(mdp, tau, soft, hess, delta, sphere_samples, seed + k));
        (*table)[std::size_t(k)] = running;
    }
    ResidualParams p;
    p.l_lambda = l_lambda;
    p.gamma_bar = constants.gamma_bar();
    p.k_const = constants.k_const;
    p.l1 = constants.l1;
    p.c_delta = c_delta;
    p.h_bar = [table, factor](double d) {
        if (d <= 0.0) return 0.0;
        const double pos = std::log(d / kFirst) / std::log(factor);
        const long k = std::max(0L, long(std::ceil(pos - 1e-12)));
        if (k < kGrid) return (*table)[std::size_t(k)];
        const double last = kFirst * std::pow(factor, kGrid - 1);
        return table->back() * d / last;
    };
    return p;
}

RateFunction::RateFunction(SpectralData spec, NoiseModel noise, double eta, PsiOptions opts,
                           std::optional<ResidualParams> residual, double sigma_envelope)
    : spec_(std::move(spec)),
      noise_(std::move(noise)),
      eta_(eta),
      opts_(opts),
      residual_(std::move(residual)),
      sigma_envelope_(sigma_envelope),
      rule_(gauss_legendre(opts.quad_points)) {
    if (!(eta_ > 0.0)) throw DomainError("rate function needs eta > 0");
    if (opts_.mode == PsiMode::WithResidual && !residual_) {
        throw DomainError("with-residual mode needs residual parameters");
    }
    basis_ = spec_.retained_basis();
    eigs_ = spec_.retained_eigs();
    for (Index i = 0; i < spec_.dim(); ++i) {
        if (spec_.null_mask[std::size_t(i)]) continue;
        if (!(2.0 * eta_ * spec_.rho_eigs(i) > 1.0)) {
            std::ostringstream msg;
            msg << "integrability fails for eigenvalue i=" << i << ": 2*eta*rho_i = " << 2.0 * eta_ * spec_.rho_eigs(i)
                << " <= 1";
            throw DomainError(msg.str());
        }
    }
    if (sigma_envelope_ <= 0.0) {
        if (!noise_.has_lmgf()) throw DomainError("noise without a closed-form LMGF needs a sigma envelope");
        sigma_envelope_ = noise_.sub_gaussian_sigma();
    }

    const Index r = eigs_.size();
    const Vector c = eta_ * eigs_.array() - 0.5;  // (ηρ_i + ηρ_j − 1) = c_i + c_j
    if (sigma_envelope_ > 0.0) {
        const Vector inv = (2.0 * eta_ * eigs_.array() - 1.0) / (sigma_envelope_ * sigma_envelope_ * eta_ * eta_);
        surrogate_pinv_ = basis_ * inv.asDiagonal() * basis_.transpose();
    } else {
        surrogate_pinv_ = Matrix::Zero(dim(), dim());
    }

    const auto cov = noise_.gaussian_covariance(dim());
    if (cov && opts_.mode == PsiMode::Leading) {
        const Matrix st = basis_.transpose() * (*cov) * basis_;
        Matrix ar(r, r);
        for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < r; ++j) ar(i, j) = eta_ * eta_ * st(i, j) / (c(i) + c(j));
        }
        a_psi_ = basis_ * ar * basis_.transpose();
        Eigen::SelfAdjointEigenSolver<Matrix> es(ar);
        const double top = r > 0 ? es.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
        Vector inv = Vector::Zero(r);
        for (Index i = 0; i < r; ++i) {
            if (es.eigenvalues()(i) > 1e-14 * top) inv(i) = 1.0 / es.eigenvalues()(i);
        }
        a_psi_pinv_ = basis_ * es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose() * basis_.transpose();
    }
}

const Matrix& RateFunction::a_psi() const {
    if (!a_psi_) throw DomainError("psi is not quadratic for this noise model and mode");
    return *a_psi_;
}

const Matrix& RateFunction::a_psi_pinv() const {
    if (!a_psi_pinv_) throw DomainError("psi is not quadratic for this noise model and mode");
    return *a_psi_pinv_;
}

double RateFunction::lmgf(const Vector& v) const {
    if (noise_.has_lmgf()) return noise_.lmgf(v);
    return 0.5 * sigma_envelope_ * sigma_envelope_ * v.squaredNorm();
}

Vector RateFunction::lmgf_gradient(const Vector& v) const {
    if (noise_.has_lmgf()) return noise_.lmgf_gradient(v);
    return sigma_envelope_ * sigma_envelope_ * v;
}

double RateFunction::psi_integral(const Vector& lambda_proj) const {
    const Vector y = basis_.transpose() * lambda_proj;
    if (y.squaredNorm() == 0.0) return 0.0;
    const Vector expo = eta_ * eigs_.array() - 1.0;
    Vector scaled(y.size());
    auto integrand = [&](double x) {
        scaled = (expo.array() * std::log(x)).exp() * y.array();
        return lmgf(eta_ * (basis_ * scaled));
    };
    GradedOptions go;
    go.rel_tol = opts_.quad_tol;
    return integrate_unit_graded(integrand, rule_, go);
}

Vector RateFunction::psi_integral_gradient(const Vector& lambda_proj) const {
    const Vector y = basis_.transpose() * lambda_proj;
    const Index r = y.size();
    if (y.squaredNorm() == 0.0) return Vector::Zero(dim());
    const Vector expo = eta_ * eigs_.array() - 1.0;
    Vector powers(r);
    auto integrand = [&](double x, Vector& out) {
        powers = (expo.array() * std::log(x)).exp();
        const Vector v = eta_ * (basis_ * (powers.array() * y.array()).matrix());
        out = eta_ * (powers.array() * (basis_.transpose() * lmgf_gradient(v)).array()).matrix();
    };
    GradedOptions go;
    go.rel_tol = opts_.quad_tol;
    return basis_ * integrate_unit_graded(integrand, r, rule_, go);
}

double RateFunction::residual(const Vector& lambda) const {
    if (opts_.mode == PsiMode::Leading) return 0.0;
    const double n = spec_.project(lambda).norm();
    if (n == 0.0) return 0.0;
    const ResidualParams& p = *residual_;
    const double db = p.delta_bar(n);
    return 4.0 * p.l_lambda * eta_ * eta_ * n * n * db + 2.0 * eta_ * n * p.h_bar(db);
}

std::optional<double> RateFunction::psi_closed_form(const Vector& lambda) const {
    if (!a_psi_) return std::nullopt;
    const Vector lp = spec_.project(lambda);
    return 0.5 * lp.dot(*a_psi_ * lp);
}

double RateFunction::psi(const Vector& lambda) const {
    if (lambda.size() != dim()) throw DomainError("lambda has the wrong dimension");
    if (auto closed = psi_closed_form(lambda)) return *closed;
    const Vector lp = spec_.project(lambda);
    return psi_integral(lp) + residual(lp);
}

double RateFunction::psi_quadrature(const Vector& lambda) const {
    if (lambda.size() != dim()) throw DomainError("lambda has the wrong dimension");
    return psi_integral(spec_.project(lambda));
}

Vector RateFunction::psi_gradient(const Vector& lambda) const {
    const Vector lp = spec_.project(lambda);
    if (a_psi_) return *a_psi_ * lp;
    Vector g = psi_integral_gradient(lp);
    if (opts_.mode == PsiMode::WithResidual) {
        const double h = 1e-6 * std::max(1.0, lp.norm());
        for (Index k = 0; k < basis_.cols(); ++k) {
            const Vector e = basis_.col(k);
            g += (residual(lp + h * e) - residual(lp - h * e)) / (2.0 * h) * e;
        }
    }
    return g;
}

RateResult RateFunction::rate_detail(const Vector& theta_prime) const {
    if (theta_prime.size() != dim()) throw DomainError("theta' has the wrong dimension");
    const Vector xp = spec_.project(theta_prime);
    RateResult res;
    if (xp.squaredNorm() == 0.0) {
        res.value = 0.0;
        res.maximizer = Vector::Zero(dim());
        res.method = "origin";
        return res;
    }
    if (a_psi_pinv_) {
        // Without noise the iterate concentrates on θ*, so I = +∞ off the origin.
        if (a_psi_->norm() == 0.0) {
            res.value = kInf;
            res.infinite = true;
            res.maximizer = Vector::Zero(dim());
            res.method = "closed-form";
            return res;
        }
        res.maximizer = *a_psi_pinv_ * xp;
        res.value = 0.5 * xp.dot(res.maximizer);
        res.method = "closed-form";
        return res;
    }
    return rate_numeric(theta_prime);
}

RateResult RateFunction::rate_numeric(const Vector& theta_prime) const {
    const Vector xp = spec_.project(theta_prime);
    const Vector c = basis_.transpose() * xp;
    const Index r = c.size();
    RateResult res;
    res.method = "conjugate-ascent";
    if (r == 0 || c.squaredNorm() == 0.0) {
        res.maximizer = Vector::Zero(dim());
        return res;
    }
    // Minimize Ψ(By) − ⟨c, y⟩ over the retained coordinates y.
    SmoothObjective neg = [&](const Vector& y, Vector* grad) {
        const Vector lambda = basis_ * y;
        if (grad) *grad = basis_.transpose() * psi_gradient(lambda) - c;
        return psi(lambda) - c.dot(y);
    };
    std::vector<Vector> starts;
    starts.push_back(Vector::Zero(r));
    starts.push_back(basis_.transpose() * (surrogate_pinv_ * xp));
    {
        Rng rng = make_rng(0x5eedULL);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector y(r);
        for (Index i = 0; i < r; ++i) y(i) = normal(rng);
        starts.push_back(y * (starts[1].norm() + 1.0) / std::sqrt(double(r)));
    }
    // Near the edge of a bounded noise support the dual optimum drifts off
    // slowly; the capped runs still return a lower bound on I.
    MinimizeOptions mo;
    mo.grad_tol = 1e-9;
    mo.max_iter = 500;
    mo.x_limit = kUnboundedNorm;
    mo.f_floor = -kRateCeiling;
    MinimizeOptions polish_opts = mo;
    polish_opts.max_iter = 100;
    bool have = false;
    MinimizeResult best;
    for (const Vector& y0 : starts) {
        MinimizeResult m = minimize_gradient(neg, y0, mo);
        if (!m.converged && !m.unbounded) {
            MinimizeResult polish = minimize_bfgs(neg, m.x, polish_opts);
            if (polish.value <= m.value) m = polish;
        }
        if (m.unbounded) {
            res.value = kInf;
            res.infinite = true;
            res.converged = true;
            res.maximizer = basis_ * m.x;
            return res;
        }
        const bool better = !have || (m.converged && !best.converged) ||
                            (m.converged == best.converged && m.value < best.value);
        if (better) {
            best = m;
            have = true;
        }
        if (best.converged) break;  // concave dual: one converged start suffices
    }
    res.value = std::max(0.0, -best.value);
    res.maximizer = basis_ * best.x;
    res.converged = best.converged;
    return res;
}

Vector RateFunction::rate_gradient(const Vector& theta_prime) const { return rate_detail(theta_prime).maximizer; }

double psi(const Vector& lambda, const RateFunction& rate_fn) { return rate_fn.psi(lambda); }

double rate(const Vector& theta_prime, const RateFunction& rate_fn) { return rate_fn.rate(theta_prime); }

namespace {

// Gauss-Newton with backtracking for f(u) = w; used as a start point only.
Vector solve_preimage(const ParamMap& map, const Vector& w, const Vector& u0) {
    Vector u = u0;
    Vector c = map.apply(u) - w;
    for (int it = 0; it < 100 && c.lpNorm<Eigen::Infinity>() > 1e-13; ++it) {
        const Matrix j = map.jacobian_at(u);
        const Vector du = -j.completeOrthogonalDecomposition().solve(c);
        double step = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, step *= 0.5) {
            const Vector trial = u + step * du;
            const Vector ct = map.apply(trial) - w;
            if (ct.allFinite() && ct.norm() < c.norm()) {
                u = trial;
                c = ct;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    return u;
}

}  // namespace

ContractResult contract_rate(const RateFunction& rate_fn, const ParamMap& map, const Vector& w, int n_starts,
                             std::uint64_t seed) {
    if (map.in_range && !map.in_range(w)) {
        throw DomainError("w is outside the range of map '" + map.name + "' (" + map.domain_note + ")");
    }
    ContractResult res;
    if (map.invertible()) {
        res.preimage = (*map.inverse)(w);
        res.value = rate_fn.rate(res.preimage);
        res.feasibility = (map.apply(res.preimage) - w).lpNorm<Eigen::Infinity>();
        res.method = "inverse";
        return res;
    }
    if (n_starts < 1) throw DomainError("contract_rate needs n_starts >= 1");

    const Index d = rate_fn.dim();
    std::vector<Vector> starts;
    starts.push_back(solve_preimage(map, w, Vector::Zero(d)));
    starts.push_back(Vector::Zero(d));
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    while (int(starts.size()) < n_starts) {
        Vector u(d);
        for (Index i = 0; i < d; ++i) u(i) = normal(rng);
        starts.push_back(solve_preimage(map, w, u));
    }
    starts.resize(std::size_t(n_starts));

    constexpr int kRounds = 6;
    constexpr double kFeasible = 1e-7;
    bool have = false;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        Vector u = starts[s];
        Vector nu = Vector::Zero(w.size());
        double rho = 10.0;
        for (int round = 0; round < kRounds; ++round, rho *= 10.0) {
            SmoothObjective lagr = [&](const Vector& x, Vector* grad) {
                const Vector c = map.apply(x) - w;
                if (!c.allFinite()) return kInf;
                const RateResult rr = rate_fn.rate_detail(x);
                if (rr.infinite) return kInf;
                if (grad) *grad = rr.maximizer + map.jacobian_at(x).transpose() * (nu + rho * c);
                return rr.value + nu.dot(c) + 0.5 * rho * c.squaredNorm();
            };
            MinimizeOptions mo;
            mo.grad_tol = 1e-11;
            mo.max_iter = 5000;
            u = minimize_bfgs(lagr, u, mo).x;
            nu += rho * (map.apply(u) - w);
        }
        const double feas = (map.apply(u) - w).lpNorm<Eigen::Infinity>();
        const double value = rate_fn.rate(u);
        const bool ok = feas < kFeasible;
        const bool better = !have || (ok && !res.feasible) || (ok == res.feasible && (ok ? value < res.value
                                                                                             : feas < res.feasibility));
        if (better) {
            res.value = value;
            res.preimage = u;
            res.feasibility = feas;
            res.feasible = ok;
            have = true;
        }
    }
    res.method = "augmented-lagrangian";
    return res;
}

}  // namespace ldpg
