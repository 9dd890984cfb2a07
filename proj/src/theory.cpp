#include "ldpg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ldpg/parametrization.hpp"

namespace ldpg {

double spectral_norm_power(const Matrix& sym, double tol, int max_iter) {
    const Index n = sym.rows();
    if (n == 0) return 0.0;
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = 1.0 + 0.37 * double(i) / double(n);
    v.normalize();
    double est = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vector w = sym * v;
        const double norm = w.norm();
        if (norm == 0.0) return 0.0;
        // Two applications per round so a ±λ pair does not make the iterate oscillate.
        Vector w2 = sym * (w / norm);
        const double next = std::sqrt(norm * w2.norm());
        v = w2.normalized();
        if (std::abs(next - est) <= tol * next) return next;
        est = next;
    }
    return est;
}

L1Estimate estimate_l1(const HessianFn& hessian_at, const Vector& center, int n_samples, double radius,
                       std::uint64_t seed, double safety_factor) {
    if (n_samples < 1) throw DomainError("estimate_l1 needs n_samples >= 1");
    if (!(radius >= 0.0) || !(safety_factor > 0.0)) throw DomainError("estimate_l1 needs radius >= 0 and safety > 0");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index d = center.size();

    double best = spectral_norm_power(hessian_at(center));
    for (int k = 0; k < n_samples; ++k) {
        Vector dir(d);
        for (Index i = 0; i < d; ++i) dir(i) = normal(rng);
        const double r = radius * std::pow(unif(rng), 1.0 / double(d));
        const Vector x = center + r * dir.normalized();
        best = std::max(best, spectral_norm_power(hessian_at(x)));
    }
    L1Estimate est;
    est.max_sampled = best;
    est.value = safety_factor * best;
    est.n_samples = n_samples;
    est.radius = radius;
    est.safety_factor = safety_factor;
    return est;
}

L1Estimate estimate_l1(const Mdp& mdp, double tau, const SoftSolution& soft, int n_samples, double radius,
                       std::uint64_t seed, double safety_factor, std::optional<double> override_value) {
    if (override_value) {
        if (!(*override_value > 0.0)) throw DomainError("L1 override must be positive");
        L1Estimate est;
        est.value = *override_value;
        est.overridden = true;
        est.radius = radius;
        est.safety_factor = safety_factor;
        return est;
    }
    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    auto hess = [&](const Vector& x) { return hessian(mdp, PolicyParams::from_flat(x, S, A), tau); };
    return estimate_l1(hess, soft.theta_star.flat(), n_samples, radius, seed, safety_factor);
}

double pl_factor(const Mdp& mdp, double tau, const SoftSolution& soft) {
    const Vector d_star = visitation(mdp, soft.pi_star);
    const double ratio = (d_star.array() / mdp.init_dist.array()).maxCoeff();
    return 2.0 * tau / double(mdp.n_states) * mdp.init_dist.minCoeff() / ratio;
}

double pl_constant(const Mdp& mdp, const PolicyParams& theta, double tau, const SoftSolution& soft) {
    if (!(tau > 0.0)) throw DomainError("pl_constant needs tau > 0");
    const double pmin = softmax_policy(theta).probs.minCoeff();
    return pl_factor(mdp, tau, soft) * pmin * pmin;
}

double TheoryConstants::gamma_bar() const { return std::sqrt(3.0 + l1 / mu); }

double auto_eta(double mu, double sigma, double c_universal, Index dim, double margin) {
    if (!(mu > 0.0)) throw DomainError("auto_eta needs mu > 0");
    const double c_m = std::pow(sigma * std::sqrt(double(dim)) * c_universal, 2);
    const double ratio = sigma > 0.0 ? sigma * sigma / c_m : 0.0;
    return (1.0 + margin) * (1.0 + ratio) / mu;
}

TheoryConstants lemma5_constants(const Lemma5Inputs& in) {
    auto require = [](bool ok, const std::string& constraint) {
        if (!ok) throw InfeasibleError("infeasible constants: " + constraint + " violated", constraint);
    };
    require(in.l1 > 0.0, "L1 > 0");
    require(in.mu > 0.0, "mu > 0");
    require(in.sigma > 0.0, "sigma > 0");
    require(in.c_universal > 0.0, "C > 0");
    require(in.eta > 0.0, "eta > 0");
    require(in.epsilon > 0.0 && in.epsilon < 1.0, "epsilon in (0,1)");
    require(in.delta_init > 0.0, "Delta > 0");
    require(in.T >= 1, "T >= 1");
    require(in.dim >= 1, "dim >= 1");
    require(in.gap1 >= -1e-10, "gap1 >= 0");
    require(in.mu <= in.l1, "mu <= L1");

    TheoryConstants k;
    k.l1 = in.l1;
    k.mu = in.mu;
    k.sigma = in.sigma;
    k.c_universal = in.c_universal;
    k.eta = in.eta;
    k.epsilon = in.epsilon;
    k.delta_init = in.delta_init;
    k.gap1 = std::max(0.0, in.gap1);
    k.T = in.T;
    k.dim = in.dim;
    k.c_m = std::pow(in.sigma * std::sqrt(double(in.dim)) * in.c_universal, 2);
    k.b0 = 1.0 / (2.0 * in.eta * in.eta * in.l1 * k.c_m);
    k.c0 = 2.0 * in.l1 * in.sigma * in.sigma;

    const double excess = in.mu * in.eta - 1.0;
    const double noise_ratio = in.sigma * in.sigma / k.c_m;
    require(excess > noise_ratio, "(mu*eta - 1) > sigma^2/C_M");
    const double slack = excess - k.b0 * k.c0 * in.eta * in.eta;
    require(slack > 0.0, "(mu*eta - 1) > B0*C0*eta^2");

    struct Bound {
        const char* name;
        double value;
    };
    const Bound t0_bounds[] = {
        {"t0 >= eta^2 L1 / ((mu eta - 1) - B0 C0 eta^2) - 1", in.eta * in.eta * in.l1 / slack - 1.0},
        {"t0 >= L1 eta - 2", in.l1 * in.eta - 2.0},
        {"t0 >= sqrt(3 sigma^2 / (2 epsilon Delta)) - 1",
         std::sqrt(3.0 * in.sigma * in.sigma / (2.0 * in.epsilon * in.delta_init)) - 1.0},
        // Needed for a_t + B0 C0 b_t^2 < 1 when mu > 1; implied by the first bound otherwise.
        {"t0 >= mu eta^2 L1 / ((mu eta - 1) - B0 C0 eta^2) - 1", in.mu * in.eta * in.eta * in.l1 / slack - 1.0},
    };
    const Bound* t0_max = &t0_bounds[0];
    for (const auto& b : t0_bounds) {
        if (b.value > t0_max->value) t0_max = &b;
    }
    const double t0_real = std::max(0.0, std::ceil(t0_max->value));
    require(t0_real < 9e15, "t0 representable");
    k.t0 = long(t0_real);
    k.binding_constraints.push_back(t0_max->value > 0.0 ? t0_max->name : "t0 >= 0");

    k.a.resize(std::size_t(in.T));
    k.b.resize(std::size_t(in.T));
    k.c.resize(std::size_t(in.T));
    double k_third = 0.0;
    const double bc = k.b0 * k.c0;
    for (long t = 1; t <= in.T; ++t) {
        const double s = double(t + k.t0);
        const double eta_t = in.eta / (s + 1.0);
        const double a_t = (s + 1.0) / s * (1.0 - in.mu * eta_t + in.mu * eta_t * eta_t * in.l1);
        const double b_t = in.eta / std::sqrt(s);
        const double c_t = in.eta * in.eta * in.l1 / (s + 1.0);
        // 1 − (a_t + B0 C0 b_t²) in the cancellation-free form.
        const double gap = (slack - in.mu * in.eta * in.eta * in.l1 / (s + 1.0)) / s;
        require(gap > 0.0, "a_t + B0 C0 b_t^2 < 1");
        require(a_t >= 0.0 && a_t + bc * b_t * b_t < 1.0 + 1e-12, "a_t + B0 C0 b_t^2 in [0,1)");
        k.a[std::size_t(t - 1)] = a_t;
        k.b[std::size_t(t - 1)] = b_t;
        k.c[std::size_t(t - 1)] = c_t;
        k_third = std::max(k_third, 2.0 * c_t * k.c_m / gap);
    }

    const Bound k_terms[] = {
        {"K >= 1/B0", 1.0 / k.b0},
        {"K >= (t0+1)(V(theta_1) - V*)", double(k.t0 + 1) * k.gap1},
        {"K >= max_t 2 c_t C_M / (1 - (a_t + B0 C0 b_t^2))", k_third},
    };
    const Bound* k_max = &k_terms[0];
    for (const auto& b : k_terms) {
        if (b.value > k_max->value) k_max = &b;
    }
    k.k_const = k_max->value;
    k.binding_constraints.push_back(k_max->name);
    return k;
}

double exp_bound_exponent(const TheoryConstants& k, long t, double delta) {
    return 1.0 - double(t + k.t0 + 1) * delta / k.k_const;
}

double exp_bound(const TheoryConstants& k, long t, double delta) {
    if (t < 1 || delta < 0.0) throw DomainError("exp_bound needs t >= 1 and delta >= 0");
    return std::min(1.0, std::exp(exp_bound_exponent(k, t, delta)));
}

RecursionReport check_recursion(const Trajectory& traj, const TheoryConstants& constants, const Mdp& mdp,
                                double tau, const SoftSolution& soft) {
    RecursionReport report;
    const long T = traj.steps();
    if (long(traj.thetas.size()) != T + 1 || long(traj.gaps.size()) != T + 1) {
        throw DomainError("trajectory records are inconsistent");
    }
    const double factor = pl_factor(mdp, tau, soft);
    const double L = constants.l1;
    const Vector theta_star = soft.theta_star.flat();
    const double gap_tol = 1e-12 * (1.0 + std::abs(soft.objective));
    ObjectiveEvaluator eval(mdp, tau);

    double mu_run = std::numeric_limits<double>::infinity();
    for (long t = 1; t <= T; ++t) {
        const auto i = std::size_t(t - 1);
        eval.evaluate(traj.thetas[i].theta);
        const double mu_t = factor * eval.min_prob() * eval.min_prob();
        mu_run = std::min(mu_run, mu_t);
        const double eta_t = traj.schedule.step(t);
        const Vector& z = traj.noises[i];
        const Eigen::Map<const Vector> g(eval.gradient().data(), mdp.dim());

        const double coef = 1.0 - mu_run * eta_t + mu_run * eta_t * eta_t * L;
        const double gap_rhs = coef * traj.gaps[i] + eta_t * g.dot(z) + eta_t * eta_t * L * z.squaredNorm();
        const double gap_lhs = traj.gaps[i + 1];

        const double dist = (traj.thetas[i].flat() - theta_star).norm();
        const double dist_next = (traj.thetas[i + 1].flat() - theta_star).norm();
        const double gamma_t = std::sqrt(1.0 + eta_t * L + eta_t * L * L / mu_t + eta_t * eta_t * L * L);
        const double dist_rhs = gamma_t * dist + eta_t * z.norm();

        ++report.steps_checked;
        if (gap_lhs > gap_rhs + gap_tol) {
            ++report.gap_violations;
            if (!report.first_violation) report.first_violation = RecursionViolation{t + 1, "gap", gap_lhs, gap_rhs};
        }
        if (dist_next > dist_rhs + 1e-12 * (1.0 + dist)) {
            ++report.distance_violations;
            if (!report.first_violation) {
                report.first_violation = RecursionViolation{t + 1, "distance", dist_next, dist_rhs};
            }
        }
    }
    return report;
}

}  // namespace ldpg

namespace ldpg {

InequalityReport check_inequalities(const Mdp& mdp, double tau, const SoftSolution& soft, double l1, int n_samples,
                                    double radius, std::uint64_t seed) {
    if (n_samples < 1 || !(radius >= 0.0) || !(l1 > 0.0)) throw DomainError("check_inequalities needs n >= 1, radius >= 0, L1 > 0");
    const Index d = mdp.dim();
    const Vector center = soft.theta_star.flat();
    const double factor = pl_factor(mdp, tau, soft);
    const double v_star = soft.objective;
    const double tol = 1e-10;
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto draw = [&] {
        Vector dir(d);
        for (Index i = 0; i < d; ++i) dir(i) = normal(rng);
        return Vector(center + radius * std::pow(unif(rng), 1.0 / double(d)) * dir.normalized());
    };

    ObjectiveEvaluator eval(mdp, tau);
    InequalityReport rep;
    for (int k = 0; k < n_samples; ++k) {
        const Vector x = draw();
        const Vector y = draw();
        const PolicyParams px = PolicyParams::from_flat(x, mdp.n_states, mdp.n_actions);
        eval.evaluate(px.theta);
        const double vx = eval.objective();
        const Vector g = Eigen::Map<const Vector>(eval.gradient().data(), d);
        const double mu = factor * eval.min_prob() * eval.min_prob();
        const double gap = std::max(vx - v_star, 0.0);
        const double g2 = g.squaredNorm();
        const double vy = eval.value_only(PolicyParams::from_flat(y, mdp.n_states, mdp.n_actions).theta);

        const double smooth_lhs = vy;
        const double smooth_rhs = vx + g.dot(y - x) + 0.5 * l1 * (y - x).squaredNorm();
        const double scale = 1.0 + std::abs(vx) + std::abs(vy);
        if (smooth_lhs > smooth_rhs + tol * scale) ++rep.smoothness_violations;
        rep.max_smoothness_excess = std::max(rep.max_smoothness_excess, smooth_lhs - smooth_rhs);
        if (g2 > 2.0 * l1 * gap + tol * scale) ++rep.gradient_violations;
        if (gap > 0.0) rep.worst_gradient = std::max(rep.worst_gradient, g2 / (2.0 * l1 * gap));
        if (g2 + tol * scale * 1e-2 < mu * gap) ++rep.pl_violations;
        if (g2 > 0.0) rep.worst_pl = std::max(rep.worst_pl, mu * gap / g2);
        ++rep.samples;
    }
    return rep;
}

}  // namespace ldpg
