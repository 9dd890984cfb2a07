#include <doctest.h>

#include <cmath>

#include "ldpg/theory.hpp"
#include "test_support.hpp"

using namespace ldpg;

namespace {

Lemma5Inputs base_inputs() {
    Lemma5Inputs in;
    in.l1 = 3.0;
    in.mu = 0.2;
    in.sigma = 0.05;
    in.c_universal = 2.0;
    in.eta = auto_eta(in.mu, in.sigma, in.c_universal, 4, 0.5);
    in.epsilon = 0.1;
    in.delta_init = 0.5;
    in.T = 3000;
    in.gap1 = 0.12;
    in.dim = 4;
    return in;
}

}  // namespace

TEST_CASE("power iteration finds the largest absolute eigenvalue") {
    Rng rng = make_rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
        Matrix a(6, 6);
        for (Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
        a = (a + a.transpose()).eval();
        const double ref = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().cwiseAbs().maxCoeff();
        CHECK(spectral_norm_power(a, 1e-12) == doctest::Approx(ref).epsilon(1e-8));
    }
    Matrix pm = Matrix::Zero(2, 2);
    pm(0, 0) = 3.0;
    pm(1, 1) = -3.0;
    CHECK(spectral_norm_power(pm) == doctest::Approx(3.0));
}

TEST_CASE("smoothness estimate covers the hessian norm at the optimum") {
    const Mdp m = test::two_by_two();
    const SoftSolution sol = soft_optimal(m, 0.5);
    const L1Estimate est = estimate_l1(m, 0.5, sol, 30, 1.0, 4, 1.5);
    const double at_opt = Eigen::SelfAdjointEigenSolver<Matrix>(hessian(m, sol.theta_star, 0.5)).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(est.max_sampled >= at_opt * (1 - 1e-6));
    CHECK(est.value == doctest::Approx(1.5 * est.max_sampled));
    const L1Estimate over = estimate_l1(m, 0.5, sol, 30, 1.0, 4, 1.5, 7.0);
    CHECK(over.overridden);
    CHECK(over.value == 7.0);
}

TEST_CASE("PL constant follows min probability squared") {
    const Mdp m = test::two_by_two();
    const SoftSolution sol = soft_optimal(m, 0.5);
    const double f = pl_factor(m, 0.5, sol);
    CHECK(f > 0.0);
    const double mp = sol.pi_star.probs.minCoeff();
    CHECK(pl_constant(m, sol.theta_star, 0.5, sol) == doctest::Approx(f * mp * mp).epsilon(1e-14));
}

TEST_CASE("smoothness, gradient domination and PL hold on sampled points") {
    for (int k = 0; k < 3; ++k) {
        const Mdp m = random_mdp(3, 2, 0.9, 40 + k);
        const double tau = 0.3 + 0.3 * k;
        const SoftSolution sol = soft_optimal(m, tau);
        const L1Estimate l1 = estimate_l1(m, tau, sol, 100, 1.0, 5, 1.5);
        const InequalityReport rep = check_inequalities(m, tau, sol, l1.value, 300, 1.0, 6 + k);
        CHECK(rep.samples == 300);
        CHECK(rep.ok());
        CHECK(rep.max_smoothness_excess <= 0.0);
    }
}

TEST_CASE("tail-bound constants satisfy every inequality when re-evaluated") {
    const Lemma5Inputs in = base_inputs();
    const TheoryConstants k = lemma5_constants(in);
    CHECK(k.c_m == doctest::Approx(std::pow(in.sigma * 2.0 * 2.0, 2)));
    CHECK(k.mu * k.eta - 1.0 > in.sigma * in.sigma / k.c_m);
    const double slack = k.mu * k.eta - 1.0 - k.b0 * k.c0 * k.eta * k.eta;
    CHECK(slack > 0.0);
    const double t0 = double(k.t0);
    CHECK(t0 >= k.eta * k.eta * k.l1 / slack - 1.0);
    CHECK(t0 >= k.l1 * k.eta - 2.0);
    CHECK(t0 >= std::sqrt(3.0 * in.sigma * in.sigma / (2.0 * in.epsilon * in.delta_init)) - 1.0);
    CHECK(k.eta / (t0 + 2.0) <= 1.0 / k.l1);
    CHECK(k.k_const >= 1.0 / k.b0);
    CHECK(k.k_const >= (t0 + 1.0) * in.gap1);
    for (long t = 1; t <= in.T; t += 37) {
        const double s = double(t) + t0;
        const double eta_t = k.eta / (s + 1.0);
        const double a = (s + 1.0) / s * (1.0 - k.mu * eta_t + k.mu * eta_t * eta_t * k.l1);
        const double b = k.eta / std::sqrt(s);
        const double c = k.eta * k.eta * k.l1 / (s + 1.0);
        const double coef = a + k.b0 * k.c0 * b * b;
        CHECK(coef < 1.0);
        CHECK(k.k_const >= 2.0 * c * k.c_m / (1.0 - coef) * (1.0 - 1e-6));
    }
    CHECK(k.binding_constraints.size() == 2);
}

TEST_CASE("too small a step is infeasible and names the inequality") {
    Lemma5Inputs in = base_inputs();
    in.eta = 1.0 / in.mu;  // μη − 1 = 0
    try {
        lemma5_constants(in);
        FAIL("expected infeasibility");
    } catch (const InfeasibleError& e) {
        CHECK(e.constraint() == "(mu*eta - 1) > sigma^2/C_M");
    }
    in = base_inputs();
    in.delta_init = 0.0;
    CHECK_THROWS_AS(lemma5_constants(in), InfeasibleError);
}

TEST_CASE("a larger universal constant never shrinks K") {
    Lemma5Inputs in = base_inputs();
    const double eta = in.eta;
    double prev = 0.0;
    for (double c : {2.0, 4.0, 8.0}) {
        in.c_universal = c;
        in.eta = eta;  // same step size
        const TheoryConstants k = lemma5_constants(in);
        CHECK(k.k_const >= prev);
        prev = k.k_const;
    }
}

TEST_CASE("tail bound is clamped at one and rejects bad arguments") {
    const TheoryConstants k = lemma5_constants(base_inputs());
    CHECK(exp_bound(k, 1, 0.0) == 1.0);
    const long far = long(10.0 * k.k_const / 0.01);
    CHECK(exp_bound(k, far, 0.01) < 1e-3);
    CHECK(exp_bound(k, far, 0.01) == doctest::Approx(std::exp(exp_bound_exponent(k, far, 0.01))));
    CHECK_THROWS_AS(exp_bound(k, 0, 0.1), DomainError);
    CHECK_THROWS_AS(exp_bound(k, 5, -0.1), DomainError);
}

TEST_CASE("pathwise recursions hold along noisy runs and catch tampering") {
    const Mdp m = test::two_by_two();
    const double tau = 0.5;
    const SoftSolution sol = soft_optimal(m, tau);
    TheoryConstants k;
    k.l1 = estimate_l1(m, tau, sol, 50, 1.0, 1, 1.5).value;
    PolicyParams init = sol.theta_star;
    init.theta(0, 1) += 0.5;
    const StepSchedule sched{20.0, long(std::ceil(k.l1 * 20.0))};
    Trajectory tr = sgd_run(m, tau, sol, init, sched, NoiseModel::gaussian_isotropic(0.05), 1500, 4);
    const RecursionReport ok = check_recursion(tr, k, m, tau, sol);
    CHECK(ok.ok());
    CHECK(ok.steps_checked == 1500);

    tr.gaps[700] += 0.5;
    const RecursionReport bad = check_recursion(tr, k, m, tau, sol);
    CHECK_FALSE(bad.ok());
    REQUIRE(bad.first_violation);
    CHECK(bad.first_violation->t == 701);
}
