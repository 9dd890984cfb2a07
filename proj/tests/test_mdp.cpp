#include <doctest.h>

#include <cmath>

#include "ldpg/mdp.hpp"
#include "ldpg/parametrization.hpp"
#include "test_support.hpp"

using namespace ldpg;

namespace {

/// Fixed-policy evaluation by repeated Bellman backups, independent of the linear solve.
Vector evaluate_by_iteration(const Mdp& m, const Table& pi, double tau) {
    Vector v = Vector::Zero(m.n_states);
    for (int it = 0; it < 5000; ++it) {
        Vector next(m.n_states);
        for (Index s = 0; s < m.n_states; ++s) {
            double acc = 0.0;
            for (Index a = 0; a < m.n_actions; ++a) {
                const double q = m.cost(s, a) + tau * std::log(pi(s, a)) + m.discount * m.transition.row(m.row(s, a)).dot(v);
                acc += pi(s, a) * q;
            }
            next(s) = acc;
        }
        v = next;
    }
    return v;
}

PolicyParams random_theta(Index S, Index A, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    PolicyParams p;
    p.theta.resize(S, A);
    for (Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = n(rng);
    return p;
}

}  // namespace

TEST_CASE("bundled MDP validates and bad inputs are reported") {
    const Mdp m = test::two_by_two();
    CHECK(validate_mdp(m).ok());

    Mdp bad = m;
    bad.transition(0, 0) = 0.5;  // row no longer sums to one
    CHECK_FALSE(validate_mdp(bad).ok());
    CHECK_THROWS_AS(Mdp::checked(bad), DomainError);

    bad = m;
    bad.discount = 1.0;
    CHECK_FALSE(validate_mdp(bad).ok());

    bad = m;
    bad.init_dist << 1.2, -0.2;
    CHECK_FALSE(validate_mdp(bad).ok());
}

TEST_CASE("policy value matches iterated Bellman evaluation") {
    Rng rng = make_rng(3);
    for (int k = 0; k < 5; ++k) {
        const Mdp m = random_mdp(3, 2, 0.85, 100 + k);
        const Policy pi = softmax_policy(random_theta(3, 2, rng));
        for (double tau : {0.0, 0.3}) {
            const PolicyValue pv = policy_value(m, pi, tau);
            const Vector oracle = evaluate_by_iteration(m, pi.probs, tau);
            CHECK((pv.v - oracle).cwiseAbs().maxCoeff() < 1e-10);
            CHECK(pv.objective == doctest::Approx(m.init_dist.dot(oracle)).epsilon(1e-12));
        }
    }
}

TEST_CASE("soft optimum satisfies the soft Bellman equation and is stationary") {
    for (int k = 0; k < 5; ++k) {
        const Mdp m = random_mdp(4, 3, 0.9, 7 + k);
        const double tau = 0.2 + 0.2 * k;
        const SoftSolution sol = soft_optimal(m, tau);
        // v(s) = −τ log Σ_a exp(−Q(s,a)/τ), recomputed here from Q*
        for (Index s = 0; s < m.n_states; ++s) {
            double z = 0.0;
            for (Index a = 0; a < m.n_actions; ++a) {
                const double q = m.cost(s, a) + m.discount * m.transition.row(m.row(s, a)).dot(sol.v_star);
                z += std::exp(-q / tau);
            }
            CHECK(std::abs(sol.v_star(s) + tau * std::log(z)) < 1e-10);
        }
        CHECK(sol.bellman_residual < 1e-10);
        CHECK(sol.stationarity < 1e-8);
        CHECK(soft_advantage(m, sol.theta_star, tau).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(sol.pi_star.probs.minCoeff() > 0.0);
        // no policy does better
        Rng rng = make_rng(k);
        for (int j = 0; j < 20; ++j) {
            CHECK(policy_value(m, softmax_policy(random_theta(4, 3, rng, 2.0)), tau).objective >= sol.objective - 1e-12);
        }
    }
}

TEST_CASE("exact gradient agrees with central differences") {
    Rng rng = make_rng(11);
    for (int k = 0; k < 10; ++k) {
        const Mdp m = random_mdp(2 + k % 3, 2 + k % 2, 0.8 + 0.015 * k, 50 + k);
        const double tau = 0.05 + 0.1 * k;
        const PolicyParams th = random_theta(m.n_states, m.n_actions, rng);
        const Table g = exact_gradient(m, th, tau);
        const Table fd = fd_gradient(m, th, tau);
        CHECK((g - fd).cwiseAbs().maxCoeff() / g.cwiseAbs().maxCoeff() < 1e-6);
        // per-state shift invariance makes every gradient row sum to zero
        CHECK(g.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("objective evaluator agrees with the free functions") {
    const Mdp m = random_mdp(3, 3, 0.9, 5);
    Rng rng = make_rng(5);
    const PolicyParams th = random_theta(3, 3, rng);
    ObjectiveEvaluator eval(m, 0.4);
    eval.evaluate(th.theta);
    CHECK(eval.objective() == doctest::Approx(policy_value(m, softmax_policy(th), 0.4).objective).epsilon(1e-13));
    CHECK((eval.gradient() - exact_gradient(m, th, 0.4)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(eval.value_only(th.theta) == doctest::Approx(eval.objective()).epsilon(1e-14));
}

TEST_CASE("visitation is a positive fixed point of the discounted flow") {
    const Mdp m = random_mdp(4, 2, 0.9, 9);
    Rng rng = make_rng(9);
    const Policy pi = softmax_policy(random_theta(4, 2, rng));
    const Vector d = visitation(m, pi);
    CHECK(d.minCoeff() > 0.0);
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-13));
    Table p_pi = Table::Zero(4, 4);
    for (Index s = 0; s < 4; ++s) {
        for (Index a = 0; a < 2; ++a) p_pi.row(s) += pi.probs(s, a) * m.transition.row(m.row(s, a));
    }
    const Vector rhs = (1.0 - m.discount) * m.init_dist + m.discount * p_pi.transpose() * d;
    CHECK((d - rhs).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("hessian is symmetric, matches gradient differences and has the shift null space") {
    const Mdp m = test::two_by_two();
    const SoftSolution sol = soft_optimal(m, 0.5);
    const Matrix h = hessian(m, sol.theta_star, 0.5);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
    // adding a constant to one state's row does not move the objective
    Vector shift = Vector::Zero(4);
    shift << 1.0, 1.0, 0.0, 0.0;
    CHECK((h * shift).norm() < 1e-7);

    Rng rng = make_rng(1);
    const PolicyParams th = random_theta(2, 2, rng);
    const Matrix ht = hessian(m, th, 0.5);
    Vector dir = Vector::Random(4);
    const double eps = 1e-6;
    PolicyParams up = PolicyParams::from_flat(th.flat() + eps * dir, 2, 2);
    PolicyParams dn = PolicyParams::from_flat(th.flat() - eps * dir, 2, 2);
    const Vector hv = (exact_gradient(m, up, 0.5) - exact_gradient(m, dn, 0.5)).reshaped<Eigen::RowMajor>() / (2 * eps);
    CHECK((ht * dir - hv).norm() < 1e-6);
}

TEST_CASE("MDP documents round-trip through JSON") {
    const Mdp m = random_mdp(3, 2, 0.95, 77);
    const Mdp back = mdp_from_json(Json::parse(mdp_to_json(m).dump()));
    CHECK(back.transition == m.transition);
    CHECK(back.cost == m.cost);
    CHECK(back.init_dist == m.init_dist);
    CHECK(back.discount == m.discount);
    CHECK_THROWS_AS(mdp_from_json(Json::parse(R"({"n_states": 2})")), ConfigError);
}
