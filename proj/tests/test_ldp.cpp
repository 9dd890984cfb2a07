#include <doctest.h>

#include <cmath>

#include "ldpg/ldp.hpp"
#include "test_support.hpp"

using namespace ldpg;

namespace {

struct Fixture {
    Mdp m = test::two_by_two();
    double tau = 0.5;
    SoftSolution soft = soft_optimal(m, tau);
    Matrix h = hessian(m, soft.theta_star, tau);
    SpectralData spec = spectral(h);
};

Vector random_in(const SpectralData& spec, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Vector v(spec.dim());
    for (Index i = 0; i < v.size(); ++i) v(i) = n(rng);
    return spec.project(v);
}

}  // namespace

TEST_CASE("spectral data separates the per-state shift null space") {
    Fixture f;
    CHECK(f.spec.dim() == 4);
    CHECK(f.spec.retained_dim() == 2);
    CHECK(f.spec.rho_eigs(0) >= f.spec.rho_eigs(1));
    const Matrix b = f.spec.retained_basis();
    CHECK((b.transpose() * b - Matrix::Identity(2, 2)).norm() < 1e-12);
    Vector shift(4);
    shift << 1, 1, 0, 0;
    CHECK(f.spec.project(shift).norm() < 1e-7);
    Rng rng = make_rng(1);
    const Vector x = random_in(f.spec, rng);
    CHECK((f.spec.project(x) - x).norm() < 1e-14);
    Matrix asym = Matrix::Identity(2, 2);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS(spectral(asym), DomainError);
}

TEST_CASE("A_psi solves the stationary covariance equation") {
    Fixture f;
    Vector s(4);
    s << 0.05, 0.1, 0.02, 0.07;
    const double eta = 20.0;
    const RateFunction rf(f.spec, NoiseModel::gaussian_diagonal(s), eta);
    REQUIRE(rf.is_quadratic());
    const Matrix a = rf.a_psi();
    const Matrix p = f.spec.retained_basis() * f.spec.retained_basis().transpose();
    const Matrix hp = p * f.h * p;
    const Matrix lhs = (eta * hp - 0.5 * p) * a + a * (eta * hp - 0.5 * p);
    const Matrix rhs = eta * eta * p * Matrix(s.array().square().matrix().asDiagonal()) * p;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9 * rhs.cwiseAbs().maxCoeff());
    CHECK((a - a.transpose()).norm() < 1e-14);
    CHECK((rf.a_psi_pinv() * a * rf.a_psi_pinv() - rf.a_psi_pinv()).norm() < 1e-8 * rf.a_psi_pinv().norm());
}

TEST_CASE("psi closed form agrees with quadrature and ignores null directions") {
    Fixture f;
    const RateFunction rf(f.spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    CHECK(rf.psi(Vector::Zero(4)) == 0.0);
    Rng rng = make_rng(3);
    for (int k = 0; k < 20; ++k) {
        const Vector l = random_in(f.spec, rng, 10.0);
        const double cf = *rf.psi_closed_form(l);
        CHECK(rf.psi_quadrature(l) == doctest::Approx(cf).epsilon(1e-10));
        Vector with_null = l;
        with_null(0) += 3.0;
        with_null(1) += 3.0;
        CHECK(rf.psi(with_null) == doctest::Approx(cf).epsilon(1e-6));
        // gradient by central differences
        const Vector g = rf.psi_gradient(l);
        Vector e = Vector::Zero(4);
        e(2) = 1e-5;
        CHECK(g(2) == doctest::Approx((rf.psi(l + e) - rf.psi(l - e)) / 2e-5).epsilon(1e-6));
    }
}

TEST_CASE("integrability failure names the offending eigenvalue") {
    Fixture f;
    try {
        RateFunction rf(f.spec, NoiseModel::gaussian_isotropic(0.05), 0.4);
        FAIL("expected a domain error");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("i=") != std::string::npos);
    }
}

TEST_CASE("rate function is the quadratic conjugate and obeys Fenchel-Young") {
    Fixture f;
    const RateFunction rf(f.spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    CHECK(rf.rate(Vector::Zero(4)) == 0.0);
    Rng rng = make_rng(5);
    for (int k = 0; k < 10; ++k) {
        const Vector x = random_in(f.spec, rng, 0.1);
        const double closed = 0.5 * x.dot(rf.a_psi_pinv() * x);
        CHECK(rf.rate(x) == doctest::Approx(closed).epsilon(1e-12));
        const RateResult num = rf.rate_numeric(x);
        CHECK(num.value == doctest::Approx(closed).epsilon(1e-7));
        const Vector l = random_in(f.spec, rng, 5.0);
        CHECK(x.dot(l) <= rf.psi(l) + rf.rate(x) + 1e-12);
        // the maximizer is where Fenchel-Young is tight
        const Vector lstar = rf.rate_gradient(x);
        CHECK(x.dot(lstar) == doctest::Approx(rf.psi(lstar) + rf.rate(x)).epsilon(1e-9));
    }
}

TEST_CASE("bounded noise has a smaller psi and a larger rate than its gaussian envelope") {
    Fixture f;
    const RateFunction gauss(f.spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    const RateFunction trunc(f.spec, NoiseModel::truncated_gaussian(0.05, 0.08), 20.0);
    CHECK_FALSE(trunc.is_quadratic());
    Rng rng = make_rng(8);
    for (int k = 0; k < 5; ++k) {
        const Vector l = random_in(f.spec, rng, 20.0);
        CHECK(trunc.psi(l) <= gauss.psi(l) * (1 + 1e-10));
        CHECK(trunc.psi(l) > 0.0);
        const Vector x = random_in(f.spec, rng, 0.05);
        CHECK(trunc.rate(x) >= gauss.rate(x) * (1 - 1e-6));
    }
}

TEST_CASE("trajectory noise uses the sub-gaussian envelope") {
    Fixture f;
    const RateFunction env(f.spec, NoiseModel::trajectory_estimator(8, 30), 20.0, {}, {}, 0.05);
    const RateFunction gauss(f.spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    CHECK(env.uses_lmgf_envelope());
    Rng rng = make_rng(9);
    const Vector l = random_in(f.spec, rng, 4.0);
    CHECK(env.psi(l) == doctest::Approx(gauss.psi(l)).epsilon(1e-10));
}

TEST_CASE("contraction reproduces the analytic pushforwards") {
    Fixture f;
    const RateFunction rf(f.spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    Rng rng = make_rng(10);
    for (int k = 0; k < 5; ++k) {
        const Vector u = random_in(f.spec, rng, 0.1);
        CHECK(contract_rate(rf, identity_map(), u).value == doctest::Approx(rf.rate(u)).epsilon(1e-12));
        CHECK(contract_rate(rf, scale_map(-3.0), -3.0 * u).value == doctest::Approx(rf.rate(u)).epsilon(1e-12));
        const Vector w = (u / 2.0).array().exp().matrix();
        const ContractResult viaInverse = contract_rate(rf, softmax_to_escort_map(2.0), w);
        const ContractResult viaPenalty = contract_rate(rf, componentwise_exp_map(2.0), w, 4, 1);
        CHECK(viaInverse.method == "inverse");
        CHECK(viaPenalty.feasible);
        CHECK(viaPenalty.feasibility < 1e-7);
        CHECK(std::abs(viaPenalty.value - viaInverse.value) < 1e-6);
    }
    Vector neg = Vector::Constant(4, -1.0);
    CHECK_THROWS_AS(contract_rate(rf, softmax_to_escort_map(2.0), neg), DomainError);
}
