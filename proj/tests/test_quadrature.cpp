#include <doctest.h>

#include <cmath>

#include "ldpg/quadrature.hpp"

using namespace ldpg;

TEST_CASE("gauss-legendre rule is exact for polynomials up to degree 2n-1") {
    for (int n : {1, 2, 5, 16, 64}) {
        const GaussLegendre r = gauss_legendre(n);
        REQUIRE(r.size() == n);
        double wsum = 0.0;
        for (double w : r.weights) wsum += w;
        CHECK(wsum == doctest::Approx(2.0).epsilon(1e-14));
        for (int deg = 0; deg <= 2 * n - 1; deg += std::max(1, n / 3)) {
            const double got = integrate([deg](double x) { return std::pow(x, deg); }, 0.0, 1.0, r);
            CHECK(got == doctest::Approx(1.0 / (deg + 1)).epsilon(1e-13));
        }
    }
}

TEST_CASE("graded panels integrate endpoint singularities to rounding") {
    const GaussLegendre r = gauss_legendre(64);
    for (double a : {-0.99, -0.9, -0.5, 0.0, 0.37, 1.3}) {
        GradedResult info;
        const double got = integrate_unit_graded([a](double x) { return std::pow(x, a) + 0.3 * std::pow(x, a + 0.7); }, r,
                                                 {}, &info);
        const double exact = 1.0 / (a + 1.0) + 0.3 / (a + 1.7);
        CHECK(got == doctest::Approx(exact).epsilon(1e-12));
        CHECK(info.converged);
    }
}

TEST_CASE("vector integrand is handled componentwise") {
    const GaussLegendre r = gauss_legendre(32);
    const Vector v = integrate_unit_graded(
        [](double x, Vector& out) {
            out(0) = 1.0;
            out(1) = std::log(x);
        },
        2, r);
    CHECK(v(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v(1) == doctest::Approx(-1.0).epsilon(1e-12));
}
