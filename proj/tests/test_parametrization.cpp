#include <doctest.h>

#include <cmath>

#include "ldpg/parametrization.hpp"

using namespace ldpg;

TEST_CASE("softmax rows are distributions and ignore per-state shifts") {
    PolicyParams th;
    th.theta.resize(3, 4);
    th.theta << 1, 2, 3, 4, -700, 0, 700, 1, 0.1, 0.1, 0.1, 0.1;
    const Policy pi = softmax_policy(th);
    CHECK((pi.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK(pi.probs.allFinite());
    CHECK(pi.probs(2, 0) == doctest::Approx(0.25));

    PolicyParams shifted = th;
    shifted.theta.row(0).array() += 37.0;
    CHECK((softmax_policy(shifted).probs - pi.probs).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("escort policy normalizes powers and rejects an all-zero row") {
    Table w(1, 3);
    w << 1.0, -2.0, 3.0;
    const Policy pi = escort_policy(w, 2.0);
    CHECK(pi.probs(0, 1) == doctest::Approx(4.0 / 14.0));
    Table zero = Table::Zero(1, 2);
    CHECK_THROWS_AS(escort_policy(zero, 2.0), DomainError);
}

TEST_CASE("escort map reproduces the softmax policy") {
    PolicyParams th;
    th.theta.resize(2, 3);
    th.theta << 0.3, -1.0, 2.0, 0.0, 0.5, -0.5;
    const ParamMap f = softmax_to_escort_map(2.0);
    const Vector w = f.apply(th.flat());
    const Table wt = Eigen::Map<const Table>(w.data(), 2, 3);
    CHECK((escort_policy(wt, 2.0).probs - softmax_policy(th).probs).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE(f.invertible());
    CHECK(((*f.inverse)(w) - th.flat()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(f.in_range(w));
    CHECK_FALSE(f.in_range(-w));
}

TEST_CASE("map registry parses built-ins and rejects unknown specs") {
    const Vector u = Vector::LinSpaced(4, -1.0, 2.0);
    CHECK(parse_param_map("identity").apply(u) == u);
    CHECK((parse_param_map("scale:2.5").apply(u) - 2.5 * u).norm() == 0.0);
    const ParamMap ce = parse_param_map("componentwise-exp:3");
    CHECK_FALSE(ce.invertible());
    CHECK((ce.apply(u) - (u / 3.0).array().exp().matrix()).norm() < 1e-15);
    CHECK_THROWS_AS(parse_param_map("rotate:1"), ConfigError);
    CHECK_THROWS_AS(parse_param_map("scale:abc"), ConfigError);
    CHECK_THROWS_AS(scale_map(0.0), DomainError);

    ParamMapRegistry reg;
    reg.register_map("double", [](const std::string&) { return scale_map(2.0); });
    CHECK(reg.contains("double"));
    CHECK((reg.make("double").apply(u) - 2.0 * u).norm() == 0.0);
}

TEST_CASE("composition chains maps and inverses") {
    const ParamMap m = compose(softmax_to_escort_map(2.0), scale_map(3.0));
    const Vector u = Vector::LinSpaced(3, -0.5, 0.5);
    CHECK((m.apply(u) - (1.5 * u).array().exp().matrix()).norm() < 1e-14);
    REQUIRE(m.invertible());
    CHECK(((*m.inverse)(m.apply(u)) - u).norm() < 1e-14);
    const Matrix j = m.jacobian_at(u);
    CHECK((j - Matrix((1.5 * (1.5 * u).array().exp()).matrix().asDiagonal())).cwiseAbs().maxCoeff() < 1e-7);
}
