#include <doctest.h>

#include "ldpg/optimizer.hpp"
#include "test_support.hpp"

using namespace ldpg;

namespace {

struct Setup {
    Mdp m = test::two_by_two();
    double tau = 0.5;
    SoftSolution soft = soft_optimal(m, 0.5);
    PolicyParams init = [&] {
        PolicyParams p = soft.theta_star;
        p.theta(0, 0) += 0.8;
        p.theta(1, 1) -= 0.4;
        return p;
    }();
};

}  // namespace

TEST_CASE("runs are reproducible from the seed and differ across seeds") {
    Setup s;
    const NoiseModel nm = NoiseModel::gaussian_isotropic(0.1);
    const StepSchedule sched{5.0, 10};
    const Trajectory a = sgd_run(s.m, s.tau, s.soft, s.init, sched, nm, 300, 12);
    const Trajectory b = sgd_run(s.m, s.tau, s.soft, s.init, sched, nm, 300, 12);
    const Trajectory c = sgd_run(s.m, s.tau, s.soft, s.init, sched, nm, 300, 13);
    REQUIRE(a.thetas.size() == 301);
    CHECK(a.noises.size() == 300);
    CHECK(a.gaps.size() == 301);
    CHECK(a.thetas.back().theta == b.thetas.back().theta);
    CHECK(a.thetas.back().theta != c.thetas.back().theta);
}

TEST_CASE("the update is a noisy gradient step") {
    Setup s;
    const NoiseModel nm = NoiseModel::gaussian_isotropic(0.1);
    const StepSchedule sched{5.0, 10};
    const Trajectory tr = sgd_run(s.m, s.tau, s.soft, s.init, sched, nm, 5, 3);
    for (long t = 1; t <= 5; ++t) {
        const auto i = std::size_t(t - 1);
        const Vector g = exact_gradient(s.m, tr.thetas[i], s.tau).reshaped<Eigen::RowMajor>();
        const Vector expect = tr.thetas[i].flat() - sched.step(t) * (g - tr.noises[i]);
        CHECK((tr.thetas[i + 1].flat() - expect).norm() < 1e-14);
    }
}

TEST_CASE("noise-free descent decreases the gap monotonically") {
    Setup s;
    const Trajectory tr = sgd_run(s.m, s.tau, s.soft, s.init, {2.0, 2}, NoiseModel::gaussian_isotropic(0.0), 2000, 0);
    for (std::size_t i = 1; i < tr.gaps.size(); ++i) CHECK(tr.gaps[i] <= tr.gaps[i - 1] + 1e-15);
    CHECK(tr.gaps.back() < 1e-3 * tr.gaps.front());
    CHECK(tr.gaps.front() > 0.0);
}

TEST_CASE("streaming observer sees every iterate once") {
    Setup s;
    long calls = 0;
    long last = 0;
    long with_noise = 0;
    sgd_stream(s.m, s.tau, s.soft, s.init, {5.0, 10}, NoiseModel::gaussian_isotropic(0.1), 50, 1,
               [&](const IterateView& it) {
                   ++calls;
                   CHECK(it.t == last + 1);
                   last = it.t;
                   if (it.noise) ++with_noise;
                   CHECK(it.min_prob > 0.0);
               });
    CHECK(calls == 51);
    CHECK(with_noise == 50);
}

TEST_CASE("exploding iterates raise a divergence error with the step") {
    Setup s;
    try {
        sgd_run(s.m, s.tau, s.soft, s.init, {1e12, 0}, NoiseModel::gaussian_isotropic(1.0), 100, 0);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() >= 1);
        CHECK(e.step() <= 100);
    }
}
