#include "ldpg/optimizer.hpp"

#include <cmath>
#include <sstream>

namespace ldpg {

void sgd_stream(const Mdp& mdp, double tau, const SoftSolution& soft, const PolicyParams& theta_init,
                const StepSchedule& schedule, const NoiseModel& model, long T, std::uint64_t seed,
                const IterateObserver& observer) {
    if (T < 1) throw DomainError("sgd needs T >= 1");
    if (!(schedule.eta > 0.0) || schedule.t0 < 0) throw DomainError("schedule needs eta > 0 and t0 >= 0");
    if (theta_init.n_states() != mdp.n_states || theta_init.n_actions() != mdp.n_actions) {
        throw DomainError("theta_init shape does not match the MDP");
    }
    const Index d = mdp.dim();
    Rng rng = make_rng(seed);
    ObjectiveEvaluator eval(mdp, tau);
    Table theta = theta_init.theta;
    Vector z(d);
    const std::span<double> z_span(z.data(), std::size_t(d));

    for (long t = 1; t <= T + 1; ++t) {
        if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kDivergenceLimit) {
            std::ostringstream msg;
            msg << "iterate diverged at t=" << t;
            throw DivergenceError(msg.str(), t);
        }
        eval.evaluate(theta);
        const double gap = eval.objective() - soft.objective;
        if (t == T + 1) {
            observer({t, theta, gap, eval.min_prob(), nullptr});
            break;
        }
        if (model.theta_independent()) {
            model.sample_into(rng, z_span);
        } else {
            PolicyParams p{theta};
            z = sample_noise(model, mdp, tau, p, rng);
        }
        observer({t, theta, gap, eval.min_prob(), &z});
        const double eta_t = schedule.step(t);
        const Eigen::Map<const Table> zt(z.data(), mdp.n_states, mdp.n_actions);
        theta.noalias() -= eta_t * (eval.gradient() - zt);
    }
}

Trajectory sgd_run(const Mdp& mdp, double tau, const SoftSolution& soft, const PolicyParams& theta_init,
                   const StepSchedule& schedule, const NoiseModel& model, long T, std::uint64_t seed) {
    Trajectory traj;
    traj.schedule = schedule;
    traj.seed = seed;
    traj.thetas.reserve(std::size_t(T + 1));
    traj.gaps.reserve(std::size_t(T + 1));
    traj.noises.reserve(std::size_t(T));
    sgd_stream(mdp, tau, soft, theta_init, schedule, model, T, seed, [&](const IterateView& it) {
        traj.thetas.push_back(PolicyParams{it.theta});
        traj.gaps.push_back(it.gap);
        traj.min_probs.push_back(it.min_prob);
        if (it.noise) traj.noises.push_back(*it.noise);
    });
    return traj;
}

}  // namespace ldpg
