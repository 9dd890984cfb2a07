#include "ldpg/mdp.hpp"

#include <cmath>
#include <sstream>

#include "ldpg/parametrization.hpp"

namespace ldpg {

namespace {

std::string loc(Index s, Index a = -1) {
    std::ostringstream out;
    out << "s=" << s;
    if (a >= 0) out << ",a=" << a;
    return out.str();
}

void check_policy_shape(const Mdp& mdp, const Table& probs) {
    if (probs.rows() != mdp.n_states || probs.cols() != mdp.n_actions) {
        throw DomainError("policy shape does not match the MDP");
    }
}

void check_discount(const Mdp& mdp) {
    if (!(mdp.discount >= 0.0 && mdp.discount < 1.0)) throw DomainError("discount must lie in [0, 1)");
}

}  // namespace

std::string ValidationReport::summary() const {
    if (ok()) return "ok";
    std::ostringstream out;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) out << "; ";
        out << violations[i].invariant << " at " << violations[i].location << " (" << violations[i].detail << ")";
    }
    return out.str();
}

ValidationReport validate_mdp(const Mdp& mdp) {
    ValidationReport report;
    auto fail = [&](std::string inv, std::string where, std::string detail) {
        report.violations.push_back({std::move(inv), std::move(where), std::move(detail)});
    };

    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    if (S <= 0 || A <= 0) {
        fail("dimensions", "mdp", "n_states and n_actions must be positive");
        return report;
    }
    if (mdp.transition.rows() != S * A || mdp.transition.cols() != S || mdp.cost.rows() != S ||
        mdp.cost.cols() != A || mdp.init_dist.size() != S) {
        fail("dimensions", "mdp", "array shapes do not match n_states/n_actions");
        return report;
    }

    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) {
            const auto row = mdp.transition.row(mdp.row(s, a));
            if ((row.array() < 0.0).any() || !row.allFinite()) {
                fail("transition-nonnegative", loc(s, a), "negative or non-finite probability");
            }
            const double sum = row.sum();
            if (std::abs(sum - 1.0) > 1e-12) {
                std::ostringstream d;
                d.precision(17);
                d << "row sums to " << sum;
                fail("transition-row-sum", loc(s, a), d.str());
            }
            if (!std::isfinite(mdp.cost(s, a))) fail("cost-finite", loc(s, a), "cost is not finite");
        }
    }
    if (!(mdp.discount > 0.0 && mdp.discount < 1.0)) {
        std::ostringstream d;
        d << "discount " << mdp.discount << " outside (0,1)";
        fail("discount-range", "mdp", d.str());
    }
    if ((mdp.init_dist.array() < 0.0).any() || std::abs(mdp.init_dist.sum() - 1.0) > 1e-12) {
        fail("init-dist-simplex", "rho", "initial distribution is not a probability vector");
    }
    for (Index s = 0; s < S; ++s) {
        if (!(mdp.init_dist(s) > 0.0)) fail("init-dist-positive", loc(s), "rho(s) must be > 0");
    }
    return report;
}

Mdp Mdp::checked(Mdp mdp) {
    const auto report = validate_mdp(mdp);
    if (!report.ok()) throw DomainError("invalid MDP: " + report.summary());
    return mdp;
}

PolicyValue policy_value(const Mdp& mdp, const Policy& policy, double tau) {
    check_discount(mdp);
    check_policy_shape(mdp, policy.probs);
    if (tau < 0.0) throw DomainError("tau must be nonnegative");
    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;

    Matrix system = Matrix::Identity(S, S);
    Vector stage(S);
    for (Index s = 0; s < S; ++s) {
        double c = 0.0;
        for (Index a = 0; a < A; ++a) {
            const double p = policy.probs(s, a);
            if (p == 0.0) continue;
            if (tau > 0.0 && !(p > 0.0)) throw DomainError("regularized evaluation needs a positive policy");
            c += p * (mdp.cost(s, a) + (tau > 0.0 ? tau * std::log(p) : 0.0));
            system.row(s) -= mdp.discount * p * mdp.transition.row(mdp.row(s, a));
        }
        if (tau > 0.0 && (policy.probs.row(s).array() <= 0.0).any()) {
            throw DomainError("regularized evaluation needs a positive policy at " + loc(s));
        }
        stage(s) = c;
    }

    PolicyValue out;
    out.v = system.partialPivLu().solve(stage);
    if (!out.v.allFinite()) throw NumericalError("policy evaluation produced non-finite values");
    const Vector pv = mdp.transition * out.v;
    out.q = mdp.cost + mdp.discount * Eigen::Map<const Table>(pv.data(), S, A);
    out.objective = mdp.init_dist.dot(out.v);
    return out;
}

namespace {

double soft_backup(const Mdp& mdp, double tau, const Vector& v, Vector& next, Vector& pv) {
    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    pv.noalias() = mdp.transition * v;
    double residual = 0.0;
    for (Index s = 0; s < S; ++s) {
        // v(s) = -τ log Σ_a exp(-(c + γPv)/τ), evaluated around the smallest q.
        double qmin = std::numeric_limits<double>::infinity();
        for (Index a = 0; a < A; ++a) qmin = std::min(qmin, mdp.cost(s, a) + mdp.discount * pv(mdp.row(s, a)));
        double z = 0.0;
        for (Index a = 0; a < A; ++a) {
            const double q = mdp.cost(s, a) + mdp.discount * pv(mdp.row(s, a));
            z += std::exp(-(q - qmin) / tau);
        }
        next(s) = qmin - tau * std::log(z);
        residual = std::max(residual, std::abs(next(s) - v(s)));
    }
    return residual;
}

}  // namespace

SoftSolution soft_optimal(const Mdp& mdp, double tau, double tol, long max_iter) {
    check_discount(mdp);
    if (!(tau > 0.0)) throw DomainError("soft_optimal needs tau > 0");
    if (!(tol > 0.0) || max_iter <= 0) throw DomainError("soft_optimal needs tol > 0 and max_iter > 0");

    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    Vector v = Vector::Zero(S);
    Vector next(S);
    Vector pv(S * A);
    double residual = std::numeric_limits<double>::infinity();
    long it = 0;
    while (it < max_iter) {
        residual = soft_backup(mdp, tau, v, next, pv);
        v.swap(next);
        ++it;
        if (residual < tol) break;
    }
    // Residual of the returned iterate, not of its predecessor.
    residual = soft_backup(mdp, tau, v, next, pv);
    if (!(residual < tol)) {
        std::ostringstream msg;
        msg << "soft value iteration did not reach tol " << tol << " in " << max_iter << " iterations";
        throw ConvergenceError(msg.str(), residual);
    }

    SoftSolution sol;
    sol.v_star = v;
    pv.noalias() = mdp.transition * v;
    sol.q_star = mdp.cost + mdp.discount * Eigen::Map<const Table>(pv.data(), S, A);
    sol.theta_star.theta = -sol.q_star / tau;
    sol.pi_star = softmax_policy(sol.theta_star);
    sol.objective = mdp.init_dist.dot(v);
    sol.bellman_residual = residual;
    sol.iterations = it;
    sol.stationarity = exact_gradient(mdp, sol.theta_star, tau).cwiseAbs().maxCoeff();
    return sol;
}

Vector visitation(const Mdp& mdp, const Policy& policy) {
    check_discount(mdp);
    check_policy_shape(mdp, policy.probs);
    const Index S = mdp.n_states;
    Matrix system = Matrix::Identity(S, S);
    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < mdp.n_actions; ++a) {
            system.row(s) -= mdp.discount * policy.probs(s, a) * mdp.transition.row(mdp.row(s, a));
        }
    }
    Vector x = system.transpose().partialPivLu().solve(mdp.init_dist);
    return x / x.sum();
}

Table soft_advantage(const Mdp& mdp, const PolicyParams& theta, double tau) {
    if (!(tau > 0.0)) throw DomainError("soft_advantage needs tau > 0");
    ObjectiveEvaluator eval(mdp, tau);
    eval.evaluate(theta.theta);
    return eval.advantage();
}

Table exact_gradient(const Mdp& mdp, const PolicyParams& theta, double tau) {
    if (!(tau > 0.0)) throw DomainError("exact_gradient needs tau > 0");
    ObjectiveEvaluator eval(mdp, tau);
    eval.evaluate(theta.theta);
    return eval.gradient();
}

double default_fd_step(const PolicyParams& theta) {
    return 1e-5 * std::max(1.0, theta.theta.cwiseAbs().maxCoeff());
}

Matrix hessian(const Mdp& mdp, const PolicyParams& theta, double tau, std::optional<double> fd_step) {
    if (!(tau > 0.0)) throw DomainError("hessian needs tau > 0");
    const double h = fd_step.value_or(default_fd_step(theta));
    if (!(h > 0.0)) throw DomainError("fd_step must be positive");
    const Index d = theta.dim();
    ObjectiveEvaluator eval(mdp, tau);
    Matrix H(d, d);
    Table x = theta.theta;
    double* xd = x.data();
    for (Index j = 0; j < d; ++j) {
        const double orig = xd[j];
        // Use the representable step actually taken.
        xd[j] = orig + h;
        const double hp = xd[j] - orig;
        eval.evaluate(x);
        const Vector gp = Eigen::Map<const Vector>(eval.gradient().data(), d);
        xd[j] = orig - h;
        const double hm = orig - xd[j];
        eval.evaluate(x);
        const Vector gm = Eigen::Map<const Vector>(eval.gradient().data(), d);
        xd[j] = orig;
        H.col(j) = (gp - gm) / (hp + hm);
    }
    Matrix sym = 0.5 * (H + H.transpose());
    if (!sym.allFinite()) throw NumericalError("hessian has non-finite entries");
    return sym;
}

ObjectiveEvaluator::ObjectiveEvaluator(const Mdp& mdp, double tau) : mdp_(mdp), tau_(tau) {
    check_discount(mdp);
    if (!(tau > 0.0)) throw DomainError("objective evaluator needs tau > 0");
    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    pi_.resize(S, A);
    log_pi_.resize(S, A);
    system_.resize(S, S);
    cost_pi_.resize(S);
    v_.resize(S);
    d_.resize(S);
    pv_.resize(S * A);
    adv_.resize(S, A);
    grad_.resize(S, A);
}

void ObjectiveEvaluator::build_system(const Table& theta) {
    const Index S = mdp_.n_states;
    const Index A = mdp_.n_actions;
    if (theta.rows() != S || theta.cols() != A) throw DomainError("theta shape does not match the MDP");
    system_.setIdentity();
    for (Index s = 0; s < S; ++s) {
        const double m = theta.row(s).maxCoeff();
        double z = 0.0;
        for (Index a = 0; a < A; ++a) {
            pi_(s, a) = std::exp(theta(s, a) - m);
            z += pi_(s, a);
        }
        const double log_z = std::log(z);
        double c = 0.0;
        for (Index a = 0; a < A; ++a) {
            pi_(s, a) /= z;
            log_pi_(s, a) = theta(s, a) - m - log_z;
            c += pi_(s, a) * (mdp_.cost(s, a) + tau_ * log_pi_(s, a));
            system_.row(s).noalias() -= (mdp_.discount * pi_(s, a)) * mdp_.transition.row(mdp_.row(s, a));
        }
        cost_pi_(s) = c;
    }
    lu_.compute(system_);
    v_.noalias() = lu_.solve(cost_pi_);
    objective_ = mdp_.init_dist.dot(v_);
}

double ObjectiveEvaluator::value_only(const Table& theta) {
    build_system(theta);
    return objective_;
}

void ObjectiveEvaluator::evaluate(const Table& theta) {
    build_system(theta);
    const Index S = mdp_.n_states;
    const Index A = mdp_.n_actions;
    pv_.noalias() = mdp_.transition * v_;
    d_.noalias() = lu_.transpose().solve(mdp_.init_dist);
    d_ /= d_.sum();
    const double scale = 1.0 / (1.0 - mdp_.discount);
    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) {
            const double q = mdp_.cost(s, a) + mdp_.discount * pv_(mdp_.row(s, a));
            adv_(s, a) = q + tau_ * log_pi_(s, a) - v_(s);
            grad_(s, a) = scale * d_(s) * pi_(s, a) * adv_(s, a);
        }
    }
    if (!std::isfinite(objective_) || !grad_.allFinite()) throw NumericalError("non-finite objective or gradient");
}

}  // namespace ldpg

namespace ldpg {

Table fd_gradient(const Mdp& mdp, const PolicyParams& theta, double tau, double h) {
    if (!(h > 0.0)) throw DomainError("fd_gradient needs h > 0");
    ObjectiveEvaluator eval(mdp, tau);
    Table work = theta.theta;
    Table out(theta.n_states(), theta.n_actions());
    for (Index s = 0; s < work.rows(); ++s) {
        for (Index a = 0; a < work.cols(); ++a) {
            const double x = work(s, a);
            work(s, a) = x + h;
            const double up = eval.value_only(work);
            work(s, a) = x - h;
            const double down = eval.value_only(work);
            work(s, a) = x;
            out(s, a) = (up - down) / (2.0 * h);
        }
    }
    return out;
}

}  // namespace ldpg
