#include "ldpg/noise.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "ldpg/parametrization.hpp"

namespace ldpg {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log Φ(x), accurate far into the lower tail.
double log_ndtr(double x) {
    if (x > -20.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
    // Asymptotic expansion of the Mills ratio.
    const double x2 = x * x;
    double series = 1.0;
    double term = 1.0;
    for (int k = 1; k <= 6; ++k) {
        term *= -(2.0 * k - 1.0) / x2;
        series += term;
    }
    return -0.5 * x2 - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

double log_phi(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

/// log(Φ(b) − Φ(a)) for a < b.
double log_ndtr_diff(double a, double b) {
    if (a > 0.0) {
        // Φ(b) − Φ(a) = Φ(−a) − Φ(−b)
        return log_ndtr_diff(-b, -a);
    }
    const double lb = log_ndtr(b);
    const double la = log_ndtr(a);
    return lb + std::log1p(-std::exp(la - lb));
}

struct TruncatedCoord {
    double value;
    double slope;
};

TruncatedCoord truncated_lmgf_coord(double lambda, double sigma, double radius) {
    const double k = radius / sigma;
    const double b = k - lambda * sigma;
    const double a = -k - lambda * sigma;
    const double log_mass = log_ndtr_diff(a, b);
    const double log_norm = log_ndtr_diff(-k, k);
    const double value = 0.5 * lambda * lambda * sigma * sigma + log_mass - log_norm;
    const double ratio = std::exp(log_phi(b) - log_mass) - std::exp(log_phi(a) - log_mass);
    return {value, lambda * sigma * sigma - sigma * ratio};
}

}  // namespace

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::GaussianIsotropic: return "gaussian-isotropic";
        case NoiseKind::GaussianDiagonal: return "gaussian-diagonal";
        case NoiseKind::TruncatedGaussian: return "truncated-gaussian";
        case NoiseKind::TrajectoryEstimator: return "trajectory-estimator";
    }
    return "unknown";
}

NoiseModel NoiseModel::gaussian_isotropic(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be finite and >= 0");
    NoiseModel m;
    m.kind_ = NoiseKind::GaussianIsotropic;
    m.sigma_ = sigma;
    return m;
}

NoiseModel NoiseModel::gaussian_diagonal(Vector sigmas) {
    if (sigmas.size() == 0 || (sigmas.array() < 0.0).any() || !sigmas.allFinite()) {
        throw DomainError("diagonal sigmas must be finite and >= 0");
    }
    NoiseModel m;
    m.kind_ = NoiseKind::GaussianDiagonal;
    m.sigma_ = sigmas.maxCoeff();
    m.sigmas_ = std::move(sigmas);
    return m;
}

NoiseModel NoiseModel::truncated_gaussian(double sigma, double radius) {
    if (!(sigma > 0.0) || !(radius > 0.0)) throw DomainError("truncated gaussian needs sigma > 0 and radius > 0");
    NoiseModel m;
    m.kind_ = NoiseKind::TruncatedGaussian;
    m.sigma_ = sigma;
    m.radius_ = radius;
    return m;
}

NoiseModel NoiseModel::trajectory_estimator(int n_rollouts, int horizon) {
    if (n_rollouts < 1 || horizon < 1) throw DomainError("trajectory estimator needs n_rollouts >= 1 and horizon >= 1");
    NoiseModel m;
    m.kind_ = NoiseKind::TrajectoryEstimator;
    m.n_rollouts_ = n_rollouts;
    m.horizon_ = horizon;
    return m;
}

double NoiseModel::sub_gaussian_sigma() const {
    if (kind_ == NoiseKind::TrajectoryEstimator) {
        throw DomainError("trajectory-estimator sigma depends on the MDP; use sub_gaussian_sigma(mdp, tau)");
    }
    return sigma_;
}

double NoiseModel::sub_gaussian_sigma(const Mdp& mdp, double tau) const {
    if (kind_ != NoiseKind::TrajectoryEstimator) return sigma_;
    // Hoeffding bound for the mean of n bounded per-rollout estimates. The
    // log-policy term is bounded at a uniform policy; far from uniform this
    // is only indicative.
    const double cost_range = mdp.cost.cwiseAbs().maxCoeff() + tau * std::log(double(mdp.n_actions));
    const double one_minus = 1.0 - mdp.discount;
    const double bound = cost_range / (one_minus * one_minus);
    return bound * std::sqrt(double(mdp.dim())) / std::sqrt(double(n_rollouts_));
}

double NoiseModel::lmgf(const Vector& lambda) const {
    switch (kind_) {
        case NoiseKind::GaussianIsotropic: return 0.5 * sigma_ * sigma_ * lambda.squaredNorm();
        case NoiseKind::GaussianDiagonal:
            if (lambda.size() != sigmas_.size()) throw DomainError("lambda dimension does not match sigmas");
            return 0.5 * (sigmas_.array().square() * lambda.array().square()).sum();
        case NoiseKind::TruncatedGaussian: {
            double total = 0.0;
            for (Index j = 0; j < lambda.size(); ++j) total += truncated_lmgf_coord(lambda(j), sigma_, radius_).value;
            return total;
        }
        case NoiseKind::TrajectoryEstimator: break;
    }
    throw DomainError("no closed-form LMGF for the trajectory estimator");
}

Vector NoiseModel::lmgf_gradient(const Vector& lambda) const {
    switch (kind_) {
        case NoiseKind::GaussianIsotropic: return sigma_ * sigma_ * lambda;
        case NoiseKind::GaussianDiagonal:
            if (lambda.size() != sigmas_.size()) throw DomainError("lambda dimension does not match sigmas");
            return (sigmas_.array().square() * lambda.array()).matrix();
        case NoiseKind::TruncatedGaussian: {
            Vector g(lambda.size());
            for (Index j = 0; j < lambda.size(); ++j) g(j) = truncated_lmgf_coord(lambda(j), sigma_, radius_).slope;
            return g;
        }
        case NoiseKind::TrajectoryEstimator: break;
    }
    throw DomainError("no closed-form LMGF for the trajectory estimator");
}

std::optional<Matrix> NoiseModel::gaussian_covariance(Index dim) const {
    if (kind_ == NoiseKind::GaussianIsotropic) return Matrix(sigma_ * sigma_ * Matrix::Identity(dim, dim));
    if (kind_ == NoiseKind::GaussianDiagonal) {
        if (sigmas_.size() != dim) throw DomainError("sigmas dimension does not match");
        return Matrix(sigmas_.array().square().matrix().asDiagonal());
    }
    return std::nullopt;
}

void NoiseModel::sample_into(Rng& rng, std::span<double> out) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    switch (kind_) {
        case NoiseKind::GaussianIsotropic:
            if (sigma_ == 0.0) {
                std::fill(out.begin(), out.end(), 0.0);
                return;
            }
            for (double& z : out) z = sigma_ * normal(rng);
            return;
        case NoiseKind::GaussianDiagonal:
            if (Index(out.size()) != sigmas_.size()) throw DomainError("noise dimension does not match sigmas");
            for (std::size_t j = 0; j < out.size(); ++j) out[j] = sigmas_(Index(j)) * normal(rng);
            return;
        case NoiseKind::TruncatedGaussian: {
            const double k = radius_ / sigma_;
            std::uniform_real_distribution<double> unif(-1.0, 1.0);
            std::uniform_real_distribution<double> accept(0.0, 1.0);
            for (double& z : out) {
                if (k >= 0.5) {
                    double x;
                    do x = normal(rng);
                    while (std::abs(x) > k);
                    z = sigma_ * x;
                } else {
                    // Uniform proposal; acceptance exp(-x²/2) >= exp(-1/8).
                    double x;
                    do x = k * unif(rng);
                    while (accept(rng) > std::exp(-0.5 * x * x));
                    z = sigma_ * x;
                }
            }
            return;
        }
        case NoiseKind::TrajectoryEstimator: break;
    }
    throw DomainError("trajectory-estimator noise depends on theta; use sample_noise()");
}

std::string NoiseModel::describe() const {
    std::ostringstream out;
    out << to_string(kind_);
    switch (kind_) {
        case NoiseKind::GaussianIsotropic: out << "(sigma=" << sigma_ << ")"; break;
        case NoiseKind::GaussianDiagonal: out << "(dim=" << sigmas_.size() << ", max sigma=" << sigma_ << ")"; break;
        case NoiseKind::TruncatedGaussian: out << "(sigma=" << sigma_ << ", radius=" << radius_ << ")"; break;
        case NoiseKind::TrajectoryEstimator: out << "(rollouts=" << n_rollouts_ << ", horizon=" << horizon_ << ")"; break;
    }
    return out.str();
}

namespace {

Index sample_index(Rng& rng, const double* cumulative, Index n) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    for (Index i = 0; i + 1 < n; ++i) {
        if (u < cumulative[i]) return i;
    }
    return n - 1;
}

}  // namespace

GradientEstimate trajectory_gradient_estimate(const Mdp& mdp, const PolicyParams& theta, double tau,
                                              int n_rollouts, int horizon, Rng& rng) {
    if (n_rollouts < 1 || horizon < 1) throw DomainError("need n_rollouts >= 1 and horizon >= 1");
    if (!(tau > 0.0)) throw DomainError("trajectory estimate needs tau > 0");
    const Index S = mdp.n_states;
    const Index A = mdp.n_actions;
    const double gamma = mdp.discount;

    const Policy pi = softmax_policy(theta);
    Table log_pi(S, A);
    for (Index s = 0; s < S; ++s) {
        const double m = theta.theta.row(s).maxCoeff();
        const double lz = std::log((theta.theta.row(s).array() - m).exp().sum());
        log_pi.row(s) = theta.theta.row(s).array() - m - lz;
    }

    Table pi_cum(S, A);
    for (Index s = 0; s < S; ++s) {
        double c = 0.0;
        for (Index a = 0; a < A; ++a) pi_cum(s, a) = (c += pi.probs(s, a));
    }
    Table p_cum(S * A, S);
    for (Index r = 0; r < S * A; ++r) {
        double c = 0.0;
        for (Index s = 0; s < S; ++s) p_cum(r, s) = (c += mdp.transition(r, s));
    }
    Vector rho_cum(S);
    {
        double c = 0.0;
        for (Index s = 0; s < S; ++s) rho_cum(s) = (c += mdp.init_dist(s));
    }

    std::vector<Index> states(horizon);
    std::vector<Index> actions(horizon);
    std::vector<double> costs(horizon);
    Table sum = Table::Zero(S, A);
    Table sum_sq = Table::Zero(S, A);
    Table one(S, A);

    for (int k = 0; k < n_rollouts; ++k) {
        Index s = sample_index(rng, rho_cum.data(), S);
        for (int t = 0; t < horizon; ++t) {
            const Index a = sample_index(rng, pi_cum.row(s).data(), A);
            states[t] = s;
            actions[t] = a;
            costs[t] = mdp.cost(s, a) + tau * log_pi(s, a);
            s = sample_index(rng, p_cum.row(mdp.row(s, a)).data(), S);
        }
        // Reward-to-go, then Σ_t γ^t G_t ∇log π(a_t|s_t) with ∇ = e_a − π(·|s) on row s_t.
        one.setZero();
        double to_go = 0.0;
        for (int t = horizon - 1; t >= 0; --t) {
            to_go = costs[t] + gamma * to_go;
            const double w = std::pow(gamma, t) * to_go;
            one.row(states[t]) -= w * pi.probs.row(states[t]);
            one(states[t], actions[t]) += w;
        }
        sum += one;
        sum_sq += one.cwiseProduct(one);
    }

    GradientEstimate est;
    const double n = double(n_rollouts);
    est.mean = sum / n;
    if (n_rollouts > 1) {
        Table var = (sum_sq - n * est.mean.cwiseProduct(est.mean)) / (n - 1.0);
        est.std_error = (var.cwiseMax(0.0) / n).cwiseSqrt();
    } else {
        est.std_error = Table::Constant(S, A, std::numeric_limits<double>::infinity());
    }
    return est;
}

Vector sample_noise(const NoiseModel& model, const Mdp& mdp, double tau, const PolicyParams& theta, Rng& rng) {
    Vector z(theta.dim());
    if (model.theta_independent()) {
        model.sample_into(rng, std::span<double>(z.data(), std::size_t(z.size())));
        return z;
    }
    const Table g = exact_gradient(mdp, theta, tau);
    const auto est = trajectory_gradient_estimate(mdp, theta, tau, model.n_rollouts(), model.horizon(), rng);
    const Table diff = g - est.mean;
    return Eigen::Map<const Vector>(diff.data(), diff.size());
}

}  // namespace ldpg
