#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ldpg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-major so a state-by-action table flattens to the index s * A + a.
using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// Policy parameter θ, one row per state.
struct PolicyParams {
    Table theta;

    Index n_states() const { return theta.rows(); }
    Index n_actions() const { return theta.cols(); }
    Index dim() const { return theta.size(); }

    Vector flat() const { return Eigen::Map<const Vector>(theta.data(), theta.size()); }
    static PolicyParams from_flat(const Vector& v, Index n_states, Index n_actions);
};

/// Stochastic kernel π(a|s), one probability row per state.
struct Policy {
    Table probs;
};

inline PolicyParams PolicyParams::from_flat(const Vector& v, Index n_states, Index n_actions) {
    if (v.size() != n_states * n_actions) throw std::invalid_argument("flat parameter has wrong size");
    PolicyParams p;
    p.theta = Eigen::Map<const Table>(v.data(), n_states, n_actions);
    return p;
}

// Errors. Everything thrown by the library derives from ldpg::Error.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const { return last_residual_; }

private:
    double last_residual_;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, std::string constraint)
        : Error(what), constraint_(std::move(constraint)) {}
    const std::string& constraint() const { return constraint_; }

private:
    std::string constraint_;
};

class EstimationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// SplitMix64 finalizer; used to turn consecutive seeds into decorrelated engine states.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

}  // namespace ldpg
