#pragma once

#include <functional>
#include <limits>

#include "ldpg/types.hpp"

namespace ldpg {

/// f(x), writing ∇f(x) into *grad when grad is non-null.
using SmoothObjective = std::function<double(const Vector& x, Vector* grad)>;

struct MinimizeOptions {
    double grad_tol = 1e-9;
    int max_iter = 20000;
    double x_limit = std::numeric_limits<double>::infinity();  // ‖x‖ beyond this stops the run as unbounded
    double f_floor = -std::numeric_limits<double>::infinity();  // so does a value below this
};

struct MinimizeResult {
    Vector x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    bool unbounded = false;
};

/// Steepest descent with a Barzilai-Borwein trial step and Armijo backtracking.
MinimizeResult minimize_gradient(const SmoothObjective& f, const Vector& x0, const MinimizeOptions& opts = {});

/// BFGS with Armijo backtracking; falls back to the gradient direction when
/// the quasi-Newton direction is not a descent direction.
MinimizeResult minimize_bfgs(const SmoothObjective& f, const Vector& x0, const MinimizeOptions& opts = {});

}  // namespace ldpg
