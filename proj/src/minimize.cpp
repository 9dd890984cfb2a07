#include "ldpg/minimize.hpp"

#include <cmath>

namespace ldpg {

namespace {

constexpr double kArmijo = 1e-4;

struct LineSearch {
    double step = 0.0;
    double value = 0.0;
    bool ok = false;
};

// Backtracks from `step` until the Armijo condition holds along `dir`.
LineSearch backtrack(const SmoothObjective& f, const Vector& x, double fx, const Vector& grad, const Vector& dir,
                     double step, Vector& trial) {
    const double slope = grad.dot(dir);
    LineSearch ls;
    for (int k = 0; k < 80; ++k) {
        trial = x + step * dir;
        const double ft = f(trial, nullptr);
        if (std::isfinite(ft) && ft <= fx + kArmijo * step * slope) {
            ls.step = step;
            ls.value = ft;
            ls.ok = true;
            return ls;
        }
        step *= 0.5;
    }
    return ls;
}

}  // namespace

MinimizeResult minimize_gradient(const SmoothObjective& f, const Vector& x0, const MinimizeOptions& opts) {
    MinimizeResult res;
    Vector x = x0;
    Vector g(x.size());
    double fx = f(x, &g);
    Vector x_prev = x;
    Vector g_prev = g;
    Vector trial(x.size());
    double step = 1.0 / std::max(1.0, g.norm());
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        const double gn = g.norm();
        if (gn <= opts.grad_tol) {
            res.converged = true;
            break;
        }
        if (it > 0) {
            const Vector s = x - x_prev;
            const Vector y = g - g_prev;
            const double sy = s.dot(y);
            step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
        }
        const Vector dir = -g;
        const LineSearch ls = backtrack(f, x, fx, g, dir, step, trial);
        if (!ls.ok) break;
        x_prev = x;
        g_prev = g;
        x = trial;
        fx = f(x, &g);
        if (x.norm() > opts.x_limit || fx < opts.f_floor) {
            res.unbounded = true;
            break;
        }
    }
    res.x = x;
    res.value = fx;
    res.grad_norm = g.norm();
    if (res.grad_norm <= opts.grad_tol) res.converged = true;
    return res;
}

MinimizeResult minimize_bfgs(const SmoothObjective& f, const Vector& x0, const MinimizeOptions& opts) {
    const Index n = x0.size();
    MinimizeResult res;
    Vector x = x0;
    Vector g(n);
    double fx = f(x, &g);
    Matrix h_inv = Matrix::Identity(n, n);
    Vector trial(n);
    Vector g_new(n);
    bool scaled = false;
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        if (g.norm() <= opts.grad_tol) {
            res.converged = true;
            break;
        }
        Vector dir = -h_inv * g;
        if (!(g.dot(dir) < 0.0)) {
            h_inv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        if (!scaled) step = 1.0 / std::max(1.0, g.norm());
        LineSearch ls = backtrack(f, x, fx, g, dir, step, trial);
        if (!ls.ok) {
            if (h_inv.isIdentity()) break;
            h_inv.setIdentity();
            continue;
        }
        const double f_new = f(trial, &g_new);
        const Vector s = trial - x;
        const Vector y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            if (!scaled) {
                h_inv *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Vector hy = h_inv * y;
            h_inv += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
        x = trial;
        g = g_new;
        fx = f_new;
        if (x.norm() > opts.x_limit || fx < opts.f_floor) {
            res.unbounded = true;
            break;
        }
    }
    res.x = x;
    res.value = fx;
    res.grad_norm = g.norm();
    if (res.grad_norm <= opts.grad_tol) res.converged = true;
    return res;
}

}  // namespace ldpg
