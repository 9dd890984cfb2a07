#pragma once

#include <functional>
#include <vector>

#include "ldpg/types.hpp"

namespace ldpg {

/// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    int size() const { return int(nodes.size()); }
};

/// n-point rule; nodes by Newton iteration on P_n, accurate to ~1e-15.
GaussLegendre gauss_legendre(int n);

/// ∫_a^b f with a single application of the rule.
double integrate(const std::function<double(double)>& f, double a, double b, const GaussLegendre& rule);

struct GradedOptions {
    double rel_tol = 1e-15;  // stop once the estimated tail is below rel_tol · |total|
    int max_panels = 200000;
};

struct GradedResult {
    int panels = 0;
    double tail_estimate = 0.0;  // already added to the result
    bool converged = false;
};

/**
 * ∫_0^1 of a vector-valued integrand that may blow up like x^α (α > −1) at
 * 0. Panels [2^{-k-1}, 2^{-k}] each get the full rule, so every power of x
 * is integrated to rounding error panel by panel. The remaining tail is
 * extrapolated geometrically from the last two panels.
 *
 * `f(x, out)` writes the integrand at x into out (size `dim`).
 */
Vector integrate_unit_graded(const std::function<void(double, Vector&)>& f, Index dim, const GaussLegendre& rule,
                             const GradedOptions& opts = {}, GradedResult* info = nullptr);

double integrate_unit_graded(const std::function<double(double)>& f, const GaussLegendre& rule,
                             const GradedOptions& opts = {}, GradedResult* info = nullptr);

}  // namespace ldpg
