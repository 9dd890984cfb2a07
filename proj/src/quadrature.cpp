#include "ldpg/quadrature.hpp"

#include <cmath>
#include <numbers>

namespace ldpg {

GaussLegendre gauss_legendre(int n) {
    if (n < 1) throw DomainError("Gauss-Legendre rule needs n >= 1");
    GaussLegendre rule;
    rule.nodes.resize(std::size_t(n));
    rule.weights.resize(std::size_t(n));
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // Refresh the derivative at the converged node.
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = pk;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[std::size_t(i)] = -x;
        rule.nodes[std::size_t(n - 1 - i)] = x;
        rule.weights[std::size_t(i)] = w;
        rule.weights[std::size_t(n - 1 - i)] = w;
    }
    if (n % 2 == 1) rule.nodes[std::size_t(n / 2)] = 0.0;
    return rule;
}

double integrate(const std::function<double(double)>& f, double a, double b, const GaussLegendre& rule) {
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < rule.size(); ++i) sum += rule.weights[std::size_t(i)] * f(mid + half * rule.nodes[std::size_t(i)]);
    return half * sum;
}

Vector integrate_unit_graded(const std::function<void(double, Vector&)>& f, Index dim, const GaussLegendre& rule,
                             const GradedOptions& opts, GradedResult* info) {
    Vector total = Vector::Zero(dim);
    Vector panel(dim);
    Vector prev(dim);
    Vector value(dim);
    Vector tail = Vector::Zero(dim);
    Vector ratio = Vector::Zero(dim);
    GradedResult res;
    double hi = 1.0;
    for (int k = 0; k < opts.max_panels; ++k) {
        const double lo = 0.5 * hi;
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        panel.setZero();
        for (int i = 0; i < rule.size(); ++i) {
            f(mid + half * rule.nodes[std::size_t(i)], value);
            panel += rule.weights[std::size_t(i)] * value;
        }
        panel *= half;
        total += panel;
        res.panels = k + 1;
        hi = lo;
        if (k >= 3) {
            bool done = true;
            for (Index j = 0; j < dim; ++j) {
                const double scale = std::abs(total(j));
                if (panel(j) == 0.0) {
                    tail(j) = 0.0;
                    continue;
                }
                const double r = panel(j) / prev(j);
                const double dr = std::abs(r - ratio(j));
                ratio(j) = r;
                if (!(r > 0.0 && r < 1.0)) {
                    done = false;
                    continue;
                }
                tail(j) = panel(j) * r / (1.0 - r);
                // Either the tail itself is negligible or its geometric
                // extrapolation has stabilized (a single dominant power).
                const double tail_err = std::abs(panel(j)) * dr / ((1.0 - r) * (1.0 - r));
                if (std::abs(tail(j)) > opts.rel_tol * scale && tail_err > opts.rel_tol * scale) done = false;
            }
            if (done) {
                res.converged = true;
                break;
            }
        }
        prev = panel;
        if (hi < 1e-280) break;
    }
    if (res.converged) {
        total += tail;
        res.tail_estimate = tail.norm();
    }
    if (info) *info = res;
    return total;
}

double integrate_unit_graded(const std::function<double(double)>& f, const GaussLegendre& rule,
                             const GradedOptions& opts, GradedResult* info) {
    auto vf = [&f](double x, Vector& out) { out(0) = f(x); };
    return integrate_unit_graded(vf, 1, rule, opts, info)(0);
}

}  // namespace ldpg
