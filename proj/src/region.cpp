#include "ldpg/region.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace ldpg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PsdSplit {
    Matrix range;  // eigenvectors with eigenvalue > tol
    Vector range_eigs;
    Matrix null;
};

PsdSplit split_psd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on the rate quadratic form");
    const Index n = m.rows();
    const double top = n > 0 ? es.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
    const double tol = 1e-12 * top;
    Index nr = 0;
    for (Index i = 0; i < n; ++i) nr += es.eigenvalues()(i) > tol ? 1 : 0;
    PsdSplit s;
    s.range.resize(n, nr);
    s.range_eigs.resize(nr);
    s.null.resize(n, n - nr);
    Index ir = 0;
    Index in = 0;
    for (Index i = 0; i < n; ++i) {
        if (es.eigenvalues()(i) > tol) {
            s.range.col(ir) = es.eigenvectors().col(i);
            s.range_eigs(ir++) = es.eigenvalues()(i);
        } else {
            s.null.col(in++) = es.eigenvectors().col(i);
        }
    }
    return s;
}

RegionRateResult zero_at(Vector x, const char* method) {
    RegionRateResult r;
    r.value = 0.0;
    r.minimizer = std::move(x);
    r.method = method;
    return r;
}

RegionRateResult half_space_quadratic(const RegionSpec& reg, const Matrix& m, const PsdSplit& s) {
    const Vector a_null = s.null * (s.null.transpose() * reg.a);
    if (a_null.norm() > 1e-9 * reg.a.norm()) {
        return zero_at(reg.b * a_null / a_null.squaredNorm(), "half-space-null-direction");
    }
    const Vector coords = s.range.transpose() * reg.a;
    const Vector pinv_a = s.range * (coords.array() / s.range_eigs.array()).matrix();
    const double q = reg.a.dot(pinv_a);
    RegionRateResult r;
    r.minimizer = reg.b * pinv_a / q;
    r.value = 0.5 * r.minimizer.dot(m * r.minimizer);
    r.method = "half-space-closed-form";
    return r;
}

RegionRateResult box_quadratic(const RegionSpec& reg, const Matrix& m) {
    const Index n = m.rows();
    Vector x = Vector::Zero(n).cwiseMax(reg.lo).cwiseMin(reg.hi);
    Vector mx = m * x;
    const double diag_tol = 1e-14 * std::max(1e-300, m.diagonal().cwiseAbs().maxCoeff());
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double change = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double mii = m(i, i);
            double xi = x(i);
            if (mii > diag_tol) {
                xi = std::clamp(x(i) - mx(i) / mii, reg.lo(i), reg.hi(i));
            } else {
                xi = std::clamp(0.0, reg.lo(i), reg.hi(i));
            }
            const double dx = xi - x(i);
            if (dx != 0.0) {
                mx += dx * m.col(i);
                x(i) = xi;
                change = std::max(change, std::abs(dx));
            }
        }
        if (change <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
    }
    RegionRateResult r;
    r.minimizer = x;
    r.value = 0.5 * x.dot(m * x);
    r.method = "box-coordinate-clamping";
    return r;
}

RegionRateResult ball_complement_quadratic(const RegionSpec& reg, const Matrix& m, const PsdSplit& s) {
    const Vector& c = reg.center;
    const double rad = reg.radius;
    if (s.null.cols() > 0) {
        const Vector nv = s.null.col(0);
        const double nc = nv.dot(c);
        const double t = nc + std::sqrt(nc * nc + rad * rad - c.squaredNorm());
        return zero_at(t * nv, "ball-complement-null-direction");
    }
    // min ½ (y + c)ᵀ M (y + c) on ‖y‖ = R, in the eigenbasis of M.
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    const Vector lam = es.eigenvalues();
    const Matrix& v = es.eigenvectors();
    const Vector g = lam.cwiseProduct(v.transpose() * c);
    const Index n = lam.size();
    const double l1 = lam(0);
    auto norm_sq = [&](double nu, bool skip_bottom) {
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (skip_bottom && lam(i) - l1 <= 1e-14 * std::max(1.0, std::abs(l1))) continue;
            const double yi = g(i) / (lam(i) + nu);
            sum += yi * yi;
        }
        return sum;
    };
    Vector y(n);
    const double bottom_mass = [&] {
        double sum = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (lam(i) - l1 <= 1e-14 * std::max(1.0, std::abs(l1))) sum += g(i) * g(i);
        }
        return sum;
    }();
    const bool hard = bottom_mass <= 1e-28 * std::max(1e-300, g.squaredNorm()) &&
                      norm_sq(-l1, true) <= rad * rad;
    if (hard) {
        double rest = 0.0;
        for (Index i = 0; i < n; ++i) {
            if (lam(i) - l1 <= 1e-14 * std::max(1.0, std::abs(l1))) {
                y(i) = 0.0;
            } else {
                y(i) = -g(i) / (lam(i) - l1);
                rest += y(i) * y(i);
            }
        }
        y(0) = std::sqrt(std::max(0.0, rad * rad - rest));
    } else {
        double lo = -l1;
        double hi = g.norm() / rad - l1 + 1.0;
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            if (norm_sq(mid, false) > rad * rad) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double nu = 0.5 * (lo + hi);
        for (Index i = 0; i < n; ++i) y(i) = -g(i) / (lam(i) + nu);
        y *= rad / y.norm();
    }
    RegionRateResult r;
    r.minimizer = c + v * y;
    r.value = 0.5 * r.minimizer.dot(m * r.minimizer);
    r.method = "ball-complement-secular";
    return r;
}

RegionRateResult gap_quadratic(const RegionSpec& reg, const Matrix& m, const PsdSplit& s) {
    const Matrix& h = reg.hessian;
    if (s.null.cols() > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> en(s.null.transpose() * h * s.null);
        const Index k = en.eigenvalues().size() - 1;
        if (en.eigenvalues()(k) > 1e-12 * std::max(1.0, h.norm())) {
            const Vector x = s.null * en.eigenvectors().col(k);
            return zero_at(x * std::sqrt(2.0 * reg.delta / x.dot(h * x)), "gap-null-direction");
        }
    }
    // Largest eigenvalue of M_r^{-1/2} H_r M_r^{-1/2} on the range of M.
    const Vector inv_sqrt = s.range_eigs.cwiseSqrt().cwiseInverse();
    const Matrix w = s.range * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> es(w.transpose() * h * w);
    RegionRateResult r;
    r.method = "gap-generalized-eigenvalue";
    const Index k = es.eigenvalues().size() - 1;
    if (k < 0 || es.eigenvalues()(k) <= 0.0) {
        r.value = kInf;
        r.minimizer = Vector::Zero(m.rows());
        return r;
    }
    const double top = es.eigenvalues()(k);
    Vector x = w * es.eigenvectors().col(k);
    x *= std::sqrt(2.0 * reg.delta / x.dot(h * x));
    r.minimizer = x;
    r.value = reg.delta / top;
    return r;
}

}  // namespace

RegionSpec RegionSpec::half_space(Vector a, double b, std::string id) {
    if (a.size() == 0 || a.norm() == 0.0) throw DomainError("half-space needs a nonzero normal");
    RegionSpec r;
    r.kind = Kind::HalfSpace;
    r.a = std::move(a);
    r.b = b;
    r.id = std::move(id);
    return r;
}

RegionSpec RegionSpec::ball_complement(Vector center, double radius, std::string id) {
    if (!(radius >= 0.0)) throw DomainError("ball-complement needs radius >= 0");
    RegionSpec r;
    r.kind = Kind::BallComplement;
    r.center = std::move(center);
    r.radius = radius;
    r.id = std::move(id);
    return r;
}

RegionSpec RegionSpec::box(Vector lo, Vector hi, std::string id) {
    if (lo.size() != hi.size() || (lo.array() > hi.array()).any()) throw DomainError("box needs lo <= hi");
    RegionSpec r;
    r.kind = Kind::Box;
    r.lo = std::move(lo);
    r.hi = std::move(hi);
    r.id = std::move(id);
    return r;
}

RegionSpec RegionSpec::gap_sublevel_complement(double delta, Matrix hessian, std::string id) {
    if (hessian.rows() != hessian.cols() || hessian.rows() == 0) throw DomainError("gap region needs a square Hessian");
    RegionSpec r;
    r.kind = Kind::GapSublevelComplement;
    r.delta = delta;
    r.hessian = std::move(hessian);
    r.id = std::move(id);
    return r;
}

Index RegionSpec::dim() const {
    switch (kind) {
        case Kind::HalfSpace: return a.size();
        case Kind::BallComplement: return center.size();
        case Kind::Box: return lo.size();
        case Kind::GapSublevelComplement: return hessian.rows();
    }
    return 0;
}

bool RegionSpec::contains(const Vector& x) const {
    switch (kind) {
        case Kind::HalfSpace: return a.dot(x) >= b;
        case Kind::BallComplement: return (x - center).norm() >= radius;
        case Kind::Box: return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
        case Kind::GapSublevelComplement: return 0.5 * x.dot(hessian * x) >= delta;
    }
    return false;
}

bool RegionSpec::closure_contains_origin() const {
    switch (kind) {
        case Kind::HalfSpace: return b <= 0.0;
        case Kind::BallComplement: return center.norm() >= radius;
        case Kind::Box: return (lo.array() <= 0.0).all() && (hi.array() >= 0.0).all();
        case Kind::GapSublevelComplement: return delta <= 0.0;
    }
    return false;
}

Vector RegionSpec::project(const Vector& x) const {
    switch (kind) {
        case Kind::HalfSpace: {
            const double gap = b - a.dot(x);
            return gap > 0.0 ? Vector(x + gap / a.squaredNorm() * a) : x;
        }
        case Kind::BallComplement: {
            Vector off = x - center;
            const double n = off.norm();
            if (n >= radius) return x;
            if (n == 0.0) {
                off = Vector::Zero(x.size());
                off(0) = 1.0;
                return center + radius * off;
            }
            return center + radius / n * off;
        }
        case Kind::Box: return x.cwiseMax(lo).cwiseMin(hi);
        case Kind::GapSublevelComplement: {
            const double q = 0.5 * x.dot(hessian * x);
            if (q >= delta) return x;
            if (q > 0.0) return x * std::sqrt(delta / q);
            Eigen::SelfAdjointEigenSolver<Matrix> es(hessian);
            const Index k = es.eigenvalues().size() - 1;
            const double top = es.eigenvalues()(k);
            if (top <= 0.0) return x;
            return x + es.eigenvectors().col(k) * std::sqrt(2.0 * delta / top);
        }
    }
    return x;
}

std::string to_string(RegionSpec::Kind kind) {
    switch (kind) {
        case RegionSpec::Kind::HalfSpace: return "half-space";
        case RegionSpec::Kind::BallComplement: return "ball-complement";
        case RegionSpec::Kind::Box: return "box";
        case RegionSpec::Kind::GapSublevelComplement: return "gap-sublevel-complement";
    }
    return "unknown";
}

std::string RegionSpec::kind_name() const { return to_string(kind); }

RegionSpec::Kind parse_region_kind(const std::string& name) {
    if (name == "half-space") return RegionSpec::Kind::HalfSpace;
    if (name == "ball-complement") return RegionSpec::Kind::BallComplement;
    if (name == "box") return RegionSpec::Kind::Box;
    if (name == "gap-sublevel-complement") return RegionSpec::Kind::GapSublevelComplement;
    throw ConfigError("unknown region kind '" + name + "'");
}

namespace {

RegionRateResult infinite_at(Index d, const char* method) {
    RegionRateResult r;
    r.value = kInf;
    r.minimizer = Vector::Zero(d);
    r.method = method;
    return r;
}

// min ½ yᵀ M y subject to lo ≤ B y ≤ hi, by coordinate descent on the dual.
RegionRateResult box_dual(const RegionSpec& reg, const Matrix& my, const PsdSplit& s, const Matrix& basis) {
    const Matrix m_inv = s.range * s.range_eigs.cwiseInverse().asDiagonal() * s.range.transpose();
    const Matrix bm = basis * m_inv;
    const Matrix k = bm * basis.transpose();
    const Index n = k.rows();
    Vector nu = Vector::Zero(n);
    Vector knu = Vector::Zero(n);
    const double diag_tol = 1e-14 * std::max(1e-300, k.diagonal().maxCoeff());
    for (int sweep = 0; sweep < 1000000; ++sweep) {
        double change = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double kii = k(i, i);
            if (kii <= diag_tol) continue;
            const double q = knu(i) - kii * nu(i);
            double v = 0.0;
            if (-q - reg.hi(i) > 0.0) {
                v = (-q - reg.hi(i)) / kii;
            } else if (-q - reg.lo(i) < 0.0) {
                v = (-q - reg.lo(i)) / kii;
            }
            const double dv = v - nu(i);
            if (dv != 0.0) {
                knu += dv * k.col(i);
                nu(i) = v;
                change = std::max(change, std::abs(dv));
            }
        }
        if (change <= 1e-15 * (1.0 + nu.lpNorm<Eigen::Infinity>())) break;
    }
    RegionRateResult r;
    r.minimizer = -(bm.transpose() * nu);
    r.value = 0.5 * r.minimizer.dot(my * r.minimizer);
    r.method = "box-dual-coordinate-ascent";
    return r;
}

}  // namespace

RegionRateResult quadratic_region_rate(const RegionSpec& region, const Matrix& m, const Matrix* basis) {
    const Index d = m.rows();
    if (region.dim() != d) throw DomainError("region dimension does not match the rate function");
    if (region.closure_contains_origin()) return zero_at(Vector::Zero(d), "origin-in-closure");
    if (!basis) {
        const PsdSplit s = split_psd(m);
        switch (region.kind) {
            case RegionSpec::Kind::HalfSpace: return half_space_quadratic(region, m, s);
            case RegionSpec::Kind::Box: return box_quadratic(region, m);
            case RegionSpec::Kind::BallComplement: return ball_complement_quadratic(region, m, s);
            case RegionSpec::Kind::GapSublevelComplement: return gap_quadratic(region, m, s);
        }
        throw DomainError("unknown region kind");
    }

    const Matrix& b = *basis;
    const Matrix my = b.transpose() * m * b;
    const PsdSplit s = split_psd(my);
    RegionRateResult r;
    switch (region.kind) {
        case RegionSpec::Kind::HalfSpace: {
            const Vector ay = b.transpose() * region.a;
            if (ay.norm() <= 1e-7 * region.a.norm()) return infinite_at(d, "half-space-misses-subspace");
            r = half_space_quadratic(RegionSpec::half_space(ay, region.b), my, s);
            break;
        }
        case RegionSpec::Kind::BallComplement: {
            const Vector cy = b.transpose() * region.center;
            const double r2 = region.radius * region.radius - (region.center - b * cy).squaredNorm();
            if (r2 <= 0.0 || cy.squaredNorm() >= r2) return zero_at(Vector::Zero(d), "origin-in-closure");
            r = ball_complement_quadratic(RegionSpec::ball_complement(cy, std::sqrt(r2)), my, s);
            break;
        }
        case RegionSpec::Kind::Box:
            if (s.null.cols() > 0) throw DomainError("box region needs a definite form on the subspace");
            r = box_dual(region, my, s, b);
            break;
        case RegionSpec::Kind::GapSublevelComplement:
            r = gap_quadratic(RegionSpec::gap_sublevel_complement(region.delta, b.transpose() * region.hessian * b),
                              my, s);
            break;
    }
    r.minimizer = b * r.minimizer;
    return r;
}

namespace {

struct StartOutcome {
    double value = kInf;
    Vector x;
};

// Projection onto the closure intersected with span(basis). Exact for the
// half-space, ball and gap kinds (they map to the same kind in subspace
// coordinates); Dykstra alternation for the box.
Vector project_onto(const RegionSpec& region, const Matrix& basis, const Vector& x) {
    const Vector y = basis.transpose() * x;
    switch (region.kind) {
        case RegionSpec::Kind::HalfSpace: {
            const Vector ay = basis.transpose() * region.a;
            if (ay.norm() <= 1e-7 * region.a.norm()) return basis * y;
            return basis * RegionSpec::half_space(ay, region.b).project(y);
        }
        case RegionSpec::Kind::BallComplement: {
            const Vector cy = basis.transpose() * region.center;
            const double r2 = region.radius * region.radius - (region.center - basis * cy).squaredNorm();
            if (r2 <= 0.0) return basis * y;
            return basis * RegionSpec::ball_complement(cy, std::sqrt(r2)).project(y);
        }
        case RegionSpec::Kind::GapSublevelComplement: {
            const Matrix hy = basis.transpose() * region.hessian * basis;
            return basis * RegionSpec::gap_sublevel_complement(region.delta, hy).project(y);
        }
        case RegionSpec::Kind::Box: {
            Vector z = basis * y;
            Vector p = Vector::Zero(z.size());
            Vector q = Vector::Zero(z.size());
            for (int it = 0; it < 500; ++it) {
                const Vector u = (z + p).cwiseMax(region.lo).cwiseMin(region.hi);
                p = z + p - u;
                const Vector zn = basis * (basis.transpose() * (u + q));
                q = u + q - zn;
                const double move = (zn - z).norm();
                z = zn;
                if (move <= 1e-14 * (1.0 + z.norm())) break;
            }
            return z;
        }
    }
    return x;
}

StartOutcome projected_descent(const RegionSpec& region, const Matrix& basis, const RateFunction& rf,
                               const Vector& x0) {
    StartOutcome out;
    Vector x = project_onto(region, basis, x0);
    RateResult rr = rf.rate_detail(x);
    double fx = rr.value;
    Vector g = rr.maximizer;
    double alpha = 1.0 / std::max(1.0, g.norm());
    for (int it = 0; it < 300 && std::isfinite(fx); ++it) {
        bool moved = false;
        Vector xn;
        double fn = fx;
        RateResult rn;
        for (int k = 0; k < 50; ++k, alpha *= 0.5) {
            xn = project_onto(region, basis, x - alpha * g);
            rn = rf.rate_detail(xn);
            fn = rn.value;
            if (fn <= fx - 1e-4 / alpha * (xn - x).squaredNorm()) {
                moved = true;
                break;
            }
        }
        if (!moved) break;
        const double step = (xn - x).norm();
        const double decrease = fx - fn;
        x = xn;
        fx = fn;
        g = rn.maximizer;
        alpha *= 2.0;
        if (step <= 1e-10 * (1.0 + x.norm()) || decrease <= 1e-12 * fx) break;
    }
    out.value = fx;
    out.x = x;
    return out;
}

}  // namespace

RegionRateResult region_rate(const RegionSpec& region, const RateFunction& rate_fn, int n_starts, std::uint64_t seed) {
    const Index d = rate_fn.dim();
    if (region.dim() != d) throw DomainError("region dimension does not match the rate function");
    if (region.closure_contains_origin()) return zero_at(Vector::Zero(d), "origin-in-closure");
    const Matrix basis = rate_fn.spectral().retained_basis();
    if (rate_fn.is_quadratic()) {
        if (rate_fn.a_psi().norm() == 0.0) return infinite_at(d, "noise-free");
        return quadratic_region_rate(region, rate_fn.a_psi_pinv(), &basis);
    }
    if (n_starts < 1) throw DomainError("region_rate needs n_starts >= 1");

    const RegionRateResult surrogate = quadratic_region_rate(region, rate_fn.surrogate_pinv(), &basis);
    const Vector first = std::isfinite(surrogate.value) ? surrogate.minimizer : Vector::Zero(d);
    std::vector<Vector> starts(static_cast<std::size_t>(n_starts));
    starts[0] = first;
    {
        Rng rng = make_rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double scale = first.norm() + 1.0;
        for (int s = 1; s < n_starts; ++s) {
            Vector x(d);
            for (Index i = 0; i < d; ++i) x(i) = scale * normal(rng);
            starts[std::size_t(s)] = x;
        }
    }
    std::vector<StartOutcome> outcomes(static_cast<std::size_t>(n_starts));
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n_starts; ++s) {
        outcomes[std::size_t(s)] = projected_descent(region, basis, rate_fn, starts[std::size_t(s)]);
    }

    std::size_t best = 0;
    for (std::size_t s = 1; s < outcomes.size(); ++s) {
        if (outcomes[s].value < outcomes[best].value) best = s;
    }
    RegionRateResult r;
    r.value = outcomes[best].value;
    r.minimizer = outcomes[best].x;
    r.exact = false;
    r.method = "projected-multistart";
    return r;
}

RegionRateResult exact_gap_region_rate(double delta, const RateFunction& rate_fn, const Mdp& mdp, double tau,
                                       const SoftSolution& soft, int n_directions, std::uint64_t seed) {
    const Index d = rate_fn.dim();
    if (delta <= 0.0) return zero_at(Vector::Zero(d), "origin-in-closure");
    if (n_directions < 1) throw DomainError("exact_gap_region_rate needs n_directions >= 1");
    const SpectralData& sp = rate_fn.spectral();
    const Matrix h = sp.q * sp.rho_eigs.asDiagonal() * sp.q.transpose();
    const Matrix basis = sp.retained_basis();

    std::vector<Vector> dirs;
    const RegionSpec model = RegionSpec::gap_sublevel_complement(delta, h);
    const Matrix& m = rate_fn.is_quadratic() ? rate_fn.a_psi_pinv() : rate_fn.surrogate_pinv();
    const RegionRateResult guess = quadratic_region_rate(model, m, &basis);
    if (std::isfinite(guess.value) && guess.minimizer.norm() > 0.0) dirs.push_back(guess.minimizer.normalized());
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    while (int(dirs.size()) < n_directions) {
        Vector y(basis.cols());
        for (Index i = 0; i < y.size(); ++i) y(i) = normal(rng);
        dirs.push_back((basis * y).normalized());
    }

    ObjectiveEvaluator eval(mdp, tau);
    const Vector center = soft.theta_star.flat();
    auto gap_at = [&](const Vector& x) {
        const Vector th = center + x;
        return eval.value_only(Eigen::Map<const Table>(th.data(), mdp.n_states, mdp.n_actions)) - soft.objective;
    };

    RegionRateResult best;
    best.value = kInf;
    best.minimizer = Vector::Zero(d);
    for (const Vector& u : dirs) {
        double hi = 1e-3;
        while (hi < 1e4 && gap_at(hi * u) < delta) hi *= 2.0;
        if (gap_at(hi * u) < delta) continue;
        double lo = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (gap_at(mid * u) >= delta) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        const double v = rate_fn.rate(hi * u);
        if (v < best.value) {
            best.value = v;
            best.minimizer = hi * u;
        }
    }
    best.exact = false;
    best.approximate = true;
    best.method = "exact-gap-ray-bisection";
    return best;
}

}  // namespace ldpg
