#include "ldpg/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/special_functions/beta.hpp>

namespace ldpg {

Monitor Monitor::gap(std::string id, double delta) {
    Monitor m;
    m.id = std::move(id);
    m.kind = Kind::Gap;
    m.delta = delta;
    return m;
}

Monitor Monitor::in_region(RegionSpec region) {
    if (region.id.empty()) throw DomainError("monitored regions need an id");
    Monitor m;
    m.id = region.id;
    m.kind = Kind::Region;
    m.region = std::move(region);
    return m;
}

std::vector<long> geometric_checkpoints(long T, double growth) {
    if (T < 1) throw DomainError("checkpoints need T >= 1");
    if (!(growth > 1.0)) throw DomainError("checkpoint growth factor must exceed 1");
    std::vector<long> out;
    for (int k = 0;; ++k) {
        const double v = std::ceil(std::pow(growth, k) - 1e-9);
        if (v > double(T)) break;
        const long t = long(v);
        if (out.empty() || out.back() != t) out.push_back(t);
    }
    if (out.back() != T) out.push_back(T);
    return out;
}

double EnsembleStats::log_prob(std::size_t monitor, std::size_t checkpoint) const {
    return std::log(double(counts[monitor][checkpoint] + 1) / double(n_replicas + 1));
}

std::size_t EnsembleStats::monitor_index(const std::string& id) const {
    for (std::size_t i = 0; i < monitors.size(); ++i) {
        if (monitors[i].id == id) return i;
    }
    throw DomainError("no monitor named '" + id + "'");
}

namespace detail {

void validate(const EnsembleConfig& c) {
    if (c.T < 1) throw DomainError("ensemble needs T >= 1");
    if (c.M < 1) throw DomainError("ensemble needs M >= 1");
    if (c.checkpoints.empty()) throw DomainError("ensemble needs at least one checkpoint");
    for (std::size_t k = 0; k < c.checkpoints.size(); ++k) {
        if (c.checkpoints[k] < 1 || c.checkpoints[k] > c.T || (k > 0 && c.checkpoints[k] <= c.checkpoints[k - 1])) {
            throw DomainError("checkpoints must be increasing within [1, T]");
        }
    }
    std::set<std::string> ids;
    for (const Monitor& m : c.monitors) {
        if (!ids.insert(m.id).second) throw DomainError("duplicate monitor id '" + m.id + "'");
        if (m.kind == Monitor::Kind::Region && m.region.dim() != c.mdp.dim()) {
            throw DomainError("region '" + m.id + "' has the wrong dimension");
        }
    }
    if (c.projector.size() != 0 && (c.projector.rows() != c.mdp.dim() || c.projector.cols() != c.mdp.dim())) {
        throw DomainError("projector has the wrong shape");
    }
}

ReplicaResult run_replica(const EnsembleConfig& c, long index) {
    const std::size_t n_ck = c.checkpoints.size();
    ReplicaResult res;
    res.status.index = index;
    res.status.seed = c.base_seed + std::uint64_t(index);
    res.hits.assign(c.monitors.size() * n_ck, 0);
    const bool record = index == 0;
    const Index d = c.mdp.dim();
    const Vector theta_star = c.soft.theta_star.flat();
    Vector diff(d);
    Vector proj(d);
    std::size_t next = 0;
    double last_noise = 0.0;
    double min_prob = 1.0;

    auto observer = [&](const IterateView& it) {
        min_prob = std::min(min_prob, it.min_prob);
        if (next < n_ck && it.t == c.checkpoints[next] + 1) {
            diff = Eigen::Map<const Vector>(it.theta.data(), d) - theta_star;
            if (c.projector.size() != 0) {
                proj.noalias() = c.projector * diff;
            } else {
                proj = diff;
            }
            for (std::size_t m = 0; m < c.monitors.size(); ++m) {
                const Monitor& mon = c.monitors[m];
                const bool hit = mon.kind == Monitor::Kind::Gap ? it.gap >= mon.delta : mon.region.contains(proj);
                res.hits[m * n_ck + next] = hit ? 1 : 0;
            }
            if (record) res.rows.push_back({c.checkpoints[next], it.gap, diff.norm(), last_noise});
            ++next;
        }
        if (it.noise) last_noise = it.noise->norm();
    };
    try {
        sgd_stream(c.mdp, c.tau, c.soft, c.theta_init, c.schedule, c.noise, c.T, res.status.seed, observer);
    } catch (const DivergenceError& e) {
        res.status.diverged = true;
        res.status.divergence_step = e.step();
        std::fill(res.hits.begin(), res.hits.end(), 0);
    }
    res.status.min_prob = min_prob;
    res.status.conditioning_event = min_prob >= c.conditioning_min_prob;
    return res;
}

EnsembleStats aggregate(const EnsembleConfig& c, const std::vector<ReplicaResult>& results) {
    const std::size_t n_ck = c.checkpoints.size();
    EnsembleStats st;
    st.checkpoints = c.checkpoints;
    st.monitors = c.monitors;
    st.counts.assign(c.monitors.size(), std::vector<long>(n_ck, 0));
    st.n_requested = c.M;
    st.config_hash = c.config_hash;
    st.replicas.reserve(results.size());
    for (const ReplicaResult& r : results) {
        st.replicas.push_back(r.status);
        if (r.status.index == 0) st.first_trajectory = r.rows;
        if (r.status.diverged) {
            ++st.n_divergent;
            continue;
        }
        ++st.n_replicas;
        st.min_prob_observed = std::min(st.min_prob_observed, r.status.min_prob);
        if (r.status.conditioning_event) ++st.conditioning_hits;
        for (std::size_t m = 0; m < c.monitors.size(); ++m) {
            for (std::size_t k = 0; k < n_ck; ++k) st.counts[m][k] += r.hits[m * n_ck + k];
        }
    }
    st.flagged = double(st.n_divergent) > 0.01 * double(c.M);
    return st;
}

}  // namespace detail

SlopeFit fit_line(const std::vector<double>& t, const std::vector<double>& y) {
    const std::size_t n = t.size();
    if (n < 2 || y.size() != n) throw EstimationError("line fit needs at least two points");
    double tm = 0.0;
    double ym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        tm += t[i];
        ym += y[i];
    }
    tm /= double(n);
    ym /= double(n);
    double stt = 0.0;
    double sty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        stt += (t[i] - tm) * (t[i] - tm);
        sty += (t[i] - tm) * (y[i] - ym);
    }
    if (stt == 0.0) throw EstimationError("line fit needs distinct abscissae");
    SlopeFit f;
    f.slope = sty / stt;
    f.intercept = ym - f.slope * tm;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * t[i];
        ssr += r * r;
    }
    f.residual_norm = std::sqrt(ssr);
    f.slope_se = n > 2 ? std::sqrt(ssr / double(n - 2) / stt) : 0.0;
    f.n_points = int(n);
    f.t_lo = long(t.front());
    f.t_hi = long(t.back());
    return f;
}

DecayFit fit_decay_slope(const EnsembleStats& stats, std::size_t monitor, double window_fraction, long min_count) {
    if (monitor >= stats.counts.size()) throw DomainError("monitor index out of range");
    if (!(window_fraction > 0.0 && window_fraction <= 1.0)) throw DomainError("window fraction must be in (0, 1]");
    std::vector<double> t;
    std::vector<double> y;
    for (std::size_t k = 0; k < stats.checkpoints.size(); ++k) {
        const long c = stats.counts[monitor][k];
        if (c < std::max(1L, min_count)) continue;
        t.push_back(double(stats.checkpoints[k]));
        y.push_back(stats.log_prob(monitor, k));
    }
    if (t.size() < 4) {
        throw EstimationError("monitor '" + stats.monitors[monitor].id + "' has " + std::to_string(t.size()) +
                              " valid checkpoints, need at least 4");
    }
    DecayFit fit;
    fit.full = fit_line(t, y);
    std::size_t keep = std::size_t(std::ceil(window_fraction * double(t.size())));
    keep = std::clamp<std::size_t>(keep, 4, t.size());
    const std::vector<double> tw(t.end() - long(keep), t.end());
    const std::vector<double> yw(y.end() - long(keep), y.end());
    fit.windowed = fit_line(tw, yw);
    return fit;
}

BinomialInterval clopper_pearson(long k, long n, double alpha) {
    if (n < 1 || k < 0 || k > n) throw DomainError("clopper_pearson needs 0 <= k <= n, n >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
    BinomialInterval ci;
    ci.lower = k == 0 ? 0.0 : boost::math::ibeta_inv(double(k), double(n - k + 1), alpha);
    ci.upper = k == n ? 1.0 : boost::math::ibeta_inv(double(k + 1), double(n - k), 1.0 - alpha);
    return ci;
}

ComparisonReport compare_bounds(const EnsembleStats& stats, const TheoryConstants* constants,
                                const RateFunction* rate_fn, const std::string& expected_hash,
                                const CompareOptions& opts) {
    if (stats.config_hash != expected_hash) {
        throw ConfigError("ensemble was produced under config " + stats.config_hash + ", expected " + expected_hash);
    }
    ComparisonReport rep;
    rep.ensemble_flagged = stats.flagged;
    rep.conditioning_frequency =
        stats.n_replicas > 0 ? double(stats.conditioning_hits) / double(stats.n_replicas) : 0.0;
    if (stats.n_replicas == 0) throw EstimationError("no finished replicas to compare");

    for (std::size_t m = 0; m < stats.monitors.size(); ++m) {
        const Monitor& mon = stats.monitors[m];
        if (mon.kind == Monitor::Kind::Gap) {
            if (!constants) continue;
            for (std::size_t k = 0; k < stats.checkpoints.size(); ++k) {
                BoundCheck b;
                b.monitor_id = mon.id;
                b.t = stats.checkpoints[k];
                b.delta = mon.delta;
                b.count = stats.counts[m][k];
                b.n = stats.n_replicas;
                b.frequency = double(b.count) / double(b.n);
                const BinomialInterval ci = clopper_pearson(b.count, b.n, opts.confidence_level);
                b.cp_lower = ci.lower;
                b.cp_upper = ci.upper;
                b.bound_raw = exp_bound_exponent(*constants, b.t, b.delta);
                b.bound = exp_bound(*constants, b.t, b.delta);
                b.violated = b.cp_lower > b.bound;
                if (b.violated) ++rep.bound_violations;
                rep.bounds.push_back(b);
            }
            continue;
        }
        RegionCheck rc;
        rc.monitor_id = mon.id;
        if (!rate_fn) throw NumericalError("region '" + mon.id + "' needs a rate function");
        rc.rate_theory = region_rate(mon.region, *rate_fn, opts.region_starts).value;
        try {
            rc.fit = fit_decay_slope(stats, m, opts.window_fraction, opts.min_count);
            rc.fit_ok = true;
        } catch (const EstimationError& e) {
            rc.note = e.what();
        }
        if (rc.fit_ok) {
            rc.rate_empirical = rc.fit.windowed.rate();
            rc.slope_se = rc.fit.windowed.slope_se;
            rc.margin = rc.rate_empirical - rc.rate_theory;
            rc.violated = rc.rate_empirical < rc.rate_theory - opts.slack_se * rc.slope_se;
            if (rc.violated) ++rep.region_violations;
        }
        rep.regions.push_back(rc);
    }
    return rep;
}

}  // namespace ldpg
