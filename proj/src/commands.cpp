#include "ldpg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ldpg/io.hpp"
#include "ldpg/parametrization.hpp"

namespace ldpg {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const Error*>(&e)) return kExitNumerical;
    return kExitNumerical;
}

bool Experiment::bound_matches_schedule() const {
    return constants && schedule && schedule->t0 == constants->t0 && schedule->eta == constants->eta;
}

const StepSchedule& Experiment::require_schedule() const {
    if (!schedule) throw NumericalError("no usable step schedule: " + schedule_error);
    return *schedule;
}

const RateFunction& Experiment::require_rate() const {
    if (!rate_fn) throw NumericalError("rate function unavailable: " + rate_error);
    return *rate_fn;
}

namespace {

Json header(const ExperimentConfig& c) {
    Json j;
    j["tool_version"] = kToolVersion;
    j["config_hash"] = c.hash;
    return j;
}

std::string csv_header(const ExperimentConfig& c) {
    return std::string("# tool_version=") + kToolVersion + " config_hash=" + c.hash + "\n";
}

Json derived(double value, bool is_derived) {
    return Json{{"value", value}, {"provenance", is_derived ? "derived" : "config"}};
}

Mdp load_experiment_mdp(const ExperimentConfig& c) {
    Mdp m;
    if (c.mdp_file) {
        fs::path p(*c.mdp_file);
        if (p.is_relative() && !c.base_dir.empty()) p = c.base_dir / p;
        m = load_mdp(p);
    } else if (c.mdp_inline) {
        m = mdp_from_json(*c.mdp_inline);
    } else {
        m = random_mdp(c.gen_states, c.gen_actions, c.gen_discount, c.gen_seed);
    }
    const ValidationReport rep = validate_mdp(m);
    if (!rep.ok()) throw ConfigError("invalid MDP: " + rep.summary());
    return m;
}

/// Unit direction with zero mean in every state row, so the offset is not a pure per-state shift.
Table init_direction(Index S, Index A, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Table dir(S, A);
    for (Index s = 0; s < S; ++s) {
        for (Index a = 0; a < A; ++a) dir(s, a) = normal(rng);
    }
    if (A > 1) {
        for (Index s = 0; s < S; ++s) dir.row(s).array() -= dir.row(s).mean();
    }
    const double n = dir.norm();
    if (n == 0.0) return dir;
    return dir / n;
}

double objective_at(const Mdp& mdp, double tau, const Table& theta) {
    ObjectiveEvaluator eval(mdp, tau);
    return eval.value_only(theta);
}

/// Covariance-like matrix of the rate: A_Ψ when quadratic, the surrogate's pseudo-inverse otherwise.
Matrix rate_shape(const RateFunction& rf) {
    if (rf.is_quadratic()) return rf.a_psi();
    return rf.surrogate_pinv().completeOrthogonalDecomposition().pseudoInverse();
}

Vector eigen_direction(const Matrix& a, const std::string& which, const std::string& id) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    const Index d = a.rows();
    Index k = 0;  // position counted from the largest eigenvalue
    if (which == "softest") {
        k = 0;
    } else if (which == "stiffest") {
        const double top = es.eigenvalues()(d - 1);
        k = 0;
        for (Index i = 0; i < d; ++i) {
            if (es.eigenvalues()(d - 1 - i) > 1e-12 * std::max(top, 1e-300)) k = i;
        }
    } else if (which.rfind("eigen:", 0) == 0) {
        try {
            k = std::stol(which.substr(6));
        } catch (const std::exception&) {
            throw ConfigError("region '" + id + "': bad direction '" + which + "'");
        }
        if (k < 0 || k >= d) throw ConfigError("region '" + id + "': eigen index out of range");
    } else {
        throw ConfigError("region '" + id + "': direction must be softest, stiffest or eigen:<k>");
    }
    Vector v = es.eigenvectors().col(d - 1 - k);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    return v;
}

RegionSpec resolve_region(const RegionConfig& r, const Experiment& exp) {
    const Index d = exp.mdp.dim();
    auto check_dim = [&](const Vector& v, const char* what) {
        if (v.size() != d) throw ConfigError("region '" + r.id + "': " + what + " must have " + std::to_string(d) + " entries");
    };
    const RegionSpec::Kind kind = parse_region_kind(r.kind);
    switch (kind) {
        case RegionSpec::Kind::HalfSpace: {
            Vector a;
            if (r.a) {
                a = *r.a;
                check_dim(a, "a");
            } else {
                a = eigen_direction(rate_shape(exp.require_rate()), r.direction, r.id);
            }
            double b = 0.0;
            if (r.b) {
                b = *r.b;
            } else {
                const double var = a.dot(rate_shape(exp.require_rate()) * a);
                if (!(var > 0.0)) throw NumericalError("region '" + r.id + "': normal has no variance under the rate");
                b = std::sqrt(2.0 * *r.target_rate * var);
            }
            return RegionSpec::half_space(a, b, r.id);
        }
        case RegionSpec::Kind::BallComplement: {
            Vector c = r.center.size() == 0 ? Vector::Zero(d) : r.center;
            check_dim(c, "center");
            return RegionSpec::ball_complement(c, r.radius, r.id);
        }
        case RegionSpec::Kind::Box:
            check_dim(r.lo, "lo");
            check_dim(r.hi, "hi");
            return RegionSpec::box(r.lo, r.hi, r.id);
        case RegionSpec::Kind::GapSublevelComplement: {
            const double delta = r.delta ? *r.delta : *r.delta_fraction * exp.gap1;
            return RegionSpec::gap_sublevel_complement(delta, exp.hess, r.id);
        }
    }
    throw ConfigError("unhandled region kind");
}

void prepare_theory(Experiment& e) {
    const ExperimentConfig& c = e.config;
    const Index d = e.mdp.dim();
    const double dist = (e.theta_init.flat() - e.soft.theta_star.flat()).norm();
    const double radius = std::max(c.l1_radius, dist);
    e.l1 = estimate_l1(e.mdp, c.tau, e.soft, std::max(c.l1_samples, 1), radius, c.l1_seed, c.l1_safety, c.l1_override);
    e.pl_factor = pl_factor(e.mdp, c.tau, e.soft);
    e.mu_prepass = pl_constant(e.mdp, e.theta_init, c.tau, e.soft);
    if (c.mu_override) {
        e.mu = *c.mu_override;
        e.mu_derived = false;
    } else {
        e.mu = c.mu_safety * std::min(e.mu_prepass, pl_constant(e.mdp, e.soft.theta_star, c.tau, e.soft));
    }
    e.sigma = c.noise.sub_gaussian_sigma(e.mdp, c.tau);
    if (c.eta) {
        e.eta = *c.eta;
        e.eta_derived = false;
    } else {
        e.eta = auto_eta(e.mu, e.sigma, c.c_universal, d, c.eta_margin);
    }
    e.conditioning_min_prob = std::sqrt(e.mu / e.pl_factor);

    Lemma5Inputs in;
    in.l1 = e.l1.value;
    in.mu = e.mu;
    in.sigma = e.sigma;
    in.c_universal = c.c_universal;
    in.eta = e.eta;
    in.epsilon = c.epsilon;
    in.delta_init = e.delta_init;
    in.T = c.T;
    in.gap1 = e.gap1;
    in.dim = d;
    try {
        e.constants = lemma5_constants(in);
    } catch (const InfeasibleError& err) {
        e.infeasible_constraint = err.constraint();
        e.infeasible_reason = err.what();
    }

    switch (c.t0_mode) {
        case T0Mode::Lemma5:
            if (e.constants) {
                e.schedule = e.constants->schedule();
            } else {
                e.schedule_error = "tail-bound constants are infeasible (" + e.infeasible_constraint + ")";
            }
            break;
        case T0Mode::StepSize:
            e.schedule = StepSchedule{e.eta, std::max(0L, long(std::ceil(e.l1.value * e.eta - 2.0)))};
            break;
        case T0Mode::Fixed:
            e.schedule = StepSchedule{e.eta, c.t0_fixed};
            break;
    }
    e.has_theory = true;
}

void prepare_ldp(Experiment& e) {
    const ExperimentConfig& c = e.config;
    e.hess = hessian(e.mdp, e.soft.theta_star, c.tau);
    e.spec = spectral(e.hess, c.null_tol);
    std::optional<ResidualParams> residual;
    try {
        if (c.psi_mode == PsiMode::WithResidual) {
            if (!e.constants) throw NumericalError("with-residual mode needs feasible tail-bound constants");
            residual = make_residual_params(e.mdp, c.tau, e.soft, e.hess, *e.constants, c.noise.lmgf_lipschitz(),
                                            c.c_delta, c.sphere_samples, c.residual_seed);
        }
        PsiOptions opts;
        opts.mode = c.psi_mode;
        opts.quad_points = c.quad_points;
        e.rate_fn.emplace(e.spec, c.noise, e.eta, opts, residual, e.sigma);
    } catch (const Error& err) {
        e.rate_error = err.what();
    }
    for (const RegionConfig& r : c.regions) e.regions.push_back(resolve_region(r, e));
    e.has_ldp = true;
}

void write_csv(const fs::path& path, const ExperimentConfig& c, const std::string& columns,
               const std::vector<std::vector<std::string>>& rows) {
    std::string out = csv_header(c) + columns + "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += row[i];
        }
        out += '\n';
    }
    write_text_file(path, out);
}

Json fit_json(const SlopeFit& f) {
    return Json{{"slope", f.slope},   {"intercept", f.intercept}, {"slope_se", f.slope_se},
                {"rate", f.rate()},   {"residual_norm", f.residual_norm}, {"t_lo", f.t_lo},
                {"t_hi", f.t_hi},     {"n_points", f.n_points}};
}

Json schedule_json(const Experiment& e) {
    Json j;
    j["eta"] = derived(e.eta, e.eta_derived);
    j["t0_mode"] = to_string(e.config.t0_mode);
    if (e.schedule) {
        j["t0"] = Json{{"value", e.schedule->t0}, {"provenance", e.config.t0_mode == T0Mode::Fixed ? "config" : "derived"}};
    } else {
        j["t0"] = nullptr;
        j["error"] = e.schedule_error;
    }
    return j;
}

Json derived_json(const Experiment& e) {
    Json j;
    j["Delta"] = derived(e.delta_init, e.delta_derived);
    j["mu"] = derived(e.mu, e.mu_derived);
    j["mu_prepass"] = e.mu_prepass;
    j["eta"] = derived(e.eta, e.eta_derived);
    j["L1"] = derived(e.l1.value, !e.l1.overridden);
    if (e.constants) {
        j["t0"] = derived(double(e.constants->t0), true);
        j["K"] = derived(e.constants->k_const, true);
    }
    j["gap1"] = e.gap1;
    j["conditioning_min_prob"] = e.conditioning_min_prob;
    return j;
}

std::vector<Monitor> build_monitors(const Experiment& e) {
    std::vector<Monitor> out;
    if (e.gap1 > 0.0) {
        for (double f : e.config.gap_fractions) {
            char id[32];
            std::snprintf(id, sizeof id, "gap:%g", f);
            out.push_back(Monitor::gap(id, f * e.gap1));
        }
    }
    for (const RegionSpec& r : e.regions) out.push_back(Monitor::in_region(r));
    return out;
}

/// Runs the ensemble and writes checkpoints.csv, curves.csv, trajectory.csv, manifest.json, summary.json.
EnsembleStats simulate_and_write(const Experiment& e, const fs::path& out_dir) {
    const ExperimentConfig& c = e.config;
    const EnsembleConfig ec = make_ensemble_config(e);
    const EnsembleStats st = run_ensemble(ec);

    std::vector<double> region_rates(st.monitors.size(), std::nan(""));
    for (std::size_t m = 0; m < st.monitors.size(); ++m) {
        if (st.monitors[m].kind == Monitor::Kind::Region && e.rate_fn) {
            region_rates[m] = region_rate(st.monitors[m].region, *e.rate_fn, c.region_starts).value;
        }
    }

    std::vector<std::vector<std::string>> ck_rows;
    std::vector<std::vector<std::string>> curve_rows;
    const bool bounds = e.bound_matches_schedule();
    for (std::size_t m = 0; m < st.monitors.size(); ++m) {
        const Monitor& mon = st.monitors[m];
        for (std::size_t k = 0; k < st.checkpoints.size(); ++k) {
            const long t = st.checkpoints[k];
            std::string bound;
            std::string bound_raw;
            if (mon.kind == Monitor::Kind::Gap && bounds) {
                bound = format_double(exp_bound(*e.constants, t, mon.delta));
                bound_raw = format_double(exp_bound_exponent(*e.constants, t, mon.delta));
            }
            const double lp = st.log_prob(m, k);
            ck_rows.push_back({std::to_string(t), mon.id, std::to_string(st.counts[m][k]),
                               std::to_string(st.n_replicas), format_double(lp), bound, bound_raw});
            const double freq = st.n_replicas ? double(st.counts[m][k]) / double(st.n_replicas) : 0.0;
            curve_rows.push_back({mon.id, std::to_string(t), "frequency", format_double(freq)});
            curve_rows.push_back({mon.id, std::to_string(t), "log_prob", format_double(lp)});
            curve_rows.push_back({mon.id, std::to_string(t), "log_prob_per_t", format_double(lp / double(t))});
            if (!bound.empty()) curve_rows.push_back({mon.id, std::to_string(t), "bound", bound});
            if (!std::isnan(region_rates[m])) {
                curve_rows.push_back({mon.id, std::to_string(t), "theory_log_prob", format_double(-region_rates[m] * double(t))});
            }
        }
    }
    write_csv(out_dir / "checkpoints.csv", c, "t,region_id,count,M,log_prob,bound,bound_raw", ck_rows);
    write_csv(out_dir / "curves.csv", c, "series,t,metric,value", curve_rows);

    std::vector<std::vector<std::string>> traj_rows;
    for (const TrajectoryRow& r : st.first_trajectory) {
        traj_rows.push_back({std::to_string(r.t), format_double(r.gap), format_double(r.theta_norm), format_double(r.noise_norm)});
    }
    write_csv(out_dir / "trajectory.csv", c, "t,gap,theta_norm,noise_norm", traj_rows);

    Json manifest = header(c);
    manifest["base_seed"] = c.base_seed;
    manifest["M"] = st.n_requested;
    manifest["T"] = c.T;
    manifest["n_replicas"] = st.n_replicas;
    manifest["n_divergent"] = st.n_divergent;
    manifest["flagged"] = st.flagged;
    manifest["checkpoints"] = st.checkpoints;
    Json reps = Json::array();
    for (const ReplicaStatus& r : st.replicas) {
        Json j{{"index", r.index}, {"seed", r.seed}, {"status", r.diverged ? "diverged" : "ok"},
               {"min_prob", r.min_prob}, {"conditioning_event", r.conditioning_event}};
        if (r.diverged) j["divergence_step"] = r.divergence_step;
        reps.push_back(j);
    }
    manifest["replicas"] = reps;
    write_json_file(out_dir / "manifest.json", manifest);

    Json summary = header(c);
    summary["schedule"] = schedule_json(e);
    summary["derived"] = derived_json(e);
    summary["n_replicas"] = st.n_replicas;
    summary["n_divergent"] = st.n_divergent;
    summary["flagged"] = st.flagged;
    summary["conditioning_frequency"] = st.n_replicas ? double(st.conditioning_hits) / double(st.n_replicas) : 0.0;
    summary["min_prob_observed"] = st.min_prob_observed;
    summary["bounds_apply"] = bounds;
    Json mons = Json::array();
    for (std::size_t m = 0; m < st.monitors.size(); ++m) {
        const Monitor& mon = st.monitors[m];
        Json j{{"id", mon.id}, {"kind", mon.kind == Monitor::Kind::Gap ? "gap" : mon.region.kind_name()}};
        if (mon.kind == Monitor::Kind::Gap) j["delta"] = mon.delta;
        if (!std::isnan(region_rates[m])) j["rate_theory"] = region_rates[m];
        try {
            const DecayFit fit = fit_decay_slope(st, m, c.window_fraction, c.min_count);
            j["fit_windowed"] = fit_json(fit.windowed);
            j["fit_full"] = fit_json(fit.full);
        } catch (const EstimationError& err) {
            j["fit_note"] = err.what();
        }
        mons.push_back(j);
    }
    summary["monitors"] = mons;
    write_json_file(out_dir / "summary.json", summary);
    return st;
}

Json region_rate_json(const RegionSpec& r, const RegionRateResult& res) {
    return Json{{"id", r.id},
                {"kind", r.kind_name()},
                {"rate_value", res.value},
                {"minimizer", vector_to_json(res.minimizer)},
                {"method", res.method},
                {"exact", res.exact},
                {"approximate", res.approximate}};
}

struct Suite {
    std::string name;
    std::string status = "pass";
    long checks = 0;
    long failures = 0;
    Json detail = Json::object();

    void expect(bool ok) {
        ++checks;
        if (!ok) {
            ++failures;
            status = "fail";
        }
    }
    void skip(const std::string& why) {
        status = "skip";
        detail["reason"] = why;
    }
    Json json() const {
        return Json{{"name", name}, {"status", status}, {"checks", checks}, {"failures", failures}, {"detail", detail}};
    }
};

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

Vector random_retained(const SpectralData& spec, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(spec.dim());
    for (Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    return spec.project(v);
}

}  // namespace

Experiment prepare_experiment(const ExperimentConfig& config, bool theory, bool ldp) {
    Experiment e;
    e.config = config;
    e.mdp = load_experiment_mdp(config);
    e.soft = soft_optimal(e.mdp, config.tau);
    if (config.init_theta) {
        if (config.init_theta->rows() != e.mdp.n_states || config.init_theta->cols() != e.mdp.n_actions) {
            throw ConfigError("init.theta must be n_states x n_actions");
        }
        e.theta_init.theta = *config.init_theta;
    } else {
        e.theta_init.theta =
            e.soft.theta_star.theta + config.init_offset * init_direction(e.mdp.n_states, e.mdp.n_actions, config.init_seed);
    }
    const double dist = (e.theta_init.flat() - e.soft.theta_star.flat()).norm();
    if (config.delta_init) {
        e.delta_init = *config.delta_init;
        e.delta_derived = false;
        if (dist > e.delta_init * (1.0 + 1e-12)) {
            throw ConfigError("initial point lies outside the warm-start ball: distance " + format_double(dist) +
                              " > Delta " + format_double(e.delta_init));
        }
    } else {
        e.delta_init = dist;
    }
    e.gap1 = std::max(0.0, objective_at(e.mdp, config.tau, e.theta_init.theta) - e.soft.objective);
    if (theory || ldp) prepare_theory(e);
    if (ldp) prepare_ldp(e);
    return e;
}

EnsembleConfig make_ensemble_config(const Experiment& e) {
    if (!e.has_theory) throw DomainError("ensemble needs the theory layer");
    EnsembleConfig ec;
    ec.mdp = e.mdp;
    ec.tau = e.config.tau;
    ec.soft = e.soft;
    ec.theta_init = e.theta_init;
    ec.schedule = e.require_schedule();
    ec.noise = e.config.noise;
    ec.T = e.config.T;
    ec.M = e.config.M;
    ec.base_seed = e.config.base_seed;
    ec.checkpoints = geometric_checkpoints(e.config.T, e.config.checkpoint_growth);
    ec.monitors = build_monitors(e);
    if (e.has_ldp && !e.regions.empty()) {
        const Matrix b = e.spec.retained_basis();
        ec.projector = b * b.transpose();
    }
    ec.conditioning_min_prob = e.conditioning_min_prob;
    ec.workers = e.config.workers;
    ec.config_hash = e.config.hash;
    return ec;
}

int cmd_solve(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, false, false);
    Json j = header(config);
    j["n_states"] = e.mdp.n_states;
    j["n_actions"] = e.mdp.n_actions;
    j["discount"] = e.mdp.discount;
    j["tau"] = config.tau;
    j["theta_star"] = table_to_json(e.soft.theta_star.theta);
    j["pi_star"] = table_to_json(e.soft.pi_star.probs);
    j["v_star"] = vector_to_json(e.soft.v_star);
    j["q_star"] = table_to_json(e.soft.q_star);
    j["objective"] = e.soft.objective;
    j["bellman_residual"] = e.soft.bellman_residual;
    j["stationarity"] = e.soft.stationarity;
    j["iterations"] = e.soft.iterations;
    write_json_file(out_dir / "solution.json", j);
    return kExitOk;
}

int cmd_theory(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, true, false);
    const double d = double(e.mdp.dim());
    const double c_m = std::pow(e.sigma * std::sqrt(d) * config.c_universal, 2);
    Json j = header(config);
    j["L1"] = e.l1.value;
    j["mu"] = e.mu;
    j["sigma"] = e.sigma;
    j["C"] = config.c_universal;
    j["C_M"] = c_m;
    j["B0"] = c_m > 0.0 ? 1.0 / (2.0 * e.eta * e.eta * e.l1.value * c_m) : std::numeric_limits<double>::infinity();
    j["C0"] = 2.0 * e.l1.value * e.sigma * e.sigma;
    j["eta"] = e.eta;
    j["epsilon"] = config.epsilon;
    j["T"] = config.T;
    j["dim"] = e.mdp.dim();
    j["feasible"] = e.constants.has_value();
    if (e.constants) {
        j["t0"] = e.constants->t0;
        j["K"] = e.constants->k_const;
        j["gamma_bar"] = e.constants->gamma_bar();
        j["binding_constraints"] = e.constants->binding_constraints;
    } else {
        j["t0"] = nullptr;
        j["K"] = nullptr;
        j["binding_constraints"] = Json::array({e.infeasible_constraint});
        j["infeasible_reason"] = e.infeasible_reason;
    }
    j["schedule"] = schedule_json(e);
    j["derived"] = derived_json(e);
    j["l1_estimate"] = Json{{"max_sampled", e.l1.max_sampled}, {"n_samples", e.l1.n_samples},
                            {"radius", e.l1.radius},           {"safety_factor", e.l1.safety_factor},
                            {"overridden", e.l1.overridden}};
    j["pl_factor"] = e.pl_factor;
    write_json_file(out_dir / "theory.json", j);
    return kExitOk;
}

int cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, true, !config.regions.empty());
    simulate_and_write(e, out_dir);
    return kExitOk;
}

int cmd_rate(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, true, true);
    const RateFunction& rf = e.require_rate();
    Json j = header(config);
    j["eigenvalues"] = vector_to_json(e.spec.rho_eigs);
    j["retained_dim"] = e.spec.retained_dim();
    j["null_dim"] = e.spec.dim() - e.spec.retained_dim();
    j["null_tol"] = config.null_tol;
    j["psi_mode"] = to_string(config.psi_mode);
    j["eta"] = e.eta;
    j["integrability_margin"] = 2.0 * e.eta * e.spec.retained_eigs().minCoeff() - 1.0;
    j["quadratic"] = rf.is_quadratic();
    j["lmgf_envelope"] = rf.uses_lmgf_envelope();
    if (rf.is_quadratic()) j["a_psi"] = table_to_json(rf.a_psi());

    Json regions = Json::array();
    for (const RegionSpec& r : e.regions) regions.push_back(region_rate_json(r, region_rate(r, rf, config.region_starts)));
    j["regions"] = regions;
    if (!regions.empty()) {
        j["region"] = regions[0];
        j["rate_value"] = regions[0]["rate_value"];
        j["minimizer"] = regions[0]["minimizer"];
    } else {
        j["region"] = nullptr;
        j["rate_value"] = nullptr;
        j["minimizer"] = nullptr;
    }

    Json points = Json::array();
    for (const Vector& p : config.rate_points) {
        if (p.size() != e.mdp.dim()) throw ConfigError("rate.points entries must have dimension " + std::to_string(e.mdp.dim()));
        const RateResult rr = rf.rate_detail(p);
        points.push_back(Json{{"theta_prime", vector_to_json(p)},
                              {"rate", rr.value},
                              {"maximizer", vector_to_json(rr.maximizer)},
                              {"method", rr.method},
                              {"converged", rr.converged}});
    }
    j["points"] = points;

    Json maps = Json::array();
    for (const std::string& spec : config.maps) {
        const ParamMap map = parse_param_map(spec);
        Json mp = Json::array();
        for (const Vector& w : config.map_points) {
            if (w.size() != e.mdp.dim()) throw ConfigError("rate.map_points entries must have dimension " + std::to_string(e.mdp.dim()));
            const ContractResult cr = contract_rate(rf, map, w, config.contract_starts, config.base_seed);
            mp.push_back(Json{{"w", vector_to_json(w)},
                              {"value", cr.value},
                              {"preimage", vector_to_json(cr.preimage)},
                              {"feasible", cr.feasible},
                              {"feasibility", cr.feasibility},
                              {"method", cr.method}});
        }
        maps.push_back(Json{{"map", spec}, {"points", mp}});
    }
    j["maps"] = maps;
    write_json_file(out_dir / "rate.json", j);
    return kExitOk;
}

int cmd_compare(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, true, !config.regions.empty());
    const EnsembleStats st = simulate_and_write(e, out_dir);
    CompareOptions opts;
    opts.confidence_level = config.confidence_level;
    opts.slack_se = config.slack_se;
    opts.window_fraction = config.window_fraction;
    opts.min_count = config.min_count;
    opts.region_starts = config.region_starts;
    const bool bounds = e.bound_matches_schedule();
    const ComparisonReport rep =
        compare_bounds(st, bounds ? &*e.constants : nullptr, e.rate_fn ? &*e.rate_fn : nullptr, config.hash, opts);

    Json j = header(config);
    j["ok"] = rep.ok();
    j["bounds_checked"] = bounds;
    if (!bounds) {
        j["bounds_note"] = e.constants ? "schedule differs from the tail-bound schedule" : e.schedule_error.empty()
                                                                                            ? e.infeasible_reason
                                                                                            : e.schedule_error;
    }
    j["bound_violations"] = rep.bound_violations;
    j["region_violations"] = rep.region_violations;
    j["ensemble_flagged"] = rep.ensemble_flagged;
    j["conditioning_frequency"] = rep.conditioning_frequency;
    j["confidence_level"] = config.confidence_level;
    j["slack_se"] = config.slack_se;
    Json bj = Json::array();
    for (const BoundCheck& b : rep.bounds) {
        bj.push_back(Json{{"id", b.monitor_id}, {"t", b.t},         {"delta", b.delta},
                          {"count", b.count},   {"n", b.n},         {"frequency", b.frequency},
                          {"cp_lower", b.cp_lower}, {"cp_upper", b.cp_upper}, {"bound", b.bound},
                          {"bound_raw", b.bound_raw}, {"violated", b.violated}});
    }
    j["bounds"] = bj;
    Json rj = Json::array();
    for (const RegionCheck& r : rep.regions) {
        Json x{{"id", r.monitor_id}, {"rate_theory", r.rate_theory}, {"fit_ok", r.fit_ok}, {"violated", r.violated}};
        if (r.fit_ok) {
            x["rate_empirical"] = r.rate_empirical;
            x["slope_se"] = r.slope_se;
            x["margin"] = r.margin;
            x["fit_windowed"] = fit_json(r.fit.windowed);
            x["fit_full"] = fit_json(r.fit.full);
        } else {
            x["note"] = r.note;
        }
        rj.push_back(x);
    }
    j["regions"] = rj;
    write_json_file(out_dir / "compare.json", j);
    return rep.ok() ? kExitOk : kExitInvariant;
}

int cmd_check(const ExperimentConfig& config, const fs::path& out_dir) {
    const Experiment e = prepare_experiment(config, true, true);
    const double tau = config.tau;
    std::vector<Suite> suites;
    Rng rng = make_rng(config.base_seed ^ 0xc4ec4ULL);
    std::normal_distribution<double> normal(0.0, 1.0);

    {
        Suite s{"mdp"};
        s.expect(validate_mdp(e.mdp).ok());
        suites.push_back(s);
    }
    {
        Suite s{"soft-optimality"};
        const double adv = soft_advantage(e.mdp, e.soft.theta_star, tau).cwiseAbs().maxCoeff();
        s.expect(e.soft.bellman_residual < 1e-10);
        s.expect(e.soft.stationarity < 1e-8);
        s.expect(adv <= 1e-8);
        s.detail = Json{{"bellman_residual", e.soft.bellman_residual}, {"stationarity", e.soft.stationarity}, {"advantage", adv}};
        suites.push_back(s);
    }
    {
        Suite s{"gradient"};
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            PolicyParams th;
            th.theta = e.soft.theta_star.theta;
            for (Index i = 0; i < th.theta.size(); ++i) th.theta.data()[i] += normal(rng);
            const Table g = exact_gradient(e.mdp, th, tau);
            const Table fd = fd_gradient(e.mdp, th, tau);
            const double err = (g - fd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-8);
            worst = std::max(worst, err);
            s.expect(err < 1e-5);
        }
        s.detail["worst_relative_error"] = worst;
        suites.push_back(s);
    }
    {
        Suite s{"inequalities"};
        const InequalityReport r =
            check_inequalities(e.mdp, tau, e.soft, e.l1.value, 200, e.l1.radius, config.base_seed + 17);
        s.expect(r.smoothness_violations == 0);
        s.expect(r.gradient_violations == 0);
        s.expect(r.pl_violations == 0);
        s.detail = Json{{"samples", r.samples},
                        {"smoothness_violations", r.smoothness_violations},
                        {"gradient_violations", r.gradient_violations},
                        {"pl_violations", r.pl_violations},
                        {"max_smoothness_excess", r.max_smoothness_excess},
                        {"worst_gradient", r.worst_gradient},
                        {"worst_pl", r.worst_pl}};
        suites.push_back(s);
    }
    {
        Suite s{"tail-constants"};
        if (!e.constants) {
            s.skip("infeasible: " + e.infeasible_reason);
        } else {
            const TheoryConstants& k = *e.constants;
            const double slack = k.mu * k.eta - 1.0 - k.b0 * k.c0 * k.eta * k.eta;
            s.expect(slack > 0.0);
            s.expect(k.eta / double(k.t0 + 2) <= 1.0 / k.l1 * (1.0 + 1e-12));
            for (long t = 1; t <= k.T; ++t) {
                const double coef = k.a[std::size_t(t - 1)] + k.b0 * k.c0 * std::pow(k.b[std::size_t(t - 1)], 2);
                s.expect(coef <= 1.0 + 1e-12);
                s.expect(1.0 / k.b0 <= k.k_const * (1.0 + 1e-12));
            }
            s.detail = Json{{"t0", k.t0}, {"K", k.k_const}};
        }
        suites.push_back(s);
    }
    {
        Suite s{"recursions"};
        if (!e.schedule) {
            s.skip(e.schedule_error);
        } else {
            TheoryConstants k;
            k.l1 = e.l1.value;
            long steps = 0;
            for (int r = 0; r < 3; ++r) {
                const Trajectory tr = sgd_run(e.mdp, tau, e.soft, e.theta_init, *e.schedule, config.noise,
                                              std::min(config.T, 2000L), config.base_seed + std::uint64_t(r));
                const RecursionReport rep = check_recursion(tr, k, e.mdp, tau, e.soft);
                s.expect(rep.ok());
                steps += rep.steps_checked;
            }
            s.detail["steps_checked"] = steps;
        }
        suites.push_back(s);
    }
    {
        Suite s{"psi"};
        if (!e.rate_fn) {
            s.skip(e.rate_error);
        } else {
            const RateFunction& rf = *e.rate_fn;
            s.expect(rf.psi(Vector::Zero(e.mdp.dim())) == 0.0);
            double worst = 0.0;
            for (int k = 0; k < 20; ++k) {
                const Vector l = random_retained(e.spec, rng);
                if (auto cf = rf.psi_closed_form(l)) {
                    const double err = rel_err(*cf, rf.psi_quadrature(l));
                    worst = std::max(worst, err);
                    s.expect(err < 1e-8);
                }
                const Vector m = random_retained(e.spec, rng);
                s.expect(rf.psi(0.5 * (l + m)) <= 0.5 * (rf.psi(l) + rf.psi(m)) + 1e-12 * (1.0 + rf.psi(l) + rf.psi(m)));
            }
            s.detail["worst_quadrature_error"] = worst;
        }
        suites.push_back(s);
    }
    {
        Suite s{"rate"};
        if (!e.rate_fn) {
            s.skip(e.rate_error);
        } else {
            const RateFunction& rf = *e.rate_fn;
            s.expect(rf.rate(Vector::Zero(e.mdp.dim())) == 0.0);
            double worst = 0.0;
            for (int k = 0; k < 10; ++k) {
                const Vector x = random_retained(e.spec, rng).normalized();
                const double v = rf.rate(x);
                s.expect(v > 0.0);
                if (rf.is_quadratic()) {
                    const double err = rel_err(rf.rate_numeric(x).value, v);
                    worst = std::max(worst, err);
                    s.expect(err < 1e-6);
                }
            }
            s.detail["worst_conjugate_error"] = worst;
        }
        suites.push_back(s);
    }
    {
        Suite s{"contraction"};
        if (!e.rate_fn) {
            s.skip(e.rate_error);
        } else {
            const RateFunction& rf = *e.rate_fn;
            const ParamMap id = identity_map();
            const ParamMap sc = scale_map(2.0);
            for (int k = 0; k < 5; ++k) {
                const Vector x = random_retained(e.spec, rng);
                s.expect(rel_err(contract_rate(rf, id, x).value, rf.rate(x)) < 1e-9);
                s.expect(rel_err(contract_rate(rf, sc, 2.0 * x).value, rf.rate(x)) < 1e-9);
            }
        }
        suites.push_back(s);
    }

    bool ok = true;
    Json arr = Json::array();
    for (const Suite& s : suites) {
        ok = ok && s.status != "fail";
        arr.push_back(s.json());
    }
    Json j = header(config);
    j["ok"] = ok;
    j["suites"] = arr;
    write_json_file(out_dir / "check.json", j);
    return ok ? kExitOk : kExitInvariant;
}

int cmd_generate(Index n_states, Index n_actions, double discount, std::uint64_t seed, const fs::path& out_file) {
    if (n_states < 1 || n_actions < 1) throw ConfigError("states and actions must be positive");
    if (!(discount > 0.0 && discount < 1.0)) throw ConfigError("discount must be in (0, 1)");
    save_mdp(out_file, random_mdp(n_states, n_actions, discount, seed));
    return kExitOk;
}

int run_command(const std::string& name, const ExperimentConfig& config, const fs::path& out_dir, std::ostream& err) {
    try {
        if (name == "solve") return cmd_solve(config, out_dir);
        if (name == "theory") return cmd_theory(config, out_dir);
        if (name == "simulate") return cmd_simulate(config, out_dir);
        if (name == "rate") return cmd_rate(config, out_dir);
        if (name == "compare") return cmd_compare(config, out_dir);
        if (name == "check") return cmd_check(config, out_dir);
        throw ConfigError("unknown command '" + name + "'");
    } catch (const std::exception& e) {
        err << "ldpg " << name << ": " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace ldpg
