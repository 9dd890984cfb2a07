// Acceptance run: one PASS/FAIL line per criterion with the measured
// quantity, its pinned tolerance and the wall time against its budget.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ldpg/commands.hpp"
#include "ldpg/io.hpp"
#include "test_support.hpp"

using namespace ldpg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Case {
    Mdp mdp;
    double tau;
};

// 50 random MDPs: S in 1..5, A in 2..5, γ in [0.8, 0.95], τ in [0.05, 1].
std::vector<Case> corpus() {
    std::vector<Case> out;
    Rng rng = make_rng(20240501);
    std::uniform_int_distribution<int> states(1, 5);
    std::uniform_int_distribution<int> actions(2, 5);
    std::uniform_real_distribution<double> gamma(0.8, 0.95);
    std::uniform_real_distribution<double> tau(0.05, 1.0);
    for (int i = 0; i < 50; ++i) {
        const int s = states(rng);
        const int a = actions(rng);
        const double g = gamma(rng);
        out.push_back({random_mdp(s, a, g, 1000 + std::uint64_t(i)), tau(rng)});
    }
    return out;
}

PolicyParams random_theta(const Mdp& m, Rng& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    PolicyParams p;
    p.theta.resize(m.n_states, m.n_actions);
    for (Index s = 0; s < m.n_states; ++s)
        for (Index a = 0; a < m.n_actions; ++a) p.theta(s, a) = n(rng);
    return p;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome gradient_correctness() {
    double worst = 0.0;
    Rng rng = make_rng(1);
    for (const Case& c : corpus()) {
        for (int k = 0; k < 3; ++k) {
            const PolicyParams th = random_theta(c.mdp, rng, 1.0);
            const Table g = exact_gradient(c.mdp, th, c.tau);
            const Table fd = fd_gradient(c.mdp, th, c.tau);
            worst = std::max(worst, (g - fd).norm() / std::max(g.norm(), 1e-12));
        }
    }
    return {worst < 1e-5, "worst relative error " + fmt("%.2e", worst) + " (tol 1e-5), 50 MDPs x 3 points"};
}

Outcome soft_optimality() {
    double residual = 0.0, stationarity = 0.0, advantage = 0.0;
    for (const Case& c : corpus()) {
        const SoftSolution sol = soft_optimal(c.mdp, c.tau);
        residual = std::max(residual, sol.bellman_residual);
        stationarity = std::max(stationarity, exact_gradient(c.mdp, sol.theta_star, c.tau).cwiseAbs().maxCoeff());
        advantage = std::max(advantage, soft_advantage(c.mdp, sol.theta_star, c.tau).cwiseAbs().maxCoeff());
    }
    const bool ok = residual < 1e-10 && stationarity < 1e-8 && advantage <= 1e-8;
    return {ok, "max residual " + fmt("%.2e", residual) + " (tol 1e-10), max |g(theta*)| " + fmt("%.2e", stationarity) +
                    " (tol 1e-8), max |advantage| " + fmt("%.2e", advantage) + " (tol 1e-8)"};
}

Outcome inequalities() {
    long smooth = 0, grad = 0, pl = 0, samples = 0;
    std::uint64_t seed = 0;
    for (const Case& c : corpus()) {
        const SoftSolution sol = soft_optimal(c.mdp, c.tau);
        const double l1 = estimate_l1(c.mdp, c.tau, sol, 200, 1.0, seed, 1.5).value;
        const InequalityReport r = check_inequalities(c.mdp, c.tau, sol, l1, 1000, 1.0, seed + 7);
        smooth += r.smoothness_violations;
        grad += r.gradient_violations;
        pl += r.pl_violations;
        samples += r.samples;
        ++seed;
    }
    std::ostringstream d;
    d << "violations smoothness=" << smooth << " gradient-bound=" << grad << " PL=" << pl << " over " << samples
      << " points (tol 0)";
    return {smooth == 0 && grad == 0 && pl == 0, d.str()};
}

ExperimentConfig bundled(const std::string& name) { return load_config(test::config_dir() / name); }

Outcome recursions() {
    Json doc = read_json_file(test::config_dir() / "example.json");
    doc["schedule"]["t0"] = "step-size";
    doc["T"] = 5000;
    const Experiment e = prepare_experiment(parse_config(doc, test::config_dir()), true, false);
    TheoryConstants k;
    k.l1 = e.l1.value;
    const StepSchedule& sched = e.require_schedule();
    long steps = 0, gap_v = 0, dist_v = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const Trajectory tr = sgd_run(e.mdp, e.config.tau, e.soft, e.theta_init, sched, e.config.noise, 5000, 500 + i);
        const RecursionReport r = check_recursion(tr, k, e.mdp, e.config.tau, e.soft);
        steps += r.steps_checked;
        gap_v += r.gap_violations;
        dist_v += r.distance_violations;
    }
    std::ostringstream d;
    d << "gap recursion violations=" << gap_v << ", distance recursion violations=" << dist_v << " over " << steps
      << " steps (eta=" << fmt("%.4g", sched.eta) << ", t0=" << sched.t0 << ")";
    return {steps == 100 * 5000 && gap_v == 0 && dist_v == 0, d.str()};
}

Outcome tail_bound() {
    const ExperimentConfig cfg = bundled("tail_bound.json");
    const Experiment e = prepare_experiment(cfg, true, false);
    if (!e.bound_matches_schedule()) return {false, "schedule does not come from the tail-bound constants"};
    EnsembleConfig ec = make_ensemble_config(e);
    const EnsembleStats st = run_ensemble(ec);
    CompareOptions opts;
    opts.confidence_level = cfg.confidence_level;
    const ComparisonReport rep = compare_bounds(st, &*e.constants, nullptr, cfg.hash, opts);
    long informative = 0;
    double worst = -INFINITY;
    for (const BoundCheck& b : rep.bounds) {
        if (b.bound >= 1.0) continue;
        ++informative;
        worst = std::max(worst, b.cp_lower - b.bound);
    }
    std::ostringstream d;
    d << "violations=" << rep.bound_violations << " of " << rep.bounds.size() << " (checkpoint, delta) pairs, "
      << informative << " with bound < 1, M=" << st.n_replicas << ", divergent=" << st.n_divergent
      << ", t0=" << e.constants->t0 << ", K=" << fmt("%.5g", e.constants->k_const)
      << ", max(CP lower - bound) over those=" << fmt("%.3g", worst) << " (CP level 1e-3)";
    return {rep.bound_violations == 0 && !rep.ensemble_flagged && st.n_replicas == 10000, d.str()};
}

struct LdpSetup {
    Mdp mdp;
    SpectralData spec;
    double eta;
};

// Small MDPs with |S|·|A| from 4 to 8 and a step size with 2ηρ_min = 3.
std::vector<LdpSetup> ldp_setups() {
    const int shapes[][2] = {{2, 2}, {2, 3}, {3, 2}, {2, 4}, {4, 2}};
    std::vector<LdpSetup> out;
    std::uint64_t seed = 77;
    for (const auto& sh : shapes) {
        const Mdp m = random_mdp(sh[0], sh[1], 0.9, seed++);
        const double tau = 0.5;
        const SoftSolution sol = soft_optimal(m, tau);
        SpectralData spec = spectral(hessian(m, sol.theta_star, tau));
        const double eta = 1.5 / spec.retained_eigs().minCoeff();
        out.push_back({m, std::move(spec), eta});
    }
    return out;
}

Vector random_retained(const SpectralData& spec, Rng& rng, double scale) {
    std::normal_distribution<double> n(0.0, scale);
    Vector v(spec.dim());
    for (Index i = 0; i < v.size(); ++i) v(i) = n(rng);
    return spec.project(v);
}

Outcome psi_correctness() {
    double worst = 0.0;
    bool zero_ok = true;
    long convex_fail = 0, pairs = 0;
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> sig(0.02, 0.1);
    for (const LdpSetup& s : ldp_setups()) {
        Vector sigmas(s.spec.dim());
        for (Index i = 0; i < sigmas.size(); ++i) sigmas(i) = sig(rng);
        const RateFunction rf(s.spec, NoiseModel::gaussian_diagonal(sigmas), s.eta);
        for (int k = 0; k < 20; ++k) {
            const Vector l = random_retained(s.spec, rng, 5.0);
            const double closed = *rf.psi_closed_form(l);
            worst = std::max(worst, std::abs(rf.psi_quadrature(l) - closed) / closed);
        }
        zero_ok = zero_ok && rf.psi(Vector::Zero(s.spec.dim())) == 0.0;
        const RateFunction trunc(s.spec, NoiseModel::truncated_gaussian(0.05, 0.1), s.eta);
        zero_ok = zero_ok && trunc.psi(Vector::Zero(s.spec.dim())) == 0.0;
        std::vector<Vector> ends;
        for (int k = 0; k < 400; ++k) ends.push_back(random_retained(s.spec, rng, 8.0));
        long fails = 0;
#pragma omp parallel for reduction(+ : fails) schedule(dynamic)
        for (int k = 0; k < 200; ++k) {
            const Vector& a = ends[std::size_t(2 * k)];
            const Vector& b = ends[std::size_t(2 * k + 1)];
            const double mid = trunc.psi(0.5 * (a + b));
            const double avg = 0.5 * (trunc.psi(a) + trunc.psi(b));
            if (mid > avg + 1e-12 * (1.0 + std::abs(avg))) ++fails;
        }
        convex_fail += fails;
        pairs += 200;
    }
    std::ostringstream d;
    d << "closed vs 64-node quadrature worst rel " << fmt("%.2e", worst) << " (tol 1e-8) on 100 lambda, d=4..8; Psi(0)=0 "
      << (zero_ok ? "exact" : "FAILED") << "; midpoint convexity failures " << convex_fail << "/" << pairs;
    return {worst < 1e-8 && zero_ok && convex_fail == 0, d.str()};
}

Outcome rate_correctness() {
    double worst = 0.0;
    bool zero_ok = true;
    long sphere_fail = 0, sphere = 0;
    Rng rng = make_rng(6);
    for (const LdpSetup& s : ldp_setups()) {
        const RateFunction rf(s.spec, NoiseModel::gaussian_isotropic(0.05), s.eta);
        for (int k = 0; k < 20; ++k) {
            const Vector x = random_retained(s.spec, rng, 0.1);
            const double closed = 0.5 * x.dot(rf.a_psi_pinv() * x);
            worst = std::max(worst, std::abs(rf.rate_numeric(x).value - closed) / closed);
        }
        zero_ok = zero_ok && rf.rate(Vector::Zero(s.spec.dim())) == 0.0;
        for (int k = 0; k < 20; ++k, ++sphere) {
            const Vector u = random_retained(s.spec, rng, 1.0).normalized();
            if (!(rf.rate(u) > 0.0)) ++sphere_fail;
        }
    }
    std::ostringstream d;
    d << "numeric conjugate vs closed form worst rel " << fmt("%.2e", worst) << " (tol 1e-6) on 100 points; I(0)=0 "
      << (zero_ok ? "exact" : "FAILED") << "; I<=0 on " << sphere_fail << "/" << sphere << " unit-sphere samples";
    return {worst < 1e-6 && zero_ok && sphere_fail == 0, d.str()};
}

Outcome region_slope() {
    const ExperimentConfig cfg = bundled("region_slope.json");
    const Experiment e = prepare_experiment(cfg, true, true);
    const EnsembleStats st = run_ensemble(make_ensemble_config(e));
    CompareOptions opts;
    opts.slack_se = 3.0;
    const ComparisonReport rep = compare_bounds(st, nullptr, &e.require_rate(), cfg.hash, opts);
    if (rep.regions.size() != 1) return {false, "expected one region monitor"};
    const RegionCheck& r = rep.regions[0];
    std::ostringstream d;
    d << "r=" << fmt("%.6g", r.rate_theory) << ", fitted r_hat=" << fmt("%.6g", r.rate_empirical)
      << ", SE=" << fmt("%.3g", r.slope_se) << ", r_hat - (r - 3 SE)=" << fmt("%.3g", r.margin + 3.0 * r.slope_se)
      << ", M=" << st.n_replicas;
    if (!r.note.empty()) d << " [" << r.note << "]";
    return {r.fit_ok && !r.violated && r.rate_theory > 0.0 && st.n_replicas == 10000, d.str()};
}

Outcome contraction() {
    const Mdp m = test::two_by_two();
    const SoftSolution sol = soft_optimal(m, 0.5);
    const SpectralData spec = spectral(hessian(m, sol.theta_star, 0.5));
    const RateFunction rf(spec, NoiseModel::gaussian_isotropic(0.05), 20.0);
    Rng rng = make_rng(9);
    double worst_exact = 0.0, worst_escort = 0.0, worst_feas = 0.0;
    for (int k = 0; k < 20; ++k) {
        const Vector u = random_retained(spec, rng, 0.1);
        const double i_u = rf.rate(u);
        const double id = contract_rate(rf, identity_map(), u).value;
        const double sc = contract_rate(rf, scale_map(2.5), 2.5 * u).value;
        worst_exact = std::max({worst_exact, std::abs(id - i_u) / i_u, std::abs(sc - i_u) / i_u});
        const Vector w = (u / 2.0).array().exp().matrix();
        const ContractResult inv = contract_rate(rf, softmax_to_escort_map(2.0), w);
        const ContractResult pen = contract_rate(rf, componentwise_exp_map(2.0), w, 4, std::uint64_t(k));
        worst_escort = std::max(worst_escort, std::abs(pen.value - inv.value));
        worst_feas = std::max(worst_feas, pen.feasible ? pen.feasibility : INFINITY);
    }
    std::ostringstream d;
    d << "identity/scale worst rel " << fmt("%.2e", worst_exact) << " (tol 1e-9); escort p=2 penalty vs inverse worst abs "
      << fmt("%.2e", worst_escort) << " (tol 1e-6) on 20 points, penalty feasibility " << fmt("%.1e", worst_feas);
    return {worst_exact < 1e-9 && worst_escort < 1e-6 && std::isfinite(worst_feas), d.str()};
}

Outcome determinism() {
    ExperimentConfig cfg = bundled("example.json");
    const fs::path root = fs::path(LDPG_SCRATCH_DIR) / "acceptance";
    std::vector<fs::path> dirs;
    for (int w : {1, 8}) {
        cfg.workers = w;
        const fs::path out = root / ("workers" + std::to_string(w));
        fs::remove_all(out);
        if (cmd_simulate(cfg, out) != kExitOk) return {false, "simulate failed"};
        dirs.push_back(out);
    }
    long files = 0, differ = 0;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
        ++files;
        if (test::slurp(entry.path()) != test::slurp(dirs[1] / entry.path().filename())) ++differ;
    }
    std::ostringstream d;
    d << differ << " of " << files << " output files differ between 1 and 8 workers (base_seed " << cfg.base_seed
      << ", M=" << cfg.M << ", T=" << cfg.T << ")";
    return {files >= 5 && differ == 0, d.str()};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {1, "gradient-correctness", 30, gradient_correctness},
        {2, "soft-optimality", 30, soft_optimality},
        {3, "inequality-suite", 60, inequalities},
        {4, "pathwise-recursions", 120, recursions},
        {5, "tail-bound-validity", 600, tail_bound},
        {6, "psi-correctness", 10, psi_correctness},
        {7, "rate-function-correctness", 30, rate_correctness},
        {8, "region-slope-consistency", 900, region_slope},
        {9, "contraction-principle", 60, contraction},
        {10, "determinism", 0, determinism},
    };
    int failed = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.budget_s <= 0.0 || secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::string budget = c.budget_s > 0.0 ? fmt(", budget %.0f s", c.budget_s) : std::string();
        std::printf("AC%-2d %s %-27s %s [%.1f s%s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                    budget.c_str(), in_time ? "" : ", OVER BUDGET");
        std::fflush(stdout);
    }
    std::printf("%d/10 criteria passed\n", 10 - failed);
    return failed == 0 ? 0 : 1;
}
