#include "ldpg/config.hpp"

#include <cstdio>
#include <set>

namespace ldpg {

namespace {

/// Reads one JSON object, echoing every value (given or default) into `out`
/// and rejecting keys nobody asked for.
class Section {
public:
    Section(const Json& in, Json& out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
        if (!in_.is_null() && !in_.is_object()) throw ConfigError(path_ + " must be an object");
        if (!out_.is_object()) out_ = Json::object();
    }

    bool has(const std::string& key) const { return in_.is_object() && in_.contains(key); }

    const Json& raw(const std::string& key) {
        used_.insert(key);
        return in_.at(key);
    }

    double num(const std::string& key, double def) {
        const double v = has(key) ? as_number(raw(key), key) : def;
        out_[key] = v;
        return v;
    }

    std::optional<double> num_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const double v = as_number(raw(key), key);
        out_[key] = v;
        return v;
    }

    /// A number or the literal `word`; absent means `word`.
    std::optional<double> num_or(const std::string& key, const std::string& word) {
        if (has(key)) {
            const Json& v = raw(key);
            if (v.is_string()) {
                if (v.get<std::string>() != word) throw ConfigError(where(key) + " must be a number or \"" + word + "\"");
            } else {
                const double x = as_number(v, key);
                out_[key] = x;
                return x;
            }
        }
        out_[key] = word;
        return std::nullopt;
    }

    long integer(const std::string& key, long def) {
        long v = def;
        if (has(key)) {
            const Json& j = raw(key);
            if (!j.is_number_integer()) throw ConfigError(where(key) + " must be an integer");
            v = j.get<long>();
        }
        out_[key] = v;
        return v;
    }

    std::uint64_t seed(const std::string& key, std::uint64_t def) {
        std::uint64_t v = def;
        if (has(key)) {
            const Json& j = raw(key);
            if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)) {
                throw ConfigError(where(key) + " must be a non-negative integer");
            }
            v = j.get<std::uint64_t>();
        }
        out_[key] = v;
        return v;
    }

    std::string str(const std::string& key, const std::string& def) {
        std::string v = def;
        if (has(key)) {
            const Json& j = raw(key);
            if (!j.is_string()) throw ConfigError(where(key) + " must be a string");
            v = j.get<std::string>();
        }
        out_[key] = v;
        return v;
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (has(key)) {
            const Json& j = raw(key);
            if (!j.is_array()) throw ConfigError(where(key) + " must be an array of numbers");
            def.clear();
            for (const Json& e : j) def.push_back(as_number(e, key));
        }
        out_[key] = def;
        return def;
    }

    std::optional<Vector> vec_opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        Vector v = vector_from_json(raw(key), where(key));
        out_[key] = vector_to_json(v);
        return v;
    }

    Json& out() { return out_; }
    std::string where(const std::string& key) const { return path_ + "." + key; }

    void done() const {
        if (!in_.is_object()) return;
        for (auto it = in_.begin(); it != in_.end(); ++it) {
            if (!used_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
        }
    }

private:
    double as_number(const Json& j, const std::string& key) const {
        if (!j.is_number()) throw ConfigError(where(key) + " must be a number");
        return j.get<double>();
    }

    const Json& in_;
    Json& out_;
    std::string path_;
    std::set<std::string> used_;
};

const Json kEmpty = Json::object();

void require_positive(double v, const std::string& what) {
    if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

Table nested_table(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ConfigError(what + " must be a non-empty array of rows");
    return table_from_json(j, Index(j.size()), Index(j[0].size()), what);
}

NoiseModel parse_noise(const Json& in, Json& out) {
    Section s(in, out, "noise");
    const std::string kind = s.str("kind", "gaussian-isotropic");
    NoiseModel model;
    if (kind == "gaussian-isotropic") {
        const double sigma = s.num("sigma", 0.05);
        if (sigma < 0.0) throw ConfigError("noise.sigma must be non-negative");
        model = NoiseModel::gaussian_isotropic(sigma);
    } else if (kind == "gaussian-diagonal") {
        const std::optional<Vector> sigmas = s.vec_opt("sigmas");
        if (!sigmas) throw ConfigError("noise.sigmas is required for gaussian-diagonal");
        if ((sigmas->array() < 0.0).any()) throw ConfigError("noise.sigmas must be non-negative");
        model = NoiseModel::gaussian_diagonal(*sigmas);
    } else if (kind == "truncated-gaussian") {
        const double sigma = s.num("sigma", 0.05);
        const double radius = s.num("radius", 0.15);
        require_positive(sigma, "noise.sigma");
        require_positive(radius, "noise.radius");
        model = NoiseModel::truncated_gaussian(sigma, radius);
    } else if (kind == "trajectory-estimator") {
        const long n = s.integer("n_rollouts", 16);
        const long h = s.integer("horizon", 50);
        if (n < 1 || h < 1) throw ConfigError("noise.n_rollouts and noise.horizon must be positive");
        model = NoiseModel::trajectory_estimator(int(n), int(h));
    } else {
        throw ConfigError("unknown noise.kind '" + kind + "'");
    }
    s.done();
    return model;
}

RegionConfig parse_region(const Json& in, Json& out, std::size_t index) {
    const std::string path = "monitors.regions[" + std::to_string(index) + "]";
    Section s(in, out, path);
    RegionConfig r;
    r.id = s.str("id", "");
    if (r.id.empty()) throw ConfigError(path + ".id is required");
    r.kind = s.str("kind", "");
    parse_region_kind(r.kind);
    if (r.kind == "half-space") {
        r.a = s.vec_opt("a");
        if (!r.a) r.direction = s.str("direction", "softest");
        r.b = s.num_opt("b");
        r.target_rate = s.num_opt("target_rate");
        if (r.b.has_value() == r.target_rate.has_value()) throw ConfigError(path + " needs exactly one of b, target_rate");
        if (r.target_rate && !(*r.target_rate > 0.0)) throw ConfigError(path + ".target_rate must be positive");
    } else if (r.kind == "ball-complement") {
        if (auto c = s.vec_opt("center")) r.center = *c;
        r.radius = s.num("radius", 0.0);
        require_positive(r.radius, path + ".radius");
    } else if (r.kind == "box") {
        auto lo = s.vec_opt("lo");
        auto hi = s.vec_opt("hi");
        if (!lo || !hi || lo->size() != hi->size()) throw ConfigError(path + " needs lo and hi of equal length");
        if ((lo->array() > hi->array()).any()) throw ConfigError(path + " has lo > hi");
        r.lo = *lo;
        r.hi = *hi;
    } else {
        r.delta = s.num_opt("delta");
        r.delta_fraction = s.num_opt("delta_fraction");
        if (r.delta.has_value() == r.delta_fraction.has_value()) {
            throw ConfigError(path + " needs exactly one of delta, delta_fraction");
        }
    }
    s.done();
    return r;
}

void parse_mdp_source(const Json& in, Json& out, ExperimentConfig& c) {
    Section s(in, out, "mdp");
    int given = 0;
    if (s.has("file")) {
        ++given;
        c.mdp_file = s.str("file", "");
    }
    if (s.has("inline")) {
        ++given;
        c.mdp_inline = s.raw("inline");
        mdp_from_json(*c.mdp_inline);
        s.out()["inline"] = *c.mdp_inline;
    }
    if (s.has("generate")) {
        ++given;
        c.mdp_generate = true;
        Section g(s.raw("generate"), s.out()["generate"], "mdp.generate");
        c.gen_states = g.integer("n_states", 2);
        c.gen_actions = g.integer("n_actions", 2);
        c.gen_discount = g.num("discount", 0.9);
        c.gen_seed = g.seed("seed", 0);
        if (c.gen_states < 1 || c.gen_actions < 1) throw ConfigError("mdp.generate dimensions must be positive");
        if (!(c.gen_discount > 0.0 && c.gen_discount < 1.0)) throw ConfigError("mdp.generate.discount must be in (0, 1)");
        g.done();
    }
    if (given != 1) throw ConfigError("mdp needs exactly one of file, inline, generate");
    s.done();
}

void parse_all(const Json& doc, ExperimentConfig& c) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    Json& r = c.resolved;
    r = Json::object();
    Section top(doc, r, "config");

    if (!top.has("mdp")) throw ConfigError("config.mdp is required");
    parse_mdp_source(top.raw("mdp"), r["mdp"], c);

    if (!top.has("tau")) throw ConfigError("config.tau is required");
    c.tau = top.num("tau", 0.0);
    require_positive(c.tau, "tau");

    c.noise = parse_noise(top.has("noise") ? top.raw("noise") : kEmpty, r["noise"]);

    {
        Section s(top.has("schedule") ? top.raw("schedule") : kEmpty, r["schedule"], "schedule");
        c.eta = s.num_or("eta", "auto");
        if (c.eta) require_positive(*c.eta, "schedule.eta");
        c.eta_margin = s.num("eta_margin", 0.1);
        if (c.eta_margin < 0.0) throw ConfigError("schedule.eta_margin must be non-negative");
        if (s.has("t0") && s.raw("t0").is_number_integer()) {
            c.t0_mode = T0Mode::Fixed;
            c.t0_fixed = s.integer("t0", 0);
            if (c.t0_fixed < 0) throw ConfigError("schedule.t0 must be non-negative");
        } else {
            const std::string m = s.str("t0", "lemma5");
            if (m == "lemma5") {
                c.t0_mode = T0Mode::Lemma5;
            } else if (m == "step-size") {
                c.t0_mode = T0Mode::StepSize;
            } else {
                throw ConfigError("schedule.t0 must be an integer, \"lemma5\" or \"step-size\"");
            }
        }
        c.epsilon = s.num("epsilon", 0.1);
        if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ConfigError("schedule.epsilon must be in (0, 1)");
        c.delta_init = s.num_or("delta_init", "auto");
        if (c.delta_init && *c.delta_init < 0.0) throw ConfigError("schedule.delta_init must be non-negative");
        s.done();
    }
    {
        Section s(top.has("init") ? top.raw("init") : kEmpty, r["init"], "init");
        if (s.has("theta")) {
            c.init_theta = nested_table(s.raw("theta"), "init.theta");
            s.out()["theta"] = table_to_json(*c.init_theta);
        } else {
            c.init_offset = s.num("offset", 0.5);
            if (c.init_offset < 0.0) throw ConfigError("init.offset must be non-negative");
            c.init_seed = s.seed("seed", 0);
        }
        s.done();
    }
    {
        Section s(top.has("theory") ? top.raw("theory") : kEmpty, r["theory"], "theory");
        c.c_universal = s.num("C", 2.0);
        require_positive(c.c_universal, "theory.C");
        c.l1_override = s.num_or("L1", "estimate");
        if (c.l1_override) require_positive(*c.l1_override, "theory.L1");
        c.l1_samples = int(s.integer("l1_samples", 200));
        if (c.l1_samples < 0) throw ConfigError("theory.l1_samples must be non-negative");
        c.l1_radius = s.num("l1_radius", 1.0);
        if (c.l1_radius < 0.0) throw ConfigError("theory.l1_radius must be non-negative");
        c.l1_safety = s.num("l1_safety", 1.5);
        if (c.l1_safety < 1.0) throw ConfigError("theory.l1_safety must be at least 1");
        c.l1_seed = s.seed("l1_seed", 0);
        c.mu_override = s.num_or("mu", "prepass");
        if (c.mu_override) require_positive(*c.mu_override, "theory.mu");
        c.mu_safety = s.num("mu_safety", 0.9);
        if (!(c.mu_safety > 0.0 && c.mu_safety <= 1.0)) throw ConfigError("theory.mu_safety must be in (0, 1]");
        s.done();
    }

    c.T = top.integer("T", 1000);
    c.M = top.integer("M", 1000);
    if (c.T < 1 || c.M < 1) throw ConfigError("T and M must be positive");
    c.base_seed = top.seed("base_seed", 0);
    c.workers = int(top.integer("workers", 0));
    if (c.workers < 0) throw ConfigError("workers must be non-negative");

    {
        Section s(top.has("checkpoints") ? top.raw("checkpoints") : kEmpty, r["checkpoints"], "checkpoints");
        c.checkpoint_growth = s.num("growth", 1.3);
        if (!(c.checkpoint_growth > 1.0)) throw ConfigError("checkpoints.growth must exceed 1");
        s.done();
    }
    {
        Section s(top.has("monitors") ? top.raw("monitors") : kEmpty, r["monitors"], "monitors");
        c.gap_fractions = s.numbers("gap_fractions", {0.01, 0.05, 0.1});
        for (double f : c.gap_fractions) require_positive(f, "monitors.gap_fractions entries");
        Json regions = Json::array();
        if (s.has("regions")) {
            const Json& arr = s.raw("regions");
            if (!arr.is_array()) throw ConfigError("monitors.regions must be an array");
            std::set<std::string> ids;
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Json o = Json::object();
                c.regions.push_back(parse_region(arr[i], o, i));
                if (!ids.insert(c.regions.back().id).second) {
                    throw ConfigError("duplicate region id '" + c.regions.back().id + "'");
                }
                regions.push_back(o);
            }
        }
        s.out()["regions"] = regions;
        s.done();
    }
    {
        Section s(top.has("ldp") ? top.raw("ldp") : kEmpty, r["ldp"], "ldp");
        c.psi_mode = parse_psi_mode(s.str("psi_mode", "leading"));
        c.null_tol = s.num("null_tol", 1e-8);
        require_positive(c.null_tol, "ldp.null_tol");
        c.quad_points = int(s.integer("quad_points", 64));
        if (c.quad_points < 2) throw ConfigError("ldp.quad_points must be at least 2");
        c.c_delta = s.num("c_delta", 1.0);
        require_positive(c.c_delta, "ldp.c_delta");
        c.sphere_samples = int(s.integer("sphere_samples", 64));
        if (c.sphere_samples < 1) throw ConfigError("ldp.sphere_samples must be positive");
        c.residual_seed = s.seed("residual_seed", 0);
        c.region_starts = int(s.integer("region_starts", 16));
        if (c.region_starts < 1) throw ConfigError("ldp.region_starts must be positive");
        s.done();
    }
    {
        Json maps = Json::array();
        if (top.has("maps")) {
            const Json& arr = top.raw("maps");
            if (!arr.is_array()) throw ConfigError("maps must be an array of strings");
            for (const Json& m : arr) {
                if (!m.is_string()) throw ConfigError("maps must be an array of strings");
                parse_param_map(m.get<std::string>());
                c.maps.push_back(m.get<std::string>());
                maps.push_back(m);
            }
        }
        r["maps"] = maps;
    }
    {
        Section s(top.has("rate") ? top.raw("rate") : kEmpty, r["rate"], "rate");
        auto read_points = [&](const char* key, std::vector<Vector>& dst) {
            Json arr = Json::array();
            if (s.has(key)) {
                const Json& in = s.raw(key);
                if (!in.is_array()) throw ConfigError(s.where(key) + " must be an array of vectors");
                for (const Json& p : in) {
                    dst.push_back(vector_from_json(p, s.where(key)));
                    arr.push_back(vector_to_json(dst.back()));
                }
            }
            s.out()[key] = arr;
        };
        read_points("points", c.rate_points);
        read_points("map_points", c.map_points);
        c.contract_starts = int(s.integer("contract_starts", 4));
        if (c.contract_starts < 1) throw ConfigError("rate.contract_starts must be positive");
        s.done();
    }
    {
        Section s(top.has("fit") ? top.raw("fit") : kEmpty, r["fit"], "fit");
        c.window_fraction = s.num("window_fraction", 0.6);
        if (!(c.window_fraction > 0.0 && c.window_fraction <= 1.0)) throw ConfigError("fit.window_fraction must be in (0, 1]");
        c.min_count = s.integer("min_count", 10);
        if (c.min_count < 1) throw ConfigError("fit.min_count must be positive");
        s.done();
    }
    {
        Section s(top.has("compare") ? top.raw("compare") : kEmpty, r["compare"], "compare");
        c.confidence_level = s.num("confidence", 1e-3);
        if (!(c.confidence_level > 0.0 && c.confidence_level < 1.0)) throw ConfigError("compare.confidence must be in (0, 1)");
        c.slack_se = s.num("slack_se", 3.0);
        if (c.slack_se < 0.0) throw ConfigError("compare.slack_se must be non-negative");
        s.done();
    }
    c.output_dir = top.str("output", "out");
    top.done();
    c.hash = config_hash(r);
}

}  // namespace

std::string to_string(T0Mode mode) {
    switch (mode) {
        case T0Mode::Lemma5: return "lemma5";
        case T0Mode::StepSize: return "step-size";
        case T0Mode::Fixed: return "fixed";
    }
    return "unknown";
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const Json& resolved) {
    Json copy = resolved;
    copy.erase("output");
    copy.erase("workers");
    return fnv1a_hex(copy.dump());
}

ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    c.base_dir = base_dir;
    try {
        parse_all(doc, c);
    } catch (const ConfigError&) {
        throw;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_json_file(path), path.parent_path());
}

void override_seed(ExperimentConfig& config, std::uint64_t seed) {
    config.base_seed = seed;
    config.resolved["base_seed"] = seed;
    config.hash = config_hash(config.resolved);
}

}  // namespace ldpg
