#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ldpg/io.hpp"
#include "ldpg/ldp.hpp"
#include "ldpg/noise.hpp"
#include "ldpg/region.hpp"

namespace ldpg {

/// How t₀ is chosen: the full set of tail-bound constraints, only the
/// step-size bound η_t ≤ 1/L₁, or a fixed value.
enum class T0Mode { Lemma5, StepSize, Fixed };

struct RegionConfig {
    std::string id;
    std::string kind;
    // half-space: explicit normal or an eigen-direction of A_Ψ
    std::optional<Vector> a;
    std::string direction;  // "softest", "stiffest", "eigen:<k>"
    std::optional<double> b;
    std::optional<double> target_rate;  // sets b so that the region rate equals this value
    Vector center;
    double radius = 0.0;
    Vector lo;
    Vector hi;
    std::optional<double> delta;
    std::optional<double> delta_fraction;  // δ as a fraction of gap₁
};

/**
 * Parsed experiment config. `resolved` is the canonical document with every
 * default filled in; its hash (minus output location and worker count) tags
 * every output.
 */
struct ExperimentConfig {
    Json resolved;
    std::string hash;
    std::filesystem::path base_dir;

    // mdp source, exactly one of the three
    std::optional<std::string> mdp_file;
    std::optional<Json> mdp_inline;
    bool mdp_generate = false;
    long gen_states = 2;
    long gen_actions = 2;
    double gen_discount = 0.9;
    std::uint64_t gen_seed = 0;

    double tau = 0.0;
    NoiseModel noise;

    std::optional<double> eta;  // empty: auto
    double eta_margin = 0.1;
    T0Mode t0_mode = T0Mode::Lemma5;
    long t0_fixed = 0;
    double epsilon = 0.1;
    std::optional<double> delta_init;  // empty: measured ‖θ₁ − θ*‖

    std::optional<Table> init_theta;
    double init_offset = 0.5;
    std::uint64_t init_seed = 0;

    double c_universal = 2.0;
    std::optional<double> l1_override;
    int l1_samples = 200;
    double l1_radius = 1.0;
    double l1_safety = 1.5;
    std::uint64_t l1_seed = 0;
    std::optional<double> mu_override;
    double mu_safety = 0.9;

    long T = 1000;
    long M = 1000;
    std::uint64_t base_seed = 0;
    int workers = 0;
    double checkpoint_growth = 1.3;

    std::vector<double> gap_fractions;
    std::vector<RegionConfig> regions;

    PsiMode psi_mode = PsiMode::Leading;
    double null_tol = 1e-8;
    int quad_points = 64;
    double c_delta = 1.0;
    int sphere_samples = 64;
    std::uint64_t residual_seed = 0;
    int region_starts = 16;

    std::vector<std::string> maps;
    std::vector<Vector> rate_points;
    std::vector<Vector> map_points;
    int contract_starts = 4;

    double window_fraction = 0.6;
    long min_count = 10;
    double confidence_level = 1e-3;
    double slack_se = 3.0;

    std::string output_dir = "out";
};

/// Validates the document (unknown keys and wrong types are ConfigErrors)
/// and fills in defaults. Relative mdp file paths resolve against base_dir.
ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Replaces base_seed and refreshes the resolved document and hash.
void override_seed(ExperimentConfig& config, std::uint64_t seed);

/// 64-bit FNV-1a of the compact dump, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
std::string config_hash(const Json& resolved);

std::string to_string(T0Mode mode);

}  // namespace ldpg
