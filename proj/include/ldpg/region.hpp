#pragma once

#include <string>

#include "ldpg/ldp.hpp"

namespace ldpg {

/// Borel set in difference coordinates θ′ = θ − θ*.
struct RegionSpec {
    enum class Kind { HalfSpace, BallComplement, Box, GapSublevelComplement };

    Kind kind = Kind::HalfSpace;
    std::string id;
    Vector a;  // half-space ⟨a, θ′⟩ ≥ b
    double b = 0.0;
    Vector center;  // ball complement ‖θ′ − center‖ ≥ radius
    double radius = 0.0;
    Vector lo;  // box lo ≤ θ′ ≤ hi
    Vector hi;
    double delta = 0.0;  // gap-sublevel complement ½ θ′ᵀ H θ′ ≥ δ
    Matrix hessian;

    static RegionSpec half_space(Vector a, double b, std::string id = "");
    static RegionSpec ball_complement(Vector center, double radius, std::string id = "");
    static RegionSpec box(Vector lo, Vector hi, std::string id = "");
    static RegionSpec gap_sublevel_complement(double delta, Matrix hessian, std::string id = "");

    Index dim() const;
    bool contains(const Vector& theta_prime) const;
    /// True when θ′ = 0 lies in the closure.
    bool closure_contains_origin() const;
    /// A nearest point of the closure (radial for the two complements).
    Vector project(const Vector& x) const;
    std::string kind_name() const;
};

std::string to_string(RegionSpec::Kind kind);
RegionSpec::Kind parse_region_kind(const std::string& name);

struct RegionRateResult {
    double value = 0.0;
    Vector minimizer;
    bool exact = true;
    bool approximate = false;
    std::string method;
};

/**
 * inf of ½ xᵀ M x over the closure intersected with span(basis) (all of
 * ℝ^d when basis is null), M positive semidefinite. Half-space, box and
 * ball use exact constrained-quadratic solutions (closed form, dual
 * coordinate ascent, secular equation); the gap region reduces to the top
 * eigenvalue of the pencil (H, M).
 */
RegionRateResult quadratic_region_rate(const RegionSpec& region, const Matrix& m, const Matrix* basis = nullptr);

/**
 * r = inf of I over the closure intersected with the retained subspace,
 * i.e. the rate of the event {Pθ′ ∈ Θ}. Uses quadratic_region_rate() when
 * Ψ is quadratic, projected multi-start descent otherwise (starts run in
 * parallel and merge to the lowest value, ties to the lower start index).
 */
RegionRateResult region_rate(const RegionSpec& region, const RateFunction& rate_fn, int n_starts = 16,
                             std::uint64_t seed = 0);

/**
 * Gap region with the exact value gap V(θ* + θ′) − V* ≥ δ instead of the
 * quadratic model: the boundary is located by bisection along n_directions
 * rays and the smallest I found is returned, flagged approximate.
 */
RegionRateResult exact_gap_region_rate(double delta, const RateFunction& rate_fn, const Mdp& mdp, double tau,
                                       const SoftSolution& soft, int n_directions, std::uint64_t seed);

}  // namespace ldpg
