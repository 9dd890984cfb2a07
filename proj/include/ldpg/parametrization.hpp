#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "ldpg/types.hpp"

namespace ldpg {

/// Row-wise softmax with max subtraction.
Policy softmax_policy(const PolicyParams& theta);
void softmax_rows(const Table& theta, Table& out);

/// π(a|s) = |w(s,a)|^p / Σ_a' |w(s,a')|^p. Throws DomainError on an all-zero row.
Policy escort_policy(const Table& params, double p);

/**
 * Continuous map between parameter spaces in difference coordinates
 * (u = θ − θ* ↦ w = ω − ω*). The inverse is present only when the map is
 * declared bijective onto its range; the jacobian is optional and falls
 * back to central differences.
 */
struct ParamMap {
    using Fn = std::function<Vector(const Vector&)>;
    using JacFn = std::function<Matrix(const Vector&)>;

    std::string name;
    Fn forward;
    std::optional<Fn> inverse;
    std::optional<JacFn> jacobian;
    std::function<bool(const Vector&)> in_range;  // empty when the range is not characterized
    std::string domain_note;

    bool invertible() const { return inverse.has_value(); }
    Vector apply(const Vector& u) const { return forward(u); }
    Matrix jacobian_at(const Vector& u) const;
};

ParamMap identity_map();
ParamMap scale_map(double k);

/// Positive branch of the softmax → escort correspondence: forward u ↦ exp(u/p),
/// inverse w ↦ p·log w (w > 0).
ParamMap softmax_to_escort_map(double p);

/// Same forward as softmax_to_escort_map but with no registered inverse, so
/// pushforwards go through the penalty solver.
ParamMap componentwise_exp_map(double p);

/// outer ∘ inner. The inverse exists when both parts have one.
ParamMap compose(const ParamMap& outer, const ParamMap& inner);

/**
 * Named map factories. Built-ins: "identity", "scale:<k>", "escort:<p>",
 * "componentwise-exp:<p>". User maps are added with register_map().
 */
class ParamMapRegistry {
public:
    using Factory = std::function<ParamMap(const std::string& arg)>;

    ParamMapRegistry();
    void register_map(const std::string& name, Factory factory);
    ParamMap make(const std::string& spec) const;
    bool contains(const std::string& name) const { return factories_.count(name) > 0; }

private:
    std::map<std::string, Factory> factories_;
};

/// Parses a map spec with the built-in registry.
ParamMap parse_param_map(const std::string& spec);

}  // namespace ldpg
