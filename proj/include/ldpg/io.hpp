#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ldpg/mdp.hpp"

namespace ldpg {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// MDP document: n_states, n_actions, transition [S][A][S], cost [S][A], discount, init_dist [S].
Mdp mdp_from_json(const Json& doc);
Json mdp_to_json(const Mdp& mdp);
Mdp load_mdp(const std::filesystem::path& path);
void save_mdp(const std::filesystem::path& path, const Mdp& mdp);

/// Seeded random MDP: Dirichlet(1) transition rows, costs uniform on [0, 1],
/// ρ a Dirichlet(1) draw mixed half-and-half with the uniform distribution.
Mdp random_mdp(Index n_states, Index n_actions, double discount, std::uint64_t seed);

Json table_to_json(const Table& t);
Table table_from_json(const Json& j, Index rows, Index cols, const std::string& what);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j, const std::string& what);

/// Shortest round-trip decimal form ("%.17g"); non-finite values print as inf/-inf/nan.
std::string format_double(double x);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);
/// Pretty-printed with sorted keys and a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& doc);

}  // namespace ldpg
