#include "ldpg/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ldpg {

namespace {

template <typename T>
T get_field(const Json& doc, const char* key) {
    if (!doc.contains(key)) throw ConfigError(std::string("MDP document is missing '") + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("MDP field '") + key + "': " + e.what());
    }
}

}  // namespace

Json table_to_json(const Table& t) {
    Json rows = Json::array();
    for (Index i = 0; i < t.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < t.cols(); ++j) row.push_back(t(i, j));
        rows.push_back(row);
    }
    return rows;
}

Table table_from_json(const Json& j, Index rows, Index cols, const std::string& what) {
    if (!j.is_array() || Index(j.size()) != rows) throw ConfigError(what + " must have " + std::to_string(rows) + " rows");
    Table t(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const Json& row = j[std::size_t(i)];
        if (!row.is_array() || Index(row.size()) != cols) {
            throw ConfigError(what + " row " + std::to_string(i) + " must have " + std::to_string(cols) + " entries");
        }
        for (Index k = 0; k < cols; ++k) {
            if (!row[std::size_t(k)].is_number()) throw ConfigError(what + " entries must be numbers");
            t(i, k) = row[std::size_t(k)].get<double>();
        }
    }
    return t;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ConfigError(what + " must be an array of numbers");
    Vector v(Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(what + " must be an array of numbers");
        v(Index(i)) = j[i].get<double>();
    }
    return v;
}

Mdp mdp_from_json(const Json& doc) {
    if (!doc.is_object()) throw ConfigError("MDP document must be a JSON object");
    Mdp m;
    m.n_states = get_field<long>(doc, "n_states");
    m.n_actions = get_field<long>(doc, "n_actions");
    if (m.n_states < 1 || m.n_actions < 1) throw ConfigError("n_states and n_actions must be positive");
    m.discount = get_field<double>(doc, "discount");
    const Json& tr = doc.at("transition");
    if (!tr.is_array() || Index(tr.size()) != m.n_states) throw ConfigError("transition must have n_states blocks");
    m.transition.resize(m.dim(), m.n_states);
    for (Index s = 0; s < m.n_states; ++s) {
        const Table block = table_from_json(tr[std::size_t(s)], m.n_actions, m.n_states, "transition block");
        for (Index a = 0; a < m.n_actions; ++a) m.transition.row(m.row(s, a)) = block.row(a);
    }
    if (!doc.contains("cost")) throw ConfigError("MDP document is missing 'cost'");
    m.cost = table_from_json(doc.at("cost"), m.n_states, m.n_actions, "cost");
    if (!doc.contains("init_dist")) throw ConfigError("MDP document is missing 'init_dist'");
    m.init_dist = vector_from_json(doc.at("init_dist"), "init_dist");
    if (m.init_dist.size() != m.n_states) throw ConfigError("init_dist must have n_states entries");
    return m;
}

Json mdp_to_json(const Mdp& m) {
    Json doc;
    doc["n_states"] = m.n_states;
    doc["n_actions"] = m.n_actions;
    doc["discount"] = m.discount;
    Json tr = Json::array();
    for (Index s = 0; s < m.n_states; ++s) {
        tr.push_back(table_to_json(m.transition.middleRows(m.row(s, 0), m.n_actions)));
    }
    doc["transition"] = tr;
    doc["cost"] = table_to_json(m.cost);
    doc["init_dist"] = vector_to_json(m.init_dist);
    return doc;
}

Mdp load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

void save_mdp(const std::filesystem::path& path, const Mdp& mdp) { write_json_file(path, mdp_to_json(mdp)); }

Mdp random_mdp(Index n_states, Index n_actions, double discount, std::uint64_t seed) {
    if (n_states < 1 || n_actions < 1) throw DomainError("random_mdp needs positive dimensions");
    Rng rng = make_rng(seed);
    std::exponential_distribution<double> expo(1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Mdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.discount = discount;
    m.transition.resize(n_states * n_actions, n_states);
    for (Index r = 0; r < m.transition.rows(); ++r) {
        for (Index s = 0; s < n_states; ++s) m.transition(r, s) = expo(rng);
        m.transition.row(r) /= m.transition.row(r).sum();
    }
    m.cost.resize(n_states, n_actions);
    for (Index s = 0; s < n_states; ++s) {
        for (Index a = 0; a < n_actions; ++a) m.cost(s, a) = unif(rng);
    }
    m.init_dist.resize(n_states);
    for (Index s = 0; s < n_states; ++s) m.init_dist(s) = expo(rng);
    m.init_dist /= m.init_dist.sum();
    m.init_dist = 0.5 * m.init_dist + Vector::Constant(n_states, 0.5 / double(n_states));
    return m;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const Json& doc) { write_text_file(path, doc.dump(2) + "\n"); }

}  // namespace ldpg
