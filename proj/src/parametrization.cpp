#include "ldpg/parametrization.hpp"

#include <cmath>
#include <sstream>

namespace ldpg {

void softmax_rows(const Table& theta, Table& out) {
    out.resize(theta.rows(), theta.cols());
    for (Index s = 0; s < theta.rows(); ++s) {
        const double m = theta.row(s).maxCoeff();
        double z = 0.0;
        for (Index a = 0; a < theta.cols(); ++a) {
            out(s, a) = std::exp(theta(s, a) - m);
            z += out(s, a);
        }
        out.row(s) /= z;
    }
}

Policy softmax_policy(const PolicyParams& theta) {
    Policy pi;
    softmax_rows(theta.theta, pi.probs);
    return pi;
}

Policy escort_policy(const Table& params, double p) {
    if (p < 1.0) throw DomainError("escort exponent must be >= 1");
    Policy pi;
    pi.probs.resize(params.rows(), params.cols());
    for (Index s = 0; s < params.rows(); ++s) {
        // Scale by the row max first so |w|^p does not overflow.
        const double scale = params.row(s).cwiseAbs().maxCoeff();
        if (!(scale > 0.0)) {
            std::ostringstream msg;
            msg << "escort_policy: row " << s << " has no nonzero entry";
            throw DomainError(msg.str());
        }
        double z = 0.0;
        for (Index a = 0; a < params.cols(); ++a) {
            pi.probs(s, a) = std::pow(std::abs(params(s, a)) / scale, p);
            z += pi.probs(s, a);
        }
        pi.probs.row(s) /= z;
    }
    return pi;
}

Matrix ParamMap::jacobian_at(const Vector& u) const {
    if (jacobian) return (*jacobian)(u);
    const Vector f0 = forward(u);
    Matrix jac(f0.size(), u.size());
    Vector x = u;
    for (Index j = 0; j < u.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(u(j)));
        x(j) = u(j) + h;
        const Vector fp = forward(x);
        x(j) = u(j) - h;
        const Vector fm = forward(x);
        x(j) = u(j);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

ParamMap identity_map() {
    ParamMap m;
    m.name = "identity";
    m.forward = [](const Vector& u) { return u; };
    m.inverse = [](const Vector& w) { return w; };
    m.jacobian = [](const Vector& u) { return Matrix::Identity(u.size(), u.size()); };
    m.domain_note = "all of R^d";
    return m;
}

ParamMap scale_map(double k) {
    if (k == 0.0 || !std::isfinite(k)) throw DomainError("scale map needs a finite nonzero factor");
    ParamMap m;
    std::ostringstream name;
    name << "scale:" << k;
    m.name = name.str();
    m.forward = [k](const Vector& u) { return Vector(k * u); };
    m.inverse = [k](const Vector& w) { return Vector(w / k); };
    m.jacobian = [k](const Vector& u) { return Matrix(k * Matrix::Identity(u.size(), u.size())); };
    m.domain_note = "all of R^d";
    return m;
}

namespace {

Vector exp_forward(const Vector& u, double p) { return (u.array() / p).exp().matrix(); }

Matrix exp_jacobian(const Vector& u, double p) {
    return ((u.array() / p).exp() / p).matrix().asDiagonal();
}

}  // namespace

ParamMap softmax_to_escort_map(double p) {
    if (!(p >= 1.0)) throw DomainError("escort exponent must be >= 1");
    ParamMap m;
    std::ostringstream name;
    name << "escort:" << p;
    m.name = name.str();
    m.forward = [p](const Vector& u) { return exp_forward(u, p); };
    m.inverse = [p](const Vector& w) {
        if ((w.array() <= 0.0).any()) throw DomainError("escort inverse needs a strictly positive argument");
        return Vector(p * w.array().log().matrix());
    };
    m.jacobian = [p](const Vector& u) { return exp_jacobian(u, p); };
    m.in_range = [](const Vector& w) { return (w.array() > 0.0).all(); };
    m.domain_note = "positive orthant (positive branch of |w|^p)";
    return m;
}

ParamMap componentwise_exp_map(double p) {
    if (!(p >= 1.0)) throw DomainError("exponent must be >= 1");
    ParamMap m;
    std::ostringstream name;
    name << "componentwise-exp:" << p;
    m.name = name.str();
    m.forward = [p](const Vector& u) { return exp_forward(u, p); };
    m.jacobian = [p](const Vector& u) { return exp_jacobian(u, p); };
    m.in_range = [](const Vector& w) { return (w.array() > 0.0).all(); };
    m.domain_note = "range is the positive orthant; no inverse registered";
    return m;
}

ParamMap compose(const ParamMap& outer, const ParamMap& inner) {
    ParamMap m;
    m.name = outer.name + "∘" + inner.name;
    m.forward = [outer, inner](const Vector& u) { return outer.forward(inner.forward(u)); };
    if (outer.inverse && inner.inverse) {
        auto oi = *outer.inverse;
        auto ii = *inner.inverse;
        m.inverse = [oi, ii](const Vector& w) { return ii(oi(w)); };
    }
    m.jacobian = [outer, inner](const Vector& u) {
        return Matrix(outer.jacobian_at(inner.forward(u)) * inner.jacobian_at(u));
    };
    m.domain_note = inner.domain_note + "; then " + outer.domain_note;
    return m;
}

namespace {

double parse_number(const std::string& arg, const std::string& spec) {
    try {
        std::size_t used = 0;
        const double v = std::stod(arg, &used);
        if (used != arg.size()) throw std::invalid_argument(arg);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric argument in map spec '" + spec + "'");
    }
}

}  // namespace

ParamMapRegistry::ParamMapRegistry() {
    factories_["identity"] = [](const std::string&) { return identity_map(); };
    factories_["scale"] = [](const std::string& arg) { return scale_map(parse_number(arg, "scale:" + arg)); };
    factories_["escort"] = [](const std::string& arg) {
        return softmax_to_escort_map(parse_number(arg, "escort:" + arg));
    };
    factories_["componentwise-exp"] = [](const std::string& arg) {
        return componentwise_exp_map(parse_number(arg, "componentwise-exp:" + arg));
    };
}

void ParamMapRegistry::register_map(const std::string& name, Factory factory) {
    factories_[name] = std::move(factory);
}

ParamMap ParamMapRegistry::make(const std::string& spec) const {
    const auto colon = spec.find(':');
    const std::string name = spec.substr(0, colon);
    const std::string arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ConfigError("unknown parameter map '" + spec + "'");
    return it->second(arg);
}

ParamMap parse_param_map(const std::string& spec) {
    static const ParamMapRegistry registry;
    return registry.make(spec);
}

}  // namespace ldpg
