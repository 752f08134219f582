#pragma once

#include "qaction/error.hpp"
#include "qaction/polynomial.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace qaction {

/// Mass, potential and hbar of an action S = int dt (m/2)|xdot|^2 -/+ V(x).
///
/// In 2-D an optional kinetic coupling c adds c * xdot * ydot, i.e. the kinetic term is
/// (1/2) xdot^T M xdot with M = [[m, c], [c, m]]. Classical actions leave it at zero; it exists
/// so that a fitted quantum action can test whether such a term is generated.
class ActionSpec {
public:
    ActionSpec() = default;

    explicit ActionSpec(PolynomialPotential potential, double mass = 1.0, double hbar = 1.0,
                        double kinetic_coupling = 0.0)
        : potential_(std::move(potential)), mass_(mass), hbar_(hbar), coupling_(kinetic_coupling) {
        if (!(mass_ > 0.0) || !std::isfinite(mass_)) throw InputError("mass must be positive");
        if (!(hbar_ > 0.0) || !std::isfinite(hbar_)) throw InputError("hbar must be positive");
        if (coupling_ != 0.0 && potential_.dimension() != 2)
            throw InputError("kinetic coupling requires a 2-D action");
        if (!(std::abs(coupling_) < mass_)) throw InputError("mass matrix must be positive definite");
    }

    const PolynomialPotential& potential() const noexcept { return potential_; }
    double mass() const noexcept { return mass_; }
    double hbar() const noexcept { return hbar_; }
    double kinetic_coupling() const noexcept { return coupling_; }
    int dimension() const noexcept { return potential_.dimension(); }

    ActionSpec with_potential(PolynomialPotential p) const {
        return ActionSpec(std::move(p), mass_, hbar_, coupling_);
    }
    ActionSpec with_mass(double m) const { return ActionSpec(potential_, m, hbar_, coupling_); }

    /// M^{-1} v for the (2-D) mass matrix.
    std::array<double, 2> inverse_mass(double vx, double vy) const noexcept {
        const double det = mass_ * mass_ - coupling_ * coupling_;
        return {(mass_ * vx - coupling_ * vy) / det, (mass_ * vy - coupling_ * vx) / det};
    }

    /// (1/2) v^T M v
    double kinetic_from_velocity(double vx, double vy) const noexcept {
        return 0.5 * (mass_ * (vx * vx + vy * vy)) + coupling_ * vx * vy;
    }

    /// (1/2) p^T M^{-1} p
    double kinetic_from_momentum(double px, double py) const noexcept {
        const auto v = inverse_mass(px, py);
        return 0.5 * (px * v[0] + py * v[1]);
    }

    friend bool operator==(const ActionSpec&, const ActionSpec&) = default;

private:
    PolynomialPotential potential_;
    double mass_ = 1.0;
    double hbar_ = 1.0;
    double coupling_ = 0.0;
};

/// m -> m/alpha, V -> alpha V, T -> T/alpha.
struct ScaleTransform {
    double alpha = 1.0;

    explicit ScaleTransform(double a) : alpha(a) {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("scale factor must be positive");
    }
    ScaleTransform inverse() const { return ScaleTransform(1.0 / alpha); }
};

inline std::pair<ActionSpec, double> apply_scale_transform(const ActionSpec& a, double T,
                                                           ScaleTransform s) {
    return {ActionSpec(a.potential().scaled(s.alpha), a.mass() / s.alpha, a.hbar(),
                       a.kinetic_coupling() / s.alpha),
            T / s.alpha};
}

// JSON: {"mass": f, "hbar": f, "potential": {"dim": d, "terms": [{"exp": [..], "coef": f}]}}

inline nlohmann::json potential_to_json(const PolynomialPotential& p) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : p.terms()) {
        nlohmann::json exp = nlohmann::json::array();
        for (int i = 0; i < p.dimension(); ++i) exp.push_back(t.exponent[i]);
        terms.push_back({{"exp", exp}, {"coef", t.coefficient}});
    }
    return {{"dim", p.dimension()}, {"terms", terms}};
}

inline PolynomialPotential potential_from_json(const nlohmann::json& j,
                                               Confinement confinement = Confinement::unchecked) {
    try {
        const int dim = j.at("dim").get<int>();
        std::vector<PolynomialPotential::Term> terms;
        for (const auto& t : j.at("terms")) {
            const auto& exp = t.at("exp");
            if (!exp.is_array() || static_cast<int>(exp.size()) != dim)
                throw InputError("term exponent arity does not match potential dimension");
            PolynomialPotential::Term term;
            for (int i = 0; i < dim; ++i) term.exponent[i] = exp[i].get<int>();
            term.coefficient = t.at("coef").get<double>();
            terms.push_back(term);
        }
        return PolynomialPotential(dim, std::move(terms), confinement);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed potential: ") + e.what());
    }
}

inline nlohmann::json action_to_json(const ActionSpec& a) {
    nlohmann::json j{{"mass", a.mass()}, {"hbar", a.hbar()}, {"potential", potential_to_json(a.potential())}};
    if (a.kinetic_coupling() != 0.0) j["kinetic_coupling"] = a.kinetic_coupling();
    return j;
}

inline ActionSpec action_from_json(const nlohmann::json& j,
                                   Confinement confinement = Confinement::unchecked) {
    try {
        if (!j.is_object()) throw InputError("action spec must be a JSON object");
        return ActionSpec(potential_from_json(j.at("potential"), confinement), j.value("mass", 1.0),
                          j.value("hbar", 1.0), j.value("kinetic_coupling", 0.0));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed action spec: ") + e.what());
    }
}

} // namespace qaction
