#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"
#include "qaction/optimize.hpp"
#include "qaction/parallel.hpp"
#include "qaction/propagator.hpp"
#include "qaction/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace qaction {

/// Monomials sharing one free coefficient, e.g. {x^2, y^2} for v2 (x^2 + y^2).
struct BasisTerm {
    std::vector<PolynomialPotential::Exponent> monomials;
};

/// Free parameters of a trial quantum action. The constant term is never free: it is fixed from
/// T-stationarity of ln Z after the fit.
struct Ansatz {
    std::vector<BasisTerm> terms;
    bool fit_mass = true;
    /// 2-D only: free kinetic coupling c in T_kin = m(vx^2 + vy^2)/2 + c vx vy.
    bool kinetic_xy = false;

    std::size_t parameter_count() const noexcept {
        return terms.size() + (fit_mass ? 1 : 0) + (kinetic_xy ? 1 : 0);
    }

    /// One free coefficient per non-constant monomial of p.
    static Ansatz from_potential(const PolynomialPotential& p, bool fit_mass = true) {
        Ansatz a;
        a.fit_mass = fit_mass;
        for (const auto& t : p.terms())
            if (t.exponent != PolynomialPotential::Exponent{0, 0}) a.terms.push_back({{t.exponent}});
        return a;
    }

    /// v2 (x^2 + y^2) + v22 x^2 y^2 + v4 (x^4 + y^4)
    static Ansatz symmetric_quartic_2d(bool fit_mass = false) {
        Ansatz a;
        a.fit_mass = fit_mass;
        a.terms = {{{{2, 0}, {0, 2}}}, {{{2, 2}}}, {{{4, 0}, {0, 4}}}};
        return a;
    }
};

struct FitProblem {
    ActionSpec classical;
    double T = 0.0;
    PropagatorTable table;
    Ansatz ansatz;
    /// Nodes per BVP solve; 0 selects a count growing with T.
    int time_nodes = 0;
    unsigned workers = 0;

    const std::vector<BoundaryPair>& pairs() const noexcept { return table.pairs; }

    int bvp_nodes() const noexcept {
        if (time_nodes > 0) return time_nodes;
        const int n = static_cast<int>(std::ceil(64.0 * std::max(T, 1.0)));
        return std::clamp(n + 1 + n % 2, 129, 1025);
    }

    void validate() const {
        if (table.pairs.empty()) throw InputError("fit needs at least one boundary pair");
        if (table.amplitudes.size() != table.pairs.size()) throw InputError("propagator table does not cover all pairs");
        if (!(T > 0.0) || std::abs(T - table.T) > 1e-12 * T) throw InputError("fit time does not match table time");
        if (classical.dimension() != table.dimension()) throw InputError("action and table dimensions differ");
        for (const auto& t : ansatz.terms) {
            if (t.monomials.empty()) throw InputError("empty ansatz term");
            for (const auto& e : t.monomials) {
                if (e[0] < 0 || e[1] < 0) throw InputError("negative exponent in ansatz");
                if (classical.dimension() == 1 && e[1] != 0) throw InputError("ansatz uses y in a 1-D problem");
                if (e == PolynomialPotential::Exponent{0, 0})
                    throw InputError("constant term is fixed by stationarity, not fitted");
            }
        }
        if (ansatz.kinetic_xy && classical.dimension() != 2) throw InputError("kinetic coupling needs 2-D");
    }
};

inline FitProblem make_fit_problem(const ActionSpec& classical, const SpectralPropagator& propagator, double T,
                                   std::vector<BoundaryPair> pairs, Ansatz ansatz, unsigned workers = 0) {
    if (pairs.empty()) throw InputError("fit needs at least one boundary pair");
    FitProblem p{classical, T, propagator.table(pairs, T), std::move(ansatz), 0, workers};
    p.validate();
    return p;
}

/// Per-pair log residuals r_p = ln G_p + Sigma_p / hbar - ln Z of a trial action.
struct ResidualReport {
    double rms = 0.0;
    double log_z = 0.0;
    std::vector<double> per_pair;
    /// Mean over converged pairs of (-hbar d ln G / dT - eps), the T-stationary constant.
    double stationary_constant = 0.0;
    std::vector<std::size_t> failed_pairs;
};

inline constexpr double bvp_failure_penalty = 1e3;

namespace detail {

struct PairEvaluation {
    double sigma = 0.0;
    double energy = 0.0;
    bool ok = false;
};

inline std::vector<PairEvaluation> evaluate_pairs(const ActionSpec& trial, const FitProblem& problem) {
    std::vector<PairEvaluation> out(problem.pairs().size());
    BvpOptions opt;
    opt.time_nodes = problem.bvp_nodes();
    parallel_for(out.size(), problem.workers, [&](std::size_t i) {
        const auto& pr = problem.pairs()[i];
        const auto sol = solve_euclidean_bvp(trial, pr.initial, pr.final, problem.T, opt);
        out[i] = {sol.action, sol.euclidean_energy, sol.converged && std::isfinite(sol.action)};
    });
    return out;
}

inline ResidualReport assemble(const FitProblem& problem, const std::vector<PairEvaluation>& ev,
                               std::optional<double> log_z) {
    const double hbar = problem.classical.hbar();
    ResidualReport rep;
    rep.per_pair.resize(ev.size());
    double sum = 0.0, stat = 0.0;
    std::size_t good = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        if (!ev[i].ok) {
            rep.failed_pairs.push_back(i);
            continue;
        }
        rep.per_pair[i] = std::log(problem.table.amplitudes[i]) + ev[i].sigma / hbar;
        sum += rep.per_pair[i];
        stat += problem.table.local_energies[i] - ev[i].energy;
        ++good;
    }
    rep.log_z = log_z ? *log_z : (good ? sum / static_cast<double>(good) : 0.0);
    rep.stationary_constant = good ? stat / static_cast<double>(good) : 0.0;
    double ss = 0.0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        rep.per_pair[i] = ev[i].ok ? rep.per_pair[i] - rep.log_z : bvp_failure_penalty;
        ss += rep.per_pair[i] * rep.per_pair[i];
    }
    rep.rms = std::sqrt(ss / static_cast<double>(ev.size()));
    return rep;
}

} // namespace detail

/// RMS log residual of `trial` with ln Z eliminated (set to the mean of ln G + Sigma/hbar).
inline ResidualReport fit_residual(const ActionSpec& trial, const FitProblem& problem) {
    problem.validate();
    return detail::assemble(problem, detail::evaluate_pairs(trial, problem), std::nullopt);
}

/// RMS log residual of `trial` at a prescribed ln Z.
inline double fit_residual(const ActionSpec& trial, double log_z, const FitProblem& problem) {
    problem.validate();
    return detail::assemble(problem, detail::evaluate_pairs(trial, problem), log_z).rms;
}

struct FitOptions {
    NelderMeadOptions optimizer{};
    /// Starting point; the classical action when empty.
    std::optional<ActionSpec> start;
};

struct FitResult {
    ActionSpec quantum;
    double T = 0.0;
    double log_z = 0.0;
    double rms_residual = 0.0;
    std::vector<double> per_pair_residuals;
    std::vector<std::size_t> failed_pairs;
    int iterations = 0;
    double simplex_diameter = 0.0;
    bool converged = false;
    bool confining = false;
    bool mass_fitted = true;

    double coefficient(PolynomialPotential::Exponent e) const noexcept { return quantum.potential().coefficient(e); }
};

namespace detail {

/// Maps scaled parameters theta (1 at the classical value) to a trial action.
struct ParameterMap {
    const FitProblem& problem;
    std::vector<double> reference;

    explicit ParameterMap(const FitProblem& p) : problem(p) {
        const auto& pot = p.classical.potential();
        double largest = 0.0;
        for (const auto& t : pot.terms())
            if (t.exponent != PolynomialPotential::Exponent{0, 0}) largest = std::max(largest, std::abs(t.coefficient));
        if (largest == 0.0) largest = 1.0;
        if (p.ansatz.fit_mass) reference.push_back(p.classical.mass());
        for (const auto& term : p.ansatz.terms) {
            const double c = pot.coefficient(term.monomials.front());
            reference.push_back(c != 0.0 ? std::abs(c) : largest);
        }
        if (p.ansatz.kinetic_xy) reference.push_back(p.classical.mass());
    }

    Eigen::VectorXd encode(const ActionSpec& a) const {
        Eigen::VectorXd th(static_cast<Eigen::Index>(reference.size()));
        Eigen::Index k = 0;
        if (problem.ansatz.fit_mass) th[k++] = a.mass();
        for (const auto& term : problem.ansatz.terms) th[k++] = a.potential().coefficient(term.monomials.front());
        if (problem.ansatz.kinetic_xy) th[k++] = a.kinetic_coupling();
        for (Eigen::Index i = 0; i < th.size(); ++i) th[i] /= reference[static_cast<std::size_t>(i)];
        return th;
    }

    /// Empty when theta maps outside the admissible region (non-positive mass matrix).
    std::optional<ActionSpec> decode(const Eigen::VectorXd& th, double mass_fixed, double constant = 0.0) const {
        Eigen::Index k = 0;
        auto next = [&] {
            const double v = th[k] * reference[static_cast<std::size_t>(k)];
            ++k;
            return v;
        };
        const double m = problem.ansatz.fit_mass ? next() : mass_fixed;
        std::vector<PolynomialPotential::Term> terms;
        for (const auto& term : problem.ansatz.terms) {
            const double c = next();
            for (const auto& e : term.monomials) terms.push_back({e, c});
        }
        const double coupling = problem.ansatz.kinetic_xy ? next() : 0.0;
        if (constant != 0.0) terms.push_back({{0, 0}, constant});
        if (!(m > 0.0) || !(std::abs(coupling) < m)) return std::nullopt;
        return ActionSpec(PolynomialPotential(problem.classical.dimension(), std::move(terms), Confinement::unchecked),
                          m, problem.classical.hbar(), coupling);
    }
};

} // namespace detail

/// Global fit of the trial quantum action to the table.
inline FitResult fit_quantum_action(const FitProblem& problem, const FitOptions& options = {}) {
    problem.validate();
    if (problem.pairs().size() < 2 * problem.ansatz.parameter_count())
        throw InputError("need at least two pairs per free parameter");
    const detail::ParameterMap map(problem);
    const ActionSpec start = options.start.value_or(problem.classical);
    if (start.dimension() != problem.classical.dimension()) throw InputError("start action has wrong dimension");
    const double mass_fixed = start.mass();

    auto objective = [&](const Eigen::VectorXd& th) {
        const auto trial = map.decode(th, mass_fixed);
        if (!trial) return 1e12;
        const auto rep = detail::assemble(problem, detail::evaluate_pairs(*trial, problem), std::nullopt);
        return rep.rms * rep.rms;
    };
    const auto best = minimize_nelder_mead(objective, map.encode(start), options.optimizer);

    const auto shape = map.decode(best.argmin, mass_fixed);
    if (!shape) throw NumericalError("optimizer left the admissible parameter region", best.value);
    const auto rep = detail::assemble(problem, detail::evaluate_pairs(*shape, problem), std::nullopt);
    const double v0 = rep.stationary_constant;

    FitResult r;
    r.quantum = *map.decode(best.argmin, mass_fixed, v0);
    r.T = problem.T;
    // Sigma with the constant adds v0 T to every pair; ln Z absorbs it.
    r.log_z = rep.log_z + v0 * problem.T / problem.classical.hbar();
    r.rms_residual = rep.rms;
    r.per_pair_residuals = rep.per_pair;
    r.failed_pairs = rep.failed_pairs;
    r.iterations = best.evaluations;
    r.simplex_diameter = best.diameter;
    r.converged = best.converged && rep.failed_pairs.empty();
    r.confining = r.quantum.potential().is_confining();
    r.mass_fitted = problem.ansatz.fit_mass;
    return r;
}

/// Fits at each T in ascending order, warm-starting from the previous result.
inline std::vector<FitResult> fit_flow(const ActionSpec& classical, const SpectralPropagator& propagator,
                                       const std::vector<BoundaryPair>& pairs, const Ansatz& ansatz,
                                       const std::vector<double>& times, FitOptions options = {},
                                       unsigned workers = 0) {
    if (times.size() < 2) throw InputError("flow needs at least two transition times");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0)) throw InputError("transition time must be positive");
        if (i && times[i] < times[i - 1]) throw InputError("flow times must be ascending");
    }
    std::vector<FitResult> out;
    for (double T : times) {
        const auto problem = make_fit_problem(classical, propagator, T, pairs, ansatz, workers);
        auto r = fit_quantum_action(problem, options);
        options.start = r.quantum;
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::json fit_result_to_json(const FitResult& r) {
    auto j = action_to_json(r.quantum);
    j["T"] = r.T;
    j["logZ"] = r.log_z;
    j["rms_residual"] = r.rms_residual;
    j["converged"] = r.converged;
    j["confining"] = r.confining;
    j["mass_fitted"] = r.mass_fitted;
    j["evaluations"] = r.iterations;
    j["simplex_diameter"] = r.simplex_diameter;
    j["failed_pairs"] = r.failed_pairs;
    // 2 m (V - V0): the only combination fixed by the large-T ground-state relation.
    std::vector<PolynomialPotential::Term> u;
    for (const auto& t : r.quantum.potential().terms())
        if (t.exponent != PolynomialPotential::Exponent{0, 0})
            u.push_back({t.exponent, 2.0 * r.quantum.mass() * t.coefficient});
    j["mass_potential_product"] =
        potential_to_json(PolynomialPotential(r.quantum.dimension(), std::move(u), Confinement::unchecked));
    if (!r.converged) j["warning"] = "optimizer did not reach the simplex tolerance";
    return j;
}

inline FitResult fit_result_from_json(const nlohmann::json& j) {
    try {
        FitResult r;
        r.quantum = action_from_json(j, Confinement::unchecked);
        r.T = j.at("T").get<double>();
        r.log_z = j.at("logZ").get<double>();
        r.rms_residual = j.at("rms_residual").get<double>();
        r.converged = j.value("converged", false);
        r.confining = r.quantum.potential().is_confining();
        r.mass_fitted = j.value("mass_fitted", true);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("fit result: ") + e.what());
    }
}

} // namespace qaction
