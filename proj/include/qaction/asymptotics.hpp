#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"
#include "qaction/grid.hpp"
#include "qaction/hamiltonian.hpp"
#include "qaction/polynomial.hpp"
#include "qaction/spectral.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace qaction {

enum class GroundStateSource { spectral, quantum_action };

struct GroundStateInfo {
    Grid grid;
    double energy = 0.0;
    /// L2-normalised (trapezoidal) and non-negative.
    std::vector<double> wavefunction;
    GroundStateSource source = GroundStateSource::spectral;
    /// Position of the quantum-potential minimum (quantum-action source) or of the peak.
    double centre = 0.0;
};

namespace detail {

inline double trapezoid_norm2(const std::vector<double>& f, double h) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (i == 0 || i + 1 == f.size() ? 0.5 : 1.0) * f[i] * f[i];
    return s * h;
}

inline void normalise(std::vector<double>& f, double h) {
    const double n = std::sqrt(trapezoid_norm2(f, h));
    if (!(n > 0.0)) throw NumericalError("cannot normalise a vanishing wavefunction", n);
    for (auto& v : f) v /= n;
}

/// exp(-|int_{x0}^{x} k(s) ds| / hbar) on every grid node, by Gauss-Kronrod on each cell.
inline std::vector<double> exponential_profile(const Grid& g, double x0, double hbar,
                                               const std::function<double(double)>& k) {
    using boost::math::quadrature::gauss_kronrod;
    const int n = g.points();
    auto segment = [&](double a, double b) {
        if (a == b) return 0.0;
        return gauss_kronrod<double, 15>::integrate(k, a, b, 8, 1e-13);
    };
    std::vector<double> phase(static_cast<std::size_t>(n), 0.0);
    const int right = static_cast<int>(std::ceil((x0 + g.half_width()) / g.spacing() - 1e-12));
    const int start = std::clamp(right, 0, n);
    double acc = 0.0, prev = x0;
    for (int i = start; i < n; ++i) {
        acc += segment(prev, g.coordinate(i));
        prev = g.coordinate(i);
        phase[static_cast<std::size_t>(i)] = acc;
    }
    acc = 0.0;
    prev = x0;
    for (int i = start - 1; i >= 0; --i) {
        acc += segment(g.coordinate(i), prev);
        prev = g.coordinate(i);
        phase[static_cast<std::size_t>(i)] = acc;
    }
    std::vector<double> psi(phase.size());
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = std::exp(-phase[i] / hbar);
    return psi;
}

inline PotentialMinimum quantum_minimum(const ActionSpec& q) {
    if (q.dimension() != 1) throw InputError("ground-state relations are implemented in 1-D only");
    if (!q.potential().is_confining()) throw DomainError("quantum potential is not confining");
    return minimize_potential(q.potential());
}

} // namespace detail

/// E_gr = min V~ and psi_gr = N exp(-int sqrt(2 m~ (V~ - V~min)) dx / hbar) from the minimum.
inline GroundStateInfo ground_state_from_quantum_action(const ActionSpec& q, const Grid& grid) {
    if (grid.dimension() != 1) throw InputError("ground-state extraction needs a 1-D grid");
    const auto min = detail::quantum_minimum(q);
    const double x0 = min.position[0];
    const auto& v = q.potential();
    const double two_m = 2.0 * q.mass();
    auto k = [&](double x) { return std::sqrt(std::max(0.0, two_m * (v(x) - min.value))); };
    GroundStateInfo info{grid, min.value, detail::exponential_profile(grid, x0, q.hbar(), k),
                         GroundStateSource::quantum_action, x0};
    detail::normalise(info.wavefunction, grid.spacing());
    return info;
}

/// Lowest eigenpair of the grid Hamiltonian, as a GroundStateInfo.
inline GroundStateInfo spectral_ground_state(const ActionSpec& a, const Grid& grid) {
    const auto s = spectral_decompose(GridHamiltonian(a, grid), 1);
    GroundStateInfo info{grid, s.ground_energy(), {}, GroundStateSource::spectral, 0.0};
    info.wavefunction.resize(grid.size());
    std::size_t peak = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        info.wavefunction[i] = std::abs(s.eigenvectors(static_cast<Eigen::Index>(i), 0));
        if (info.wavefunction[i] > info.wavefunction[peak]) peak = i;
    }
    info.centre = grid.coordinate(static_cast<int>(peak));
    detail::normalise(info.wavefunction, grid.spacing());
    return info;
}

/// Trapezoidal overlap <a|b> of two wavefunctions on the same 1-D grid.
inline double overlap(const std::vector<double>& a, const std::vector<double>& b, double h) {
    if (a.size() != b.size()) throw InputError("overlap of wavefunctions on different grids");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i == 0 || i + 1 == a.size() ? 0.5 : 1.0) * a[i] * b[i];
    return s * h;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b, double h) {
    if (a.size() != b.size()) throw InputError("distance of wavefunctions on different grids");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return std::sqrt(detail::trapezoid_norm2(d, h));
}

/// 2m(V - E) - [U - (hbar/2) U' / sqrt(U) sgn(x - x*)] with U = 2m~(V~ - V~min), x* = argmin V~.
inline double transformation_law_residual(const ActionSpec& classical, double e_gr, const ActionSpec& quantum,
                                          double x) {
    if (classical.dimension() != 1 || quantum.dimension() != 1)
        throw InputError("transformation law is implemented in 1-D only");
    const auto min = detail::quantum_minimum(quantum);
    const double xs = min.position[0];
    const auto& vq = quantum.potential();
    const double u = 2.0 * quantum.mass() * (vq(x) - min.value);
    if (std::abs(x - xs) <= 1e-12 * std::max(1.0, std::abs(xs)) || !(u > 0.0))
        throw DomainError("transformation law is singular at the quantum-potential minimum");
    const double du = 2.0 * quantum.mass() * vq.derivative(x);
    const double sign = x > xs ? 1.0 : -1.0;
    const double f = 2.0 * classical.mass() * (classical.potential()(x) - e_gr);
    return f - (u - 0.5 * quantum.hbar() * du / std::sqrt(u) * sign);
}

/// U(x) = 2m~(V~ - V~min) = W^2 on a 1-D grid, obtained from the transformation law.
struct QuantumProfile {
    Grid grid;
    double energy = 0.0;
    std::vector<double> w;
    std::vector<double> u;
    /// int_0^|x| W dx'
    std::vector<double> phase;
    /// Relative mismatch of the inner and outer branches at the turning point.
    double matching_error = 0.0;
};

namespace detail {

struct RiccatiState {
    double w = 0.0;
    /// int W dx accumulated along the integration.
    double phase = 0.0;
};

/// Integrates W' = (W^2 - f(x)) / hbar (with phase' = W) from x0 to x1 by RK4, substepping so
/// that the step stays inside the stability region of the linearised equation.
inline RiccatiState riccati_rk4(const std::function<double(double)>& f, double hbar, double x0, RiccatiState s,
                                double x1, double max_step) {
    if (x0 == x1) return s;
    const double span = x1 - x0;
    auto rhs = [&](double x, double w) { return (w * w - f(x)) / hbar; };
    const double wscale = std::max({std::abs(s.w), std::sqrt(std::abs(f(x0))), std::sqrt(std::abs(f(x1))), 1e-300});
    const double stable = 0.25 * hbar / (2.0 * wscale);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(span) / std::min(max_step, stable))));
    const double h = span / n;
    double x = x0;
    for (int i = 0; i < n; ++i) {
        const double w = s.w;
        const double k1 = rhs(x, w);
        const double w2 = w + 0.5 * h * k1;
        const double k2 = rhs(x + 0.5 * h, w2);
        const double w3 = w + 0.5 * h * k2;
        const double k3 = rhs(x + 0.5 * h, w3);
        const double w4 = w + h * k3;
        const double k4 = rhs(x + h, w4);
        s.w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s.phase += h / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4);
        x += h;
    }
    return s;
}

inline void require_single_symmetric_well(const PolynomialPotential& v, double half_width) {
    if (!v.is_parity_even())
        throw DomainError("transformation law needs a parity-even potential with its minimum at x = 0");
    for (int i = 1; i <= 400; ++i) {
        const double x = half_width * i / 400.0;
        if (v.derivative(x) < 0.0)
            throw DomainError("transformation law needs a single potential minimum at x = 0");
    }
}

/// Both Riccati branches at energy e; `matching_error` is signed (inner minus outer at the
/// turning point, relative).
inline QuantumProfile riccati_profile(const ActionSpec& classical, double e, const Grid& grid) {
    const auto& v = classical.potential();
    const double L = grid.half_width();
    const double hbar = classical.hbar();
    const double two_m = 2.0 * classical.mass();
    auto f = [&](double x) { return two_m * (v(x) - e); };
    const double max_step = grid.spacing() / 4.0;
    double xt = L;
    const bool bound = f(L) > 0.0;
    if (bound) {
        double lo = 0.0, hi = L;
        for (int it = 0; it < 200 && hi - lo > 1e-15 * L; ++it) {
            const double mid = 0.5 * (lo + hi);
            (f(mid) > 0.0 ? hi : lo) = mid;
        }
        xt = 0.5 * (lo + hi);
    }

    const int n = grid.points();
    const int centre = (n - 1) / 2;
    const auto half = static_cast<std::size_t>(n - centre);
    std::vector<RiccatiState> pos(half);
    auto node = [&](std::size_t j) { return grid.coordinate(centre + static_cast<int>(j)); };

    double x = 0.0;
    RiccatiState s;
    std::size_t j = 1;
    for (; j < half && node(j) <= xt; ++j) {
        s = riccati_rk4(f, hbar, x, s, node(j), max_step);
        x = node(j);
        pos[j] = s;
    }
    QuantumProfile out{grid, e, {}, {}, {}, 0.0};
    if (bound) {
        const auto at_turn = riccati_rk4(f, hbar, x, s, xt, max_step);
        // Start beyond the edge so the asymptote's error is damped by exp(-2 int W / hbar) < e^-40.
        double start = L, damping = 0.0;
        const double dx = L / 64.0;
        for (int it = 0; it < 4096 && damping < 40.0; ++it) {
            damping += 2.0 * std::sqrt(f(start)) * dx / hbar;
            start += dx;
        }
        const double fs = f(start);
        RiccatiState in{std::sqrt(fs) + hbar * two_m * v.derivative(start) / (4.0 * fs), 0.0};
        in = riccati_rk4(f, hbar, start, in, L, max_step);
        in.phase = 0.0;
        std::vector<RiccatiState> inner(half);
        double xi = L;
        for (std::size_t k = half; k-- > j;) {
            in = riccati_rk4(f, hbar, xi, in, node(k), max_step);
            xi = node(k);
            inner[k] = in;
        }
        in = riccati_rk4(f, hbar, xi, in, xt, max_step);
        const double scale = std::max(1.0, std::abs(in.w)) + std::sqrt(std::abs(f(0.0)));
        out.matching_error = (in.w - at_turn.w) / scale;
        // Inward phases are int_L^x W; shift them to start from the turning point.
        for (std::size_t k = j; k < half; ++k) pos[k] = {inner[k].w, at_turn.phase + inner[k].phase - in.phase};
    }
    const double floor = -1e-12 * (1.0 + std::sqrt(std::abs(f(0.0))));
    for (const auto& p : pos)
        if (p.w < floor) throw DomainError("W turned negative; energy is not a valid ground energy");
    out.w.assign(static_cast<std::size_t>(n), 0.0);
    out.phase.assign(static_cast<std::size_t>(n), 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        const auto r = static_cast<std::size_t>(centre) + k, l = static_cast<std::size_t>(centre) - k;
        out.w[r] = out.w[l] = std::max(0.0, pos[k].w);
        out.phase[r] = out.phase[l] = pos[k].phase;
    }
    out.u.resize(out.w.size());
    for (std::size_t k = 0; k < out.w.size(); ++k) out.u[k] = out.w[k] * out.w[k];
    return out;
}

} // namespace detail

/// Solves W^2 - hbar W' sgn(x) = 2m(V - E) with W(0) = 0 and returns U = W^2 on the grid.
///
/// For x > 0 the branch from x = 0 is integrated out to the classical turning point and the
/// decaying branch is integrated in from beyond the grid edge (the stable directions of the
/// Riccati equation). A mismatch above 1e-4 at the turning point means E is not the ground
/// energy. Smaller mismatches are removed by a secant correction of E, limited to
/// 1e-4 (1 + |E|); the corrected value is returned in `energy`. x < 0 follows by parity.
inline QuantumProfile invert_transformation_law(const ActionSpec& classical, double e_gr, const Grid& grid) {
    if (classical.dimension() != 1 || grid.dimension() != 1)
        throw InputError("transformation law is implemented in 1-D only");
    if (grid.points() % 2 == 0) throw InputError("transformation law grid needs a node at x = 0 (odd N)");
    detail::require_single_symmetric_well(classical.potential(), grid.half_width());
    if (classical.potential()(0.0) > e_gr)
        throw DomainError("energy lies below the potential minimum; W turns negative");

    auto p = detail::riccati_profile(classical, e_gr, grid);
    if (std::abs(p.matching_error) > 1e-4)
        throw DomainError("transformation law has no W(0) = 0 solution at this energy (mismatch " +
                          std::to_string(p.matching_error) + "); E is not the ground energy");
    const double limit = 1e-4 * (1.0 + std::abs(e_gr));
    double e0 = e_gr, m0 = p.matching_error;
    double e1 = e_gr + 1e-9 * (1.0 + std::abs(e_gr));
    for (int it = 0; it < 30 && std::abs(p.matching_error) > 1e-14; ++it) {
        auto q = detail::riccati_profile(classical, e1, grid);
        const double m1 = q.matching_error;
        p = std::move(q);
        if (m1 == m0 || std::abs(m1) <= 1e-14) break;
        const double e2 = e1 - m1 * (e1 - e0) / (m1 - m0);
        e0 = e1;
        m0 = m1;
        e1 = e2;
        if (std::abs(e1 - e_gr) > limit)
            throw DomainError("ground energy correction exceeds tolerance; E is not the ground energy");
    }
    return p;
}

/// Transformation-law residual of a grid profile, with U' from fourth-order differences.
/// Nodes within two cells of x = 0 or of the grid edge are reported as 0.
inline std::vector<double> transformation_law_residual(const ActionSpec& classical, double e_gr,
                                                       const QuantumProfile& profile) {
    const Grid& g = profile.grid;
    const int n = g.points();
    const double h = g.spacing();
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    for (int i = 2; i + 2 < n; ++i) {
        const double x = g.coordinate(i);
        if (std::abs(x) < 2.5 * h) continue;
        const auto at = [&](int k) { return profile.u[static_cast<std::size_t>(k)]; };
        const double du = (at(i - 2) - 8.0 * at(i - 1) + 8.0 * at(i + 1) - at(i + 2)) / (12.0 * h);
        const double u = at(i);
        if (!(u > 0.0)) continue;
        const double f = 2.0 * classical.mass() * (classical.potential()(x) - e_gr);
        r[static_cast<std::size_t>(i)] = f - (u - 0.5 * classical.hbar() * du / std::sqrt(u) * (x > 0 ? 1.0 : -1.0));
    }
    return r;
}

/// psi_gr = N exp(-int_0^|x| W dx' / hbar) from a profile.
inline GroundStateInfo ground_state_from_profile(const QuantumProfile& p, double hbar = 1.0) {
    std::vector<double> psi(p.phase.size());
    for (std::size_t k = 0; k < psi.size(); ++k) psi[k] = std::exp(-p.phase[k] / hbar);
    GroundStateInfo info{p.grid, p.energy, std::move(psi), GroundStateSource::quantum_action, 0.0};
    detail::normalise(info.wavefunction, p.grid.spacing());
    return info;
}

struct WkbReport {
    double energy = 0.0;
    double spectral_energy = 0.0;
    /// L2 distance of the classical WKB form to the spectral ground state (non-excluded nodes).
    double classical_distance = 0.0;
    /// L2 distance of the quantum-substituted exponential to the spectral ground state.
    double quantum_distance = 0.0;
    std::size_t excluded_nodes = 0;
};

namespace detail {

/// Classical WKB ground state: decaying exponential beyond the turning point, connection-formula
/// cosine inside. Entries with |2m(V - E)| < 1e-3 are flagged in `excluded`.
inline std::vector<double> classical_wkb(const ActionSpec& a, double e, const Grid& g, std::vector<bool>& excluded) {
    using boost::math::quadrature::gauss_kronrod;
    const auto& v = a.potential();
    const double two_m = 2.0 * a.mass(), hbar = a.hbar();
    auto f = [&](double x) { return two_m * (v(x) - e); };
    double lo = 0.0, hi = g.half_width();
    if (f(hi) <= 0.0) throw DomainError("energy above the potential at the grid edge; no turning point");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? hi : lo) = mid;
    }
    const double xt = 0.5 * (lo + hi);
    auto kabs = [&](double x) { return std::sqrt(std::abs(f(x))); };
    std::vector<double> psi(g.size());
    excluded.assign(g.size(), false);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = std::abs(g.coordinate(static_cast<int>(i)));
        const double fx = f(x);
        if (std::abs(fx) < 1e-3) {
            excluded[i] = true;
            continue;
        }
        const double phase = x > xt ? gauss_kronrod<double, 15>::integrate(kabs, xt, x, 10, 1e-12)
                                    : gauss_kronrod<double, 15>::integrate(kabs, x, xt, 10, 1e-12);
        psi[i] = x > xt ? std::pow(fx, -0.25) * std::exp(-phase / hbar)
                        : 2.0 * std::pow(-fx, -0.25) * std::cos(phase / hbar - 0.25 * std::numbers::pi);
    }
    return psi;
}

inline double masked_distance(std::vector<double> a, std::vector<double> b, const std::vector<bool>& excluded,
                              double h) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (excluded[i]) a[i] = b[i] = 0.0;
    normalise(a, h);
    normalise(b, h);
    return l2_distance(a, b, h);
}

inline WkbReport wkb_report(const ActionSpec& classical, double e_gr, const Grid& grid,
                            const std::vector<double>& quantum_psi) {
    if (classical.dimension() != 1 || grid.dimension() != 1) throw InputError("WKB comparison is 1-D only");
    if (!classical.potential().is_parity_even() || !classical.potential().is_confining())
        throw DomainError("WKB comparison needs a parity-symmetric confining potential");
    const auto spec = spectral_ground_state(classical, grid);
    std::vector<bool> excluded;
    const auto wkb = classical_wkb(classical, e_gr, grid, excluded);
    WkbReport r;
    r.energy = e_gr;
    r.spectral_energy = spec.energy;
    r.excluded_nodes = static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), true));
    r.classical_distance = masked_distance(wkb, spec.wavefunction, excluded, grid.spacing());
    r.quantum_distance = l2_distance(quantum_psi, spec.wavefunction, grid.spacing());
    return r;
}

} // namespace detail

/// Classical WKB versus the quantum-substituted exponential, both against the spectral ground state.
inline WkbReport wkb_compare(const ActionSpec& classical, const ActionSpec& quantum, double e_gr, const Grid& grid) {
    return detail::wkb_report(classical, e_gr, grid, ground_state_from_quantum_action(quantum, grid).wavefunction);
}

inline WkbReport wkb_compare(const ActionSpec& classical, const QuantumProfile& profile, const Grid& grid) {
    if (profile.grid.points() != grid.points() || profile.grid.half_width() != grid.half_width())
        throw InputError("profile grid differs from comparison grid");
    return detail::wkb_report(classical, profile.energy, grid,
                              ground_state_from_profile(profile, classical.hbar()).wavefunction);
}

inline nlohmann::json wkb_report_to_json(const WkbReport& r) {
    return {{"energy", r.energy},
            {"spectral_energy", r.spectral_energy},
            {"classical_wkb_distance", r.classical_distance},
            {"quantum_wkb_distance", r.quantum_distance},
            {"excluded_nodes", r.excluded_nodes}};
}

// Hydrogen radial sector: V~_l = mu / r^2 - nu / r with m~ = m.

struct HydrogenUnits {
    double hbar = 1.0;
    double mass = 1.0;
    /// Squared charge e^2 (Gaussian units).
    double charge_squared = 1.0;
};

struct HydrogenSector {
    int l = 1;
    double mu = 0.0;
    double nu = 0.0;
    double energy = 0.0;
    double bohr_radius = 0.0;
    double ionization = 0.0;
    /// argmin of mu/r^2 - nu/r, equal to argmax of r^l exp(-r / ((l+1) a0)).
    double radius = 0.0;
    int principal() const noexcept { return l + 1; }
};

inline HydrogenSector hydrogen_sector(int l, const HydrogenUnits& u = {}) {
    if (l < 1) throw InputError("hydrogen sector needs l >= 1");
    if (!(u.hbar > 0.0) || !(u.mass > 0.0) || !(u.charge_squared > 0.0))
        throw InputError("hydrogen units must be positive");
    const double ld = l;
    HydrogenSector s;
    s.l = l;
    s.mu = u.hbar * u.hbar * ld * ld / (2.0 * u.mass);
    s.nu = u.charge_squared * ld / (ld + 1.0);
    s.bohr_radius = u.hbar * u.hbar / (u.mass * u.charge_squared);
    s.ionization = u.mass * u.charge_squared * u.charge_squared / (2.0 * u.hbar * u.hbar);
    s.energy = -s.ionization / ((ld + 1.0) * (ld + 1.0));
    s.radius = 2.0 * s.mu / s.nu;
    const double vmin = -s.nu * s.nu / (4.0 * s.mu);
    if (std::abs(vmin - s.energy) > 1e-13 * std::abs(s.energy))
        throw NumericalError("hydrogen minimum does not match E_l", vmin - s.energy);
    const double peak = ld * (ld + 1.0) * s.bohr_radius;
    if (std::abs(s.radius - peak) > 1e-13 * peak)
        throw NumericalError("hydrogen potential minimum and wavefunction peak differ", s.radius - peak);
    return s;
}

/// Exact check of -nu^2/(4 mu) = -E_I/(l+1)^2 and 2 mu / nu = a0 l (l+1) = argmax phi_l.
template <class Int = long long>
bool hydrogen_identities_exact(int l, boost::rational<Int> hbar = 1, boost::rational<Int> mass = 1,
                               boost::rational<Int> charge_squared = 1) {
    using R = boost::rational<Int>;
    if (l < 1) throw InputError("hydrogen sector needs l >= 1");
    const R L(l), L1(l + 1);
    const R mu = hbar * hbar * L * L / (R(2) * mass);
    const R nu = charge_squared * L / L1;
    const R a0 = hbar * hbar / (mass * charge_squared);
    const R ei = mass * charge_squared * charge_squared / (R(2) * hbar * hbar);
    const R vmin = -nu * nu / (R(4) * mu);
    const R argmin = R(2) * mu / nu;
    // d/dr [l ln r - r / ((l+1) a0)] = 0
    const R argmax = L * L1 * a0;
    return vmin == -ei / (L1 * L1) && argmin == a0 * L * L1 && argmax == argmin;
}

} // namespace qaction
