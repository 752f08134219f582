#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"
#include "qaction/grid.hpp"
#include "qaction/hamiltonian.hpp"
#include "qaction/spectral.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace qaction {

/// Boundary data (x_i, x_f) of a transition; 1-D pairs use component 0 only.
struct BoundaryPair {
    std::array<double, 2> initial{0.0, 0.0};
    std::array<double, 2> final{0.0, 0.0};

    static BoundaryPair one_d(double xi, double xf) { return {{xi, 0.0}, {xf, 0.0}}; }
    BoundaryPair swapped() const { return {final, initial}; }
    friend bool operator==(const BoundaryPair&, const BoundaryPair&) = default;
};

/// Every (a, b) with a, b drawn from a tensor grid of `count` points per axis on [lo, hi]^dim.
inline std::vector<BoundaryPair> tensor_pairs(int dimension, double lo, double hi, int count) {
    if (count < 1) throw InputError("pair grid needs at least one point per axis");
    std::vector<std::array<double, 2>> pts;
    auto coord = [&](int i) { return count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (count - 1); };
    if (dimension == 1) {
        for (int i = 0; i < count; ++i) pts.push_back({coord(i), 0.0});
    } else {
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < count; ++j) pts.push_back({coord(i), coord(j)});
    }
    std::vector<BoundaryPair> out;
    out.reserve(pts.size() * pts.size());
    for (const auto& a : pts)
        for (const auto& b : pts) out.push_back({a, b});
    return out;
}

/// Euclidean amplitudes G_E(x_f, T; x_i, 0) for a list of boundary pairs at fixed T.
///
/// `local_energies[p]` is -hbar d ln G_E / dT for the same pair, available because the table is
/// built from a spectral expansion.
struct PropagatorTable {
    Grid grid;
    double T = 0.0;
    std::vector<BoundaryPair> pairs;
    std::vector<double> amplitudes;
    std::vector<double> local_energies;

    int dimension() const noexcept { return grid.dimension(); }
    std::size_t size() const noexcept { return pairs.size(); }
};

/// Eigen-expansion kernel sum_n psi_n(x_f) psi_n(x_i) exp(-E_n T / hbar).
///
/// Holds enough states for every T >= t_min: expansion terms are dropped once
/// exp(-(E_n - E_0) T / hbar) < 1e-14.
class SpectralPropagator {
public:
    static constexpr double boltzmann_cutoff = 1e-14;

    SpectralPropagator(const ActionSpec& action, const Grid& grid, double t_min)
        : hbar_(action.hbar()) {
        if (!(t_min > 0.0)) throw InputError("transition time must be positive");
        const GridHamiltonian h(action, grid);
        const double window = -std::log(boltzmann_cutoff) * hbar_ / t_min;
        if (h.is_tridiagonal()) {
            const auto lowest = spectral_decompose(h, 1);
            const std::size_t k = std::max<std::size_t>(
                1, count_states_below(h, lowest.ground_energy() + window));
            spectral_ = k == 1 ? lowest : spectral_decompose(h, std::min(k + 1, grid.size()));
        } else {
            std::size_t k = 16;
            for (;;) {
                k = std::min(k, grid.size());
                spectral_ = spectral_decompose(h, k);
                if (k == grid.size() || spectral_.eigenvalues.back() > spectral_.ground_energy() + window)
                    break;
                k *= 2;
            }
        }
    }

    explicit SpectralPropagator(SpectralData spectral, double hbar = 1.0)
        : spectral_(std::move(spectral)), hbar_(hbar) {}

    const SpectralData& spectral() const noexcept { return spectral_; }
    const Grid& grid() const noexcept { return spectral_.grid; }

    /// Returns {G_E, -hbar dlnG/dT}.
    std::array<double, 2> evaluate(const BoundaryPair& pair, double T) const {
        if (!(T > 0.0)) throw InputError("transition time must be positive");
        const auto wi = interpolation_(pair.initial);
        const auto wf = interpolation_(pair.final);
        const double e0 = spectral_.ground_energy();
        double g = 0.0, dg = 0.0;
        for (std::size_t n = 0; n < spectral_.size(); ++n) {
            const double w = std::exp(-(spectral_.eigenvalues[n] - e0) * T / hbar_);
            if (w < boltzmann_cutoff) break;
            const double term = value_(wi, n) * value_(wf, n) * w;
            g += term;
            dg += (spectral_.eigenvalues[n] - e0) * term;
        }
        if (!(g > 0.0))
            throw NumericalError("non-positive Euclidean amplitude (kernel below expansion resolution)", g);
        return {g * std::exp(-e0 * T / hbar_), e0 + dg / g};
    }

    PropagatorTable table(std::span<const BoundaryPair> pairs, double T) const {
        PropagatorTable t{grid(), T, {pairs.begin(), pairs.end()}, {}, {}};
        t.amplitudes.reserve(pairs.size());
        t.local_energies.reserve(pairs.size());
        for (const auto& p : pairs) {
            const auto [g, e] = evaluate(p, T);
            t.amplitudes.push_back(g);
            t.local_energies.push_back(e);
        }
        return t;
    }

private:
    /// Up to 4x4 Lagrange stencil (exact at nodes) locating a point on the grid.
    struct Stencil {
        std::array<std::size_t, 16> index{};
        std::array<double, 16> weight{};
        int count = 0;
    };

    static void axis_stencil(const Grid& g, int axis, double x, std::array<int, 4>& idx,
                             std::array<double, 4>& w, int& m) {
        if (!g.contains(axis, x)) throw InputError("boundary point outside the grid");
        const double h = g.spacing(axis);
        const double s = (x + g.half_width(axis)) / h;
        const double r = std::round(s);
        const int n = g.points(axis);
        if (std::abs(s - r) < 1e-9) {
            idx[0] = std::clamp(static_cast<int>(r), 0, n - 1);
            w[0] = 1.0;
            m = 1;
            return;
        }
        const int i0 = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, n - 4);
        for (int a = 0; a < 4; ++a) {
            idx[a] = i0 + a;
            double l = 1.0;
            for (int b = 0; b < 4; ++b)
                if (b != a) l *= (s - (i0 + b)) / static_cast<double>(a - b);
            w[a] = l;
        }
        m = 4;
    }

    Stencil interpolation_(const std::array<double, 2>& x) const {
        const Grid& g = grid();
        std::array<int, 4> ix{}, iy{};
        std::array<double, 4> wx{}, wy{};
        int mx = 0, my = 1;
        axis_stencil(g, 0, x[0], ix, wx, mx);
        if (g.dimension() == 2) {
            axis_stencil(g, 1, x[1], iy, wy, my);
        } else {
            iy[0] = 0;
            wy[0] = 1.0;
        }
        Stencil s;
        for (int a = 0; a < mx; ++a)
            for (int b = 0; b < my; ++b) {
                s.index[s.count] = g.index(ix[a], iy[b]);
                s.weight[s.count] = wx[a] * wy[b];
                ++s.count;
            }
        return s;
    }

    double value_(const Stencil& s, std::size_t n) const {
        double v = 0.0;
        for (int i = 0; i < s.count; ++i)
            v += s.weight[i] * spectral_.eigenvectors(static_cast<Eigen::Index>(s.index[i]),
                                                      static_cast<Eigen::Index>(n));
        return v;
    }

    SpectralData spectral_{Grid(1.0, 16), {}, {}};
    double hbar_ = 1.0;
};

/// G_E(x_f, T; x_i, 0) for every pair, from the eigen-expansion of the grid Hamiltonian.
inline PropagatorTable euclidean_propagate(const ActionSpec& action, const Grid& grid, double T,
                                           std::span<const BoundaryPair> pairs) {
    if (!(T > 0.0)) throw InputError("transition time must be positive");
    return SpectralPropagator(action, grid, T).table(pairs, T);
}

enum class TimeKind { real, euclidean };

/// Classical harmonic-oscillator action between x_i and x_f over time T
/// (sin/cos for real time, sinh/cosh for the Euclidean continuation).
inline double ho_classical_action(double m, double omega, double xi, double xf, double T, TimeKind kind) {
    if (kind == TimeKind::euclidean) {
        if (!(T > 0.0)) throw InputError("Euclidean time must be positive");
        const double s = std::sinh(omega * T);
        return m * omega / (2.0 * s) * ((xf * xf + xi * xi) * std::cosh(omega * T) - 2.0 * xi * xf);
    }
    const double s = std::sin(omega * T);
    if (std::abs(s) < 1e-14) throw DomainError("caustic: sin(omega T) = 0");
    return m * omega / (2.0 * s) * ((xf * xf + xi * xi) * std::cos(omega * T) - 2.0 * xi * xf);
}

/// Closed-form harmonic-oscillator kernel Z exp(i S / hbar), or its Euclidean continuation
/// Z_E exp(-S_E / hbar) (returned with zero imaginary part).
inline std::complex<double> ho_exact_propagator(double m, double omega, double hbar, double xi, double xf,
                                                double T, TimeKind kind) {
    const double s = ho_classical_action(m, omega, xi, xf, T, kind);
    if (kind == TimeKind::euclidean) {
        const double z = std::sqrt(m * omega / (2.0 * std::numbers::pi * hbar * std::sinh(omega * T)));
        return {z * std::exp(-s / hbar), 0.0};
    }
    using namespace std::complex_literals;
    const std::complex<double> z =
        std::sqrt(m * omega / (2.0 * std::numbers::pi * 1i * hbar * std::sin(omega * T)));
    return z * std::exp(1i * s / hbar);
}

} // namespace qaction
