#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace qaction {

using Point = std::array<double, 2>;

/// Extremal path of a Euclidean action on a uniform time mesh.
struct TrajectorySolution {
    int dimension = 1;
    double T = 0.0;
    std::vector<double> times;
    std::vector<Point> path;
    /// Euclidean action Sigma along the path.
    double action = 0.0;
    /// Mean of eps = -T_kin + V over the nodes.
    double euclidean_energy = 0.0;
    /// max_k |eps_k - eps_0|
    double energy_spread = 0.0;
    bool converged = false;
    /// Relative Euler-Lagrange defect of the discrete equations.
    double residual = 0.0;
    /// Set when a second start from a perturbed guess reached a different extremum.
    bool multiple_extrema = false;
    int iterations = 0;

    std::size_t nodes() const noexcept { return path.size(); }
    double time_step() const noexcept { return T / static_cast<double>(path.size() - 1); }
};

struct BvpOptions {
    int time_nodes = 257;
    double tolerance = 1e-10;
    int max_newton_iterations = 60;
    /// Solve at T / 2^k for k up to this depth when direct Newton fails.
    int max_continuation_depth = 12;
    bool check_multiplicity = false;
};

enum class ActionKind { real, euclidean };

namespace detail {

/// Fourth-order velocities from node values (central 5-point inside, one-sided at the ends).
inline std::vector<Point> mesh_velocities(const std::vector<Point>& x, double dt) {
    const std::size_t n = x.size();
    std::vector<Point> v(n, Point{0.0, 0.0});
    if (n < 5) {
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t a = k == 0 ? 0 : k - 1, b = std::min(n - 1, k + 1);
            for (int c = 0; c < 2; ++c) v[k][c] = (x[b][c] - x[a][c]) / ((b - a) * dt);
        }
        return v;
    }
    for (int c = 0; c < 2; ++c) {
        for (std::size_t k = 2; k + 2 < n; ++k)
            v[k][c] = (x[k - 2][c] - 8.0 * x[k - 1][c] + 8.0 * x[k + 1][c] - x[k + 2][c]) / (12.0 * dt);
        auto edge0 = [&](std::size_t i0, int dir) {
            const double s = dir;
            auto at = [&](int j) { return x[static_cast<std::size_t>(static_cast<long>(i0) + dir * j)][c]; };
            return s * (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) / (12.0 * dt);
        };
        auto edge1 = [&](std::size_t i0, int dir) {
            const double s = dir;
            auto at = [&](int j) { return x[static_cast<std::size_t>(static_cast<long>(i0) + dir * j)][c]; };
            return s * (-3.0 * at(-1) - 10.0 * at(0) + 18.0 * at(1) - 6.0 * at(2) + at(3)) / (12.0 * dt);
        };
        v[0][c] = edge0(0, 1);
        v[1][c] = edge1(1, 1);
        v[n - 1][c] = edge0(n - 1, -1);
        v[n - 2][c] = edge1(n - 2, -1);
    }
    return v;
}

/// Composite Simpson weights (3/8 rule on the last panel when the interval count is odd).
inline std::vector<double> simpson_weights(std::size_t n, double dt) {
    std::vector<double> w(n, 0.0);
    const std::size_t intervals = n - 1;
    if (intervals == 1) {
        w[0] = w[1] = 0.5 * dt;
        return w;
    }
    std::size_t simpson = intervals % 2 == 0 ? intervals : intervals - 3;
    for (std::size_t k = 0; k + 2 <= simpson; k += 2) {
        w[k] += dt / 3.0;
        w[k + 1] += 4.0 * dt / 3.0;
        w[k + 2] += dt / 3.0;
    }
    if (simpson != intervals) {
        const std::size_t s = simpson;
        w[s] += 3.0 * dt / 8.0;
        w[s + 1] += 9.0 * dt / 8.0;
        w[s + 2] += 9.0 * dt / 8.0;
        w[s + 3] += 3.0 * dt / 8.0;
    }
    return w;
}

template <int D>
struct EulerLagrangeSystem {
    using Vec = Eigen::Matrix<double, D, 1>;
    using Mat = Eigen::Matrix<double, D, D>;

    const ActionSpec& action;
    Mat inverse_mass;

    explicit EulerLagrangeSystem(const ActionSpec& a) : action(a) {
        if constexpr (D == 1) {
            inverse_mass(0, 0) = 1.0 / a.mass();
        } else {
            Mat m;
            m << a.mass(), a.kinetic_coupling(), a.kinetic_coupling(), a.mass();
            inverse_mass = m.inverse();
        }
    }

    Vec gradient(const Vec& x) const {
        if constexpr (D == 1) {
            return Vec(action.potential().derivative(x[0]));
        } else {
            const auto g = action.potential().gradient(x[0], x[1]);
            return Vec(g[0], g[1]);
        }
    }

    Mat hessian(const Vec& x) const {
        if constexpr (D == 1) {
            Mat h;
            h(0, 0) = action.potential().second_derivative(x[0]);
            return h;
        } else {
            const auto h = action.potential().hessian(x[0], x[1]);
            Mat m;
            m << h[0], h[1], h[1], h[2];
            return m;
        }
    }
};

/// Damped Newton on the Numerov-discretised Euclidean equations M x'' = grad V.
template <int D>
struct NewtonRelaxation {
    using Sys = EulerLagrangeSystem<D>;
    using Vec = typename Sys::Vec;
    using Mat = typename Sys::Mat;

    const Sys& sys;
    double dt;
    double tolerance;
    int max_iterations;

    struct Outcome {
        bool converged = false;
        double residual = 0.0;
        int iterations = 0;
    };

    double residual_norm(const std::vector<Vec>& x, std::vector<Vec>& r) const {
        const std::size_t n = x.size();
        const double c = dt * dt / 12.0;
        std::vector<Vec> f(n);
        for (std::size_t k = 0; k < n; ++k) f[k] = sys.inverse_mass * sys.gradient(x[k]);
        double worst = 0.0, scale = 0.0;
        for (std::size_t k = 1; k + 1 < n; ++k) {
            r[k] = x[k + 1] - 2.0 * x[k] + x[k - 1] - c * (f[k + 1] + 10.0 * f[k] + f[k - 1]);
            worst = std::max(worst, r[k].cwiseAbs().maxCoeff());
            scale = std::max(scale, (x[k + 1].cwiseAbs() + 2.0 * x[k].cwiseAbs() + x[k - 1].cwiseAbs() +
                                     c * (f[k + 1].cwiseAbs() + 10.0 * f[k].cwiseAbs() + f[k - 1].cwiseAbs()))
                                        .maxCoeff());
        }
        if (worst == 0.0) return 0.0;
        return worst / std::max(scale, 1e-300);
    }

    Outcome solve(std::vector<Vec>& x) const {
        const std::size_t n = x.size();
        const std::size_t m = n - 2;
        const double c = dt * dt / 12.0;
        std::vector<Vec> r(n, Vec::Zero());
        std::vector<Mat> jac(n), bdiag(m);
        std::vector<Vec> rhs(m), step(m);
        Outcome out;
        double res = residual_norm(x, r);
        double rnorm = 0.0;
        for (std::size_t k = 1; k + 1 < n; ++k) rnorm += r[k].squaredNorm();
        for (int it = 0; it < max_iterations; ++it) {
            out.iterations = it;
            if (!std::isfinite(res)) break;
            if (res == 0.0) {
                out.converged = true;
                return out;
            }
            for (std::size_t k = 0; k < n; ++k) jac[k] = c * sys.inverse_mass * sys.hessian(x[k]);
            // Block Thomas: sub/super blocks I - J_{k-+1}, diagonal -2I - 10 J_k.
            const Mat I = Mat::Identity();
            std::vector<Mat> super(m);
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t k = i + 1;
                Mat diag = -2.0 * I - 10.0 * jac[k];
                Vec b = r[k];
                if (i > 0) {
                    const Mat sub = I - jac[k - 1];
                    const Mat l = sub * bdiag[i - 1].inverse();
                    diag -= l * super[i - 1];
                    b -= l * rhs[i - 1];
                }
                bdiag[i] = diag;
                rhs[i] = b;
                super[i] = I - jac[k + 1];
            }
            step[m - 1] = bdiag[m - 1].inverse() * rhs[m - 1];
            for (std::size_t i = m - 1; i-- > 0;) step[i] = bdiag[i].inverse() * (rhs[i] - super[i] * step[i + 1]);
            double step_size = 0.0, path_size = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                step_size = std::max(step_size, step[i].cwiseAbs().maxCoeff());
                path_size = std::max(path_size, x[i + 1].cwiseAbs().maxCoeff());
            }
            // Converged once the defect is small and Newton updates are at rounding level.
            if (res < tolerance && step_size <= 1e-13 * (1.0 + path_size)) {
                for (std::size_t i = 0; i < m; ++i) x[i + 1] -= step[i];
                out.converged = true;
                out.residual = residual_norm(x, r);
                return out;
            }

            double lambda = 1.0;
            std::vector<Vec> trial(x);
            bool accepted = false;
            for (int ls = 0; ls < 30; ++ls) {
                for (std::size_t i = 0; i < m; ++i) trial[i + 1] = x[i + 1] - lambda * step[i];
                std::vector<Vec> rt(n, Vec::Zero());
                const double tres = residual_norm(trial, rt);
                double tnorm = 0.0;
                for (std::size_t k = 1; k + 1 < n; ++k) tnorm += rt[k].squaredNorm();
                if (std::isfinite(tres) && (tnorm < rnorm || tres < tolerance)) {
                    x.swap(trial);
                    r.swap(rt);
                    res = tres;
                    rnorm = tnorm;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if (!accepted) {
                out.converged = res < tolerance;
                out.residual = res;
                return out;
            }
        }
        out.converged = res < tolerance;
        out.residual = res;
        out.iterations = max_iterations;
        return out;
    }
};

template <int D>
TrajectorySolution solve_bvp_impl(const ActionSpec& a, const Point& xi, const Point& xf, double T,
                                  const BvpOptions& opt);

} // namespace detail

/// Trapezoidal-family quadrature of the Lagrangian along a solved path.
///
/// Velocities use fourth-order differences and the integral uses composite Simpson weights, so the
/// value converges as O(N_t^-4) for smooth paths.
inline double evaluate_action(const ActionSpec& a, const TrajectorySolution& sol,
                              ActionKind kind = ActionKind::euclidean) {
    const std::size_t n = sol.nodes();
    if (n < 2) throw InputError("action needs at least two nodes");
    const double dt = sol.time_step();
    const auto v = detail::mesh_velocities(sol.path, dt);
    const auto w = detail::simpson_weights(n, dt);
    const double sign = kind == ActionKind::euclidean ? 1.0 : -1.0;
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double kin = a.dimension() == 1 ? 0.5 * a.mass() * v[k][0] * v[k][0]
                                              : a.kinetic_from_velocity(v[k][0], v[k][1]);
        const double pot = a.dimension() == 1 ? a.potential()(sol.path[k][0])
                                              : a.potential()(sol.path[k][0], sol.path[k][1]);
        s += w[k] * (kin + sign * pot);
    }
    return s;
}

/// Euclidean energy eps_k = -T_kin + V at each node.
inline std::vector<double> euclidean_energy_profile(const ActionSpec& a, const TrajectorySolution& sol) {
    const auto v = detail::mesh_velocities(sol.path, sol.time_step());
    std::vector<double> eps(sol.nodes());
    for (std::size_t k = 0; k < sol.nodes(); ++k) {
        const double kin = a.dimension() == 1 ? 0.5 * a.mass() * v[k][0] * v[k][0]
                                              : a.kinetic_from_velocity(v[k][0], v[k][1]);
        const double pot = a.dimension() == 1 ? a.potential()(sol.path[k][0])
                                              : a.potential()(sol.path[k][0], sol.path[k][1]);
        eps[k] = pot - kin;
    }
    return eps;
}

/// Extremal path of the Euclidean action with x(0) = x_i and x(T) = x_f.
///
/// Newton relaxation on the discretised Euler-Lagrange system starts from the straight line; on
/// failure it solves at T/2^k and extends back by doubling T, reusing node values as the guess.
inline TrajectorySolution solve_euclidean_bvp(const ActionSpec& a, const Point& xi, const Point& xf,
                                              double T, const BvpOptions& opt = {}) {
    if (!(T > 0.0)) throw InputError("transition time must be positive");
    if (opt.time_nodes < 32) throw InputError("at least 32 time nodes are required");
    return a.dimension() == 1 ? detail::solve_bvp_impl<1>(a, xi, xf, T, opt)
                              : detail::solve_bvp_impl<2>(a, xi, xf, T, opt);
}

inline TrajectorySolution solve_euclidean_bvp(const ActionSpec& a, double xi, double xf, double T,
                                              int time_nodes = 257) {
    BvpOptions opt;
    opt.time_nodes = time_nodes;
    return solve_euclidean_bvp(a, Point{xi, 0.0}, Point{xf, 0.0}, T, opt);
}

namespace detail {

template <int D>
TrajectorySolution solve_bvp_impl(const ActionSpec& a, const Point& xi, const Point& xf, double T,
                                  const BvpOptions& opt) {
    using Vec = Eigen::Matrix<double, D, 1>;
    const std::size_t n = static_cast<std::size_t>(opt.time_nodes);
    const EulerLagrangeSystem<D> sys(a);

    Vec a0, b0;
    for (int c = 0; c < D; ++c) {
        a0[c] = xi[c];
        b0[c] = xf[c];
    }
    auto straight = [&](std::vector<Vec>& x) {
        x.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double s = static_cast<double>(k) / static_cast<double>(n - 1);
            x[k] = a0 + s * (b0 - a0);
        }
    };
    auto relax = [&](std::vector<Vec>& x, double t) {
        NewtonRelaxation<D> nr{sys, t / static_cast<double>(n - 1), opt.tolerance, opt.max_newton_iterations};
        return nr.solve(x);
    };

    std::vector<Vec> x;
    straight(x);
    auto outcome = relax(x, T);
    int total_iterations = outcome.iterations;
    if (!outcome.converged) {
        // Continuation from short times, where the free (straight-line) solution dominates.
        std::vector<Vec> best = x;
        auto best_outcome = outcome;
        for (int depth = 1; depth <= opt.max_continuation_depth && !outcome.converged; ++depth) {
            double t = T / std::ldexp(1.0, depth);
            straight(x);
            auto o = relax(x, t);
            total_iterations += o.iterations;
            if (!o.converged) continue;
            bool ok = true;
            while (t < T * (1.0 - 1e-12)) {
                t = std::min(2.0 * t, T);
                o = relax(x, t);
                total_iterations += o.iterations;
                if (!o.converged) {
                    ok = false;
                    break;
                }
            }
            if (ok) outcome = o;
            else if (o.residual < best_outcome.residual) {
                best = x;
                best_outcome = o;
            }
        }
        if (!outcome.converged) {
            x = best;
            outcome = best_outcome;
        }
    }

    TrajectorySolution sol;
    sol.dimension = D;
    sol.T = T;
    sol.times.resize(n);
    sol.path.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        sol.times[k] = T * static_cast<double>(k) / static_cast<double>(n - 1);
        for (int c = 0; c < D; ++c) sol.path[k][c] = x[k][c];
        if constexpr (D == 1) sol.path[k][1] = 0.0;
    }
    sol.path.front() = xi;
    sol.path.back() = xf;
    if constexpr (D == 1) sol.path.front()[1] = sol.path.back()[1] = 0.0;
    sol.converged = outcome.converged;
    sol.residual = outcome.residual;
    sol.iterations = total_iterations;
    sol.action = evaluate_action(a, sol, ActionKind::euclidean);
    const auto eps = euclidean_energy_profile(a, sol);
    double mean = 0.0, spread = 0.0;
    for (double e : eps) {
        mean += e;
        spread = std::max(spread, std::abs(e - eps.front()));
    }
    sol.euclidean_energy = mean / static_cast<double>(eps.size());
    sol.energy_spread = spread;

    if (opt.check_multiplicity && sol.converged) {
        std::vector<Vec> y;
        straight(y);
        const double amp = 1.0 + (b0 - a0).norm();
        for (std::size_t k = 1; k + 1 < n; ++k)
            y[k] += Vec::Constant(amp * std::sin(std::numbers::pi * static_cast<double>(k) /
                                                 static_cast<double>(n - 1)));
        const auto o = relax(y, T);
        if (o.converged) {
            double diff = 0.0, size = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                diff = std::max(diff, (y[k] - x[k]).cwiseAbs().maxCoeff());
                size = std::max(size, x[k].cwiseAbs().maxCoeff());
            }
            sol.multiple_extrema = diff > 1e-6 * (1.0 + size);
        }
    }
    return sol;
}

} // namespace detail

} // namespace qaction
