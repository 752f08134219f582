#pragma once

#include "qaction/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace qaction {

struct NelderMeadOptions {
    double initial_step = 0.05;
    double diameter_tolerance = 1e-8;
    int max_evaluations = 4000;
    int restarts = 3;
    /// Coordinate-wise parabolic refinement passes after the simplex stage.
    int polish_passes = 2;
};

struct MinimizeResult {
    Eigen::VectorXd argmin;
    double value = std::numeric_limits<double>::infinity();
    double diameter = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    bool converged = false;
};

namespace detail {

inline double simplex_diameter(const std::vector<Eigen::VectorXd>& v) {
    double d = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) d = std::max(d, (v[i] - v[0]).norm());
    return d;
}

/// One Nelder-Mead run (standard coefficients 1, 2, 1/2, 1/2) from an axis-aligned simplex.
template <class F>
MinimizeResult nelder_mead_run(F& f, const Eigen::VectorXd& x0, double step, double tol, int budget) {
    const auto n = x0.size();
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(n + 1));
    MinimizeResult out;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++out.evaluations;
        const double y = f(x);
        return std::isfinite(y) ? y : std::numeric_limits<double>::max();
    };
    fv[0] = eval(x0);
    for (Eigen::Index i = 0; i < n; ++i) {
        v[static_cast<std::size_t>(i + 1)][i] += step;
        fv[static_cast<std::size_t>(i + 1)] = eval(v[static_cast<std::size_t>(i + 1)]);
    }
    std::vector<std::size_t> order(v.size());
    auto sort = [&] {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        std::vector<Eigen::VectorXd> v2;
        std::vector<double> f2;
        for (auto i : order) {
            v2.push_back(v[i]);
            f2.push_back(fv[i]);
        }
        v.swap(v2);
        fv.swap(f2);
    };
    sort();
    while (out.evaluations < budget && simplex_diameter(v) >= tol) {
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) centroid += v[static_cast<std::size_t>(i)];
        centroid /= static_cast<double>(n);
        const auto last = static_cast<std::size_t>(n);
        const Eigen::VectorXd xr = centroid + (centroid - v[last]);
        const double fr = eval(xr);
        if (fr < fv[0]) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - v[last]);
            const double fe = eval(xe);
            if (fe < fr) {
                v[last] = xe;
                fv[last] = fe;
            } else {
                v[last] = xr;
                fv[last] = fr;
            }
        } else if (fr < fv[last - 1]) {
            v[last] = xr;
            fv[last] = fr;
        } else {
            const bool outside = fr < fv[last];
            const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (v[last] - centroid));
            const double fc = eval(xc);
            if (fc < (outside ? fr : fv[last])) {
                v[last] = xc;
                fv[last] = fc;
            } else {
                for (std::size_t i = 1; i < v.size(); ++i) {
                    v[i] = v[0] + 0.5 * (v[i] - v[0]);
                    fv[i] = eval(v[i]);
                }
            }
        }
        sort();
    }
    out.argmin = v[0];
    out.value = fv[0];
    out.diameter = simplex_diameter(v);
    out.converged = out.diameter < tol;
    return out;
}

/// Vertex of the parabola through (-h, fm), (0, f0), (h, fp); NaN when not convex.
inline double parabola_vertex(double fm, double f0, double fp, double h) {
    const double curv = fm - 2.0 * f0 + fp;
    if (!(curv > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 0.5 * h * (fm - fp) / curv;
}

} // namespace detail

/// Nelder-Mead with restarts around the incumbent, then coordinate-wise quadratic polish.
/// `converged` reports whether the last simplex shrank below the diameter tolerance.
template <class F>
MinimizeResult minimize_nelder_mead(F&& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {}) {
    if (x0.size() == 0) {
        MinimizeResult r;
        r.argmin = x0;
        r.value = f(x0);
        r.evaluations = 1;
        r.diameter = 0.0;
        r.converged = true;
        return r;
    }
    MinimizeResult best;
    best.argmin = x0;
    int used = 0;
    double step = opt.initial_step;
    for (int attempt = 0; attempt <= opt.restarts && used < opt.max_evaluations; ++attempt) {
        auto r = detail::nelder_mead_run(f, best.argmin, step, opt.diameter_tolerance, opt.max_evaluations - used);
        used += r.evaluations;
        const double previous = best.value;
        if (r.value <= best.value || attempt == 0) {
            best.argmin = r.argmin;
            best.value = r.value;
        }
        best.diameter = r.diameter;
        best.converged = r.converged;
        if (attempt > 0 && r.converged && previous - r.value <= 1e-14 * std::max(1.0, std::abs(previous))) break;
        step = std::max(10.0 * opt.diameter_tolerance, 0.2 * step);
    }

    for (int pass = 0; pass < opt.polish_passes; ++pass) {
        double h = std::max(1e-6, 100.0 * opt.diameter_tolerance) / std::pow(10.0, pass);
        for (Eigen::Index i = 0; i < best.argmin.size(); ++i) {
            Eigen::VectorXd xm = best.argmin, xp = best.argmin;
            xm[i] -= h;
            xp[i] += h;
            const double fm = f(xm), fp = f(xp);
            used += 2;
            const double s = detail::parabola_vertex(fm, best.value, fp, h);
            if (!std::isfinite(s)) continue;
            Eigen::VectorXd xs = best.argmin;
            xs[i] += std::clamp(s, -h, h);
            const double fs = f(xs);
            ++used;
            if (fs < best.value) {
                best.argmin = xs;
                best.value = fs;
            }
        }
    }
    best.evaluations = used;
    return best;
}

} // namespace qaction
