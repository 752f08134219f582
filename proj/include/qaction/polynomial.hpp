#pragma once

#include "qaction/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace qaction {

/// Whether a potential must grow without bound along every coordinate axis.
enum class Confinement { unchecked, required };

/// Sparse polynomial V(x) or V(x, y) = sum_k c_k x^a_k y^b_k.
///
/// Terms are kept sorted lexicographically by exponent tuple with duplicates merged and
/// exact zeros dropped, so two potentials with the same coefficients compare equal.
class PolynomialPotential {
public:
    using Exponent = std::array<int, 2>;

    struct Term {
        Exponent exponent{0, 0};
        double coefficient = 0.0;

        friend bool operator==(const Term&, const Term&) = default;
    };

    PolynomialPotential() = default;

    PolynomialPotential(int dimension, std::vector<Term> terms,
                        Confinement confinement = Confinement::unchecked)
        : dimension_(dimension), terms_(std::move(terms)) {
        if (dimension_ != 1 && dimension_ != 2)
            throw InputError("potential dimension must be 1 or 2, got " + std::to_string(dimension_));
        for (const auto& t : terms_) {
            if (t.exponent[0] < 0 || t.exponent[1] < 0)
                throw InputError("negative monomial exponent");
            if (dimension_ == 1 && t.exponent[1] != 0)
                throw InputError("1-D potential term carries a y exponent");
            if (!std::isfinite(t.coefficient)) throw InputError("non-finite potential coefficient");
        }
        std::sort(terms_.begin(), terms_.end(),
                  [](const Term& a, const Term& b) { return a.exponent < b.exponent; });
        std::vector<Term> merged;
        for (const auto& t : terms_) {
            if (!merged.empty() && merged.back().exponent == t.exponent)
                merged.back().coefficient += t.coefficient;
            else
                merged.push_back(t);
        }
        std::erase_if(merged, [](const Term& t) { return t.coefficient == 0.0; });
        terms_ = std::move(merged);
        degree_ = 0;
        for (const auto& t : terms_) degree_ = std::max(degree_, t.exponent[0] + t.exponent[1]);
        if (confinement == Confinement::required && !is_confining())
            throw InputError("potential is not confining: the leading coefficient along each axis "
                             "must be of even degree and strictly positive");
    }

    /// Builds a 1-D potential from {exponent, coefficient} pairs.
    static PolynomialPotential one_d(std::initializer_list<std::pair<int, double>> terms,
                                     Confinement confinement = Confinement::unchecked) {
        std::vector<Term> out;
        for (auto [e, c] : terms) out.push_back({{e, 0}, c});
        return PolynomialPotential(1, std::move(out), confinement);
    }

    int dimension() const noexcept { return dimension_; }
    std::span<const Term> terms() const noexcept { return terms_; }
    int degree() const noexcept { return degree_; }

    double coefficient(Exponent e) const noexcept {
        for (const auto& t : terms_)
            if (t.exponent == e) return t.coefficient;
        return 0.0;
    }

    /// Leading coefficient along each axis is of even degree and positive.
    bool is_confining() const {
        for (int axis = 0; axis < dimension_; ++axis) {
            int lead = -1;
            double coef = 0.0;
            for (const auto& t : terms_) {
                if (dimension_ == 2 && t.exponent[1 - axis] != 0) continue;
                if (t.exponent[axis] > lead) {
                    lead = t.exponent[axis];
                    coef = t.coefficient;
                }
            }
            if (lead <= 0 || lead % 2 != 0 || coef <= 0.0) return false;
        }
        return true;
    }

    /// Invariant under x -> -x (and y -> -y separately in 2-D).
    bool is_parity_even() const noexcept {
        return std::all_of(terms_.begin(), terms_.end(), [](const Term& t) {
            return t.exponent[0] % 2 == 0 && t.exponent[1] % 2 == 0;
        });
    }

    double operator()(double x) const noexcept {
        double v = 0.0;
        for (const auto& t : terms_) v += t.coefficient * ipow(x, t.exponent[0]);
        return v;
    }

    double operator()(double x, double y) const noexcept {
        double v = 0.0;
        for (const auto& t : terms_)
            v += t.coefficient * ipow(x, t.exponent[0]) * ipow(y, t.exponent[1]);
        return v;
    }

    double derivative(double x) const noexcept {
        double v = 0.0;
        for (const auto& t : terms_)
            if (t.exponent[0] > 0) v += t.coefficient * t.exponent[0] * ipow(x, t.exponent[0] - 1);
        return v;
    }

    double second_derivative(double x) const noexcept {
        double v = 0.0;
        for (const auto& t : terms_) {
            const int e = t.exponent[0];
            if (e > 1) v += t.coefficient * e * (e - 1) * ipow(x, e - 2);
        }
        return v;
    }

    std::array<double, 2> gradient(double x, double y) const noexcept {
        std::array<double, 2> g{0.0, 0.0};
        for (const auto& t : terms_) {
            const auto [a, b] = t.exponent;
            if (a > 0) g[0] += t.coefficient * a * ipow(x, a - 1) * ipow(y, b);
            if (b > 0) g[1] += t.coefficient * b * ipow(x, a) * ipow(y, b - 1);
        }
        return g;
    }

    /// Returns {V_xx, V_xy, V_yy}.
    std::array<double, 3> hessian(double x, double y) const noexcept {
        std::array<double, 3> h{0.0, 0.0, 0.0};
        for (const auto& t : terms_) {
            const auto [a, b] = t.exponent;
            if (a > 1) h[0] += t.coefficient * a * (a - 1) * ipow(x, a - 2) * ipow(y, b);
            if (a > 0 && b > 0) h[1] += t.coefficient * a * b * ipow(x, a - 1) * ipow(y, b - 1);
            if (b > 1) h[2] += t.coefficient * b * (b - 1) * ipow(x, a) * ipow(y, b - 2);
        }
        return h;
    }

    /// Arity-checked evaluation at a coordinate tuple.
    double value(std::span<const double> point) const {
        if (static_cast<int>(point.size()) != dimension_)
            throw InputError("point arity " + std::to_string(point.size()) +
                             " does not match potential dimension " + std::to_string(dimension_));
        return dimension_ == 1 ? (*this)(point[0]) : (*this)(point[0], point[1]);
    }

    PolynomialPotential scaled(double factor) const {
        std::vector<Term> out(terms_.begin(), terms_.end());
        for (auto& t : out) t.coefficient *= factor;
        return PolynomialPotential(dimension_, std::move(out));
    }

    PolynomialPotential with_coefficient(Exponent e, double c) const {
        std::vector<Term> out;
        for (const auto& t : terms_)
            if (t.exponent != e) out.push_back(t);
        out.push_back({e, c});
        return PolynomialPotential(dimension_, std::move(out));
    }

    friend PolynomialPotential operator+(const PolynomialPotential& a, const PolynomialPotential& b) {
        if (a.dimension_ != b.dimension_) throw InputError("adding potentials of different dimension");
        std::vector<Term> out(a.terms_.begin(), a.terms_.end());
        out.insert(out.end(), b.terms_.begin(), b.terms_.end());
        return PolynomialPotential(a.dimension_, std::move(out));
    }

    friend bool operator==(const PolynomialPotential&, const PolynomialPotential&) = default;

    static double ipow(double x, int e) noexcept {
        double r = 1.0;
        for (; e > 0; --e) r *= x;
        return r;
    }

private:
    int dimension_ = 1;
    std::vector<Term> terms_;
    int degree_ = 0;
};

/// Sum of c * prod x_i^e_i at `point`; throws InputError on arity mismatch.
inline double evaluate_potential(const PolynomialPotential& p, std::span<const double> point) {
    return p.value(point);
}

/// Location and value of a potential minimum.
struct PotentialMinimum {
    std::array<double, 2> position{0.0, 0.0};
    double value = 0.0;
};

namespace detail {

inline PotentialMinimum polish_minimum_1d(const PolynomialPotential& p, double x, double lo, double hi) {
    for (int it = 0; it < 50; ++it) {
        const double d1 = p.derivative(x);
        const double d2 = p.second_derivative(x);
        if (d2 <= 0.0) break;
        const double step = d1 / d2;
        const double next = std::clamp(x - step, lo, hi);
        if (p(next) > p(x)) break;
        x = next;
        if (std::abs(step) < 1e-15 * (1.0 + std::abs(x))) break;
    }
    return {{x, 0.0}, p(x)};
}

} // namespace detail

/// Global minimum of a 1-D polynomial on [lo, hi] by dense sampling plus Newton polishing.
inline PotentialMinimum minimize_potential_1d(const PolynomialPotential& p, double lo, double hi,
                                              int samples = 4001) {
    double best_x = lo;
    double best_v = p(lo);
    for (int i = 0; i < samples; ++i) {
        const double x = lo + (hi - lo) * i / (samples - 1);
        if (const double v = p(x); v < best_v) {
            best_v = v;
            best_x = x;
        }
    }
    return detail::polish_minimum_1d(p, best_x, lo, hi);
}

/// Radius R such that V on the boundary of [-R, R]^d exceeds V(0) at every sampled point.
inline double confinement_radius(const PolynomialPotential& p) {
    if (!p.is_confining()) throw InputError("confinement radius requested for non-confining potential");
    const double v0 = p.dimension() == 1 ? p(0.0) : p(0.0, 0.0);
    for (double r = 1.0; r < 1e6; r *= 2.0) {
        bool above = true;
        if (p.dimension() == 1) {
            above = p(r) > v0 && p(-r) > v0;
        } else {
            for (int i = 0; i <= 400 && above; ++i) {
                const double s = -r + 2.0 * r * i / 400.0;
                above = p(s, r) > v0 && p(s, -r) > v0 && p(r, s) > v0 && p(-r, s) > v0;
            }
        }
        if (above) return r;
    }
    throw InputError("could not bound the potential minimum");
}

/// Global minimum of a confining potential (1-D or 2-D).
inline PotentialMinimum minimize_potential(const PolynomialPotential& p) {
    const double r = confinement_radius(p);
    if (p.dimension() == 1) return minimize_potential_1d(p, -r, r);

    constexpr int n = 201;
    double bx = 0.0, by = 0.0, bv = p(0.0, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double x = -r + 2.0 * r * i / (n - 1);
            const double y = -r + 2.0 * r * j / (n - 1);
            if (const double v = p(x, y); v < bv) {
                bv = v;
                bx = x;
                by = y;
            }
        }
    }
    for (int it = 0; it < 50; ++it) {
        const auto g = p.gradient(bx, by);
        const auto h = p.hessian(bx, by);
        const double det = h[0] * h[2] - h[1] * h[1];
        if (det <= 0.0 || h[0] <= 0.0) break;
        const double dx = (h[2] * g[0] - h[1] * g[1]) / det;
        const double dy = (h[0] * g[1] - h[1] * g[0]) / det;
        if (p(bx - dx, by - dy) > bv) break;
        bx -= dx;
        by -= dy;
        bv = p(bx, by);
        if (std::hypot(dx, dy) < 1e-15 * (1.0 + std::hypot(bx, by))) break;
    }
    return {{bx, by}, bv};
}

} // namespace qaction
