#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"
#include "qaction/parallel.hpp"
#include "qaction/polynomial.hpp"
#include "qaction/symplectic.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace qaction {

enum class EnergyReference { absolute, above_minimum };

/// Section plane q_axis = value crossed with sign(qdot_axis) = orientation, at fixed energy.
struct SectionSpec {
    int axis = 1;
    double value = 0.0;
    int orientation = 1;
    double energy = 1.0;
    EnergyReference reference = EnergyReference::above_minimum;
    std::vector<PhaseState> initial_conditions;
    int max_crossings = 200;
    double dt = 2e-3;
    /// Per-orbit integration time cap.
    double max_time = 1e4;

    int other_axis() const noexcept { return 1 - axis; }
};

struct SectionPoint {
    int orbit = 0;
    /// In-plane coordinate and its conjugate momentum.
    double q = 0.0;
    double p = 0.0;
    friend bool operator==(const SectionPoint&, const SectionPoint&) = default;
};

struct PoincareSection {
    SectionSpec spec;
    ActionSpec action;
    /// Absolute energy of the shell.
    double energy = 0.0;
    std::vector<SectionPoint> points;

    std::vector<SectionPoint> orbit(int id) const {
        std::vector<SectionPoint> out;
        for (const auto& p : points)
            if (p.orbit == id) out.push_back(p);
        return out;
    }
    int orbit_count() const noexcept { return static_cast<int>(spec.initial_conditions.size()); }
};

/// Bound region of a 2-D potential around the origin. A confining potential has an infinite
/// escape energy; otherwise the well is enclosed by the square of half-width `radius` on whose
/// boundary V stays at or above `escape`.
struct PotentialWell {
    double radius = 0.0;
    PotentialMinimum minimum;
    double escape = std::numeric_limits<double>::infinity();
};

namespace detail {

inline double ring_minimum(const PolynomialPotential& p, double r) {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 400; ++i) {
        const double s = -r + 2.0 * r * i / 400.0;
        m = std::min({m, p(s, r), p(s, -r), p(r, s), p(-r, s)});
    }
    return m;
}

} // namespace detail

inline PotentialWell potential_well(const PolynomialPotential& p) {
    if (p.dimension() != 2) throw InputError("potential well lookup needs a 2-D potential");
    if (p.is_confining()) return {4.0 * confinement_radius(p), minimize_potential(p)};
    // Radius of the highest enclosing ring: the barrier between the well and the outside.
    double best_r = 0.0, best_m = -std::numeric_limits<double>::infinity();
    for (double r = 1e-2; r < 1e4; r *= 1.01) {
        const double m = detail::ring_minimum(p, r);
        if (m > best_m) {
            best_m = m;
            best_r = r;
        } else if (m < best_m - 1e-9 * (1.0 + std::abs(best_m)) && r > 1.5 * best_r) {
            break;
        }
    }
    const double r = best_r;
    constexpr int n = 201;
    PotentialMinimum mn{{0.0, 0.0}, p(0.0, 0.0)};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = -r + 2.0 * r * i / (n - 1), y = -r + 2.0 * r * j / (n - 1);
            if (const double v = p(x, y); v < mn.value) mn = {{x, y}, v};
        }
    for (int it = 0; it < 50; ++it) {
        const auto g = p.gradient(mn.position[0], mn.position[1]);
        const auto h = p.hessian(mn.position[0], mn.position[1]);
        const double det = h[0] * h[2] - h[1] * h[1];
        if (det <= 0.0 || h[0] <= 0.0) break;
        const double x = mn.position[0] - (h[2] * g[0] - h[1] * g[1]) / det;
        const double y = mn.position[1] - (h[0] * g[1] - h[1] * g[0]) / det;
        if (!(p(x, y) <= mn.value)) break;
        mn = {{x, y}, p(x, y)};
    }
    if (!(best_m > mn.value)) throw InputError("potential has no bound well");
    return {r, mn, best_m};
}

/// Absolute shell energy for a spec under action a.
inline double absolute_energy(const ActionSpec& a, const SectionSpec& s) {
    const auto well = potential_well(a.potential());
    const double e = s.reference == EnergyReference::absolute ? s.energy : s.energy + well.minimum.value;
    if (!(e < well.escape)) throw InputError("section energy is above the escape barrier of the potential");
    return e;
}

namespace detail {

inline double section_potential(const ActionSpec& a, const SectionSpec& s, double q) {
    return s.axis == 1 ? a.potential()(q, s.value) : a.potential()(s.value, q);
}

/// Momentum along the section normal that puts (q, p) on the shell with the required orientation;
/// NaN outside the allowed region.
inline double normal_momentum(const ActionSpec& a, const SectionSpec& s, double e, double q, double p) {
    const double m = a.mass(), c = a.kinetic_coupling();
    const double det = m * m - c * c;
    const double disc = c * c * p * p - m * (m * p * p - 2.0 * det * (e - section_potential(a, s, q)));
    if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
    return (c * p + s.orientation * std::sqrt(disc)) / m;
}

/// [lo, hi] of the in-plane coordinate where V <= e on the plane.
inline std::pair<double, double> allowed_interval(const ActionSpec& a, const SectionSpec& s, double e) {
    // Minimum of V along the plane line, inside the well.
    const double r = potential_well(a.potential()).radius;
    double best = 0.0, vbest = section_potential(a, s, 0.0);
    for (int i = 0; i <= 4000; ++i) {
        const double q = -r + 2.0 * r * i / 4000.0;
        if (const double v = section_potential(a, s, q); v < vbest) {
            vbest = v;
            best = q;
        }
    }
    if (!(vbest < e)) throw InputError("section energy is below the potential on the section plane");
    auto edge = [&](double dir) {
        const double step = r / 4000.0;
        double lo = best, hi = best + dir * step;
        while (section_potential(a, s, hi) < e) {
            lo = hi;
            hi += dir * step;
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (section_potential(a, s, mid) < e ? lo : hi) = mid;
        }
        return lo;
    };
    return {edge(-1.0), edge(1.0)};
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Section-coordinate-as-time RK4 (Henon): advances s until q_axis equals the plane value.
inline PhaseState henon_step(const ActionSpec& a, const SectionSpec& spec, PhaseState s) {
    const int ax = spec.axis;
    auto deriv = [&](const PhaseState& st) {
        const auto v = a.dimension() == 2 ? a.inverse_mass(st.momentum[0], st.momentum[1])
                                          : std::array<double, 2>{st.momentum[0] / a.mass(), 0.0};
        const auto g = a.potential().gradient(st.position[0], st.position[1]);
        const double inv = 1.0 / v[static_cast<std::size_t>(ax)];
        return std::array<double, 4>{v[0] * inv, v[1] * inv, -g[0] * inv, -g[1] * inv};
    };
    auto add = [](PhaseState st, const std::array<double, 4>& k, double h) {
        st.position[0] += h * k[0];
        st.position[1] += h * k[1];
        st.momentum[0] += h * k[2];
        st.momentum[1] += h * k[3];
        return st;
    };
    constexpr int substeps = 8;
    const double h = (spec.value - s.position[static_cast<std::size_t>(ax)]) / substeps;
    for (int i = 0; i < substeps; ++i) {
        const auto k1 = deriv(s);
        const auto k2 = deriv(add(s, k1, 0.5 * h));
        const auto k3 = deriv(add(s, k2, 0.5 * h));
        const auto k4 = deriv(add(s, k3, h));
        std::array<double, 4> k{};
        for (int j = 0; j < 4; ++j) k[static_cast<std::size_t>(j)] = (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0;
        s = add(s, k, h);
    }
    s.position[static_cast<std::size_t>(ax)] = spec.value;
    return s;
}

} // namespace detail

/// Deterministic low-discrepancy (R2 sequence) placement of `count` states on the energy shell in
/// the section plane, seeded through splitmix64.
inline std::vector<PhaseState> shell_initial_conditions(const ActionSpec& a, const SectionSpec& spec, int count,
                                                        std::uint64_t seed = 1) {
    if (a.dimension() != 2) throw InputError("section initial conditions need a 2-D action");
    if (count < 1) throw InputError("need at least one initial condition");
    const double e = absolute_energy(a, spec);
    const auto [lo, hi] = detail::allowed_interval(a, spec, e);
    double vmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) vmin = std::min(vmin, detail::section_potential(a, spec, lo + (hi - lo) * i / 2000.0));
    const double pmax = std::sqrt(2.0 * a.mass() * (e - vmin));
    constexpr double g = 1.32471795724474602596;
    const double a1 = 1.0 / g, a2 = 1.0 / (g * g);
    std::uint64_t st = seed;
    const double o1 = static_cast<double>(detail::splitmix64(st) >> 11) * 0x1.0p-53;
    const double o2 = static_cast<double>(detail::splitmix64(st) >> 11) * 0x1.0p-53;
    std::vector<PhaseState> out;
    for (std::uint64_t n = 1; static_cast<int>(out.size()) < count && n < 1000000; ++n) {
        const double u1 = std::fmod(o1 + a1 * static_cast<double>(n), 1.0);
        const double u2 = std::fmod(o2 + a2 * static_cast<double>(n), 1.0);
        const double q = lo + (hi - lo) * u1;
        const double p = pmax * (2.0 * u2 - 1.0);
        if (p * p >= (1.0 - 1e-9) * 2.0 * a.mass() * (e - detail::section_potential(a, spec, q))) continue;
        const double pn = detail::normal_momentum(a, spec, e, q, p);
        if (!std::isfinite(pn)) continue;
        PhaseState s;
        s.position[static_cast<std::size_t>(spec.axis)] = spec.value;
        s.position[static_cast<std::size_t>(spec.other_axis())] = q;
        s.momentum[static_cast<std::size_t>(spec.axis)] = pn;
        s.momentum[static_cast<std::size_t>(spec.other_axis())] = p;
        out.push_back(s);
    }
    return out;
}

/// State on the shell through (q, p) on the section plane.
inline PhaseState shell_state(const ActionSpec& a, const SectionSpec& spec, double q, double p) {
    const double pn = detail::normal_momentum(a, spec, absolute_energy(a, spec), q, p);
    if (!std::isfinite(pn)) throw InputError("point lies outside the energetically allowed region");
    PhaseState s;
    s.position[static_cast<std::size_t>(spec.axis)] = spec.value;
    s.position[static_cast<std::size_t>(spec.other_axis())] = q;
    s.momentum[static_cast<std::size_t>(spec.axis)] = pn;
    s.momentum[static_cast<std::size_t>(spec.other_axis())] = p;
    return s;
}

/// Crossings of every orbit with the section plane, refined onto the plane by a Henon step.
inline PoincareSection generate_section(const ActionSpec& a, const SectionSpec& spec, unsigned workers = 0) {
    if (a.dimension() != 2) throw InputError("Poincare sections need a 2-D action");
    if (spec.axis != 0 && spec.axis != 1) throw InputError("section axis must be 0 or 1");
    if (spec.orientation != 1 && spec.orientation != -1) throw InputError("orientation must be +1 or -1");
    if (!(spec.dt > 0.0) || spec.dt > 1e-2) throw InputError("section time step must lie in (0, 1e-2]");
    if (spec.max_crossings < 1) throw InputError("max_crossings must be positive");
    if (spec.initial_conditions.empty()) throw InputError("section needs initial conditions");
    const double e = absolute_energy(a, spec);
    if (!(e > potential_well(a.potential()).minimum.value)) throw InputError("section energy must exceed min V");
    for (const auto& s : spec.initial_conditions)
        if (!s.finite() || std::abs(hamiltonian(a, s) - e) > 1e-10 * std::max(1.0, std::abs(e)))
            throw InputError("initial condition is not on the energy shell");

    const auto ax = static_cast<std::size_t>(spec.axis);
    const auto ox = static_cast<std::size_t>(spec.other_axis());
    std::vector<std::vector<SectionPoint>> per_orbit(spec.initial_conditions.size());
    parallel_for(per_orbit.size(), workers, [&](std::size_t id) {
        auto& pts = per_orbit[id];
        PhaseState prev = spec.initial_conditions[id];
        // An opposite-orientation transit must occur before the next crossing is accepted.
        bool armed = false;
        integrate_realtime(a, prev, spec.max_time, spec.dt, [&](std::size_t, double, const PhaseState& cur) {
            const double d0 = (prev.position[ax] - spec.value) * spec.orientation;
            const double d1 = (cur.position[ax] - spec.value) * spec.orientation;
            if (d0 > 0.0 && d1 <= 0.0) armed = true;
            if (d0 < 0.0 && d1 >= 0.0 && armed) {
                const auto vp = a.inverse_mass(prev.momentum[0], prev.momentum[1]);
                const auto vc = a.inverse_mass(cur.momentum[0], cur.momentum[1]);
                const PhaseState& from = std::abs(vp[ax]) >= std::abs(vc[ax]) ? prev : cur;
                const auto hit = detail::henon_step(a, spec, from);
                pts.push_back({static_cast<int>(id), hit.position[ox], hit.momentum[ox]});
                armed = false;
            }
            prev = cur;
            return static_cast<int>(pts.size()) < spec.max_crossings;
        });
    });
    PoincareSection out{spec, a, e, {}};
    for (auto& v : per_orbit) out.points.insert(out.points.end(), v.begin(), v.end());
    return out;
}

/// Fixed box partition of the section plane over a rectangle.
struct SectionBoxes {
    double q_lo = 0.0, q_hi = 0.0, p_lo = 0.0, p_hi = 0.0;
    int nq = 0, np = 0;
    /// Flags of boxes intersecting an energetically allowed region.
    std::vector<char> allowed;

    int box_of(double q, double p) const noexcept {
        const int i = std::clamp(static_cast<int>(std::floor((q - q_lo) / (q_hi - q_lo) * nq)), 0, nq - 1);
        const int j = std::clamp(static_cast<int>(std::floor((p - p_lo) / (p_hi - p_lo) * np)), 0, np - 1);
        return i * np + j;
    }
    std::size_t allowed_count() const {
        return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), char{1}));
    }
};

namespace detail {

inline std::pair<double, double> momentum_bound(const PoincareSection& s, double lo, double hi) {
    double vmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 2000; ++i) vmin = std::min(vmin, section_potential(s.action, s.spec, lo + (hi - lo) * i / 2000.0));
    const double pmax = std::sqrt(2.0 * s.action.mass() * (s.energy - vmin));
    return {-pmax, pmax};
}

inline void mark_allowed(SectionBoxes& b, const PoincareSection& s) {
    constexpr int sub = 6;
    for (int i = 0; i < b.nq; ++i)
        for (int j = 0; j < b.np; ++j) {
            auto& flag = b.allowed[static_cast<std::size_t>(i * b.np + j)];
            for (int u = 0; u <= sub && !flag; ++u)
                for (int w = 0; w <= sub && !flag; ++w) {
                    const double q = b.q_lo + (b.q_hi - b.q_lo) * (i + static_cast<double>(u) / sub) / b.nq;
                    const double p = b.p_lo + (b.p_hi - b.p_lo) * (j + static_cast<double>(w) / sub) / b.np;
                    if (p * p <= 2.0 * s.action.mass() * (s.energy - section_potential(s.action, s.spec, q)))
                        flag = 1;
                }
        }
}

inline SectionBoxes boxes_for(const std::vector<const PoincareSection*>& secs, int nq, int np) {
    if (nq < 1 || np < 1) throw InputError("box grid needs positive counts");
    SectionBoxes b;
    b.q_lo = b.p_lo = std::numeric_limits<double>::infinity();
    b.q_hi = b.p_hi = -std::numeric_limits<double>::infinity();
    for (const auto* s : secs) {
        const auto [lo, hi] = allowed_interval(s->action, s->spec, s->energy);
        const auto [pl, ph] = momentum_bound(*s, lo, hi);
        b.q_lo = std::min(b.q_lo, lo);
        b.q_hi = std::max(b.q_hi, hi);
        b.p_lo = std::min(b.p_lo, pl);
        b.p_hi = std::max(b.p_hi, ph);
    }
    b.nq = nq;
    b.np = np;
    b.allowed.assign(static_cast<std::size_t>(nq * np), 0);
    for (const auto* s : secs) mark_allowed(b, *s);
    return b;
}

inline std::set<int> occupied(const SectionBoxes& b, const PoincareSection& s) {
    std::set<int> out;
    for (const auto& p : s.points) out.insert(b.box_of(p.q, p.p));
    return out;
}

} // namespace detail

/// Occupied boxes over boxes meeting the allowed (q, p) region, on an nq x np partition of the
/// region's bounding rectangle.
inline double section_occupancy(const PoincareSection& s, int nq = 64, int np = 64) {
    if (s.points.empty()) throw InputError("occupancy of an empty section");
    const auto b = detail::boxes_for({&s}, nq, np);
    return static_cast<double>(detail::occupied(b, s).size()) / static_cast<double>(b.allowed_count());
}

/// Number of occupied boxes (for box-counting exponents).
inline std::size_t section_occupied_boxes(const PoincareSection& s, int nq, int np) {
    if (s.points.empty()) throw InputError("occupancy of an empty section");
    return detail::occupied(detail::boxes_for({&s}, nq, np), s).size();
}

/// Median over an orbit's crossings of the distance to the line through the point's two nearest
/// neighbours, in coordinates scaled to the orbit's extent. Near zero for orbits on smooth
/// invariant curves or periodic points, of order the point spacing for chaotic clouds. NaN with
/// fewer than three points.
inline double orbit_thickness(const std::vector<SectionPoint>& pts) {
    if (pts.size() < 3) return std::numeric_limits<double>::quiet_NaN();
    double qmin = pts[0].q, qmax = qmin, pmin = pts[0].p, pmax = pmin;
    for (const auto& p : pts) {
        qmin = std::min(qmin, p.q);
        qmax = std::max(qmax, p.q);
        pmin = std::min(pmin, p.p);
        pmax = std::max(pmax, p.p);
    }
    const double span = std::max(qmax - qmin, pmax - pmin);
    if (span < 1e-12) return span;
    const double qs = std::max(qmax - qmin, 1e-12 * span), ps = std::max(pmax - pmin, 1e-12 * span);
    std::vector<std::array<double, 2>> z(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) z[i] = {(pts[i].q - qmin) / qs, (pts[i].p - pmin) / ps};
    std::vector<double> dist;
    dist.reserve(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        std::size_t n1 = i, n2 = i;
        double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (k == i) continue;
            const double d = std::hypot(z[k][0] - z[i][0], z[k][1] - z[i][1]);
            if (d < d1) {
                d2 = d1;
                n2 = n1;
                d1 = d;
                n1 = k;
            } else if (d < d2) {
                d2 = d;
                n2 = k;
            }
        }
        const double ax = z[n2][0] - z[n1][0], ay = z[n2][1] - z[n1][1];
        const double len = std::hypot(ax, ay);
        if (len == 0.0) {
            dist.push_back(d1);
            continue;
        }
        dist.push_back(std::abs(ax * (z[i][1] - z[n1][1]) - ay * (z[i][0] - z[n1][0])) / len);
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<long>(dist.size() / 2), dist.end());
    return dist[dist.size() / 2];
}

struct ThicknessStats {
    double median = 0.0;
    double max = 0.0;
    int orbits = 0;
};

inline ThicknessStats thickness_stats(const PoincareSection& s) {
    std::vector<double> t;
    for (int id = 0; id < s.orbit_count(); ++id)
        if (const double v = orbit_thickness(s.orbit(id)); std::isfinite(v)) t.push_back(v);
    ThicknessStats r;
    r.orbits = static_cast<int>(t.size());
    if (t.empty()) return r;
    r.max = *std::max_element(t.begin(), t.end());
    std::nth_element(t.begin(), t.begin() + static_cast<long>(t.size() / 2), t.end());
    r.median = t[t.size() / 2];
    return r;
}

struct SectionComparison {
    double occupancy_first = 0.0;
    double occupancy_second = 0.0;
    std::size_t occupied_first = 0;
    std::size_t occupied_second = 0;
    std::size_t symmetric_difference = 0;
    std::size_t union_size = 0;
    ThicknessStats thickness_first;
    ThicknessStats thickness_second;

    double relative_difference() const noexcept {
        return union_size ? static_cast<double>(symmetric_difference) / static_cast<double>(union_size) : 0.0;
    }
};

/// Occupancies and box-set symmetric difference on a common partition, plus thickness statistics.
inline SectionComparison compare_sections(const PoincareSection& first, const PoincareSection& second, int nq = 64,
                                          int np = 64) {
    if (first.spec.reference != second.spec.reference || first.spec.energy != second.spec.energy)
        throw InputError("sections use different energy conventions");
    if (first.spec.axis != second.spec.axis || first.spec.value != second.spec.value ||
        first.spec.orientation != second.spec.orientation)
        throw InputError("sections use different planes");
    if (first.points.empty() || second.points.empty()) throw InputError("comparison of an empty section");
    const auto b = detail::boxes_for({&first, &second}, nq, np);
    const auto a1 = detail::occupied(b, first), a2 = detail::occupied(b, second);
    SectionComparison r;
    const double total = static_cast<double>(b.allowed_count());
    r.occupied_first = a1.size();
    r.occupied_second = a2.size();
    r.occupancy_first = static_cast<double>(a1.size()) / total;
    r.occupancy_second = static_cast<double>(a2.size()) / total;
    std::vector<int> sd, un;
    std::set_symmetric_difference(a1.begin(), a1.end(), a2.begin(), a2.end(), std::back_inserter(sd));
    std::set_union(a1.begin(), a1.end(), a2.begin(), a2.end(), std::back_inserter(un));
    r.symmetric_difference = sd.size();
    r.union_size = un.size();
    r.thickness_first = thickness_stats(first);
    r.thickness_second = thickness_stats(second);
    return r;
}

inline nlohmann::json comparison_to_json(const SectionComparison& c) {
    auto th = [](const ThicknessStats& t) { return nlohmann::json{{"median", t.median}, {"max", t.max}, {"orbits", t.orbits}}; };
    return {{"occupancy_classical", c.occupancy_first},
            {"occupancy_quantum", c.occupancy_second},
            {"occupied_classical", c.occupied_first},
            {"occupied_quantum", c.occupied_second},
            {"symmetric_difference", c.symmetric_difference},
            {"union", c.union_size},
            {"relative_difference", c.relative_difference()},
            {"thickness_classical", th(c.thickness_first)},
            {"thickness_quantum", th(c.thickness_second)}};
}

} // namespace qaction
