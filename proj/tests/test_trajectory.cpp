#include "qaction/propagator.hpp"
#include "qaction/symplectic.hpp"
#include "qaction/trajectory.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace qaction;

namespace {

ActionSpec harmonic() { return ActionSpec(PolynomialPotential::one_d({{2, 0.5}})); }
ActionSpec quartic() { return ActionSpec(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}})); }
ActionSpec coupled(double v22 = 0.05) {
    return ActionSpec(PolynomialPotential(2, {{{2, 0}, 0.5}, {{0, 2}, 0.5}, {{2, 2}, v22}}));
}

// textbook Euclidean oscillator action, m = omega = 1
double ho_action(double xi, double xf, double T) {
    return ((xi * xi + xf * xf) * std::cosh(T) - 2 * xi * xf) / (2 * std::sinh(T));
}

PhaseState reversed(PhaseState s) {
    s.momentum[0] = -s.momentum[0];
    s.momentum[1] = -s.momentum[1];
    return s;
}

} // namespace

TEST(Bvp, ZeroPathHasZeroAction) {
    const auto sol = solve_euclidean_bvp(harmonic(), 0.0, 0.0, 1.0);
    EXPECT_TRUE(sol.converged);
    EXPECT_NEAR(sol.action, 0.0, 1e-14);
    for (const auto& p : sol.path) EXPECT_NEAR(p[0], 0.0, 1e-14);
}

TEST(Bvp, HarmonicActionMatchesClosedForm) {
    const auto sol = solve_euclidean_bvp(harmonic(), 0.0, 1.0, 1.0, 1025);
    ASSERT_TRUE(sol.converged);
    EXPECT_NEAR(sol.action, 0.5 / std::tanh(1.0), 1e-6);
    EXPECT_NEAR(sol.action, 0.6565176, 1e-7);
    for (double T : {0.3, 2.0, 5.0}) {
        const auto s = solve_euclidean_bvp(harmonic(), -0.7, 1.3, T, 1025);
        EXPECT_NEAR(s.action, ho_action(-0.7, 1.3, T), 1e-6 * (1 + ho_action(-0.7, 1.3, T))) << T;
    }
}

TEST(Bvp, HarmonicPathIsSinhProfile) {
    const auto sol = solve_euclidean_bvp(harmonic(), 0.0, 1.0, 2.0, 513);
    for (std::size_t k = 0; k < sol.nodes(); ++k)
        EXPECT_NEAR(sol.path[k][0], std::sinh(sol.times[k]) / std::sinh(2.0), 1e-8);
}

TEST(Bvp, FreeParticleStraightLine) {
    const ActionSpec free(PolynomialPotential(1, {}));
    const auto sol = solve_euclidean_bvp(free, 0.0, 1.0, 0.5);
    EXPECT_NEAR(sol.action, 1.0, 1e-12);
    for (std::size_t k = 0; k < sol.nodes(); ++k) EXPECT_NEAR(sol.path[k][0], sol.times[k] / 0.5, 1e-12);
    EXPECT_NEAR(evaluate_action(free, sol, ActionKind::real), 1.0, 1e-12);
}

TEST(Bvp, EndpointsAreExact) {
    const auto sol = solve_euclidean_bvp(quartic(), -0.37, 1.91, 3.0);
    EXPECT_EQ(sol.path.front()[0], -0.37);
    EXPECT_EQ(sol.path.back()[0], 1.91);
    EXPECT_EQ(sol.times.front(), 0.0);
    EXPECT_DOUBLE_EQ(sol.times.back(), 3.0);
    EXPECT_EQ(sol.nodes(), 257u);
}

TEST(Bvp, EuclideanEnergyConserved) {
    for (const auto& a : {harmonic(), quartic()}) {
        const auto sol = solve_euclidean_bvp(a, -1.0, 1.5, 2.0, 2049);
        const auto eps = euclidean_energy_profile(a, sol);
        double spread = 0;
        for (double e : eps) spread = std::max(spread, std::abs(e - eps.front()));
        EXPECT_LT(spread, 1e-6 * std::abs(eps.front()) + 1e-10);
        EXPECT_NEAR(sol.energy_spread, spread, 1e-12);
    }
}

TEST(Bvp, RefinementConverges) {
    // quadrature is fourth order, so halving the step shrinks the change at least fourfold
    const double s1 = solve_euclidean_bvp(quartic(), -1.0, 1.5, 2.0, 65).action;
    const double s2 = solve_euclidean_bvp(quartic(), -1.0, 1.5, 2.0, 129).action;
    const double s3 = solve_euclidean_bvp(quartic(), -1.0, 1.5, 2.0, 257).action;
    const double s4 = solve_euclidean_bvp(quartic(), -1.0, 1.5, 2.0, 513).action;
    EXPECT_GT(std::abs(s2 - s1) / std::abs(s3 - s2), 4.0);
    EXPECT_LT(std::abs(s4 - s3), 1e-6);
}

TEST(Bvp, AgreesWithPropagatorLogarithm) {
    const SpectralPropagator prop(harmonic(), Grid(8.0, 16001), 1.0);
    for (double T : {1.0, 2.0})
        for (auto [xi, xf] : {std::pair{0.0, 1.0}, std::pair{-0.5, 0.8}}) {
            const double g = prop.evaluate({{xi, 0.0}, {xf, 0.0}}, T)[0];
            const double z = std::sqrt(1.0 / (2 * std::numbers::pi * std::sinh(T)));
            const double sigma = solve_euclidean_bvp(harmonic(), xi, xf, T, 1025).action;
            EXPECT_NEAR(-std::log(g) + std::log(z), sigma, 1e-6) << xi << " " << xf << " " << T;
        }
}

TEST(Bvp, LongTimeQuarticUsesContinuation) {
    const auto sol = solve_euclidean_bvp(quartic(), 1.0, 2.0, 20.0, 1025);
    EXPECT_TRUE(sol.converged);
    EXPECT_TRUE(std::isfinite(sol.action));
    EXPECT_LT(sol.residual, 1e-8);
}

TEST(Bvp, TwoDimensionalAxisPathReducesToOneD) {
    BvpOptions opt;
    opt.time_nodes = 513;
    const auto sol = solve_euclidean_bvp(coupled(), {0.0, 0.0}, {1.0, 0.0}, 1.0, opt);
    ASSERT_TRUE(sol.converged);
    EXPECT_EQ(sol.dimension, 2);
    for (const auto& p : sol.path) EXPECT_NEAR(p[1], 0.0, 1e-12);
    EXPECT_NEAR(sol.action, 0.5 / std::tanh(1.0), 1e-6);
}

TEST(Bvp, UniqueHarmonicExtremum) {
    BvpOptions opt;
    opt.check_multiplicity = true;
    const auto sol = solve_euclidean_bvp(harmonic(), {0.2, 0.0}, {-0.4, 0.0}, 1.5, opt);
    EXPECT_FALSE(sol.multiple_extrema);
}

TEST(Bvp, RejectsBadInputs) {
    EXPECT_THROW(solve_euclidean_bvp(harmonic(), 0.0, 1.0, 0.0), InputError);
    EXPECT_THROW(solve_euclidean_bvp(harmonic(), 0.0, 1.0, -1.0), InputError);
    EXPECT_THROW(solve_euclidean_bvp(harmonic(), 0.0, 1.0, 1.0, 31), InputError);
}

TEST(Symplectic, HarmonicPeriodReturnsToStart) {
    const PhaseState s{{1.0, 0.0}, {0.0, 0.0}};
    const auto e = integrate_realtime(harmonic(), s, 2 * std::numbers::pi, 1e-3, [](std::size_t, double, const PhaseState&) {});
    EXPECT_NEAR(e.position[0], 1.0, 1e-8);
    EXPECT_NEAR(e.momentum[0], 0.0, 1e-8);
}

TEST(Symplectic, FixedPointStaysPut) {
    const PhaseState s{};
    const auto e = integrate_realtime(coupled(), s, 50.0, 1e-2, [](std::size_t, double, const PhaseState&) {});
    EXPECT_EQ(e, s);
}

TEST(Symplectic, EnergyDriftIsBounded) {
    const auto a = coupled();
    PhaseState s{{2.0, 0.5}, {0.0, 0.0}};
    s.momentum[1] = std::sqrt(2 * (10.0 - hamiltonian(a, s)));
    const double e0 = hamiltonian(a, s);
    EXPECT_NEAR(e0, 10.0, 1e-12);
    double worst = 0;
    integrate_realtime(a, s, 1000.0, 1e-3, [&](std::size_t, double, const PhaseState& st) {
        worst = std::max(worst, std::abs(hamiltonian(a, st) - e0) / e0);
    });
    EXPECT_LT(worst, 1e-8);
}

TEST(Symplectic, TimeReversal) {
    const auto a = coupled();
    const PhaseState s{{1.3, -0.4}, {0.8, 1.1}};
    const auto f = integrate_realtime(a, s, 100.0, 1e-3, [](std::size_t, double, const PhaseState&) {});
    const auto b = integrate_realtime(a, reversed(f), 100.0, 1e-3, [](std::size_t, double, const PhaseState&) {});
    for (int i = 0; i < 2; ++i) {
        EXPECT_NEAR(b.position[i], s.position[i], 1e-9);
        EXPECT_NEAR(-b.momentum[i], s.momentum[i], 1e-9);
    }
}

TEST(Symplectic, SampledTrajectoryAndErrors) {
    const PhaseState s{{1.0, 0.0}, {0.0, 0.0}};
    const auto path = integrate_realtime(harmonic(), s, 1.0, 0.01, 10);
    ASSERT_EQ(path.size(), 11u);
    EXPECT_EQ(path.front(), s);
    EXPECT_NEAR(path.back().position[0], std::cos(1.0), 1e-9);
    EXPECT_THROW(integrate_realtime(harmonic(), s, 1.0, 0.0), InputError);
    EXPECT_THROW(integrate_realtime(harmonic(), s, -1.0, 0.01), InputError);
    EXPECT_THROW(integrate_realtime(harmonic(), s, 1.0, 0.01, 0), InputError);
}
