#include "qaction/propagator.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace qaction;

namespace {

ActionSpec harmonic(double m = 1.0, double k = 0.5) { return ActionSpec(PolynomialPotential::one_d({{2, k}}), m); }

// Mehler sum over normalised Hermite functions (m = omega = hbar = 1).
double mehler_kernel(double x, double y, double T) {
    double px0 = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * x * x), px1 = std::sqrt(2.0) * x * px0;
    double py0 = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * y * y), py1 = std::sqrt(2.0) * y * py0;
    double g = px0 * py0 * std::exp(-0.5 * T) + px1 * py1 * std::exp(-1.5 * T);
    for (int n = 1; n < 160; ++n) {
        const double a = std::sqrt(2.0 / (n + 1)), b = std::sqrt(static_cast<double>(n) / (n + 1));
        const double px2 = a * x * px1 - b * px0, py2 = a * y * py1 - b * py0;
        g += px2 * py2 * std::exp(-(n + 1.5) * T);
        px0 = px1;
        px1 = px2;
        py0 = py1;
        py1 = py2;
    }
    return g;
}

std::vector<BoundaryPair> pair_grid(double lo, double hi, int n) { return tensor_pairs(1, lo, hi, n); }

// Dense diagonalisation of the same finite-difference Hamiltonian, built independently.
double dense_ground_energy(const PolynomialPotential& v, double L, int n) {
    const double h = 2.0 * L / (n - 1);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        H(i, i) = 1.0 / (h * h) + v(-L + i * h);
        if (i + 1 < n) H(i, i + 1) = H(i + 1, i) = -0.5 / (h * h);
    }
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

} // namespace

TEST(Hamiltonian, FreeParticleStencil) {
    const ActionSpec free(PolynomialPotential(1, {}), 2.0, 1.5);
    const Grid g(3.0, 31);
    const auto H = discretize_hamiltonian(free, g);
    const double h = g.spacing();
    for (double d : H.diagonal()) EXPECT_NEAR(d, 1.5 * 1.5 / (2.0 * h * h), 1e-12);
    EXPECT_NEAR(H.hopping(), -1.5 * 1.5 / (2.0 * 2.0 * h * h), 1e-12);
}

TEST(Hamiltonian, CoupledModelIsExactlySymmetric) {
    const ActionSpec a(PolynomialPotential(2, {{{2, 0}, 0.5}, {{0, 2}, 0.5}, {{2, 2}, 0.05}}));
    const auto H = discretize_hamiltonian(a, Grid::square(6.0, 64)).matrix();
    const Eigen::SparseMatrix<double> Ht = H.transpose();
    EXPECT_EQ((H - Ht).norm(), 0.0);
}

TEST(Hamiltonian, DimensionMismatch) {
    EXPECT_THROW(discretize_hamiltonian(harmonic(), Grid::square(4.0, 20)), InputError);
}

TEST(GridTest, Invariants) {
    EXPECT_THROW(Grid(5.0, 15), InputError);
    EXPECT_THROW(Grid(-1.0, 100), InputError);
    EXPECT_NO_THROW(Grid::square(5.0, 128));
    EXPECT_THROW(Grid::square(5.0, 129), InputError);
    EXPECT_NO_THROW(Grid(5.0, 4001));
    const Grid g(4.0, 81);
    EXPECT_DOUBLE_EQ(g.spacing(), 0.1);
    EXPECT_DOUBLE_EQ(g.coordinate(40), 0.0);
    EXPECT_DOUBLE_EQ(g.coordinate(0), -g.coordinate(80));
}

TEST(Spectrum, HarmonicGroundState) {
    const auto s = spectral_decompose(discretize_hamiltonian(harmonic(), Grid(10.0, 513)), 1);
    EXPECT_NEAR(s.eigenvalues[0], 0.5, 1e-4);
}

TEST(Spectrum, HarmonicLowestFour) {
    const Grid g(10.0, 513);
    const auto s = spectral_decompose(discretize_hamiltonian(harmonic(), g), 4);
    ASSERT_EQ(s.size(), 4u);
    for (int n = 0; n < 3; ++n) EXPECT_NEAR(s.eigenvalues[n], n + 0.5, 1e-3);
    // n = 3 sits at the stencil's h^2 <p^4> / 24 shift, about 1.19e-3 on this grid
    const double h = g.spacing();
    const double p4 = (6.0 * 9 + 6.0 * 3 + 3.0) / 4.0;
    EXPECT_NEAR(3.5 - s.eigenvalues[3], h * h * p4 / 24.0, 2e-5);
    const auto fine = spectral_decompose(discretize_hamiltonian(harmonic(), Grid(10.0, 1025)), 4);
    for (int n = 0; n < 4; ++n) EXPECT_NEAR(fine.eigenvalues[n], n + 0.5, 1e-3);
}

TEST(Spectrum, OrthonormalAndAscending) {
    const auto s = spectral_decompose(discretize_hamiltonian(harmonic(), Grid(8.0, 801)), 12);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s.eigenvalues[i - 1], s.eigenvalues[i]);
    const Eigen::MatrixXd gram = s.grid.cell_volume() * s.eigenvectors.transpose() * s.eigenvectors;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Spectrum, UncoupledTwoDimensionalOscillator) {
    const ActionSpec a(PolynomialPotential(2, {{{2, 0}, 0.5}, {{0, 2}, 0.5}}));
    const auto s = spectral_decompose(discretize_hamiltonian(a, Grid::square(4.0, 128)), 3);
    EXPECT_NEAR(s.eigenvalues[0], 1.0, 1e-3);
    EXPECT_NEAR(s.eigenvalues[1], 2.0, 1e-3);
    EXPECT_NEAR(s.eigenvalues[2], 2.0, 1e-3);
    const Eigen::MatrixXd gram = s.grid.cell_volume() * s.eigenvectors.transpose() * s.eigenvectors;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Spectrum, QuarticAgainstDoubledResolutionOracle) {
    const auto v = PolynomialPotential::one_d({{4, 1.0}});
    const auto s = spectral_decompose(discretize_hamiltonian(ActionSpec(v), Grid(5.0, 401)), 1);
    EXPECT_NEAR(s.eigenvalues[0], dense_ground_energy(v, 5.0, 801), 1e-3);
    // same operator, dense solver
    EXPECT_NEAR(s.eigenvalues[0], dense_ground_energy(v, 5.0, 401), 1e-10);
}

TEST(Kernel, HarmonicOriginValue) {
    const std::vector<BoundaryPair> p{BoundaryPair::one_d(0.0, 0.0)};
    const auto t = euclidean_propagate(harmonic(), Grid(8.0, 2001), 1.0, p);
    EXPECT_NEAR(t.amplitudes[0], 0.36800, 1e-4);
}

TEST(Kernel, HarmonicMatchesMehlerSum) {
    // short-time far pairs cancel over many high states, which carry the h^2 stencil error
    const SpectralPropagator prop(harmonic(), Grid(8.0, 16001), 0.5);
    const auto pairs = pair_grid(-2.0, 2.0, 9);
    double worst = 0.0;
    for (double T : {0.5, 1.0, 2.0, 4.0}) {
        const auto t = prop.table(pairs, T);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const double ref = mehler_kernel(pairs[i].initial[0], pairs[i].final[0], T);
            worst = std::max(worst, std::abs(t.amplitudes[i] / ref - 1.0));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Kernel, OffNodeInterpolation) {
    const SpectralPropagator prop(harmonic(), Grid(8.0, 2001), 1.0);
    for (double x : {0.0123, -1.3337, 1.9991}) {
        const auto [g, e] = prop.evaluate(BoundaryPair::one_d(x, 0.31), 1.0);
        EXPECT_NEAR(g / mehler_kernel(x, 0.31, 1.0), 1.0, 1e-4);
    }
}

TEST(Kernel, SymmetricAndPositive) {
    const ActionSpec q(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}, {3, 0.05}}));
    const SpectralPropagator prop(q, Grid(6.0, 1201), 0.3);
    for (double T : {0.3, 1.0, 5.0}) {
        const auto pairs = pair_grid(-2.0, 2.0, 7);
        const auto t = prop.table(pairs, T);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            EXPECT_GT(t.amplitudes[i], 0.0);
            const double swapped = prop.evaluate(pairs[i].swapped(), T)[0];
            EXPECT_NEAR(t.amplitudes[i], swapped, 1e-10 * std::max(1.0, t.amplitudes[i]));
        }
    }
}

TEST(Kernel, Semigroup) {
    const ActionSpec q(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}}));
    const Grid g(6.0, 801);
    const SpectralPropagator prop(q, g, 0.8);
    const double T1 = 0.8, T2 = 1.1;
    // nodes with |y| <= 4.5; the tails beyond are far below 1e-6 of the integral
    const int lo = 100, hi = 700;
    for (auto [x, z] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {-1.0, 1.5}, {0.6, -0.3}}) {
        double s = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double y = g.coordinate(i);
            const double w = (i == lo || i == hi) ? 0.5 : 1.0;
            s += w * prop.evaluate(BoundaryPair::one_d(x, y), T1)[0] * prop.evaluate(BoundaryPair::one_d(y, z), T2)[0];
        }
        s *= g.spacing();
        const double direct = prop.evaluate(BoundaryPair::one_d(x, z), T1 + T2)[0];
        EXPECT_NEAR(s / direct, 1.0, 1e-6);
    }
}

TEST(Kernel, ScaleInvariance) {
    const ActionSpec a(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}}), 1.0);
    const Grid g(6.0, 601);
    const auto pairs = pair_grid(-2.0, 2.0, 5);
    const double T = 1.5;
    const auto base = euclidean_propagate(a, g, T, pairs);
    for (double alpha : {0.5, 2.0}) {
        const auto [b, Tb] = apply_scale_transform(a, T, ScaleTransform(alpha));
        const auto t = euclidean_propagate(b, g, Tb, pairs);
        for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_NEAR(t.amplitudes[i] / base.amplitudes[i], 1.0, 1e-6);
    }
}

TEST(Kernel, ScaleInvarianceTwoDimensional) {
    const ActionSpec a(PolynomialPotential(2, {{{2, 0}, 0.5}, {{0, 2}, 0.5}, {{2, 2}, 0.05}}));
    const Grid g = Grid::square(5.0, 40);
    const auto pairs = tensor_pairs(2, -1.0, 1.0, 2);
    const auto base = euclidean_propagate(a, g, 2.0, pairs);
    for (double alpha : {0.5, 2.0}) {
        const auto [b, Tb] = apply_scale_transform(a, 2.0, ScaleTransform(alpha));
        const auto t = euclidean_propagate(b, g, Tb, pairs);
        for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_NEAR(t.amplitudes[i] / base.amplitudes[i], 1.0, 1e-6);
    }
}

TEST(Kernel, FeynmanKacLimit) {
    for (const auto& a : {harmonic(), ActionSpec(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}}))}) {
        const Grid g(7.0, 1401);
        const SpectralPropagator prop(a, g, 5.0);
        const double T = 10.0, Tp = 0.9 * T;
        const auto p = BoundaryPair::one_d(0.0, 0.0);
        const double est = -a.hbar() / T * std::log(prop.evaluate(p, T)[0] / prop.evaluate(p, Tp)[0]) / (1.0 - Tp / T);
        EXPECT_NEAR(est, prop.spectral().ground_energy(), 1e-6);
    }
}

TEST(Kernel, LocalEnergyIsLogDerivative) {
    const ActionSpec a(PolynomialPotential::one_d({{2, 0.5}, {4, 0.1}}));
    const SpectralPropagator prop(a, Grid(6.0, 801), 0.5);
    const auto p = BoundaryPair::one_d(0.4, -0.9);
    const double T = 1.3, dT = 1e-4;
    const double fd = -(std::log(prop.evaluate(p, T + dT)[0]) - std::log(prop.evaluate(p, T - dT)[0])) / (2 * dT);
    EXPECT_NEAR(prop.evaluate(p, T)[1], fd, 1e-7);
}

TEST(Kernel, SecondOrderGridConvergence) {
    const double L = 8.0;
    std::vector<double> err;
    for (int n : {201, 401, 801}) {
        const std::vector<BoundaryPair> p{BoundaryPair::one_d(0.0, 0.0), BoundaryPair::one_d(-1.0, 2.0)};
        const auto t = euclidean_propagate(harmonic(), Grid(L, n), 1.0, p);
        err.push_back(std::abs(t.amplitudes[1] - mehler_kernel(-1.0, 2.0, 1.0)));
    }
    for (std::size_t i = 1; i < err.size(); ++i) {
        const double order = std::log2(err[i - 1] / err[i]);
        EXPECT_GT(order, 1.8);
        EXPECT_LT(order, 2.2);
    }
}

TEST(Kernel, Errors) {
    const std::vector<BoundaryPair> inside{BoundaryPair::one_d(0.0, 0.0)};
    const std::vector<BoundaryPair> outside{BoundaryPair::one_d(0.0, 9.0)};
    EXPECT_THROW(euclidean_propagate(harmonic(), Grid(8.0, 401), 0.0, inside), InputError);
    EXPECT_THROW(euclidean_propagate(harmonic(), Grid(8.0, 401), -1.0, inside), InputError);
    EXPECT_THROW(euclidean_propagate(harmonic(), Grid(8.0, 401), 1.0, outside), InputError);
    const SpectralPropagator prop(harmonic(), Grid(8.0, 401), 1.0);
    EXPECT_THROW(prop.evaluate(inside[0], 0.0), InputError);
}

TEST(ExactOscillator, EuclideanValue) {
    const auto g = ho_exact_propagator(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, TimeKind::euclidean);
    EXPECT_NEAR(g.real(), 1.0 / std::sqrt(2.0 * std::numbers::pi * std::sinh(1.0)), 1e-15);
    EXPECT_NEAR(g.real(), 0.36800, 1e-5);
    EXPECT_EQ(g.imag(), 0.0);
    for (double x : {-1.5, 0.3})
        for (double y : {-0.7, 2.0})
            for (double T : {0.5, 2.0})
                EXPECT_NEAR(ho_exact_propagator(1.0, 1.0, 1.0, x, y, T, TimeKind::euclidean).real() /
                                mehler_kernel(x, y, T),
                            1.0, 1e-12);
}

TEST(ExactOscillator, FreeLimit) {
    for (double T : {1e-3, 1e-5}) {
        const double g = ho_exact_propagator(1.0, 1.0, 1.0, 0.0, 0.0, T, TimeKind::euclidean).real();
        EXPECT_NEAR(g / std::sqrt(1.0 / (2.0 * std::numbers::pi * T)), 1.0, T);
    }
}

TEST(ExactOscillator, ZeroBoundaryActionAndCaustic) {
    for (double T : {0.1, 1.0, 3.0}) {
        EXPECT_EQ(ho_classical_action(1.0, 1.0, 0.0, 0.0, T, TimeKind::real), 0.0);
        EXPECT_EQ(ho_classical_action(1.0, 1.0, 0.0, 0.0, T, TimeKind::euclidean), 0.0);
    }
    EXPECT_THROW(ho_exact_propagator(1.0, 1.0, 1.0, 0.1, 0.2, std::numbers::pi, TimeKind::real), DomainError);
    EXPECT_THROW(ho_exact_propagator(1.0, 1.0, 1.0, 0.1, 0.2, 0.0, TimeKind::euclidean), InputError);
}

TEST(ExactOscillator, RealTimeModulusAndPhase) {
    const double T = 0.8, x = 0.3, y = -0.4;
    const auto k = ho_exact_propagator(1.0, 1.0, 1.0, x, y, T, TimeKind::real);
    EXPECT_NEAR(std::abs(k), std::sqrt(1.0 / (2.0 * std::numbers::pi * std::sin(T))), 1e-14);
    const double s = ((x * x + y * y) * std::cos(T) - 2 * x * y) / (2 * std::sin(T));
    EXPECT_NEAR(std::arg(k), std::remainder(s - std::numbers::pi / 4, 2 * std::numbers::pi), 1e-12);
}
