#pragma once

#include "qaction/error.hpp"
#include "qaction/grid.hpp"
#include "qaction/hamiltonian.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

namespace qaction {

/// Lowest eigenpairs of a grid Hamiltonian.
///
/// Columns of `eigenvectors` are continuum-normalised grid functions:
/// cell_volume * sum_i psi_m(i) psi_n(i) = delta_mn.
struct SpectralData {
    Grid grid;
    std::vector<double> eigenvalues;
    Eigen::MatrixXd eigenvectors;

    std::size_t size() const noexcept { return eigenvalues.size(); }
    double ground_energy() const { return eigenvalues.at(0); }
};

namespace detail {

/// Symmetric tridiagonal matrix with diagonal d and constant-free off-diagonal e (e[i] couples i, i+1).
struct Tridiagonal {
    std::vector<double> d;
    std::vector<double> e;

    std::size_t size() const noexcept { return d.size(); }

    double norm_bound() const noexcept {
        double b = 0.0;
        const std::size_t n = d.size();
        for (std::size_t i = 0; i < n; ++i) {
            double r = std::abs(d[i]);
            if (i > 0) r += std::abs(e[i - 1]);
            if (i + 1 < n) r += std::abs(e[i]);
            b = std::max(b, r);
        }
        return b;
    }

    /// Number of eigenvalues strictly below x (Sturm sequence).
    std::size_t count_below(double x, double pivmin) const noexcept {
        std::size_t count = 0;
        double q = d[0] - x;
        if (std::abs(q) < pivmin) q = -pivmin;
        if (q < 0.0) ++count;
        for (std::size_t i = 1; i < d.size(); ++i) {
            q = d[i] - x - e[i - 1] * e[i - 1] / q;
            if (std::abs(q) < pivmin) q = -pivmin;
            if (q < 0.0) ++count;
        }
        return count;
    }
};

/// Eigenvalues 0..k-1 (ascending) by simultaneous bisection on Sturm counts.
inline std::vector<double> tridiagonal_eigenvalues(const Tridiagonal& t, std::size_t k) {
    const std::size_t n = t.size();
    double lo = std::numeric_limits<double>::max(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        if (i > 0) r += std::abs(t.e[i - 1]);
        if (i + 1 < n) r += std::abs(t.e[i]);
        lo = std::min(lo, t.d[i] - r);
        hi = std::max(hi, t.d[i] + r);
    }
    const double scale = std::max(std::abs(lo), std::abs(hi));
    const double pivmin = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon() *
                          std::max(1.0, scale * scale);
    lo -= 1e-12 * scale + pivmin;
    hi += 1e-12 * scale + pivmin;

    std::vector<double> lower(k, lo), upper(k, hi);
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) {
        double a = lower[j], b = upper[j];
        while (b - a > 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b)) +
                           pivmin) {
            const double mid = 0.5 * (a + b);
            if (mid <= a || mid >= b) break;
            const std::size_t c = t.count_below(mid, pivmin);
            // c eigenvalues lie below mid: indices < c have upper bound mid.
            for (std::size_t i = j; i < k; ++i) {
                if (i < c) upper[i] = std::min(upper[i], mid);
                else lower[i] = std::max(lower[i], mid);
            }
            a = lower[j];
            b = upper[j];
        }
        out[j] = 0.5 * (a + b);
    }
    return out;
}

/// Solves (T - shift) x = b in place by Gaussian elimination with partial pivoting.
class ShiftedTridiagonalLU {
public:
    ShiftedTridiagonalLU(const Tridiagonal& t, double shift, double tiny) {
        const std::size_t n = t.size();
        dl_.assign(t.e.begin(), t.e.end());
        du_.assign(t.e.begin(), t.e.end());
        d_.resize(n);
        for (std::size_t i = 0; i < n; ++i) d_[i] = t.d[i] - shift;
        du2_.assign(n > 2 ? n - 2 : 0, 0.0);
        swap_.assign(n, false);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (std::abs(d_[i]) >= std::abs(dl_[i])) {
                if (d_[i] == 0.0) d_[i] = tiny;
                const double f = dl_[i] / d_[i];
                dl_[i] = f;
                d_[i + 1] -= f * du_[i];
            } else {
                const double f = d_[i] / dl_[i];
                d_[i] = dl_[i];
                dl_[i] = f;
                const double tmp = du_[i];
                du_[i] = d_[i + 1];
                d_[i + 1] = tmp - f * d_[i + 1];
                if (i + 2 < n) {
                    du2_[i] = du_[i + 1];
                    du_[i + 1] = -f * du_[i + 1];
                }
                swap_[i] = true;
            }
        }
        if (d_[n - 1] == 0.0) d_[n - 1] = tiny;
        for (auto& v : d_)
            if (std::abs(v) < tiny) v = std::copysign(tiny, v);
    }

    void solve(std::vector<double>& b) const {
        const std::size_t n = d_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!swap_[i]) {
                b[i + 1] -= dl_[i] * b[i];
            } else {
                const double tmp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tmp - dl_[i] * b[i];
            }
        }
        b[n - 1] /= d_[n - 1];
        if (n > 1) b[n - 2] = (b[n - 2] - du_[n - 2] * b[n - 1]) / d_[n - 2];
        for (std::size_t ii = n > 2 ? n - 2 : 0; ii-- > 0;)
            b[ii] = (b[ii] - du_[ii] * b[ii + 1] - du2_[ii] * b[ii + 2]) / d_[ii];
    }

private:
    std::vector<double> dl_, d_, du_, du2_;
    std::vector<bool> swap_;
};

/// splitmix64 mapped to [-1, 1); fixed so that start vectors are reproducible everywhere.
class StartVectorSource {
public:
    explicit StartVectorSource(std::uint64_t seed) : state_(seed) {}
    double next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        z ^= z >> 31;
        return static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
    }

private:
    std::uint64_t state_;
};

inline SpectralData tridiagonal_decompose(const GridHamiltonian& h, std::size_t k) {
    const std::size_t n = h.grid().size();
    Tridiagonal t{h.diagonal(), std::vector<double>(n - 1, h.hopping(0))};
    const auto values = tridiagonal_eigenvalues(t, k);
    const double norm = t.norm_bound();
    const double tiny = std::numeric_limits<double>::epsilon() * norm;

    Eigen::MatrixXd vecs(n, k);
    StartVectorSource rng(0x5eed);
    std::vector<double> x(n);
    for (std::size_t j = 0; j < k; ++j) {
        ShiftedTridiagonalLU lu(t, values[j], tiny);
        for (auto& xi : x) xi = rng.next();
        double resid = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 5 && resid > 1e-11 * norm; ++it) {
            lu.solve(x);
            Eigen::Map<Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t p = 0; p < j; ++p) xv -= vecs.col(p).dot(xv) * vecs.col(p);
            xv.normalize();
            resid = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double hx = (t.d[i] - values[j]) * x[i];
                if (i > 0) hx += t.e[i - 1] * x[i - 1];
                if (i + 1 < n) hx += t.e[i] * x[i + 1];
                resid = std::max(resid, std::abs(hx));
            }
        }
        if (resid > 1e-8 * norm)
            throw NumericalError("inverse iteration did not converge for eigenvalue " + std::to_string(j),
                                 resid / norm);
        Eigen::Map<Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(n));
        // Fix the sign so that the largest-magnitude component is positive.
        Eigen::Index imax = 0;
        xv.cwiseAbs().maxCoeff(&imax);
        if (xv[imax] < 0.0) xv = -xv;
        vecs.col(static_cast<Eigen::Index>(j)) = xv;
    }
    vecs /= std::sqrt(h.grid().cell_volume());
    return {h.grid(), values, std::move(vecs)};
}

/// Block Krylov subspace of (H - sigma)^{-1} with Rayleigh-Ritz on H and restarts.
inline SpectralData sparse_decompose(const GridHamiltonian& h, std::size_t k) {
    const Eigen::SparseMatrix<double> H = h.matrix();
    const auto n = static_cast<Eigen::Index>(h.grid().size());
    if (n <= 2500 || 4 * static_cast<Eigen::Index>(k) >= n) {
        // small or nearly full problem: dense solve
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(H)};
        if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed", 0.0);
        const auto kk = static_cast<Eigen::Index>(k);
        Eigen::MatrixXd vecs = es.eigenvectors().leftCols(kk);
        for (Eigen::Index j = 0; j < kk; ++j) {
            Eigen::Index imax = 0;
            vecs.col(j).cwiseAbs().maxCoeff(&imax);
            if (vecs(imax, j) < 0.0) vecs.col(j) = -vecs.col(j);
        }
        vecs /= std::sqrt(h.grid().cell_volume());
        const Eigen::VectorXd head = es.eigenvalues().head(kk);
        return {h.grid(), std::vector<double>(head.data(), head.data() + kk), std::move(vecs)};
    }
    const auto& diag = h.diagonal();
    double box = 0.0;
    for (int a = 0; a < h.grid().dimension(); ++a) {
        const double width = 2.0 * (h.grid().half_width(a) + h.grid().spacing(a));
        // -hop * h^2 = hbar^2/2m
        box += -h.hopping(a) * h.grid().spacing(a) * h.grid().spacing(a) * std::numbers::pi * std::numbers::pi /
               (width * width);
    }
    double vmin = std::numeric_limits<double>::max();
    for (Eigen::Index i = 0; i < n; ++i) {
        double kin = 0.0;
        for (int a = 0; a < h.grid().dimension(); ++a) kin += -2.0 * h.hopping(a);
        vmin = std::min(vmin, diag[static_cast<std::size_t>(i)] - kin);
    }
    const double sigma = vmin - box;

    Eigen::SparseMatrix<double> shifted = H;
    for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= sigma;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    if (solver.info() != Eigen::Success) throw NumericalError("shift-invert factorisation failed", 0.0);

    const auto want = static_cast<Eigen::Index>(k);
    const Eigen::Index block = std::min<Eigen::Index>(n, std::max<Eigen::Index>(4, std::min<Eigen::Index>(want, 12)));
    const Eigen::Index max_basis = std::min<Eigen::Index>(n, 3 * want + 4 * block + 20);
    const double hnorm = [&] {
        double b = 0.0;
        for (Eigen::Index c = 0; c < H.outerSize(); ++c) {
            double s = 0.0;
            for (Eigen::SparseMatrix<double>::InnerIterator it(H, c); it; ++it) s += std::abs(it.value());
            b = std::max(b, s);
        }
        return b;
    }();

    Eigen::MatrixXd Q(n, max_basis);
    Eigen::Index used = 0;
    auto append = [&](Eigen::VectorXd v) {
        for (int pass = 0; pass < 2; ++pass)
            if (used > 0) v -= Q.leftCols(used) * (Q.leftCols(used).transpose() * v);
        const double nv = v.norm();
        if (nv < 1e-10 || used >= max_basis) return false;
        Q.col(used++) = v / nv;
        return true;
    };

    StartVectorSource rng(0x5eed);
    std::vector<Eigen::VectorXd> frontier;
    for (Eigen::Index b = 0; b < block; ++b) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next();
        if (append(v)) frontier.push_back(Q.col(used - 1));
    }

    Eigen::VectorXd values;
    Eigen::MatrixXd ritz;
    double worst = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 40; ++restart) {
        while (used < max_basis && !frontier.empty()) {
            std::vector<Eigen::VectorXd> next;
            for (const auto& f : frontier) {
                Eigen::VectorXd w = solver.solve(f);
                if (!append(std::move(w))) continue;
                next.push_back(Q.col(used - 1));
                if (used >= max_basis) break;
            }
            frontier = std::move(next);
        }
        const Eigen::MatrixXd basis = Q.leftCols(used);
        const Eigen::MatrixXd HQ = H * basis;
        Eigen::MatrixXd small = basis.transpose() * HQ;
        small = 0.5 * (small + small.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
        const Eigen::Index got = std::min(want, used);
        values = es.eigenvalues().head(got);
        ritz = basis * es.eigenvectors().leftCols(got);
        const Eigen::MatrixXd res = HQ * es.eigenvectors().leftCols(got) - ritz * values.asDiagonal();
        worst = 0.0;
        std::vector<Eigen::Index> unconverged;
        for (Eigen::Index j = 0; j < got; ++j) {
            const double r = res.col(j).norm() / std::max(hnorm, 1.0);
            worst = std::max(worst, r);
            if (r > 1e-11) unconverged.push_back(j);
        }
        if (got == want && unconverged.empty()) break;

        // Restart: keep the leading Ritz vectors and expand from the unconverged ones.
        const Eigen::Index keep = std::min<Eigen::Index>(used, want + block);
        const Eigen::MatrixXd kept = basis * es.eigenvectors().leftCols(keep);
        used = 0;
        for (Eigen::Index j = 0; j < keep; ++j) append(kept.col(j));
        frontier.clear();
        for (auto j : unconverged) {
            frontier.push_back(ritz.col(j));
            if (static_cast<Eigen::Index>(frontier.size()) >= block) break;
        }
        if (frontier.empty() && got < want) {
            Eigen::VectorXd v(n);
            for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next();
            frontier.push_back(v);
        }
        if (restart == 39) throw NumericalError("sparse eigensolver did not converge", worst);
    }

    for (Eigen::Index j = 0; j < ritz.cols(); ++j) {
        Eigen::Index imax = 0;
        ritz.col(j).cwiseAbs().maxCoeff(&imax);
        if (ritz(imax, j) < 0.0) ritz.col(j) = -ritz.col(j);
    }
    std::vector<double> ev(values.data(), values.data() + values.size());
    ritz /= std::sqrt(h.grid().cell_volume());
    return {h.grid(), std::move(ev), std::move(ritz)};
}

} // namespace detail

/// The k lowest eigenpairs of H (Sturm bisection plus inverse iteration in 1-D,
/// shift-invert block Krylov with Rayleigh-Ritz in 2-D).
inline SpectralData spectral_decompose(const GridHamiltonian& h, std::size_t k) {
    if (k == 0 || k > h.grid().size()) throw InputError("requested eigenpair count out of range");
    return h.is_tridiagonal() ? detail::tridiagonal_decompose(h, k) : detail::sparse_decompose(h, k);
}

/// Number of eigenvalues of a 1-D grid Hamiltonian strictly below `energy`.
inline std::size_t count_states_below(const GridHamiltonian& h, double energy) {
    if (!h.is_tridiagonal()) throw InputError("state counting requires a 1-D Hamiltonian");
    const std::size_t n = h.grid().size();
    detail::Tridiagonal t{h.diagonal(), std::vector<double>(n - 1, h.hopping(0))};
    return t.count_below(energy, std::numeric_limits<double>::min());
}

} // namespace qaction
