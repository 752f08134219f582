#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"
#include "qaction/grid.hpp"

#include <Eigen/Sparse>

#include <vector>

namespace qaction {

/// H = -(hbar^2/2m) Laplacian + V on a Grid: 3-point (1-D) or 5-point (2-D) stencil.
///
/// Every grid node is an unknown; the wavefunction vanishes one spacing beyond +-L.
class GridHamiltonian {
public:
    GridHamiltonian(const ActionSpec& action, const Grid& grid) : grid_(grid) {
        if (action.dimension() != grid.dimension())
            throw InputError("potential dimension does not match grid dimension");
        if (action.kinetic_coupling() != 0.0)
            throw InputError("grid Hamiltonian does not support a kinetic coupling term");
        const double k = action.hbar() * action.hbar() / (2.0 * action.mass());
        diagonal_.resize(grid.size());
        hop_ = {0.0, 0.0};
        for (int a = 0; a < grid.dimension(); ++a) hop_[a] = -k / (grid.spacing(a) * grid.spacing(a));
        if (grid.dimension() == 1) {
            for (int i = 0; i < grid.points(); ++i)
                diagonal_[i] = -2.0 * hop_[0] + action.potential()(grid.coordinate(i));
        } else {
            for (int i = 0; i < grid.points(0); ++i)
                for (int j = 0; j < grid.points(1); ++j)
                    diagonal_[grid.index(i, j)] = -2.0 * (hop_[0] + hop_[1]) +
                        action.potential()(grid.coordinate(0, i), grid.coordinate(1, j));
        }
    }

    const Grid& grid() const noexcept { return grid_; }
    const std::vector<double>& diagonal() const noexcept { return diagonal_; }
    /// Off-diagonal element coupling nearest neighbours along `axis`.
    double hopping(int axis = 0) const noexcept { return hop_[axis]; }
    bool is_tridiagonal() const noexcept { return grid_.dimension() == 1; }

    Eigen::SparseMatrix<double> matrix() const {
        std::vector<Eigen::Triplet<double>> trip;
        const auto n = static_cast<int>(grid_.size());
        trip.reserve(static_cast<std::size_t>(n) * (1 + 2 * grid_.dimension()));
        for (int r = 0; r < n; ++r) trip.emplace_back(r, r, diagonal_[r]);
        if (grid_.dimension() == 1) {
            for (int i = 0; i + 1 < n; ++i) {
                trip.emplace_back(i, i + 1, hop_[0]);
                trip.emplace_back(i + 1, i, hop_[0]);
            }
        } else {
            const int nx = grid_.points(0), ny = grid_.points(1);
            for (int i = 0; i < nx; ++i) {
                for (int j = 0; j < ny; ++j) {
                    const auto r = static_cast<int>(grid_.index(i, j));
                    if (i + 1 < nx) {
                        const auto s = static_cast<int>(grid_.index(i + 1, j));
                        trip.emplace_back(r, s, hop_[0]);
                        trip.emplace_back(s, r, hop_[0]);
                    }
                    if (j + 1 < ny) {
                        const auto s = static_cast<int>(grid_.index(i, j + 1));
                        trip.emplace_back(r, s, hop_[1]);
                        trip.emplace_back(s, r, hop_[1]);
                    }
                }
            }
        }
        Eigen::SparseMatrix<double> m(n, n);
        m.setFromTriplets(trip.begin(), trip.end());
        return m;
    }

private:
    Grid grid_;
    std::vector<double> diagonal_;
    std::array<double, 2> hop_{};
};

inline GridHamiltonian discretize_hamiltonian(const ActionSpec& action, const Grid& grid) {
    return GridHamiltonian(action, grid);
}

} // namespace qaction
