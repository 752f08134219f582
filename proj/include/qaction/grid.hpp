#pragma once

#include "qaction/error.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

namespace qaction {

/// Uniform grid on [-L, L] per axis with N points including both ends.
/// In 2-D the flat index is i * N_y + j for (x_i, y_j).
class Grid {
public:
    static constexpr int max_points_2d = 128;

    Grid(double half_width, int points) : Grid(1, {half_width, 0.0}, {points, 1}) {}

    static Grid square(double half_width, int points) {
        return Grid(2, {half_width, half_width}, {points, points});
    }

    Grid(int dimension, std::array<double, 2> half_width, std::array<int, 2> points)
        : dim_(dimension), half_width_(half_width), points_(points) {
        if (dim_ != 1 && dim_ != 2) throw InputError("grid dimension must be 1 or 2");
        if (dim_ == 1) {
            half_width_[1] = 0.0;
            points_[1] = 1;
        }
        for (int a = 0; a < dim_; ++a) {
            if (points_[a] < 16) throw InputError("grid needs at least 16 points per axis");
            if (dim_ == 2 && points_[a] > max_points_2d)
                throw InputError("2-D grids are limited to " + std::to_string(max_points_2d) + " points per axis");
            if (!(half_width_[a] > 0.0) || !std::isfinite(half_width_[a]))
                throw InputError("grid extent must be positive");
        }
    }

    int dimension() const noexcept { return dim_; }
    double half_width(int axis = 0) const noexcept { return half_width_[axis]; }
    int points(int axis = 0) const noexcept { return points_[axis]; }
    double spacing(int axis = 0) const noexcept { return 2.0 * half_width_[axis] / (points_[axis] - 1); }
    double coordinate(int axis, int i) const noexcept { return -half_width_[axis] + i * spacing(axis); }
    double coordinate(int i) const noexcept { return coordinate(0, i); }
    std::size_t size() const noexcept {
        return static_cast<std::size_t>(points_[0]) * static_cast<std::size_t>(points_[1]);
    }
    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(points_[1]) + static_cast<std::size_t>(j);
    }
    bool contains(int axis, double x) const noexcept {
        return std::abs(x) <= half_width_[axis] * (1.0 + 1e-12);
    }
    /// Quadrature weight of one node (rectangle rule; Dirichlet ends carry ~0 amplitude).
    double cell_volume() const noexcept { return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1); }

private:
    int dim_;
    std::array<double, 2> half_width_;
    std::array<int, 2> points_;
};

} // namespace qaction
