#pragma once

#include "qaction/action.hpp"
#include "qaction/error.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

namespace qaction {

struct PhaseState {
    std::array<double, 2> position{0.0, 0.0};
    std::array<double, 2> momentum{0.0, 0.0};

    bool finite() const noexcept {
        return std::isfinite(position[0]) && std::isfinite(position[1]) && std::isfinite(momentum[0]) &&
               std::isfinite(momentum[1]);
    }
    friend bool operator==(const PhaseState&, const PhaseState&) = default;
};

/// H = p^T M^-1 p / 2 + V(x)
inline double hamiltonian(const ActionSpec& a, const PhaseState& s) {
    if (a.dimension() == 1)
        return 0.5 * s.momentum[0] * s.momentum[0] / a.mass() + a.potential()(s.position[0]);
    return a.kinetic_from_momentum(s.momentum[0], s.momentum[1]) + a.potential()(s.position[0], s.position[1]);
}

/// Fourth-order symplectic composition (Forest-Ruth / Yoshida triple jump of velocity Verlet).
class SymplecticStepper {
public:
    explicit SymplecticStepper(const ActionSpec& a) : action_(a) {}

    const ActionSpec& action() const noexcept { return action_; }

    void step(PhaseState& s, double dt) {
        if (!cached_ || cached_at_ != s.position) refresh_(s.position);
        kick_(s, 0.5 * w1 * dt);
        drift_(s, w1 * dt);
        refresh_(s.position);
        kick_(s, 0.5 * (w1 + w0) * dt);
        drift_(s, w0 * dt);
        refresh_(s.position);
        kick_(s, 0.5 * (w0 + w1) * dt);
        drift_(s, w1 * dt);
        refresh_(s.position);
        kick_(s, 0.5 * w1 * dt);
    }

    static inline const double w1 = 1.0 / (2.0 - std::cbrt(2.0));
    static inline const double w0 = 1.0 - 2.0 * w1;

private:
    void refresh_(const std::array<double, 2>& x) {
        if (action_.dimension() == 1) {
            force_ = {-action_.potential().derivative(x[0]), 0.0};
        } else {
            const auto g = action_.potential().gradient(x[0], x[1]);
            force_ = {-g[0], -g[1]};
        }
        cached_at_ = x;
        cached_ = true;
    }
    void kick_(PhaseState& s, double h) const {
        s.momentum[0] += h * force_[0];
        s.momentum[1] += h * force_[1];
    }
    void drift_(PhaseState& s, double h) const {
        if (action_.dimension() == 1) {
            s.position[0] += h * s.momentum[0] / action_.mass();
        } else {
            const auto v = action_.inverse_mass(s.momentum[0], s.momentum[1]);
            s.position[0] += h * v[0];
            s.position[1] += h * v[1];
        }
    }

    ActionSpec action_;
    std::array<double, 2> force_{0.0, 0.0};
    std::array<double, 2> cached_at_{0.0, 0.0};
    bool cached_ = false;
};

namespace detail {
inline std::size_t step_count(double T, double dt) {
    if (!(dt > 0.0)) throw InputError("time step must be positive");
    if (!(T >= 0.0) || !std::isfinite(T)) throw InputError("integration time must be non-negative");
    return static_cast<std::size_t>(std::llround(T / dt));
}
} // namespace detail

/// Integrates for round(T/dt) steps of size T/steps, calling observer(step, time, state) after
/// each step; integration stops early when the observer returns false.
template <class Observer>
    requires std::is_invocable_v<Observer&, std::size_t, double, const PhaseState&>
PhaseState integrate_realtime(const ActionSpec& a, PhaseState s0, double T, double dt, Observer&& observer) {
    const std::size_t steps = detail::step_count(T, dt);
    if (!s0.finite()) throw InputError("initial phase state is not finite");
    if (steps == 0) return s0;
    const double h = T / static_cast<double>(steps);
    SymplecticStepper stepper(a);
    for (std::size_t k = 1; k <= steps; ++k) {
        stepper.step(s0, h);
        if constexpr (std::is_convertible_v<std::invoke_result_t<Observer&, std::size_t, double, const PhaseState&>,
                                            bool>) {
            if (!observer(k, h * static_cast<double>(k), s0)) break;
        } else {
            observer(k, h * static_cast<double>(k), s0);
        }
    }
    return s0;
}

/// States at steps 0, stride, 2 stride, ... and always the final step.
inline std::vector<PhaseState> integrate_realtime(const ActionSpec& a, const PhaseState& s0, double T, double dt,
                                                  std::size_t stride = 1) {
    if (stride == 0) throw InputError("stride must be positive");
    const std::size_t steps = detail::step_count(T, dt);
    std::vector<PhaseState> out;
    out.reserve(steps / stride + 2);
    out.push_back(s0);
    integrate_realtime(a, s0, T, dt, [&](std::size_t k, double, const PhaseState& s) {
        if (k % stride == 0 || k == steps) out.push_back(s);
    });
    return out;
}

} // namespace qaction
