#pragma once

// Adaptive Dormand–Prince 5(4) for Eigen dense states (vectors or matrices, real or
// complex). Steps are clamped so that every requested output time is hit exactly.

#include <algorithm>
#include <cmath>
#include <complex>
#include <type_traits>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "../errors.hpp"

namespace purcellkit::numerics {

struct OdeOptions {
    double rtol = 1e-9;
    double atol = 1e-12;
    double h_initial = 0.0;  // 0: estimate
    double h_max = std::numeric_limits<double>::infinity();
    long max_steps = 200'000'000;
};

struct OdeStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evals = 0;
    double last_h = 0.0;
};

namespace detail {

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

// Max-norm of err / (atol + rtol max(|y0|, |y1|)). Complex states are measured as
// separate real and imaginary components, which avoids a hypot per entry.
template <class S>
double scaled_error(const S& err, const S& y0, const S& y1, double atol, double rtol) {
    using Scalar = typename S::Scalar;
    if constexpr (is_complex<Scalar>::value) {
        using Real = typename Scalar::value_type;
        using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
        const Eigen::Index n = 2 * err.size();
        Eigen::Map<const Arr> e(reinterpret_cast<const Real*>(err.data()), n);
        Eigen::Map<const Arr> a(reinterpret_cast<const Real*>(y0.data()), n);
        Eigen::Map<const Arr> b(reinterpret_cast<const Real*>(y1.data()), n);
        return (e.abs() / (atol + rtol * a.abs().max(b.abs()))).maxCoeff();
    } else {
        return (err.array().abs() / (atol + rtol * y0.array().abs().max(y1.array().abs()))).maxCoeff();
    }
}

}  // namespace detail

// rhs(t, y, dydt) writes dy/dt into dydt (pre-sized like y).
// observer(i, t_i, y_i) is called for every grid point, including grid[0].
template <class State, class Rhs, class Observer>
OdeStats integrate_dopri5(Rhs&& rhs, State y, const std::vector<double>& grid, const OdeOptions& opt,
                          Observer&& observer) {
    if (grid.empty()) throw NumericalError("integration grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ValidationError("integration grid must be strictly increasing");

    // Dormand–Prince tableau
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    // b - b_hat
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;

    OdeStats stats;
    double t = grid.front();
    observer(std::size_t{0}, t, static_cast<const State&>(y));
    if (grid.size() == 1) return stats;

    State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, tmp = y, ynew = y, err = y;
    rhs(t, y, k1);
    ++stats.rhs_evals;

    double h = opt.h_initial;
    if (h <= 0.0) {
        // Hairer–Wanner starting step
        auto sc = (opt.atol + opt.rtol * y.array().abs()).eval();
        double d0 = std::sqrt((y.array().abs() / sc).square().mean());
        double d1 = std::sqrt((k1.array().abs() / sc).square().mean());
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, grid.back() - grid.front());
        tmp = y + h0 * k1;
        rhs(t + h0, tmp, k2);
        ++stats.rhs_evals;
        double d2 = std::sqrt(((k2 - k1).array().abs() / sc).square().mean()) / h0;
        double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                               : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
        h = std::min(100.0 * h0, h1);
    }
    h = std::min(h, opt.h_max);

    long steps = 0;
    for (std::size_t gi = 1; gi < grid.size(); ++gi) {
        const double t_target = grid[gi];
        while (t < t_target) {
            if (++steps > opt.max_steps) throw NumericalError("ODE step budget exhausted");
            double h_try = h;
            bool clamped = false;
            if (t + h_try >= t_target) {
                h_try = t_target - t;
                clamped = true;
            }
            if (h_try < 1e-14 * std::max(1.0, std::abs(t)))
                throw NumericalError("ODE step size underflow at t = " + std::to_string(t));

            tmp = y + h_try * (a21 * k1);
            rhs(t + c2 * h_try, tmp, k2);
            tmp = y + h_try * (a31 * k1 + a32 * k2);
            rhs(t + c3 * h_try, tmp, k3);
            tmp = y + h_try * (a41 * k1 + a42 * k2 + a43 * k3);
            rhs(t + c4 * h_try, tmp, k4);
            tmp = y + h_try * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            rhs(t + c5 * h_try, tmp, k5);
            tmp = y + h_try * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            rhs(t + h_try, tmp, k6);
            ynew = y + h_try * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            rhs(t + h_try, ynew, k7);
            stats.rhs_evals += 6;
            err = h_try * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            double en = detail::scaled_error(err, y, ynew, opt.atol, opt.rtol);
            if (!std::isfinite(en)) throw NumericalError("non-finite state during integration");
            double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (en <= 1.0) {
                t = clamped ? t_target : t + h_try;
                y.swap(ynew);
                k1.swap(k7);  // FSAL
                ++stats.accepted;
                stats.last_h = h_try;
                // a step shortened to hit an output time only ever lowers h
                if (!clamped)
                    h = std::min(h_try * fac, opt.h_max);
                else if (fac < 1.0)
                    h = std::min(h, h_try * fac);
            } else {
                ++stats.rejected;
                h = h_try * std::max(0.2, fac);
            }
        }
        observer(gi, t, static_cast<const State&>(y));
    }
    return stats;
}

}  // namespace purcellkit::numerics
