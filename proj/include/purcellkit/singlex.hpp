#pragma once

// Single-excitation Purcell decay: qubit |e00>, readout photon |g10>, filter photon |g01>.
// Uses Delta_rq = omega_r - omega_q and Delta_fq = omega_f - omega_q throughout; the
// frame rotates at the bare qubit frequency.
//
//   c_e' = -i g c_r
//   c_r' = -i D_rq c_r - i g c_e - i G c_f - (k_rd/2) c_r
//   c_f' = -i D_fq c_f - i G* c_r - (k_f/2) c_f
//
// Its eigenvalues lambda = -i omega - Gamma/2 solve the characteristic cubic below.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numerics/fit.hpp"
#include "numerics/ode.hpp"
#include "params.hpp"
#include "semiclassical.hpp"

namespace purcellkit::singlex {

using params::cplx;
using params::DeviceParams;

struct CubicCoefficients {
    cplx a, b, c;  // lambda^3 + a lambda^2 + b lambda + c
};

// With kappa_rd = 0 this is
//   a = i D_rq + i D_fq + k_f/2,  b = -D_rq D_fq + |G|^2 + g^2 + i D_rq k_f/2,  c = g^2 (i D_fq + k_f/2);
// internal readout loss enters as i D_rq -> i D_rq + k_rd/2.
inline CubicCoefficients characteristic_cubic(const DeviceParams& p) {
    const cplx I(0, 1);
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    const cplx zr = I * d_rq + p.kappa_r_int / 2;
    const cplx zf = I * d_fq + p.kappa_f / 2;
    return {zr + zf, zr * zf + std::norm(p.G) + p.g * p.g, p.g * p.g * zf};
}

inline cplx eval_cubic(const CubicCoefficients& k, cplx x) { return ((x + k.a) * x + k.b) * x + k.c; }

// Companion-matrix eigenvalues, each polished by one Newton step when that helps.
inline std::array<cplx, 3> solve_cubic(const CubicCoefficients& k) {
    Eigen::Matrix3cd C = Eigen::Matrix3cd::Zero();
    C(0, 0) = -k.a;
    C(0, 1) = -k.b;
    C(0, 2) = -k.c;
    C(1, 0) = 1.0;
    C(2, 1) = 1.0;
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(C, false);
    if (es.info() != Eigen::Success) throw NumericalError("companion eigenvalue solve failed");
    std::array<cplx, 3> r;
    for (int i = 0; i < 3; ++i) {
        cplx x = es.eigenvalues()(i);
        cplx dp = (3.0 * x + 2.0 * k.a) * x + k.b;
        if (std::abs(dp) > 0) {
            cplx y = x - eval_cubic(k, x) / dp;
            if (std::abs(eval_cubic(k, y)) < std::abs(eval_cubic(k, x))) x = y;
        }
        r[i] = x;
    }
    return r;
}

// Adiabatic estimate of the qubit-like eigenvalue (with internal readout loss).
inline cplx lambda_quasisteady(const DeviceParams& p) {
    const cplx I(0, 1);
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    return -p.g * p.g / (I * d_rq + std::norm(p.G) / (I * d_fq + p.kappa_f / 2) + p.kappa_r_int / 2);
}

struct BranchChoice {
    int index = 0;
    bool ambiguous = false;
    double distance_ratio = 0.0;  // second-nearest / nearest distance to the estimate
};

// Root nearest the quasisteady estimate; flagged when the runner-up is within 10%.
inline BranchChoice classify_branch_e(const std::array<cplx, 3>& roots, const DeviceParams& p) {
    const cplx ref = lambda_quasisteady(p);
    std::array<int, 3> order{0, 1, 2};
    auto key = [&](int i) { return std::abs(roots[i] - ref); };
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        if (key(i) != key(j)) return key(i) < key(j);
        return std::abs(roots[i]) < std::abs(roots[j]);
    });
    BranchChoice b;
    b.index = order[0];
    double d0 = key(order[0]), d1 = key(order[1]);
    b.distance_ratio = d0 > 0 ? d1 / d0 : std::numeric_limits<double>::infinity();
    b.ambiguous = d1 <= 1.1 * d0;
    return b;
}

inline bool quasisteady_simple_valid(const DeviceParams& p) {
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    return std::norm(p.G) < 0.1 * std::abs(d_fq * d_rq) && d_fq * d_rq > 0;
}

// full: g^2 |G|^2 k_f / (D_rq^2 [(D_fq - |G|^2/D_rq)^2 + (k_f/2)^2]);  simple: g^2 kappa_q / D_rq^2
inline double purcell_rate_quasisteady(const DeviceParams& p, bool simple) {
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    if (d_rq == 0.0) throw ValidationError("quasisteady Purcell rate undefined at zero qubit-readout detuning");
    const double G2 = std::norm(p.G);
    const double g2 = p.g * p.g;
    if (simple) return g2 * semiclassical::kappa_eff_at(p, p.omega_q_bare) / (d_rq * d_rq);
    const double x = d_fq - G2 / d_rq;
    return g2 * G2 * p.kappa_f / (d_rq * d_rq * (x * x + p.kappa_f * p.kappa_f / 4));
}

// Quasisteady rate from the single-excitation density-matrix equations, keeping the
// g^4 and cross terms.
inline double purcell_rate_density_matrix(const DeviceParams& p) {
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    const double G2 = std::norm(p.G), g2 = p.g * p.g, kf2 = p.kappa_f * p.kappa_f / 4;
    const double den = (d_rq * d_fq - G2) * (d_rq * d_fq - G2) + (d_rq * d_rq + g2) * kf2 +
                       g2 * (d_fq * d_fq + 2 * d_fq * d_rq - G2) + g2 * g2;
    if (!(den > 0)) throw NumericalError("density-matrix Purcell formula has a non-positive denominator");
    return g2 * G2 * p.kappa_f / den;
}

struct IterativeResult {
    double rate = 0.0;
    cplx lambda;
    // rate if the smallest-|lambda| quadratic root were taken at every step instead of
    // the root nearest the previous iterate
    double rate_other_rule = 0.0;
    bool rules_disagree = false;  // relative difference above 0.1%
};

// Iteration 1 drops lambda^3; later iterations put the previous lambda^3 into the constant term.
inline IterativeResult purcell_rate_iterative(const DeviceParams& p, int iterations,
                                              std::optional<cplx> seed = std::nullopt) {
    if (iterations < 1) throw ValidationError("iterations must be at least 1");
    const auto k = characteristic_cubic(p);
    auto quad_roots = [&](cplx c) {
        cplx disc = std::sqrt(k.b * k.b - 4.0 * k.a * c);
        // numerically stable pair
        cplx q = -0.5 * (k.b + (std::real(std::conj(k.b) * disc) >= 0 ? disc : -disc));
        return std::array<cplx, 2>{q / k.a, c / q};
    };
    auto run = [&](bool nearest) {
        std::optional<cplx> prev = seed;
        cplx lam{};
        for (int it = 0; it < iterations; ++it) {
            cplx c = k.c + (prev ? (*prev) * (*prev) * (*prev) : cplx{});
            auto r = quad_roots(c);
            if (nearest && prev) {
                lam = std::abs(r[0] - *prev) <= std::abs(r[1] - *prev) ? r[0] : r[1];
            } else {
                lam = std::abs(r[0]) <= std::abs(r[1]) ? r[0] : r[1];
            }
            prev = lam;
        }
        return lam;
    };
    IterativeResult out;
    out.lambda = run(true);
    out.rate = -2.0 * out.lambda.real();
    out.rate_other_rule = -2.0 * run(false).real();
    out.rules_disagree = std::abs(out.rate_other_rule - out.rate) > 1e-3 * std::abs(out.rate);
    return out;
}

struct InternalLossResult {
    double rate = 0.0;
    double F = 0.0;  // (kappa_q + kappa_rd) / (kappa_r + kappa_rd)
};

inline InternalLossResult purcell_rate_with_internal_loss(const DeviceParams& p) {
    if (p.kappa_r_int < 0) throw ValidationError("kappa_r_int must be non-negative");
    InternalLossResult r;
    r.rate = -2.0 * lambda_quasisteady(p).real();
    r.F = semiclassical::effective_resonator(p).F;
    return r;
}

struct SingleExcitationSolution {
    std::array<cplx, 3> lambdas;
    int branch_e = 0;
    bool ambiguous = false;
    double gamma_exact = 0.0;
    double gamma_quadratic = 0.0;
    double gamma_iterative = 0.0;  // second iteration
    double gamma_quasisteady_full = 0.0;
    double gamma_quasisteady_simple = 0.0;
    double gamma_density_matrix = 0.0;
    bool simple_form_valid = true;
};

inline SingleExcitationSolution solve(const DeviceParams& p) {
    SingleExcitationSolution s;
    s.lambdas = solve_cubic(characteristic_cubic(p));
    auto b = classify_branch_e(s.lambdas, p);
    s.branch_e = b.index;
    s.ambiguous = b.ambiguous;
    s.gamma_exact = -2.0 * s.lambdas[b.index].real();
    s.gamma_quadratic = purcell_rate_iterative(p, 1).rate;
    s.gamma_iterative = purcell_rate_iterative(p, 2).rate;
    s.gamma_quasisteady_full = purcell_rate_quasisteady(p, false);
    s.gamma_quasisteady_simple = purcell_rate_quasisteady(p, true);
    s.gamma_density_matrix = purcell_rate_density_matrix(p);
    s.simple_form_valid = quasisteady_simple_valid(p);
    return s;
}

// ---------------------------------------------------------------------------
// Time domain

struct AmplitudeState {
    cplx c_e{1.0, 0.0};
    cplx c_r{0.0, 0.0};
    cplx c_f{0.0, 0.0};
    double rho_gg = 0.0;
};

struct RateWindowFit {
    double gamma = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t points = 0;
    double residual_rms = 0.0;
};

struct SingleExcitationTrajectory {
    std::vector<double> times;
    std::vector<AmplitudeState> states;
    double max_balance_residual = 0.0;  // | sum |c|^2 + rho_gg - 1 |
    RateWindowFit fit;  // gamma is NaN when the grid stops before the window is crossed
};

// Fit -ln P(t) against t over samples with t > t_min and P in [lo, hi].
inline RateWindowFit fit_decay_window(const std::vector<double>& t, const std::vector<double>& pop, double t_min,
                                      double lo = 0.90, double hi = 0.99) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] > t_min && pop[i] >= lo && pop[i] <= hi) {
            x.push_back(t[i]);
            y.push_back(-std::log(pop[i]));
        }
    }
    if (x.size() < 2) throw NumericalError("decay fit window is empty within the grid");
    // a sliver of the band gives a meaningless slope
    if (y.back() - y.front() < 0.5 * (std::log(hi) - std::log(lo)))
        throw NumericalError("grid ends before the population crosses the fit window");
    auto f = numerics::fit_line(x, y);
    return {f.slope, x.front(), x.back(), x.size(), f.residual_rms};
}

inline SingleExcitationTrajectory evolve_single_excitation(const DeviceParams& p, const AmplitudeState& initial,
                                                           const std::vector<double>& grid,
                                                           numerics::OdeOptions ode = {1e-10, 1e-13}) {
    const double norm0 = std::norm(initial.c_e) + std::norm(initial.c_r) + std::norm(initial.c_f) + initial.rho_gg;
    if (std::abs(norm0 - 1.0) > 1e-8) throw ValidationError("initial single-excitation state is not normalized");
    const cplx I(0, 1);
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    const cplx G = p.G, Gc = std::conj(p.G);
    // y = (c_e, c_r, c_f, rho_gg)
    auto rhs = [&](double, const Eigen::Vector4cd& y, Eigen::Vector4cd& dy) {
        dy(0) = -I * p.g * y(1);
        dy(1) = -I * d_rq * y(1) - I * p.g * y(0) - I * G * y(2) - 0.5 * p.kappa_r_int * y(1);
        dy(2) = -I * d_fq * y(2) - I * Gc * y(1) - 0.5 * p.kappa_f * y(2);
        dy(3) = p.kappa_f * std::norm(y(2)) + p.kappa_r_int * std::norm(y(1));
    };
    SingleExcitationTrajectory tr;
    tr.times = grid;
    tr.states.resize(grid.size());
    Eigen::Vector4cd y0(initial.c_e, initial.c_r, initial.c_f, initial.rho_gg);
    numerics::integrate_dopri5(rhs, y0, grid, ode, [&](std::size_t i, double, const Eigen::Vector4cd& y) {
        AmplitudeState s{y(0), y(1), y(2), y(3).real()};
        tr.states[i] = s;
        double bal = std::norm(s.c_e) + std::norm(s.c_r) + std::norm(s.c_f) + s.rho_gg - 1.0;
        tr.max_balance_residual = std::max(tr.max_balance_residual, std::abs(bal));
    });

    std::vector<double> pe(grid.size());
    double lowest = 1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        pe[i] = std::norm(tr.states[i].c_e);
        lowest = std::min(lowest, pe[i]);
    }
    if (lowest >= 1.0 - 1e-12) {
        // nothing decays (g = 0): the rate is zero
        tr.fit = {0.0, grid.front(), grid.back(), grid.size(), 0.0};
    } else if (lowest < 0.90) {
        tr.fit = fit_decay_window(grid, pe, 10.0 / p.kappa_f);
    } else {
        tr.fit.gamma = std::numeric_limits<double>::quiet_NaN();
    }
    return tr;
}

// Grid long enough for |c_e|^2 to fall through the fit window.
inline std::vector<double> default_decay_grid(const DeviceParams& p, std::size_t points = 4001) {
    const double gamma = solve(p).gamma_exact;
    double t_end = gamma > 0 ? 1.3 * std::log(1.0 / 0.88) / gamma : 100.0 / p.kappa_f;
    t_end = std::max(t_end, 20.0 / p.kappa_f);
    std::vector<double> t(points);
    for (std::size_t i = 0; i < points; ++i) t[i] = t_end * static_cast<double>(i) / (points - 1);
    return t;
}

// Single-excitation density matrix in the basis {e = |e00>, r = |g10>, f = |g01>} plus
// the ground population rho_gg fed by the decay channels.
struct DensityState {
    double rho_ee = 1.0;
    cplx rho_er, rho_ef;
    double rho_rr = 0.0;
    cplx rho_rf;
    double rho_ff = 0.0;
    double rho_gg = 0.0;             // integrated from its own equation
    double rho_gg_complement = 0.0;  // 1 - (rho_ee + rho_rr + rho_ff)
};

struct DensityTrajectory {
    std::vector<double> times;
    std::vector<DensityState> states;
    double max_trace_drift = 0.0;
};

inline DensityTrajectory evolve_single_excitation_dm(const DeviceParams& p, const std::vector<double>& grid,
                                                     numerics::OdeOptions ode = {1e-10, 1e-13}) {
    const cplx I(0, 1);
    const double d_rq = p.omega_r_bare - p.omega_q_bare;
    const double d_fq = p.omega_f - p.omega_q_bare;
    const double g = p.g, kf = p.kappa_f, kd = p.kappa_r_int;
    const cplx G = p.G, Gc = std::conj(p.G);
    using V7 = Eigen::Matrix<cplx, 7, 1>;
    // y = (ee, er, ef, rr, rf, ff, gg)
    auto rhs = [&](double, const V7& y, V7& dy) {
        const cplx ee = y(0), er = y(1), ef = y(2), rr = y(3), rf = y(4), ff = y(5);
        const cplx re = std::conj(er), fr = std::conj(rf);
        dy(0) = -I * g * (re - er);
        dy(1) = -I * g * (rr - ee) + I * d_rq * er + I * Gc * ef - 0.5 * kd * er;
        dy(2) = -I * g * rf + I * G * er + I * d_fq * ef - 0.5 * kf * ef;
        dy(3) = -I * g * (er - re) - I * (G * fr - Gc * rf) - kd * rr;
        dy(4) = -I * g * ef - I * (d_rq - d_fq) * rf - I * G * (ff - rr) - 0.5 * (kf + kd) * rf;
        dy(5) = -I * (Gc * rf - G * fr) - kf * ff;
        dy(6) = kf * ff + kd * rr;
    };
    DensityTrajectory tr;
    tr.times = grid;
    tr.states.resize(grid.size());
    V7 y0 = V7::Zero();
    y0(0) = 1.0;
    numerics::integrate_dopri5(rhs, y0, grid, ode, [&](std::size_t i, double t, const V7& y) {
        DensityState s;
        s.rho_ee = y(0).real();
        s.rho_er = y(1);
        s.rho_ef = y(2);
        s.rho_rr = y(3).real();
        s.rho_rf = y(4);
        s.rho_ff = y(5).real();
        s.rho_gg = y(6).real();
        s.rho_gg_complement = 1.0 - (s.rho_ee + s.rho_rr + s.rho_ff);
        double drift = std::abs(s.rho_gg - s.rho_gg_complement);
        tr.max_trace_drift = std::max(tr.max_trace_drift, drift);
        if (drift > 1e-6)
            throw NumericalError("density-matrix trace drift " + std::to_string(drift) + " at t = " + std::to_string(t) +
                                 " ns exceeds 1e-6");
        tr.states[i] = s;
    });
    return tr;
}

}  // namespace purcellkit::singlex
