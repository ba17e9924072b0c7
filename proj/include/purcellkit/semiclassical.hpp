#pragma once

// Classical readout/filter field dynamics in the frame rotating at the drive frequency.
// Detunings here are Delta_rd = omega_r - omega_d and Delta_fd = omega_f - omega_d.
//
//   readout drive:  a' = -i D_rd a - i G b - (k_rd/2) a - i e_r
//                   b' = -i D_fd b - i G* a - (k_f/2) b
//   filter drive:   the -i e_f term sits in the b equation instead.

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numerics/ode.hpp"
#include "numerics/roots.hpp"
#include "params.hpp"

namespace purcellkit::semiclassical {

using params::cplx;
using params::DeviceParams;
using params::DriveConfig;
using params::DrivePort;

enum class QubitStateLabel { Ground, Excited };

inline const char* label_name(QubitStateLabel s) { return s == QubitStateLabel::Ground ? "g" : "e"; }

inline double readout_frequency(const DeviceParams& p, QubitStateLabel s) {
    auto d = params::derive(p);
    return s == QubitStateLabel::Ground ? d.omega_r_ground : d.omega_r_excited;
}

struct EffectiveResonator {
    double kappa_eff = 0.0;      // at omega_probe
    double delta_omega_r = 0.0;  // pull at omega_probe
    double kappa_r = 0.0;        // kappa_eff at the readout probe frequency
    double kappa_q = 0.0;        // kappa_eff at the bare qubit frequency
    double F = 0.0;              // (kappa_q + kappa_rd) / (kappa_r + kappa_rd)
};

inline double kappa_eff_at(const DeviceParams& p, double omega) {
    if (!(p.kappa_f > 0)) throw ValidationError("kappa_f must be positive");
    double x = 2.0 * (p.omega_f - omega) / p.kappa_f;
    return 4.0 * std::norm(p.G) / p.kappa_f / (1.0 + x * x);
}

inline double pull_at(const DeviceParams& p, double omega) {
    return -(p.omega_f - omega) / p.kappa_f * kappa_eff_at(p, omega);
}

inline EffectiveResonator effective_resonator(const DeviceParams& p, double omega_probe) {
    EffectiveResonator r;
    r.kappa_eff = kappa_eff_at(p, omega_probe);
    r.delta_omega_r = pull_at(p, omega_probe);
    r.kappa_r = kappa_eff_at(p, params::derive(p).omega_r_probe);
    r.kappa_q = kappa_eff_at(p, p.omega_q_bare);
    r.F = (r.kappa_q + p.kappa_r_int) / (r.kappa_r + p.kappa_r_int);
    return r;
}

inline EffectiveResonator effective_resonator(const DeviceParams& p) {
    return effective_resonator(p, params::derive(p).omega_r_probe);
}

// G (phase 0) such that kappa_r equals the target at the configured probe frequency.
inline cplx coupling_from_kappa_r(const DeviceParams& p, double kappa_r_target) {
    if (!(kappa_r_target > 0)) throw ValidationError("kappa_r target must be positive");
    return params::coupling_for_kappa_r(kappa_r_target, p.kappa_f, p.omega_f, params::derive(p).omega_r_probe);
}

inline cplx equivalent_readout_drive(const DeviceParams& p, cplx eps_f, double omega_d) {
    if (!(p.kappa_f > 0)) throw ValidationError("kappa_f must be positive");
    const double d_fd = p.omega_f - omega_d;
    return -cplx(0, 1) * eps_f * p.G / cplx(p.kappa_f / 2, d_fd);
}

// Inverse of equivalent_readout_drive.
inline cplx equivalent_filter_drive(const DeviceParams& p, cplx eps_r, double omega_d) {
    if (std::abs(p.G) == 0.0) throw ValidationError("no filter drive is equivalent when G = 0");
    const double d_fd = p.omega_f - omega_d;
    return eps_r * cplx(p.kappa_f / 2, d_fd) / (-cplx(0, 1) * p.G);
}

// Outgoing-field map gamma_tl = sqrt(kappa_f_out) * beta.
inline double outgoing_factor(const DeviceParams& p) { return std::sqrt(p.kappa_f_out_fraction * p.kappa_f); }

struct FieldTrajectory {
    std::vector<double> times;
    std::vector<cplx> alpha;
    std::vector<cplx> beta;
    std::vector<cplx> gamma_tl;
    std::vector<double> n_r;
    std::vector<double> n_f;
    // steady readout-drive relation gamma_tl = e^{i phi} sqrt(kappa_eff) alpha at omega_d
    double phi = 0.0;
};

struct FieldOptions {
    numerics::OdeOptions ode{1e-9, 1e-12};
    cplx alpha0{0.0, 0.0};
    cplx beta0{0.0, 0.0};
};

inline double outgoing_phase(const DeviceParams& p, double omega_d) {
    const double d_fd = p.omega_f - omega_d;
    return std::arg(-cplx(0, 1) * std::conj(p.G) / cplx(p.kappa_f / 2, d_fd));
}

// Integrate with an explicit readout frequency (the qubit state enters only through it).
inline FieldTrajectory integrate_fields_at(const DeviceParams& p, const DriveConfig& drive, double omega_r,
                                           const std::vector<double>& grid, const FieldOptions& opt = {}) {
    if (grid.empty()) throw NumericalError("time grid is empty");
    const cplx I(0, 1);
    const cplx A = -I * (omega_r - drive.omega_d) - p.kappa_r_int / 2;
    const cplx B = -I * (p.omega_f - drive.omega_d) - p.kappa_f / 2;
    const cplx G = p.G, Gc = std::conj(p.G);
    const bool readout = drive.port == DrivePort::Readout;
    const bool filter = drive.port == DrivePort::Filter;

    auto rhs = [&](double t, const Eigen::Vector2cd& y, Eigen::Vector2cd& dy) {
        const cplx e = drive.at(t);
        dy(0) = A * y(0) - I * G * y(1) - (readout ? I * e : cplx{});
        dy(1) = B * y(1) - I * Gc * y(0) - (filter ? I * e : cplx{});
    };

    FieldTrajectory tr;
    tr.phi = outgoing_phase(p, drive.omega_d);
    const std::size_t n = grid.size();
    tr.times = grid;
    tr.alpha.resize(n);
    tr.beta.resize(n);
    tr.gamma_tl.resize(n);
    tr.n_r.resize(n);
    tr.n_f.resize(n);
    const double out = outgoing_factor(p);
    Eigen::Vector2cd y0(opt.alpha0, opt.beta0);
    numerics::integrate_dopri5(rhs, y0, grid, opt.ode, [&](std::size_t i, double, const Eigen::Vector2cd& y) {
        tr.alpha[i] = y(0);
        tr.beta[i] = y(1);
        tr.gamma_tl[i] = out * y(1);
        tr.n_r[i] = std::norm(y(0));
        tr.n_f[i] = std::norm(y(1));
    });
    return tr;
}

inline FieldTrajectory integrate_fields(const DeviceParams& p, const DriveConfig& drive, QubitStateLabel s,
                                        const std::vector<double>& grid, const FieldOptions& opt = {}) {
    return integrate_fields_at(p, drive, readout_frequency(p, s), grid, opt);
}

struct SteadyFields {
    cplx alpha;
    cplx beta;
    cplx gamma_tl;
    // single-mode estimate with kappa_r and the pull frozen at the readout frequency
    cplx alpha_quasisteady;
    cplx beta_quasisteady;
};

inline SteadyFields steady_state_fields_at(const DeviceParams& p, const DriveConfig& drive, double omega_r) {
    if (drive.envelope.kind() != params::EnvelopeKind::Step)
        throw ValidationError("steady state needs a constant (step) drive");
    SteadyFields s{};
    if (drive.port == DrivePort::None) return s;
    const cplx I(0, 1);
    const double d_rd = omega_r - drive.omega_d;
    const double d_fd = p.omega_f - drive.omega_d;
    Eigen::Matrix2cd M;
    M << I * d_rd + p.kappa_r_int / 2, I * p.G, I * std::conj(p.G), I * d_fd + p.kappa_f / 2;
    Eigen::Vector2cd rhs(drive.port == DrivePort::Readout ? -I * drive.amplitude : cplx{},
                         drive.port == DrivePort::Filter ? -I * drive.amplitude : cplx{});
    const cplx det = M.determinant();
    if (std::abs(det) <= 1e-300 || std::abs(det) < 1e-14 * M.cwiseAbs2().sum())
        throw NumericalError("steady state is singular (drive on a lossless normal mode)");
    Eigen::Vector2cd x = M.partialPivLu().solve(rhs);
    s.alpha = x(0);
    s.beta = x(1);
    s.gamma_tl = outgoing_factor(p) * s.beta;

    const cplx eps_r = drive.port == DrivePort::Readout ? drive.amplitude
                                                        : equivalent_readout_drive(p, drive.amplitude, drive.omega_d);
    const double k_r = kappa_eff_at(p, omega_r);
    const double pull = pull_at(p, omega_r);
    s.alpha_quasisteady = -I * eps_r / (I * (d_rd + pull) + (k_r + p.kappa_r_int) / 2);
    cplx src = -I * std::conj(p.G) * s.alpha_quasisteady;
    if (drive.port == DrivePort::Filter) src -= I * drive.amplitude;
    s.beta_quasisteady = src / cplx(p.kappa_f / 2, d_fd);
    return s;
}

inline SteadyFields steady_state_fields(const DeviceParams& p, const DriveConfig& drive, QubitStateLabel s) {
    return steady_state_fields_at(p, drive, readout_frequency(p, s));
}

// gamma_tl / eps_f for a filter drive at omega_d; exact for the linear two-mode model.
// With kappa_rd = 0 it is sqrt(k_f)/(k_f/2 + i D_fd) * (2 D_rd/k_eff) / (1 + 2i(D_rd + dw_r)/k_eff),
// k_eff and dw_r taken at omega_d; it vanishes at omega_d = omega_r.
inline cplx transfer_function_at(const DeviceParams& p, double omega_d, double omega_r) {
    const cplx I(0, 1);
    const cplx zr = I * (omega_r - omega_d) + p.kappa_r_int / 2;
    const cplx zf = I * (p.omega_f - omega_d) + p.kappa_f / 2;
    const cplx beta = -I * zr / (zf * zr + std::norm(p.G));
    return outgoing_factor(p) * beta;
}

inline cplx transfer_function(const DeviceParams& p, double omega_d, QubitStateLabel s) {
    return transfer_function_at(p, omega_d, readout_frequency(p, s));
}

struct PowerRatio {
    double value = 0.0;
    bool valid = true;  // |Delta_rd| small compared with kappa_f
};

// Outgoing power for a filter drive divided by that for the equivalent readout drive.
inline PowerRatio power_ratio_at(const DeviceParams& p, double omega_d, double omega_r) {
    const double k_r = effective_resonator(p).kappa_r;
    const double d_rd = omega_r - omega_d;
    const double x = 2.0 * (p.omega_f - omega_d) / p.kappa_f;
    PowerRatio r;
    r.value = (d_rd / k_r) * (d_rd / k_r) * 4.0 / (1.0 + x * x);
    r.valid = std::abs(d_rd) < 0.1 * p.kappa_f;
    return r;
}

inline PowerRatio power_ratio(const DeviceParams& p, double omega_d, QubitStateLabel s) {
    return power_ratio_at(p, omega_d, readout_frequency(p, s));
}

enum class SymmetryCriterion { SymmetricReadoutPhotons, SymmetricFilterPhotons };

// Drive frequency giving equal readout photons for both qubit states (fixed point of
// omega_d = mean + pull(omega_d)), or equal filter photons under a filter drive.
inline double find_symmetric_drive(const DeviceParams& p, SymmetryCriterion criterion) {
    const auto d = params::derive(p);
    const double mean = 0.5 * (d.omega_r_ground + d.omega_r_excited);
    if (!(2.0 * std::abs(d.chi) < p.kappa_f)) throw ValidationError("symmetric drive search needs 2|chi| < kappa_f");

    double wd = mean;
    for (int it = 0; it < 200; ++it) {
        double next = mean + pull_at(p, wd);
        if (std::abs(next - wd) <= 1e-15 * std::abs(wd)) {
            wd = next;
            break;
        }
        wd = next;
    }
    if (criterion == SymmetryCriterion::SymmetricReadoutPhotons || d.chi == 0.0) return wd;

    auto diff = [&](double w) {
        auto drive = DriveConfig::filter(w, 1.0);
        return std::norm(steady_state_fields_at(p, drive, d.omega_r_ground).beta) -
               std::norm(steady_state_fields_at(p, drive, d.omega_r_excited).beta);
    };
    // the filter line shape has further crossings near omega_f; keep the one nearest the pair
    const double lo = d.omega_r_probe - p.kappa_f, hi = d.omega_r_probe + p.kappa_f;
    auto roots = numerics::scan_roots(diff, lo, hi, 4000);
    if (roots.empty()) throw NumericalError("no sign change of n_f(g) - n_f(e) in the drive bracket");
    double best = roots.front();
    for (double r : roots)
        if (std::abs(r - mean) < std::abs(best - mean)) best = r;
    return best;
}

// Readout drive (real, positive) and its filter equivalent that put n_target photons
// into the readout resonator for the given qubit state at omega_d.
struct ScenarioDrive {
    double omega_d = 0.0;
    cplx eps_r;
    cplx eps_f;
};

inline ScenarioDrive drive_for_photons(const DeviceParams& p, double omega_d, QubitStateLabel s, double n_target) {
    if (!(n_target > 0)) throw ValidationError("target photon number must be positive");
    auto unit = steady_state_fields(p, DriveConfig::readout(omega_d, 1.0), s);
    if (std::norm(unit.alpha) == 0.0) throw NumericalError("readout drive does not populate the resonator");
    ScenarioDrive sd;
    sd.omega_d = omega_d;
    sd.eps_r = std::sqrt(n_target / std::norm(unit.alpha));
    sd.eps_f = equivalent_filter_drive(p, sd.eps_r, omega_d);
    return sd;
}

inline ScenarioDrive symmetric_scenario(const DeviceParams& p, SymmetryCriterion c, double n_target_excited) {
    return drive_for_photons(p, find_symmetric_drive(p, c), QubitStateLabel::Excited, n_target_excited);
}

// Steady-state comparison of the two symmetric drive choices at the same excited-state
// readout photon number: state separation |alpha_e - alpha_g| (drive-port independent)
// and outgoing |e> power under a filter drive.
struct ScenarioComparison {
    double separation_readout_sym = 0.0;
    double separation_filter_sym = 0.0;
    double separation_ratio = 0.0;  // readout-symmetric / filter-symmetric
    double power_e_readout_sym = 0.0;
    double power_e_filter_sym = 0.0;
    double power_factor = 0.0;  // readout-symmetric / filter-symmetric
};

inline ScenarioComparison compare_symmetric_scenarios(const DeviceParams& p, double n_target_excited) {
    ScenarioComparison c;
    auto eval = [&](SymmetryCriterion crit, double& sep, double& power) {
        auto sc = symmetric_scenario(p, crit, n_target_excited);
        auto drive = DriveConfig::readout(sc.omega_d, sc.eps_r);
        sep = std::abs(steady_state_fields(p, drive, QubitStateLabel::Excited).alpha -
                       steady_state_fields(p, drive, QubitStateLabel::Ground).alpha);
        power = std::norm(steady_state_fields(p, DriveConfig::filter(sc.omega_d, sc.eps_f), QubitStateLabel::Excited)
                              .gamma_tl);
    };
    eval(SymmetryCriterion::SymmetricReadoutPhotons, c.separation_readout_sym, c.power_e_readout_sym);
    eval(SymmetryCriterion::SymmetricFilterPhotons, c.separation_filter_sym, c.power_e_filter_sym);
    c.separation_ratio = c.separation_readout_sym / c.separation_filter_sym;
    c.power_factor = c.power_e_readout_sym / c.power_e_filter_sym;
    return c;
}

}  // namespace purcellkit::semiclassical
