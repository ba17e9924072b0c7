#pragma once

// Device parameters, derived quantities and drive description.
//
// Conventions (all internal values in rad/ns and ns):
//   delta_rq          = omega_r - omega_q   (readout/filter-side analysis)
//   delta_fq          = omega_f - omega_q
//   delta_qr = omega_q - omega_r   (dispersive analysis, "Delta")
// Each consumer says which one it uses.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "units.hpp"

namespace purcellkit::params {

using cplx = std::complex<double>;

// Where kappa_r (and hence G from a kappa_r target) is evaluated.
enum class KappaProbe { Mean, Bare, Ground, Excited };

struct DeviceParams {
    double omega_q_bare = 0.0;
    double omega_r_bare = 0.0;
    double omega_f = 0.0;
    double g = 0.0;
    std::optional<double> g_ef;  // g-tilde; default from the corrected transmon formula
    std::optional<double> g_fh;  // g-double-tilde
    cplx G{0.0, 0.0};
    double kappa_f = 0.0;
    double kappa_r_int = 0.0;
    double kappa_f_out_fraction = 1.0;
    double delta_q = 0.0;
    double t1_intrinsic = std::numeric_limits<double>::infinity();
    double eta = 1.0;

    // Optional overrides of the dressed readout frequencies / chi. When absent they
    // follow from the three-level dispersive formulas at n = 0.
    std::optional<double> omega_r_ground;
    std::optional<double> omega_r_excited;
    std::optional<double> chi;
    KappaProbe kappa_r_probe = KappaProbe::Mean;
};

struct DerivedQuantities {
    double delta_rq = 0.0;
    double delta_fq = 0.0;
    double delta_qr = 0.0;
    double n_crit = 0.0;
    double n_crit_tilde = 0.0;
    // false when Delta == 0 or Delta == delta_q: dispersive formulas are disabled
    bool dispersive_valid = true;
    double q_factor_f = 0.0;
    double g_ef = 0.0;
    double g_fh = 0.0;
    double chi = 0.0;  // half of omega_r_excited - omega_r_ground
    double omega_r_ground = 0.0;
    double omega_r_excited = 0.0;
    double omega_r_probe = 0.0;
    std::vector<std::string> warnings;
};

inline double default_g_ef(double g, double delta_q, double omega_q) {
    return std::sqrt(2.0) * g * (1.0 - delta_q / (2.0 * omega_q));
}

inline double default_g_fh(double g, double delta_q, double omega_q) {
    return std::sqrt(3.0) * g * (1.0 - delta_q / omega_q);
}

// |G| that gives kappa_eff(omega_probe) == kappa_r.
inline double coupling_for_kappa_r(double kappa_r, double kappa_f, double omega_f, double omega_probe) {
    double x = 2.0 * (omega_probe - omega_f) / kappa_f;
    return std::sqrt(kappa_r * kappa_f * (1.0 + x * x) / 4.0);
}

inline void validate(const DeviceParams& p) {
    auto finite = [](double v) { return std::isfinite(v); };
    auto fail = [](const std::string& m) { throw ValidationError(m); };
    if (!finite(p.omega_q_bare) || p.omega_q_bare <= 0) fail("omega_q must be finite and positive");
    if (!finite(p.omega_r_bare) || p.omega_r_bare <= 0) fail("omega_r must be finite and positive");
    if (!finite(p.omega_f) || p.omega_f <= 0) fail("omega_f must be finite and positive");
    if (!finite(p.g) || p.g <= 0) fail("g must be finite and positive");
    if (p.g_ef && (!finite(*p.g_ef) || *p.g_ef < 0)) fail("g_ef must be finite and non-negative");
    if (p.g_fh && (!finite(*p.g_fh) || *p.g_fh < 0)) fail("g_fh must be finite and non-negative");
    if (!finite(p.G.real()) || !finite(p.G.imag())) fail("G must be finite");
    if (!finite(p.kappa_f) || p.kappa_f <= 0) fail("kappa_f must be finite and positive");
    if (!finite(p.kappa_r_int) || p.kappa_r_int < 0) fail("kappa_r_int must be finite and non-negative");
    if (!(p.kappa_f_out_fraction >= 0 && p.kappa_f_out_fraction <= 1)) fail("kappa_f_out_fraction must lie in [0,1]");
    if (!finite(p.delta_q) || p.delta_q <= 0) fail("delta_q must be finite and positive");
    if (!(p.t1_intrinsic > 0)) fail("t1_intrinsic must be positive");
    if (!(p.eta > 0 && p.eta <= 1)) fail("eta must lie in (0,1]");
    if (p.omega_r_ground && (!finite(*p.omega_r_ground) || *p.omega_r_ground <= 0))
        fail("omega_r_ground must be finite and positive");
    if (p.omega_r_excited && (!finite(*p.omega_r_excited) || *p.omega_r_excited <= 0))
        fail("omega_r_excited must be finite and positive");
    if (p.chi && !finite(*p.chi)) fail("chi must be finite");
    if (p.chi && p.omega_r_ground && p.omega_r_excited)
        fail("chi conflicts with explicit ground and excited readout frequencies; give one or the other");
}

inline std::vector<std::string> rwa_warnings(const DeviceParams& p) {
    std::vector<std::string> w;
    const double limit = 0.2 * p.omega_r_bare;
    if (std::abs(p.omega_q_bare - p.omega_r_bare) >= limit) w.push_back("|omega_q - omega_r| exceeds 0.2 omega_r; RWA questionable");
    if (std::abs(p.omega_f - p.omega_r_bare) >= limit) w.push_back("|omega_f - omega_r| exceeds 0.2 omega_r; RWA questionable");
    if (p.g >= limit) w.push_back("g exceeds 0.2 omega_r; RWA questionable");
    if (std::abs(p.G) >= limit) w.push_back("|G| exceeds 0.2 omega_r; RWA questionable");
    return w;
}

inline DerivedQuantities derive(const DeviceParams& p) {
    DerivedQuantities d;
    d.delta_rq = p.omega_r_bare - p.omega_q_bare;
    d.delta_fq = p.omega_f - p.omega_q_bare;
    d.delta_qr = -d.delta_rq;
    d.q_factor_f = p.omega_f / p.kappa_f;
    d.g_ef = p.g_ef.value_or(default_g_ef(p.g, p.delta_q, p.omega_q_bare));
    d.g_fh = p.g_fh.value_or(default_g_fh(p.g, p.delta_q, p.omega_q_bare));

    const double D = d.delta_qr;
    d.dispersive_valid = D != 0.0 && D != p.delta_q;
    d.n_crit = D == 0.0 ? 0.0 : (D / (2.0 * p.g)) * (D / (2.0 * p.g));
    d.n_crit_tilde = d.g_ef == 0.0 ? std::numeric_limits<double>::infinity()
                                   : (D - p.delta_q) * (D - p.delta_q) / (4.0 * d.g_ef * d.g_ef);

    // n = 0 dressed readout shifts from the three-level ladder
    double shift_g = 0.0, shift_e = 0.0;
    if (d.dispersive_valid) {
        shift_g = -p.g * p.g / D;
        shift_e = p.g * p.g / D - d.g_ef * d.g_ef / (D - p.delta_q);
    } else {
        d.warnings.push_back("dispersive formulas disabled (Delta = 0 or Delta = delta_q)");
    }
    if (p.omega_r_ground && p.omega_r_excited) {
        d.omega_r_ground = *p.omega_r_ground;
        d.omega_r_excited = *p.omega_r_excited;
    } else if (p.chi) {
        d.omega_r_ground = p.omega_r_ground.value_or(p.omega_r_bare - *p.chi);
        d.omega_r_excited = p.omega_r_excited.value_or(p.omega_r_bare + *p.chi);
    } else {
        d.omega_r_ground = p.omega_r_ground.value_or(p.omega_r_bare + shift_g);
        d.omega_r_excited = p.omega_r_excited.value_or(p.omega_r_bare + shift_e);
    }
    d.chi = p.chi.value_or(0.5 * (d.omega_r_excited - d.omega_r_ground));

    switch (p.kappa_r_probe) {
        case KappaProbe::Mean: d.omega_r_probe = 0.5 * (d.omega_r_ground + d.omega_r_excited); break;
        case KappaProbe::Bare: d.omega_r_probe = p.omega_r_bare; break;
        case KappaProbe::Ground: d.omega_r_probe = d.omega_r_ground; break;
        case KappaProbe::Excited: d.omega_r_probe = d.omega_r_excited; break;
    }

    auto w = rwa_warnings(p);
    d.warnings.insert(d.warnings.end(), w.begin(), w.end());
    return d;
}

// ---------------------------------------------------------------------------
// Drives

enum class DrivePort { None, Readout, Filter };
enum class EnvelopeKind { Step, Table, Function };

// Time-dependent multiplier of the drive amplitude. Step is 0 before t = 0 and 1 after,
// with no ramp. Tables interpolate linearly and hold their end values.
class Envelope {
public:
    Envelope() = default;

    static Envelope step() { return Envelope{}; }

    static Envelope table(std::vector<double> t, std::vector<cplx> v) {
        if (t.empty() || t.size() != v.size()) throw ValidationError("envelope table needs matching, non-empty columns");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1])) throw ValidationError("envelope table times must increase");
        Envelope e;
        e.kind_ = EnvelopeKind::Table;
        e.t_ = std::make_shared<const std::vector<double>>(std::move(t));
        e.v_ = std::make_shared<const std::vector<cplx>>(std::move(v));
        return e;
    }

    static Envelope function(std::function<cplx(double)> f) {
        Envelope e;
        e.kind_ = EnvelopeKind::Function;
        e.f_ = std::move(f);
        return e;
    }

    EnvelopeKind kind() const { return kind_; }

    cplx operator()(double t) const {
        switch (kind_) {
            case EnvelopeKind::Step: return t >= 0.0 ? 1.0 : 0.0;
            case EnvelopeKind::Function: return f_(t);
            case EnvelopeKind::Table: {
                const auto& ts = *t_;
                const auto& vs = *v_;
                if (t <= ts.front()) return vs.front();
                if (t >= ts.back()) return vs.back();
                auto it = std::upper_bound(ts.begin(), ts.end(), t);
                std::size_t i = static_cast<std::size_t>(it - ts.begin());
                double w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
                return (1.0 - w) * vs[i - 1] + w * vs[i];
            }
        }
        return 0.0;
    }

private:
    EnvelopeKind kind_ = EnvelopeKind::Step;
    std::shared_ptr<const std::vector<double>> t_;
    std::shared_ptr<const std::vector<cplx>> v_;
    std::function<cplx(double)> f_;
};

// amplitude is epsilon_r or epsilon_f in rad/ns, normalized so that a lone resonator
// settles at alpha = -i eps / (kappa/2 + i Delta), |alpha|^2 = mean photon number.
struct DriveConfig {
    DrivePort port = DrivePort::None;
    double omega_d = 0.0;
    cplx amplitude{0.0, 0.0};
    Envelope envelope;

    static DriveConfig none(double omega_d) { return {DrivePort::None, omega_d, {0.0, 0.0}, Envelope::step()}; }
    static DriveConfig readout(double omega_d, cplx eps, Envelope env = Envelope::step()) {
        return checked({DrivePort::Readout, omega_d, eps, std::move(env)});
    }
    static DriveConfig filter(double omega_d, cplx eps, Envelope env = Envelope::step()) {
        return checked({DrivePort::Filter, omega_d, eps, std::move(env)});
    }

    cplx at(double t) const { return port == DrivePort::None ? cplx{} : amplitude * envelope(t); }

    static DriveConfig checked(DriveConfig d) {
        if (!std::isfinite(d.omega_d)) throw ValidationError("drive frequency must be finite");
        if ((d.amplitude == cplx{}) != (d.port == DrivePort::None))
            throw ValidationError("drive amplitude must be zero exactly when the port is None");
        return d;
    }
};

}  // namespace purcellkit::params
