#pragma once

// Dispersive readout theory for a multi-level transmon coupled to one resonator:
// perturbative and exact dressed ladders, chi(n), Gamma(n), photon-induced
// excitation rates, coherent-state separation and the measurement-error budget.
//
// Sign convention here: Delta = omega_q - omega_r (DerivedQuantities::delta_qr),
// chi = (omega_r^e - omega_r^g) / 2.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numerics/ode.hpp"
#include "params.hpp"

namespace purcellkit::dispersive {

using cplx = std::complex<double>;
using params::DeviceParams;

enum class Levels { Two = 2, Three = 3, Four = 4 };

struct Couplings {
    double g = 0.0;
    double g_ef = 0.0;  // g~
    double g_fh = 0.0;  // g~~
    double Delta = 0.0;
    double delta_q = 0.0;
    double omega_q = 0.0;
    double omega_r = 0.0;

    double n_crit() const { return Delta * Delta / (4.0 * g * g); }
    double n_crit_tilde() const {
        return g_ef == 0.0 ? std::numeric_limits<double>::infinity()
                           : (Delta - delta_q) * (Delta - delta_q) / (4.0 * g_ef * g_ef);
    }
};

inline Couplings couplings(const DeviceParams& p) {
    auto d = params::derive(p);
    return {p.g, d.g_ef, d.g_fh, d.delta_qr, p.delta_q, p.omega_q_bare, p.omega_r_bare};
}

// same device with the harmonic-ladder couplings sqrt(2) g and sqrt(3) g
inline Couplings oscillator_couplings(Couplings c) {
    c.g_ef = std::sqrt(2.0) * c.g;
    c.g_fh = std::sqrt(3.0) * c.g;
    return c;
}

inline void require_dispersive(const Couplings& c) {
    if (c.Delta == 0.0) throw ValidationError("qubit and resonator are resonant: dispersive formulas undefined");
    if (c.Delta == c.delta_q)
        throw ValidationError("Delta equals the anharmonicity: the e-f transition is resonant with the resonator");
}

struct ChiResult {
    double chi = 0.0;
    double chi_approx = 0.0;
};

inline ChiResult chi_full(const Couplings& c) {
    require_dispersive(c);
    const double D = c.Delta;
    return {c.g * c.g / D - 0.5 * c.g_ef * c.g_ef / (D - c.delta_q), -c.g * c.g * c.delta_q / (D * D)};
}

inline ChiResult chi_full(const DeviceParams& p) { return chi_full(couplings(p)); }

// Fourth-order dressed resonator frequencies minus omega_r_bare.
inline double omega_r_shift_g(const Couplings& c, double n) {
    require_dispersive(c);
    const double D = c.Delta, d = c.delta_q;
    const double g2 = c.g * c.g, t2 = c.g_ef * c.g_ef;
    return -g2 / D + g2 * g2 * (2 * n + 1) / (D * D * D) - 2 * g2 * t2 * n / (D * D * (2 * D - d));
}

inline double omega_r_shift_e(const Couplings& c, double n, Levels levels) {
    require_dispersive(c);
    const double D = c.Delta, d = c.delta_q, Dd = D - c.delta_q;
    const double g2 = c.g * c.g, t2 = c.g_ef * c.g_ef, h2 = c.g_fh * c.g_fh;
    if (levels == Levels::Two) return g2 / D - g2 * g2 * (2 * n + 3) / (D * D * D);
    double w = g2 / D - t2 / Dd - g2 * g2 * (2 * n + 3) / (D * D * D) + t2 * t2 * (2 * n + 1) / (Dd * Dd * Dd) -
               2 * d * g2 * t2 * (n + 1) / (D * D * Dd * Dd);
    if (levels == Levels::Four) w -= 2 * t2 * h2 * n / (Dd * Dd * (2 * D - 3 * d));
    return w;
}

struct ChiN {
    double chi = 0.0;
    double slope = 0.0;           // d chi / dn of the expression (it is linear in n)
    double slope_estimate = 0.0;  // (9/8)(delta_q/Delta) chi(0) / n_crit
    bool valid = true;            // n <= min(n_crit, n_crit~) / 10
};

inline ChiN chi_n(const Couplings& c, double n, Levels levels) {
    auto chi_at = [&](double m) { return 0.5 * (omega_r_shift_e(c, m, levels) - omega_r_shift_g(c, m)); };
    ChiN r;
    r.chi = chi_at(n);
    r.slope = chi_at(n + 1) - chi_at(n);
    r.slope_estimate = 9.0 / 8.0 * c.delta_q / c.Delta * chi_at(0) / c.n_crit();
    r.valid = n <= 0.1 * std::min(c.n_crit(), c.n_crit_tilde());
    return r;
}

inline ChiN chi_n(const DeviceParams& p, double n, Levels levels) { return chi_n(couplings(p), n, levels); }

// Closed forms that assume g~ = sqrt(2) g and g~~ = sqrt(3) g.
inline double chi_n_oscillator(const Couplings& c, double n, Levels levels) {
    require_dispersive(c);
    const double D = c.Delta, d = c.delta_q, x = d / D;
    const double g4 = std::pow(c.g, 4);
    const double base = -c.g * c.g * d / (D * (D - d)) +
                        4 * g4 * d / std::pow(D, 4) * (1 - x + x * x / 2) / std::pow(1 - x, 3);
    if (levels == Levels::Three)
        return base + 3 * n * g4 / std::pow(D, 3) * (1 - x * x + x * x * x - std::pow(x, 4) / 3) /
                          ((1 - x / 2) * std::pow(1 - x, 3));
    if (levels == Levels::Four)
        return base - 9 * n * g4 * d * d / (2 * std::pow(D, 5)) *
                          (1 - 5.0 / 3 * x + 11.0 / 9 * x * x - x * x * x / 3) /
                          ((1 - x / 2) * std::pow(1 - x, 3) * (1 - 1.5 * x));
    throw ValidationError("oscillator closed form needs three or four levels");
}

struct GammaN {
    double full = 0.0;        // general g~
    double oscillator = 0.0;  // g~ = sqrt(2) g
    double n_coefficient = 0.0;  // d(full)/dn
};

inline GammaN gamma_n_analytic(const Couplings& c, double n, double kappa) {
    require_dispersive(c);
    const double D = c.Delta, d = c.delta_q;
    const double r = c.g * c.g / (D * D);
    const double t2 = c.g_ef * c.g_ef;
    GammaN out;
    const double per_n = -6 * r + t2 * (3 * D - 4 * d) / (D * (D - d) * (D - d));
    out.full = kappa * r * (1 - 3 * r + n * per_n);
    out.oscillator = kappa * r * (1 - 3 * r + n * 2 * c.g * c.g * d * (2 * D - 3 * d) / (D * D * (D - d) * (D - d)));
    out.n_coefficient = kappa * r * per_n;
    return out;
}

inline GammaN gamma_n_analytic(const DeviceParams& p, double n, double kappa) {
    return gamma_n_analytic(couplings(p), n, kappa);
}

struct ExcitationRates {
    double g_to_e = 0.0;
    double e_to_f = 0.0;
    double g_to_e_oscillator = 0.0;  // g~ = sqrt(2) g, n(n-1) -> n^2
    double e_to_f_oscillator = 0.0;
};

inline ExcitationRates excitation_rates(const Couplings& c, double n, double kappa) {
    require_dispersive(c);
    ExcitationRates out;
    if (n < 2) return out;
    const double D = c.Delta, d = c.delta_q, Dd = D - d;
    const double g2 = c.g * c.g, t2 = c.g_ef * c.g_ef, h2 = c.g_fh * c.g_fh;
    const double nn = n * (n - 1);
    const double a = g2 / (D * D) - t2 / (D * (2 * D - d));
    out.g_to_e = kappa * g2 * nn / (D * D) * a * a;
    const double b = t2 / Dd - g2 / (2 * D - d) - h2 / (2 * D - 3 * d);
    out.e_to_f = kappa * t2 * nn / std::pow(Dd, 4) * b * b;
    const double q = n / c.n_crit();
    out.g_to_e_oscillator = kappa * g2 / (D * D) * q * q * d * d / (16 * (2 * D - d) * (2 * D - d));
    out.e_to_f_oscillator = kappa * g2 / (D * D) * q * q * d * d * std::pow(D, 8) /
                            (2 * std::pow(Dd, 6) * std::pow(2 * D - d, 2) * std::pow(2 * D - 3 * d, 2));
    return out;
}

inline ExcitationRates excitation_rates(const DeviceParams& p, double n, double kappa) {
    return excitation_rates(couplings(p), n, kappa);
}

// ---------------------------------------------------------------------------
// Exact ladder. Block N holds |q, N-q> for qubit level q = 0..min(L-1, N); in
// the frame rotating at omega_r its diagonal is q*Delta - q(q-1)/2 * delta_q.

struct DressedSpectrum {
    Levels levels = Levels::Three;
    int n_max = 0;
    double omega_r_bare = 0.0;
    double omega_q_bare = 0.0;
    double kappa = 0.0;
    // frame[n][q] = E(q, n) - (n + q) omega_r_bare; NaN when the state is absent
    std::vector<std::array<double, 4>> frame;
    std::vector<double> omega_r_g, omega_r_e, chi_n;  // n = 0..n_max
    std::vector<double> omega_q_eff;                  // E(e,n) - E(g,n)
    double lamb_shift = 0.0;                          // omega_q_eff(0) - omega_q_bare
    std::vector<double> gamma_n;                      // kappa |<g,n| a |e,n>|^2
    std::vector<double> gamma_g_to_e, gamma_e_to_f;   // kappa |<e,n-2| a |g,n>|^2, kappa |<f,n-2| a |e,n>|^2
    bool ambiguous = false;
    double min_label_weight = 1.0;  // smallest |<bare|dressed>|^2 over labelled states

    double energy(int q, int n) const { return frame[n][q] + (n + q) * omega_r_bare; }
    // 2 sum_{m<n} chi(m); equals 2 n chi for an n-independent chi
    double stark_shift(int n) const {
        double s = 0.0;
        for (int m = 0; m < n; ++m) s += 2.0 * chi_n[m];
        return s;
    }
};

namespace detail {

struct Block {
    int N = 0;
    int dim = 0;
    Eigen::MatrixXd vectors;  // column q is the dressed state labelled by bare |q, N-q>
    Eigen::VectorXd energies;
};

inline Eigen::MatrixXd block_hamiltonian(const Couplings& c, int levels, int N, double s) {
    const int dim = std::min(levels, N + 1);
    const double cpl[3] = {c.g, c.g_ef, c.g_fh};
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    for (int q = 0; q < dim; ++q) H(q, q) = q * c.Delta - 0.5 * q * (q - 1) * c.delta_q;
    for (int q = 0; q + 1 < dim; ++q) {
        // <q+1, N-q-1| H |q, N-q> = coupling * sqrt(N-q)
        H(q, q + 1) = H(q + 1, q) = s * cpl[q] * std::sqrt(static_cast<double>(N - q));
    }
    return H;
}

// Follow each bare state from zero coupling to full coupling.
inline Block track_block(const Couplings& c, int levels, int N, int steps, bool& ambiguous, double& min_weight) {
    Block b;
    b.N = N;
    b.dim = std::min(levels, N + 1);
    Eigen::MatrixXd prev = Eigen::MatrixXd::Identity(b.dim, b.dim);
    Eigen::VectorXd ev = Eigen::VectorXd::Zero(b.dim);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    for (int k = 1; k <= steps; ++k) {
        const double s = static_cast<double>(k) / steps;
        es.compute(block_hamiltonian(c, levels, N, s));
        const Eigen::MatrixXd ov = prev.transpose() * es.eigenvectors();
        Eigen::MatrixXd next(b.dim, b.dim);
        std::vector<bool> used(b.dim, false);
        for (int q = 0; q < b.dim; ++q) {
            int best = 0;
            ov.row(q).cwiseAbs().maxCoeff(&best);
            if (used[best]) ambiguous = true;
            used[best] = true;
            if (ov(q, best) * ov(q, best) < 0.5) ambiguous = true;
            next.col(q) = es.eigenvectors().col(best) * (ov(q, best) < 0 ? -1.0 : 1.0);
            ev(q) = es.eigenvalues()(best);
        }
        prev = next;
    }
    for (int q = 0; q < b.dim; ++q) min_weight = std::min(min_weight, prev(q, q) * prev(q, q));
    b.vectors = prev;
    b.energies = ev;
    return b;
}

// <dressed q1 in block N-1| a |dressed q2 in block N>
inline double lowering_element(const Block& lo, int q1, const Block& hi, int q2) {
    double s = 0.0;
    for (int q = 0; q < std::min(lo.dim, hi.dim); ++q)
        s += lo.vectors(q, q1) * std::sqrt(static_cast<double>(hi.N - q)) * hi.vectors(q, q2);
    return s;
}

}  // namespace detail

inline DressedSpectrum dressed_oracle(const Couplings& c, int n_max, Levels levels, double kappa,
                                      int tracking_steps = 200) {
    const int L = static_cast<int>(levels);
    if (n_max < 0) throw ValidationError("n_max must be non-negative");
    if (static_cast<long>(n_max + 3) * L > 2000) throw ValidationError("ladder too large for dense diagonalization");
    if (tracking_steps < 1) throw ValidationError("tracking_steps must be positive");

    DressedSpectrum sp;
    sp.levels = levels;
    sp.n_max = n_max;
    sp.omega_r_bare = c.omega_r;
    sp.omega_q_bare = c.omega_q;
    sp.kappa = kappa;

    std::vector<detail::Block> blocks;
    for (int N = 0; N <= n_max + 3; ++N)
        blocks.push_back(detail::track_block(c, L, N, tracking_steps, sp.ambiguous, sp.min_label_weight));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    sp.frame.assign(n_max + 3, {nan, nan, nan, nan});
    for (int n = 0; n <= n_max + 2; ++n)
        for (int q = 0; q < L; ++q)
            if (n + q <= n_max + 3) sp.frame[n][q] = blocks[n + q].energies(q);

    auto rate = [&](int q_to, int n_to, int q_from, int n_from) {
        // kappa |<q_to, n_to| a |q_from, n_from>|^2, blocks differ by one excitation
        const auto& hi = blocks[q_from + n_from];
        const auto& lo = blocks[q_to + n_to];
        const double m = detail::lowering_element(lo, q_to, hi, q_from);
        return kappa * m * m;
    };

    for (int n = 0; n <= n_max; ++n) {
        sp.omega_r_g.push_back(c.omega_r + sp.frame[n + 1][0] - sp.frame[n][0]);
        sp.omega_r_e.push_back(c.omega_r + sp.frame[n + 1][1] - sp.frame[n][1]);
        sp.chi_n.push_back(0.5 * (sp.omega_r_e.back() - sp.omega_r_g.back()));
        sp.omega_q_eff.push_back(c.omega_q + sp.frame[n][1] - sp.frame[n][0] - c.Delta);
        sp.gamma_n.push_back(rate(0, n, 1, n));
        sp.gamma_g_to_e.push_back(n >= 2 ? rate(1, n - 2, 0, n) : 0.0);
        sp.gamma_e_to_f.push_back(n >= 2 && L >= 3 ? rate(2, n - 2, 1, n) : 0.0);
    }
    sp.lamb_shift = sp.omega_q_eff[0] - c.omega_q;
    return sp;
}

inline DressedSpectrum dressed_oracle(const DeviceParams& p, int n_max, Levels levels, double kappa) {
    auto c = couplings(p);
    require_dispersive(c);
    return dressed_oracle(c, n_max, levels, kappa);
}

// ---------------------------------------------------------------------------
// Coherent-state response of the readout resonator for qubit in e (+) or g (-).

struct CavityResponse {
    cplx alpha_plus, alpha_minus;
    double delta_alpha = 0.0;  // |alpha_+ - alpha_-|
};

inline CavityResponse cavity_response_steady(double kappa, double chi, double delta_rd, cplx eps) {
    const cplx I(0, 1);
    CavityResponse r;
    r.alpha_plus = -I * eps / (kappa / 2 + I * (delta_rd + chi));
    r.alpha_minus = -I * eps / (kappa / 2 + I * (delta_rd - chi));
    r.delta_alpha = std::abs(r.alpha_plus - r.alpha_minus);
    return r;
}

// Integrates both amplitudes from zero up to time t under eps * envelope(t).
inline CavityResponse cavity_response_at(double kappa, double chi, double delta_rd, cplx eps,
                                         const params::Envelope& envelope, double t,
                                         numerics::OdeOptions ode = {1e-11, 1e-14}) {
    if (t < 0) throw ValidationError("response time must be non-negative");
    const cplx I(0, 1);
    Eigen::Vector2cd y = Eigen::Vector2cd::Zero();
    if (t > 0) {
        auto rhs = [&](double s, const Eigen::Vector2cd& a, Eigen::Vector2cd& da) {
            const cplx e = eps * envelope(s);
            da(0) = -I * (delta_rd + chi) * a(0) - 0.5 * kappa * a(0) - I * e;
            da(1) = -I * (delta_rd - chi) * a(1) - 0.5 * kappa * a(1) - I * e;
        };
        numerics::integrate_dopri5(rhs, y, std::vector<double>{0.0, t}, ode,
                                   [&](std::size_t, double, const Eigen::Vector2cd& a) { y = a; });
    }
    return {y(0), y(1), std::abs(y(0) - y(1))};
}

// Drive giving n_bar photons in both states at delta_rd = 0.
inline double drive_for_photons(double n_bar, double kappa, double chi) {
    return std::sqrt(n_bar * (kappa * kappa / 4 + chi * chi));
}

inline double delta_alpha_resonant(double n_bar, double kappa, double chi) {
    const double x = kappa / (2 * chi);
    return 2 * std::sqrt(n_bar) / std::sqrt(x * x + 1);
}

// ---------------------------------------------------------------------------

inline double p_err_separation(double delta_alpha_eff) {
    return 0.5 * std::erfc(delta_alpha_eff / std::sqrt(2.0));
}

inline double p_err_separation_asymptotic(double delta_alpha_eff) {
    const double x = delta_alpha_eff;
    return std::exp(-x * x / 2) / (std::sqrt(2 * M_PI) * x);
}

struct BudgetInputs {
    double kappa = 0.0;
    double t_m = 0.0;
    double n_bar = 0.0;
    double eta = 1.0;
    double chi = 0.0;
    double g = 0.0;
    double Delta = 0.0;
    double delta_q = 0.0;
    double gamma = 0.0;  // qubit Purcell rate during the measurement
    double t1_intrinsic = std::numeric_limits<double>::infinity();
    double p_target = 1e-3;  // error level used by the t_m and detuning bounds
};

// chi from the device override or chi_approx; Gamma = kappa g^2 / Delta^2.
inline BudgetInputs budget_inputs(const DeviceParams& p, double kappa, double t_m, double n_bar) {
    auto c = couplings(p);
    require_dispersive(c);
    BudgetInputs in;
    in.kappa = kappa;
    in.t_m = t_m;
    in.n_bar = n_bar;
    in.eta = p.eta;
    in.chi = p.chi.value_or(chi_full(c).chi_approx);
    in.g = p.g;
    in.Delta = c.Delta;
    in.delta_q = p.delta_q;
    in.gamma = kappa * p.g * p.g / (c.Delta * c.Delta);
    in.t1_intrinsic = p.t1_intrinsic;
    return in;
}

struct ErrorBudget {
    double t_m = 0.0;
    double n_bar = 0.0;
    double delta_alpha = 0.0;
    double delta_alpha_eff = 0.0;
    double p_err_sep = 0.0;
    double p_purcell = 0.0;
    double p_intrinsic = 0.0;
    double p_err_total = 0.0;
    double t_m_bound = 0.0;       // (4/delta_q) / (sqrt(P eta) sqrt(n_bar/n_crit))
    double detuning_bound = 0.0;  // sqrt(2/P), compare with |Delta/g|
    double detuning_ratio = 0.0;  // |Delta/g|
    bool within_dispersive_range = true;  // n_bar < n_crit
};

inline ErrorBudget error_budget(const BudgetInputs& in) {
    if (!(in.t_m > 0)) throw ValidationError("measurement time must be positive");
    if (!(in.eta > 0 && in.eta <= 1)) throw ValidationError("efficiency must lie in (0, 1]");
    if (!(in.kappa > 0)) throw ValidationError("kappa must be positive");
    if (in.n_bar < 0) throw ValidationError("n_bar must be non-negative");
    if (!(in.p_target > 0 && in.p_target < 1)) throw ValidationError("p_target must lie in (0, 1)");
    ErrorBudget b;
    b.t_m = in.t_m;
    b.n_bar = in.n_bar;
    b.delta_alpha = in.chi == 0.0 ? 0.0 : delta_alpha_resonant(in.n_bar, in.kappa, in.chi);
    b.delta_alpha_eff = std::sqrt(in.eta * in.kappa * in.t_m) * b.delta_alpha;
    b.p_err_sep = p_err_separation(b.delta_alpha_eff);
    b.p_purcell = std::min(1.0, 0.5 * in.t_m * in.gamma);
    b.p_intrinsic = std::isinf(in.t1_intrinsic) ? 0.0 : std::min(1.0, 0.5 * in.t_m / in.t1_intrinsic);
    b.p_err_total = std::min(1.0, b.p_err_sep + b.p_purcell + b.p_intrinsic);
    const double n_crit = in.g == 0.0 ? std::numeric_limits<double>::infinity() : in.Delta * in.Delta / (4 * in.g * in.g);
    b.within_dispersive_range = in.n_bar < n_crit;
    b.t_m_bound = (4.0 / in.delta_q) / (std::sqrt(in.p_target * in.eta) * std::sqrt(in.n_bar / n_crit));
    b.detuning_bound = std::sqrt(2.0 / in.p_target);
    b.detuning_ratio = in.g == 0.0 ? std::numeric_limits<double>::infinity() : std::abs(in.Delta / in.g);
    return b;
}

}  // namespace purcellkit::dispersive
