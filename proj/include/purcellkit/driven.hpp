#pragma once

// Driven Lindblad dynamics of a two-level qubit, readout resonator and filter
// resonator in the frame rotating at the drive frequency, and the photon-number
// dependence of the Purcell rate.
//
// Basis index: (q * N_r + n_r) * N_f + n_f with q = 0 (g) or 1 (e); without the
// filter N_f = 1.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "errors.hpp"
#include "numerics/fit.hpp"
#include "numerics/ode.hpp"
#include "numerics/parallel.hpp"
#include "numerics/roots.hpp"
#include "params.hpp"
#include "semiclassical.hpp"
#include "singlex.hpp"

namespace purcellkit::driven {

using cplx = std::complex<double>;
using params::DeviceParams;
using params::DriveConfig;
using SpMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using DensityMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Topology { WithFilter, NoFilter };

inline constexpr int kMaxDimension = 4096;

// Number of Fock levels kept in each resonator (photon numbers 0..n-1).
struct FockTruncation {
    int n_max_readout = 2;
    int n_max_filter = 2;

    static int levels_for(double n_bar) {
        n_bar = std::max(0.0, n_bar);
        return static_cast<int>(std::ceil(n_bar + 6.0 * std::sqrt(n_bar))) + 2;
    }
    static FockTruncation for_photons(double n_r, double n_f, int margin = 0) {
        return {levels_for(n_r) + margin, levels_for(n_f) + margin};
    }
    int dimension(Topology t) const { return 2 * n_max_readout * (t == Topology::WithFilter ? n_max_filter : 1); }
};

inline double two_level_chi(const DeviceParams& p, double n_bar) {
    const double d = p.omega_r_bare - p.omega_q_bare;
    return -p.g * p.g / (d * std::sqrt(1.0 + 4.0 * p.g * p.g * n_bar / (d * d)));
}

inline double n_crit_two_level(const DeviceParams& p) {
    const double d = p.omega_r_bare - p.omega_q_bare;
    return d * d / (4.0 * p.g * p.g);
}

// readout damping used when the filter is bypassed: the filtered kappa_r plus internal loss
inline double bypass_kappa(const DeviceParams& p) {
    return semiclassical::effective_resonator(p).kappa_r + p.kappa_r_int;
}

struct Generator {
    Topology topology = Topology::WithFilter;
    FockTruncation trunc;
    int dim = 0;
    SpMat H;      // drive-frame Hamiltonian
    SpMat H_eff;  // H - (i/2) sum L^dag L
    std::vector<SpMat> collapse;
    Eigen::VectorXd diag_n_r, diag_n_f, diag_e;

    int index(int q, int nr, int nf) const {
        const int nfl = topology == Topology::WithFilter ? trunc.n_max_filter : 1;
        return (q * trunc.n_max_readout + nr) * nfl + nf;
    }

    // drho = K + K^dag + sum L rho L^dag with K = -i H_eff rho
    void apply(const DensityMatrix& rho, DensityMatrix& drho) const {
        const int n = dim;
        const int* outer = mH.outerIndexPtr();
        const int* inner = mH.innerIndexPtr();
        const cplx* val = mH.valuePtr();
        for (int i = 0; i < n; ++i) {
            auto row = drho.row(i);
            row.setZero();
            for (int k = outer[i]; k < outer[i + 1]; ++k) row.noalias() += val[k] * rho.row(inner[k]);
        }
        // in-place K + K^dag, tile by tile
        constexpr int B = 32;
        for (int bi = 0; bi < n; bi += B)
            for (int bj = bi; bj < n; bj += B) {
                const int ie = std::min(bi + B, n), je = std::min(bj + B, n);
                for (int i = bi; i < ie; ++i)
                    for (int j = (bi == bj ? i : bj); j < je; ++j) {
                        const cplx a = drho(i, j), b = drho(j, i);
                        drho(i, j) = a + std::conj(b);
                        drho(j, i) = b + std::conj(a);
                    }
            }
        for (const auto& J : jumps) {
            for (int i = 0; i < n; ++i) {
                const int si = J.src[i];
                if (si < 0) continue;
                const cplx* r = &rho(si, 0);
                cplx* out = &drho(i, 0);
                const double ai = J.amp[i];
                for (int j = 0; j < n; ++j) {
                    const int sj = J.src[j];
                    if (sj >= 0) out[j] += ai * J.amp[j] * r[sj];
                }
            }
        }
    }

    // collapse operator with at most one entry per row: L(i, src[i]) = amp[i]
    struct Jump {
        std::vector<int> src;
        std::vector<double> amp;
    };
    std::vector<Jump> jumps;
    SpMat mH;  // -i H_eff, compressed
};

namespace detail {

inline void predicted_photons(const DeviceParams& p, const DriveConfig& drive, Topology topo, double& n_r,
                              double& n_f) {
    n_r = n_f = 0.0;
    if (drive.port == params::DrivePort::None || drive.amplitude == cplx{}) return;
    const double shift = p.g * p.g / (p.omega_r_bare - p.omega_q_bare);
    for (double w : {drive.omega_d, p.omega_r_bare, p.omega_r_bare + shift, p.omega_r_bare - shift}) {
        if (topo == Topology::WithFilter) {
            auto s = semiclassical::steady_state_fields_at(p, drive, w);
            n_r = std::max(n_r, std::norm(s.alpha));
            n_f = std::max(n_f, std::norm(s.beta));
        } else {
            const double k = bypass_kappa(p);
            const double d = w - drive.omega_d;
            n_r = std::max(n_r, std::norm(drive.amplitude) / (k * k / 4 + d * d));
        }
    }
}

}  // namespace detail

inline Generator build_generator(const DeviceParams& p, const DriveConfig& drive, FockTruncation trunc,
                                 Topology topo = Topology::WithFilter, bool check_truncation = true) {
    if (trunc.n_max_readout < 2 || (topo == Topology::WithFilter && trunc.n_max_filter < 2))
        throw ValidationError("each resonator needs at least two Fock levels");
    if (trunc.dimension(topo) > kMaxDimension)
        throw ValidationError("truncated space exceeds " + std::to_string(kMaxDimension) + " states");
    if (drive.port != params::DrivePort::None && drive.envelope.kind() != params::EnvelopeKind::Step)
        throw ValidationError("driven Lindblad runs support step-on drives only");
    if (topo == Topology::NoFilter && drive.port == params::DrivePort::Filter)
        throw ValidationError("filter drive needs the filter resonator");
    if (check_truncation) {
        double n_r = 0, n_f = 0;
        detail::predicted_photons(p, drive, topo, n_r, n_f);
        if (trunc.n_max_readout < FockTruncation::levels_for(n_r) ||
            (topo == Topology::WithFilter && trunc.n_max_filter < FockTruncation::levels_for(n_f)))
            throw ValidationError("truncation too small for the requested drive (predicted n_r = " +
                                  std::to_string(n_r) + ", n_f = " + std::to_string(n_f) + ")");
    }

    Generator gen;
    gen.topology = topo;
    gen.trunc = trunc;
    if (topo == Topology::NoFilter) gen.trunc.n_max_filter = 1;
    gen.dim = trunc.dimension(topo);
    const int Nr = gen.trunc.n_max_readout, Nf = gen.trunc.n_max_filter;
    const bool filter = topo == Topology::WithFilter;

    const double wd = drive.omega_d;
    const double d_rd = p.omega_r_bare - wd, d_fd = p.omega_f - wd, d_qd = p.omega_q_bare - wd;
    const cplx eps = drive.port == params::DrivePort::None ? cplx{} : drive.amplitude;
    const bool eps_r = drive.port == params::DrivePort::Readout, eps_f = drive.port == params::DrivePort::Filter;
    const double kappa_r = filter ? p.kappa_r_int : bypass_kappa(p);

    std::vector<Eigen::Triplet<cplx>> h, la, lb;
    gen.diag_n_r.resize(gen.dim);
    gen.diag_n_f.resize(gen.dim);
    gen.diag_e.resize(gen.dim);
    for (int q = 0; q < 2; ++q)
        for (int a = 0; a < Nr; ++a)
            for (int b = 0; b < Nf; ++b) {
                const int i = gen.index(q, a, b);
                gen.diag_n_r(i) = a;
                gen.diag_n_f(i) = b;
                gen.diag_e(i) = q;
                h.emplace_back(i, i, d_rd * a + d_fd * b + d_qd * q);
                // g (a^dag sigma_- + a sigma_+): |e, a> -> |g, a+1>
                if (q == 1 && a + 1 < Nr) {
                    const int j = gen.index(0, a + 1, b);
                    const double m = p.g * std::sqrt(a + 1.0);
                    h.emplace_back(j, i, m);
                    h.emplace_back(i, j, m);
                }
                if (filter && a + 1 < Nr && b >= 1) {
                    // G a^dag b: |a, b> -> |a+1, b-1>
                    const int j = gen.index(q, a + 1, b - 1);
                    const cplx m = p.G * std::sqrt((a + 1.0) * b);
                    h.emplace_back(j, i, m);
                    h.emplace_back(i, j, std::conj(m));
                }
                if (eps_r && a + 1 < Nr) {
                    const int j = gen.index(q, a + 1, b);
                    h.emplace_back(j, i, eps * std::sqrt(a + 1.0));
                    h.emplace_back(i, j, std::conj(eps) * std::sqrt(a + 1.0));
                }
                if (eps_f && b + 1 < Nf) {
                    const int j = gen.index(q, a, b + 1);
                    h.emplace_back(j, i, eps * std::sqrt(b + 1.0));
                    h.emplace_back(i, j, std::conj(eps) * std::sqrt(b + 1.0));
                }
                if (a >= 1) la.emplace_back(gen.index(q, a - 1, b), i, std::sqrt(kappa_r * a));
                if (filter && b >= 1) lb.emplace_back(gen.index(q, a, b - 1), i, std::sqrt(p.kappa_f * b));
            }
    gen.H.resize(gen.dim, gen.dim);
    gen.H.setFromTriplets(h.begin(), h.end());
    SpMat sum_ll(gen.dim, gen.dim);
    auto add_channel = [&](std::vector<Eigen::Triplet<cplx>>& t) {
        SpMat L(gen.dim, gen.dim);
        L.setFromTriplets(t.begin(), t.end());
        sum_ll += SpMat(L.adjoint() * L);
        Generator::Jump J{std::vector<int>(gen.dim, -1), std::vector<double>(gen.dim, 0.0)};
        for (const auto& e : t) {
            J.src[e.row()] = e.col();
            J.amp[e.row()] = e.value().real();
        }
        gen.jumps.push_back(std::move(J));
        gen.collapse.push_back(std::move(L));
    };
    if (filter && p.kappa_f > 0) add_channel(lb);
    if (kappa_r > 0) add_channel(la);
    gen.H_eff = gen.H - cplx(0, 0.5) * sum_ll;
    gen.H_eff.makeCompressed();
    gen.mH = cplx(0, -1) * gen.H_eff;
    gen.mH.makeCompressed();
    return gen;
}

inline double hermiticity_error(const DensityMatrix& m) { return (m - m.adjoint()).cwiseAbs().maxCoeff(); }

struct TruncatedDensityMatrix {
    Topology topology = Topology::WithFilter;
    FockTruncation trunc;
    DensityMatrix rho;
    double time = 0.0;

    double trace() const { return rho.trace().real(); }
    double hermiticity() const { return hermiticity_error(rho); }
    double min_eigenvalue() const {
        Eigen::MatrixXcd herm = 0.5 * (rho + rho.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }
};

// |q, n_r, n_f><q, n_r, n_f|
inline TruncatedDensityMatrix fock_state(const Generator& gen, int q, int nr, int nf) {
    if (q < 0 || q > 1 || nr < 0 || nr >= gen.trunc.n_max_readout || nf < 0 || nf >= gen.trunc.n_max_filter)
        throw ValidationError("Fock state outside the truncation");
    TruncatedDensityMatrix s{gen.topology, gen.trunc, DensityMatrix::Zero(gen.dim, gen.dim), 0.0};
    const int i = gen.index(q, nr, nf);
    s.rho(i, i) = 1.0;
    return s;
}

inline TruncatedDensityMatrix excited_vacuum(const Generator& gen) { return fock_state(gen, 1, 0, 0); }

struct PhotonNumbers {
    double n_r = 0.0;
    double n_f = 0.0;
};

inline PhotonNumbers mean_photons(const Generator& gen, const DensityMatrix& rho) {
    Eigen::VectorXd d = rho.diagonal().real();
    return {d.dot(gen.diag_n_r), d.dot(gen.diag_n_f)};
}

inline double excited_population(const Generator& gen, const DensityMatrix& rho) {
    return rho.diagonal().real().dot(gen.diag_e);
}

struct LindbladOptions {
    numerics::OdeOptions ode{1e-8, 1e-11};
    double trace_bound = 1e-8;
    double hermiticity_bound = 1e-10;
    bool keep_states = false;
};

struct LindbladTrajectory {
    std::vector<double> times, rho_ee, n_r, n_f, trace;
    std::vector<DensityMatrix> states;  // only with keep_states
    double max_trace_drift = 0.0;
    double max_hermiticity = 0.0;
    numerics::OdeStats stats;
};

inline LindbladTrajectory lindblad_evolve(const Generator& gen, const TruncatedDensityMatrix& rho0,
                                          const std::vector<double>& grid, const LindbladOptions& opt = {}) {
    if (rho0.rho.rows() != gen.dim || rho0.rho.cols() != gen.dim)
        throw ValidationError("initial density matrix does not match the generator");
    if (std::abs(rho0.trace() - 1.0) > opt.trace_bound) throw ValidationError("initial density matrix trace is not 1");
    if (rho0.hermiticity() > opt.hermiticity_bound) throw ValidationError("initial density matrix is not Hermitian");

    LindbladTrajectory tr;
    const std::size_t n = grid.size();
    tr.times = grid;
    tr.rho_ee.resize(n);
    tr.n_r.resize(n);
    tr.n_f.resize(n);
    tr.trace.resize(n);
    auto rhs = [&](double, const DensityMatrix& r, DensityMatrix& dr) { gen.apply(r, dr); };
    tr.stats = numerics::integrate_dopri5(
        rhs, rho0.rho, grid, opt.ode, [&](std::size_t i, double, const DensityMatrix& r) {
            tr.trace[i] = r.trace().real();
            tr.rho_ee[i] = excited_population(gen, r);
            auto ph = mean_photons(gen, r);
            tr.n_r[i] = ph.n_r;
            tr.n_f[i] = ph.n_f;
            tr.max_trace_drift = std::max(tr.max_trace_drift, std::abs(tr.trace[i] - 1.0));
            tr.max_hermiticity = std::max(tr.max_hermiticity, hermiticity_error(r));
            if (opt.keep_states) tr.states.push_back(r);
        });
    if (tr.max_trace_drift > opt.trace_bound)
        throw NumericalError("trace drifted by " + std::to_string(tr.max_trace_drift));
    if (tr.max_hermiticity > opt.hermiticity_bound)
        throw NumericalError("density matrix lost Hermiticity");
    return tr;
}

// ---------------------------------------------------------------------------

struct RateFit {
    double gamma = 0.0;
    double t_start = 0.0, t_end = 0.0;
    double residual_rms = 0.0;  // in units of -ln rho_ee
    double slope_lo = 0.0, slope_hi = 0.0;
    std::size_t points = 0;
    bool residual_flag = false;      // residual_rms above the bound
    bool non_monotone_flag = false;  // rho_ee rises somewhere in the window
};

struct RateFitOptions {
    double t_start = 0.0;
    double t_end = std::numeric_limits<double>::infinity();
    double min_start = 0.0;  // transient bound, e.g. 10 max(1/kappa_f, 1/kappa_r)
    double floor = 0.9;      // rho_ee must stay above this in the window
    double residual_bound = 1e-4;
};

inline RateFit extract_rate(const std::vector<double>& t, const std::vector<double>& rho_ee, const RateFitOptions& o) {
    if (t.size() != rho_ee.size()) throw ValidationError("time and population columns differ in length");
    if (o.t_start < o.min_start) throw ValidationError("fit window starts inside the transient");
    std::vector<double> x, y;
    double prev = std::numeric_limits<double>::infinity();
    RateFit f;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < o.t_start || t[i] > o.t_end) continue;
        if (!(rho_ee[i] >= o.floor))
            throw ValidationError("rho_ee falls below " + std::to_string(o.floor) + " inside the fit window");
        if (rho_ee[i] > prev) f.non_monotone_flag = true;
        prev = rho_ee[i];
        x.push_back(t[i]);
        y.push_back(-std::log(rho_ee[i]));
    }
    if (x.size() < 3) throw ValidationError("fit window holds fewer than three samples");
    auto lf = numerics::fit_line(x, y);
    f.gamma = lf.slope;
    f.t_start = x.front();
    f.t_end = x.back();
    f.residual_rms = lf.residual_rms;
    f.slope_lo = lf.slope_lo;
    f.slope_hi = lf.slope_hi;
    f.points = x.size();
    f.residual_flag = f.residual_rms > o.residual_bound;
    return f;
}

// ---------------------------------------------------------------------------

enum class StarkVariant { FilterQuartic, FilterQuarticLinear, NoFilterStark, NoFilterExact2L };

// FilterQuartic uses the two-level identification (omega_r - omega_q,eff)^2 = Delta^2 (1 + n/n_crit);
// FilterQuarticLinear uses omega_q,eff = omega_q + 2 chi(0) n with chi(0) = -g^2/Delta_rq.
inline double stark_model(double n_bar, StarkVariant v, const DeviceParams& p) {
    const double nc = n_crit_two_level(p);
    if (!(nc > 0)) throw ValidationError("n_crit must be positive");
    const double x = n_bar / nc;
    switch (v) {
        case StarkVariant::FilterQuartic: return 1.0 / ((1 + x) * (1 + x));
        case StarkVariant::FilterQuarticLinear: {
            const double d = p.omega_r_bare - p.omega_q_bare;
            const double shifted = d - 2.0 * two_level_chi(p, 0.0) * n_bar;
            return std::pow(d / shifted, 4);
        }
        case StarkVariant::NoFilterStark: return 1.0 / (1 + x);
        case StarkVariant::NoFilterExact2L: {
            const double s = 1.0 / std::sqrt(1 + x) + 1.0 / (1 + x);
            return s * s / 4.0;
        }
    }
    return 1.0;
}

// Purcell rate with no drive: exact cubic with the filter, or the slow root of
// lambda^2 + (i Delta_rq + kappa/2) lambda + g^2 = 0 without it.
inline double baseline_rate(const DeviceParams& p, Topology topo) {
    if (topo == Topology::WithFilter) return singlex::solve(p).gamma_exact;
    const cplx I(0, 1);
    const double d = p.omega_r_bare - p.omega_q_bare;
    const cplx b = I * d + bypass_kappa(p) / 2;
    const cplx disc = std::sqrt(b * b - 4.0 * p.g * p.g);
    const cplx r1 = (-b + disc) / 2.0, r2 = (-b - disc) / 2.0;
    const cplx slow = std::abs(r1.real()) < std::abs(r2.real()) ? r1 : r2;
    return -2.0 * slow.real();
}

struct DriveSetting {
    double omega_d = 0.0;
    double eps = 0.0;
    double n_r_classical = 0.0;
    double n_f_classical = 0.0;
};

// Readout drive at omega_r^e(n) = omega_r + chi(n) with amplitude giving n photons
// in the classical steady state of the e-shifted resonator.
inline DriveSetting calibrate_drive(const DeviceParams& p, double n_bar, Topology topo) {
    DriveSetting s;
    const double w_e = p.omega_r_bare + two_level_chi(p, n_bar);
    s.omega_d = w_e;
    if (n_bar <= 0) return s;
    auto photons = [&](double eps, double* nf) {
        if (eps == 0.0) {
            if (nf) *nf = 0.0;
            return 0.0;
        }
        if (topo == Topology::NoFilter) {
            const double k = bypass_kappa(p);
            if (nf) *nf = 0.0;
            return eps * eps / (k * k / 4);
        }
        auto f = semiclassical::steady_state_fields_at(p, DriveConfig::readout(s.omega_d, eps), w_e);
        if (nf) *nf = std::norm(f.beta);
        return std::norm(f.alpha);
    };
    double hi = 1e-3;
    while (photons(hi, nullptr) < n_bar) {
        hi *= 4;
        if (hi > 1e6) throw NumericalError("drive calibration failed to bracket the photon number");
    }
    s.eps = numerics::find_root([&](double e) { return photons(e, nullptr) / n_bar - 1.0; }, 0.0, hi, 1e-6, 0.0);
    s.n_r_classical = photons(s.eps, &s.n_f_classical);
    if (std::abs(s.n_r_classical / n_bar - 1.0) > 0.005) throw NumericalError("drive calibration missed tolerance");
    return s;
}

struct SweepOptions {
    std::vector<double> n_bar_list{0.5, 1.0, 2.0, 3.0};
    Topology topology = Topology::WithFilter;
    double fit_start = -1;  // < 0: 10 max(1/kappa_f, 1/kappa_r)
    double fit_window = 1000.0;
    double sample_dt = 2.0;
    int trunc_margin = 4;
    bool convergence_check = true;
    double convergence_bound = 0.005;
    double floor = 0.9;
    numerics::OdeOptions ode{1e-7, 1e-10};
    int jobs = 1;
};

struct SweepRow {
    double n_bar_target = 0.0;
    double n_bar = 0.0;  // mean readout photons over the fit window
    double n_f = 0.0;
    double omega_d = 0.0;
    double eps = 0.0;
    double gamma = 0.0;
    double ratio = 0.0;
    double ratio_model = 0.0;  // FilterQuartic or NoFilterStark
    RateFit fit;
    FockTruncation trunc;
    double gamma_check = 0.0;         // rerun with the enlarged truncation
    double truncation_change = 0.0;   // |gamma_check/gamma - 1|
    bool converged = true;
    long ode_steps = 0;
};

struct SweepResult {
    Topology topology = Topology::WithFilter;
    double gamma0 = 0.0;
    double n_crit = 0.0;
    std::vector<SweepRow> rows;
    double slope = 0.0;        // d ratio / d n at n = 0 from a quadratic through the origin
    double model_slope = 0.0;  // -2/n_crit with the filter, -1/n_crit without
    double slope_ratio = 0.0;  // slope / model_slope
    bool monotone = true;
};

inline double default_fit_start(const DeviceParams& p, Topology topo) {
    const double kr = topo == Topology::WithFilter ? semiclassical::effective_resonator(p).kappa_r : bypass_kappa(p);
    double slowest = 1.0 / kr;
    if (topo == Topology::WithFilter) slowest = std::max(slowest, 1.0 / p.kappa_f);
    return 10.0 * slowest;
}

namespace detail {

inline std::pair<RateFit, LindbladTrajectory> run_point(const DeviceParams& p, const DriveSetting& d,
                                                        FockTruncation tr, const SweepOptions& o, double fit_start) {
    auto drive = d.eps > 0 ? DriveConfig::readout(d.omega_d, d.eps) : DriveConfig::none(d.omega_d);
    auto gen = build_generator(p, drive, tr, o.topology);
    const double t_end = fit_start + o.fit_window;
    std::vector<double> grid;
    for (double t = 0.0; t < t_end - 1e-9; t += o.sample_dt) grid.push_back(t);
    grid.push_back(t_end);
    LindbladOptions lo;
    lo.ode = o.ode;
    auto traj = lindblad_evolve(gen, excited_vacuum(gen), grid, lo);
    RateFitOptions fo;
    fo.t_start = fit_start;
    fo.min_start = fit_start;
    fo.floor = o.floor;
    auto fit = extract_rate(traj.times, traj.rho_ee, fo);
    return {fit, std::move(traj)};
}

}  // namespace detail

inline SweepRow sweep_point(const DeviceParams& p, double n_bar, const SweepOptions& o, double gamma0) {
    SweepRow row;
    row.n_bar_target = n_bar;
    const double fit_start = o.fit_start < 0 ? default_fit_start(p, o.topology) : o.fit_start;
    auto d = calibrate_drive(p, n_bar, o.topology);
    row.omega_d = d.omega_d;
    row.eps = d.eps;
    row.trunc = FockTruncation::for_photons(n_bar, d.n_f_classical);
    if (o.topology == Topology::NoFilter) row.trunc.n_max_filter = 1;
    auto [fit, traj] = detail::run_point(p, d, row.trunc, o, fit_start);
    row.fit = fit;
    row.gamma = fit.gamma;
    row.ode_steps = traj.stats.accepted;
    double nr = 0, nf = 0;
    int cnt = 0;
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= fit_start) {
            nr += traj.n_r[i];
            nf += traj.n_f[i];
            ++cnt;
        }
    row.n_bar = nr / cnt;
    row.n_f = nf / cnt;
    row.ratio = row.gamma / gamma0;
    row.ratio_model = stark_model(row.n_bar, o.topology == Topology::WithFilter ? StarkVariant::FilterQuartic
                                                                               : StarkVariant::NoFilterStark, p);
    if (o.convergence_check) {
        FockTruncation big{row.trunc.n_max_readout + o.trunc_margin,
                           o.topology == Topology::WithFilter ? row.trunc.n_max_filter + o.trunc_margin : 1};
        auto check = detail::run_point(p, d, big, o, fit_start);
        row.gamma_check = check.first.gamma;
        row.truncation_change = std::abs(row.gamma_check / row.gamma - 1.0);
        row.converged = row.truncation_change < o.convergence_bound;
    }
    return row;
}

inline SweepResult purcell_vs_photons(const DeviceParams& p, const SweepOptions& o) {
    for (double n : o.n_bar_list)
        if (!(n >= 0)) throw ValidationError("photon numbers must be non-negative");
    SweepResult res;
    res.topology = o.topology;
    res.gamma0 = baseline_rate(p, o.topology);
    res.n_crit = n_crit_two_level(p);
    res.rows.resize(o.n_bar_list.size());
    numerics::parallel_for(o.n_bar_list.size(), o.jobs,
                 [&](std::size_t i) { res.rows[i] = sweep_point(p, o.n_bar_list[i], o, res.gamma0); });

    for (std::size_t i = 1; i < res.rows.size(); ++i)
        if (res.rows[i].n_bar_target > res.rows[i - 1].n_bar_target && !(res.rows[i].ratio < res.rows[i - 1].ratio))
            res.monotone = false;
    std::vector<double> x, y;
    for (const auto& r : res.rows)
        if (r.n_bar > 0) {
            x.push_back(r.n_bar);
            y.push_back(r.ratio - 1.0);
        }
    res.model_slope = (o.topology == Topology::WithFilter ? -2.0 : -1.0) / res.n_crit;
    if (x.size() >= 2) {
        auto c = numerics::fit_powers(x, y, {1, 2});
        res.slope = c(0);
    } else if (x.size() == 1) {
        res.slope = y[0] / x[0];
    }
    res.slope_ratio = res.slope / res.model_slope;
    return res;
}

}  // namespace purcellkit::driven
