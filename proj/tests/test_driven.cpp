#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "purcellkit/config.hpp"
#include "purcellkit/driven.hpp"

using namespace purcellkit;
using namespace purcellkit::driven;
using params::DeviceParams;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

DeviceParams fig() { return config::load_preset("driven-two-level"); }

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> x(n);
    for (int i = 0; i < n; ++i) x[i] = a + (b - a) * i / (n - 1);
    return x;
}

Eigen::MatrixXcd dense(const SpMat& m) { return Eigen::MatrixXcd(m); }

}  // namespace

TEST(Generator, HamiltonianIsHermitian) {
    auto p = fig();
    auto d = calibrate_drive(p, 1.0, Topology::WithFilter);
    auto gen = build_generator(p, DriveConfig::readout(d.omega_d, d.eps), {10, 4});
    EXPECT_EQ((dense(gen.H) - dense(gen.H).adjoint()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Generator, SingleExcitationBlockIsTheAmplitudeGenerator) {
    auto p = config::load_preset("purcell-filter");
    p.kappa_r_int = 1.0 / 5000.0;
    // in the frame of the qubit the block is exactly the amplitude-equation matrix
    auto gen = build_generator(p, DriveConfig::none(p.omega_q_bare), {2, 2});
    const int e = gen.index(1, 0, 0), r = gen.index(0, 1, 0), f = gen.index(0, 0, 1);
    const std::complex<double> I(0, 1);
    Eigen::Matrix3cd M;
    M << 0, p.g, 0,  //
        p.g, p.omega_r_bare - p.omega_q_bare - 0.5 * I * p.kappa_r_int, p.G,  //
        0, std::conj(p.G), p.omega_f - p.omega_q_bare - 0.5 * I * p.kappa_f;
    auto H = dense(gen.H_eff);
    const int idx[3] = {e, r, f};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(std::abs(H(idx[i], idx[j]) - M(i, j)), 0.0, 1e-15) << i << j;
    // no leakage out of the block without a drive
    for (int i = 0; i < gen.dim; ++i) {
        if (i == e || i == r || i == f) continue;
        for (int j : idx) EXPECT_EQ(std::abs(dense(gen.H)(i, j)), 0.0);
    }
}

TEST(Generator, DimensionAtDrivenPreset) {
    auto p = fig();
    auto d = calibrate_drive(p, 1.0, Topology::WithFilter);
    auto tr = FockTruncation::for_photons(1.0, d.n_f_classical);
    auto gen = build_generator(p, DriveConfig::readout(d.omega_d, d.eps), tr);
    EXPECT_EQ(gen.dim, 2 * tr.n_max_readout * tr.n_max_filter);
    EXPECT_EQ(tr.n_max_readout, 9);
    EXPECT_EQ(gen.H.rows(), gen.dim);
    auto nf = build_generator(p, DriveConfig::readout(d.omega_d, d.eps), tr, Topology::NoFilter);
    EXPECT_EQ(nf.dim, 2 * tr.n_max_readout);
}

TEST(Generator, TruncationGuards) {
    auto p = fig();
    auto d = calibrate_drive(p, 3.0, Topology::WithFilter);
    auto drive = DriveConfig::readout(d.omega_d, d.eps);
    EXPECT_THROW(build_generator(p, drive, {6, 3}), ValidationError);
    EXPECT_NO_THROW(build_generator(p, drive, FockTruncation::for_photons(3.0, d.n_f_classical)));
    EXPECT_THROW(build_generator(p, DriveConfig::none(p.omega_r_bare), {64, 64}), ValidationError);
    EXPECT_THROW(build_generator(p, DriveConfig::none(p.omega_r_bare), {1, 2}), ValidationError);
    EXPECT_THROW(build_generator(p, DriveConfig::filter(p.omega_r_bare, 0.01), {6, 6}, Topology::NoFilter),
                 ValidationError);
    auto ramp = DriveConfig::readout(d.omega_d, d.eps, params::Envelope::function([](double) { return 1.0; }));
    EXPECT_THROW(build_generator(p, ramp, {16, 4}), ValidationError);
}

TEST(Lindblad, ZeroDriveMatchesSingleExcitationAmplitudes) {
    auto p = fig();
    auto gen = build_generator(p, DriveConfig::none(p.omega_r_bare), {2, 2});
    auto grid = linspace(0.0, 300.0, 601);
    LindbladOptions lo;
    lo.ode = {1e-10, 1e-13};
    auto tr = lindblad_evolve(gen, excited_vacuum(gen), grid, lo);
    auto sx = singlex::evolve_single_excitation(p, {}, grid);
    double worst = 0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        worst = std::max(worst, std::abs(tr.rho_ee[i] - std::norm(sx.states[i].c_e)));
    EXPECT_LT(worst, 1e-6);
    EXPECT_LT(tr.max_trace_drift, 1e-8);
    EXPECT_LT(tr.max_hermiticity, 1e-10);
}

TEST(Lindblad, ClosedJaynesCummings) {
    auto p = fig();
    p.kappa_f = 0.0;
    p.kappa_r_int = 0.0;
    p.G = 0.0;
    // single-excitation Rabi oscillation between |e,0> and |g,1>
    auto gen = build_generator(p, DriveConfig::none(p.omega_r_bare), {3, 2});
    EXPECT_TRUE(gen.collapse.empty());
    auto grid = linspace(0.0, 50.0, 201);
    LindbladOptions lo;
    lo.ode = {1e-10, 1e-13};
    lo.keep_states = true;
    auto tr = lindblad_evolve(gen, excited_vacuum(gen), grid, lo);
    const double d = p.omega_r_bare - p.omega_q_bare;
    const double W = std::sqrt(d * d + 4 * p.g * p.g);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double s = std::sin(0.5 * W * grid[i]);
        EXPECT_NEAR(tr.rho_ee[i], 1.0 - 4 * p.g * p.g / (W * W) * s * s, 1e-7);
        EXPECT_NEAR(tr.trace[i], 1.0, 1e-12);
    }
    TruncatedDensityMatrix last{gen.topology, gen.trunc, tr.states.back(), grid.back()};
    EXPECT_GT(last.min_eigenvalue(), -1e-8);
}

TEST(Lindblad, RejectsInvalidInitialState) {
    auto p = fig();
    auto gen = build_generator(p, DriveConfig::none(p.omega_r_bare), {2, 2});
    auto s = excited_vacuum(gen);
    s.rho *= 2.0;
    EXPECT_THROW(lindblad_evolve(gen, s, {0.0, 1.0}), ValidationError);
    s = excited_vacuum(gen);
    s.rho(0, 1) = 0.1;
    EXPECT_THROW(lindblad_evolve(gen, s, {0.0, 1.0}), ValidationError);
    EXPECT_THROW(fock_state(gen, 1, 2, 0), ValidationError);
}

TEST(Photons, FockStates) {
    auto p = fig();
    auto gen = build_generator(p, DriveConfig::none(p.omega_r_bare), {5, 3});
    auto vac = mean_photons(gen, fock_state(gen, 0, 0, 0).rho);
    EXPECT_EQ(vac.n_r, 0.0);
    EXPECT_EQ(vac.n_f, 0.0);
    auto s = fock_state(gen, 1, 3, 1);
    auto n = mean_photons(gen, s.rho);
    EXPECT_EQ(n.n_r, 3.0);
    EXPECT_EQ(n.n_f, 1.0);
    EXPECT_EQ(excited_population(gen, s.rho), 1.0);
}

// qubit parked in |g>: the resonators settle to the classical fields of the g-shifted readout
TEST(Photons, WeakDriveGroundStateMatchesClassicalSteadyState) {
    auto p = fig();
    const double w_g = p.omega_r_bare - two_level_chi(p, 0.0);
    auto drive = DriveConfig::readout(w_g, 0.004);
    auto cl = semiclassical::steady_state_fields_at(p, drive, w_g);
    ASSERT_LT(std::norm(cl.alpha), 0.1);
    auto gen = build_generator(p, drive, FockTruncation::for_photons(std::norm(cl.alpha), std::norm(cl.beta)));
    auto tr = lindblad_evolve(gen, fock_state(gen, 0, 0, 0), linspace(0.0, 1500.0, 11));
    EXPECT_LT(rel(tr.n_r.back(), std::norm(cl.alpha)), 0.05);
    EXPECT_LT(rel(tr.n_f.back(), std::norm(cl.beta)), 0.05);
}

TEST(Photons, CalibratedDriveReachesTargetWithQubitExcited) {
    auto p = fig();
    auto d = calibrate_drive(p, 0.5, Topology::WithFilter);
    EXPECT_NEAR(d.n_r_classical, 0.5, 0.5 * 0.005);
    auto gen = build_generator(p, DriveConfig::readout(d.omega_d, d.eps),
                               FockTruncation::for_photons(0.5, d.n_f_classical));
    auto tr = lindblad_evolve(gen, excited_vacuum(gen), linspace(0.0, 400.0, 21));
    EXPECT_LT(rel(tr.n_r.back(), 0.5), 0.05);
    EXPECT_LT(rel(tr.n_f.back(), d.n_f_classical), 0.05);
    EXPECT_GT(tr.rho_ee.back(), 0.9);  // dressing leaves ~(n+1) g^2/Delta^2 outside bare |e>
}

TEST(RateFit, ExactExponential) {
    std::vector<double> t, y;
    for (int i = 0; i <= 1000; ++i) {
        t.push_back(i);
        y.push_back(std::exp(-1e-4 * i));
    }
    auto f = extract_rate(t, y, {});
    EXPECT_NEAR(f.gamma, 1e-4, 1e-8);
    EXPECT_FALSE(f.residual_flag);
    EXPECT_FALSE(f.non_monotone_flag);
    EXPECT_LE(f.slope_lo, f.gamma);
    EXPECT_GE(f.slope_hi, f.gamma);
    EXPECT_GT(f.t_end, f.t_start);
}

TEST(RateFit, BiexponentialWithSmallFastComponent) {
    std::vector<double> t, y;
    for (int i = 0; i <= 900; ++i) {
        t.push_back(i);
        y.push_back(0.99 * std::exp(-1e-4 * i) + 0.01 * std::exp(-0.1 * i));
    }
    RateFitOptions o;
    o.t_start = o.min_start = 100.0;
    auto f = extract_rate(t, y, o);
    EXPECT_LT(rel(f.gamma, 1e-4), 0.03);
    EXPECT_FALSE(f.residual_flag);
}

TEST(RateFit, WindowErrorsAndFlags) {
    std::vector<double> t, y;
    for (int i = 0; i <= 2000; ++i) {
        t.push_back(i);
        y.push_back(std::exp(-1e-4 * i));
    }
    EXPECT_THROW(extract_rate(t, y, {}), ValidationError);  // falls below 0.9
    RateFitOptions o;
    o.t_end = 500;
    o.min_start = 10;
    EXPECT_THROW(extract_rate(t, y, o), ValidationError);  // starts inside the transient
    o.t_start = 10;
    y[200] += 1e-3;
    auto f = extract_rate(t, y, o);
    EXPECT_TRUE(f.non_monotone_flag);
    o.residual_bound = 1e-6;
    EXPECT_TRUE(extract_rate(t, y, o).residual_flag);
    o.t_start = 499.5;
    EXPECT_THROW(extract_rate(t, y, o), ValidationError);
}

TEST(RateFit, ZeroDriveLindbladMatchesCubic) {
    auto p = fig();
    SweepOptions o;
    o.convergence_check = false;
    auto [fit, traj] = detail::run_point(p, {p.omega_r_bare, 0.0, 0.0, 0.0}, {2, 2}, o,
                                         default_fit_start(p, Topology::WithFilter));
    EXPECT_LT(rel(fit.gamma, baseline_rate(p, Topology::WithFilter)), 0.01);
    EXPECT_FALSE(fit.residual_flag);
    EXPECT_LT(traj.max_trace_drift, 1e-8);
    EXPECT_LT(traj.max_hermiticity, 1e-10);
    EXPECT_NEAR(default_fit_start(p, Topology::WithFilter), 360.0, 1e-9);
}

TEST(RateFit, ZeroDriveWithoutFilterMatchesQuadratic) {
    auto p = fig();
    SweepOptions o;
    o.topology = Topology::NoFilter;
    o.fit_window = 300;
    o.floor = 0.7;
    auto [fit, traj] = detail::run_point(p, {p.omega_r_bare, 0.0, 0.0, 0.0}, {2, 1}, o,
                                         default_fit_start(p, Topology::NoFilter));
    const double g0 = baseline_rate(p, Topology::NoFilter);
    EXPECT_LT(rel(fit.gamma, g0), 0.01);
    // weak coupling: kappa g^2 / Delta^2
    const double d = p.omega_r_bare - p.omega_q_bare;
    EXPECT_LT(rel(g0, bypass_kappa(p) * p.g * p.g / (d * d)), 0.05);
}

TEST(StarkModel, LimitsAndIdentities) {
    auto p = fig();
    const double nc = n_crit_two_level(p);
    EXPECT_NEAR(nc, 16.0, 1e-12);
    for (auto v : {StarkVariant::FilterQuartic, StarkVariant::FilterQuarticLinear, StarkVariant::NoFilterStark,
                   StarkVariant::NoFilterExact2L})
        EXPECT_DOUBLE_EQ(stark_model(0.0, v, p), 1.0);
    // exact two-level Stark shift: (omega_r - omega_q,eff)^2 = Delta^2 (1 + n/n_crit)
    const double d = p.omega_r_bare - p.omega_q_bare;
    for (double n : {0.5, 1.0, 3.0, 12.8}) {
        const double shifted = d * std::sqrt(1 + n / nc);
        EXPECT_NEAR(stark_model(n, StarkVariant::FilterQuartic, p), std::pow(d / shifted, 4), 1e-14);
        EXPECT_NEAR(stark_model(n, StarkVariant::NoFilterStark, p), 1 / (1 + n / nc), 1e-14);
    }
    // initial slopes: quartic forms -2/n_crit, Stark -1/n_crit, bracketed form -3/2 n_crit
    const double h = 1e-6 * nc;
    auto slope = [&](StarkVariant v) { return (stark_model(h, v, p) - 1.0) / h * nc; };
    EXPECT_NEAR(slope(StarkVariant::FilterQuartic), -2.0, 1e-5);
    EXPECT_NEAR(slope(StarkVariant::FilterQuarticLinear), -2.0, 1e-5);
    EXPECT_NEAR(slope(StarkVariant::NoFilterStark), -1.0, 1e-5);
    EXPECT_NEAR(slope(StarkVariant::NoFilterExact2L), -1.5, 1e-5);
    p.omega_q_bare = p.omega_r_bare;
    EXPECT_THROW(stark_model(1.0, StarkVariant::FilterQuartic, p), ValidationError);
}

TEST(Drive, TwoLevelChi) {
    auto p = fig();
    const double d = p.omega_r_bare - p.omega_q_bare;
    EXPECT_NEAR(two_level_chi(p, 0.0), -p.g * p.g / d, 1e-15);
    EXPECT_NEAR(std::abs(d / two_level_chi(p, 0.0)), 4 * n_crit_two_level(p), 1e-9);
    auto s = calibrate_drive(p, 2.0, Topology::NoFilter);
    EXPECT_NEAR(s.omega_d, p.omega_r_bare + two_level_chi(p, 2.0), 1e-12);
    EXPECT_NEAR(s.n_r_classical, 2.0, 0.01);
    auto z = calibrate_drive(p, 0.0, Topology::WithFilter);
    EXPECT_EQ(z.eps, 0.0);
}

TEST(Sweep, NoFilterRowsAreOrderedConvergedAndDeterministic) {
    auto p = fig();
    SweepOptions o;
    o.topology = Topology::NoFilter;
    o.n_bar_list = {0.25, 0.5};
    o.fit_window = 300;
    o.floor = 0.7;
    auto a = purcell_vs_photons(p, o);
    ASSERT_EQ(a.rows.size(), 2u);
    EXPECT_LT(a.rows[0].ratio, 1.0);
    EXPECT_LT(a.rows[1].ratio, a.rows[0].ratio);
    EXPECT_TRUE(a.monotone);
    for (const auto& r : a.rows) {
        EXPECT_TRUE(r.converged) << r.truncation_change;
        EXPECT_EQ(r.trunc.n_max_filter, 1);
    }
    EXPECT_LT(a.slope, 0.0);
    o.jobs = 2;
    auto b = purcell_vs_photons(p, o);
    for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].gamma, b.rows[i].gamma);
    o.n_bar_list = {-1.0};
    EXPECT_THROW(purcell_vs_photons(p, o), ValidationError);
}
