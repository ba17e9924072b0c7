#include <gtest/gtest.h>

#include <cmath>

#include "purcellkit/params.hpp"

using namespace purcellkit;
using namespace purcellkit::params;

namespace {

DeviceParams base() {
    DeviceParams p;
    p.omega_q_bare = units::ghz(5.9);
    p.omega_r_bare = units::ghz(6.8);
    p.omega_f = units::ghz(6.75);
    p.g = units::mhz(90);
    p.G = units::mhz(18.9);
    p.kappa_f = p.omega_f / 30;
    p.delta_q = units::mhz(180);
    return p;
}

}  // namespace

TEST(Units, ConversionsAreExactFactorsOfTwoPi) {
    for (double f : {0.001, 1.0, 5.9, 6.80273, 123.456}) {
        EXPECT_NEAR(units::to_ghz(units::ghz(f)), f, 1e-12 * f);
        EXPECT_NEAR(units::to_mhz(units::mhz(f)), f, 1e-12 * f);
        EXPECT_DOUBLE_EQ(units::ghz(f), 2 * M_PI * f);
    }
    EXPECT_DOUBLE_EQ(units::ghz(1.0), units::mhz(1000.0));
}

TEST(Derive, SignConventionsAreOpposite) {
    auto d = derive(base());
    EXPECT_EQ(d.delta_rq, -d.delta_qr);
    EXPECT_NEAR(units::to_ghz(d.delta_rq), 0.9, 1e-12);
    EXPECT_NEAR(units::to_ghz(d.delta_fq), 0.85, 1e-12);
    EXPECT_NEAR(d.q_factor_f, 30.0, 1e-12);
}

TEST(Derive, CriticalPhotonNumber) {
    auto p = base();
    p.g = units::mhz(100);
    p.omega_q_bare = units::ghz(6.0);
    EXPECT_NEAR(derive(p).n_crit, 16.0, 1e-12);
}

TEST(Derive, ZeroDetuningDisablesDispersiveFormulas) {
    auto p = base();
    p.omega_q_bare = p.omega_r_bare;
    auto d = derive(p);
    EXPECT_EQ(d.n_crit, 0.0);
    EXPECT_FALSE(d.dispersive_valid);
    EXPECT_FALSE(d.warnings.empty());
}

TEST(Derive, CorrectedHigherLevelCouplings) {
    auto d = derive(base());
    double expect = std::sqrt(2.0) * 90 * (1 - 180.0 / 11800.0);
    EXPECT_NEAR(units::to_mhz(d.g_ef), expect, 1e-9);
    EXPECT_NEAR(units::to_mhz(d.g_ef), 125.3, 0.05);
    EXPECT_NEAR(units::to_mhz(d.g_fh), std::sqrt(3.0) * 90 * (1 - 180.0 / 5900.0), 1e-9);

    auto p = base();
    p.g_ef = units::mhz(100);
    EXPECT_DOUBLE_EQ(derive(p).g_ef, units::mhz(100));
}

TEST(Derive, DressedFrequenciesDifferByTwoChi) {
    auto d = derive(base());
    EXPECT_NEAR(d.omega_r_excited - d.omega_r_ground, 2 * d.chi, 1e-12);

    auto p = base();
    p.chi = units::mhz(-1.5);
    d = derive(p);
    EXPECT_NEAR(d.omega_r_excited - d.omega_r_ground, 2 * *p.chi, 1e-12);
    EXPECT_DOUBLE_EQ(d.chi, *p.chi);

    p = base();
    p.omega_r_excited = units::ghz(6.8);
    p.omega_r_ground = units::ghz(6.803);
    d = derive(p);
    EXPECT_NEAR(units::to_mhz(d.chi), -1.5, 1e-9);
    EXPECT_NEAR(units::to_ghz(d.omega_r_probe), 6.8015, 1e-12);
}

TEST(Derive, RwaWarnings) {
    EXPECT_TRUE(rwa_warnings(base()).empty());
    auto p = base();
    p.omega_q_bare = units::ghz(4.0);
    EXPECT_EQ(rwa_warnings(p).size(), 1u);
    p.g = units::ghz(1.5);
    EXPECT_EQ(rwa_warnings(p).size(), 2u);
}

TEST(Validate, RejectsUnphysicalValues) {
    EXPECT_NO_THROW(validate(base()));
    auto p = base();
    p.g = 0;
    EXPECT_THROW(validate(p), ValidationError);
    p = base();
    p.kappa_r_int = -1e-3;
    EXPECT_THROW(validate(p), ValidationError);
    p = base();
    p.eta = 0;
    EXPECT_THROW(validate(p), ValidationError);
    p = base();
    p.eta = 1.2;
    EXPECT_THROW(validate(p), ValidationError);
    p = base();
    p.delta_q = 0;
    EXPECT_THROW(validate(p), ValidationError);
    p = base();
    p.kappa_f_out_fraction = 1.5;
    EXPECT_THROW(validate(p), ValidationError);
}

TEST(Drive, AmplitudeZeroExactlyWhenPortIsNone) {
    EXPECT_NO_THROW(DriveConfig::readout(1.0, {0.1, 0.0}));
    EXPECT_THROW(DriveConfig::readout(1.0, {0.0, 0.0}), ValidationError);
    EXPECT_THROW(DriveConfig::filter(1.0, {0.0, 0.0}), ValidationError);
    auto none = DriveConfig::none(1.0);
    EXPECT_EQ(none.at(5.0), cplx{});
}

TEST(Drive, Envelopes) {
    auto step = Envelope::step();
    EXPECT_EQ(step(-1e-9), cplx{});
    EXPECT_EQ(step(0.0), cplx(1.0));
    auto table = Envelope::table({0.0, 1.0, 3.0}, {0.0, 2.0, cplx(0, 4)});
    EXPECT_EQ(table(-1.0), cplx{});
    EXPECT_NEAR(std::abs(table(0.5) - cplx(1.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(table(2.0) - cplx(1.0, 2.0)), 0.0, 1e-15);
    EXPECT_EQ(table(9.0), cplx(0, 4));
    EXPECT_THROW(Envelope::table({0.0, 0.0}, {1.0, 1.0}), ValidationError);
    auto f = Envelope::function([](double t) { return cplx(t, -t); });
    EXPECT_EQ(f(2.0), cplx(2.0, -2.0));
}
