#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "purcellkit/config.hpp"
#include "purcellkit/semiclassical.hpp"

using namespace purcellkit;

namespace {

const char* kDoc = R"(
# test device
omega_q_ghz = 5.9
omega_r_ghz = 6.8
omega_f_ghz = 6.75
q_factor_f = 30
g_mhz = 90
G_mhz = 18.9
delta_q_mhz = 200
)";

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(Document, ParsesScalarsStringsAndArrays) {
    auto d = config::Document::parse("a = 1.5  # comment\nb = \"x # y\"\nc = [1, 2.5, -3e2]\nd = 1_000\n");
    EXPECT_DOUBLE_EQ(d.number("a"), 1.5);
    EXPECT_EQ(d.string("b"), "x # y");
    EXPECT_EQ(d.list("c"), (std::vector<double>{1, 2.5, -300}));
    EXPECT_DOUBLE_EQ(d.number("d"), 1000);
    EXPECT_EQ(d.list("a"), std::vector<double>{1.5});
}

TEST(Document, RejectsMalformedInput) {
    EXPECT_THROW(config::Document::parse("a 1"), ValidationError);
    EXPECT_THROW(config::Document::parse("a = 1\na = 2"), ValidationError);
    EXPECT_THROW(config::Document::parse("[table]\na = 1"), ValidationError);
    EXPECT_THROW(config::Document::parse("a = 1x"), ValidationError);
    EXPECT_THROW(config::Document::parse("a = [1, b]"), ValidationError);
}

TEST(LoadDeviceConfig, FilterLinewidthFromQuality) {
    auto p = config::load_device_config(kDoc);
    EXPECT_NEAR(p.kappa_f, units::ghz(6.75) / 30, 1e-15);
    EXPECT_NEAR(units::to_mhz(p.kappa_f), 225.0, 1e-9);
    EXPECT_NEAR(1.0 / p.kappa_f, 0.71, 0.005);
    EXPECT_NEAR(units::to_mhz(std::abs(p.G)), 18.9, 1e-12);
    EXPECT_DOUBLE_EQ(p.eta, 1.0);
    EXPECT_TRUE(std::isinf(p.t1_intrinsic));
}

TEST(LoadDeviceConfig, MissingCouplingIsReported) {
    std::string doc = kDoc;
    doc.replace(doc.find("g_mhz = 90"), 10, "");
    try {
        config::load_device_config(doc);
        FAIL() << "expected a validation error";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("g_mhz"), std::string::npos);
    }
}

TEST(LoadDeviceConfig, RejectsUnknownUnitTagsAndKeys) {
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "kappa_r_int_inv_ps = 3\n"), ValidationError);
    std::string doc = kDoc;
    doc.replace(doc.find("g_mhz"), 5, "g_khz");
    try {
        config::load_device_config(doc);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("unit tag"), std::string::npos);
    }
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "colour = 3\n"), ValidationError);
}

TEST(LoadDeviceConfig, RejectsNegativeRatesAndConflicts) {
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "kappa_r_int_inv_ns = -5\n"), ValidationError);
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "kappa_r_target_ns = 30\n"), ValidationError);
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "kappa_f_inv_ns = 0.7\n"), ValidationError);
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "omega_q_mhz = 5900\n"), ValidationError);
    EXPECT_THROW(config::load_device_config(std::string(kDoc) + "eta = 0\n"), ValidationError);
}

TEST(LoadDeviceConfig, AlternativeUnits) {
    auto p = config::load_device_config(std::string(kDoc) + "t1_int_us = 40\nkappa_r_int_inv_us = 2\n");
    EXPECT_DOUBLE_EQ(p.t1_intrinsic, 40000.0);
    EXPECT_DOUBLE_EQ(p.kappa_r_int, 1.0 / 2000.0);
    std::string doc = kDoc;
    doc.replace(doc.find("g_mhz = 90"), 10, "g_rad_ns = 0.5");
    EXPECT_DOUBLE_EQ(config::load_device_config(doc).g, 0.5);
}

TEST(LoadDeviceConfig, CouplingFromKappaTarget) {
    std::string doc = kDoc;
    doc.replace(doc.find("G_mhz = 18.9"), 12, "kappa_r_target_ns = 30\nkappa_r_probe = \"bare\"");
    auto p = config::load_device_config(doc);
    EXPECT_NEAR(1.0 / semiclassical::effective_resonator(p).kappa_r, 30.0, 1e-9);
    EXPECT_NEAR(units::to_mhz(std::abs(p.G)), 18.9, 0.01);
}

TEST(LoadDeviceConfig, RoundTrip) {
    std::string doc = std::string(kDoc) +
                      "g_ef_mhz = 120\nkappa_r_int_inv_ns = 5000\nt1_int_us = 35\neta = 0.4\n"
                      "G_phase_rad = 0.3\nkappa_f_out_fraction = 0.8\nchi_mhz = -0.7\n";
    auto p = config::load_device_config(doc);
    auto q = config::load_device_config(config::serialize_device_config(p));
    auto same = [](double a, double b) { return a == b || std::abs(a - b) <= 1e-12 * std::abs(b); };
    EXPECT_TRUE(same(q.omega_q_bare, p.omega_q_bare));
    EXPECT_TRUE(same(q.omega_r_bare, p.omega_r_bare));
    EXPECT_TRUE(same(q.omega_f, p.omega_f));
    EXPECT_TRUE(same(q.g, p.g));
    EXPECT_TRUE(same(*q.g_ef, *p.g_ef));
    EXPECT_FALSE(q.g_fh.has_value());
    EXPECT_TRUE(same(q.G.real(), p.G.real()));
    EXPECT_TRUE(same(q.G.imag(), p.G.imag()));
    EXPECT_TRUE(same(q.kappa_f, p.kappa_f));
    EXPECT_TRUE(same(q.kappa_r_int, p.kappa_r_int));
    EXPECT_TRUE(same(q.kappa_f_out_fraction, p.kappa_f_out_fraction));
    EXPECT_TRUE(same(q.delta_q, p.delta_q));
    EXPECT_TRUE(same(q.t1_intrinsic, p.t1_intrinsic));
    EXPECT_TRUE(same(q.eta, p.eta));
    EXPECT_TRUE(same(*q.chi, *p.chi));
    EXPECT_EQ(q.kappa_r_probe, p.kappa_r_probe);
}

TEST(Presets, AllLoad) {
    for (const auto& pr : config::presets) {
        SCOPED_TRACE(pr.name);
        EXPECT_NO_THROW(config::load_preset(pr.name));
    }
    EXPECT_THROW(config::load_preset("nope"), ValidationError);
}

TEST(Presets, ShippedFilesMatchBuiltIns) {
    for (const auto& pr : config::presets) {
        std::string file = std::string(PK_SOURCE_DIR) + "/configs/" + pr.name + ".toml";
        std::ifstream in(file);
        ASSERT_TRUE(in) << file;
        std::stringstream ss;
        ss << in.rdbuf();
        EXPECT_EQ(ss.str(), pr.text) << file;
    }
}

TEST(Presets, FilterQualityGivesQuotedLinewidth) {
    auto p = config::load_preset("purcell-filter");
    EXPECT_NEAR(1.0 / p.kappa_f, 0.71, 0.005);
    EXPECT_LT(rel(units::to_mhz(std::abs(p.G)), 18.9), 0.002);
}
