#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "purcellkit/cli.hpp"

namespace fs = std::filesystem;
using purcellkit::cli::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("pk_cli_") + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    int run(std::vector<std::string> args, std::string* err_text = nullptr) {
        std::ostringstream out, err;
        int rc = purcellkit::cli::run(args, out, err);
        if (err_text) *err_text = err.str();
        return rc;
    }
    std::string out(const std::string& sub = "") const { return (dir / sub).string(); }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    static json load(const fs::path& p) { return json::parse(slurp(p)); }
    static std::vector<std::string> lines(const fs::path& p) {
        std::vector<std::string> v;
        std::ifstream in(p);
        for (std::string l; std::getline(in, l);) v.push_back(l);
        return v;
    }
    static std::vector<std::string> split(const std::string& s) {
        std::vector<std::string> v;
        std::stringstream ss(s);
        for (std::string c; std::getline(ss, c, ',');) v.push_back(c);
        if (!s.empty() && s.back() == ',') v.push_back("");
        return v;
    }
};

}  // namespace

TEST_F(CliTest, RatesReportsFilterFactor) {
    ASSERT_EQ(run({"rates", "--out", out()}), 0);
    auto j = load(dir / "rates.json");
    for (auto k : {"gamma_exact", "gamma_quadratic", "gamma_iter2", "gamma_qs_full", "gamma_qs_simple", "gamma_dm",
                   "kappa_q", "kappa_r", "F"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_NEAR(j["F"].get<double>(), 0.021, 0.001);
    EXPECT_NEAR(j["kappa_r_inv_ns"].get<double>(), 30.0, 0.5);
    EXPECT_TRUE(fs::exists(dir / "rates.manifest.json"));
}

TEST_F(CliTest, ManifestDigestsMatchFiles) {
    ASSERT_EQ(run({"transient", "--out", out()}), 0);
    auto m = load(dir / "transient.manifest.json");
    EXPECT_EQ(m["command"], "transient");
    ASSERT_EQ(m["outputs"].size(), 3u);
    for (const auto& o : m["outputs"]) {
        const auto body = slurp(dir / o["path"].get<std::string>());
        EXPECT_EQ(o["sha256"].get<std::string>(), purcellkit::cli::detail::sha256_hex(body));
        EXPECT_EQ(o["bytes"].get<std::size_t>(), body.size());
    }
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
    EXPECT_TRUE(m["params"].contains("omega_q_ghz"));
}

TEST_F(CliTest, Sha256KnownVector) {
    EXPECT_EQ(purcellkit::cli::detail::sha256_hex("abc"),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_F(CliTest, TransientColumnsAndFilterPortSteadyState) {
    ASSERT_EQ(run({"transient", "--port", "filter", "--out", out()}), 0);
    auto l = lines(dir / "transient_e.csv");
    EXPECT_EQ(l.front(), "t_ns,re_alpha,im_alpha,re_beta,im_beta,n_r,n_f,re_gamma,im_gamma");
    EXPECT_EQ(l.size(), 602u);
    EXPECT_EQ(split(l.back()).size(), 9u);
    auto j = load(dir / "transient.json");
    EXPECT_NEAR(j["steady_e"]["n_f"].get<double>(), 1.0, 0.1);
    EXPECT_NEAR(j["steady_g"]["n_f"].get<double>(), 0.01, 0.002);
    EXPECT_NEAR(j["steady_e"]["n_r"].get<double>(), 50.0, 1e-6);
    EXPECT_NEAR(j["steady_g"]["n_r"].get<double>(), 50.0, 1e-6);
}

TEST_F(CliTest, SweepShowsHundredfoldSuppression) {
    ASSERT_EQ(run({"sweep", "--axis", "omega_q_ghz", "--values", "5.5,5.9,6.5", "--out", out()}), 0);
    auto l = lines(dir / "sweep.csv");
    ASSERT_EQ(l.size(), 4u);
    auto head = split(l[0]);
    auto col = std::find(head.begin(), head.end(), "F") - head.begin();
    ASSERT_LT(col, static_cast<long>(head.size()));
    const double F55 = std::stod(split(l[1])[col]);
    const double F59 = std::stod(split(l[2])[col]);
    EXPECT_NEAR(1.0 / F55, 100.0, 10.0);
    EXPECT_LT(F55, F59);
}

TEST_F(CliTest, SweepIsByteIdenticalAcrossRunsAndJobCounts) {
    ASSERT_EQ(run({"sweep", "--axis", "g_mhz", "--values", "60,90,120", "--out", out("a")}), 0);
    ASSERT_EQ(run({"sweep", "--axis", "g_mhz", "--values", "60,90,120", "--out", out("b")}), 0);
    ASSERT_EQ(run({"sweep", "--axis", "g_mhz", "--values", "60,90,120", "--jobs", "3", "--out", out("c")}), 0);
    const auto a = slurp(dir / "a" / "sweep.csv");
    EXPECT_EQ(a, slurp(dir / "b" / "sweep.csv"));
    EXPECT_EQ(a, slurp(dir / "c" / "sweep.csv"));
}

TEST_F(CliTest, EmptySweepWritesHeaderOnly) {
    ASSERT_EQ(run({"sweep", "--axis", "omega_q_ghz", "--values", "", "--out", out()}), 0);
    EXPECT_EQ(lines(dir / "sweep.csv").size(), 1u);
}

TEST_F(CliTest, SweepPartialFailureIsAnnotated) {
    // a negative coupling is rejected for that row only
    ASSERT_EQ(run({"sweep", "--axis", "g_mhz", "--values", "90,-1", "--out", out()}), 0);
    auto l = lines(dir / "sweep.csv");
    ASSERT_EQ(l.size(), 3u);
    EXPECT_EQ(l[1].back(), ',');
    EXPECT_NE(l[2].find("nan"), std::string::npos);
    EXPECT_EQ(run({"sweep", "--axis", "g_mhz", "--values", "-1,-2", "--out", out()}), 2);
}

TEST_F(CliTest, SweepAxisMustExist) {
    EXPECT_EQ(run({"sweep", "--axis", "no_such_key", "--values", "1", "--out", out()}), 2);
}

TEST_F(CliTest, MissingConfigIsValidationError) {
    std::string err;
    EXPECT_EQ(run({"rates", "--config", out("missing.toml"), "--out", out()}, &err), 2);
    EXPECT_NE(err.find("error"), std::string::npos);
}

TEST_F(CliTest, ConflictingFlagsAreRejected) {
    EXPECT_EQ(run({"rates", "--config", "x.toml", "--preset", "purcell-filter", "--out", out()}), 2);
    EXPECT_EQ(run({"rates", "--units", "furlongs", "--out", out()}), 2);
    EXPECT_EQ(run({"rates", "--jobs", "0", "--out", out()}), 2);
    EXPECT_EQ(run({}), 2);
    EXPECT_EQ(run({"bogus"}), 2);
}

TEST_F(CliTest, BadValuesAreValidationErrors) {
    EXPECT_EQ(run({"rates", "--set", "g_mhz=-5", "--out", out()}), 2);
    EXPECT_EQ(run({"rates", "--set", "nonsense", "--out", out()}), 2);
    EXPECT_EQ(run({"rates", "--preset", "nope", "--out", out()}), 2);
}

TEST_F(CliTest, ConfigFileAndSetOverride) {
    {
        std::ofstream f(dir / "dev.toml");
        f << *purcellkit::config::preset_text("purcell-filter");
    }
    ASSERT_EQ(run({"rates", "--config", (dir / "dev.toml").string(), "--out", out("a")}), 0);
    ASSERT_EQ(run({"rates", "--out", out("b")}), 0);
    EXPECT_EQ(slurp(dir / "a" / "rates.json"), slurp(dir / "b" / "rates.json"));
    // a value in a different unit replaces the preset key for the same quantity
    ASSERT_EQ(run({"rates", "--set", "omega_q_mhz=5500", "--out", out("c")}), 0);
    EXPECT_NEAR(load(dir / "c" / "rates.json")["F"].get<double>(), 0.0096, 0.0005);
}

TEST_F(CliTest, RadNsUnitsEcho) {
    ASSERT_EQ(run({"rates", "--units", "rad_ns", "--out", out()}), 0);
    auto m = load(dir / "rates.manifest.json");
    EXPECT_EQ(m["units"], "rad_ns");
    EXPECT_NEAR(m["params"]["omega_q_rad_ns"].get<double>(), 2 * M_PI * 5.9, 1e-9);
    EXPECT_TRUE(load(dir / "rates.json").contains("delta_omega_r_rad_ns"));
}

TEST_F(CliTest, ErrorBudgetKeys) {
    ASSERT_EQ(run({"error-budget", "--out", out()}), 0);
    auto j = load(dir / "error_budget.json");
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"t_m_ns", "n_bar", "delta_alpha", "delta_alpha_eff", "p_sep",
                                              "p_purcell", "p_intrinsic", "p_total", "t_m_bound_ns",
                                              "detuning_bound"}));
    EXPECT_NEAR(j["delta_alpha"].get<double>(), 2.79, 0.01);
}

TEST_F(CliTest, DispersiveAndSpectrumTables) {
    ASSERT_EQ(run({"dispersive", "--set", "n_max=10", "--out", out()}), 0);
    EXPECT_EQ(lines(dir / "dispersive.csv").size(), 12u);
    ASSERT_EQ(run({"spectrum", "--set", "points=11", "--out", out()}), 0);
    auto l = lines(dir / "spectrum.csv");
    EXPECT_EQ(l.size(), 12u);
    EXPECT_EQ(split(l[0]).size(), 9u);
}

TEST_F(CliTest, DrivenSweepSmallRun) {
    ASSERT_EQ(run({"driven-sweep", "--set", "n_bar_list=[0.25]", "--set", "fit_window_ns=300", "--out", out()}), 0);
    auto l = lines(dir / "driven_sweep.csv");
    EXPECT_EQ(l[0], "n_bar,n_bar_over_4ncrit,gamma_per_ns,ratio,ratio_model_quartic,fit_residual,n_max_r,n_max_f");
    EXPECT_EQ(l.size(), 2u);
    EXPECT_TRUE(fs::exists(dir / "stark_models.csv"));
}

TEST_F(CliTest, BinaryExitCodes) {
    const std::string bin = PK_CLI_BINARY;
    auto code = [&](const std::string& args) {
        int s = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(code("rates --out " + out()), 0);
    EXPECT_EQ(code("rates --config /nonexistent/x.toml --out " + out()), 2);
    EXPECT_EQ(code("--help"), 0);
}
