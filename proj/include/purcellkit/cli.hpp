#pragma once

// Command-line front end. run() is the whole program short of the process exit, so
// tests can drive it in-process.
//
// Exit codes: 0 success, 2 validation error (bad flags, config or values), 3 numerical failure.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "config.hpp"
#include "dispersive.hpp"
#include "driven.hpp"
#include "errors.hpp"
#include "numerics/parallel.hpp"
#include "params.hpp"
#include "semiclassical.hpp"
#include "singlex.hpp"
#include "units.hpp"

namespace purcellkit::cli {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::ordered_json;

namespace detail {

// shortest round-trip text, independent of the locale
inline std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string num(long v) { return std::to_string(v); }
inline std::string num(int v) { return std::to_string(v); }

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string str() const {
        std::string out;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_quote(cells[i]);
            out += "\n";
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out;
    }
};

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// temp file in the same directory, then rename over the target
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write '" + path.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw ValidationError("cannot move output into place at '" + path.string() + "'");
    }
}

inline std::vector<double> parse_list(const std::string& text) {
    std::string t = text;
    for (char& c : t)
        if (c == '[' || c == ']') c = ' ';
    std::vector<double> xs;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto trimmed = config::detail::trim(item);
        if (trimmed.empty()) continue;
        auto v = config::detail::parse_number(trimmed);
        if (!v) throw ValidationError("cannot parse '" + std::string(trimmed) + "' as a number");
        xs.push_back(*v);
    }
    return xs;
}

inline json value_to_json(const config::Value& v) {
    if (auto* d = std::get_if<double>(&v)) return *d;
    if (auto* s = std::get_if<std::string>(&v)) return *s;
    return std::get<std::vector<double>>(v);
}

}  // namespace detail

struct Options {
    std::string command;
    std::string config_path;
    std::string preset;
    std::vector<std::string> sets;
    std::string out_dir = ".";
    std::string units = "ghz";
    int jobs = 1;
    std::string port;
    std::string axis;
    std::string values;
    std::string of = "rates";
};

inline const char* default_preset(const std::string& command) {
    if (command == "transient") return "transient-sym-readout";
    if (command == "driven-sweep") return "driven-two-level";
    if (command == "dispersive" || command == "error-budget") return "dispersive-budget";
    return "purcell-filter";
}

// Keys that give the same quantity; a --set of one removes the others.
inline std::vector<std::string> same_quantity_keys(const config::Document& doc, const std::string& key) {
    std::vector<std::string> out;
    std::string stem;
    if (auto r = config::resolve_device_key(key, 0.0)) stem = r->stem;
    auto stem_of = [](const std::string& k) -> std::string {
        try {
            if (auto r = config::resolve_device_key(k, 0.0)) return r->stem;
        } catch (const ValidationError&) {
        }
        return k;
    };
    static const std::vector<std::vector<std::string>> partners{{"G", "kappa_r_target"}, {"q_factor_f", "kappa_f_inv"}};
    for (const auto& [k, v] : doc.values()) {
        if (k == key) continue;
        const std::string s = stem_of(k);
        bool clash = !stem.empty() && s == stem;
        for (const auto& grp : partners) {
            const std::string mine = stem.empty() ? key : stem;
            bool a = std::find(grp.begin(), grp.end(), mine) != grp.end();
            bool b = std::find(grp.begin(), grp.end(), s) != grp.end();
            clash = clash || (a && b);
        }
        if (clash) out.push_back(k);
    }
    return out;
}

class Context {
public:
    Options opt;
    config::Document doc;
    params::DeviceParams p;
    json options_echo = json::object();
    std::vector<std::string> warnings;

    explicit Context(Options o) : opt(std::move(o)) {
        if (!opt.config_path.empty() && !opt.preset.empty())
            throw ValidationError("--config and --preset are mutually exclusive");
        if (!opt.config_path.empty()) {
            doc = config::Document::load_file(opt.config_path);
        } else {
            const std::string name = opt.preset.empty() ? default_preset(opt.command) : opt.preset;
            auto text = config::preset_text(name);
            if (!text) throw ValidationError("unknown preset '" + name + "'");
            doc = config::Document::parse(*text);
        }
        for (const auto& s : opt.sets) {
            auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
            const std::string key(config::detail::trim(std::string_view(s).substr(0, eq)));
            for (const auto& k : same_quantity_keys(doc, key)) doc.erase(k);
            doc.set_from_text(key, std::string_view(s).substr(eq + 1));
        }
        p = config::device_from_document(doc);
        auto d = params::derive(p);
        warnings = d.warnings;
        start_ = std::chrono::steady_clock::now();
    }

    bool rad() const { return opt.units == "rad_ns"; }
    // frequency key and value in the selected unit system; big -> GHz, else MHz
    std::string fkey(const std::string& stem, bool big) const {
        return stem + (rad() ? "_rad_ns" : big ? "_ghz" : "_mhz");
    }
    double fval(double omega, bool big) const {
        return rad() ? omega : big ? units::to_ghz(omega) : units::to_mhz(omega);
    }

    double number(const std::string& key, double fallback) {
        double v = doc.number_opt(key).value_or(fallback);
        options_echo[key] = v;
        return v;
    }
    std::vector<double> list(const std::string& key, std::vector<double> fallback) {
        auto v = doc.has(key) ? doc.list(key) : fallback;
        options_echo[key] = v;
        return v;
    }
    std::string text(const std::string& key, const std::string& fallback) {
        auto v = doc.string_opt(key).value_or(fallback);
        options_echo[key] = v;
        return v;
    }

    void emit(const std::string& name, const std::string& content) {
        for (const auto& o : outputs_)
            if (o.name == name) throw ValidationError("output '" + name + "' emitted twice");
        detail::atomic_write(std::filesystem::path(opt.out_dir) / name, content);
        outputs_.push_back({name, detail::sha256_hex(content), content.size()});
    }
    void emit_json(const std::string& name, const json& j) { emit(name, j.dump(2) + "\n"); }
    void emit_csv(const std::string& name, const detail::Csv& c) { emit(name, c.str()); }

    void write_manifest() {
        json m;
        m["command"] = opt.command;
        m["toolkit_version"] = kVersion;
        m["units"] = opt.units;
        json params = json::object();
        const auto echo = config::device_to_document(p, rad());
        for (const auto& [k, v] : echo.values()) params[k] = detail::value_to_json(v);
        m["params"] = params;
        json o = options_echo;
        if (!opt.config_path.empty()) o["config"] = opt.config_path;
        if (!opt.preset.empty()) o["preset"] = opt.preset;
        if (!opt.sets.empty()) o["set"] = opt.sets;
        o["jobs"] = opt.jobs;
        m["options"] = o;
        json outs = json::array();
        for (const auto& f : outputs_) outs.push_back({{"path", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
        m["outputs"] = outs;
        m["warnings"] = warnings;
        m["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        detail::atomic_write(std::filesystem::path(opt.out_dir) / (opt.command + ".manifest.json"), m.dump(2) + "\n");
    }

private:
    struct Output {
        std::string name, sha256;
        std::size_t bytes;
    };
    std::vector<Output> outputs_;
    std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Subcommands. Each returns the exit code; outputs go through ctx.emit.

inline json rates_report(const Context& ctx, const params::DeviceParams& p) {
    auto s = singlex::solve(p);
    auto er = semiclassical::effective_resonator(p);
    json j;
    j["gamma_exact"] = s.gamma_exact;
    j["gamma_quadratic"] = s.gamma_quadratic;
    j["gamma_iter2"] = s.gamma_iterative;
    j["gamma_qs_full"] = s.gamma_quasisteady_full;
    j["gamma_qs_simple"] = s.gamma_quasisteady_simple;
    j["gamma_dm"] = s.gamma_density_matrix;
    j["kappa_q"] = er.kappa_q;
    j["kappa_r"] = er.kappa_r;
    j["F"] = er.F;
    j["t1_exact_us"] = units::to_us(1.0 / s.gamma_exact);
    j["kappa_q_inv_us"] = units::to_us(1.0 / er.kappa_q);
    j["kappa_r_inv_ns"] = 1.0 / er.kappa_r;
    j[ctx.fkey("delta_omega_r", false)] = ctx.fval(er.delta_omega_r, false);
    j["branch_ambiguous"] = s.ambiguous;
    j["simple_form_valid"] = s.simple_form_valid;
    return j;
}

inline int cmd_rates(Context& ctx) {
    ctx.emit_json("rates.json", rates_report(ctx, ctx.p));
    return 0;
}

inline int cmd_transient(Context& ctx) {
    using semiclassical::QubitStateLabel;
    const auto& p = ctx.p;
    const std::string rule = ctx.text("drive_rule", "symmetric-readout");
    const double n_target = ctx.number("n_r_target", 50.0);
    const double t_end = ctx.number("t_end_ns", 600.0);
    const double dt = ctx.number("dt_ns", 1.0);
    std::string port = ctx.opt.port.empty() ? ctx.text("port", "readout") : ctx.opt.port;
    ctx.options_echo["port"] = port;
    if (port != "readout" && port != "filter") throw ValidationError("port must be readout or filter");
    if (!(t_end > 0) || !(dt > 0)) throw ValidationError("t_end_ns and dt_ns must be positive");
    if (t_end / dt > 1e7) throw ValidationError("time grid too fine");

    semiclassical::ScenarioDrive sd;
    if (rule == "symmetric-readout") {
        sd = semiclassical::symmetric_scenario(p, semiclassical::SymmetryCriterion::SymmetricReadoutPhotons, n_target);
    } else if (rule == "symmetric-filter") {
        sd = semiclassical::symmetric_scenario(p, semiclassical::SymmetryCriterion::SymmetricFilterPhotons, n_target);
    } else if (rule == "fixed") {
        if (!ctx.doc.has("omega_d_ghz")) throw ValidationError("drive_rule = fixed needs omega_d_ghz");
        sd = semiclassical::drive_for_photons(p, units::ghz(ctx.number("omega_d_ghz", 0.0)), QubitStateLabel::Excited,
                                              n_target);
    } else {
        throw ValidationError("drive_rule must be symmetric-readout, symmetric-filter or fixed");
    }
    const bool filter = port == "filter";
    const auto drive = filter ? params::DriveConfig::filter(sd.omega_d, sd.eps_f)
                              : params::DriveConfig::readout(sd.omega_d, sd.eps_r);

    std::vector<double> grid;
    const auto steps = static_cast<long>(std::llround(t_end / dt));
    for (long i = 0; i <= steps; ++i) grid.push_back(std::min(t_end, i * dt));
    if (grid.back() < t_end) grid.push_back(t_end);

    json summary;
    summary["drive_rule"] = rule;
    summary["port"] = port;
    summary[ctx.fkey("omega_d", true)] = ctx.fval(sd.omega_d, true);
    const params::cplx eps = filter ? sd.eps_f : sd.eps_r;
    summary[ctx.fkey("eps_re", false)] = ctx.fval(eps.real(), false);
    summary[ctx.fkey("eps_im", false)] = ctx.fval(eps.imag(), false);
    summary[ctx.fkey("delta_omega_r", false)] = ctx.fval(semiclassical::effective_resonator(p).delta_omega_r, false);
    params::cplx a_ss[2];
    for (auto s : {QubitStateLabel::Ground, QubitStateLabel::Excited}) {
        auto tr = semiclassical::integrate_fields(p, drive, s, grid);
        auto ss = semiclassical::steady_state_fields(p, drive, s);
        a_ss[s == QubitStateLabel::Excited] = ss.alpha;
        detail::Csv c;
        c.header = {"t_ns", "re_alpha", "im_alpha", "re_beta", "im_beta", "n_r", "n_f", "re_gamma", "im_gamma"};
        for (std::size_t i = 0; i < grid.size(); ++i)
            c.rows.push_back({detail::num(tr.times[i]), detail::num(tr.alpha[i].real()),
                              detail::num(tr.alpha[i].imag()), detail::num(tr.beta[i].real()),
                              detail::num(tr.beta[i].imag()), detail::num(tr.n_r[i]), detail::num(tr.n_f[i]),
                              detail::num(tr.gamma_tl[i].real()), detail::num(tr.gamma_tl[i].imag())});
        const std::string lab = semiclassical::label_name(s);
        ctx.emit_csv("transient_" + lab + ".csv", c);
        summary["steady_" + lab] = {{"n_r", std::norm(ss.alpha)},
                                    {"n_f", std::norm(ss.beta)},
                                    {"outgoing_power_per_ns", std::norm(ss.gamma_tl)}};
        summary["final_" + lab] = {{"n_r", tr.n_r.back()}, {"n_f", tr.n_f.back()}};
    }
    summary["separation"] = std::abs(a_ss[1] - a_ss[0]);
    auto cmp = semiclassical::compare_symmetric_scenarios(p, n_target);
    summary["separation_ratio_readout_vs_filter_symmetric"] = cmp.separation_ratio;
    summary["power_factor_readout_vs_filter_symmetric"] = cmp.power_factor;
    ctx.emit_json("transient.json", summary);
    return 0;
}

inline int cmd_spectrum(Context& ctx) {
    using semiclassical::QubitStateLabel;
    const auto& p = ctx.p;
    const double centre = params::derive(p).omega_r_probe;
    const double span = units::mhz(ctx.number("span_mhz", 20.0));
    const double lo = ctx.doc.has("omega_d_min_ghz") ? units::ghz(ctx.number("omega_d_min_ghz", 0)) : centre - span;
    const double hi = ctx.doc.has("omega_d_max_ghz") ? units::ghz(ctx.number("omega_d_max_ghz", 0)) : centre + span;
    const double pts = ctx.number("points", 401);
    if (!(hi > lo)) throw ValidationError("spectrum range is empty");
    if (!(pts >= 2) || pts != std::floor(pts) || pts > 1e6) throw ValidationError("points must be an integer >= 2");
    const int n = static_cast<int>(pts);
    detail::Csv c;
    c.header = {ctx.fkey("omega_d", true), "abs_tf_g", "arg_tf_g", "abs_tf_e", "arg_tf_e",
                "kappa_eff_per_ns", ctx.fkey("pull", false), "power_ratio_e", "power_ratio_valid"};
    for (int i = 0; i < n; ++i) {
        const double w = lo + (hi - lo) * i / (n - 1);
        auto tg = semiclassical::transfer_function(p, w, QubitStateLabel::Ground);
        auto te = semiclassical::transfer_function(p, w, QubitStateLabel::Excited);
        auto pr = semiclassical::power_ratio(p, w, QubitStateLabel::Excited);
        c.rows.push_back({detail::num(ctx.fval(w, true)), detail::num(std::abs(tg)), detail::num(std::arg(tg)),
                          detail::num(std::abs(te)), detail::num(std::arg(te)),
                          detail::num(semiclassical::kappa_eff_at(p, w)),
                          detail::num(ctx.fval(semiclassical::pull_at(p, w), false)), detail::num(pr.value),
                          pr.valid ? "1" : "0"});
    }
    ctx.emit_csv("spectrum.csv", c);
    return 0;
}

inline detail::Csv driven_table(const driven::SweepResult& r) {
    detail::Csv c;
    c.header = {"n_bar", "n_bar_over_4ncrit", "gamma_per_ns", "ratio", "ratio_model_quartic", "fit_residual",
                "n_max_r", "n_max_f"};
    for (const auto& row : r.rows)
        c.rows.push_back({detail::num(row.n_bar), detail::num(row.n_bar / (4 * r.n_crit)), detail::num(row.gamma),
                          detail::num(row.ratio), detail::num(row.ratio_model), detail::num(row.fit.residual_rms),
                          detail::num(row.trunc.n_max_readout), detail::num(row.trunc.n_max_filter)});
    return c;
}

inline json driven_summary(const Context& ctx, const driven::SweepResult& r) {
    json j;
    j["gamma0_per_ns"] = r.gamma0;
    j["n_crit"] = r.n_crit;
    j["slope"] = r.slope;
    j["model_slope"] = r.model_slope;
    j["slope_ratio"] = r.slope_ratio;
    j["monotone"] = r.monotone;
    json rows = json::array();
    for (const auto& w : r.rows)
        rows.push_back({{"n_bar_target", w.n_bar_target},
                        {"n_bar", w.n_bar},
                        {"n_f", w.n_f},
                        {ctx.fkey("omega_d", true), ctx.fval(w.omega_d, true)},
                        {ctx.fkey("eps", false), ctx.fval(w.eps, false)},
                        {"gamma_per_ns", w.gamma},
                        {"gamma_ci_per_ns", {w.fit.slope_lo, w.fit.slope_hi}},
                        {"fit_window_ns", {w.fit.t_start, w.fit.t_end}},
                        {"residual_flag", w.fit.residual_flag},
                        {"non_monotone_flag", w.fit.non_monotone_flag},
                        {"gamma_enlarged_truncation_per_ns", w.gamma_check},
                        {"truncation_change", w.truncation_change},
                        {"converged", w.converged},
                        {"ode_steps", w.ode_steps}});
    j["rows"] = rows;
    return j;
}

inline int cmd_driven_sweep(Context& ctx) {
    const auto& p = ctx.p;
    driven::SweepOptions o;
    o.n_bar_list = ctx.list("n_bar_list", o.n_bar_list);
    o.fit_window = ctx.number("fit_window_ns", o.fit_window);
    const double margin = ctx.number("trunc_margin", o.trunc_margin);
    if (margin < 0 || margin != std::floor(margin)) throw ValidationError("trunc_margin must be a non-negative integer");
    o.trunc_margin = static_cast<int>(margin);
    const double tol = ctx.number("tolerance", o.ode.rtol);
    if (!(tol > 0 && tol < 1e-2)) throw ValidationError("tolerance must lie in (0, 1e-2)");
    o.ode = {tol, tol * 1e-3};
    o.fit_start = ctx.number("fit_start_ns", -1.0);
    o.jobs = ctx.opt.jobs;
    if (!(o.fit_window > 0)) throw ValidationError("fit_window_ns must be positive");

    auto r = driven::purcell_vs_photons(p, o);
    ctx.emit_csv("driven_sweep.csv", driven_table(r));
    json summary = driven_summary(ctx, r);
    bool converged = std::all_of(r.rows.begin(), r.rows.end(), [](const auto& w) { return w.converged; });

    if (ctx.number("include_no_filter", 0.0) != 0.0) {
        driven::SweepOptions nf = o;
        nf.topology = driven::Topology::NoFilter;
        nf.fit_window = ctx.number("no_filter_fit_window_ns", 300.0);
        nf.floor = ctx.number("no_filter_floor", 0.7);
        auto rn = driven::purcell_vs_photons(p, nf);
        ctx.emit_csv("driven_sweep_no_filter.csv", driven_table(rn));
        summary["no_filter"] = driven_summary(ctx, rn);
        converged = converged && std::all_of(rn.rows.begin(), rn.rows.end(), [](const auto& w) { return w.converged; });
    }

    // dashed model curves over n/4n_crit in [0, 0.2]
    detail::Csv m;
    m.header = {"n_bar_over_4ncrit", "filter_quartic", "filter_quartic_linear", "no_filter_stark",
                "no_filter_exact_2l"};
    for (int i = 0; i <= 40; ++i) {
        const double x = 0.005 * i, n = 4 * r.n_crit * x;
        m.rows.push_back({detail::num(x), detail::num(driven::stark_model(n, driven::StarkVariant::FilterQuartic, p)),
                          detail::num(driven::stark_model(n, driven::StarkVariant::FilterQuarticLinear, p)),
                          detail::num(driven::stark_model(n, driven::StarkVariant::NoFilterStark, p)),
                          detail::num(driven::stark_model(n, driven::StarkVariant::NoFilterExact2L, p))});
    }
    ctx.emit_csv("stark_models.csv", m);
    summary["all_converged"] = converged;
    ctx.emit_json("driven_sweep.json", summary);
    if (!converged) throw NumericalError("truncation convergence gate failed for at least one point");
    return 0;
}

inline dispersive::Levels parse_levels(double v) {
    if (v == 2) return dispersive::Levels::Two;
    if (v == 3) return dispersive::Levels::Three;
    if (v == 4) return dispersive::Levels::Four;
    throw ValidationError("levels must be 2, 3 or 4");
}

inline int cmd_dispersive(Context& ctx) {
    const auto c = dispersive::couplings(ctx.p);
    dispersive::require_dispersive(c);
    const double n_max_d = ctx.number("n_max", 50);
    if (n_max_d < 0 || n_max_d != std::floor(n_max_d)) throw ValidationError("n_max must be a non-negative integer");
    const int n_max = static_cast<int>(n_max_d);
    const double kappa_inv = ctx.number("kappa_inv_ns", 100.0);
    if (!(kappa_inv > 0)) throw ValidationError("kappa_inv_ns must be positive");
    const double kappa = 1.0 / kappa_inv;
    const auto levels = parse_levels(ctx.number("levels", 4));
    auto oracle = dispersive::dressed_oracle(c, n_max, levels, kappa);

    detail::Csv t;
    t.header = {"n",
                ctx.fkey("chi_n", false),
                ctx.fkey("chi_n_oracle", false),
                "gamma_n_per_ns",
                "gamma_n_oracle_per_ns",
                "gamma_g_to_e_per_ns",
                "gamma_g_to_e_oracle_per_ns",
                "gamma_e_to_f_per_ns",
                "gamma_e_to_f_oracle_per_ns",
                "valid"};
    for (int n = 0; n <= n_max; ++n) {
        auto ch = dispersive::chi_n(c, n, levels);
        auto gn = dispersive::gamma_n_analytic(c, n, kappa);
        auto ex = dispersive::excitation_rates(c, n, kappa);
        t.rows.push_back({detail::num(n), detail::num(ctx.fval(ch.chi, false)),
                          detail::num(ctx.fval(oracle.chi_n[n], false)), detail::num(gn.full),
                          detail::num(oracle.gamma_n[n]), detail::num(ex.g_to_e), detail::num(oracle.gamma_g_to_e[n]),
                          detail::num(levels == dispersive::Levels::Two ? 0.0 : ex.e_to_f),
                          detail::num(oracle.gamma_e_to_f[n]), ch.valid ? "1" : "0"});
    }
    ctx.emit_csv("dispersive.csv", t);

    auto chi = dispersive::chi_full(c);
    auto ch0 = dispersive::chi_n(c, 0, levels);
    json j;
    j[ctx.fkey("Delta", false)] = ctx.fval(c.Delta, false);
    j["n_crit"] = c.n_crit();
    j["n_crit_tilde"] = c.n_crit_tilde();
    j[ctx.fkey("chi", false)] = ctx.fval(chi.chi, false);
    j[ctx.fkey("chi_approx", false)] = ctx.fval(chi.chi_approx, false);
    j[ctx.fkey("chi_slope_per_photon", false)] = ctx.fval(ch0.slope, false);
    j[ctx.fkey("chi_slope_estimate", false)] = ctx.fval(ch0.slope_estimate, false);
    j[ctx.fkey("lamb_shift", false)] = ctx.fval(oracle.lamb_shift, false);
    j["gamma_0_per_ns"] = dispersive::gamma_n_analytic(c, 0, kappa).full;
    j["oracle_ambiguous"] = oracle.ambiguous;
    j["oracle_min_label_weight"] = oracle.min_label_weight;
    ctx.emit_json("dispersive.json", j);
    return 0;
}

inline dispersive::ErrorBudget budget_for(Context& ctx, const params::DeviceParams& p) {
    const double kappa_inv = ctx.number("kappa_inv_ns", 100.0);
    if (!(kappa_inv > 0)) throw ValidationError("kappa_inv_ns must be positive");
    auto in = dispersive::budget_inputs(p, 1.0 / kappa_inv, ctx.number("t_m_ns", 400.0), ctx.number("n_bar", 125.0));
    in.p_target = ctx.number("p_target", in.p_target);
    return dispersive::error_budget(in);
}

inline int cmd_error_budget(Context& ctx) {
    auto b = budget_for(ctx, ctx.p);
    json j;
    j["t_m_ns"] = b.t_m;
    j["n_bar"] = b.n_bar;
    j["delta_alpha"] = b.delta_alpha;
    j["delta_alpha_eff"] = b.delta_alpha_eff;
    j["p_sep"] = b.p_err_sep;
    j["p_purcell"] = b.p_purcell;
    j["p_intrinsic"] = b.p_intrinsic;
    j["p_total"] = b.p_err_total;
    j["t_m_bound_ns"] = b.t_m_bound;
    j["detuning_bound"] = b.detuning_bound;
    ctx.emit_json("error_budget.json", j);
    return 0;
}

inline int cmd_sweep(Context& ctx) {
    const std::string key = ctx.opt.axis;
    if (key.empty()) throw ValidationError("sweep needs --axis");
    if (!ctx.doc.has(key)) throw ValidationError("axis key '" + key + "' is not in the configuration");
    ctx.doc.number(key);  // must be numeric
    const auto values = detail::parse_list(ctx.opt.values);
    const std::string of = ctx.opt.of;
    std::vector<std::string> cols;
    if (of == "rates")
        cols = {"gamma_exact", "gamma_qs_simple", "gamma_qs_full", "gamma_dm", "kappa_q", "kappa_r", "F"};
    else if (of == "error-budget")
        cols = {"delta_alpha_eff", "p_sep", "p_purcell", "p_intrinsic", "p_total"};
    else
        throw ValidationError("--of must be rates or error-budget");
    ctx.options_echo["axis"] = key;
    ctx.options_echo["values"] = values;
    ctx.options_echo["of"] = of;
    if (of == "error-budget") {
        // pull the run options once so every row sees the same values
        ctx.number("kappa_inv_ns", 100.0);
        ctx.number("t_m_ns", 400.0);
        ctx.number("n_bar", 125.0);
        ctx.number("p_target", 1e-3);
    }

    struct Row {
        std::vector<double> v;
        std::string error;
        bool validation = false;
    };
    std::vector<Row> rows(values.size());
    numerics::parallel_for(values.size(), ctx.opt.jobs, [&](std::size_t i) {
        Row& r = rows[i];
        try {
            config::Document d = ctx.doc;
            d.set(key, values[i]);
            auto p = config::device_from_document(d);
            if (of == "rates") {
                auto j = rates_report(ctx, p);
                for (const auto& c : cols) r.v.push_back(j[c].get<double>());
            } else {
                Context local = ctx;  // per-job copy keeps the echo untouched
                local.doc = d;
                auto b = budget_for(local, p);
                r.v = {b.delta_alpha_eff, b.p_err_sep, b.p_purcell, b.p_intrinsic, b.p_err_total};
            }
        } catch (const ValidationError& e) {
            r.error = e.what();
            r.validation = true;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
    });

    detail::Csv c;
    c.header = {key};
    c.header.insert(c.header.end(), cols.begin(), cols.end());
    c.header.push_back("error");
    std::size_t failed = 0, failed_validation = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<std::string> cells{detail::num(values[i])};
        if (rows[i].error.empty()) {
            for (double v : rows[i].v) cells.push_back(detail::num(v));
        } else {
            ++failed;
            failed_validation += rows[i].validation;
            cells.insert(cells.end(), cols.size(), "nan");
        }
        cells.push_back(rows[i].error);
        c.rows.push_back(cells);
    }
    ctx.emit_csv("sweep.csv", c);
    if (!rows.empty() && failed == rows.size()) {
        if (failed_validation == failed) throw ValidationError("every sweep row failed");
        throw NumericalError("every sweep row failed");
    }
    return 0;
}

// ---------------------------------------------------------------------------

inline int default_jobs() {
    const char* env = std::getenv("PURCELLKIT_JOBS");
    if (!env || !*env) return 1;
    auto v = config::detail::parse_number(env);
    if (!v || *v < 1 || *v != std::floor(*v)) throw ValidationError("PURCELLKIT_JOBS must be a positive integer");
    return static_cast<int>(*v);
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Options o;
    CLI::App app{"Purcell-filter readout toolkit", "purcellkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.footer("Exit codes: 0 success, 2 validation error, 3 numerical failure.");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"rates", "single-excitation Purcell rates and filter linewidths (JSON)"},
        {"transient", "classical field transients for both qubit states (CSV)"},
        {"spectrum", "filter-drive transfer function and linewidth versus drive frequency (CSV)"},
        {"driven-sweep", "driven Lindblad Purcell rate versus photon number (CSV)"},
        {"dispersive", "dispersive shift, photon-dependent decay and excitation rates (CSV)"},
        {"error-budget", "measurement error budget (JSON)"},
        {"sweep", "grid over one numeric configuration key (CSV)"},
    };
    int jobs_flag = 0;
    for (const auto& [name, desc] : commands) {
        auto* sc = app.add_subcommand(name, desc);
        sc->add_option("--config", o.config_path, "configuration file (flat key = value)");
        sc->add_option("--preset", o.preset, "built-in parameter set");
        sc->add_option("--set", o.sets, "override a key, key=value (repeatable)")->allow_extra_args(false);
        sc->add_option("--out", o.out_dir, "output directory")->capture_default_str();
        sc->add_option("--units", o.units, "units of echoed and emitted frequencies")
            ->check(CLI::IsMember({"ghz", "rad_ns"}))
            ->capture_default_str();
        sc->add_option("--jobs", jobs_flag, "concurrent jobs (default: PURCELLKIT_JOBS or 1)")
            ->check(CLI::PositiveNumber);
        if (name == "transient")
            sc->add_option("--port", o.port, "drive port")->check(CLI::IsMember({"readout", "filter"}));
        if (name == "sweep") {
            sc->add_option("--axis", o.axis, "configuration key to vary")->required();
            sc->add_option("--values", o.values, "comma-separated values (may be empty)")->required();
            sc->add_option("--of", o.of, "what each row evaluates: rates or error-budget")->capture_default_str();
        }
    }

    std::vector<const char*> argv{"purcellkit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }
    for (auto* sc : app.get_subcommands()) o.command = sc->get_name();

    try {
        o.jobs = jobs_flag > 0 ? jobs_flag : default_jobs();
        Context ctx(o);
        int rc = 0;
        try {
            if (o.command == "rates") rc = cmd_rates(ctx);
            else if (o.command == "transient") rc = cmd_transient(ctx);
            else if (o.command == "spectrum") rc = cmd_spectrum(ctx);
            else if (o.command == "driven-sweep") rc = cmd_driven_sweep(ctx);
            else if (o.command == "dispersive") rc = cmd_dispersive(ctx);
            else if (o.command == "error-budget") rc = cmd_error_budget(ctx);
            else if (o.command == "sweep") rc = cmd_sweep(ctx);
        } catch (...) {
            // whatever was emitted before the failure stays listed
            ctx.write_manifest();
            throw;
        }
        ctx.write_manifest();
        return rc;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace purcellkit::cli
