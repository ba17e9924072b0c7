#pragma once

// Flat key = value configuration documents (a TOML subset: numbers, quoted strings,
// numeric arrays, '#' comments; no tables). Key names carry their unit as a suffix,
// e.g. omega_q_ghz, g_mhz, kappa_f_inv_ns.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "params.hpp"
#include "units.hpp"

namespace purcellkit::config {

using Value = std::variant<double, std::string, std::vector<double>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s.front() == '+') s.remove_prefix(1);
    std::string cleaned;  // TOML allows 1_000 digit separators
    for (char c : s)
        if (c != '_') cleaned.push_back(c);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cleaned.data(), cleaned.data() + cleaned.size(), v);
    if (ec != std::errc{} || ptr != cleaned.data() + cleaned.size()) return std::nullopt;
    return v;
}

inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    // keep floats recognisable as floats to TOML readers
    if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos) s += ".0";
    return s;
}

}  // namespace detail

class Document {
public:
    static Document parse(std::string_view text) {
        Document doc;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            std::size_t end = text.find('\n', pos);
            if (end == std::string_view::npos) end = text.size();
            std::string_view line = text.substr(pos, end - pos);
            pos = end + 1;
            ++line_no;
            doc.parse_line(line, line_no);
            if (end == text.size()) break;
        }
        return doc;
    }

    static Document load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ValidationError("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, Value>& values() const { return values_; }

    void set(const std::string& key, Value v) { values_[key] = std::move(v); }
    void erase(const std::string& key) { values_.erase(key); }

    double number(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("missing required key '" + key + "'");
        if (auto* d = std::get_if<double>(&it->second)) return *d;
        throw ValidationError("key '" + key + "' must be a number");
    }
    std::optional<double> number_opt(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return number(key);
    }
    std::string string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("missing required key '" + key + "'");
        if (auto* s = std::get_if<std::string>(&it->second)) return *s;
        throw ValidationError("key '" + key + "' must be a string");
    }
    std::optional<std::string> string_opt(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return string(key);
    }
    std::vector<double> list(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("missing required key '" + key + "'");
        if (auto* v = std::get_if<std::vector<double>>(&it->second)) return *v;
        if (auto* d = std::get_if<double>(&it->second)) return {*d};
        throw ValidationError("key '" + key + "' must be a numeric array");
    }

    // Set key from command-line text ("1.5", "[1,2]", "bare").
    void set_from_text(const std::string& key, std::string_view raw) {
        raw = detail::trim(raw);
        if (auto v = parse_value(raw)) {
            values_[key] = *v;
        } else {
            values_[key] = std::string(raw);
        }
    }

    std::string dump() const {
        std::string out;
        for (const auto& [k, v] : values_) {
            out += k + " = ";
            if (auto* d = std::get_if<double>(&v)) {
                out += detail::format_number(*d);
            } else if (auto* s = std::get_if<std::string>(&v)) {
                out += "\"" + *s + "\"";
            } else {
                const auto& xs = std::get<std::vector<double>>(v);
                out += "[";
                for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + detail::format_number(xs[i]);
                out += "]";
            }
            out += "\n";
        }
        return out;
    }

private:
    std::map<std::string, Value> values_;

    static std::optional<Value> parse_value(std::string_view v) {
        if (v.empty()) return std::nullopt;
        if (v.front() == '"' || v.front() == '\'') {
            if (v.size() < 2 || v.back() != v.front()) return std::nullopt;
            return Value(std::string(v.substr(1, v.size() - 2)));
        }
        if (v.front() == '[') {
            if (v.back() != ']') return std::nullopt;
            std::vector<double> xs;
            std::string_view body = detail::trim(v.substr(1, v.size() - 2));
            while (!body.empty()) {
                std::size_t comma = body.find(',');
                auto item = detail::trim(body.substr(0, comma));
                if (!item.empty()) {
                    auto x = detail::parse_number(item);
                    if (!x) return std::nullopt;
                    xs.push_back(*x);
                }
                if (comma == std::string_view::npos) break;
                body = body.substr(comma + 1);
            }
            return Value(std::move(xs));
        }
        if (auto x = detail::parse_number(v)) return Value(*x);
        return std::nullopt;
    }

    void parse_line(std::string_view line, std::size_t line_no) {
        // strip comment outside quotes
        char quote = 0;
        for (std::size_t i = 0; i < line.size(); ++i) {
            char c = line[i];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '#') {
                line = line.substr(0, i);
                break;
            }
        }
        line = detail::trim(line);
        if (line.empty()) return;
        auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
        if (line.front() == '[') throw ValidationError(where() + "tables are not supported; use flat keys");
        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ValidationError(where() + "expected 'key = value'");
        std::string key(detail::trim(line.substr(0, eq)));
        if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
                return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
            }))
            throw ValidationError(where() + "malformed key '" + key + "'");
        if (values_.count(key)) throw ValidationError(where() + "duplicate key '" + key + "'");
        auto v = parse_value(detail::trim(line.substr(eq + 1)));
        if (!v) throw ValidationError(where() + "cannot parse value for '" + key + "'");
        values_[key] = std::move(*v);
    }
};

// ---------------------------------------------------------------------------
// Device parameters <-> documents

enum class Dim { Frequency, InverseRate, Time };

struct Stem {
    const char* name;
    Dim dim;
};

inline constexpr Stem device_stems[] = {
    {"omega_q", Dim::Frequency},   {"omega_r", Dim::Frequency},  {"omega_f", Dim::Frequency},
    {"omega_r_g", Dim::Frequency}, {"omega_r_e", Dim::Frequency}, {"g", Dim::Frequency},
    {"g_ef", Dim::Frequency},      {"g_fh", Dim::Frequency},      {"G", Dim::Frequency},
    {"delta_q", Dim::Frequency},   {"chi", Dim::Frequency},       {"kappa_r_target", Dim::InverseRate},
    {"kappa_f_inv", Dim::InverseRate}, {"kappa_r_int_inv", Dim::InverseRate}, {"t1_int", Dim::Time},
};

inline constexpr const char* device_plain_keys[] = {"q_factor_f", "eta", "kappa_f_out_fraction", "G_phase_rad",
                                                     "kappa_r_probe"};

// Keys consumed by subcommands rather than by the device description.
inline constexpr const char* run_option_keys[] = {
    "n_bar_list", "fit_window_ns", "trunc_margin", "tolerance", "drive_rule", "n_r_target", "port",
    "t_end_ns",   "dt_ns",         "t_m_ns",       "n_bar",     "kappa_inv_ns", "n_max", "omega_d_ghz",
    "span_mhz",   "points",        "levels",       "include_no_filter", "fit_start_ns", "omega_d_min_ghz",
    "omega_d_max_ghz", "no_filter_fit_window_ns", "no_filter_floor", "p_target",
};

inline bool is_run_option(const std::string& key) {
    return std::any_of(std::begin(run_option_keys), std::end(run_option_keys),
                       [&](const char* k) { return key == k; });
}

// Resolve a key to (stem, value in internal units). Throws on unknown unit suffixes.
struct Resolved {
    std::string stem;
    double value;
};

inline std::optional<Resolved> resolve_device_key(const std::string& key, double raw) {
    const Stem* best = nullptr;
    std::string suffix;
    for (const auto& s : device_stems) {
        std::string n = s.name;
        if (key.size() > n.size() + 1 && key.compare(0, n.size(), n) == 0 && key[n.size()] == '_') {
            if (!best || n.size() > std::string(best->name).size()) {
                best = &s;
                suffix = key.substr(n.size() + 1);
            }
        }
    }
    if (!best) return std::nullopt;
    auto bad_unit = [&] {
        throw ValidationError("unit tag '" + suffix + "' unrecognized for key '" + key + "'");
    };
    switch (best->dim) {
        case Dim::Frequency:
            if (suffix == "ghz") return Resolved{best->name, units::ghz(raw)};
            if (suffix == "mhz") return Resolved{best->name, units::mhz(raw)};
            if (suffix == "rad_ns") return Resolved{best->name, raw};
            bad_unit();
            break;
        case Dim::InverseRate:  // value is the lifetime 1/rate
            if (suffix == "ns") return Resolved{best->name, raw};
            if (suffix == "us") return Resolved{best->name, units::us(raw)};
            bad_unit();
            break;
        case Dim::Time:
            if (suffix == "ns") return Resolved{best->name, raw};
            if (suffix == "us") return Resolved{best->name, units::us(raw)};
            bad_unit();
            break;
    }
    return std::nullopt;
}

inline params::KappaProbe parse_probe(const std::string& s) {
    if (s == "mean") return params::KappaProbe::Mean;
    if (s == "bare") return params::KappaProbe::Bare;
    if (s == "ground") return params::KappaProbe::Ground;
    if (s == "excited") return params::KappaProbe::Excited;
    throw ValidationError("kappa_r_probe must be one of mean, bare, ground, excited (got '" + s + "')");
}

inline const char* probe_name(params::KappaProbe p) {
    switch (p) {
        case params::KappaProbe::Mean: return "mean";
        case params::KappaProbe::Bare: return "bare";
        case params::KappaProbe::Ground: return "ground";
        case params::KappaProbe::Excited: return "excited";
    }
    return "mean";
}

inline params::DeviceParams device_from_document(const Document& doc) {
    std::map<std::string, double> q;  // stem -> internal value
    std::map<std::string, std::string> origin;
    for (const auto& [key, value] : doc.values()) {
        if (is_run_option(key)) continue;
        if (std::any_of(std::begin(device_plain_keys), std::end(device_plain_keys),
                        [&](const char* k) { return key == k; }))
            continue;
        const double* raw = std::get_if<double>(&value);
        auto r = resolve_device_key(key, raw ? *raw : 0.0);
        if (!r) throw ValidationError("unknown configuration key '" + key + "'");
        if (!raw) throw ValidationError("key '" + key + "' must be a number");
        if (origin.count(r->stem))
            throw ValidationError("keys '" + origin[r->stem] + "' and '" + key + "' give the same quantity");
        origin[r->stem] = key;
        q[r->stem] = r->value;
    }
    auto need = [&](const char* stem, const char* example) {
        auto it = q.find(stem);
        if (it == q.end()) throw ValidationError(std::string("missing required key '") + example + "'");
        return it->second;
    };
    auto opt = [&](const char* stem) -> std::optional<double> {
        auto it = q.find(stem);
        if (it == q.end()) return std::nullopt;
        return it->second;
    };

    params::DeviceParams p;
    p.omega_q_bare = need("omega_q", "omega_q_ghz");
    p.omega_r_bare = need("omega_r", "omega_r_ghz");
    p.omega_f = need("omega_f", "omega_f_ghz");
    p.g = need("g", "g_mhz");
    p.delta_q = need("delta_q", "delta_q_mhz");
    p.g_ef = opt("g_ef");
    p.g_fh = opt("g_fh");
    p.omega_r_ground = opt("omega_r_g");
    p.omega_r_excited = opt("omega_r_e");
    p.chi = opt("chi");

    auto qf = doc.number_opt("q_factor_f");
    auto kf_inv = opt("kappa_f_inv");
    if (qf && kf_inv) throw ValidationError("give either q_factor_f or kappa_f_inv_ns, not both");
    if (!qf && !kf_inv) throw ValidationError("missing required key 'q_factor_f' (or 'kappa_f_inv_ns')");
    if (qf) {
        if (!(*qf > 0)) throw ValidationError("q_factor_f must be positive");
        p.kappa_f = p.omega_f / *qf;
    } else {
        if (!(*kf_inv > 0)) throw ValidationError("kappa_f_inv must be positive");
        p.kappa_f = 1.0 / *kf_inv;
    }

    if (auto v = opt("kappa_r_int_inv")) {
        if (!(*v > 0)) throw ValidationError("kappa_r_int_inv must be positive (omit it for no internal loss)");
        p.kappa_r_int = 1.0 / *v;
    }
    if (auto v = opt("t1_int")) p.t1_intrinsic = *v;
    if (auto v = doc.number_opt("eta")) p.eta = *v;
    if (auto v = doc.number_opt("kappa_f_out_fraction")) p.kappa_f_out_fraction = *v;
    if (auto s = doc.string_opt("kappa_r_probe")) p.kappa_r_probe = parse_probe(*s);

    const double phase = doc.number_opt("G_phase_rad").value_or(0.0);
    auto G_abs = opt("G");
    auto kr_inv = opt("kappa_r_target");
    if (G_abs && kr_inv) throw ValidationError("give either G_mhz or kappa_r_target_ns, not both");
    if (!G_abs && !kr_inv) throw ValidationError("missing required key 'G_mhz' (or 'kappa_r_target_ns')");
    if (G_abs) {
        if (*G_abs < 0) throw ValidationError("G must be non-negative; use G_phase_rad for its phase");
        p.G = std::polar(*G_abs, phase);
    } else {
        if (!(*kr_inv > 0)) throw ValidationError("kappa_r_target must be positive");
        params::validate(p);  // kappa_f and frequencies needed below
        const auto d = params::derive(p);
        p.G = std::polar(params::coupling_for_kappa_r(1.0 / *kr_inv, p.kappa_f, p.omega_f, d.omega_r_probe), phase);
    }
    params::validate(p);
    return p;
}

inline params::DeviceParams load_device_config(std::string_view text) {
    return device_from_document(Document::parse(text));
}

inline params::DeviceParams load_device_config_file(const std::string& path) {
    return device_from_document(Document::load_file(path));
}

// Writes G explicitly (never kappa_r_target) so that the round trip is exact.
inline Document device_to_document(const params::DeviceParams& p, bool rad_ns = false) {
    Document doc;
    // frequencies either as GHz/MHz or in the internal rad/ns
    auto freq = [&](const std::string& stem, double omega, bool in_ghz) {
        if (rad_ns) doc.set(stem + "_rad_ns", omega);
        else doc.set(stem + (in_ghz ? "_ghz" : "_mhz"), in_ghz ? units::to_ghz(omega) : units::to_mhz(omega));
    };
    freq("omega_q", p.omega_q_bare, true);
    freq("omega_r", p.omega_r_bare, true);
    freq("omega_f", p.omega_f, true);
    freq("g", p.g, false);
    if (p.g_ef) freq("g_ef", *p.g_ef, false);
    if (p.g_fh) freq("g_fh", *p.g_fh, false);
    freq("G", std::abs(p.G), false);
    if (std::arg(p.G) != 0.0) doc.set("G_phase_rad", std::arg(p.G));
    doc.set("kappa_f_inv_ns", 1.0 / p.kappa_f);
    if (p.kappa_r_int > 0) doc.set("kappa_r_int_inv_ns", 1.0 / p.kappa_r_int);
    if (p.kappa_f_out_fraction != 1.0) doc.set("kappa_f_out_fraction", p.kappa_f_out_fraction);
    freq("delta_q", p.delta_q, false);
    if (std::isfinite(p.t1_intrinsic)) doc.set("t1_int_us", units::to_us(p.t1_intrinsic));
    doc.set("eta", p.eta);
    if (p.omega_r_ground) freq("omega_r_g", *p.omega_r_ground, true);
    if (p.omega_r_excited) freq("omega_r_e", *p.omega_r_excited, true);
    if (p.chi) freq("chi", *p.chi, false);
    doc.set("kappa_r_probe", std::string(probe_name(p.kappa_r_probe)));
    return doc;
}

inline std::string serialize_device_config(const params::DeviceParams& p) { return device_to_document(p).dump(); }

// ---------------------------------------------------------------------------
// Built-in parameter sets. The files under configs/ carry the same text.

struct Preset {
    const char* name;
    const char* text;
};

inline constexpr Preset presets[] = {
    {"purcell-filter",
     "# single-excitation Purcell example: transmon below a 6.75 GHz filter\n"
     "omega_q_ghz = 5.9\n"
     "omega_r_ghz = 6.8\n"
     "omega_f_ghz = 6.75\n"
     "q_factor_f = 30\n"
     "g_mhz = 90\n"
     "delta_q_mhz = 180\n"
     "kappa_r_target_ns = 30\n"
     "kappa_r_probe = \"bare\"\n"},
    {"transient-sym-readout",
     "# filter transients, drive frequency symmetric for the readout resonator\n"
     "omega_q_ghz = 5.9\n"
     "omega_r_ghz = 6.8\n"
     "omega_r_e_ghz = 6.8\n"
     "omega_r_g_ghz = 6.803\n"
     "omega_f_ghz = 6.75\n"
     "q_factor_f = 30\n"
     "g_mhz = 90\n"
     "delta_q_mhz = 180\n"
     "kappa_r_target_ns = 30\n"
     "kappa_r_probe = \"bare\"\n"
     "drive_rule = \"symmetric-readout\"\n"
     "n_r_target = 50\n"
     "t_end_ns = 600\n"
     "dt_ns = 1\n"},
    {"transient-sym-filter",
     "# filter transients, drive frequency symmetric for the filter photons\n"
     "omega_q_ghz = 5.9\n"
     "omega_r_ghz = 6.8\n"
     "omega_r_e_ghz = 6.8\n"
     "omega_r_g_ghz = 6.803\n"
     "omega_f_ghz = 6.75\n"
     "q_factor_f = 30\n"
     "g_mhz = 90\n"
     "delta_q_mhz = 180\n"
     "kappa_r_target_ns = 30\n"
     "kappa_r_probe = \"bare\"\n"
     "drive_rule = \"symmetric-filter\"\n"
     "n_r_target = 50\n"
     "t_end_ns = 600\n"
     "dt_ns = 1\n"},
    {"driven-two-level",
     "# driven Purcell rate vs readout photon number, two-level qubit\n"
     "omega_q_ghz = 6.0\n"
     "omega_r_ghz = 6.8\n"
     "omega_f_ghz = 6.8\n"
     "g_mhz = 100\n"
     "delta_q_mhz = 200\n"
     "kappa_r_target_ns = 36\n"
     "kappa_f_inv_ns = 0.71\n"
     "kappa_r_probe = \"bare\"\n"
     "n_bar_list = [0.5, 1, 2, 3]\n"
     "fit_window_ns = 1000\n"
     "trunc_margin = 4\n"
     "tolerance = 1e-7\n"},
    {"dispersive-budget",
     "# dispersive readout without filter: error-budget example\n"
     "omega_q_ghz = 5.45\n"
     "omega_r_ghz = 6.8\n"
     "omega_f_ghz = 6.8\n"
     "q_factor_f = 30\n"
     "g_mhz = 30\n"
     "delta_q_mhz = 200\n"
     "G_mhz = 0\n"
     "chi_mhz = -0.1\n"
     "eta = 0.3\n"
     "kappa_inv_ns = 100\n"
     "t_m_ns = 400\n"
     "n_bar = 125\n"
     "n_max = 50\n"},
};

inline std::optional<std::string_view> preset_text(std::string_view name) {
    for (const auto& p : presets)
        if (name == p.name) return std::string_view(p.text);
    return std::nullopt;
}

inline params::DeviceParams load_preset(std::string_view name) {
    auto t = preset_text(name);
    if (!t) throw ValidationError("unknown preset '" + std::string(name) + "'");
    return load_device_config(*t);
}

}  // namespace purcellkit::config
