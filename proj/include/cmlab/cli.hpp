#pragma once
/// Run configuration (JSON file plus flag overrides) and the six pipeline commands behind `cmlab`.

#include "cmlab/suite.hpp"

#include <iostream>
#include <optional>

namespace cmlab {

enum ExitCode { exit_pass = 0, exit_assertion = 1, exit_config = 2, exit_numerical = 3 };

// Everything a command needs; `raw` is the merged JSON it was built from.
struct RunConfig {
    json raw;
    Params params;
    json input;    // {"field": path} or {"preset": {...}, "grid": {...}, "n": k, "minimize": bool}
    json options;  // command specific
    fs::path out = "cmlab_out";
    std::uint64_t seed = 1;
    std::optional<int> level;

    // Resolved view embedded in every output.
    json to_json() const {
        json j;
        j["params"] = params.to_json();
        j["input"] = input;
        j["options"] = options;
        j["seed"] = seed;
        if (level) j["level"] = *level;
        return j;
    }
};

namespace cli {

inline bool is_param_key(const std::string& k) {
    static const std::vector<std::string> keys = {"m", "n", "delta", "gamma", "lambda", "kappa", "vartheta", "k_max",
                                                  "eps_bar", "cube_samples", "glue_samples", "reparam_tol",
                                                  "excess_radius", "flat_excess"};
    return std::find(keys.begin(), keys.end(), k) != keys.end();
}

// "a.b.c=v": v parsed as JSON when possible, else kept as a string. A bare key goes to "params"
// when it names a parameter and to "options" otherwise.
inline void apply_param(json& cfg, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--param expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    std::vector<std::string> path;
    for (std::size_t s = 0;;) {
        auto d = key.find('.', s);
        path.push_back(key.substr(s, d - s));
        if (d == std::string::npos) break;
        s = d + 1;
    }
    for (auto& p : path)
        if (p.empty()) throw ConfigError("empty component in --param key '" + key + "'");
    if (path.size() == 1) path.insert(path.begin(), is_param_key(path[0]) ? "params" : "options");
    json* node = &cfg;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!node->contains(path[i])) (*node)[path[i]] = json::object();
        node = &(*node)[path[i]];
        if (!node->is_object()) throw ConfigError("--param key '" + key + "' descends into a non-object");
    }
    (*node)[path.back()] = value;
}

inline json read_config_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open config file " + p.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ConfigError("config file " + p.string() + " is not a JSON object");
    return j;
}

struct Overrides {
    std::optional<fs::path> config;
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> level;
    std::vector<std::string> params;
};

// File, then --param, then the dedicated flags; the later source wins.
inline RunConfig load_config(const Overrides& ov) {
    json cfg = ov.config ? read_config_file(*ov.config) : json::object();
    for (auto& kv : ov.params) apply_param(cfg, kv);
    if (ov.out) cfg["out"] = ov.out->string();
    if (ov.seed) cfg["seed"] = *ov.seed;
    if (ov.level) cfg["level"] = *ov.level;
    static const std::vector<std::string> top = {"params", "input", "options", "out", "seed", "level"};
    for (auto it = cfg.begin(); it != cfg.end(); ++it)
        if (std::find(top.begin(), top.end(), it.key()) == top.end()) throw ConfigError("unknown config key '" + it.key() + "'");
    RunConfig rc;
    rc.raw = cfg;
    try {
        rc.params = Params::from_json(cfg.value("params", json::object()));
        rc.input = cfg.value("input", json::object());
        rc.options = cfg.value("options", json::object());
        if (!rc.input.is_object() || !rc.options.is_object()) throw ConfigError("input and options must be JSON objects");
        if (cfg.contains("out")) rc.out = cfg.at("out").get<std::string>();
        if (cfg.contains("seed")) rc.seed = cfg.at("seed").get<std::uint64_t>();
        if (cfg.contains("level")) rc.level = cfg.at("level").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    return rc;
}

template <class T>
T option(const RunConfig& rc, const std::string& key, T fallback) {
    if (!rc.options.contains(key)) return fallback;
    try {
        return rc.options.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("option '" + key + "' has the wrong type");
    }
}

inline Preset preset_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("preset must be a JSON object");
    Preset p;
    try {
        p.kind = j.value("kind", p.kind);
        p.eps = j.value("eps", p.eps);
        p.k = j.value("k", p.k);
        p.slope = j.value("slope", p.slope);
        p.offset = j.value("offset", p.offset);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad preset: ") + e.what());
    }
    static const std::vector<std::string> kinds = {"affine", "trig", "poly", "saddle"};
    if (std::find(kinds.begin(), kinds.end(), p.kind) == kinds.end()) throw ConfigError("unknown preset '" + p.kind + "'");
    return p;
}

// {"N": samples per axis, "L": half-width} for the square [-L, L]^m, or explicit dims/origin/spacing.
inline GridSpec grid_from_json(const json& j, int m) {
    GridSpec g;
    try {
        if (j.contains("dims")) {
            g.dims = j.at("dims").get<std::vector<int>>();
            g.origin = j.at("origin").get<std::vector<double>>();
            g.h = j.at("spacing").get<double>();
        } else {
            const int N = j.value("N", 129);
            const double L = j.value("L", 1.0);
            if (N < 3 || !(L > 0)) throw ConfigError("grid needs N >= 3 and L > 0");
            g.dims.assign(m, N);
            g.origin.assign(m, -L);
            g.h = 2 * L / (N - 1);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad grid: ") + e.what());
    }
    if (static_cast<int>(g.dims.size()) != m || g.origin.size() != g.dims.size() || !(g.h > 0))
        throw ConfigError("grid does not match m = " + std::to_string(m));
    return g;
}

inline MinimizeOptions minimize_options(const RunConfig& rc) {
    MinimizeOptions mo;
    mo.tol = option(rc, "tol", mo.tol);
    mo.max_iter = option(rc, "max_iter", mo.max_iter);
    mo.boundary_lip_max = option(rc, "boundary_lip_max", mo.boundary_lip_max);
    return mo;
}

// The input field: a gfld-1 file, or a preset sampled on a grid (minimized when "minimize" is set).
inline GridField load_input(const RunConfig& rc) {
    if (rc.input.contains("field")) return read_field(rc.input.at("field").get<std::string>());
    if (!rc.input.contains("preset")) throw ConfigError("input needs either 'field' or 'preset'");
    Preset p = preset_from_json(rc.input.at("preset"));
    const int n = rc.input.value("n", rc.params.n);
    GridSpec g = grid_from_json(rc.input.value("grid", json::object()), rc.params.m);
    GridField f = preset_field(p, n, g);
    if (rc.input.value("minimize", false)) f = minimize_area(f, minimize_options(rc)).solution;
    return f;
}

inline std::vector<double> center_of(const GridField& f) {
    std::vector<double> c(f.m);
    for (int a = 0; a < f.m; ++a) c[a] = 0.5 * (f.origin[a] + f.upper(a));
    return c;
}

inline std::vector<double> point_option(const RunConfig& rc, const GridField& f, const std::string& key = "x") {
    auto x = option(rc, key, center_of(f));
    if (static_cast<int>(x.size()) != f.m) throw ConfigError("option '" + key + "' must have m coordinates");
    return x;
}

inline json envelope(const std::string& command, const RunConfig& rc) {
    json j;
    j["command"] = command;
    j["config"] = rc.to_json();
    return j;
}

// ---------------------------------------------------------------------------------------------
// Commands; each returns its exit code and writes under rc.out

inline int cmd_generate(const RunConfig& rc) {
    if (!rc.input.contains("preset")) throw ConfigError("generate needs an input preset");
    Preset p = preset_from_json(rc.input.at("preset"));
    const int n = rc.input.value("n", rc.params.n);
    GridSpec g = grid_from_json(rc.input.value("grid", json::object()), rc.params.m);
    auto res = minimize_area(preset_field(p, n, g), minimize_options(rc));
    Stream rng(rc.seed, "generate");
    const double fv = first_variation_residual(res.solution, suite::bump_battery(res.solution, rng));
    json j = envelope("generate", rc);
    j["result"] = res.to_json();
    j["first_variation_residual"] = fv;
    j["field"] = "u.json";
    write_field(res.solution, rc.out / "u");
    write_json(j, rc.out / "generate.json");
    return exit_pass;
}

inline int cmd_excess(const RunConfig& rc) {
    GridField u = load_input(rc);
    const auto x = point_option(rc, u);
    const double r = option(rc, "r", 0.5);
    GraphCache G(u);
    auto op = optimal_plane(G, graph_point(u, x), r);
    const Plane flat = Plane::horizontal(u.m, u.n);
    auto cyl = cylindrical_excess(G, x, r, flat);
    auto id = excess_identity_check(u, Region::disk(x, r));
    json j = envelope("excess", rc);
    j["spherical"] = {{"value", op.report.value}, {"plane", plane_to_json(op.plane)}, {"iterations", op.iterations}};
    j["cylindrical_horizontal"] = {{"value", cyl.value}, {"scaled", cyl.value / std::pow(r, u.m)}};
    j["identity"] = {{"lhs", id.lhs}, {"rhs", id.rhs}, {"gap", id.gap}};
    write_json(j, rc.out / "excess.json");
    return exit_pass;
}

inline int cmd_decay(const RunConfig& rc) {
    GridField u = load_input(rc);
    const auto x = point_option(rc, u);
    const double r0 = option(rc, "r0", 0.5);
    const int depth = option(rc, "depth", 3);
    auto t = excess_decay_sweep(u, x, r0, depth);
    json j = envelope("decay", rc);
    j["sweep"] = t.to_json();
    if (option(rc, "morrey", false)) j["morrey"] = morrey_iteration(u, x, r0, depth).to_json();
    Csv c;
    c.header = {"radius", "excess", "ratio", "tilt_gap"};
    for (std::size_t i = 0; i < t.radii.size(); ++i) {
        const bool step = i > 0 && !t.exact_zero;
        c.add({num(t.radii[i]), num(t.excess[i]), step ? num(t.ratios[i - 1]) : "", i > 0 ? num(t.tilt_gaps[i - 1]) : ""});
    }
    write_json(j, rc.out / "decay.json");
    c.write(rc.out / "decay.csv");
    return exit_pass;
}

inline int cmd_lipapprox(const RunConfig& rc) {
    GridField v = load_input(rc);
    const auto x = point_option(rc, v);
    const double r = option(rc, "r", 0.5);
    LipApproxOptions lo;
    lo.gamma = option(rc, "gamma", rc.params.gamma);
    lo.lambda = option(rc, "lambda", lo.gamma);
    lo.eps_bar = option(rc, "eps_bar", rc.params.eps_bar);
    lo.exact_lip = option(rc, "exact_lip", true);
    const double E = option(rc, "E", scaled_cylindrical_excess(v, x, r));
    auto res = lipschitz_approximation(v, x, r, E, lo);
    json j = envelope("lipapprox", rc);
    j["result"] = res.to_json();
    j["fields"] = {{"w", "w.json"}, {"K", "K.json"}};
    write_field(res.w, rc.out / "w");
    write_field(res.K_mask, rc.out / "K");
    write_json(j, rc.out / "lipapprox.json");
    return exit_pass;
}

inline int cmd_cm(const RunConfig& rc) {
    GridField u = load_input(rc);
    if (u.m != rc.params.m || u.n != rc.params.n) throw ConfigError("input field dimensions differ from params m, n");
    if (rc.level && (*rc.level < rc.params.N0 || *rc.level > rc.params.k_max))
        throw ConfigError("--level must lie in [" + std::to_string(rc.params.N0) + ", " + std::to_string(rc.params.k_max) + "]");
    CmOptions o;
    o.estimates = option(rc, "estimates", true);
    auto run = run_center_manifold(u, rc.params, o);
    auto wanted = [&](int k) { return !rc.level || *rc.level == k; };
    json j = envelope("cm", rc);
    j["E"] = run.E;
    j["flat"] = run.flat;
    json levels = json::array();
    for (auto& lv : run.levels) {
        if (!wanted(lv.k)) continue;
        const std::string name = "zeta_" + std::to_string(lv.k);
        write_field(lv.zeta, rc.out / name);
        auto nr = cm_norm_report(lv.zeta, u, run.P, run.E, lv.k);
        levels.push_back({{"k", lv.k}, {"field", name + ".json"}, {"norms", nr.to_json()},
                          {"min_denominator", lv.min_denominator}, {"partition_error", lv.partition_error},
                          {"spacing_ok", lv.spacing_ok}});
    }
    j["levels"] = levels;
    if (o.estimates) {
        auto rep = cube_estimate_report(run);
        j["estimates"] = rep.to_json();
        Csv c;
        c.header = {"level", "i0", "i1", "i2", "center0", "center1", "ell", "E_L", "tilt", "tilt_father", "lip_on_K",
                    "bad_measure", "zf_l1", "lap_z", "maximal_bounded", "spacing_ok", "Dg0", "Dg1", "Dg2", "Dg3", "Dg4"};
        for (auto& cb : run.cubes) {
            if (!wanted(cb.level)) continue;
            std::vector<std::string> row = {num(cb.level), num(cb.index[0]), num(cb.index[1]), num(cb.index[2]),
                                            num(cb.center.at(0)), num(cb.center.size() > 1 ? cb.center[1] : 0.0),
                                            num(cb.ell), num(cb.E_L), num(cb.tilt), num(cb.tilt_father),
                                            num(cb.lip_on_K), num(cb.bad_measure), num(cb.zf_l1), num(cb.lap_z),
                                            cb.maximal_bounded ? "1" : "0", cb.spacing_ok ? "1" : "0"};
            for (double d : cb.Dg) row.push_back(num(d));
            c.add(std::move(row));
        }
        c.write(rc.out / "cubes.csv");
        Csv pc;
        pc.header = {"kind", "level", "a", "b", "ell", "D0", "D1", "D2", "D3", "L1"};
        for (auto& p : run.pairs) {
            if (!wanted(p.level)) continue;
            pc.add({p.kind, num(p.level), std::to_string(p.a), std::to_string(p.b), num(p.ell), num(p.D[0]), num(p.D[1]),
                    num(p.D[2]), num(p.D[3]), num(p.l1)});
        }
        pc.write(rc.out / "pairs.csv");
    }
    write_json(j, rc.out / "cm.json");
    return exit_pass;
}

// Field-level checks of the verify module; an optional "max_C" turns the measured constant into an assertion.
inline int verify_field(const std::string& check, const RunConfig& rc) {
    GridField f = load_input(rc);
    const auto x = point_option(rc, f);
    json j = envelope("verify " + check, rc);
    double C = 0;
    if (check == "oscillation") {
        const double r = option(rc, "r", 0.1);
        auto rep = mean_oscillation_check(f, {OscillationConfig{x, r}});
        C = rep.C;
        j["result"] = rep.to_json();
    } else if (check == "morrey") {
        auto rep = morrey_iteration(f, x, option(rc, "r0", 0.5), option(rc, "depth", 3));
        C = rep.gap_constant;
        j["result"] = rep.to_json();
    } else if (check == "harmonic") {
        HarmonicDecayOptions o;
        o.analytic = option(rc, "analytic", false);
        auto rep = harmonic_decay_check(f, x, option(rc, "rho", 0.25), option(rc, "r", 0.5), o);
        C = rep.C;
        j["result"] = rep.to_json();
    } else if (check == "blowup") {
        const double r = option(rc, "r", 0.5);
        const double E = option(rc, "E", scaled_cylindrical_excess(f, x, r));
        auto rep = harmonic_blowup_compare(f, E, x, r);
        C = rep.w12_gap;
        j["result"] = rep.to_json();
    } else if (check == "taylor") {
        auto rep = taylor_excess_bound_check(f, x, option(rc, "r", 0.5));
        C = rep.C;
        j["result"] = rep.to_json();
    } else if (check == "interpolate") {
        auto rep = interpolation_inequality_check(f, x, option(rc, "r", 0.3), option(rc, "s", 0.6), option(rc, "kappa", rc.params.kappa));
        C = rep.C;
        j["result"] = rep.to_json();
    } else {
        throw ConfigError("unknown check '" + check + "'");
    }
    const bool pass = !rc.options.contains("max_C") || C <= option(rc, "max_C", 0.0);
    j["measured_constant"] = C;
    j["pass"] = pass;
    write_json(j, rc.out / ("verify_" + check + ".json"));
    return pass ? exit_pass : exit_assertion;
}

inline bool is_field_check(const std::string& c) {
    for (const char* s : {"oscillation", "morrey", "harmonic", "blowup", "taylor", "interpolate"})
        if (c == s) return true;
    return false;
}

// "all": criteria 1-13 twice plus the determinism comparison; "suite": 1-13 once; otherwise one
// criterion by name or number, or a field-level check.
inline int cmd_verify(const std::string& check, const RunConfig& rc, std::ostream& log) {
    if (is_field_check(check)) return verify_field(check, rc);
    SuiteOptions so;
    so.seed = rc.seed;
    so.log = [&log](const std::string& s) { log << "[verify] " << s << std::endl; };
    SuiteReport rep;
    if (check == "all") {
        rep = run_acceptance(so);
    } else {
        if (check != "suite") {
            const int id = criterion_id(check);
            if (id == 14) throw ConfigError("determinism is checked by 'verify all'");
            so.only = {id};
        }
        rep = run_suite(so);
    }
    json j = envelope("verify " + check, rc);
    j["report"] = rep.to_json();
    write_json(j, rc.out / ("verify_" + check + ".json"));
    rep.to_csv().write(rc.out / ("verify_" + check + ".csv"));
    for (auto& r : rep.results) log << (r.pass ? "PASS " : "FAIL ") << r.id << " " << r.name << ": " << r.summary << "\n";
    return rep.pass() ? exit_pass : exit_assertion;
}

// Maps the library's error types onto exit codes.
template <class F>
int guarded(F&& body, std::ostream& err) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const DomainError& e) {
        err << "domain error: " << e.what() << "\n";
        return exit_config;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    }
}

}  // namespace cli

}  // namespace cmlab
