#pragma once
/// Desk-scale acceptance suite (criteria 1-14), shared by `cmlab verify` and the acceptance binary.

#include "cmlab/cm.hpp"
#include "cmlab/io.hpp"
#include "cmlab/minimize.hpp"
#include "cmlab/verify.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string_view>

namespace cmlab {

// ---------------------------------------------------------------------------------------------
// Named random streams

// mt19937_64 keyed by (seed, FNV-1a of the stream name). Doubles come from the top 53 bits so the
// draws do not depend on the standard library's distribution implementations.
class Stream {
public:
    Stream(std::uint64_t seed, std::string_view name) {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : name) {
            h ^= c;
            h *= 1099511628211ull;
        }
        std::seed_seq sq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(h), std::uint32_t(h >> 32)};
        eng_.seed(sq);
    }

    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

private:
    std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------------------------
// Report types

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string summary;  // one line, deterministic
    json measured;

    json to_json() const {
        return json{{"id", id}, {"check", name}, {"pass", pass}, {"summary", summary}, {"measured", measured}};
    }
};

struct SuiteReport {
    std::uint64_t seed = 0;
    std::vector<CriterionResult> results;

    bool pass() const {
        for (auto& r : results)
            if (!r.pass) return false;
        return !results.empty();
    }

    json to_json() const {
        json j;
        j["seed"] = seed;
        j["pass"] = pass();
        json a = json::array();
        for (auto& r : results) a.push_back(r.to_json());
        j["criteria"] = a;
        return j;
    }

    Csv to_csv() const {
        Csv c;
        c.header = {"id", "check", "pass", "summary"};
        for (auto& r : results) c.add({num(r.id), r.name, r.pass ? "1" : "0", "\"" + r.summary + "\""});
        return c;
    }
};

struct SuiteOptions {
    std::uint64_t seed = 1;
    std::vector<int> only;                          // empty: criteria 1-13
    std::function<void(const std::string&)> log;    // progress and timings; never part of the report
};

inline const std::vector<std::string>& criterion_names() {
    static const std::vector<std::string> names = {
        "excess-identity", "minors-gram",      "mvector-inner",   "harmonic-decay",  "excess-decay",
        "lipschitz-approx", "affine-fixed-point", "cm-scaling",   "cm-convergence",  "cube-ratios",
        "cube-stability",  "first-variation",  "interpolation",   "determinism"};
    return names;
}

inline int criterion_id(const std::string& name) {
    auto& n = criterion_names();
    for (std::size_t i = 0; i < n.size(); ++i)
        if (n[i] == name || std::to_string(i + 1) == name) return int(i) + 1;
    throw ConfigError("unknown check '" + name + "'");
}

namespace suite {

// |a - b| <= tol * max(a, b) for nonnegative a, b; two zeros agree.
inline bool stable(double a, double b, double tol = 0.2) {
    return std::isfinite(a) && std::isfinite(b) && std::abs(a - b) <= tol * std::max(a, b);
}

// max / min over positive entries; 1 when all vanish, inf when only some do.
inline double spread(const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (double x : v) {
        if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi == 0) return 1;
    if (lo == 0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

inline std::string fmt(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", v);
    return b;
}

inline GridSpec square(int N, double L) { return GridSpec{{N, N}, {-L, -L}, 2 * L / (N - 1)}; }

inline json grid_json(const GridSpec& g) { return json{{"dims", g.dims}, {"origin", g.origin}, {"spacing", g.h}}; }

inline json preset_json(const Preset& p) {
    json j{{"kind", p.kind}, {"eps", p.eps}, {"k", p.k}};
    if (!p.slope.empty()) j["slope"] = p.slope;
    if (!p.offset.empty()) j["offset"] = p.offset;
    return j;
}

// Boundary data of a preset on a grid, minimized.
struct Generated {
    Preset preset;
    GridSpec grid;
    GridField u;
    int iterations = 0;
    double final_gradient_norm = 0;

    json to_json() const {
        return json{{"preset", preset_json(preset)}, {"grid", grid_json(grid)}, {"iterations", iterations},
                    {"final_gradient_norm", final_gradient_norm}};
    }
};

constexpr double generate_tol = 1e-11;

inline Generated generate(const Preset& p, int n, const GridSpec& g) {
    Generated out;
    out.preset = p;
    out.grid = g;
    MinimizeOptions mo;
    mo.tol = generate_tol;
    auto r = minimize_area(preset_field(p, n, g), mo);
    out.u = std::move(r.solution);
    out.iterations = r.iterations;
    out.final_gradient_norm = r.final_gradient_norm;
    return out;
}

// One member of the excess sweep: a saddle minimal graph whose excess is calibrated to a target.
struct SweepMember {
    double target = 0;
    Generated graph;
    CmRun run;
    EstimateReport report;
    std::vector<CmNorms> norms;
};

struct Inputs {
    std::uint64_t seed = 0;
    std::function<void(const std::string&)> log;
    std::optional<Generated> graph[2];  // decay / Lipschitz input at h and h/2
    std::optional<std::vector<SweepMember>> sweep;

    void say(const std::string& s) const {
        if (log) log(s);
    }

    // trig mode 2 on [-1,1]^2, the input of criteria 5, 6 and 12
    static Preset graph_preset() {
        Preset p;
        p.kind = "trig";
        p.k = 2;
        p.eps = 0.029;
        return p;
    }
    static GridSpec graph_grid(int which) { return square(which == 0 ? 257 : 513, 1.0); }

    const Generated& graph_at(int which) {
        if (!graph[which]) {
            say("generating the trig minimal graph on " + std::to_string(graph_grid(which).dims[0]) + "^2");
            graph[which] = generate(graph_preset(), 1, graph_grid(which));
        }
        return *graph[which];
    }

    static Params sweep_params() {
        Params P;
        P.m = 2;
        P.n = 1;
        P.cube_samples = 2;
        return P.resolve();
    }

    const std::vector<SweepMember>& sweep_members() {
        if (sweep) return *sweep;
        sweep.emplace();
        const Params P = sweep_params();
        for (double target : {1e-2, 1e-3, 1e-4}) {
            // E is nearly quadratic in the amplitude; calibrate on a coarse grid, then generate once
            Preset p;
            p.kind = "saddle";
            p.eps = std::sqrt(target / 2);
            for (int pass = 0; pass < 2; ++pass) {
                auto c = generate(p, 1, square(129, 2.0));
                double E = run_excess(CmContext(c.u, P));
                p.eps *= std::sqrt(target / E);
            }
            SweepMember s;
            s.target = target;
            say("sweep E~" + fmt(target) + ": generating the saddle graph on 513^2");
            s.graph = generate(p, 1, square(513, 2.0));
            say("sweep E~" + fmt(target) + ": center manifold, levels " + std::to_string(P.N0) + "-" +
                std::to_string(P.k_max));
            s.run = run_center_manifold(s.graph.u, P);
            s.report = cube_estimate_report(s.run);
            for (auto& lv : s.run.levels) s.norms.push_back(cm_norm_report(lv.zeta, s.graph.u, s.run.P, s.run.E, lv.k));
            sweep->push_back(std::move(s));
        }
        return *sweep;
    }
};

// ---------------------------------------------------------------------------------------------
// Criteria

inline CriterionResult excess_identity(Inputs&) {
    CriterionResult r;
    using Fn = std::function<void(const double*, double*)>;
    struct Case {
        const char* name;
        int n;
        Fn fn;
    };
    const std::vector<Case> cases = {
        {"sin-product", 1, [](const double* x, double* v) { v[0] = 0.1 * std::sin(3 * x[0]) * std::sin(3 * x[1]); }},
        {"gaussian", 1, [](const double* x, double* v) { v[0] = 0.2 * std::exp(-2 * (x[0] * x[0] + x[1] * x[1])); }},
        {"cubic", 1, [](const double* x, double* v) { v[0] = 0.15 * (x[0] * x[0] - x[0] * x[1] + 0.5 * x[1] * x[1] * x[1]); }},
        {"wave-pair", 2,
         [](const double* x, double* v) {
             v[0] = 0.1 * std::cos(2 * x[0] + x[1]);
             v[1] = 0.1 * x[0] * x[1];
         }},
        {"harmonic-pair", 2,
         [](const double* x, double* v) {
             v[0] = 0.08 * (x[0] * x[0] - x[1] * x[1]);
             v[1] = 0.05 * std::sin(4 * x[0]) * std::cosh(x[1]);
         }},
    };
    r.pass = true;
    double worst_gap = 0, lo = 1e300, hi = 0;
    json rows = json::array();
    for (auto& c : cases) {
        double g[2];
        for (int i = 0; i < 2; ++i) {
            auto f = GridField::sample(c.n, {i ? 257 : 129, i ? 257 : 129}, {-0.5, -0.5}, i ? 1.0 / 256 : 1.0 / 128, c.fn);
            g[i] = std::abs(excess_identity_check(f).gap);
        }
        double ratio = safe_ratio(g[0], g[1]);
        bool ok = g[1] <= 1e-3 && ratio >= 3.5 && ratio <= 4.5;
        r.pass = r.pass && ok;
        worst_gap = std::max(worst_gap, g[1]);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
        rows.push_back(json{{"field", c.name}, {"n", c.n}, {"gap_h128", g[0]}, {"gap_h256", g[1]}, {"ratio", ratio}, {"pass", ok}});
    }
    r.measured = json{{"domain", "[-0.5,0.5]^2"}, {"fields", rows}};
    r.summary = "max |lhs-rhs| at h=1/256 " + fmt(worst_gap) + ", halving ratios in [" + fmt(lo) + ", " + fmt(hi) + "]";
    return r;
}

inline CriterionResult minors_gram(Inputs& in) {
    CriterionResult r;
    Stream rng(in.seed, "minors-gram");
    const int samples = 1000;
    double worst = 0;
    for (int s = 0; s < samples; ++s) {
        Eigen::Matrix2d D;
        for (int i = 0; i < 4; ++i) D(i / 2, i % 2) = rng.uniform(-1, 1);
        double op = D.jacobiSvd().singularValues()(0);
        if (op > 1) D /= op;
        double row[4] = {D(0, 0), D(0, 1), D(1, 0), D(1, 1)};
        double oracle = std::sqrt((Eigen::Matrix2d::Identity() + D.transpose() * D).determinant());
        worst = std::max(worst, std::abs(area_integrand_minors(row, 2, 2) - oracle));
    }
    r.pass = worst <= 1e-12;
    r.measured = json{{"samples", samples}, {"max_abs_difference", worst}, {"tolerance", 1e-12}};
    r.summary = "max |minors - sqrt det(I + D^T D)| " + fmt(worst) + " over " + std::to_string(samples) + " slopes";
    return r;
}

inline CriterionResult mvector_inner_check(Inputs& in) {
    CriterionResult r;
    Stream rng(in.seed, "mvector-inner");
    // unit 2-vector of the graph plane of A from the wedge of its two tangent columns
    auto wedge = [](const Mat& A) {
        double v[4] = {1, 0, A(0, 0), A(1, 0)}, w[4] = {0, 1, A(0, 1), A(1, 1)};
        std::array<double, 6> out{};
        int k = 0;
        double s = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j) {
                out[k] = v[i] * w[j] - v[j] * w[i];
                s += out[k] * out[k];
                ++k;
            }
        for (double& x : out) x /= std::sqrt(s);
        return out;
    };
    const int pairs = 100;
    double worst = 0;
    for (int p = 0; p < pairs; ++p) {
        Mat A(2, 2), B(2, 2);
        for (int i = 0; i < 4; ++i) A(i / 2, i % 2) = rng.uniform(-1, 1);
        for (int i = 0; i < 4; ++i) B(i / 2, i % 2) = rng.uniform(-1, 1);
        auto a = wedge(A), b = wedge(B);
        double brute = 0;
        for (int k = 0; k < 6; ++k) brute += a[k] * b[k];
        worst = std::max(worst, std::abs(mvector_inner(A, B) - brute));
    }
    r.pass = worst <= 1e-12;
    r.measured = json{{"pairs", pairs}, {"max_abs_difference", worst}, {"tolerance", 1e-12}};
    r.summary = "max |Gram inner - wedge inner| " + fmt(worst) + " over " + std::to_string(pairs) + " plane pairs";
    return r;
}

inline CriterionResult harmonic_decay(Inputs&) {
    CriterionResult r;
    const GridSpec g = square(257, 1.0);
    auto h = GridField::sample(1, g.dims, g.origin, g.h, [](const double* x, double* v) { v[0] = x[0] * x[0] - x[1] * x[1]; });
    const double R = 0.9;
    r.pass = true;
    json rows = json::array();
    double worst = 0;
    for (double q : {0.5, 0.25}) {
        auto d = harmonic_decay_check(h, {0, 0}, q * R, R);
        double rel = std::abs(d.ratio / std::pow(q, 4) - 1);
        worst = std::max(worst, rel);
        r.pass = r.pass && rel <= 0.01;
        rows.push_back(json{{"rho_over_r", q}, {"ratio", d.ratio}, {"expected", std::pow(q, 4)}, {"relative_error", rel}});
    }
    r.measured = json{{"grid", grid_json(g)}, {"r", R}, {"rows", rows}};
    r.summary = "x1^2 - x2^2: worst relative deviation from (rho/r)^4 is " + fmt(worst);
    return r;
}

inline const std::vector<double>& graph_center() {
    static const std::vector<double> x = {0.1, -0.05};
    return x;
}

inline CriterionResult excess_decay(Inputs& in) {
    CriterionResult r;
    const auto& G = in.graph_at(1);
    const double r0 = 0.8;
    auto t = excess_decay_sweep(G.u, graph_center(), r0, 3);
    const double bound = std::pow(2.0, -1.6);
    r.pass = !t.exact_zero && t.excess[0] <= 1e-3 && t.worst_ratio() <= bound && t.slope >= 1.8 && t.slope <= 2.2;
    r.measured = json{{"input", G.to_json()}, {"x", graph_center()}, {"r0", r0}, {"ratio_bound", bound}, {"sweep", t.to_json()}};
    r.summary = "E(B_r0) " + fmt(t.excess[0]) + ", worst step ratio " + fmt(t.worst_ratio()) + " (bound " + fmt(bound) +
                "), slope " + fmt(t.slope);
    return r;
}

inline CriterionResult lipschitz_approx(Inputs& in) {
    CriterionResult r;
    const double rad = 0.4, gamma = 1.0 / 16;
    r.pass = true;
    json rows = json::array();
    double c[2] = {0, 0};
    std::string worst;
    for (int which = 0; which < 2; ++which) {
        const auto& G = in.graph_at(which);
        const GridField& v = G.u;
        const double E = scaled_cylindrical_excess(v, graph_center(), rad);
        LipApproxOptions lo;
        lo.gamma = gamma;
        lo.lambda = gamma;
        lo.exact_lip = true;
        auto la = lipschitz_approximation(v, graph_center(), rad, E, lo);
        std::vector<std::size_t> wn;
        for (std::size_t i = 0; i < la.w.size(); ++i)
            if (la.w.active(i)) wn.push_back(i);
        const double lip_w = pairwise_lipschitz(la.w, wn);
        const double Eg = std::pow(E, gamma);
        c[which] = la.bad_measure / (std::pow(rad, v.m) * std::pow(E, 1 + gamma));
        bool ok = la.lip_on_K <= Eg && lip_w <= std::sqrt(double(v.n)) * Eg * 1.01;
        r.pass = r.pass && ok;
        rows.push_back(json{{"grid", grid_json(G.grid)},
                            {"E", E},
                            {"E_gamma", Eg},
                            {"lip_on_K", la.lip_on_K},
                            {"lip_w", lip_w},
                            {"bad_measure", la.bad_measure},
                            {"bad_constant", c[which]},
                            {"rho", la.rho},
                            {"K_size", la.K_size},
                            {"maximal_bounded", la.maximal_bounded},
                            {"pass", ok}});
        if (which == 1)
            worst = "Lip(v|K) " + fmt(la.lip_on_K) + ", Lip(w) " + fmt(lip_w) + " vs E^gamma " + fmt(Eg);
    }
    const bool st = stable(c[0], c[1]);
    r.pass = r.pass && st;
    r.measured = json{{"input", in.graph_at(1).to_json()}, {"x", graph_center()}, {"r", rad}, {"gamma", gamma},
                      {"lambda", gamma}, {"rows", rows}, {"bad_constant_stable", st}};
    r.summary = worst + ", bad-set constants " + fmt(c[0]) + " / " + fmt(c[1]);
    return r;
}

inline CriterionResult affine_fixed_point(Inputs& in) {
    CriterionResult r;
    Params P;
    P.m = 2;
    P.n = 2;
    P.cube_samples = 2;
    P.glue_samples = 4;
    P.resolve();
    const GridSpec g = square(121, 1.5);
    auto u = GridField::sample(2, g.dims, g.origin, g.h, [](const double* x, double* v) {
        v[0] = 0.12 * x[0] - 0.05 * x[1] + 0.3;
        v[1] = -0.04 * x[0] + 0.09 * x[1] - 0.1;
    });
    in.say("affine center manifold, levels " + std::to_string(P.N0) + "-" + std::to_string(P.k_max));
    CmOptions o;
    o.estimates = false;
    auto run = run_center_manifold(u, P, o);
    r.pass = P.N0 == 5 && run.levels.size() == 4;
    json rows = json::array();
    double worst = 0;
    for (auto& lv : run.levels) {
        double d = cm_norm_report(lv.zeta, u, run.P, run.E, lv.k).dist_u;
        worst = std::max(worst, d);
        r.pass = r.pass && d <= 1e-10;
        rows.push_back(json{{"k", lv.k}, {"c0_distance", d}});
    }
    r.measured = json{{"params", P.to_json()}, {"grid", grid_json(g)}, {"E", run.E}, {"levels", rows}};
    r.summary = "max_k ||zeta_k - u||_C0 " + fmt(worst) + " over k = " + std::to_string(P.N0) + ".." + std::to_string(P.k_max);
    return r;
}

inline CriterionResult cm_scaling(Inputs& in) {
    CriterionResult r;
    auto& S = in.sweep_members();
    std::vector<double> vals;
    json rows = json::array();
    for (auto& s : S) {
        double mx = 0;
        for (auto& n : s.norms) mx = std::max(mx, n.c2beta_scaled);
        vals.push_back(mx);
        rows.push_back(json{{"target", s.target}, {"E", s.run.E}, {"max_c2beta_scaled", mx}});
    }
    const double sp = spread(vals);
    r.pass = sp < 3;
    r.measured = json{{"rows", rows}, {"spread", sp}};
    r.summary = "max_k ||D zeta_k||_C2b / E^1/2 varies by a factor " + fmt(sp) + " across the sweep";
    return r;
}

inline CriterionResult cm_convergence(Inputs& in) {
    CriterionResult r;
    auto& S = in.sweep_members();
    r.pass = true;
    json rows = json::array();
    double worst = 0;
    for (auto& s : S) {
        std::vector<double> d;
        bool dec = true;
        for (auto& n : s.norms) d.push_back(n.dist_u);
        for (std::size_t i = 1; i < d.size(); ++i) dec = dec && d[i] < d[i - 1];
        const double fin = d.empty() ? 1e300 : d.back() / std::sqrt(s.run.E);
        worst = std::max(worst, fin);
        const bool ok = dec && !d.empty() && fin <= 1e-2;
        r.pass = r.pass && ok;
        rows.push_back(json{{"target", s.target}, {"E", s.run.E}, {"c0_distance", d}, {"strictly_decreasing", dec},
                            {"final_over_sqrtE", fin}, {"pass", ok}});
    }
    r.measured = json{{"rows", rows}};
    r.summary = "||zeta_k - u||_C0 strictly decreasing; worst final / E^1/2 " + fmt(worst);
    return r;
}

inline CriterionResult cube_ratios(Inputs& in) {
    CriterionResult r;
    auto& S = in.sweep_members();
    r.pass = true;
    json rows = json::array();
    double growth = 0;
    for (auto& s : S)
        for (const char* name : {"z_minus_f_L1", "laplacian_z"}) {
            auto& R = s.report.get(name);
            const double g = R.worst_median_growth();
            growth = std::max(growth, g);
            const bool ok = R.finite && g <= 2;
            r.pass = r.pass && ok;
            rows.push_back(json{{"target", s.target}, {"ratio", name}, {"max", R.max}, {"level_median", R.level_median},
                                {"worst_median_growth", g}, {"pass", ok}});
        }
    r.measured = json{{"rows", rows}};
    r.summary = "ratios finite; worst level-to-level median growth " + fmt(growth);
    return r;
}

inline CriterionResult cube_stability(Inputs& in) {
    CriterionResult r;
    auto& S = in.sweep_members();
    r.pass = true;
    json rows = json::array();
    double worst = 0;
    std::string worst_name;
    for (auto& R0 : S.front().report.series) {
        const std::string& name = R0.name;
        if (name.rfind("father_son_", 0) != 0 && name.rfind("neighbor_", 0) != 0) continue;
        std::vector<double> mx, perE;
        bool fin = true;
        for (auto& s : S) {
            auto& R = s.report.get(name);
            fin = fin && R.finite;
            mx.push_back(R.max);
            perE.push_back(R.max / s.run.E);
        }
        const double sp = spread(mx);
        const bool ok = fin && sp <= 3;
        r.pass = r.pass && ok;
        if (sp > worst) worst = sp, worst_name = name;
        // max/E is a diagnostic only: it shows whether the ratios carry one extra power of E
        rows.push_back(json{{"ratio", name}, {"finite", fin}, {"max", mx}, {"spread", sp}, {"max_over_E", perE},
                            {"spread_of_max_over_E", spread(perE)}, {"pass", ok}});
    }
    r.measured = json{{"targets", json::array({1e-2, 1e-3, 1e-4})}, {"rows", rows}};
    r.summary = "all finite; worst E-sweep spread " + fmt(worst) + " (" + worst_name + ")";
    return r;
}

// (1 - |x - c|^2 / s^2)^3 inside the disk, zero outside.
inline GridField bump_field(const GridField& like, const double* c, double s, int comp) {
    return GridField::sample(like.n, like.dims, like.origin, like.h, [&](const double* x, double* v) {
        double d2 = 0;
        for (int a = 0; a < like.m; ++a) d2 += (x[a] - c[a]) * (x[a] - c[a]);
        for (int k = 0; k < like.n; ++k) v[k] = 0;
        if (d2 < s * s) v[comp] = std::pow(1 - d2 / (s * s), 3);
    });
}

inline std::vector<GridField> bump_battery(const GridField& f, Stream& rng, int count = 10) {
    std::vector<GridField> out;
    const double L = 0.5 * (f.dims[0] - 1) * f.h, mid = f.origin[0] + L;
    for (int t = 0; t < count; ++t) {
        const double s = rng.uniform(0.1, 0.3) * L;
        const double reach = L - s - 3 * f.h;
        double c[3];
        for (int a = 0; a < f.m; ++a) c[a] = mid + rng.uniform(-reach, reach);
        out.push_back(bump_field(f, c, s, t % f.n));
    }
    return out;
}

inline CriterionResult first_variation(Inputs& in) {
    CriterionResult r;
    r.pass = true;
    json rows = json::array();
    double worst = 0;
    auto check = [&](const std::string& label, const GridField& u, double tol, const json& cfg) {
        Stream rng(in.seed, "first-variation/" + label);
        const double res = first_variation_residual(u, bump_battery(u, rng));
        const bool ok = res <= tol;
        r.pass = r.pass && ok;
        if (tol > 1e-10) worst = std::max(worst, res);
        rows.push_back(json{{"input", label}, {"config", cfg}, {"residual", res}, {"tolerance", tol}, {"pass", ok}});
        return res;
    };
    for (int which = 0; which < 2; ++which) {
        const auto& G = in.graph_at(which);
        check("trig-" + std::to_string(G.grid.dims[0]), G.u, 1e-8, G.to_json());
    }
    for (auto& s : in.sweep_members()) check("saddle-E" + fmt(s.target), s.graph.u, 1e-8, s.graph.to_json());
    Preset ap;
    ap.kind = "affine";
    ap.slope = {0.12, -0.05, -0.04, 0.09};
    ap.offset = {0.3, -0.1};
    auto A = generate(ap, 2, square(65, 1.0));
    const double aff = check("affine", A.u, 1e-10, A.to_json());
    r.measured = json{{"test_fields", 10}, {"rows", rows}};
    r.summary = "worst residual " + fmt(worst) + " on generated minimizers, " + fmt(aff) + " on the affine graph";
    return r;
}

inline CriterionResult interpolation(Inputs& in) {
    CriterionResult r;
    Stream rng(in.seed, "interpolation");
    const int members = 50;
    const double rr = 0.3, s = 0.6, kappa = 0.5;
    r.pass = true;
    json rows = json::array();
    double worst = 0, Cmax = 0;
    for (int t = 0; t < members; ++t) {
        double c[10];
        for (double& v : c) v = rng.uniform(-1, 1);
        const double amp = rng.uniform(0, 1e-3), w0 = rng.uniform(-6, 6), w1 = rng.uniform(-6, 6), ph = rng.uniform(0, 6.283185307179586);
        auto fn = [&](const double* x, double* v) {
            const double X = x[0], Y = x[1];
            v[0] = c[0] + c[1] * X + c[2] * Y + c[3] * X * X + c[4] * X * Y + c[5] * Y * Y + c[6] * X * X * X +
                   c[7] * X * X * Y + c[8] * X * Y * Y + c[9] * Y * Y * Y + amp * std::sin(w0 * X + w1 * Y + ph);
        };
        double C[2];
        for (int i = 0; i < 2; ++i) {
            const GridSpec g = square(i ? 129 : 65, 1.0);
            C[i] = interpolation_inequality_check(GridField::sample(1, g.dims, g.origin, g.h, fn), {0, 0}, rr, s, kappa).C;
        }
        const double rel = std::abs(C[0] - C[1]) / std::max(C[0], C[1]);
        const bool ok = C[0] > 0 && stable(C[0], C[1]);
        r.pass = r.pass && ok;
        worst = std::max(worst, rel);
        Cmax = std::max({Cmax, C[0], C[1]});
        rows.push_back(json{{"member", t}, {"C_h32", C[0]}, {"C_h64", C[1]}, {"relative_change", rel}, {"pass", ok}});
    }
    r.measured = json{{"members", members}, {"r", rr}, {"s", s}, {"kappa", kappa}, {"domain", "[-1,1]^2"},
                      {"battery_C", Cmax}, {"rows", rows}};
    r.summary = "battery C " + fmt(Cmax) + ", worst change under h-halving " + fmt(100 * worst) + "%";
    return r;
}

}  // namespace suite

// Runs criteria 1-13 (or the subset in opt.only).
inline SuiteReport run_suite(const SuiteOptions& opt) {
    using Fn = CriterionResult (*)(suite::Inputs&);
    static const Fn fns[13] = {suite::excess_identity, suite::minors_gram,        suite::mvector_inner_check,
                               suite::harmonic_decay,  suite::excess_decay,       suite::lipschitz_approx,
                               suite::affine_fixed_point, suite::cm_scaling,      suite::cm_convergence,
                               suite::cube_ratios,     suite::cube_stability,     suite::first_variation,
                               suite::interpolation};
    suite::Inputs in;
    in.seed = opt.seed;
    in.log = opt.log;
    SuiteReport rep;
    rep.seed = opt.seed;
    for (int id = 1; id <= 13; ++id) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), id) == opt.only.end()) continue;
        auto t0 = std::chrono::steady_clock::now();
        CriterionResult r = fns[id - 1](in);
        r.id = id;
        r.name = criterion_names()[id - 1];
        if (opt.log) {
            double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            opt.log(std::string(r.pass ? "PASS " : "FAIL ") + std::to_string(id) + " " + r.name + " (" + suite::fmt(sec) + " s)");
        }
        rep.results.push_back(std::move(r));
    }
    return rep;
}

// Criteria 1-13 twice with the same seed, then criterion 14 on the two serialized reports.
inline SuiteReport run_acceptance(SuiteOptions opt) {
    opt.only.clear();
    auto first = run_suite(opt);
    auto second = run_suite(opt);
    const std::string a = first.to_json().dump(2), b = second.to_json().dump(2);
    const std::string ca = first.to_csv().str(), cb = second.to_csv().str();
    CriterionResult d;
    d.id = 14;
    d.name = criterion_names()[13];
    d.pass = a == b && ca == cb;
    d.measured = json{{"json_bytes", a.size()}, {"csv_bytes", ca.size()}, {"json_identical", a == b}, {"csv_identical", ca == cb}};
    d.summary = std::string(d.pass ? "two runs byte-identical" : "runs differ") + " (" + std::to_string(a.size()) + " JSON bytes)";
    if (opt.log) opt.log(std::string(d.pass ? "PASS " : "FAIL ") + "14 determinism");
    first.results.push_back(std::move(d));
    return first;
}

}  // namespace cmlab
