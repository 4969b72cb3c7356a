/// Quantitative checks on minimal graphs: dyadic excess decay, mean oscillation, Morrey averages,
/// harmonic decay and blow-up, the Taylor bound for the excess and the interpolation inequality.

#pragma once

#include "cmlab/area.hpp"
#include "cmlab/minimize.hpp"

namespace cmlab {

// Least-squares slope of ys against xs.
inline double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t N = xs.size();
    if (N < 2 || ys.size() != N) throw ConfigError("a slope fit needs at least two points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < N; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= N;
    my /= N;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < N; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

// ---------------------------------------------------------------------------------------------
// Dyadic excess decay

struct DecayTable {
    Vec center;
    std::vector<double> radii;
    std::vector<Plane> planes;
    std::vector<double> excess;
    std::vector<double> ratios;      // E(r_{j+1}) / E(r_j)
    std::vector<double> tilt_gaps;   // |π_{j+1} - π_j| as unit m-vectors
    double slope = 0;                // d log E / d log r
    bool exact_zero = false;         // every excess at roundoff level; slope and ratios undefined
    double tilt_constant = 0;        // max tilt gap / E(r_j)^{1/2}

    double worst_ratio() const {
        double w = 0;
        for (double r : ratios) w = std::max(w, r);
        return w;
    }

    json to_json() const {
        json j;
        j["center"] = std::vector<double>(center.data(), center.data() + center.size());
        j["radii"] = radii;
        j["excess"] = excess;
        j["ratios"] = ratios;
        j["tilt_gaps"] = tilt_gaps;
        j["slope"] = exact_zero ? json(nullptr) : json(slope);
        j["exact_zero"] = exact_zero;
        j["tilt_constant"] = tilt_constant;
        json pl = json::array();
        for (auto& P : planes) pl.push_back(plane_to_json(P));
        j["planes"] = pl;
        return j;
    }
};

// Optimal spherical excess at r0 2^{-j}, j = 0..depth, each radius seeded with the previous plane.
inline DecayTable excess_decay_sweep(const GraphCache& G, const Vec& p, double r0, int depth, double zero_floor = 1e-14) {
    if (depth < 1) throw ConfigError("decay sweep depth must be at least 1");
    if (!(r0 > 0)) throw ConfigError("decay sweep radius must be positive");
    DecayTable t;
    t.center = p;
    std::vector<double> seed;
    for (int j = 0; j <= depth; ++j) {
        const double r = std::ldexp(r0, -j);
        auto op = optimal_plane(G, p, r, seed.empty() ? nullptr : seed.data());
        seed.assign(op.plane.A.data(), op.plane.A.data() + op.plane.A.size());
        t.radii.push_back(r);
        t.planes.push_back(op.plane);
        t.excess.push_back(std::max(0.0, op.report.value));
    }
    t.exact_zero = true;
    for (double e : t.excess) t.exact_zero = t.exact_zero && e <= zero_floor;
    for (int j = 0; j < depth; ++j) {
        double gap = std::sqrt(std::max(0.0, mvector_gap(t.planes[j].A, t.planes[j + 1].A)));
        t.tilt_gaps.push_back(gap);
        if (t.exact_zero) continue;
        t.ratios.push_back(safe_ratio(t.excess[j + 1], t.excess[j]));
        t.tilt_constant = std::max(t.tilt_constant, safe_ratio(gap, std::sqrt(t.excess[j])));
    }
    if (!t.exact_zero) {
        std::vector<double> lx, ly;
        for (std::size_t j = 0; j < t.radii.size(); ++j) {
            if (t.excess[j] <= 0) throw NumericalError("vanishing excess inside a nonzero decay sweep");
            lx.push_back(std::log(t.radii[j]));
            ly.push_back(std::log(t.excess[j]));
        }
        t.slope = fit_slope(lx, ly);
    }
    return t;
}
inline DecayTable excess_decay_sweep(const GridField& u, const std::vector<double>& x, double r0, int depth) {
    return excess_decay_sweep(GraphCache(u), graph_point(u, x), r0, depth);
}

// ---------------------------------------------------------------------------------------------
// Mean oscillation

// ∫_{B_r(x)} |Du - A|^2 with A row-major n x m.
inline double gradient_oscillation(const GridField& u, const std::vector<double>& x, double r, const std::vector<double>& A) {
    Region R = Region::disk(x, r);
    require_region_inside(u, R);
    std::vector<double> g(u.n * u.m);
    double s = 0;
    for (auto q : quadrature(u, R)) {
        gradient_at(u, q.i, g.data());
        double t = 0;
        for (int k = 0; k < u.n * u.m; ++k) t += (g[k] - A[k]) * (g[k] - A[k]);
        s += q.w * t;
    }
    return s;
}

struct OscillationConfig {
    std::vector<double> x;
    double r = 0;
};

struct OscillationReport {
    double C = 0;  // max lhs / (r^m E(B_{4r}))
    std::vector<json> rows;

    json to_json() const { return {{"C", C}, {"configurations", rows}}; }
};

// ∫_{B_r(x)} |Du - (Du)_{x,r}|^2 against r^m times the optimal spherical excess in B_{4r}(x, u(x)).
inline OscillationReport mean_oscillation_check(const GridField& u, const std::vector<OscillationConfig>& configs) {
    GraphCache G(u);
    OscillationReport rep;
    for (auto& c : configs) {
        if (!(c.r > 0)) throw ConfigError("oscillation radius must be positive");
        require_region_inside(u, Region::disk(c.x, 4 * c.r));
        auto A = average_gradient(u, c.x, c.r);
        double lhs = gradient_oscillation(u, c.x, c.r, A);
        double E = optimal_plane(G, graph_point(u, c.x), 4 * c.r).report.value;
        double ratio = safe_ratio(lhs, std::pow(c.r, u.m) * E);
        rep.C = std::max(rep.C, ratio);
        rep.rows.push_back({{"x", c.x}, {"r", c.r}, {"lhs", lhs}, {"excess_4r", E}, {"ratio", ratio}});
    }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Morrey averages

struct MorreyReport {
    std::vector<double> radii;
    std::vector<std::vector<double>> averages;  // (Du)_{x,r_k}
    std::vector<double> oscillation;            // (r^{-m} ∫_{B_r} |Du - (Du)_{x,r}|^2)^{1/2}
    std::vector<double> gaps;                   // |(Du)_{x,r_k} - (Du)_{x,r_{k+1}}|
    double alpha = 0;                           // from oscillation ~ r^α
    bool exact_zero = false;
    double gap_constant = 0;                    // max gap_k / oscillation_k
    double lebesgue_gap = 0;                    // |(Du)_{x,r_last} - Du(x)|
    double lebesgue_constant = 0;               // lebesgue_gap / (r_last^α oscillation_0 / r_0^α)
    double holder_Du = 0;                       // direct [Du]_{α, B_{r_0}(x)}

    json to_json() const {
        json j;
        j["radii"] = radii;
        j["averages"] = averages;
        j["oscillation"] = oscillation;
        j["gaps"] = gaps;
        j["alpha"] = exact_zero ? json(nullptr) : json(alpha);
        j["exact_zero"] = exact_zero;
        j["gap_constant"] = gap_constant;
        j["lebesgue_gap"] = lebesgue_gap;
        j["lebesgue_constant"] = lebesgue_constant;
        j["holder_Du"] = holder_Du;
        return j;
    }
};

// Dyadic averages of Du at x. The exponent is fitted to the square mean oscillation, which is what the
// iteration consumes; the gaps between consecutive averages are reported against it.
inline MorreyReport morrey_iteration(const GridField& u, const std::vector<double>& x, double r0, int depth,
                                     double zero_floor = 1e-12) {
    if (depth < 1) throw ConfigError("Morrey depth must be at least 1");
    MorreyReport rep;
    const int N = u.n * u.m;
    for (int k = 0; k <= depth; ++k) {
        const double r = std::ldexp(r0, -k);
        auto A = average_gradient(u, x, r);
        rep.radii.push_back(r);
        rep.oscillation.push_back(std::sqrt(gradient_oscillation(u, x, r, A) / std::pow(r, u.m)));
        rep.averages.push_back(A);
    }
    for (int k = 0; k < depth; ++k) {
        double s = 0;
        for (int i = 0; i < N; ++i) s += std::pow(rep.averages[k][i] - rep.averages[k + 1][i], 2);
        rep.gaps.push_back(std::sqrt(s));
    }
    rep.exact_zero = true;
    for (double o : rep.oscillation) rep.exact_zero = rep.exact_zero && o <= zero_floor;
    std::vector<double> lo(u.m), hi(u.m);
    for (int a = 0; a < u.m; ++a) {
        lo[a] = x[a] - r0;
        hi[a] = x[a] + r0;
    }
    const GridField Dsq = gradient(restrict_to_box(u, lo, hi));
    std::vector<double> Du(N);
    sample_linear(Dsq, x.data(), Du.data());
    double lg = 0;
    for (int i = 0; i < N; ++i) lg += std::pow(rep.averages.back()[i] - Du[i], 2);
    rep.lebesgue_gap = std::sqrt(lg);
    if (rep.exact_zero) return rep;
    std::vector<double> lx, ly;
    for (int k = 0; k <= depth; ++k) {
        lx.push_back(std::log(rep.radii[k]));
        ly.push_back(std::log(rep.oscillation[k]));
    }
    rep.alpha = fit_slope(lx, ly);
    for (int k = 0; k < depth; ++k) rep.gap_constant = std::max(rep.gap_constant, safe_ratio(rep.gaps[k], rep.oscillation[k]));
    const double scale = rep.oscillation[0] * std::pow(rep.radii.back() / r0, rep.alpha);
    rep.lebesgue_constant = safe_ratio(rep.lebesgue_gap, scale);
    rep.holder_Du = holder_seminorm(Dsq, 0, std::clamp(rep.alpha, 1e-3, 1.0), 2 * u.h, 2 * r0);
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Harmonic functions

struct HarmonicDecayOptions {
    double harmonic_tol = 1e-8;  // on the max (2m+1)-point Laplacian inside B_r(x)
    bool analytic = false;       // skip the discrete check (sampled analytic harmonic function)
};

struct HarmonicDecay {
    double lhs = 0;        // ∫_{B_ρ} |Dh - (Dh)_{x,ρ}|^2
    double energy = 0;     // ∫_{B_r} |Dh|^2
    double ratio = 0;      // lhs / energy
    double rhs_bound = 0;  // (ρ/r)^{m+2}
    double C = 0;          // ratio / rhs_bound
    double laplacian = 0;

    json to_json() const {
        return {{"lhs", lhs}, {"energy", energy}, {"ratio", ratio}, {"rhs_bound", rhs_bound}, {"C", C}, {"laplacian", laplacian}};
    }
};

inline HarmonicDecay harmonic_decay_check(const GridField& h, const std::vector<double>& x, double rho, double r,
                                          const HarmonicDecayOptions& opt = {}) {
    if (!(rho > 0 && rho < r)) throw ConfigError("need 0 < rho < r");
    Region big = Region::disk(x, r);
    require_region_inside(h, big);
    HarmonicDecay d;
    GridField L = laplacian(h);
    double p[3];
    for (std::size_t i = 0; i < L.size(); ++i) {
        if (!L.active(i)) continue;
        L.point(i, p);
        if (big.contains(p, h.m)) d.laplacian = std::max(d.laplacian, point_norm(L.at(i), h.n));
    }
    if (!opt.analytic && d.laplacian > opt.harmonic_tol)
        throw DomainError("input is not discretely harmonic (Laplacian " + fmt_double(d.laplacian) + ")");
    d.lhs = gradient_oscillation(h, x, rho, average_gradient(h, x, rho));
    d.energy = dirichlet_energy(h, big);
    d.ratio = safe_ratio(d.lhs, d.energy);
    d.rhs_bound = std::pow(rho / r, h.m + 2);
    d.C = d.ratio / d.rhs_bound;
    return d;
}

struct BlowupReport {
    GridField f;            // (v - avg) / E^{1/2} on the box
    GridField h;            // discrete harmonic function with the boundary values of f
    double w12_gap = 0;     // ‖f - h‖_{W^{1,2}} on the box
    double half_dirichlet = 0;    // ½ ∫ |Dv|^2
    double cylindrical = 0;       // ½ ∫ |T - π_0|^2 over the same box
    double energy_defect = 0;     // |half_dirichlet - cylindrical|

    json to_json() const {
        return {{"w12_gap", w12_gap}, {"half_dirichlet", half_dirichlet}, {"cylindrical_excess", cylindrical},
                {"energy_defect", energy_defect}};
    }
};

// Harmonic comparison on the square of half-width r around x.
inline BlowupReport harmonic_blowup_compare(const GridField& v, double E, const std::vector<double>& x, double r) {
    if (!(E > 0)) throw DomainError("blow-up needs a positive excess");
    std::vector<double> lo(v.m), hi(v.m);
    for (int a = 0; a < v.m; ++a) {
        lo[a] = x[a] - r;
        hi[a] = x[a] + r;
    }
    GridField sq = restrict_to_box(v, lo, hi);
    for (int d : sq.dims)
        if (d < 5) throw ConfigError("blow-up box must span at least 5 samples per axis");
    BlowupReport rep;
    std::vector<double> mean(v.n, 0.0);
    double W = 0;
    for (auto q : quadrature(sq, Region::whole())) {
        for (int c = 0; c < v.n; ++c) mean[c] += q.w * sq.at(q.i)[c];
        W += q.w;
    }
    rep.f = sq;
    const double s = 1 / std::sqrt(E);
    for (std::size_t i = 0; i < sq.size(); ++i)
        for (int c = 0; c < v.n; ++c) rep.f.at(i)[c] = (sq.at(i)[c] - mean[c] / W) * s;
    rep.h = harmonic_extension(rep.f);
    GridField d = rep.f;
    for (std::size_t k = 0; k < d.values.size(); ++k) d.values[k] -= rep.h.values[k];
    double l2 = 0;
    for (auto q : quadrature(d, Region::whole()))
        for (int c = 0; c < d.n; ++c) l2 += q.w * d.at(q.i)[c] * d.at(q.i)[c];
    rep.w12_gap = std::sqrt(l2 + dirichlet_energy(d));
    rep.half_dirichlet = 0.5 * dirichlet_energy(sq);
    GraphCache G(sq);
    auto nodes = quadrature(sq, Region::whole());
    rep.cylindrical = 0.5 * excess_integral(G, nodes, Plane::horizontal(v.m, v.n));
    rep.energy_defect = std::abs(rep.half_dirichlet - rep.cylindrical);
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Excess of a graph against the plane of its average slope

struct TaylorExcess {
    double lhs = 0;         // cylindrical excess at the plane of A = (Dw)_{x,r}
    double oscillation = 0; // ½ ∫ |Dw - A|^2
    double lip = 0;
    double energy = 0;      // ∫ |Dw|^2
    double C = 0;           // smallest C with lhs <= oscillation + C lip energy

    json to_json() const {
        return {{"lhs", lhs}, {"oscillation", oscillation}, {"lip", lip}, {"energy", energy}, {"C", C}};
    }
};

inline TaylorExcess taylor_excess_bound_check(const GridField& w, const std::vector<double>& x = {}, double r = 0.5) {
    std::vector<double> c = x.empty() ? std::vector<double>(w.m, 0.0) : x;
    Region R = Region::disk(c, r);
    require_region_inside(w, R);
    TaylorExcess t;
    auto A = average_gradient(w, c, r);
    GraphCache G(w);
    t.lhs = cylindrical_excess(G, c, r, Plane::through(Vec::Zero(w.m + w.n), slope_from(A.data(), w.n, w.m))).value;
    t.oscillation = 0.5 * gradient_oscillation(w, c, r, A);
    t.lip = lipschitz_bound_multilinear(w, R);
    if (t.lip > 2) throw DomainError("Lipschitz constant " + fmt_double(t.lip) + " above 2");
    t.energy = dirichlet_energy(w, R);
    t.C = std::max(0.0, safe_ratio(t.lhs - t.oscillation, t.lip * t.energy));
    return t;
}

// ---------------------------------------------------------------------------------------------
// Interpolation inequality on disks

struct InterpolationReport {
    double l1 = 0;              // ‖f‖_{L1(B_s)}
    double holder3 = 0;         // [D^3 f]_{κ, B_s}
    double sup[4] = {0, 0, 0, 0};    // ‖D^j f‖_{C0(B_r)}
    double C_j[4] = {0, 0, 0, 0};    // sup_j / (r^{-m-j} l1 + r^{3+κ-j} holder3)
    double C = 0;

    json to_json() const {
        return {{"l1", l1},
                {"holder3", holder3},
                {"sup", std::vector<double>(sup, sup + 4)},
                {"C_j", std::vector<double>(C_j, C_j + 4)},
                {"C", C}};
    }
};

inline InterpolationReport interpolation_inequality_check(const GridField& f, const std::vector<double>& x, double r, double s,
                                                          double kappa) {
    if (!(r > 0 && r < s)) throw ConfigError("need 0 < r < s");
    if (!(kappa > 0 && kappa <= 1)) throw ConfigError("kappa must lie in (0,1]");
    Region Bs = Region::disk(x, s), Br = Region::disk(x, r);
    // one-sided stencils spoil one more layer per derivative, so the square carries a margin of 4 samples
    const double pad = s + 4 * f.h;
    require_region_inside(f, Region::disk(x, pad));
    InterpolationReport rep;
    rep.l1 = l1_norm(f, Bs);
    std::vector<double> lo(f.m), hi(f.m);
    for (int a = 0; a < f.m; ++a) {
        lo[a] = x[a] - pad;
        hi[a] = x[a] + pad;
    }
    GridField sq = restrict_to_box(f, lo, hi);
    GridField D = sq;
    double p[3];
    for (int j = 0; j <= 3; ++j) {
        if (j > 0) D = gradient(D);
        rep.sup[j] = c0_norm(D, Br);
    }
    GridField D3 = D;
    D3.mask.assign(D3.size(), 0);
    for (std::size_t i = 0; i < D3.size(); ++i) {
        D3.point(i, p);
        D3.mask[i] = Bs.contains(p, f.m) ? 1 : 0;
    }
    rep.holder3 = holder_seminorm(D3, 0, kappa, 2 * f.h, 2 * s);
    for (int j = 0; j <= 3; ++j) {
        double rhs = std::pow(r, -f.m - j) * rep.l1 + std::pow(r, 3 + kappa - j) * rep.holder3;
        rep.C_j[j] = safe_ratio(rep.sup[j], rhs);
        rep.C = std::max(rep.C, rep.C_j[j]);
    }
    return rep;
}

}  // namespace cmlab
