#pragma once
/// Dyadic cubes, per-cube planes and approximations, interpolating functions and the glued
/// interpolation ζ_k, with the scaled estimates of every stage.

#include "cmlab/lipapprox.hpp"

#include <algorithm>
#include <map>

namespace cmlab {

struct Params {
    int m = 2, n = 1;
    double delta = 0.05, gamma = 0.25, lambda = -1, kappa = 0.05, vartheta = 0.1;
    int k_max = -1;              // < 0: N0 + 3
    double eps_bar = 0.1;        // largest per-cube excess handed to the Lipschitz approximation
    int cube_samples = 4;        // per-cube grid samples per sidelength
    int glue_samples = 8;        // samples per sidelength on the local grid of g_L
    double reparam_tol = 1e-15;
    double excess_radius = 1;    // E is the optimal spherical excess of gr(u) in B_{excess_radius}(0, u(0))
    double flat_excess = 1e-14;  // below this E the scaled ratios are reported as 0

    // derived
    double sigma = 0, M0 = 0, beta = 0;
    int N0 = 0;

    // Fills the derived fields and enforces the invariants.
    Params& resolve() {
        if (m < 1 || m > 2) throw ConfigError("the center-manifold construction supports m = 1 and m = 2");
        if (n < 1 || m + n > 6) throw ConfigError("n must be positive with m + n <= 6");
        for (double v : {delta, gamma, kappa, vartheta, eps_bar})
            if (!(v > 0)) throw ConfigError("delta, gamma, kappa, vartheta and eps_bar must be positive");
        if (lambda < 0) lambda = gamma;
        if (!(lambda > 0)) throw ConfigError("lambda must be positive");
        sigma = 1 / (2 * std::sqrt(double(m)));
        M0 = std::sqrt(double(n));
        beta = (1 + gamma) * (1 - delta) - 1;
        if (!(beta > 0)) throw ConfigError("beta = (1+gamma)(1-delta) - 1 must be positive (delta < gamma/(1+gamma))");
        if (!(kappa < vartheta)) throw ConfigError("kappa must be smaller than vartheta");
        N0 = 0;
        while (!(32 * M0 * sigma * std::ldexp(1.0, -N0) < 1)) ++N0;
        if (k_max < 0) k_max = N0 + 3;
        if (k_max < N0) throw ConfigError("k_max must be at least N0 = " + std::to_string(N0));
        if (k_max > 12) throw ConfigError("k_max above 12 is not supported");
        if (cube_samples < 2) throw ConfigError("cube_samples must be at least 2");
        if (glue_samples < 2) throw ConfigError("glue_samples must be at least 2");
        if (!(reparam_tol > 0) || !(excess_radius > 0) || !(flat_excess >= 0)) throw ConfigError("tolerances must be positive");
        return *this;
    }

    double ell(int k) const { return 2 * sigma * std::ldexp(1.0, -k); }

    json to_json() const {
        json j;
        j["m"] = m;
        j["n"] = n;
        j["sigma"] = sigma;
        j["M0"] = M0;
        j["N0"] = N0;
        j["k_max"] = k_max;
        j["delta"] = delta;
        j["gamma"] = gamma;
        j["lambda"] = lambda;
        j["beta"] = beta;
        j["kappa"] = kappa;
        j["vartheta"] = vartheta;
        j["eps_bar"] = eps_bar;
        j["cube_samples"] = cube_samples;
        j["glue_samples"] = glue_samples;
        j["reparam_tol"] = reparam_tol;
        j["excess_radius"] = excess_radius;
        j["flat_excess"] = flat_excess;
        return j;
    }

    // Reads the user-settable fields (derived ones are ignored) and resolves.
    static Params from_json(const json& j) {
        Params P;
        static const std::vector<std::string> known = {"m", "n", "delta", "gamma", "lambda", "kappa", "vartheta", "k_max",
                                                       "eps_bar", "cube_samples", "glue_samples", "reparam_tol",
                                                       "excess_radius", "flat_excess", "sigma", "M0", "N0", "beta"};
        if (!j.is_object()) throw ConfigError("params must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                throw ConfigError("unknown parameter '" + it.key() + "'");
        try {
            P.m = j.value("m", P.m);
            P.n = j.value("n", P.n);
            P.delta = j.value("delta", P.delta);
            P.gamma = j.value("gamma", P.gamma);
            P.lambda = j.value("lambda", P.lambda);
            P.kappa = j.value("kappa", P.kappa);
            P.vartheta = j.value("vartheta", P.vartheta);
            P.k_max = j.value("k_max", P.k_max);
            P.eps_bar = j.value("eps_bar", P.eps_bar);
            P.cube_samples = j.value("cube_samples", P.cube_samples);
            P.glue_samples = j.value("glue_samples", P.glue_samples);
            P.reparam_tol = j.value("reparam_tol", P.reparam_tol);
            P.excess_radius = j.value("excess_radius", P.excess_radius);
            P.flat_excess = j.value("flat_excess", P.flat_excess);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad parameter value: ") + e.what());
        }
        P.resolve();
        return P;
    }
};

// ---------------------------------------------------------------------------------------------
// Dyadic grid

struct DyadicCube {
    int level = 0;
    std::array<int, 3> index{};
    std::vector<double> center;
    double ell = 0;
    long father = -1;             // ordinal at level - 1
    std::vector<long> children;   // ordinals at level + 1
    std::vector<long> neighbors;  // ordinals at the same level

    std::string label() const {
        std::string s = "cube (k=" + std::to_string(level) + "; ";
        for (std::size_t a = 0; a < center.size(); ++a) s += (a ? "," : "") + std::to_string(index[a]);
        return s + ")";
    }
    bool contains(const double* x, double slack = 1e-12) const {
        for (std::size_t a = 0; a < center.size(); ++a)
            if (std::abs(x[a] - center[a]) > 0.5 * ell * (1 + slack)) return false;
        return true;
    }
};

struct Hierarchy {
    int m = 0, N0 = 0, k_max = 0;
    std::vector<std::vector<DyadicCube>> levels;  // levels[k - N0]

    const std::vector<DyadicCube>& level(int k) const { return levels.at(k - N0); }
    long ordinal(int k, const int* idx) const {
        long o = 0, side = 1L << k;
        for (int a = 0; a < m; ++a) {
            if (idx[a] < 0 || idx[a] >= side) return -1;
            o = o * side + idx[a];
        }
        return o;
    }
    std::size_t size() const {
        std::size_t s = 0;
        for (auto& l : levels) s += l.size();
        return s;
    }
};

inline Hierarchy build_grid(const Params& P) {
    Hierarchy H;
    H.m = P.m;
    H.N0 = P.N0;
    H.k_max = P.k_max;
    const int m = P.m;
    for (int k = P.N0; k <= P.k_max; ++k) {
        const long side = 1L << k;
        long count = 1;
        for (int a = 0; a < m; ++a) count *= side;
        std::vector<DyadicCube> cubes(count);
        const double ell = P.ell(k);
        for (long o = 0; o < count; ++o) {
            DyadicCube& c = cubes[o];
            c.level = k;
            c.ell = ell;
            c.center.resize(m);
            long r = o;
            for (int a = m - 1; a >= 0; --a) {
                c.index[a] = static_cast<int>(r % side);
                r /= side;
            }
            for (int a = 0; a < m; ++a) c.center[a] = -P.sigma + (c.index[a] + 0.5) * ell;
            int idx[3];
            if (k > P.N0) {
                for (int a = 0; a < m; ++a) idx[a] = c.index[a] / 2;
                c.father = H.ordinal(k - 1, idx);
            }
            if (k < P.k_max)
                for (int t = 0; t < (1 << m); ++t) {
                    for (int a = 0; a < m; ++a) idx[a] = 2 * c.index[a] + (t >> (m - 1 - a) & 1);
                    long side2 = side * 2, q = 0;
                    for (int a = 0; a < m; ++a) q = q * side2 + idx[a];
                    c.children.push_back(q);
                }
            int span = 1;
            for (int a = 0; a < m; ++a) span *= 3;
            for (int t = 0; t < span; ++t) {
                int r3 = t;
                bool self = true;
                for (int a = m - 1; a >= 0; --a) {
                    int d = r3 % 3 - 1;
                    r3 /= 3;
                    idx[a] = c.index[a] + d;
                    self = self && d == 0;
                }
                if (self) continue;
                long q = H.ordinal(k, idx);
                if (q >= 0) c.neighbors.push_back(q);
            }
        }
        H.levels.push_back(std::move(cubes));
    }
    return H;
}

// ---------------------------------------------------------------------------------------------
// Per-cube pipeline

namespace detail {
template <class F>
auto tag_errors(const DyadicCube& L, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        throw ConfigError(L.label() + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(L.label() + ": " + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(L.label() + ": " + e.what());
    }
}

inline GridSpec centered_spec(const std::vector<double>& c, int half, double h) {
    GridSpec s;
    for (double x : c) {
        s.dims.push_back(2 * half + 1);
        s.origin.push_back(x - half * h);
    }
    s.h = h;
    return s;
}

// Central sub-grid of f with `half` samples on each side of the middle node.
inline GridField central_crop(const GridField& f, int half) {
    std::vector<int> lo(f.m), hi(f.m);
    for (int a = 0; a < f.m; ++a) half = std::min(half, (f.dims[a] - 1) / 2);
    for (int a = 0; a < f.m; ++a) {
        int mid = (f.dims[a] - 1) / 2;
        lo[a] = mid - half;
        hi[a] = mid + half;
    }
    return subgrid(f, lo, hi);
}
}  // namespace detail

// Everything that depends on u alone.
struct CmContext {
    const GridField* u;
    Params P;
    GraphCache G;
    double lip_u = 0;
    Plane base;

    CmContext(const GridField& field, const Params& params)
        : u(&field), P(params), G(field), lip_u(G.max_slope), base(Plane::horizontal(field.m, field.n)) {
        if (field.m != P.m || field.n != P.n) throw ConfigError("field dimensions do not match m and n of the parameters");
        if (!field.mask.empty()) throw ConfigError("the center-manifold construction expects an unmasked field");
    }
};

struct CubePackage {
    DyadicCube cube;
    Vec p;
    Plane plane;
    double E_L = 0;
    double tilt = 0;           // |π_L - π_0| as unit m-vectors
    int plane_iterations = 0;
    GridField v;               // u over π_L on B_{8 M0 ℓ}, widened when E_L is large
    GridField f;               // π_L-approximation
    GridField z;               // tilted interpolating function f * φ_ℓ
    GridField g;               // interpolating function over π_0 on the doubled cube L'
    double h_cube = 0;
    bool spacing_ok = true;    // per-cube spacing at least the spacing of u
    double lip_on_K = 0, bad_measure = 0;
    bool maximal_bounded = false, lip_certified = false;
    double zf_l1 = 0;          // ‖z_L - f_L‖_{L1(B_{4 M0 ℓ})}
    double lap_z = 0;          // ‖Δz_L‖_{C0(B_{4 M0 ℓ})}
    std::array<double, 5> Dg{};  // ‖D^i g_L‖_{C0(L')}, i = 0..4

    double z_lip() const { return std::sqrt(double(plane.n())) * lip_on_K; }

    // g_L sampled on an arbitrary grid over π_0 (must stay within the domain of z_L).
    GridField interpolate(const GridSpec& spec, const Plane& base, double tol) const {
        ReparamOptions ro;
        ro.interp = Interp::cubic;
        ro.lip = z_lip();
        ro.tol = tol;
        return reparametrize_graph(z, plane, base, spec, ro);
    }
};

// Local grid of the doubled cube L' for g_L.
inline GridSpec local_spec(const DyadicCube& L, const Params& P) {
    return detail::centered_spec(L.center, P.glue_samples, L.ell / P.glue_samples);
}

inline CubePackage cube_package(const CmContext& ctx, const DyadicCube& L) {
    return detail::tag_errors(L, [&] {
        const Params& P = ctx.P;
        const GridField& u = *ctx.u;
        const int m = P.m;
        CubePackage pk;
        pk.cube = L;
        const double ell = L.ell, h = ell / P.cube_samples;
        pk.h_cube = h;
        pk.spacing_ok = h >= u.h * (1 - 1e-12);
        pk.p = graph_point(u, L.center);
        auto op = optimal_plane(ctx.G, pk.p, 32 * P.M0 * ell);
        pk.plane = Plane::through(pk.p, op.plane.A);
        pk.E_L = op.report.value;
        pk.plane_iterations = op.iterations;
        pk.tilt = std::sqrt(mvector_gap(pk.plane.A, Mat::Zero(P.n, m)));

        const double R4 = 4 * P.M0 * ell, w_rad = R4 + ell + 2 * h;
        // B_ρ with ρ = r(1 - E^γ) must cover the crop that feeds the mollifier
        const double shrink = 1 - std::pow(pk.E_L, P.gamma);
        const double R8 = shrink > 0 ? std::max(8 * P.M0 * ell, w_rad / shrink) : 8 * P.M0 * ell;
        const std::vector<double> zero(m, 0.0);
        const int Nv = static_cast<int>(std::ceil((R8 + 2 * h) / h - 1e-9));
        ReparamOptions ro;
        ro.interp = Interp::cubic;
        ro.lip = ctx.lip_u;
        ro.tol = P.reparam_tol;
        pk.v = reparametrize_graph(u, ctx.base, pk.plane, detail::centered_spec(zero, Nv, h), ro);

        LipApproxOptions lo;
        lo.gamma = P.gamma;
        lo.lambda = P.lambda;
        lo.eps_bar = P.eps_bar;
        lo.w_radius = w_rad;
        lo.exact_lip = false;
        auto la = lipschitz_approximation(pk.v, zero, R8, pk.E_L, lo);
        pk.lip_on_K = la.lip_on_K;
        pk.bad_measure = la.bad_measure;
        pk.maximal_bounded = la.maximal_bounded;
        pk.lip_certified = la.lip_certified;

        const int Nw = static_cast<int>(std::ceil(w_rad / h - 1e-9));
        pk.f = detail::central_crop(la.w, Nw);
        pk.z = mollify(pk.f, Mollifier{ell});
        const int R = (pk.f.dims[0] - pk.z.dims[0]) / 2;
        GridField f_on_z = detail::central_crop(pk.f, Nw - R);
        Region disk = Region::disk(zero, R4);
        pk.zf_l1 = l1_distance(pk.z, f_on_z, disk);
        pk.lap_z = c0_norm(laplacian(pk.z), disk);

        pk.g = pk.interpolate(local_spec(L, P), ctx.base, P.reparam_tol);
        GridField D = pk.g;
        for (int i = 0; i <= 4; ++i) {
            if (i > 0) D = gradient(D);
            pk.Dg[i] = c0_norm(D);
        }
        return pk;
    });
}

// ---------------------------------------------------------------------------------------------
// Gluing

// ϑ: ≡ 1 on [-1,1]^m, supported in (-9/8, 9/8)^m, smooth product of one-dimensional steps.
inline double bump(const double* y, int m) {
    auto step = [](double s) {
        if (s <= 0) return 0.0;
        if (s >= 1) return 1.0;
        double a = std::exp(-1 / s), b = std::exp(-1 / (1 - s));
        return a / (a + b);
    };
    double t = 1;
    for (int a = 0; a < m; ++a) {
        double s = std::abs(y[a]);
        if (s <= 1) continue;
        t *= step((9.0 / 8 - s) * 8);
        if (t == 0) return 0;
    }
    return t;
}

// g_L at the nodes of the ζ grid inside the support of ϑ_L.
struct Patch {
    DyadicCube cube;
    std::array<int, 3> lo{};  // first node in the ζ grid
    GridField values;         // aligned with the ζ grid
};

// Grid of u restricted to [-σ, σ]^m.
inline GridSpec zeta_spec(const GridField& u, double sigma) {
    GridSpec s;
    s.h = u.h;
    for (int a = 0; a < u.m; ++a) {
        int lo = static_cast<int>(std::ceil((-sigma - u.origin[a]) / u.h - 1e-9));
        int hi = static_cast<int>(std::floor((sigma - u.origin[a]) / u.h + 1e-9));
        if (lo < 0 || hi >= u.dims[a] || hi - lo < 2) throw ConfigError("the field does not cover [-sigma, sigma]^m");
        s.dims.push_back(hi - lo + 1);
        s.origin.push_back(u.origin[a] + lo * u.h);
    }
    return s;
}

// Index box of ζ-grid nodes with |x - x_L|_∞ < 9ℓ/16; false when empty.
inline bool support_box(const GridSpec& Z, const DyadicCube& L, int* lo, int* hi) {
    const int m = static_cast<int>(Z.dims.size());
    const double r = 9.0 / 16 * L.ell;
    for (int a = 0; a < m; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::floor((L.center[a] - r - Z.origin[a]) / Z.h)) + 1);
        hi[a] = std::min(Z.dims[a] - 1, static_cast<int>(std::ceil((L.center[a] + r - Z.origin[a]) / Z.h)) - 1);
        if (hi[a] < lo[a]) return false;
    }
    return true;
}

inline Patch make_patch(const CubePackage& pk, const GridSpec& Z, const Plane& base, double tol) {
    Patch p;
    p.cube = pk.cube;
    int lo[3], hi[3];
    if (!support_box(Z, pk.cube, lo, hi)) return p;
    GridSpec s;
    s.h = Z.h;
    for (std::size_t a = 0; a < Z.dims.size(); ++a) {
        p.lo[a] = lo[a];
        s.dims.push_back(hi[a] - lo[a] + 1);
        s.origin.push_back(Z.origin[a] + lo[a] * Z.h);
    }
    for (int d : s.dims)
        if (d < 2) {
            // GridField needs two samples per axis; pad by one node and drop it when gluing. A pad
            // node one ζ spacing away may leave the domain of z, so each real node is evaluated
            // on its own grid of spacing ℓ/8.
            std::vector<int> dims = s.dims;
            for (auto& dd : dims) dd = std::max(dd, 2);
            p.values = GridField::make(pk.g.n, dims, s.origin, s.h);
            p.values.mask.assign(p.values.size(), 0);
            for (std::size_t i = 0; i < p.values.size(); ++i) {
                int idx[3];
                p.values.unravel(i, idx);
                bool in = true;
                for (std::size_t a = 0; a < s.dims.size(); ++a) in = in && idx[a] < s.dims[a];
                if (!in) continue;
                p.values.mask[i] = 1;
                GridSpec t;
                t.h = pk.cube.ell / 8;
                t.dims.assign(s.dims.size(), 2);
                for (std::size_t a = 0; a < s.dims.size(); ++a) t.origin.push_back(s.origin[a] + idx[a] * s.h);
                GridField one = detail::tag_errors(pk.cube, [&] { return pk.interpolate(t, base, tol); });
                for (int c = 0; c < one.n; ++c) p.values.at(i)[c] = one.at(0)[c];
            }
            return p;
        }
    p.values = detail::tag_errors(pk.cube, [&] { return pk.interpolate(s, base, tol); });
    return p;
}

struct Glued {
    GridField zeta;
    double min_denominator = 0;
    double partition_error = 0;  // max |Σ θ_L - 1|
};

// ζ = Σ ϑ_L g_L / Σ ϑ_L over the ζ grid, one deterministic sequential pass.
inline Glued glued_interpolation(const std::vector<Patch>& patches, const GridSpec& Z, int n) {
    const int m = static_cast<int>(Z.dims.size());
    Glued out;
    out.zeta = GridField::make(n, Z.dims, Z.origin, Z.h);
    std::vector<double> den(out.zeta.size(), 0.0), tsum(out.zeta.size(), 0.0);
    auto visit = [&](const Patch& p, auto&& fn) {
        if (p.values.values.empty()) return;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            if (!p.values.active(i)) continue;
            int idx[3];
            p.values.unravel(i, idx);
            double x[3], y[3];
            for (int a = 0; a < m; ++a) {
                idx[a] += p.lo[a];
                x[a] = Z.origin[a] + idx[a] * Z.h;
                y[a] = 2 * (x[a] - p.cube.center[a]) / p.cube.ell;
            }
            double t = bump(y, m);
            if (t > 0) fn(out.zeta.ravel(idx), t, p.values.at(i));
        }
    };
    for (auto& p : patches)
        visit(p, [&](std::size_t j, double t, const double* g) {
            den[j] += t;
            for (int c = 0; c < n; ++c) out.zeta.at(j)[c] += t * g[c];
        });
    out.min_denominator = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < den.size(); ++j) {
        out.min_denominator = std::min(out.min_denominator, den[j]);
        if (!(den[j] >= 1 - 1e-12)) {
            double x[3];
            out.zeta.point(j, x);
            std::string at;
            for (int a = 0; a < m; ++a) at += (a ? ", " : "") + fmt_double(x[a]);
            throw NumericalError("partition denominator " + fmt_double(den[j]) + " below 1 at (" + at + ")");
        }
        for (int c = 0; c < n; ++c) out.zeta.at(j)[c] /= den[j];
    }
    for (auto& p : patches) visit(p, [&](std::size_t j, double t, const double*) { tsum[j] += t / den[j]; });
    for (double s : tsum) out.partition_error = std::max(out.partition_error, std::abs(s - 1));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Full run

struct CubeRecord {
    int level = 0;
    std::array<int, 3> index{};
    std::vector<double> center;
    double ell = 0, E_L = 0, tilt = 0, tilt_father = 0, lip_on_K = 0, bad_measure = 0, zf_l1 = 0, lap_z = 0;
    bool maximal_bounded = false, spacing_ok = true;
    std::array<double, 5> Dg{};
};

struct PairRecord {
    std::string kind;  // "father-son" or "neighbor"
    int level = 0;     // level of the finer cube
    long a = 0, b = 0; // ordinals (father at level - 1 for father-son)
    double ell = 0;
    std::array<double, 4> D{};  // ‖D^i(g_L - g_K)‖_{C0}, i = 0..3, on the common domain
    double l1 = 0;              // ‖g_L - g_K‖_{L1}
};

struct LevelResult {
    int k = 0;
    GridField zeta;
    double min_denominator = 0, partition_error = 0;
    bool spacing_ok = true;
};

struct CmRun {
    Params P;
    double E = 0;       // optimal spherical excess of u at scale excess_radius
    bool flat = false;  // E below flat_excess
    std::vector<LevelResult> levels;
    std::vector<CubeRecord> cubes;
    std::vector<PairRecord> pairs;
};

struct CmOptions {
    bool estimates = true;  // per-cube and pair estimates; the ζ_k are always produced
};

namespace detail {
// max over derivative orders 0..3 of the C0 norm of the difference field, plus its L1 norm.
inline void difference_norms(const GridField& d, PairRecord& pr) {
    GridField D = d;
    for (int i = 0; i <= 3; ++i) {
        if (i > 0) D = gradient(D);
        pr.D[i] = c0_norm(D);
    }
    pr.l1 = l1_norm(d);
}

inline GridField minus(GridField a, const GridField& b) {
    for (std::size_t k = 0; k < a.values.size(); ++k) a.values[k] -= b.values[k];
    return a;
}

// Slim copy kept for the next level: plane, a crop of z_L covering the children, g_L.
inline CubePackage slim(CubePackage&& pk, const Params& P) {
    CubePackage s;
    s.cube = pk.cube;
    s.p = pk.p;
    s.plane = pk.plane;
    s.lip_on_K = pk.lip_on_K;
    const double reach = 0.75 * std::sqrt(double(P.m)) * pk.cube.ell * 1.25 * (1 + pk.z_lip());
    int half = static_cast<int>(std::ceil(reach / pk.h_cube)) + 3;
    s.z = central_crop(pk.z, half);
    s.g = std::move(pk.g);
    return s;
}
}  // namespace detail

inline double run_excess(const CmContext& ctx) {
    std::vector<double> zero(ctx.P.m, 0.0);
    return optimal_plane(ctx.G, graph_point(*ctx.u, zero), ctx.P.excess_radius).report.value;
}

inline CmRun run_center_manifold(const GridField& u, const Params& params, const CmOptions& opt = {}) {
    Params P = params;
    P.resolve();
    CmContext ctx(u, P);
    CmRun run;
    run.P = P;
    run.E = run_excess(ctx);
    run.flat = run.E < P.flat_excess;
    Hierarchy H = build_grid(P);
    GridSpec Z = zeta_spec(u, P.sigma);
    std::vector<CubePackage> prev;
    for (int k = P.N0; k <= P.k_max; ++k) {
        const auto& cubes = H.level(k);
        std::vector<CubePackage> cur(cubes.size());
        std::vector<Patch> patches(cubes.size());
        std::vector<CubeRecord> recs(cubes.size());
        std::vector<std::uint8_t> spacing(cubes.size(), 1);
        parallel_for(cubes.size(), [&](std::size_t i) {
            CubePackage pk = cube_package(ctx, cubes[i]);
            patches[i] = make_patch(pk, Z, ctx.base, P.reparam_tol);
            spacing[i] = pk.spacing_ok;
            if (opt.estimates) {
                CubeRecord& r = recs[i];
                r.level = k;
                r.index = pk.cube.index;
                r.center = pk.cube.center;
                r.ell = pk.cube.ell;
                r.E_L = pk.E_L;
                r.tilt = pk.tilt;
                if (!prev.empty()) r.tilt_father = std::sqrt(mvector_gap(pk.plane.A, prev[pk.cube.father].plane.A));
                r.lip_on_K = pk.lip_on_K;
                r.bad_measure = pk.bad_measure;
                r.zf_l1 = pk.zf_l1;
                r.lap_z = pk.lap_z;
                r.maximal_bounded = pk.maximal_bounded;
                r.spacing_ok = pk.spacing_ok;
                r.Dg = pk.Dg;
                cur[i] = detail::slim(std::move(pk), P);
            }
        }, 1);
        auto glued = glued_interpolation(patches, Z, u.n);
        LevelResult lr;
        lr.k = k;
        lr.zeta = std::move(glued.zeta);
        lr.min_denominator = glued.min_denominator;
        lr.partition_error = glued.partition_error;
        lr.spacing_ok = std::all_of(spacing.begin(), spacing.end(), [](std::uint8_t s) { return s != 0; });
        run.levels.push_back(std::move(lr));
        if (!opt.estimates) continue;
        run.cubes.insert(run.cubes.end(), recs.begin(), recs.end());

        // neighbor pairs on the overlap of the doubled cubes; the local grids are aligned
        std::vector<std::vector<PairRecord>> pairs(cubes.size());
        parallel_for(cubes.size(), [&](std::size_t i) {
            const auto& L = cubes[i];
            for (long j : L.neighbors) {
                if (j < static_cast<long>(i)) continue;
                const auto& K = cubes[j];
                const GridField &gL = cur[i].g, &gK = cur[j].g;
                std::vector<int> loL(P.m), hiL(P.m), loK(P.m), hiK(P.m);
                for (int a = 0; a < P.m; ++a) {
                    int d = K.index[a] - L.index[a];  // offset in units of ℓ = glue_samples nodes
                    int s = d * P.glue_samples;
                    loL[a] = std::max(0, s);
                    hiL[a] = std::min(gL.dims[a] - 1, gL.dims[a] - 1 + s);
                    loK[a] = loL[a] - s;
                    hiK[a] = hiL[a] - s;
                }
                PairRecord pr;
                pr.kind = "neighbor";
                pr.level = k;
                pr.a = static_cast<long>(i);
                pr.b = j;
                pr.ell = L.ell;
                GridField dL = subgrid(gL, loL, hiL), dK = subgrid(gK, loK, hiK);
                detail::difference_norms(detail::minus(dL, dK), pr);
                pairs[i].push_back(pr);
            }
            if (!prev.empty()) {
                const CubePackage& F = prev[L.father];
                GridField gF = detail::tag_errors(F.cube, [&] { return F.interpolate(local_spec(L, P), ctx.base, P.reparam_tol); });
                PairRecord pr;
                pr.kind = "father-son";
                pr.level = k;
                pr.a = L.father;
                pr.b = static_cast<long>(i);
                pr.ell = L.ell;
                detail::difference_norms(detail::minus(cur[i].g, gF), pr);
                pairs[i].push_back(pr);
            }
        }, 1);
        for (auto& v : pairs) run.pairs.insert(run.pairs.end(), v.begin(), v.end());
        prev = std::move(cur);
    }
    return run;
}

// ---------------------------------------------------------------------------------------------
// Reports

struct RatioSeries {
    std::string name;
    std::vector<int> levels;
    std::vector<double> level_max, level_median, level_numerator_max;
    double max = 0, max_numerator = 0;
    std::size_t count = 0;
    bool finite = true;

    // Largest factor by which the median grows from one level to the next (0 when shrinking throughout).
    double worst_median_growth() const {
        double w = 0;
        for (std::size_t i = 1; i < level_median.size(); ++i)
            w = std::max(w, safe_ratio(level_median[i], level_median[i - 1], 0));
        return w;
    }

    json to_json() const {
        json j;
        j["name"] = name;
        j["count"] = count;
        j["max"] = max;
        j["max_numerator"] = max_numerator;
        j["finite"] = finite;
        j["levels"] = levels;
        j["level_max"] = level_max;
        j["level_median"] = level_median;
        j["level_numerator_max"] = level_numerator_max;
        j["worst_median_growth"] = worst_median_growth();
        return j;
    }
};

struct EstimateReport {
    double E = 0;
    bool flat = false;
    std::vector<RatioSeries> series;
    double excess_exponent = 0;  // least-squares slope of log E(L) against log ℓ(L)
    bool excess_exponent_defined = false;
    double tilt_father_constant = 0;  // max |π_L - π_father| / E(father)^{1/2}

    const RatioSeries& get(const std::string& name) const {
        for (auto& s : series)
            if (s.name == name) return s;
        throw ConfigError("no ratio named '" + name + "'");
    }

    json to_json() const {
        json j;
        j["E"] = E;
        j["flat"] = flat;
        j["excess_exponent"] = excess_exponent_defined ? json(excess_exponent) : json(nullptr);
        j["tilt_father_constant"] = tilt_father_constant;
        json s = json::array();
        for (auto& r : series) s.push_back(r.to_json());
        j["ratios"] = s;
        return j;
    }
};

namespace detail {
struct RatioCollector {
    std::map<std::string, std::map<int, std::vector<std::pair<double, double>>>> data;  // name -> level -> (ratio, numerator)
    std::vector<std::string> order;
    void add(const std::string& name, int level, double num, double den, bool flat) {
        if (!data.count(name)) order.push_back(name);
        double r = flat ? 0.0 : safe_ratio(num, den, 0);
        data[name][level].push_back({r, num});
    }
    std::vector<RatioSeries> finish() const {
        std::vector<RatioSeries> out;
        for (auto& name : order) {
            RatioSeries s;
            s.name = name;
            for (auto& [k, v] : data.at(name)) {
                std::vector<double> r;
                double nm = 0;
                for (auto& p : v) {
                    r.push_back(p.first);
                    nm = std::max(nm, p.second);
                    s.finite = s.finite && std::isfinite(p.first);
                }
                std::sort(r.begin(), r.end());
                double med = r.size() % 2 ? r[r.size() / 2] : 0.5 * (r[r.size() / 2 - 1] + r[r.size() / 2]);
                s.levels.push_back(k);
                s.level_max.push_back(r.back());
                s.level_median.push_back(med);
                s.level_numerator_max.push_back(nm);
                s.max = std::max(s.max, r.back());
                s.max_numerator = std::max(s.max_numerator, nm);
                s.count += r.size();
            }
            out.push_back(std::move(s));
        }
        return out;
    }
};
}  // namespace detail

inline EstimateReport cube_estimate_report(const CmRun& run) {
    const Params& P = run.P;
    EstimateReport rep;
    rep.E = run.E;
    rep.flat = run.flat;
    const double E = run.E, sE = std::sqrt(std::max(E, 0.0)), b = P.beta;
    const int m = P.m;
    detail::RatioCollector rc;
    std::vector<double> lx, ly;
    for (auto& c : run.cubes) {
        const double l = c.ell;
        for (int i = 1; i <= 3; ++i) rc.add("g_D" + std::to_string(i), c.level, c.Dg[i], sE, run.flat);
        rc.add("g_D4", c.level, c.Dg[4], std::pow(2.0, (1 - b) * c.level) * sE, run.flat);
        rc.add("z_minus_f_L1", c.level, c.zf_l1, E * std::pow(l, m + 3 + 2 * b), run.flat);
        rc.add("laplacian_z", c.level, c.lap_z, E * std::pow(l, 1 + 2 * b), run.flat);
        rc.add("excess_decay", c.level, c.E_L, E * std::pow(l, 2 - 2 * P.delta), run.flat);
        rc.add("tilt", c.level, c.tilt, sE, run.flat);
        if (c.E_L > 0) {
            lx.push_back(std::log(l));
            ly.push_back(std::log(c.E_L));
        }
    }
    for (auto& p : run.pairs) {
        const std::string pre = p.kind == "neighbor" ? "neighbor" : "father_son";
        for (int i = 0; i <= 3; ++i)
            rc.add(pre + "_D" + std::to_string(i), p.level, p.D[i], sE * std::pow(2.0, -(3 + b - i) * p.level), run.flat);
        rc.add(pre + "_L1", p.level, p.l1, E * std::pow(p.ell, m + 3 + b), run.flat);
    }
    rep.series = rc.finish();
    if (lx.size() >= 2 && !run.flat) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= ly.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        if (sxx > 0) {
            rep.excess_exponent = sxy / sxx;
            rep.excess_exponent_defined = true;
        }
    }
    // tilt gaps against the father's excess
    std::map<std::pair<int, long>, double> father_E;
    for (auto& c : run.cubes) {
        long side = 1L << c.level, o = 0;
        for (int a = 0; a < m; ++a) o = o * side + c.index[a];
        father_E[{c.level, o}] = c.E_L;
    }
    for (auto& c : run.cubes) {
        if (c.level == P.N0) continue;
        long side = 1L << (c.level - 1), o = 0;
        for (int a = 0; a < m; ++a) o = o * side + c.index[a] / 2;
        double Ef = father_E.at({c.level - 1, o});
        rep.tilt_father_constant = std::max(rep.tilt_father_constant, run.flat ? 0.0 : safe_ratio(c.tilt_father, std::sqrt(Ef)));
    }
    return rep;
}

struct CmNorms {
    int level = 0;
    double D1 = 0, D2 = 0, D3 = 0, holder3 = 0, dist_u = 0;
    double c2beta = 0;          // ‖Dζ‖_{C^{2,β}} = ‖Dζ‖ + ‖D²ζ‖ + ‖D³ζ‖ + [D³ζ]_β
    double c2beta_scaled = 0;   // divided by E^{1/2}
    double holder3_scaled = 0;
    double dist_u_scaled = 0;

    json to_json() const {
        json j;
        j["level"] = level;
        j["D1"] = D1;
        j["D2"] = D2;
        j["D3"] = D3;
        j["holder3"] = holder3;
        j["dist_u"] = dist_u;
        j["c2beta"] = c2beta;
        j["c2beta_scaled"] = c2beta_scaled;
        j["holder3_scaled"] = holder3_scaled;
        j["dist_u_scaled"] = dist_u_scaled;
        return j;
    }
};

inline CmNorms cm_norm_report(const GridField& zeta, const GridField& u, const Params& P, double E, int level = 0) {
    // u on the nodes of ζ
    std::vector<int> lo(u.m), hi(u.m);
    if (zeta.m != u.m || zeta.n != u.n || std::abs(zeta.h - u.h) > 1e-12 * u.h) throw ConfigError("ζ and u live on different grids");
    for (int a = 0; a < u.m; ++a) {
        double t = (zeta.origin[a] - u.origin[a]) / u.h;
        lo[a] = static_cast<int>(std::lround(t));
        if (std::abs(t - lo[a]) > 1e-9) throw ConfigError("ζ and u live on different grids");
        hi[a] = lo[a] + zeta.dims[a] - 1;
    }
    GridField us = subgrid(u, lo, hi);
    us.origin = zeta.origin;
    CmNorms r;
    r.level = level;
    GridField D = gradient(zeta);
    r.D1 = c0_norm(D);
    D = gradient(D);
    r.D2 = c0_norm(D);
    D = gradient(D);
    r.D3 = c0_norm(D);
    double diam = 0;
    for (int a = 0; a < zeta.m; ++a) diam += std::pow((zeta.dims[a] - 1) * zeta.h, 2);
    r.holder3 = holder_seminorm(zeta, 3, P.beta, zeta.h, std::sqrt(diam));
    r.dist_u = c0_distance(zeta, us);
    r.c2beta = r.D1 + r.D2 + r.D3 + r.holder3;
    const bool flat = E < P.flat_excess;
    const double sE = std::sqrt(std::max(E, 0.0));
    r.c2beta_scaled = flat ? 0.0 : r.c2beta / sE;
    r.holder3_scaled = flat ? 0.0 : r.holder3 / sE;
    r.dist_u_scaled = flat ? 0.0 : r.dist_u / sE;
    return r;
}

}  // namespace cmlab
