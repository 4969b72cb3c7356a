#pragma once
/// Area functional, cylindrical and spherical excess of graphs, optimal planes, and the
/// elementary comparison estimates between planes and excesses.

#include "cmlab/geom.hpp"

namespace cmlab {

// sqrt(1 + sum of squares of all k x k minors of Du, 1 <= k <= min(m,n)); Du row-major n x m.
inline double area_integrand_minors(const double* Du, int n, int m) {
    double s = 1;
    const int kmax = std::min(m, n);
    for (int k = 1; k <= kmax; ++k) {
        auto R = subsets(n, k), C = subsets(m, k);
        SMat M(k, k);
        for (auto& r : R)
            for (auto& c : C) {
                for (int a = 0; a < k; ++a)
                    for (int b = 0; b < k; ++b) M(a, b) = Du[r[a] * m + c[b]];
                double d = M.determinant();
                s += d * d;
            }
    }
    return std::sqrt(s);
}

// sqrt(det(Id + Du^T Du)).
inline double area_integrand_gram(const double* Du, int n, int m) {
    SMat G = SMat::Identity(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < n; ++c) G(a, b) += Du[c * m + a] * Du[c * m + b];
    return std::sqrt(G.determinant());
}

// Lebesgue measure of R ∩ grid box as seen by the cell quadrature.
inline double region_measure(const GridField& f, const Region& R) {
    double s = 0;
    for (auto q : cell_quadrature(f, R)) s += q.w;
    return s;
}

// Area of gr(f, R): cell quadrature with the gradient of the multilinear interpolant at cell centres.
inline double area(const GridField& f, const Region& R = Region::whole()) {
    double s = 0;
    std::vector<double> g(f.n * f.m);
    for (auto q : cell_quadrature(f, R)) {
        cell_gradient(f, q.i, g.data());
        s += q.w * area_integrand_minors(g.data(), f.n, f.m);
    }
    return s;
}

struct IdentityCheck {
    double lhs = 0, rhs = 0, gap = 0;
};

// lhs = area - |R| (cell quadrature); rhs = 1/2 ∫ |T - π0|^2 over the graph (node quadrature, central
// differences). The two sides agree in the continuum, so the gap is quadrature error only.
inline IdentityCheck excess_identity_check(const GridField& f, const Region& R = Region::whole()) {
    IdentityCheck c;
    c.lhs = area(f, R) - region_measure(f, R);
    PluckerTable T(f.m, f.n);
    std::vector<double> g(f.n * f.m), P(T.size());
    double s = 0;
    for (auto q : quadrature(f, R)) {
        gradient_at(f, q.i, g.data());
        double J = T.minors(g.data(), P.data());
        double d = (P[0] / J - 1) * (P[0] / J - 1);  // e_1..e_m coordinate comes first
        for (int k = 1; k < T.size(); ++k) d += P[k] * P[k] / (J * J);
        s += q.w * 0.5 * d * J;
    }
    c.rhs = s;
    c.gap = c.lhs - c.rhs;
    return c;
}

// ---------------------------------------------------------------------------------------------
// Graph integrals

struct ExcessReport {
    std::string kind;  // "cylindrical", "spherical", "tilted-cylindrical"
    std::vector<double> center;
    double radius = 0;
    Plane plane;
    double value = 0;
    double quadrature_h = 0;
    bool clamped = false;

    json to_json() const {
        json j;
        j["kind"] = kind;
        j["center"] = center;
        j["radius"] = radius;
        j["plane"] = plane_to_json(plane);
        j["value"] = value;
        j["quadrature_h"] = quadrature_h;
        j["clamped"] = clamped;
        return j;
    }
};

// Per-node slope, area element and unit tangent m-vector of gr(f).
struct GraphCache {
    const GridField* f = nullptr;
    int m = 0, n = 0, K = 0;
    PluckerTable table;
    std::vector<double> Du, J, T;
    double max_slope = 0;  // max Frobenius norm of Du

    explicit GraphCache(const GridField& field) : f(&field), m(field.m), n(field.n), table(field.m, field.n) {
        if (m + n > 6) throw ConfigError("m + n must not exceed 6");
        for (int d : field.dims)
            if (d < 3) throw ConfigError("graph integrals need at least 3 samples per axis");
        K = table.size();
        const std::size_t N = field.size();
        Du.assign(N * n * m, 0.0);
        J.assign(N, 0.0);
        T.assign(N * K, 0.0);
        std::vector<double> slope(N, 0.0);
        parallel_for(N, [&](std::size_t i) {
            if (!field.active(i)) return;
            double* d = &Du[i * n * m];
            gradient_at(field, i, d);
            double* t = &T[i * K];
            J[i] = table.minors(d, t);
            for (int k = 0; k < K; ++k) t[k] /= J[i];
            double s = 0;
            for (int k = 0; k < n * m; ++k) s += d[k] * d[k];
            slope[i] = std::sqrt(s);
        });
        for (double s : slope) max_slope = std::max(max_slope, s);
    }

    void point(std::size_t i, double* q) const {
        f->point(i, q);
        for (int c = 0; c < n; ++c) q[m + c] = f->at(i)[c];
    }
};

// Region of R^{m+n} described by a 1-Lipschitz gauge: ball |q - p| < r or tilted cylinder |B^T (q - p)| < r.
struct Clip {
    enum class Kind { ball, cylinder } kind = Kind::ball;
    Vec p;
    double r = 0;
    Mat B;            // orthonormal tangent frame of the cylinder axis plane
    double tilt = 0;  // |A| of the axis plane

    static Clip ball(Vec p, double r) { return {Kind::ball, std::move(p), r, Mat(), 0}; }
    static Clip cylinder(const Plane& P, double r) { return {Kind::cylinder, P.p, r, tangent_basis(P.A), P.A.norm()}; }

    double gauge(const double* q) const {
        const int N = static_cast<int>(p.size());
        if (kind == Kind::ball) {
            double s = 0;
            for (int k = 0; k < N; ++k) s += (q[k] - p[k]) * (q[k] - p[k]);
            return std::sqrt(s);
        }
        double s = 0;
        for (int j = 0; j < B.cols(); ++j) {
            double t = 0;
            for (int k = 0; k < N; ++k) t += B(k, j) * (q[k] - p[k]);
            s += t * t;
        }
        return std::sqrt(s);
    }
};

// Effective base-measure weight of every node whose dual cell meets {x : gauge(x, f(x)) < r}.
// Boundary cells use the 4^m sub-sample fraction of the linearized graph.
inline std::vector<QNode> graph_clip(const GraphCache& G, const Clip& clip) {
    const GridField& f = *G.f;
    const int m = G.m, n = G.n;
    // horizontal reach of the clipped set around the projected centre
    double reach = clip.r;
    if (clip.kind == Clip::Kind::cylinder) {
        // points of the cylinder on gr(f) form a graph over the axis plane with slope at most lv
        double L = G.max_slope;
        double lv = (L + clip.tilt) / std::max(1e-3, 1 - L * clip.tilt);
        reach = clip.r * std::sqrt(1 + lv * lv) * 1.02;
    }
    Region disk = Region::disk(std::vector<double>(clip.p.data(), clip.p.data() + m), reach + 2 * f.h);
    int lo[3], hi[3];
    detail::index_range(f, disk, 0, lo, hi);
    std::vector<QNode> out;
    const double half = 0.5 * f.h;
    const int S = 4;
    int subcount = 1;
    for (int a = 0; a < m; ++a) subcount *= S;
    detail::for_index_box(f, lo, hi, [&](const int* idx, std::size_t i) {
        double q[6];
        G.point(i, q);
        double d = clip.gauge(q);
        const double* D = &G.Du[i * n * m];
        double s2 = 0;
        for (int k = 0; k < n * m; ++k) s2 += D[k] * D[k];
        double b = 1.25 * half * std::sqrt(double(m)) * std::sqrt(1 + s2) + 1e-12;
        if (d - b >= clip.r) return;
        bool edge = false;
        double clo[3], chi[3];
        for (int a = 0; a < m; ++a) {
            if (idx[a] == 0 || idx[a] == f.dims[a] - 1) edge = true;
            clo[a] = std::max(q[a] - half, f.origin[a]) - q[a];
            chi[a] = std::min(q[a] + half, f.upper(a)) - q[a];
        }
        if (edge) throw DomainError("graph leaves the grid domain inside the clipping region");
        if (!f.active(i)) throw DomainError("clipping region touches masked-out grid points");
        double vol = 1;
        for (int a = 0; a < m; ++a) vol *= chi[a] - clo[a];
        if (d + b < clip.r) {
            out.push_back({i, vol});
            return;
        }
        int inside = 0;
        for (int t = 0; t < subcount; ++t) {
            double p[6], dx[3];
            int r = t;
            for (int a = m - 1; a >= 0; --a) {
                int k = r % S;
                r /= S;
                dx[a] = clo[a] + (k + 0.5) / S * (chi[a] - clo[a]);
                p[a] = q[a] + dx[a];
            }
            for (int c = 0; c < n; ++c) {
                double y = q[m + c];
                for (int a = 0; a < m; ++a) y += D[c * m + a] * dx[a];
                p[m + c] = y;
            }
            inside += clip.gauge(p) < clip.r;
        }
        if (inside) out.push_back({i, vol * inside / subcount});
    });
    return out;
}

inline std::vector<double> unit_mvector(const Plane& P) {
    PluckerTable T(P.m(), P.n());
    std::vector<double> a(P.n() * P.m()), u(T.size());
    for (int c = 0; c < P.n(); ++c)
        for (int j = 0; j < P.m(); ++j) a[c * P.m() + j] = P.A(c, j);
    T.unit(a.data(), u.data());
    return u;
}

// ∫ |T - π|^2 dVol over the weighted nodes.
inline double excess_integral(const GraphCache& G, const std::vector<QNode>& nodes, const Plane& P) {
    auto u = unit_mvector(P);
    double s = 0;
    for (auto q : nodes) {
        const double* t = &G.T[q.i * G.K];
        double d = 0;
        for (int k = 0; k < G.K; ++k) d += (t[k] - u[k]) * (t[k] - u[k]);
        s += q.w * d * G.J[q.i];
    }
    return s;
}

inline double graph_volume(const GraphCache& G, const std::vector<QNode>& nodes) {
    double s = 0;
    for (auto q : nodes) s += q.w * G.J[q.i];
    return s;
}

// 1/2 ∫_{gr(f, B_r(x))} |T - π|^2 over the vertical cylinder above B_r(center).
inline ExcessReport cylindrical_excess(const GraphCache& G, const std::vector<double>& center, double r, const Plane& P) {
    auto nodes = quadrature(*G.f, Region::disk(center, r));
    ExcessReport e{"cylindrical", center, r, P, 0.5 * excess_integral(G, nodes, P), G.f->h, false};
    return e;
}
inline ExcessReport cylindrical_excess(const GridField& f, const std::vector<double>& center, double r, const Plane& P) {
    return cylindrical_excess(GraphCache(f), center, r, P);
}

// 1/2 ∫ |T - π|^2 over gr(f) inside the cylinder of radius r around the plane P (axis through P.p).
inline ExcessReport tilted_cylindrical_excess(const GraphCache& G, double r, const Plane& P) {
    auto nodes = graph_clip(G, Clip::cylinder(P, r));
    std::vector<double> c(P.p.data(), P.p.data() + P.p.size());
    return {"tilted-cylindrical", c, r, P, 0.5 * excess_integral(G, nodes, P), G.f->h, false};
}

// (ω_m r^m)^{-1} ∫_{gr(f) ∩ B_r(p)} |T - π|^2.
inline ExcessReport spherical_excess(const GraphCache& G, const Vec& p, double r, const Plane& P) {
    auto nodes = graph_clip(G, Clip::ball(p, r));
    std::vector<double> c(p.data(), p.data() + p.size());
    double v = excess_integral(G, nodes, P) / (omega(G.m) * std::pow(r, G.m));
    return {"spherical", c, r, P, v, G.f->h, false};
}
inline ExcessReport spherical_excess(const GridField& f, const Vec& p, double r, const Plane& P) {
    return spherical_excess(GraphCache(f), p, r, P);
}

// Point (x, f(x)) by multilinear interpolation.
inline Vec graph_point(const GridField& f, const std::vector<double>& x) {
    Vec p(f.m + f.n);
    double v[16];
    sample_linear(f, x.data(), v);
    for (int a = 0; a < f.m; ++a) p[a] = x[a];
    for (int c = 0; c < f.n; ++c) p[f.m + c] = v[c];
    return p;
}

// ---------------------------------------------------------------------------------------------
// Optimal planes

struct OptimalPlaneOptions {
    double C0 = 4;
    double grad_tol = 1e-9;
    int max_iter = 200;
    double fd_step = 1e-5;
};

struct OptimalPlane {
    Plane plane;
    ExcessReport report;
    int iterations = 0;
    double grad_norm = 0;
    double volume = 0;  // Vol(gr(f) ∩ B_r(p))
};

// Objective A -> (2V - 2 <S, P(A)/|P(A)|>) / (ω r^m) built from the clipped moments.
struct PlaneObjective {
    int m, n;
    PluckerTable T;
    std::vector<double> S;
    double V = 0, scale = 1;

    double operator()(const double* a) const {
        double u[20];
        T.unit(a, u);
        double s = 0;
        for (int k = 0; k < T.size(); ++k) s += S[k] * u[k];
        return (2 * V - 2 * s) * scale;
    }
};

// Minimizes the spherical excess in B_r(p) over slopes A by BFGS with Armijo backtracking and
// central-difference gradients. Default seed: mean slope over the clipped graph.
inline OptimalPlane optimal_plane(const GraphCache& G, const Vec& p, double r, const double* seed = nullptr,
                                  const OptimalPlaneOptions& opt = {}) {
    const int m = G.m, n = G.n, N = n * m;
    auto nodes = graph_clip(G, Clip::ball(p, r));
    if (nodes.empty()) throw DomainError("empty ball");
    PlaneObjective F{m, n, G.table, std::vector<double>(G.K, 0.0), 0, 1 / (omega(m) * std::pow(r, m))};
    Vec a(N);
    a.setZero();
    double W = 0;
    for (auto q : nodes) {
        const double J = G.J[q.i];
        F.V += q.w * J;
        const double* t = &G.T[q.i * G.K];
        for (int k = 0; k < G.K; ++k) F.S[k] += q.w * J * t[k];
        if (!seed) {
            for (int k = 0; k < N; ++k) a[k] += q.w * G.Du[q.i * N + k];
            W += q.w;
        }
    }
    if (seed)
        for (int k = 0; k < N; ++k) a[k] = seed[k];
    else
        a /= W;
    if (!(a.norm() <= opt.C0)) throw DomainError("seed slope exceeds the near-horizontal bound");

    auto grad = [&](const Vec& x) {
        Vec g(N), y = x;
        for (int k = 0; k < N; ++k) {
            y[k] = x[k] + opt.fd_step;
            double fp = F(y.data());
            y[k] = x[k] - opt.fd_step;
            double fm = F(y.data());
            y[k] = x[k];
            g[k] = (fp - fm) / (2 * opt.fd_step);
        }
        return g;
    };
    Mat H = 0.5 * Mat::Identity(N, N);
    double fx = F(a.data());
    Vec g = grad(a);
    int it = 0;
    while (g.norm() >= opt.grad_tol) {
        if (++it > opt.max_iter) throw NumericalError("optimal plane search did not converge");
        Vec d = -H * g;
        if (d.dot(g) >= 0) {
            H = 0.5 * Mat::Identity(N, N);
            d = -H * g;
        }
        double t = 1, fn = 0;
        Vec an;
        bool ok = false;
        for (int back = 0; back < 60; ++back) {
            an = a + t * d;
            fn = F(an.data());
            if (fn <= fx + 1e-4 * t * g.dot(d)) {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if (!ok) {
            // objective flat to roundoff; accept if the gradient is at noise level
            if (g.norm() < 1e3 * opt.grad_tol) break;
            throw NumericalError("optimal plane line search failed");
        }
        if (an.norm() >= opt.C0) throw DomainError("optimal plane search reached the slope bound");
        // accepted without decrease: the difference gradient sits at its roundoff floor
        if (fn >= fx && g.norm() < 1e3 * opt.grad_tol) break;
        Vec gn = grad(an);
        Vec s = an - a, y = gn - g;
        double sy = s.dot(y);
        if (sy > 1e-300) {
            double rho = 1 / sy;
            Mat I = Mat::Identity(N, N);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        a = an;
        fx = fn;
        g = gn;
    }
    OptimalPlane out;
    out.plane = Plane::through(p, slope_from(a.data(), n, m));
    std::vector<double> c(p.data(), p.data() + p.size());
    double v = excess_integral(G, nodes, out.plane) * F.scale;
    out.report = {"spherical", c, r, out.plane, v, G.f->h, false};
    out.iterations = it;
    out.grad_norm = g.norm();
    out.volume = F.V;
    return out;
}
inline OptimalPlane optimal_plane(const GridField& f, const Vec& p, double r, const double* seed = nullptr,
                                  const OptimalPlaneOptions& opt = {}) {
    return optimal_plane(GraphCache(f), p, r, seed, opt);
}

// ---------------------------------------------------------------------------------------------
// Comparison estimates between planes and excesses (report only)

struct CompareConfig {
    std::vector<double> x;  // centre on the base
    std::vector<double> y;  // second base point for the p-q estimate (|p - q| is the radius used)
    double r = 0;
    double rho = 0;         // in [r, 2r]
};

struct CompareReport {
    double C1 = 0;  // max(Vol/r^m, r^m/Vol)
    double C2 = 0;  // tilt^2 / (E(B_2r, π1) + E(B_rho, π2))
    double C3 = 0;  // tilt^2 / (E(B_r(p), π1) + E(B_r(q), π2)), r = |p - q|
    std::vector<json> rows;

    json to_json() const {
        json j;
        j["C1"] = C1;
        j["C2"] = C2;
        j["C3"] = C3;
        j["configurations"] = rows;
        return j;
    }
};

// Ratios with both sides at roundoff level are reported as 0.
inline double safe_ratio(double num, double den, double floor = 1e-14) {
    if (num <= floor && den <= floor) return 0.0;
    if (den <= 0) return std::numeric_limits<double>::infinity();
    return num / den;
}

inline CompareReport compare_planes_checks(const GridField& f, const std::vector<CompareConfig>& configs) {
    GraphCache G(f);
    CompareReport rep;
    for (auto& c : configs) {
        if (!(c.r > 0 && c.rho >= c.r && c.rho <= 2 * c.r)) throw ConfigError("need 0 < r <= rho <= 2r");
        Vec p = graph_point(f, c.x);
        auto b1 = optimal_plane(G, p, c.r);
        double dens = b1.volume / std::pow(c.r, f.m);
        auto big = optimal_plane(G, p, 2 * c.r), mid = optimal_plane(G, p, c.rho);
        double tilt2 = mvector_gap(big.plane.A, mid.plane.A);
        double c2 = safe_ratio(tilt2, big.report.value + mid.report.value);
        json row;
        row["x"] = c.x;
        row["r"] = c.r;
        row["rho"] = c.rho;
        row["density"] = dens;
        row["C2_ratio"] = c2;
        rep.C1 = std::max({rep.C1, dens, 1 / dens});
        rep.C2 = std::max(rep.C2, c2);
        if (!c.y.empty()) {
            Vec q = graph_point(f, c.y);
            double d = (q - p).norm();
            auto pp = optimal_plane(G, p, d), qq = optimal_plane(G, q, d);
            double c3 = safe_ratio(mvector_gap(pp.plane.A, qq.plane.A), pp.report.value + qq.report.value);
            row["y"] = c.y;
            row["C3_ratio"] = c3;
            rep.C3 = std::max(rep.C3, c3);
        }
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// From spherical to cylindrical excess

struct SphereToCylinder {
    Plane plane;          // π1 through p
    GridField v;          // graph over π1 on a square grid around B_{(1-η)r}
    double sph_excess_pi0 = 0;
    double sph_excess = 0;   // E(gr f, B_r) at π1
    double lip_v = 0;
    double containment_gap = 0;  // max distance of gr(v) points from gr(f), and ball overshoot
    double ball_overshoot = 0;
    double cyl_excess_v = 0;
    double cyl_bound = 0;    // (ω_m/2) r^m E(gr f, B_r)

    json to_json() const {
        json j;
        j["plane"] = plane_to_json(plane);
        j["spherical_excess_pi0"] = sph_excess_pi0;
        j["spherical_excess"] = sph_excess;
        j["lip_v"] = lip_v;
        j["containment_gap"] = containment_gap;
        j["ball_overshoot"] = ball_overshoot;
        j["cylindrical_excess_v"] = cyl_excess_v;
        j["cylindrical_bound"] = cyl_bound;
        return j;
    }
};

// Re-expresses gr(f) ∩ B_r(p) as a graph over its optimal plane on B_{(1-η)r} and certifies
// Lip(v) <= 2, gr(v) ⊂ gr(f) ∩ B_r(p) and the excess inequality. eps_bar is the smallness threshold.
inline SphereToCylinder sphere_to_cylinder(const GridField& f, const Vec& p, double r, double eta, double eps_bar) {
    if (!(eta > 0 && eta < 1)) throw ConfigError("eta must lie in (0,1)");
    GraphCache G(f);
    const int m = f.m, n = f.n;
    SphereToCylinder out;
    out.sph_excess_pi0 = spherical_excess(G, p, r, Plane::through(p, Mat::Zero(n, m))).value;
    if (out.sph_excess_pi0 > eps_bar)
        throw DomainError("spherical excess " + fmt_double(out.sph_excess_pi0) + " above the threshold " + fmt_double(eps_bar));
    auto best = optimal_plane(G, p, r);
    out.plane = best.plane;
    out.sph_excess = best.report.value;
    const double rr = (1 - eta) * r;
    const int half = static_cast<int>(std::ceil(rr / f.h)) + 1;
    GridSpec spec{std::vector<int>(m, 2 * half + 1), std::vector<double>(m, -half * f.h), f.h};
    ReparamOptions ro;
    ro.lip = G.max_slope;
    out.v = reparametrize_graph(f, Plane::horizontal(m, n), out.plane, spec, ro);
    Region disk = Region::disk(std::vector<double>(m, 0.0), rr);
    out.lip_v = lipschitz_bound_multilinear(out.v, disk);

    const Mat Bt = tangent_basis(out.plane.A), Nt = normal_basis(out.plane.A);
    double x[3], gap = 0, over = 0;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        out.v.point(i, x);
        double s = 0;
        for (int a = 0; a < m; ++a) s += x[a] * x[a];
        if (s > rr * rr) continue;
        Vec q = p + Bt * Eigen::Map<const Vec>(x, m) + Nt * Eigen::Map<const Vec>(out.v.at(i), n);
        std::vector<double> base(q.data(), q.data() + m);
        double fv[6];
        sample_linear(f, base.data(), fv);
        for (int c = 0; c < n; ++c) gap = std::max(gap, std::abs(fv[c] - q[m + c]));
        over = std::max(over, (q - p).norm() - r);
    }
    out.containment_gap = gap;
    out.ball_overshoot = over;
    GraphCache Gv(out.v);
    out.cyl_excess_v = cylindrical_excess(Gv, std::vector<double>(m, 0.0), rr, Plane::horizontal(m, n)).value;
    out.cyl_bound = 0.5 * omega(m) * std::pow(r, m) * out.sph_excess;

    if (out.lip_v > 2) throw DomainError("certificate failed: Lip(v) = " + fmt_double(out.lip_v) + " > 2");
    if (gap > 1e-9) throw DomainError("certificate failed: graph containment gap " + fmt_double(gap));
    if (over > 0) throw DomainError("certificate failed: graph leaves the ball by " + fmt_double(over));
    if (out.cyl_excess_v > out.cyl_bound)
        throw DomainError("certificate failed: cylindrical excess " + fmt_double(out.cyl_excess_v) + " exceeds " +
                          fmt_double(out.cyl_bound));
    return out;
}

}  // namespace cmlab
