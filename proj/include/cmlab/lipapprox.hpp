#pragma once
/// Maximal-function truncation of |Dv|^2 and componentwise McShane extension from the good set.

#include "cmlab/area.hpp"

namespace cmlab {

namespace detail {

// ∫_{B_r(c)} g with g extended by zero outside the grid and on masked points; dual-cell weights
// are exact. m = 2 uses row prefix sums for the cells strictly inside the disk.
struct DiskSummer {
    const GridField& g;
    std::vector<double> prefix;  // per row (axis 0 index), prefix over axis 1 of g * cell width

    explicit DiskSummer(const GridField& f) : g(f) {
        if (g.m != 2) return;
        const int d0 = g.dims[0], d1 = g.dims[1];
        prefix.assign(std::size_t(d0) * (d1 + 1), 0.0);
        for (int i = 0; i < d0; ++i)
            for (int j = 0; j < d1; ++j) {
                std::size_t k = std::size_t(i) * d1 + j;
                double v = g.active(k) ? g.at(k)[0] : 0.0;
                prefix[std::size_t(i) * (d1 + 1) + j + 1] = prefix[std::size_t(i) * (d1 + 1) + j] + v * width(1, j);
            }
    }

    double lo(int a, int i) const { return std::max(g.origin[a] + (i - 0.5) * g.h, g.origin[a]); }
    double hi(int a, int i) const { return std::min(g.origin[a] + (i + 0.5) * g.h, g.upper(a)); }
    double width(int a, int i) const { return hi(a, i) - lo(a, i); }
    double val(std::size_t k) const { return g.active(k) ? g.at(k)[0] : 0.0; }

    double operator()(const double* c, double r) const {
        if (g.m == 2) return sum2(c, r);
        Region R = Region::disk(std::vector<double>(c, c + g.m), r);
        int lo_i[3], hi_i[3];
        index_range(g, R, g.h, lo_i, hi_i);
        double s = 0;
        for_index_box(g, lo_i, hi_i, [&](const int* idx, std::size_t k) {
            double clo[3], chi[3];
            for (int a = 0; a < g.m; ++a) {
                clo[a] = lo(a, idx[a]);
                chi[a] = hi(a, idx[a]);
            }
            double w = box_disk_measure(clo, chi, c, r, g.m);
            if (w > 0) s += w * val(k);
        });
        return s;
    }

    double sum2(const double* c, double r) const {
        const int d0 = g.dims[0], d1 = g.dims[1];
        const double h = g.h;
        int i0 = std::max(0, int(std::floor((c[0] - r - g.origin[0]) / h)));
        int i1 = std::min(d0 - 1, int(std::ceil((c[0] + r - g.origin[0]) / h)));
        double s = 0;
        for (int i = i0; i <= i1; ++i) {
            double y0 = lo(0, i) - c[0], y1 = hi(0, i) - c[0];
            double dmin = (y0 <= 0 && y1 >= 0) ? 0.0 : std::min(std::abs(y0), std::abs(y1));
            double dmax = std::max(std::abs(y0), std::abs(y1));
            if (dmin >= r) continue;
            double a_out = std::sqrt(r * r - dmin * dmin);
            double a_in = dmax < r ? std::sqrt(r * r - dmax * dmax) : -1.0;
            int j0 = std::max(0, int(std::floor((c[1] - a_out - g.origin[1]) / h)));
            int j1 = std::min(d1 - 1, int(std::ceil((c[1] + a_out - g.origin[1]) / h)));
            const double rowh = y1 - y0;
            auto full = [&](int j) { return a_in >= 0 && lo(1, j) >= c[1] - a_in && hi(1, j) <= c[1] + a_in; };
            auto part = [&](int j) {
                return val(std::size_t(i) * d1 + j) * rect_disk_area(y0, y1, lo(1, j) - c[1], hi(1, j) - c[1], r);
            };
            int a = j0, b = j1;
            while (a <= b && !full(a)) s += part(a++);
            while (b >= a && !full(b)) s += part(b--);
            if (a <= b) {
                const double* P = prefix.data() + std::size_t(i) * (d1 + 1);
                s += rowh * (P[b + 1] - P[a]);
            }
        }
        return s;
    }
};

}  // namespace detail

// sup over r in {2h, 4h, 8h, ...} ∩ (0, r_max] of r^{-m} ∫_{B_r(y)} g, g extended by zero.
// Evaluated at the active points inside `where`; others are masked out.
inline GridField maximal_function(const GridField& g, double r_max, const Region& where = Region::whole()) {
    if (g.n != 1) throw ConfigError("maximal function expects a scalar field");
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.active(i) && g.at(i)[0] < 0) throw ConfigError("maximal function expects a nonnegative field");
    std::vector<double> radii;
    for (double r = 2 * g.h; r <= r_max * (1 + 1e-12); r *= 2) radii.push_back(r);
    if (radii.empty()) throw ConfigError("maximal function radius below twice the spacing");
    detail::DiskSummer S(g);
    GridField M = GridField::make(1, g.dims, g.origin, g.h);
    M.mask.assign(g.size(), 0);
    parallel_for(g.size(), [&](std::size_t i) {
        double x[3];
        g.point(i, x);
        if (!g.active(i) || !where.contains(x, g.m)) return;
        double best = 0;
        for (double r : radii) best = std::max(best, S(x, r) / std::pow(r, g.m));
        M.at(i)[0] = best;
        M.mask[i] = 1;
    }, 16);
    return M;
}

// max |f(a) - f(b)| / |a - b| over pairs from `nodes`.
inline double pairwise_lipschitz(const GridField& f, const std::vector<std::size_t>& nodes) {
    const int m = f.m, n = f.n;
    std::vector<double> pts(nodes.size() * m), vals(nodes.size() * n);
    for (std::size_t p = 0; p < nodes.size(); ++p) {
        f.point(nodes[p], &pts[p * m]);
        for (int c = 0; c < n; ++c) vals[p * n + c] = f.at(nodes[p])[c];
    }
    std::vector<double> best(nodes.size(), 0.0);
    parallel_for(nodes.size(), [&](std::size_t p) {
        double b = 0;
        const double *x = &pts[p * m], *u = &vals[p * n];
        for (std::size_t q = p + 1; q < nodes.size(); ++q) {
            const double *y = &pts[q * m], *v = &vals[q * n];
            double d2 = 0, e2 = 0;
            for (int a = 0; a < m; ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
            for (int c = 0; c < n; ++c) e2 += (u[c] - v[c]) * (u[c] - v[c]);
            if (e2 > b * b * d2) b = std::sqrt(e2 / d2);
        }
        best[p] = b;
    }, 8);
    double out = 0;
    for (double b : best) out = std::max(out, b);
    return out;
}

struct LipApproxOptions {
    double gamma = 1.0 / 16;
    double lambda = -1;       // < 0: lambda = gamma
    double eps_bar = 0.1;     // largest admissible excess
    double r_max = -1;        // maximal-function radius; < 0: r / 2
    double w_radius = -1;     // w is computed on B_{w_radius}(center); < 0: r
    bool exact_lip = true;    // false: certified cell bound when K is every node of B_rho
};

struct LipApproxResult {
    GridField K_mask;       // 1 on K, 0 elsewhere
    GridField w;            // masked outside B_{w_radius}
    GridField maximal;      // M|Dv|^2 (masked where not evaluated)
    bool maximal_bounded = false;  // maximal holds the bound ω_m max|Dv|^2 instead
    double excess_E = 0, gamma = 0, lambda = 0, rho = 0, threshold = 0;
    double bad_measure = 0;       // |B_rho \ K|
    double lip_on_K = 0;
    bool lip_certified = false;   // lip_on_K is an upper bound rather than a pair maximum
    double above_measure = 0;     // |{M > threshold}| over the evaluated points
    double weak_l1_constant = 0;  // above_measure * threshold / ∫|Dv|^2
    std::size_t K_size = 0;

    json to_json() const {
        json j;
        j["excess_E"] = excess_E;
        j["gamma"] = gamma;
        j["lambda"] = lambda;
        j["rho"] = rho;
        j["threshold"] = threshold;
        j["bad_measure"] = bad_measure;
        j["lip_on_K"] = lip_on_K;
        j["lip_certified"] = lip_certified;
        j["maximal_bounded"] = maximal_bounded;
        j["above_measure"] = above_measure;
        j["weak_l1_constant"] = weak_l1_constant;
        j["K_size"] = K_size;
        return j;
    }
};

// r^{-m} times the horizontal cylindrical excess over B_r(center).
inline double scaled_cylindrical_excess(const GridField& v, const std::vector<double>& center, double r) {
    return cylindrical_excess(v, center, r, Plane::horizontal(v.m, v.n)).value / std::pow(r, v.m);
}

// K = {M|Dv|^2 <= E^{2λ}} ∩ B_ρ(center), ρ = r(1 - E^γ); w_i = min_{y∈K} v_i(y) + L|x - y| with
// L = Lip(v|_K), and w = v on K.
inline LipApproxResult lipschitz_approximation(const GridField& v, const std::vector<double>& center, double r, double E,
                                               const LipApproxOptions& opt = {}) {
    v.validate();
    if (!(E >= 0)) throw ConfigError("excess must be nonnegative");
    if (E > opt.eps_bar) throw DomainError("excess " + fmt_double(E) + " above threshold " + fmt_double(opt.eps_bar));
    if (!(opt.gamma > 0)) throw ConfigError("gamma must be positive");
    LipApproxResult res;
    res.excess_E = E;
    res.gamma = opt.gamma;
    res.lambda = opt.lambda < 0 ? opt.gamma : opt.lambda;
    res.rho = r * (1 - std::pow(E, opt.gamma));
    res.threshold = E == 0 ? 0.0 : std::pow(E, 2 * res.lambda);
    const int m = v.m, n = v.n;
    const double r_max = opt.r_max < 0 ? 0.5 * r : opt.r_max;
    const double w_rad = opt.w_radius < 0 ? r : opt.w_radius;
    Region ball = Region::disk(center, res.rho);

    GridField Dv = gradient(v);
    GridField g2 = GridField::make(1, v.dims, v.origin, v.h);
    g2.mask = v.mask;
    double gmax = 0, gint = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v.active(i)) continue;
        double s = 0;
        for (int k = 0; k < n * m; ++k) s += Dv.at(i)[k] * Dv.at(i)[k];
        g2.at(i)[0] = s;
        gmax = std::max(gmax, s);
    }
    for (auto q : quadrature(g2, Region::whole()))
        if (v.active(q.i)) gint += q.w * g2.at(q.i)[0];

    // M <= ω_m max g everywhere, so a small gradient makes every point good.
    Region evaluated = Region::disk(center, res.rho + v.h);
    if (omega(m) * gmax <= res.threshold) {
        res.maximal_bounded = true;
        res.maximal = GridField::make(1, v.dims, v.origin, v.h);
        res.maximal.mask.assign(v.size(), 0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            double x[3];
            v.point(i, x);
            if (v.active(i) && evaluated.contains(x, m)) {
                res.maximal.mask[i] = 1;
                res.maximal.at(i)[0] = omega(m) * gmax;
            }
        }
    } else {
        res.maximal = maximal_function(g2, r_max, evaluated);
    }
    auto good = [&](std::size_t i) { return res.maximal.at(i)[0] <= res.threshold; };

    res.K_mask = GridField::make(1, v.dims, v.origin, v.h);
    std::vector<std::size_t> K;
    bool K_full = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x[3];
        v.point(i, x);
        if (!v.active(i) || !ball.contains(x, m)) continue;
        if (good(i)) {
            K.push_back(i);
            res.K_mask.at(i)[0] = 1;
        } else {
            K_full = false;
        }
    }
    res.K_size = K.size();
    if (K.empty()) throw DomainError("good set is empty");
    for (auto q : quadrature(v, ball))
        if (!good(q.i)) res.bad_measure += q.w;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (res.maximal.active(i) && !good(i)) res.above_measure += std::pow(v.h, m);
    res.weak_l1_constant = gint > 0 ? res.above_measure * res.threshold / gint : 0.0;

    if (!opt.exact_lip && K_full) {
        res.lip_on_K = lipschitz_bound_multilinear(v, ball);
        res.lip_certified = true;
    } else {
        res.lip_on_K = pairwise_lipschitz(v, K);
    }

    const double L = res.lip_on_K;
    res.w = GridField::make(n, v.dims, v.origin, v.h);
    res.w.mask.assign(v.size(), 0);
    Region wreg = Region::disk(center, w_rad);
    std::vector<double> kp(K.size() * m), kv(K.size() * n);
    for (std::size_t p = 0; p < K.size(); ++p) {
        v.point(K[p], &kp[p * m]);
        for (int c = 0; c < n; ++c) kv[p * n + c] = v.at(K[p])[c];
    }
    parallel_for(v.size(), [&](std::size_t i) {
        double x[3];
        v.point(i, x);
        if (!wreg.contains(x, m)) return;
        res.w.mask[i] = 1;
        double* out = res.w.at(i);
        if (res.K_mask.at(i)[0] == 1) {
            for (int c = 0; c < n; ++c) out[c] = v.at(i)[c];
            return;
        }
        for (int c = 0; c < n; ++c) out[c] = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < K.size(); ++p) {
            double d2 = 0;
            for (int a = 0; a < m; ++a) d2 += (x[a] - kp[p * m + a]) * (x[a] - kp[p * m + a]);
            double d = L * std::sqrt(d2);
            for (int c = 0; c < n; ++c) out[c] = std::min(out[c], kv[p * n + c] + d);
        }
    }, 16);
    return res;
}

// 1/2 r^{-m} ∫_{B_ρ} |Dw|^2 - E.
inline double dirichlet_closeness(const LipApproxResult& res, const std::vector<double>& center, double r) {
    return 0.5 * dirichlet_energy(res.w, Region::disk(center, res.rho)) / std::pow(r, res.w.m) - res.excess_E;
}

}  // namespace cmlab
