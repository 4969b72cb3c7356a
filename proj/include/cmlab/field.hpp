#pragma once
/// Uniform-grid fields R^m -> R^n with discrete calculus, quadrature, mollification and resampling.

#include "cmlab/core.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace cmlab {

struct GridField {
    int m = 0;
    int n = 0;
    std::vector<int> dims;
    std::vector<double> origin;
    double h = 0;
    std::vector<double> values;      // row-major over points (axis 0 slowest), then n components
    std::vector<std::uint8_t> mask;  // empty = every point active

    static GridField make(int n, std::vector<int> dims, std::vector<double> origin, double h) {
        GridField f;
        f.m = static_cast<int>(dims.size());
        f.n = n;
        f.dims = std::move(dims);
        f.origin = std::move(origin);
        f.h = h;
        f.check_shape();
        f.values.assign(f.size() * static_cast<std::size_t>(n), 0.0);
        return f;
    }

    // Samples fn(x, out) at every grid point.
    template <class F>
    static GridField sample(int n, std::vector<int> dims, std::vector<double> origin, double h, F&& fn) {
        GridField f = make(n, std::move(dims), std::move(origin), h);
        std::array<double, 3> x{};
        for (std::size_t i = 0; i < f.size(); ++i) {
            f.point(i, x.data());
            fn(x.data(), f.at(i));
        }
        return f;
    }

    void check_shape() const {
        if (m < 1 || m > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
        if (n < 1) throw ConfigError("codomain dimension must be positive");
        if (static_cast<int>(origin.size()) != m) throw ConfigError("origin has wrong length");
        if (!(h > 0) || !std::isfinite(h)) throw ConfigError("grid spacing must be positive");
        for (int d : dims)
            if (d < 2) throw ConfigError("every axis needs at least 2 samples");
    }

    void validate() const {
        check_shape();
        if (values.size() != size() * static_cast<std::size_t>(n)) throw ConfigError("value array has wrong length");
        if (!mask.empty() && mask.size() != size()) throw ConfigError("mask has wrong length");
        for (double v : values)
            if (!std::isfinite(v)) throw ConfigError("field holds a non-finite value");
    }

    std::size_t size() const {
        std::size_t s = 1;
        for (int d : dims) s *= static_cast<std::size_t>(d);
        return s;
    }
    std::size_t stride(int a) const {
        std::size_t s = 1;
        for (int b = a + 1; b < m; ++b) s *= static_cast<std::size_t>(dims[b]);
        return s;
    }
    bool active(std::size_t i) const { return mask.empty() || mask[i] != 0; }
    double* at(std::size_t i) { return values.data() + i * n; }
    const double* at(std::size_t i) const { return values.data() + i * n; }

    void unravel(std::size_t i, int* idx) const {
        for (int a = m - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(i % dims[a]);
            i /= dims[a];
        }
    }
    std::size_t ravel(const int* idx) const {
        std::size_t i = 0;
        for (int a = 0; a < m; ++a) i = i * dims[a] + idx[a];
        return i;
    }
    void point(std::size_t i, double* x) const {
        int idx[3];
        unravel(i, idx);
        for (int a = 0; a < m; ++a) x[a] = origin[a] + idx[a] * h;
    }
    double upper(int a) const { return origin[a] + (dims[a] - 1) * h; }

    bool same_grid(const GridField& o) const {
        return m == o.m && dims == o.dims && origin == o.origin && h == o.h;
    }
};

inline double point_norm(const double* v, int k) {
    double s = 0;
    for (int c = 0; c < k; ++c) s += v[c] * v[c];
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------------------------
// Regions and quadrature

struct Region {
    enum class Kind { all, box, disk };
    Kind kind = Kind::all;
    std::vector<double> lo, hi;  // box
    std::vector<double> center;  // disk
    double radius = 0;

    static Region whole() { return {}; }
    static Region box(std::vector<double> lo, std::vector<double> hi) {
        Region r;
        r.kind = Kind::box;
        r.lo = std::move(lo);
        r.hi = std::move(hi);
        return r;
    }
    static Region disk(std::vector<double> c, double rad) {
        Region r;
        r.kind = Kind::disk;
        r.center = std::move(c);
        r.radius = rad;
        return r;
    }

    bool contains(const double* x, int m) const {
        switch (kind) {
            case Kind::all: return true;
            case Kind::box:
                for (int a = 0; a < m; ++a)
                    if (x[a] < lo[a] || x[a] > hi[a]) return false;
                return true;
            case Kind::disk: {
                double s = 0;
                for (int a = 0; a < m; ++a) s += (x[a] - center[a]) * (x[a] - center[a]);
                return s <= radius * radius * (1 + 1e-12);
            }
        }
        return false;
    }

    double measure(int m) const {
        switch (kind) {
            case Kind::box: {
                double v = 1;
                for (int a = 0; a < m; ++a) v *= hi[a] - lo[a];
                return v;
            }
            case Kind::disk: return omega(m) * std::pow(radius, m);
            default: return std::numeric_limits<double>::quiet_NaN();
        }
    }
};

// |[x0,x1] x [y0,y1] ∩ B_r(0)|, exact.
inline double rect_disk_area(double x0, double x1, double y0, double y1, double r) {
    double a = std::max(x0, -r), b = std::min(x1, r);
    if (a >= b || y0 >= y1) return 0;
    const double r2 = r * r;
    auto s = [&](double x) { return std::sqrt(std::max(0.0, r2 - x * x)); };
    auto S = [&](double x) { return 0.5 * (x * s(x) + r2 * std::asin(std::clamp(x / r, -1.0, 1.0))); };
    double bp[6];
    int nb = 0;
    bp[nb++] = a;
    bp[nb++] = b;
    for (double y : {y0, y1}) {
        if (std::abs(y) < r) {
            double t = std::sqrt(r2 - y * y);
            if (-t > a && -t < b) bp[nb++] = -t;
            if (t > a && t < b) bp[nb++] = t;
        }
    }
    std::sort(bp, bp + nb);
    double total = 0;
    for (int k = 0; k + 1 < nb; ++k) {
        double p = bp[k], q = bp[k + 1];
        if (q <= p) continue;
        double sm = s(0.5 * (p + q));
        bool upper_line = y1 < sm, lower_line = y0 > -sm;
        double um = upper_line ? y1 : sm, lm = lower_line ? y0 : -sm;
        if (um <= lm) continue;
        double iu = upper_line ? y1 * (q - p) : S(q) - S(p);
        double il = lower_line ? y0 * (q - p) : -(S(q) - S(p));
        total += iu - il;
    }
    return total;
}

// |box ∩ B_r(c)| for an axis-aligned box in R^m.
inline double box_disk_measure(const double* lo, const double* hi, const double* c, double r, int m) {
    double near = 0, far = 0;
    for (int a = 0; a < m; ++a) {
        double dlo = lo[a] - c[a], dhi = hi[a] - c[a];
        double dn = (dlo > 0) ? dlo : (dhi < 0 ? -dhi : 0.0);
        double df = std::max(std::abs(dlo), std::abs(dhi));
        near += dn * dn;
        far += df * df;
    }
    double vol = 1;
    for (int a = 0; a < m; ++a) vol *= hi[a] - lo[a];
    if (vol <= 0 || near >= r * r) return 0;
    if (far <= r * r) return vol;
    if (m == 1) return std::max(0.0, std::min(hi[0], c[0] + r) - std::max(lo[0], c[0] - r));
    if (m == 2) return rect_disk_area(lo[0] - c[0], hi[0] - c[0], lo[1] - c[1], hi[1] - c[1], r);
    // m = 3: midpoint fraction on an 8^3 sub-lattice
    const int s = 8;
    int inside = 0;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j)
            for (int k = 0; k < s; ++k) {
                double p[3] = {lo[0] + (i + 0.5) / s * (hi[0] - lo[0]), lo[1] + (j + 0.5) / s * (hi[1] - lo[1]),
                               lo[2] + (k + 0.5) / s * (hi[2] - lo[2])};
                double d = 0;
                for (int a = 0; a < 3; ++a) d += (p[a] - c[a]) * (p[a] - c[a]);
                inside += d < r * r;
            }
    return vol * inside / double(s * s * s);
}

struct QNode {
    std::size_t i;
    double w;
};

inline void require_region_inside(const GridField& f, const Region& R) {
    const double tol = 1e-9 * f.h;
    for (int a = 0; a < f.m; ++a) {
        double lo = f.origin[a], hi = f.upper(a);
        if (R.kind == Region::Kind::box && (R.lo[a] < lo - tol || R.hi[a] > hi + tol))
            throw DomainError("region leaves the grid domain");
        if (R.kind == Region::Kind::disk && (R.center[a] - R.radius < lo - tol || R.center[a] + R.radius > hi + tol))
            throw DomainError("disk leaves the grid domain");
    }
}

namespace detail {
// Calls body(idx, flat) over the index box lo..hi (inclusive).
template <class F>
void for_index_box(const GridField& f, const int* lo, const int* hi, F&& body) {
    int idx[3] = {0, 0, 0};
    for (int a = 0; a < f.m; ++a)
        if (lo[a] > hi[a]) return;
    for (int a = 0; a < f.m; ++a) idx[a] = lo[a];
    while (true) {
        body(idx, f.ravel(idx));
        int a = f.m - 1;
        while (a >= 0) {
            if (++idx[a] <= hi[a]) break;
            idx[a] = lo[a];
            --a;
        }
        if (a < 0) break;
    }
}

inline void index_range(const GridField& f, const Region& R, double pad, int* lo, int* hi) {
    for (int a = 0; a < f.m; ++a) {
        double a0 = f.origin[a], a1 = f.upper(a);
        if (R.kind == Region::Kind::box) {
            a0 = R.lo[a];
            a1 = R.hi[a];
        } else if (R.kind == Region::Kind::disk) {
            a0 = R.center[a] - R.radius;
            a1 = R.center[a] + R.radius;
        }
        lo[a] = std::max(0, static_cast<int>(std::floor((a0 - pad - f.origin[a]) / f.h)));
        hi[a] = std::min(f.dims[a] - 1, static_cast<int>(std::ceil((a1 + pad - f.origin[a]) / f.h)));
    }
}
}  // namespace detail

// Node quadrature: weight of node i = |dual cell(i) ∩ grid box ∩ region|.
inline std::vector<QNode> quadrature(const GridField& f, const Region& R) {
    require_region_inside(f, R);
    int lo[3], hi[3];
    detail::index_range(f, R, f.h, lo, hi);
    std::vector<QNode> out;
    detail::for_index_box(f, lo, hi, [&](const int* idx, std::size_t i) {
        double clo[3], chi[3];
        for (int a = 0; a < f.m; ++a) {
            double x = f.origin[a] + idx[a] * f.h;
            clo[a] = std::max(x - 0.5 * f.h, f.origin[a]);
            chi[a] = std::min(x + 0.5 * f.h, f.upper(a));
        }
        double w = 0;
        if (R.kind == Region::Kind::all) {
            w = 1;
            for (int a = 0; a < f.m; ++a) w *= chi[a] - clo[a];
        } else if (R.kind == Region::Kind::box) {
            w = 1;
            for (int a = 0; a < f.m; ++a) w *= std::max(0.0, std::min(chi[a], R.hi[a]) - std::max(clo[a], R.lo[a]));
        } else {
            w = box_disk_measure(clo, chi, R.center.data(), R.radius, f.m);
        }
        if (w > 0) {
            if (!f.active(i)) throw DomainError("region touches masked-out grid points");
            out.push_back({i, w});
        }
    });
    return out;
}

// Cell quadrature: cells [x_i, x_i + h]^m (i = lower corner), weight |cell ∩ region|.
inline std::vector<QNode> cell_quadrature(const GridField& f, const Region& R) {
    require_region_inside(f, R);
    int lo[3], hi[3];
    detail::index_range(f, R, f.h, lo, hi);
    for (int a = 0; a < f.m; ++a) hi[a] = std::min(hi[a], f.dims[a] - 2);
    std::vector<QNode> out;
    detail::for_index_box(f, lo, hi, [&](const int* idx, std::size_t i) {
        double clo[3], chi[3];
        for (int a = 0; a < f.m; ++a) {
            clo[a] = f.origin[a] + idx[a] * f.h;
            chi[a] = clo[a] + f.h;
        }
        double w = 0;
        if (R.kind == Region::Kind::all) {
            w = std::pow(f.h, f.m);
        } else if (R.kind == Region::Kind::box) {
            w = 1;
            for (int a = 0; a < f.m; ++a) w *= std::max(0.0, std::min(chi[a], R.hi[a]) - std::max(clo[a], R.lo[a]));
        } else {
            w = box_disk_measure(clo, chi, R.center.data(), R.radius, f.m);
        }
        if (w > 0) out.push_back({i, w});
    });
    return out;
}

// Gradient of the multilinear interpolant at the center of the cell with lower corner i (n x m, row-major).
inline void cell_gradient(const GridField& f, std::size_t i, double* out) {
    int idx[3];
    f.unravel(i, idx);
    const int corners = 1 << f.m;
    for (int k = 0; k < f.n * f.m; ++k) out[k] = 0;
    const double scale = 1.0 / (f.h * (corners / 2));
    for (int c = 0; c < corners; ++c) {
        std::size_t j = i;
        for (int a = 0; a < f.m; ++a)
            if (c >> (f.m - 1 - a) & 1) j += f.stride(a);
        if (!f.active(j)) throw DomainError("cell touches masked-out grid points");
        const double* v = f.at(j);
        for (int a = 0; a < f.m; ++a) {
            double sgn = (c >> (f.m - 1 - a) & 1) ? scale : -scale;
            for (int q = 0; q < f.n; ++q) out[q * f.m + a] += sgn * v[q];
        }
    }
    (void)idx;
}

// Largest spectral norm of an n x m row-major matrix.
inline double operator_norm(const double* D, int n, int m) {
    double G[9] = {0};
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < n; ++c) G[a * m + b] += D[c * m + a] * D[c * m + b];
    if (m == 1) return std::sqrt(G[0]);
    if (m == 2) {
        double tr = G[0] + G[3], det = G[0] * G[3] - G[1] * G[2];
        return std::sqrt(0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det))));
    }
    Eigen::Matrix3d M;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) M(a, b) = G[a * 3 + b];
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
    es.computeDirect(M, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues()(2)));
}

// Upper bound for the Lipschitz constant of the multilinear interpolant over the cells meeting R
// (R convex). On a cell, each column of the derivative is a convex combination of edge
// differences, so the derivative is a convex combination of the edge-difference matrices.
inline double lipschitz_bound_multilinear(const GridField& f, const Region& R = Region::whole()) {
    if (f.n > 6) throw ConfigError("codomain too large for the cell Lipschitz bound");
    auto cells = cell_quadrature(f, R);
    const int m = f.m, n = f.n, E = 1 << (m - 1);
    std::vector<double> best(cells.size(), 0.0);
    parallel_for(cells.size(), [&](std::size_t q) {
        const std::size_t i = cells[q].i;
        // diff[a][e][c]: difference along axis a on edge e
        double diff[3][4][6];
        for (int a = 0; a < m; ++a) {
            int others[2], no = 0;
            for (int b = 0; b < m; ++b)
                if (b != a) others[no++] = b;
            for (int e = 0; e < E; ++e) {
                std::size_t j = i;
                for (int k = 0; k < no; ++k)
                    if (e >> k & 1) j += f.stride(others[k]);
                std::size_t j2 = j + f.stride(a);
                if (!f.active(j) || !f.active(j2)) throw DomainError("cell touches masked-out grid points");
                for (int c = 0; c < n; ++c) diff[a][e][c] = (f.at(j2)[c] - f.at(j)[c]) / f.h;
            }
        }
        int combos = 1;
        for (int a = 0; a < m; ++a) combos *= E;
        double b = 0, D[18];
        for (int t = 0; t < combos; ++t) {
            int r = t;
            for (int a = 0; a < m; ++a) {
                int e = r % E;
                r /= E;
                for (int c = 0; c < n; ++c) D[c * m + a] = diff[a][e][c];
            }
            b = std::max(b, operator_norm(D, n, m));
        }
        best[q] = b;
    });
    double out = 0;
    for (double b : best) out = std::max(out, b);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Derivatives

// Du at grid point i, row-major n x m. Central differences where both neighbours are active,
// second-order one-sided stencils otherwise.
inline void gradient_at(const GridField& f, std::size_t i, double* out) {
    int idx[3];
    f.unravel(i, idx);
    const double inv2h = 0.5 / f.h;
    for (int a = 0; a < f.m; ++a) {
        const std::size_t st = f.stride(a);
        const int d = f.dims[a];
        auto ok = [&](int off) {
            int k = idx[a] + off;
            return k >= 0 && k < d && f.active(i + static_cast<std::ptrdiff_t>(off) * static_cast<std::ptrdiff_t>(st));
        };
        auto v = [&](int off) { return f.at(i + static_cast<std::ptrdiff_t>(off) * static_cast<std::ptrdiff_t>(st)); };
        if (ok(-1) && ok(1)) {
            const double *p = v(1), *q = v(-1);
            for (int c = 0; c < f.n; ++c) out[c * f.m + a] = (p[c] - q[c]) * inv2h;
        } else if (ok(1) && ok(2)) {
            const double *p0 = v(0), *p1 = v(1), *p2 = v(2);
            for (int c = 0; c < f.n; ++c) out[c * f.m + a] = (4 * (p1[c] - p0[c]) - (p2[c] - p0[c])) * inv2h;
        } else if (ok(-1) && ok(-2)) {
            const double *p0 = v(0), *p1 = v(-1), *p2 = v(-2);
            for (int c = 0; c < f.n; ++c) out[c * f.m + a] = (4 * (p0[c] - p1[c]) - (p0[c] - p2[c])) * inv2h;
        } else {
            throw DomainError("not enough active samples for a derivative stencil");
        }
    }
}

inline GridField gradient(const GridField& f) {
    for (int d : f.dims)
        if (d < 3) throw ConfigError("gradient needs at least 3 samples per axis");
    GridField g = GridField::make(f.n * f.m, f.dims, f.origin, f.h);
    g.mask = f.mask;
    parallel_for(f.size(), [&](std::size_t i) {
        if (f.active(i)) gradient_at(f, i, g.at(i));
    });
    return g;
}

// D^j f by iterated gradients; component layout ((c*m + a1)*m + a2)...
inline GridField derivative(const GridField& f, int j) {
    GridField g = f;
    for (int k = 0; k < j; ++k) g = gradient(g);
    return g;
}

// Discrete Laplacian, (2m+1)-point stencil, at grid points with a full stencil (others masked out).
inline GridField laplacian(const GridField& f) {
    GridField L = GridField::make(f.n, f.dims, f.origin, f.h);
    L.mask.assign(f.size(), 0);
    const double ih2 = 1.0 / (f.h * f.h);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.active(i)) continue;
        int idx[3];
        f.unravel(i, idx);
        bool full = true;
        for (int a = 0; a < f.m && full; ++a) {
            if (idx[a] == 0 || idx[a] == f.dims[a] - 1) full = false;
            else if (!f.active(i + f.stride(a)) || !f.active(i - f.stride(a))) full = false;
        }
        if (!full) continue;
        L.mask[i] = 1;
        for (int c = 0; c < f.n; ++c) {
            double s = -2.0 * f.m * f.at(i)[c];
            for (int a = 0; a < f.m; ++a) s += f.at(i + f.stride(a))[c] + f.at(i - f.stride(a))[c];
            L.at(i)[c] = s * ih2;
        }
    }
    return L;
}

// ---------------------------------------------------------------------------------------------
// Point evaluation

namespace detail {
inline double to_local(const GridField& f, int a, double x) {
    double t = (x - f.origin[a]) / f.h;
    double tol = 1e-9;
    if (t < -tol || t > f.dims[a] - 1 + tol) throw DomainError("evaluation point escapes the grid domain");
    double r = std::round(t);
    if (std::abs(t - r) < 1e-11) t = r;  // grid points evaluate to the stored sample exactly
    return std::clamp(t, 0.0, double(f.dims[a] - 1));
}
}  // namespace detail

// Multilinear interpolation; exact on affine maps. Optional gradient of the interpolant, row-major n x m.
inline void sample_linear(const GridField& f, const double* x, double* out, double* grad = nullptr) {
    int base[3];
    double fr[3];
    for (int a = 0; a < f.m; ++a) {
        double t = detail::to_local(f, a, x[a]);
        int i = std::min(static_cast<int>(std::floor(t)), f.dims[a] - 2);
        base[a] = i;
        fr[a] = t - i;
    }
    for (int c = 0; c < f.n; ++c) out[c] = 0;
    if (grad)
        for (int k = 0; k < f.n * f.m; ++k) grad[k] = 0;
    const int corners = 1 << f.m;
    for (int k = 0; k < corners; ++k) {
        double wa[3];
        double w = 1;
        int idx[3];
        for (int a = 0; a < f.m; ++a) {
            int bit = k >> (f.m - 1 - a) & 1;
            idx[a] = base[a] + bit;
            wa[a] = bit ? fr[a] : 1 - fr[a];
            w *= wa[a];
        }
        if (w == 0 && !grad) continue;
        std::size_t j = f.ravel(idx);
        if (!f.active(j)) throw DomainError("interpolation touches masked-out grid points");
        const double* v = f.at(j);
        for (int c = 0; c < f.n; ++c) out[c] += w * v[c];
        if (grad) {
            for (int a = 0; a < f.m; ++a) {
                double g = ((k >> (f.m - 1 - a) & 1) ? 1.0 : -1.0) / f.h;
                for (int b = 0; b < f.m; ++b)
                    if (b != a) g *= wa[b];
                for (int c = 0; c < f.n; ++c) grad[c * f.m + a] += g * v[c];
            }
        }
    }
}

// Tensor 4-point Lagrange interpolation (exact on cubics); optional gradient, row-major n x m.
inline void sample_cubic(const GridField& f, const double* x, double* out, double* grad = nullptr) {
    int base[3];
    double w[3][4], dw[3][4];
    for (int a = 0; a < f.m; ++a) {
        if (f.dims[a] < 4) throw ConfigError("cubic interpolation needs at least 4 samples per axis");
        double t = detail::to_local(f, a, x[a]);
        int s = std::clamp(static_cast<int>(std::floor(t)) - 1, 0, f.dims[a] - 4);
        base[a] = s;
        double u = t - s;
        double d0 = u, d1 = u - 1, d2 = u - 2, d3 = u - 3;
        w[a][0] = -d1 * d2 * d3 / 6;
        w[a][1] = d0 * d2 * d3 / 2;
        w[a][2] = -d0 * d1 * d3 / 2;
        w[a][3] = d0 * d1 * d2 / 6;
        dw[a][0] = -(d2 * d3 + d1 * d3 + d1 * d2) / 6 / f.h;
        dw[a][1] = (d2 * d3 + d0 * d3 + d0 * d2) / 2 / f.h;
        dw[a][2] = -(d1 * d3 + d0 * d3 + d0 * d1) / 2 / f.h;
        dw[a][3] = (d1 * d2 + d0 * d2 + d0 * d1) / 6 / f.h;
    }
    const int n = f.n, m = f.m;
    for (int c = 0; c < n; ++c) out[c] = 0;
    if (grad)
        for (int k = 0; k < n * m; ++k) grad[k] = 0;
    std::size_t st[3] = {0, 0, 0}, b0 = 0;
    for (int a = 0; a < m; ++a) {
        st[a] = f.stride(a);
        b0 += static_cast<std::size_t>(base[a]) * st[a];
    }
    const bool masked = !f.mask.empty();
    // tensor loop over the 4^m stencil; unused axes contribute a single unit weight
    const int K1 = m > 1 ? 4 : 1, K2 = m > 2 ? 4 : 1;
    const double one[4] = {1, 0, 0, 0}, zero4[4] = {0, 0, 0, 0};
    const double* w1 = m > 1 ? w[1] : one;
    const double* w2 = m > 2 ? w[2] : one;
    const double* d1 = m > 1 ? dw[1] : zero4;
    const double* d2 = m > 2 ? dw[2] : zero4;
    for (int k0 = 0; k0 < 4; ++k0)
        for (int k1 = 0; k1 < K1; ++k1)
            for (int k2 = 0; k2 < K2; ++k2) {
                std::size_t j = b0 + k0 * st[0] + k1 * st[1] + k2 * st[2];
                if (masked && !f.mask[j]) throw DomainError("interpolation touches masked-out grid points");
                const double* v = f.values.data() + j * n;
                const double w12 = w1[k1] * w2[k2];
                const double wt = w[0][k0] * w12;
                for (int c = 0; c < n; ++c) out[c] += wt * v[c];
                if (grad) {
                    const double g[3] = {dw[0][k0] * w12, w[0][k0] * d1[k1] * w2[k2], w[0][k0] * w1[k1] * d2[k2]};
                    for (int c = 0; c < n; ++c)
                        for (int a = 0; a < m; ++a) grad[c * m + a] += g[a] * v[c];
                }
            }
}

// Multilinear resampling onto a new grid; target points must lie inside the source domain.
inline GridField resample(const GridField& f, std::vector<double> new_origin, double new_h, std::vector<int> new_dims) {
    GridField g = GridField::make(f.n, std::move(new_dims), std::move(new_origin), new_h);
    if (g.m != f.m) throw ConfigError("resample target has a different dimension");
    parallel_for(g.size(), [&](std::size_t i) {
        double x[3];
        g.point(i, x);
        sample_linear(f, x, g.at(i));
    });
    return g;
}

// Copy of the sub-grid with index ranges lo..hi (inclusive).
inline GridField subgrid(const GridField& f, const std::vector<int>& lo, const std::vector<int>& hi) {
    std::vector<int> dims(f.m);
    std::vector<double> org(f.m);
    for (int a = 0; a < f.m; ++a) {
        if (lo[a] < 0 || hi[a] >= f.dims[a] || hi[a] - lo[a] < 1) throw DomainError("sub-grid outside the grid");
        dims[a] = hi[a] - lo[a] + 1;
        org[a] = f.origin[a] + lo[a] * f.h;
    }
    GridField g = GridField::make(f.n, dims, org, f.h);
    if (!f.mask.empty()) g.mask.assign(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        int idx[3];
        g.unravel(i, idx);
        for (int a = 0; a < f.m; ++a) idx[a] += lo[a];
        std::size_t j = f.ravel(idx);
        std::copy(f.at(j), f.at(j) + f.n, g.at(i));
        if (!f.mask.empty()) g.mask[i] = f.mask[j];
    }
    return g;
}

// Grid points inside the closed box [lo, hi] as a sub-grid.
inline GridField restrict_to_box(const GridField& f, const std::vector<double>& lo, const std::vector<double>& hi) {
    std::vector<int> a0(f.m), a1(f.m);
    for (int a = 0; a < f.m; ++a) {
        a0[a] = static_cast<int>(std::ceil((lo[a] - f.origin[a]) / f.h - 1e-9));
        a1[a] = static_cast<int>(std::floor((hi[a] - f.origin[a]) / f.h + 1e-9));
    }
    return subgrid(f, a0, a1);
}

// ---------------------------------------------------------------------------------------------
// Mollification

struct Mollifier {
    double radius = 1;
    std::function<double(double)> profile = [](double t) { return t < 1 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; };
};

struct Kernel {
    int R = 0;                         // offsets in [-R, R]^m
    std::vector<std::array<int, 3>> offsets;
    std::vector<double> weights;       // sum to 1
};

inline Kernel sample_kernel(const Mollifier& phi, double h, int m) {
    if (phi.radius < 2 * h * (1 - 1e-12)) throw ConfigError("mollifier radius must be at least twice the spacing");
    Kernel k;
    k.R = static_cast<int>(std::ceil(phi.radius / h));
    double total = 0;
    int o[3] = {0, 0, 0};
    const int span = 2 * k.R + 1;
    int count = 1;
    for (int a = 0; a < m; ++a) count *= span;
    for (int t = 0; t < count; ++t) {
        int r = t;
        double d2 = 0;
        for (int a = m - 1; a >= 0; --a) {
            o[a] = r % span - k.R;
            r /= span;
            d2 += double(o[a]) * o[a];
        }
        double s = std::sqrt(d2) * h / phi.radius;
        if (s >= 1) continue;
        double w = phi.profile(s);
        if (w <= 0) continue;
        k.offsets.push_back({o[0], o[1], o[2]});
        k.weights.push_back(w);
        total += w;
    }
    for (double& w : k.weights) w /= total;
    int R = 0;
    for (auto& off : k.offsets)
        for (int a = 0; a < m; ++a) R = std::max(R, std::abs(off[a]));
    k.R = R;
    return k;
}

// Discrete convolution with the sampled kernel; the output grid is the input shrunk by the kernel reach.
inline GridField mollify(const GridField& f, const Mollifier& phi) {
    Kernel k = sample_kernel(phi, f.h, f.m);
    std::vector<int> dims(f.m);
    std::vector<double> org(f.m);
    for (int a = 0; a < f.m; ++a) {
        dims[a] = f.dims[a] - 2 * k.R;
        org[a] = f.origin[a] + k.R * f.h;
        if (dims[a] < 2) throw DomainError("insufficient margin for mollification");
    }
    GridField g = GridField::make(f.n, dims, org, f.h);
    if (!f.mask.empty()) g.mask.assign(g.size(), 1);
    std::vector<std::ptrdiff_t> shift(k.offsets.size());
    for (std::size_t q = 0; q < k.offsets.size(); ++q) {
        std::ptrdiff_t s = 0;
        for (int a = 0; a < f.m; ++a) s += static_cast<std::ptrdiff_t>(k.offsets[q][a]) * static_cast<std::ptrdiff_t>(f.stride(a));
        shift[q] = s;
    }
    parallel_for(g.size(), [&](std::size_t i) {
        int idx[3];
        g.unravel(i, idx);
        for (int a = 0; a < f.m; ++a) idx[a] += k.R;
        std::size_t c0 = f.ravel(idx);
        double* out = g.at(i);
        for (int c = 0; c < f.n; ++c) out[c] = 0;
        for (std::size_t q = 0; q < shift.size(); ++q) {
            std::size_t j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(c0) + shift[q]);
            if (!f.active(j)) {
                g.mask[i] = 0;
                break;
            }
            const double* v = f.at(j);
            for (int c = 0; c < f.n; ++c) out[c] += k.weights[q] * v[c];
        }
        if (!g.active(i))
            for (int c = 0; c < f.n; ++c) out[c] = 0;
    });
    return g;
}

// ---------------------------------------------------------------------------------------------
// Norms and distances

// sup over pairs r_min <= |x-y| <= r_max of |D^j f(x) - D^j f(y)| / |x-y|^beta.
inline double holder_seminorm(const GridField& f, int j, double beta, double r_min, double r_max) {
    if (j < 0 || j > 3) throw ConfigError("Hölder order must be 0..3");
    if (!(beta > 0 && beta <= 1)) throw ConfigError("Hölder exponent must lie in (0,1]");
    GridField D = derivative(f, j);
    std::vector<std::size_t> pts;
    for (std::size_t i = 0; i < D.size(); ++i)
        if (D.active(i)) pts.push_back(i);
    const int K = D.n, m = D.m;
    std::vector<std::array<int, 3>> idx(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p) D.unravel(pts[p], idx[p].data());
    const double lo2 = r_min * r_min * (1 - 1e-12), hi2 = r_max * r_max * (1 + 1e-12);
    std::vector<double> best(pts.size(), -1.0);
    parallel_for(pts.size(), [&](std::size_t p) {
        double b = -1;
        const double* a = D.at(pts[p]);
        for (std::size_t q = p + 1; q < pts.size(); ++q) {
            double d2 = 0;
            for (int k = 0; k < m; ++k) {
                double t = (idx[p][k] - idx[q][k]) * D.h;
                d2 += t * t;
            }
            if (d2 < lo2 || d2 > hi2) continue;
            const double* c = D.at(pts[q]);
            double s = 0;
            for (int k = 0; k < K; ++k) s += (a[k] - c[k]) * (a[k] - c[k]);
            double v = std::sqrt(s) / std::pow(d2, 0.5 * beta);
            b = std::max(b, v);
        }
        best[p] = b;
    }, 16);
    double out = -1;
    for (double b : best) out = std::max(out, b);
    if (out < 0) throw DomainError("empty pair set for the Hölder seminorm");
    return out;
}

// Max of |f| over grid points in the closed region.
inline double c0_norm(const GridField& f, const Region& R = Region::whole()) {
    double best = 0;
    double x[3];
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.active(i)) continue;
        f.point(i, x);
        if (!R.contains(x, f.m)) continue;
        best = std::max(best, point_norm(f.at(i), f.n));
    }
    return best;
}

inline double l1_norm(const GridField& f, const Region& R = Region::whole()) {
    double s = 0;
    for (auto q : quadrature(f, R)) s += q.w * point_norm(f.at(q.i), f.n);
    return s;
}

inline void require_same_grid(const GridField& f, const GridField& g) {
    if (!f.same_grid(g) || f.n != g.n) throw ConfigError("fields live on different grids");
}

inline double l1_distance(const GridField& f, const GridField& g, const Region& R = Region::whole()) {
    require_same_grid(f, g);
    double s = 0;
    for (auto q : quadrature(f, R)) {
        if (!g.active(q.i)) throw DomainError("region touches masked-out grid points");
        double d = 0;
        for (int c = 0; c < f.n; ++c) d += (f.at(q.i)[c] - g.at(q.i)[c]) * (f.at(q.i)[c] - g.at(q.i)[c]);
        s += q.w * std::sqrt(d);
    }
    return s;
}

inline double l2_distance(const GridField& f, const GridField& g, const Region& R = Region::whole()) {
    require_same_grid(f, g);
    double s = 0;
    for (auto q : quadrature(f, R)) {
        if (!g.active(q.i)) throw DomainError("region touches masked-out grid points");
        for (int c = 0; c < f.n; ++c) s += q.w * (f.at(q.i)[c] - g.at(q.i)[c]) * (f.at(q.i)[c] - g.at(q.i)[c]);
    }
    return std::sqrt(s);
}

inline double c0_distance(const GridField& f, const GridField& g, const Region& R = Region::whole()) {
    require_same_grid(f, g);
    double best = 0;
    double x[3];
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!f.active(i) || !g.active(i)) continue;
        f.point(i, x);
        if (!R.contains(x, f.m)) continue;
        double d = 0;
        for (int c = 0; c < f.n; ++c) d += (f.at(i)[c] - g.at(i)[c]) * (f.at(i)[c] - g.at(i)[c]);
        best = std::max(best, std::sqrt(d));
    }
    return best;
}

inline double dirichlet_energy(const GridField& f, const Region& R = Region::whole()) {
    double s = 0;
    std::vector<double> gv(f.n * f.m);
    double* g = gv.data();
    for (auto q : quadrature(f, R)) {
        gradient_at(f, q.i, g);
        double t = 0;
        for (int k = 0; k < f.n * f.m; ++k) t += g[k] * g[k];
        s += q.w * t;
    }
    return s;
}

// Mean of Du over B_r(center), row-major n x m.
inline std::vector<double> average_gradient(const GridField& f, const std::vector<double>& center, double r) {
    Region R = Region::disk(center, r);
    std::vector<double> acc(f.n * f.m, 0.0);
    std::vector<double> gv(f.n * f.m);
    double* g = gv.data();
    double W = 0;
    for (auto q : quadrature(f, R)) {
        gradient_at(f, q.i, g);
        for (int k = 0; k < f.n * f.m; ++k) acc[k] += q.w * g[k];
        W += q.w;
    }
    if (W <= 0) throw DomainError("empty disk");
    for (double& v : acc) v /= W;
    return acc;
}

}  // namespace cmlab
