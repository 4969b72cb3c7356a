#pragma once
/// Discrete area minimization for graphs with Dirichlet data, first-variation residuals and
/// boundary-data presets.

#include "cmlab/area.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <complex>

namespace cmlab {

// P1 elements on the grid. In 2-d each cell is split along both diagonals and the two
// triangulations are averaged, so the discrete functional keeps the symmetries of the square.
struct Mesh {
    int m = 0;
    struct Element {
        std::array<std::size_t, 3> node{};
        int shape = 0;
    };
    std::vector<Element> elems;
    std::vector<std::array<std::array<double, 2>, 3>> grads;  // per shape: gradient of each barycentric coordinate
    double weight = 0;                                        // |T| times the averaging factor
    int nodes_per_elem = 0;

    explicit Mesh(const GridField& f) : m(f.m) {
        if (f.m == 1) {
            nodes_per_elem = 2;
            grads.push_back({{{-1 / f.h, 0}, {1 / f.h, 0}, {0, 0}}});
            weight = f.h;
            for (int i = 0; i + 1 < f.dims[0]; ++i) elems.push_back({{std::size_t(i), std::size_t(i + 1), 0}, 0});
        } else if (f.m == 2) {
            nodes_per_elem = 3;
            const double ih = 1 / f.h;
            // local corners: a=(0,0) b=(1,0) c=(0,1) d=(1,1) in (axis0, axis1)
            // split 1: (a,b,d), (a,d,c); split 2: (a,b,c), (b,d,c)
            grads.push_back({{{-ih, 0}, {ih, -ih}, {0, ih}}});   // a,b,d
            grads.push_back({{{0, -ih}, {ih, 0}, {-ih, ih}}});   // a,d,c
            grads.push_back({{{-ih, -ih}, {ih, 0}, {0, ih}}});   // a,b,c
            grads.push_back({{{0, -ih}, {ih, ih}, {-ih, 0}}});   // b,d,c
            weight = 0.25 * f.h * f.h;
            const std::size_t s0 = f.stride(0), s1 = f.stride(1);
            for (int i = 0; i + 1 < f.dims[0]; ++i)
                for (int j = 0; j + 1 < f.dims[1]; ++j) {
                    std::size_t a = i * s0 + j * s1, b = a + s0, c = a + s1, d = a + s0 + s1;
                    elems.push_back({{a, b, d}, 0});
                    elems.push_back({{a, d, c}, 1});
                    elems.push_back({{a, b, c}, 2});
                    elems.push_back({{b, d, c}, 3});
                }
        } else {
            throw ConfigError("discrete area minimization supports m = 1 and m = 2");
        }
    }

    // Du on element e, row-major n x m.
    void slope(const GridField& f, const Element& e, double* D) const {
        const int n = f.n;
        for (int k = 0; k < n * m; ++k) D[k] = 0;
        for (int k = 0; k < nodes_per_elem; ++k) {
            const double* u = f.at(e.node[k]);
            for (int c = 0; c < n; ++c)
                for (int a = 0; a < m; ++a) D[c * m + a] += u[c] * grads[e.shape][k][a];
        }
    }
};

// Area integrand pieces at slope A (n x m): F = sqrt(det G), G = Id + A^T A.
struct AreaIntegrand {
    int n, m;
    SMat A, Ginv, AGinv;
    double F = 1, Fm1 = 0;

    AreaIntegrand(const double* D, int n_, int m_) : n(n_), m(m_), A(n_, m_) {
        for (int c = 0; c < n; ++c)
            for (int a = 0; a < m; ++a) A(c, a) = D[c * m + a];
        SMat M = A.transpose() * A;
        SMat G = SMat::Identity(m, m) + M;
        double detG = G.determinant();
        F = std::sqrt(detG);
        // F - 1 without cancellation: det G - 1 = tr M (+ det M when m = 2)
        double t = M.trace() + (m == 2 ? M.determinant() : 0.0);
        Fm1 = t / (1 + F);
        Ginv = G.inverse();
        AGinv = A * Ginv;
    }

    // DF = F A G^{-1}
    SMat dF() const { return F * AGinv; }

    // d(DF)[E]
    SMat d2F(const SMat& E) const {
        double dFE = F * (AGinv.cwiseProduct(E)).sum();
        SMat S = E.transpose() * A + A.transpose() * E;
        return dFE * AGinv + F * E * Ginv - F * AGinv * S * Ginv;
    }
};

inline double discrete_area(const GridField& f, const Mesh& mesh) {
    const int n = f.n, m = f.m;
    double total = 1;
    for (int a = 0; a < m; ++a) total *= (f.dims[a] - 1) * f.h;
    std::vector<double> part(mesh.elems.size());
    parallel_for(mesh.elems.size(), [&](std::size_t e) {
        double D[12];
        mesh.slope(f, mesh.elems[e], D);
        part[e] = AreaIntegrand(D, n, m).Fm1;
    }, 4096);
    double s = 0;
    for (double p : part) s += p;
    return total + mesh.weight * s;
}
inline double discrete_area(const GridField& f) { return discrete_area(f, Mesh(f)); }

// Gradient of the discrete area with respect to every nodal value (n per node).
inline std::vector<double> discrete_area_gradient(const GridField& f, const Mesh& mesh) {
    const int n = f.n, m = f.m, K = mesh.nodes_per_elem;
    std::vector<double> g(f.size() * n, 0.0);
    double D[12];
    for (auto& e : mesh.elems) {
        mesh.slope(f, e, D);
        SMat dF = AreaIntegrand(D, n, m).dF();
        for (int k = 0; k < K; ++k)
            for (int c = 0; c < n; ++c) {
                double s = 0;
                for (int a = 0; a < m; ++a) s += dF(c, a) * mesh.grads[e.shape][k][a];
                g[e.node[k] * n + c] += mesh.weight * s;
            }
    }
    return g;
}

inline bool on_grid_boundary(const GridField& f, std::size_t i, int layers = 1) {
    int idx[3];
    f.unravel(i, idx);
    for (int a = 0; a < f.m; ++a)
        if (idx[a] < layers || idx[a] > f.dims[a] - 1 - layers) return true;
    return false;
}

// max |u(x) - u(y)| / |x - y| over pairs of boundary nodes.
inline double boundary_lipschitz(const GridField& f) {
    std::vector<std::size_t> b;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (on_grid_boundary(f, i)) b.push_back(i);
    std::vector<double> best(b.size(), 0.0);
    parallel_for(b.size(), [&](std::size_t p) {
        double x[3], y[3], s = 0;
        f.point(b[p], x);
        for (std::size_t q = p + 1; q < b.size(); ++q) {
            f.point(b[q], y);
            double d2 = 0, v2 = 0;
            for (int a = 0; a < f.m; ++a) d2 += (x[a] - y[a]) * (x[a] - y[a]);
            for (int c = 0; c < f.n; ++c) v2 += (f.at(b[p])[c] - f.at(b[q])[c]) * (f.at(b[p])[c] - f.at(b[q])[c]);
            s = std::max(s, std::sqrt(v2 / d2));
        }
        best[p] = s;
    }, 16);
    double out = 0;
    for (double s : best) out = std::max(out, s);
    return out;
}

// Componentwise discrete harmonic extension of the boundary ring ((2m+1)-point Laplacian).
inline GridField harmonic_extension(const GridField& boundary) {
    GridField u = boundary;
    const std::size_t N = u.size();
    std::vector<long> id(N, -1);
    long nu = 0;
    for (std::size_t i = 0; i < N; ++i)
        if (!on_grid_boundary(u, i)) id[i] = nu++;
    if (nu == 0) return u;
    std::vector<Eigen::Triplet<double>> trip;
    Mat rhs = Mat::Zero(nu, u.n);
    for (std::size_t i = 0; i < N; ++i) {
        if (id[i] < 0) continue;
        trip.emplace_back(id[i], id[i], 2.0 * u.m);
        for (int a = 0; a < u.m; ++a)
            for (std::size_t j : {i + u.stride(a), i - u.stride(a)}) {
                if (id[j] >= 0) trip.emplace_back(id[i], id[j], -1.0);
                else
                    for (int c = 0; c < u.n; ++c) rhs(id[i], c) += u.at(j)[c];
            }
    }
    Eigen::SparseMatrix<double> L(nu, nu);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
    if (solver.info() != Eigen::Success) throw NumericalError("Laplace factorization failed");
    Mat sol = solver.solve(rhs);
    for (std::size_t i = 0; i < N; ++i)
        if (id[i] >= 0)
            for (int c = 0; c < u.n; ++c) u.at(i)[c] = sol(id[i], c);
    return u;
}

struct MinimizeOptions {
    double tol = 1e-9;          // on the l1 norm of the discrete first variation
    int max_iter = 10000;
    double boundary_lip_max = 0.5;
};

struct MinimizeResult {
    GridField solution;
    GridField boundary;  // boundary ring of the data (interior masked out)
    int iterations = 0;
    double final_gradient_norm = 0;
    double warm_start_gradient_norm = 0;
    std::vector<double> energy_history;  // warm start first
    double boundary_lipschitz = 0;

    json to_json() const {
        json j;
        j["iterations"] = iterations;
        j["final_gradient_norm"] = final_gradient_norm;
        j["warm_start_gradient_norm"] = warm_start_gradient_norm;
        j["energy_history"] = energy_history;
        j["boundary_lipschitz"] = boundary_lipschitz;
        return j;
    }
};

// Minimizes the discrete area with the boundary ring of `data` held fixed. Newton steps on the
// exact element Hessian (shifted when indefinite), Armijo backtracking with factor 1/2.
inline MinimizeResult minimize_area(const GridField& data, const MinimizeOptions& opt = {}) {
    data.validate();
    if (!data.mask.empty()) throw ConfigError("minimization expects an unmasked grid");
    for (int d : data.dims)
        if (d < 3) throw ConfigError("minimization needs at least 3 samples per axis");
    MinimizeResult res;
    res.boundary_lipschitz = boundary_lipschitz(data);
    if (res.boundary_lipschitz > opt.boundary_lip_max)
        throw ConfigError("boundary data Lipschitz constant " + fmt_double(res.boundary_lipschitz) + " exceeds " +
                          fmt_double(opt.boundary_lip_max));
    res.boundary = data;
    res.boundary.mask.assign(data.size(), 0);
    for (std::size_t i = 0; i < data.size(); ++i)
        if (on_grid_boundary(data, i)) res.boundary.mask[i] = 1;
        else
            for (int c = 0; c < data.n; ++c) res.boundary.at(i)[c] = 0;

    GridField u = harmonic_extension(data);
    const int n = u.n, m = u.m;
    Mesh mesh(u);
    const std::size_t N = u.size();
    std::vector<long> id(N, -1);
    long nu = 0;
    for (std::size_t i = 0; i < N; ++i)
        if (!on_grid_boundary(u, i)) id[i] = nu++;
    const long dof = nu * n;

    auto grad_norm = [&](const std::vector<double>& g) {
        double s = 0;
        for (std::size_t i = 0; i < N; ++i)
            if (id[i] >= 0)
                for (int c = 0; c < n; ++c) s += std::abs(g[i * n + c]);
        return s;
    };

    // sparsity pattern and per-element slots
    const int K = mesh.nodes_per_elem;
    Eigen::SparseMatrix<double> H(dof, dof);
    {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(mesh.elems.size() * K * K * n * n / 2);
        for (auto& e : mesh.elems)
            for (int k = 0; k < K; ++k)
                for (int l = 0; l < K; ++l) {
                    long a = id[e.node[k]], b = id[e.node[l]];
                    if (a < 0 || b < 0) continue;
                    for (int c = 0; c < n; ++c)
                        for (int d = 0; d < n; ++d)
                            if (a * n + c >= b * n + d) trip.emplace_back(a * n + c, b * n + d, 0.0);
                }
        H.setFromTriplets(trip.begin(), trip.end());
        H.makeCompressed();
    }
    auto slot = [&](long r, long c) -> double& {
        // lower triangle: column c, row r >= c
        auto* inner = H.innerIndexPtr();
        auto* outer = H.outerIndexPtr();
        auto it = std::lower_bound(inner + outer[c], inner + outer[c + 1], static_cast<int>(r));
        return H.valuePtr()[it - inner];
    };
    std::vector<double*> slots;
    slots.reserve(mesh.elems.size() * K * K * n * n);
    for (auto& e : mesh.elems)
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < K; ++l)
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) {
                        long a = id[e.node[k]], b = id[e.node[l]];
                        long r = a * n + c, col = b * n + d;
                        slots.push_back(a < 0 || b < 0 || r < col ? nullptr : &slot(r, col));
                    }

    auto assemble = [&]() {
        std::fill(H.valuePtr(), H.valuePtr() + H.nonZeros(), 0.0);
        std::size_t s = 0;
        double D[12];
        for (auto& e : mesh.elems) {
            mesh.slope(u, e, D);
            AreaIntegrand I(D, n, m);
            // columns of the element Hessian: E = e_d ⊗ g_l
            for (int k = 0; k < K; ++k)
                for (int l = 0; l < K; ++l) {
                    for (int c = 0; c < n; ++c)
                        for (int d = 0; d < n; ++d) {
                            double*& p = slots[s++];
                            if (!p) continue;
                            SMat E = SMat::Zero(n, m);
                            for (int a = 0; a < m; ++a) E(d, a) = mesh.grads[e.shape][l][a];
                            SMat dd = I.d2F(E);
                            double v = 0;
                            for (int a = 0; a < m; ++a) v += dd(c, a) * mesh.grads[e.shape][k][a];
                            *p += mesh.weight * v;
                        }
                }
        }
    };

    double energy = discrete_area(u, mesh);
    auto g = discrete_area_gradient(u, mesh);
    double gn = grad_norm(g);
    res.energy_history.push_back(energy);
    res.warm_start_gradient_norm = gn;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> solver;
    bool analyzed = false;
    int it = 0;
    while (gn >= opt.tol) {
        if (++it > opt.max_iter) throw NumericalError("area minimization did not converge");
        assemble();
        if (!analyzed) {
            solver.analyzePattern(H);
            analyzed = true;
        }
        Vec rhs(dof);
        for (std::size_t i = 0; i < N; ++i)
            if (id[i] >= 0)
                for (int c = 0; c < n; ++c) rhs[id[i] * n + c] = -g[i * n + c];
        Vec dir;
        double shift = 0;
        for (int attempt = 0; attempt < 20; ++attempt) {
            solver.setShift(shift);
            solver.factorize(H);
            bool ok = solver.info() == Eigen::Success && (solver.vectorD().array() > 0).all();
            if (ok) {
                dir = solver.solve(rhs);
                if (dir.allFinite() && dir.dot(rhs) > 0) break;
            }
            shift = shift == 0 ? 1e-8 * mesh.weight : shift * 10;
            dir.resize(0);
        }
        if (dir.size() == 0) throw NumericalError("Newton system could not be solved");
        const double slope0 = -dir.dot(rhs);
        GridField trial = u;
        double t = 1, en = 0;
        bool accepted = false;
        std::vector<double> gt;
        for (int back = 0; back < 50; ++back) {
            for (std::size_t i = 0; i < N; ++i)
                if (id[i] >= 0)
                    for (int c = 0; c < n; ++c) trial.at(i)[c] = u.at(i)[c] + t * dir[id[i] * n + c];
            en = discrete_area(trial, mesh);
            if (en <= energy + 1e-4 * t * slope0) {
                accepted = true;
                break;
            }
            // energy flat at roundoff: accept steps that reduce the first variation
            if (en - energy <= 1e-14 * std::abs(energy)) {
                gt = discrete_area_gradient(trial, mesh);
                if (grad_norm(gt) < gn) {
                    accepted = true;
                    break;
                }
                gt.clear();
            }
            t *= 0.5;
        }
        if (!accepted) throw NumericalError("area minimization line search failed at first-variation norm " + fmt_double(gn));
        u = std::move(trial);
        energy = std::min(en, energy);
        g = gt.empty() ? discrete_area_gradient(u, mesh) : gt;
        gn = grad_norm(g);
        res.energy_history.push_back(en);
    }
    res.solution = std::move(u);
    res.iterations = it;
    res.final_gradient_norm = gn;
    return res;
}

// max over κ of |Σ_T |T| DF(Du_T) : Dκ_T| / max_T |Dκ_T|, κ supported away from the outer two rings.
inline double first_variation_residual(const GridField& f, const std::vector<GridField>& kappas) {
    Mesh mesh(f);
    const int n = f.n, m = f.m;
    std::vector<SMat> dF(mesh.elems.size());
    double D[12];
    for (std::size_t e = 0; e < mesh.elems.size(); ++e) {
        mesh.slope(f, mesh.elems[e], D);
        dF[e] = AreaIntegrand(D, n, m).dF();
    }
    double worst = 0;
    for (auto& k : kappas) {
        if (!k.same_grid(f) || k.n != n) throw ConfigError("test field lives on a different grid");
        for (std::size_t i = 0; i < k.size(); ++i)
            if (on_grid_boundary(k, i, 2))
                for (int c = 0; c < n; ++c)
                    if (k.at(i)[c] != 0) throw ConfigError("test field is not compactly supported");
        double pair = 0, dmax = 0;
        for (std::size_t e = 0; e < mesh.elems.size(); ++e) {
            mesh.slope(k, mesh.elems[e], D);
            double s = 0, nk = 0;
            for (int c = 0; c < n; ++c)
                for (int a = 0; a < m; ++a) {
                    s += dF[e](c, a) * D[c * m + a];
                    nk += D[c * m + a] * D[c * m + a];
                }
            pair += mesh.weight * s;
            dmax = std::max(dmax, std::sqrt(nk));
        }
        if (dmax == 0) continue;
        worst = std::max(worst, std::abs(pair) / dmax);
    }
    return worst;
}

// area - |R| - 1/2 ∫|Df|^2, both integrals by the same cell quadrature so that the O(|Df|^2) terms cancel exactly.
inline double linearization_gap(const GridField& f, const Region& R = Region::whole()) {
    double s = 0;
    std::vector<double> g(f.n * f.m);
    for (auto q : cell_quadrature(f, R)) {
        cell_gradient(f, q.i, g.data());
        AreaIntegrand I(g.data(), f.n, f.m);
        double d2 = 0;
        for (double x : g) d2 += x * x;
        // F - 1 - |A|^2/2 = (det M - |A|^2 (F - 1) / 2) / (1 + F)
        SMat M = I.A.transpose() * I.A;
        double detM = f.m == 2 ? M.determinant() : 0.0;
        s += q.w * (detM - 0.5 * d2 * I.Fm1) / (1 + I.F);
    }
    return s;
}

// ---------------------------------------------------------------------------------------------
// Boundary-data presets

struct Preset {
    std::string kind = "affine";   // affine | trig | poly | saddle
    double eps = 0.1;
    int k = 2;
    std::vector<double> slope;     // affine: row-major n x m
    std::vector<double> offset;    // affine: n
};

// Fills every grid point with the preset map (only the boundary ring matters to the solver).
inline GridField preset_field(const Preset& p, int n, const GridSpec& g) {
    const int m = static_cast<int>(g.dims.size());
    if (m != 2 && p.kind != "affine") throw ConfigError("trig, poly and saddle presets are two-dimensional");
    return GridField::sample(n, g.dims, g.origin, g.h, [&](const double* x, double* v) {
        if (p.kind == "affine") {
            for (int c = 0; c < n; ++c) {
                double s = p.offset.empty() ? 0.0 : p.offset.at(c);
                for (int a = 0; a < m; ++a) s += (p.slope.empty() ? 0.0 : p.slope.at(c * m + a)) * x[a];
                v[c] = s;
            }
        } else if (p.kind == "trig") {
            double th = std::atan2(x[1], x[0]);
            v[0] = p.eps * std::cos(p.k * th);
            if (n > 1) v[1] = p.eps * std::sin(p.k * th);
            for (int c = 2; c < n; ++c) v[c] = 0;
        } else if (p.kind == "poly") {
            std::complex<double> z(x[0], x[1]), w = p.eps * std::pow(z, p.k);
            v[0] = w.real();
            if (n > 1) v[1] = w.imag();
            for (int c = 2; c < n; ++c) v[c] = 0;
        } else if (p.kind == "saddle") {
            v[0] = p.eps * (x[0] * x[0] - x[1] * x[1]);
            for (int c = 1; c < n; ++c) v[c] = 0;
        } else {
            throw ConfigError("unknown preset '" + p.kind + "'");
        }
    });
}

}  // namespace cmlab
