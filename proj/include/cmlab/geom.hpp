#pragma once
/// Near-horizontal m-planes as slope matrices, unit m-vectors via Plücker coordinates,
/// minimal rotations and reparametrization of graphs over tilted planes.

#include "cmlab/field.hpp"
#include "cmlab/io.hpp"

#include <Eigen/SVD>

namespace cmlab {

// The m-plane through p spanned by the columns of [Id; A], A an n x m slope.
struct Plane {
    Vec p;
    Mat A;

    int m() const { return static_cast<int>(A.cols()); }
    int n() const { return static_cast<int>(A.rows()); }

    static Plane horizontal(int m, int n) { return {Vec::Zero(m + n), Mat::Zero(n, m)}; }
    static Plane through(Vec p, Mat A) {
        if (p.size() != A.rows() + A.cols()) throw ConfigError("basepoint and slope sizes disagree");
        return {std::move(p), std::move(A)};
    }

    void check(double C0) const {
        if (!(A.norm() <= C0)) throw DomainError("plane slope exceeds the near-horizontal bound");
    }
};

// Slope matrix from a row-major n x m array.
inline Mat slope_from(const double* a, int n, int m) {
    Mat A(n, m);
    for (int c = 0; c < n; ++c)
        for (int j = 0; j < m; ++j) A(c, j) = a[c * m + j];
    return A;
}

inline json plane_to_json(const Plane& P) {
    json j;
    j["basepoint"] = std::vector<double>(P.p.data(), P.p.data() + P.p.size());
    std::vector<double> s;
    for (int c = 0; c < P.n(); ++c)
        for (int k = 0; k < P.m(); ++k) s.push_back(P.A(c, k));
    j["slope"] = s;
    j["m"] = P.m();
    j["n"] = P.n();
    return j;
}

inline Plane plane_from_json(const json& j) {
    int m = j.at("m").get<int>(), n = j.at("n").get<int>();
    auto bp = j.at("basepoint").get<std::vector<double>>();
    auto s = j.at("slope").get<std::vector<double>>();
    if (static_cast<int>(bp.size()) != m + n || static_cast<int>(s.size()) != m * n) throw ConfigError("bad plane record");
    return Plane::through(Eigen::Map<Vec>(bp.data(), m + n), slope_from(s.data(), n, m));
}

// Modified Gram-Schmidt on the columns of M, in index order.
inline Mat gram_schmidt(Mat M) {
    for (int k = 0; k < M.cols(); ++k) {
        for (int j = 0; j < k; ++j) M.col(k) -= M.col(j).dot(M.col(k)) * M.col(j);
        double nk = M.col(k).norm();
        if (nk < 1e-300) throw DomainError("degenerate frame");
        M.col(k) /= nk;
    }
    return M;
}

inline Mat tangent_basis(const Mat& A) {
    const int m = static_cast<int>(A.cols()), n = static_cast<int>(A.rows());
    Mat M(m + n, m);
    M.topRows(m).setIdentity();
    M.bottomRows(n) = A;
    return gram_schmidt(M);
}

inline Mat normal_basis(const Mat& A) {
    const int m = static_cast<int>(A.cols()), n = static_cast<int>(A.rows());
    Mat M(m + n, n);
    M.topRows(m) = -A.transpose();
    M.bottomRows(n).setIdentity();
    return gram_schmidt(M);
}

// Coordinates of the unit m-vector of [Id; A] in the basis e_I, I running over the
// lexicographic m-subsets of {0..m+n-1}.
struct PluckerTable {
    int m = 0, n = 0;
    std::vector<std::vector<int>> rows;
    PluckerTable() = default;
    PluckerTable(int m_, int n_) : m(m_), n(n_), rows(subsets(m_ + n_, m_)) {}
    int size() const { return static_cast<int>(rows.size()); }

    // Writes the unnormalized minors of [Id; A] (A row-major n x m) to out and returns their norm.
    double minors(const double* a, double* out) const {
        double s = 0;
        SMat M(m, m);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            for (int r = 0; r < m; ++r) {
                int row = rows[k][r];
                for (int c = 0; c < m; ++c) M(r, c) = row < m ? (row == c ? 1.0 : 0.0) : a[(row - m) * m + c];
            }
            double d = m == 1 ? M(0, 0) : m == 2 ? M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0) : M.determinant();
            out[k] = d;
            s += d * d;
        }
        return std::sqrt(s);
    }

    void unit(const double* a, double* out) const {
        double s = minors(a, out);
        for (int k = 0; k < size(); ++k) out[k] /= s;
    }
};

// <P_vec, Q_vec> for the orienting unit m-vectors: det(B_P^T B_Q).
inline double mvector_inner(const Mat& A, const Mat& B) {
    Mat BA = tangent_basis(A), BB = tangent_basis(B);
    return (BA.transpose() * BB).determinant();
}
inline double mvector_inner(const Plane& P, const Plane& Q) { return mvector_inner(P.A, Q.A); }

// |P_vec - Q_vec|^2 computed from coordinate differences (no cancellation for nearby planes).
inline double mvector_gap(const Mat& A, const Mat& B) {
    const int m = static_cast<int>(A.cols()), n = static_cast<int>(A.rows());
    PluckerTable T(m, n);
    std::vector<double> a(n * m), b(n * m), pa(T.size()), pb(T.size());
    for (int c = 0; c < n; ++c)
        for (int j = 0; j < m; ++j) {
            a[c * m + j] = A(c, j);
            b[c * m + j] = B(c, j);
        }
    T.unit(a.data(), pa.data());
    T.unit(b.data(), pb.data());
    double s = 0;
    for (int k = 0; k < T.size(); ++k) s += (pa[k] - pb[k]) * (pa[k] - pb[k]);
    return s;
}

// |T_vec - P_vec|^2 for the tangent plane of slope Du (row-major n x m).
inline double tangent_mvector_gap(const double* Du, const Plane& P, double C0 = 4) {
    Mat D = slope_from(Du, P.n(), P.m());
    if (!(D.norm() <= C0)) throw DomainError("slope bound violated");
    return mvector_gap(D, P.A);
}

struct Rotation {
    Mat Q;
    double deviation = 0;
};

// Rotation of least |Q - Id| carrying the linear span of P onto that of Q, built from principal vectors.
inline Rotation minimal_rotation(const Mat& A, const Mat& B) {
    const int m = static_cast<int>(A.cols()), N = static_cast<int>(A.rows() + A.cols());
    Mat BA = tangent_basis(A), BB = tangent_basis(B);
    Eigen::JacobiSVD<Mat> svd(BA.transpose() * BB, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat U = BA * svd.matrixU(), V = BB * svd.matrixV();
    Mat Q = Mat::Identity(N, N);
    for (int i = 0; i < m; ++i) {
        Vec u = U.col(i), v = V.col(i);
        double c = std::clamp(u.dot(v), -1.0, 1.0);
        Vec w = v - c * u;
        double s = w.norm();
        if (s < 1e-15) continue;
        w /= s;
        Q += (c - 1) * (u * u.transpose() + w * w.transpose()) + s * (w * u.transpose() - u * w.transpose());
    }
    return {Q, (Q - Mat::Identity(N, N)).norm()};
}

// Certified Lipschitz bound for the graph of a Lip-L map after a rotation with |Q - Id| <= d.
inline double lipschitz_bound_after_rotation(double lip, double deviation, double c0 = 0.2) {
    if (!(lip >= 0 && lip <= 2)) throw ConfigError("Lipschitz constant outside [0, 2]");
    if (!(deviation >= 0 && deviation <= c0)) throw ConfigError("rotation deviation outside [0, c0]");
    double k = std::sqrt(1 + lip * lip);
    return (lip + deviation * k) / (1 - deviation * k);
}

// ---------------------------------------------------------------------------------------------
// Reparametrization

struct GridSpec {
    std::vector<int> dims;
    std::vector<double> origin;
    double h = 0;
};

enum class Interp { linear, cubic };

struct ReparamOptions {
    Interp interp = Interp::linear;
    double lip = -1;        // Lip(f); measured from the discrete gradient when negative
    double tol = 1e-12;     // absolute residual in target coordinates
    int max_iter = 50;
    bool mask_escapes = false;  // mask points whose preimage leaves f's domain instead of failing
};

namespace detail {
inline void eval_graph(const GridField& f, Interp in, const double* x, double* v, double* g) {
    if (in == Interp::cubic) sample_cubic(f, x, v, g);
    else sample_linear(f, x, v, g);
}
}  // namespace detail

// f is a graph over `source` in its orthonormal coordinates (x -> p_s + B_s x + N_s f(x)).
// Returns the same point set as a graph over `target`, sampled on `out`.
inline GridField reparametrize_graph(const GridField& f, const Plane& source, const Plane& target, const GridSpec& out,
                                     const ReparamOptions& opt = {}) {
    const int m = f.m, n = f.n;
    if (source.m() != m || source.n() != n || target.m() != m || target.n() != n)
        throw ConfigError("plane dimensions do not match the field");
    double lip = opt.lip;
    if (lip < 0) lip = c0_norm(gradient(f));
    double tilt = (target.A - source.A).norm();
    if (!(lip * tilt < 0.5)) throw DomainError("tilt too large for the Lipschitz constant of the graph");

    const Mat Bs = tangent_basis(source.A), Ns = normal_basis(source.A);
    const Mat Bt = tangent_basis(target.A), Nt = normal_basis(target.A);
    // fixed-capacity copies keep the per-point work free of heap allocation
    const SMat BtBs = Bt.transpose() * Bs, BtNs = Bt.transpose() * Ns;
    const SMat NtBs = Nt.transpose() * Bs, NtNs = Nt.transpose() * Ns;
    const Vec dp = source.p - target.p;
    const SVec btdp = Bt.transpose() * dp, ntdp = Nt.transpose() * dp;
    // initial guess: preimage under the graph frozen at its value over the source origin, which is
    // exact for affine graphs; an orthogonal projection would slide by tilt times the height offset
    SVec f0 = SVec::Zero(n);
    try {
        std::vector<double> c(m);
        for (int a = 0; a < m; ++a) c[a] = std::clamp(0.0, f.origin[a], f.upper(a));
        double v0[6];
        detail::eval_graph(f, opt.interp, c.data(), v0, nullptr);
        for (int c0 = 0; c0 < n; ++c0) f0[c0] = v0[c0];
    } catch (const DomainError&) {
    }
    const SMat x0map = BtBs.inverse();
    const SVec x0off = -x0map * (btdp + BtNs * f0);

    GridField g = GridField::make(n, out.dims, out.origin, out.h);
    if (g.m != m) throw ConfigError("output grid has the wrong dimension");
    if (opt.mask_escapes) g.mask.assign(g.size(), 1);

    std::vector<double> lo(m), hi(m);
    for (int a = 0; a < m; ++a) {
        lo[a] = f.origin[a];
        hi[a] = f.upper(a);
    }
    auto inside = [&](const SVec& x) {
        for (int a = 0; a < m; ++a)
            if (x[a] < lo[a] - 1e-9 * f.h || x[a] > hi[a] + 1e-9 * f.h) return false;
        return true;
    };

    parallel_for(g.size(), [&](std::size_t i) {
        double xp[3];
        g.point(i, xp);
        SVec xt(m);
        for (int a = 0; a < m; ++a) xt[a] = xp[a];
        SVec x = x0map * xt + x0off;
        double v[6], D[36];
        SVec r(m);
        SMat J(m, m);
        auto residual = [&](const SVec& y, bool jac) {
            SVec yc = y;
            for (int a = 0; a < m; ++a) yc[a] = std::clamp(y[a], lo[a], hi[a]);
            detail::eval_graph(f, opt.interp, yc.data(), v, jac ? D : nullptr);
            SVec fv = Eigen::Map<const Vec>(v, n);
            r = btdp + BtBs * y + BtNs * fv - xt;
            if (jac) {
                SMat Df(n, m);
                for (int c = 0; c < n; ++c)
                    for (int a = 0; a < m; ++a) Df(c, a) = D[c * m + a];
                J = BtBs + BtNs * Df;
            }
            return r.norm();
        };
        double res = residual(x, true);
        double vx[6];
        std::copy(v, v + n, vx);
        int it = 0;
        while (res > opt.tol) {
            if (++it > opt.max_iter) {
                std::ostringstream s;
                s << "reparametrization did not converge at target point (";
                for (int a = 0; a < m; ++a) s << (a ? ", " : "") << xp[a];
                s << "), residual " << res;
                throw NumericalError(s.str());
            }
            SVec step = J.partialPivLu().solve(r);
            if (step.norm() <= 1e-15 * (1 + x.norm())) break;  // converged to roundoff
            double t = 1, next = 0;
            SVec trial(m);
            for (int back = 0; back < 30; ++back) {
                trial = x - t * step;
                next = residual(trial, true);
                if (next < res || next <= opt.tol) break;
                t *= 0.5;
            }
            if (!(next < res) && next > opt.tol) {
                if (res < 1e3 * opt.tol) break;  // stalled at roundoff
                throw NumericalError("reparametrization line search failed");
            }
            x = trial;
            res = next;
            std::copy(v, v + n, vx);
        }
        if (!inside(x)) {
            if (opt.mask_escapes) {
                g.mask[i] = 0;
                for (int c = 0; c < n; ++c) g.at(i)[c] = 0;
                return;
            }
            throw DomainError("reparametrized point escapes the source domain");
        }
        SVec fv = Eigen::Map<const Vec>(vx, n);
        SVec fp = ntdp + NtBs * x + NtNs * fv;
        for (int c = 0; c < n; ++c) g.at(i)[c] = fp[c];
    }, 16);
    return g;
}

}  // namespace cmlab
