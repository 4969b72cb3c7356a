/// Planes, m-vectors, rotations and graph reparametrization.

#include "cmlab/geom.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cmlab;

namespace {

Mat random_slope(std::mt19937_64& rng, int n, int m, double scale) {
    std::uniform_real_distribution<double> U(-scale, scale);
    Mat A(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) A(i, j) = U(rng);
    return A;
}

// Wedge coordinates of v1 ^ ... ^ vm by explicit permutation expansion.
std::vector<double> wedge(const Mat& V) {
    const int N = static_cast<int>(V.rows()), m = static_cast<int>(V.cols());
    std::vector<double> out;
    for (auto& I : subsets(N, m)) {
        std::vector<int> perm(m);
        std::iota(perm.begin(), perm.end(), 0);
        double s = 0;
        do {
            int inv = 0;
            for (int a = 0; a < m; ++a)
                for (int b = a + 1; b < m; ++b) inv += perm[a] > perm[b];
            double t = (inv % 2) ? -1 : 1;
            for (int a = 0; a < m; ++a) t *= V(I[a], perm[a]);
            s += t;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.push_back(s);
    }
    return out;
}

GridField smooth_field(int N, double L, double amp, int n = 1) {
    double h = 2 * L / (N - 1);
    return GridField::sample(n, {N, N}, {-L, -L}, h, [&](const double* x, double* v) {
        v[0] = amp * (std::sin(1.3 * x[0] + 0.4) * std::cos(0.9 * x[1]) + 0.3 * x[0] * x[1]);
        if (n > 1) v[1] = amp * std::cos(x[0] - 0.7 * x[1]);
    });
}

}  // namespace

TEST(Geom, InnerIdentityAndSingleEntry) {
    Mat Z = Mat::Zero(2, 2);
    EXPECT_NEAR(mvector_inner(Z, Z), 1, 1e-15);
    for (double a : {0.1, 0.5, 1.7}) {
        Mat A = Mat::Zero(2, 2);
        A(1, 0) = a;
        EXPECT_NEAR(mvector_inner(Z, A), 1 / std::sqrt(1 + a * a), 1e-14);
        Mat B = Mat::Zero(1, 2);
        B(0, 1) = a;
        EXPECT_NEAR(mvector_inner(Mat::Zero(1, 2), B), 1 / std::sqrt(1 + a * a), 1e-14);
    }
}

TEST(Geom, InnerMatchesWedgeExpansion) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 100; ++t) {
        Mat A = random_slope(rng, 2, 2, 1.0), B = random_slope(rng, 2, 2, 1.0);
        auto wa = wedge(tangent_basis(A)), wb = wedge(tangent_basis(B));
        double brute = 0;
        for (std::size_t k = 0; k < wa.size(); ++k) brute += wa[k] * wb[k];
        EXPECT_NEAR(mvector_inner(A, B), brute, 1e-12);
        EXPECT_NEAR(mvector_inner(A, B), mvector_inner(B, A), 1e-14);
        EXPECT_NEAR(mvector_gap(A, B), 2 - 2 * brute, 1e-12);
        // normalized Plücker coordinates are the wedge coordinates
        PluckerTable T(2, 2);
        double a[4] = {A(0, 0), A(0, 1), A(1, 0), A(1, 1)}, pa[6];
        T.unit(a, pa);
        for (int k = 0; k < 6; ++k) EXPECT_NEAR(pa[k], wa[k], 1e-12);
    }
}

TEST(Geom, BasisReproducesPlane) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        Mat A = random_slope(rng, 2, 2, 2.0);
        Mat B = tangent_basis(A), N = normal_basis(A);
        EXPECT_LT((B.transpose() * B - Mat::Identity(2, 2)).norm(), 1e-13);
        EXPECT_LT((B.transpose() * N).norm(), 1e-13);
        Mat G(4, 2);
        G << Mat::Identity(2, 2), A;
        EXPECT_LT((G - B * (B.transpose() * G)).norm(), 1e-12);
    }
}

TEST(Geom, GapIsMetricLike) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
        Mat A = random_slope(rng, 2, 2, 1.0), B = random_slope(rng, 2, 2, 1.0);
        EXPECT_GE(mvector_gap(A, B), 0);
        EXPECT_EQ(mvector_gap(A, A), 0);
    }
}

TEST(Geom, TangentGapSingleEntryAndSeries) {
    Plane P0 = Plane::horizontal(2, 1);
    for (double a : {0.05, 0.3, 1.0}) {
        double du[2] = {a, 0};
        EXPECT_NEAR(tangent_mvector_gap(du, P0), 2 - 2 / std::sqrt(1 + a * a), 1e-14);
    }
    std::mt19937_64 rng(4);
    Plane P = Plane::horizontal(2, 2);
    for (int t = 0; t < 200; ++t) {
        Mat D = random_slope(rng, 2, 2, 0.05), A = random_slope(rng, 2, 2, 0.05);
        P.A = A;
        double du[4] = {D(0, 0), D(0, 1), D(1, 0), D(1, 1)};
        double val = tangent_mvector_gap(du, P);
        double quad = (D - A).squaredNorm();
        double quart = std::pow(D.norm(), 4) + std::pow(A.norm(), 4);
        EXPECT_LE(std::abs(val - quad), 4 * quart);
    }
    double big[4] = {5, 0, 0, 0};
    EXPECT_THROW(tangent_mvector_gap(big, P), DomainError);
}

TEST(Geom, GapComparableToSlopeDistance) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 2000; ++t) {
        Mat D = random_slope(rng, 2, 2, 1.0), A = random_slope(rng, 2, 2, 1.0);
        if (D.norm() > 1) D /= D.norm();
        if (A.norm() > 1) A /= A.norm();
        EXPECT_GE(mvector_gap(D, A), 0.25 * (D - A).squaredNorm() * (1 - 1e-12));
    }
}

TEST(Geom, MinimalRotation) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        Mat A = random_slope(rng, 2, 2, 0.3), B = random_slope(rng, 2, 2, 0.3);
        auto R = minimal_rotation(A, B);
        EXPECT_LT((R.Q.transpose() * R.Q - Mat::Identity(4, 4)).norm(), 1e-12);
        Mat TA = tangent_basis(A), TB = tangent_basis(B);
        Mat img = R.Q * TA;
        EXPECT_LT((img - TB * (TB.transpose() * img)).norm(), 1e-12);
        EXPECT_GT((TB.transpose() * img).determinant(), 0);
    }
    auto I = minimal_rotation(Mat::Zero(1, 2), Mat::Zero(1, 2));
    EXPECT_NEAR(I.deviation, 0, 1e-15);
}

TEST(Geom, LipschitzBoundAfterRotation) {
    EXPECT_EQ(lipschitz_bound_after_rotation(0.7, 0), 0.7);
    double prev = 0;
    for (double d : {0.0, 0.05, 0.1, 0.2}) {
        double b = lipschitz_bound_after_rotation(0.5, d);
        EXPECT_GE(b, prev);
        prev = b;
    }
    EXPECT_LT(lipschitz_bound_after_rotation(0.3, 0.1), lipschitz_bound_after_rotation(0.4, 0.1));
    EXPECT_THROW(lipschitz_bound_after_rotation(2.5, 0.1), ConfigError);
    EXPECT_THROW(lipschitz_bound_after_rotation(1, 0.3), ConfigError);
}

TEST(Geom, LipschitzBoundHoldsOnBattery) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1, 1);
    for (int t = 0; t < 8; ++t) {
        double c1 = U(rng), c2 = U(rng), c3 = U(rng), amp = 0.3 * std::abs(U(rng));
        auto f = GridField::sample(1, {61, 61}, {-1, -1}, 1.0 / 30, [&](const double* x, double* v) {
            v[0] = amp * std::sin(2 * x[0] + c1) * std::cos(1.5 * x[1] + c2) + 0.2 * c3 * x[0];
        });
        double lip = holder_seminorm(f, 0, 1, f.h, 3);
        Plane target = Plane::horizontal(2, 1);
        target.A = random_slope(rng, 1, 2, 0.07);
        double dev = minimal_rotation(Mat::Zero(1, 2), target.A).deviation;
        GridSpec out{{31, 31}, {-0.5, -0.5}, 1.0 / 30};
        auto g = reparametrize_graph(f, Plane::horizontal(2, 1), target, out);
        double lg = holder_seminorm(g, 0, 1, g.h, 3);
        EXPECT_LE(lg, lipschitz_bound_after_rotation(lip, dev));
    }
}

TEST(Geom, ReparamAffineOverOwnPlane) {
    Mat A(2, 2);
    A << 0.2, -0.1, 0.05, 0.3;
    auto f = GridField::sample(2, {41, 41}, {-1, -1}, 0.05, [&](const double* x, double* v) {
        v[0] = 0.1 + A(0, 0) * x[0] + A(0, 1) * x[1];
        v[1] = -0.2 + A(1, 0) * x[0] + A(1, 1) * x[1];
    });
    Vec p(4);
    p << 0.1, 0.2, 0.1 + A(0, 0) * 0.1 + A(0, 1) * 0.2, -0.2 + A(1, 0) * 0.1 + A(1, 1) * 0.2;
    GridSpec out{{21, 21}, {-0.5, -0.5}, 0.05};
    auto g = reparametrize_graph(f, Plane::horizontal(2, 2), Plane::through(p, A), out);
    for (double v : g.values) EXPECT_NEAR(v, 0, 1e-10);
}

TEST(Geom, ReparamIdentity) {
    auto f = smooth_field(41, 1, 0.2, 2);
    GridSpec out{{21, 21}, {-0.5, -0.5}, f.h};
    auto g = reparametrize_graph(f, Plane::horizontal(2, 2), Plane::horizontal(2, 2), out);
    double x[2], v[2];
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.point(i, x);
        sample_linear(f, x, v);
        EXPECT_NEAR(g.at(i)[0], v[0], 1e-12);
        EXPECT_NEAR(g.at(i)[1], v[1], 1e-12);
    }
}

TEST(Geom, ReparamRoundTripRatio) {
    auto err = [](int N) {
        auto f = smooth_field(N, 1, 0.3);
        Plane P = Plane::horizontal(2, 1);
        P.A << 0.1, -0.05;
        P.p[2] = 0.02;
        double hh = f.h;
        int M1 = static_cast<int>(std::round(1.3 / hh)) + 1;
        GridSpec tilt{{M1, M1}, {-0.65, -0.65}, hh};
        auto g = reparametrize_graph(f, Plane::horizontal(2, 1), P, tilt);
        int M2 = static_cast<int>(std::round(0.8 / hh)) + 1;
        GridSpec back{{M2, M2}, {-0.4, -0.4}, hh};
        auto k = reparametrize_graph(g, P, Plane::horizontal(2, 1), back);
        double e = 0, x[2];
        for (std::size_t i = 0; i < k.size(); ++i) {
            k.point(i, x);
            double exact = 0.3 * (std::sin(1.3 * x[0] + 0.4) * std::cos(0.9 * x[1]) + 0.3 * x[0] * x[1]);
            e = std::max(e, std::abs(k.at(i)[0] - exact));
        }
        return e;
    };
    double e1 = err(41), e2 = err(81);
    EXPECT_LT(e1, 1e-3);
    EXPECT_GT(e1 / e2, 3.0);
    EXPECT_LT(e1 / e2, 5.5);
}

TEST(Geom, ReparamCubicIsMoreAccurate) {
    auto f = smooth_field(41, 1, 0.3);
    Plane P = Plane::horizontal(2, 1);
    P.A << 0.1, -0.05;
    GridSpec out{{21, 21}, {-0.5, -0.5}, 0.05};
    ReparamOptions lin, cub;
    cub.interp = Interp::cubic;
    auto fine = reparametrize_graph(smooth_field(321, 1, 0.3), Plane::horizontal(2, 1), P, out, cub);
    auto gl = reparametrize_graph(f, Plane::horizontal(2, 1), P, out, lin);
    auto gc = reparametrize_graph(f, Plane::horizontal(2, 1), P, out, cub);
    EXPECT_LT(c0_distance(gc, fine), 0.1 * c0_distance(gl, fine));
}

TEST(Geom, ReparamGuards) {
    auto f = smooth_field(21, 1, 0.3);
    Plane P = Plane::horizontal(2, 1);
    P.A << 0.1, 0;
    GridSpec big{{41, 41}, {-2, -2}, 0.1};
    EXPECT_THROW(reparametrize_graph(f, Plane::horizontal(2, 1), P, big), DomainError);
    ReparamOptions o;
    o.mask_escapes = true;
    auto g = reparametrize_graph(f, Plane::horizontal(2, 1), P, big, o);
    EXPECT_FALSE(g.active(0));
    P.A << 3, 0;
    GridSpec small{{5, 5}, {-0.1, -0.1}, 0.05};
    EXPECT_THROW(reparametrize_graph(f, Plane::horizontal(2, 1), P, small), DomainError);
}

TEST(Geom, PlaneJsonRoundTrip) {
    Plane P = Plane::horizontal(2, 2);
    P.A << 0.1, 0.2, 0.3, 1.0 / 3;
    P.p << 1, 2, 3, 4;
    auto Q = plane_from_json(plane_to_json(P));
    EXPECT_EQ(Q.A, P.A);
    EXPECT_EQ(Q.p, P.p);
}
