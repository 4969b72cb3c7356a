/// Dyadic grid, per-cube packages, gluing and the run-level reports.

#include "cmlab/cm.hpp"

#include <gtest/gtest.h>

using namespace cmlab;

namespace {

Params params(int m, int n, int extra = 0, int samples = 2) {
    Params P;
    P.m = m;
    P.n = n;
    P.cube_samples = samples;
    P.resolve();
    P.k_max = P.N0 + extra;
    return P.resolve();
}

GridField field(int n, int N, double L, std::function<void(const double*, double*)> fn) {
    return GridField::sample(n, {N, N}, {-L, -L}, 2 * L / (N - 1), fn);
}

GridField affine(int n, int N, double L) {
    return field(n, N, L, [n](const double* x, double* v) {
        v[0] = 0.12 * x[0] - 0.05 * x[1] + 0.3;
        if (n > 1) v[1] = -0.04 * x[0] + 0.09 * x[1] - 0.1;
    });
}

// Smooth non-affine graph with small slope.
GridField wavy(int N, double L, double eps, double shift = 0) {
    return field(1, N, L, [=](const double* x, double* v) {
        v[0] = shift + eps * (x[0] * x[0] - x[1] * x[1] + 0.3 * (x[0] * x[0] * x[0] - 3 * x[0] * x[1] * x[1]) + 0.2 * std::sin(x[0] + 2 * x[1]));
    });
}

}  // namespace

TEST(CmParams, DerivedConstants) {
    Params P;
    P.m = 2;
    P.n = 2;
    P.resolve();
    EXPECT_DOUBLE_EQ(P.sigma, 1 / (2 * std::sqrt(2.0)));
    EXPECT_EQ(P.N0, 5);
    EXPECT_EQ(P.k_max, 8);
    EXPECT_NEAR(P.beta, 1.25 * 0.95 - 1, 1e-15);
    EXPECT_NEAR(32 * P.M0 * P.sigma * std::ldexp(1.0, -P.N0), 0.5, 1e-15);
    Params Q;
    Q.resolve();
    EXPECT_EQ(Q.N0, 4);
    EXPECT_DOUBLE_EQ(Q.lambda, Q.gamma);
    EXPECT_EQ(Params::from_json(Q.to_json()).to_json().dump(), Q.to_json().dump());
}

TEST(CmParams, Guards) {
    Params P;
    P.delta = 0.25;  // δ ≥ γ/(1+γ) = 0.2
    EXPECT_THROW(P.resolve(), ConfigError);
    Params Q;
    Q.kappa = 0.2;
    EXPECT_THROW(Q.resolve(), ConfigError);
    Params R;
    R.k_max = 2;
    EXPECT_THROW(R.resolve(), ConfigError);
    EXPECT_THROW(Params::from_json(json{{"gama", 0.1}}), ConfigError);
    EXPECT_THROW(Params::from_json(json{{"gamma", "big"}}), ConfigError);
}

TEST(CmGrid, Combinatorics) {
    Params P = params(2, 2, 2);
    Hierarchy H = build_grid(P);
    ASSERT_EQ(H.levels.size(), 3u);
    for (int k = P.N0; k <= P.k_max; ++k) {
        const auto& cubes = H.level(k);
        EXPECT_EQ(cubes.size(), std::size_t(1) << (2 * k));
        double area = 0;
        for (std::size_t o = 0; o < cubes.size(); ++o) {
            const auto& c = cubes[o];
            EXPECT_DOUBLE_EQ(c.ell, 2 * P.sigma * std::ldexp(1.0, -k));
            area += c.ell * c.ell;
            EXPECT_LE(c.neighbors.size(), 8u);
            bool interior = c.index[0] > 0 && c.index[1] > 0 && c.index[0] < (1 << k) - 1 && c.index[1] < (1 << k) - 1;
            if (interior) {
                EXPECT_EQ(c.neighbors.size(), 8u);
            }
            for (long j : c.neighbors) {
                const auto& d = cubes[j];
                // neighbors touch: centres at most ℓ apart in every axis, and the relation is symmetric
                EXPECT_LE(std::abs(d.center[0] - c.center[0]), c.ell * (1 + 1e-12));
                EXPECT_LE(std::abs(d.center[1] - c.center[1]), c.ell * (1 + 1e-12));
                EXPECT_NE(std::find(d.neighbors.begin(), d.neighbors.end(), static_cast<long>(o)), d.neighbors.end());
            }
            if (k > P.N0) {
                const auto& F = H.level(k - 1)[c.father];
                EXPECT_DOUBLE_EQ(F.ell, 2 * c.ell);
                for (int sx : {-1, 1})
                    for (int sy : {-1, 1}) {
                        double corner[2] = {c.center[0] + sx * 0.5 * c.ell, c.center[1] + sy * 0.5 * c.ell};
                        EXPECT_TRUE(F.contains(corner));
                    }
                EXPECT_NE(std::find(F.children.begin(), F.children.end(), static_cast<long>(o)), F.children.end());
            }
            EXPECT_EQ(c.children.size(), k < P.k_max ? 4u : 0u);
        }
        EXPECT_NEAR(area, 4 * P.sigma * P.sigma, 1e-12);
    }
}

TEST(CmGlue, BumpShape) {
    for (double t = -1.3; t <= 1.3; t += 0.01) {
        double y[2] = {t, 0.3};
        double b = bump(y, 2);
        if (std::abs(t) <= 1) {
            EXPECT_EQ(b, 1);
        }
        if (std::abs(t) >= 9.0 / 8) {
            EXPECT_EQ(b, 0);
        }
        EXPECT_GE(b, 0);
        EXPECT_LE(b, 1);
    }
    // monotone on the transition
    double prev = 1;
    for (double t = 1; t <= 1.125; t += 0.001) {
        double y[1] = {t};
        EXPECT_LE(bump(y, 1), prev + 1e-15);
        prev = bump(y, 1);
    }
}

TEST(CmGlue, PartitionOfUnity) {
    Params P = params(2, 1, 1);
    auto u = affine(1, 97, 1);
    GridSpec Z = zeta_spec(u, P.sigma);
    Hierarchy H = build_grid(P);
    for (int k = P.N0; k <= P.k_max; ++k) {
        // every patch carries the same affine map: the glued field reproduces it
        std::vector<Patch> patches;
        for (auto& c : H.level(k)) {
            Patch p;
            p.cube = c;
            int lo[3], hi[3];
            if (support_box(Z, c, lo, hi)) {
                std::vector<int> dims;
                std::vector<double> org;
                for (int a = 0; a < 2; ++a) {
                    p.lo[a] = lo[a];
                    dims.push_back(std::max(2, hi[a] - lo[a] + 1));
                    org.push_back(Z.origin[a] + lo[a] * Z.h);
                }
                p.values = GridField::sample(1, dims, org, Z.h, [](const double* x, double* v) { v[0] = 0.12 * x[0] - 0.05 * x[1] + 0.3; });
                p.values.mask.assign(p.values.size(), 0);
                for (std::size_t i = 0; i < p.values.size(); ++i) {
                    int idx[3];
                    p.values.unravel(i, idx);
                    p.values.mask[i] = idx[0] <= hi[0] - lo[0] && idx[1] <= hi[1] - lo[1];
                }
            }
            patches.push_back(std::move(p));
        }
        auto g = glued_interpolation(patches, Z, 1);
        EXPECT_LE(g.partition_error, 1e-12);
        EXPECT_GE(g.min_denominator, 1);
        for (std::size_t i = 0; i < g.zeta.size(); ++i) {
            double x[2];
            g.zeta.point(i, x);
            EXPECT_NEAR(g.zeta.at(i)[0], 0.12 * x[0] - 0.05 * x[1] + 0.3, 1e-14);
        }
        // distinct constants: ζ equals the cube's value wherever only its bump is active
        for (std::size_t q = 0; q < patches.size(); ++q)
            for (double& v : patches[q].values.values) v = double(q);
        auto d = glued_interpolation(patches, Z, 1);
        for (std::size_t q = 0; q < patches.size(); ++q) {
            const auto& c = patches[q].cube;
            for (std::size_t i = 0; i < d.zeta.size(); ++i) {
                double x[2];
                d.zeta.point(i, x);
                if (std::abs(x[0] - c.center[0]) < 7.0 / 16 * c.ell && std::abs(x[1] - c.center[1]) < 7.0 / 16 * c.ell) {
                    EXPECT_EQ(d.zeta.at(i)[0], double(q));
                }
            }
        }
    }
}

TEST(CmGlue, MissingCoverageIsReported) {
    Params P = params(2, 1);
    auto u = affine(1, 97, 1);
    GridSpec Z = zeta_spec(u, P.sigma);
    EXPECT_THROW(glued_interpolation({}, Z, 1), NumericalError);
}

TEST(CmPackage, AffineChain) {
    Params P = params(2, 2);
    auto u = affine(2, 129, 1.8);
    CmContext ctx(u, P);
    Hierarchy H = build_grid(P);
    const auto& L = H.level(P.N0)[37];
    auto pk = cube_package(ctx, L);
    Mat A(2, 2);
    A << 0.12, -0.05, -0.04, 0.09;
    EXPECT_LE((pk.plane.A - A).norm(), 1e-9);
    EXPECT_LE(pk.E_L, 1e-14);
    EXPECT_FALSE(pk.spacing_ok);
    EXPECT_LE(c0_norm(pk.v), 1e-12);
    EXPECT_LE(c0_norm(pk.z), 1e-12);
    EXPECT_LE(pk.zf_l1, 1e-14);
    EXPECT_LE(pk.lap_z, 1e-8);
    auto exact = GridField::sample(2, pk.g.dims, pk.g.origin, pk.g.h, [](const double* x, double* v) {
        v[0] = 0.12 * x[0] - 0.05 * x[1] + 0.3;
        v[1] = -0.04 * x[0] + 0.09 * x[1] - 0.1;
    });
    EXPECT_LE(c0_distance(pk.g, exact), 1e-10);
}

TEST(CmRun, AffineFixedPoint) {
    Params P = params(2, 1, 1);
    auto u = affine(1, 129, 2);
    auto run = run_center_manifold(u, P);
    EXPECT_TRUE(run.flat);
    ASSERT_EQ(run.levels.size(), 2u);
    for (auto& lv : run.levels) {
        auto nr = cm_norm_report(lv.zeta, u, P, run.E, lv.k);
        EXPECT_LE(nr.dist_u, 1e-10);
        EXPECT_LE(nr.D2, 1e-6);
        EXPECT_NEAR(nr.D1, std::hypot(0.12, 0.05), 1e-9);
        EXPECT_LE(lv.partition_error, 1e-12);
    }
    auto rep = cube_estimate_report(run);
    for (auto& s : rep.series) {
        EXPECT_EQ(s.max, 0) << s.name;
        EXPECT_TRUE(s.finite);
    }
    EXPECT_LE(rep.get("neighbor_D0").max_numerator, 1e-10);
    EXPECT_LE(rep.get("father_son_D0").max_numerator, 1e-10);
    EXPECT_LE(rep.get("z_minus_f_L1").max_numerator, 1e-14);
}

TEST(CmRun, VerticalTranslation) {
    Params P = params(2, 1, 1);
    auto u = wavy(129, 2, 0.02), w = wavy(129, 2, 0.02, 0.4);
    CmOptions o;
    o.estimates = false;
    auto a = run_center_manifold(u, P, o), b = run_center_manifold(w, P, o);
    EXPECT_NEAR(a.E, b.E, 1e-12);
    for (std::size_t l = 0; l < a.levels.size(); ++l)
        for (std::size_t i = 0; i < a.levels[l].zeta.size(); ++i)
            EXPECT_NEAR(b.levels[l].zeta.at(i)[0] - 0.4, a.levels[l].zeta.at(i)[0], 1e-10);
}

TEST(CmRun, SmoothGraphTrends) {
    Params P = params(2, 1, 2);
    auto u = wavy(193, 2, 0.03);
    auto run = run_center_manifold(u, P);
    EXPECT_FALSE(run.flat);
    EXPECT_GT(run.E, 1e-5);
    double prev = 1e9;
    for (auto& lv : run.levels) {
        EXPECT_LE(lv.partition_error, 1e-12);
        auto nr = cm_norm_report(lv.zeta, u, P, run.E, lv.k);
        EXPECT_LT(nr.dist_u, prev);
        prev = nr.dist_u;
        EXPECT_TRUE(std::isfinite(nr.c2beta_scaled));
    }
    EXPECT_LT(prev, 1e-2 * std::sqrt(run.E));
    auto rep = cube_estimate_report(run);
    for (auto& s : rep.series) {
        EXPECT_TRUE(s.finite) << s.name;
        EXPECT_GT(s.max, 0) << s.name;
    }
    ASSERT_TRUE(rep.excess_exponent_defined);
    EXPECT_GT(rep.excess_exponent, 1.5);
    EXPECT_LT(rep.excess_exponent, 2.5);
    EXPECT_LT(rep.get("tilt").max, 10);
}
