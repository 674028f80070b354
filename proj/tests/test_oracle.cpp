#include <gtest/gtest.h>

#include "penv/oracle.hpp"
#include "penv/rng.hpp"

using namespace penv;

TEST(Grid, DiscMaskAndBoundary) {
    const auto g = GridDomain::disc(33);
    EXPECT_DOUBLE_EQ(g.h(), 2.0 / 32.0);
    EXPECT_TRUE(g.mask(16, 16));
    EXPECT_FALSE(g.mask(0, 0));
    EXPECT_TRUE(g.is_boundary(0, 16));
    EXPECT_FALSE(g.is_boundary(16, 16));
}

TEST(Grid, RejectsSmallN) { EXPECT_THROW(GridDomain::disc(17), Error); }

TEST(Minorant, HarmonicIsFixpoint) {
    const auto g = GridDomain::disc(65);
    const auto u = sample_on_grid(ScalarField::parse("re(z1)", 1), g);
    const auto v = subharmonic_minorant(u, g);
    EXPECT_LE((v - u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Minorant, SubharmonicUnchanged) {
    const auto g = GridDomain::disc(65);
    const auto u = sample_on_grid(ScalarField::parse("abs2(z1)", 1), g);
    const auto v = subharmonic_minorant(u, g);
    EXPECT_LE((v - u).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Minorant, ObstacleMatchesRelativeExtremal) {
    const auto g = GridDomain::disc(129);
    const auto u = sample_on_grid(ScalarField::parse("-indicator(ball(0; 0.25))", 1), g);
    const auto v = subharmonic_minorant(u, g);
    EXPECT_NEAR(grid_value(v, g, 0.5), -0.5, 0.05);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.mask(i, j)) continue;
            const double r = std::abs(g.node(i, j));
            if (r < 0.3 || r > 0.95) continue;
            worst = std::max(worst, std::abs(v(i, j) - std::max(-1.0, std::log(r) / std::log(4.0))));
        }
    EXPECT_LT(worst, 0.05);
}

TEST(Minorant, SubmeanAndMaximality) {
    const auto g = GridDomain::disc(65);
    const auto u = sample_on_grid(ScalarField::parse("min(re(z1) * 0.5, -indicator(ball(0.2; 0.3)))", 1), g);
    MinorantOptions opt;
    opt.tol = 1e-12;
    const auto v = subharmonic_minorant(u, g, opt);
    const double tol = 1e-9;
    std::vector<std::pair<long, long>> interior;
    for (long i = 0; i < static_cast<long>(g.n); ++i)
        for (long j = 0; j < static_cast<long>(g.n); ++j) {
            if (!g.mask(i, j) || g.is_boundary(i, j)) continue;
            interior.push_back({i, j});
            const double avg = 0.25 * (v(i + 1, j) + v(i - 1, j) + v(i, j + 1) + v(i, j - 1));
            EXPECT_LE(v(i, j), u(i, j) + tol);
            EXPECT_LE(v(i, j), avg + tol);
        }
    CounterRng rng(9, 0, 0);
    for (int s = 0; s < 100; ++s) {
        const auto [i, j] = interior[static_cast<std::size_t>(rng.uniform() * interior.size()) % interior.size()];
        const double raised = v(i, j) + 2 * tol;
        const double avg = 0.25 * (v(i + 1, j) + v(i - 1, j) + v(i, j + 1) + v(i, j - 1));
        EXPECT_TRUE(raised > u(i, j) || raised > avg) << "node " << i << "," << j;
    }
}

TEST(Minorant, NotConvergedCarriesIterate) {
    const auto g = GridDomain::disc(65);
    const auto u = sample_on_grid(ScalarField::parse("-indicator(ball(0; 0.25))", 1), g);
    MinorantOptions opt;
    opt.max_iters = 3;
    try {
        subharmonic_minorant(u, g, opt);
        FAIL() << "expected NotConverged";
    } catch (const NotConvergedError& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotConverged);
        EXPECT_EQ(e.last_iterate.rows(), 65);
        EXPECT_LE((e.last_iterate - u).maxCoeff(), 0.0);
    }
}

TEST(Radial, IdentityStays) {
    std::vector<std::pair<double, double>> s;
    for (int i = 0; i <= 40; ++i) s.push_back({-2.0 + 0.1 * i, -2.0 + 0.1 * i});
    const auto e = radial_envelope(s);
    for (const auto& [t, v] : s) EXPECT_NEAR(e(t), v, 1e-12);
}

TEST(Radial, LiouvilleConstant) {
    // On a finite window the right end pins the hull; the constant -1 appears as the window grows.
    double prev = 0.0;
    for (double T : {4.0, 40.0, 400.0, 4000.0}) {
        std::vector<std::pair<double, double>> s;
        for (int i = 0; i <= 800; ++i) {
            const double t = -4.0 + (T + 4.0) * i / 800.0;
            s.push_back({t, std::min(std::exp(2 * t) - 1.0, 0.0)});
        }
        const auto e = radial_envelope(s);
        for (const auto& p : s) EXPECT_LE(e(p.first), p.second + 1e-12);
        EXPECT_LT(e(0.0), prev);
        prev = e(0.0);
    }
    EXPECT_NEAR(prev, -1.0, 2e-3);
}

TEST(Radial, ParabolaFlattened) {
    std::vector<std::pair<double, double>> s;
    for (int i = -20; i <= 20; ++i) s.push_back({0.1 * i, 0.01 * i * i});
    const auto e = radial_envelope(s);
    for (const auto& [t, v] : s) EXPECT_NEAR(e(t), t <= 0 ? 0.0 : v, 1e-12);
}

TEST(Radial, ConvexMonotoneMinorantProperty) {
    CounterRng rng(11, 0, 0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<double, double>> s;
        double t = -3.0;
        for (int i = 0; i < 60; ++i) {
            t += 0.02 + 0.1 * rng.uniform();
            s.push_back({t, rng.normal()});
        }
        const auto e = radial_envelope(s);
        std::vector<double> vals;
        for (const auto& [tt, v] : s) {
            EXPECT_LE(e(tt), v + 1e-12);
            vals.push_back(e(tt));
        }
        for (std::size_t i = 1; i < vals.size(); ++i) EXPECT_GE(vals[i] - vals[i - 1], -1e-12);
        for (std::size_t i = 1; i + 1 < s.size(); ++i) {
            const double dl = (vals[i] - vals[i - 1]) / (s[i].first - s[i - 1].first);
            const double dr = (vals[i + 1] - vals[i]) / (s[i + 1].first - s[i].first);
            EXPECT_GE(dr - dl, -1e-9);
        }
    }
}

TEST(CrossOracle, RadialAnnulusAgrees) {
    // Radial obstacle on an annulus whose convex minorant in log r is increasing,
    // so the grid solution and the 1D hull describe the same function.
    const double r0 = 0.2, r1 = 1.0;
    const auto g = GridDomain::annulus(129, 0.0, r0, r1);
    const auto field = ScalarField::parse("min(abs(z1) * 2 - 0.4, 0.6 + 0.2 * log(abs(z1)))", 1);
    const auto u = sample_on_grid(field, g);
    const auto v = subharmonic_minorant(u, g);
    std::vector<std::pair<double, double>> s;
    for (int i = 0; i <= 400; ++i) {
        const double t = std::log(r0) + (std::log(r1) - std::log(r0)) * i / 400.0;
        const cplx z = std::exp(t);
        s.push_back({t, field.eval_raw(&z)});
    }
    const auto e = radial_envelope(s);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.mask(i, j)) continue;
            const double r = std::abs(g.node(i, j));
            if (r < r0 + 2 * g.h() || r > r1 - 2 * g.h()) continue;
            worst = std::max(worst, std::abs(v(i, j) - e(std::log(r))));
        }
    EXPECT_LT(worst, 6 * g.h());
}
