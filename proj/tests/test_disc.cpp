#include <gtest/gtest.h>

#include "penv/refine.hpp"
#include "penv/rng.hpp"

using namespace penv;

namespace {

Eigen::MatrixXcd random_coeffs(CounterRng& rng, int rows, int cols, double scale) {
    Eigen::MatrixXcd m(rows, cols);
    for (int j = 0; j < rows; ++j)
        for (int c = 0; c < cols; ++c) m(j, c) = scale * rng.complex_normal();
    return m;
}

/// g_t(z) = f(e^{it}) + sum_j lambda_j(e^{it}) z^j sampled at Mb nodes.
template <class Lambda>
BoundaryFamily make_family(const AnalyticDisc& f, std::size_t Mb, int zdeg, Lambda lam) {
    BoundaryFamily fam{f, {}};
    const auto w = roots_of_unity(Mb);
    const auto P = static_cast<Eigen::Index>(f.param_dim());
    std::vector<cplx> fb(static_cast<std::size_t>(P));
    for (std::size_t j = 0; j < Mb; ++j) {
        f.eval_param_into(w[j], fb.data());
        Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(zdeg + 1, P);
        for (Eigen::Index c = 0; c < P; ++c) g(0, c) = fb[static_cast<std::size_t>(c)];
        for (int q = 1; q <= zdeg; ++q)
            for (Eigen::Index c = 0; c < P; ++c) g(q, c) = lam(w[j], q, c);
        fam.samples.emplace_back(g, f.branch_ptr());
    }
    return fam;
}

}  // namespace

TEST(Eval, ConstantDisc) {
    const ComplexPoint x{cplx{1.0, 2.0}, cplx{-3.0, 0.5}};
    const auto f = AnalyticDisc::constant(x);
    EXPECT_EQ(f.eval(cplx{0.3, -0.9}), x);
    EXPECT_EQ(f.center(), x);
}

TEST(Eval, Identity) {
    Eigen::MatrixXcd c(2, 1);
    c << 0.0, 1.0;
    EXPECT_EQ(AnalyticDisc(c).eval(cplx{0.0, 1.0})[0], cplx(0.0, 1.0));
}

TEST(Eval, BranchDiscOnCusp) {
    auto cusp = std::make_shared<const BranchMap>("c", std::vector<poly::Coeffs>{{0.0, 0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}});
    Eigen::MatrixXcd c(2, 1);
    c << 0.0, 1.0;
    const AnalyticDisc f(c, cusp);
    const auto p = f.eval(0.5);
    EXPECT_DOUBLE_EQ(p[0].real(), 0.125);
    EXPECT_DOUBLE_EQ(p[1].real(), 0.25);
    EXPECT_THROW(f.eval(2.0), Error);
}

TEST(FitLaurent, LinearTermExact) {
    CounterRng rng(1, 0, 0);
    const AnalyticDisc f(random_coeffs(rng, 4, 2, 0.5));
    const cplx w0{0.3, -0.2}, w1{-1.0, 0.5};
    const auto fam = make_family(f, 16, 1, [&](cplx, int, Eigen::Index c) { return c == 0 ? w0 : w1; });
    const auto fit = fit_laurent(fam, 0, 1, 0);
    EXPECT_LT(fit.residual, 1e-13);
    EXPECT_NEAR(std::abs(fit.family.A[0](0, 0) - w0), 0.0, 1e-13);
    EXPECT_NEAR(std::abs(fit.family.A[0](0, 1) - w1), 0.0, 1e-13);
}

TEST(FitLaurent, AntiholomorphicViaPole) {
    CounterRng rng(2, 0, 0);
    const AnalyticDisc f(random_coeffs(rng, 3, 1, 0.5));
    const auto fam = make_family(f, 32, 1, [](cplx zeta, int, Eigen::Index) { return std::conj(zeta); });
    const auto fit = fit_laurent(fam, 1, 1, 2);
    EXPECT_LT(fit.residual, 1e-12);
    EXPECT_NEAR(std::abs(fit.family.A[0](0, 0) - 1.0), 0.0, 1e-12);
}

TEST(FitLaurent, QuadraticTerm) {
    const AnalyticDisc f = AnalyticDisc::constant(ComplexPoint{0.0, 1.0});
    const cplx v0{2.0, 0.0}, v1{0.0, -1.0};
    const auto fam = make_family(f, 16, 2, [&](cplx, int q, Eigen::Index c) {
        return q == 2 ? (c == 0 ? v0 : v1) : cplx{0.0, 0.0};
    });
    const auto fit = fit_laurent(fam, 0, 2, 1);
    EXPECT_LT(fit.residual, 1e-13);
    EXPECT_LT(fit.family.A[0].norm(), 1e-13);
    EXPECT_NEAR(std::abs(fit.family.A[1](0, 0) - v0), 0.0, 1e-13);
}

TEST(FitLaurent, IllConditionedWhenUnderdetermined) {
    const AnalyticDisc f = AnalyticDisc::constant(ComplexPoint{0.0});
    const auto fam = make_family(f, 16, 1, [](cplx, int, Eigen::Index) { return cplx{1.0, 0.0}; });
    try {
        fit_laurent(fam, 0, 1, 20);  // 21 zeta-modes aliased onto 16 nodes
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IllConditioned);
    }
}

TEST(FitLaurent, ResidualReportedForNonPolynomialData) {
    const AnalyticDisc f = AnalyticDisc::constant(ComplexPoint{0.0});
    const auto fam = make_family(f, 16, 1, [](cplx zeta, int, Eigen::Index) {
        return cplx{std::abs(zeta.real()), 0.0};
    });
    const auto fit = fit_laurent(fam, 2, 1, 4);
    EXPECT_GT(fit.residual, 1e-3);
}

TEST(FitLaurent, RPrimeDiagnostic) {
    CounterRng rng(8, 0, 0);
    const AnalyticDisc f(random_coeffs(rng, 3, 1, 0.1));
    const auto fam = make_family(f, 16, 1, [](cplx, int, Eigen::Index) { return cplx{0.2, 0.0}; });
    const auto fit = fit_laurent(fam, 0, 1, 0, FitOptions{0, 1e10, 0.5});
    ASSERT_TRUE(fit.r_prime.has_value());
    EXPECT_EQ(*fit.r_prime, 0.90);
}

TEST(ComposeRh, ZeroCorrectionIsIdentity) {
    CounterRng rng(3, 0, 0);
    const AnalyticDisc f(random_coeffs(rng, 6, 2, 1.0));
    const auto lam = LaurentFamily::zero(0, 2, 3, 2);
    const auto h = compose_rh(f, lam, 4, cplx{0.0, 1.0});
    for (double t = 0.0; t < 6.0; t += 0.37) {
        const cplx z = std::polar(0.9, t);
        EXPECT_LT(distance(h.eval(z), f.eval(z)), 1e-15);
    }
}

TEST(ComposeRh, SingleLinearTerm) {
    const auto f = AnalyticDisc::constant(ComplexPoint{cplx{1.0, 1.0}});
    auto lam = LaurentFamily::zero(0, 1, 0, 1);
    lam.A[0](0, 0) = cplx{0.5, -0.5};
    const auto h = compose_rh(f, lam, 1, 1.0);
    ASSERT_EQ(h.degree(), 1);
    EXPECT_EQ(h.coeffs()(0, 0), cplx(1.0, 1.0));
    EXPECT_EQ(h.coeffs()(1, 0), cplx(0.5, -0.5));
}

TEST(ComposeRh, CenterPreservedExactly) {
    CounterRng rng(4, 0, 0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int P = 1 + trial % 3;
        const AnalyticDisc f(random_coeffs(rng, 1 + trial % 7, P, 1.0));
        LaurentFamily lam;
        lam.m = trial % 3;
        for (int j = 0; j < 1 + trial % 4; ++j) lam.A.push_back(random_coeffs(rng, 1 + trial % 5, P, 1.0));
        const int k = lam.m + 1 + trial % 9;
        const double phi = kTwoPi * rng.uniform();
        const auto h = compose_rh(f, lam, k, cplx{std::cos(phi), std::sin(phi)});
        EXPECT_EQ(h.center(), f.center());
    }
}

TEST(ComposeRh, Preconditions) {
    const auto f = AnalyticDisc::constant(ComplexPoint{0.0});
    auto lam = LaurentFamily::zero(2, 1, 0, 1);
    EXPECT_THROW(compose_rh(f, lam, 2, 1.0), Error);
    EXPECT_THROW(compose_rh(f, lam, 3, 1.5), Error);
    auto big = LaurentFamily::zero(0, 4, 10, 1);
    try {
        compose_rh(f, big, 80, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegreeOverflow);
    }
}

TEST(ChoosePhase, ConstantFieldFirstWins) {
    const auto u = ScalarField::parse("3", 1);
    const auto f = AnalyticDisc::constant(ComplexPoint{0.0});
    auto lam = LaurentFamily::zero(0, 1, 0, 1);
    lam.A[0](0, 0) = 1.0;
    const auto pc = choose_phase(f, lam, 1, u, {Arc{}}, 16, QuadratureSpec{64, {}});
    EXPECT_EQ(pc.index, 0u);
    EXPECT_EQ(pc.c, cplx(1.0, 0.0));
    EXPECT_DOUBLE_EQ(pc.value, 3.0);
}

TEST(ChoosePhase, RealPartMeanZero) {
    const auto u = ScalarField::parse("re(z1)", 1);
    const auto f = AnalyticDisc::constant(ComplexPoint{0.0});
    auto lam = LaurentFamily::zero(0, 1, 0, 1);
    lam.A[0](0, 0) = 1.0;
    const auto pc = choose_phase(f, lam, 1, u, {Arc{}}, 16, QuadratureSpec{64, {}});
    EXPECT_NEAR(pc.value, 0.0, 1e-15);
    EXPECT_NEAR(pc.mean, 0.0, 1e-15);
    EXPECT_THROW(choose_phase(f, lam, 1, u, {Arc{}}, 4, QuadratureSpec{64, {}}), Error);
}

TEST(ChoosePhase, MinNotAboveMean) {
    CounterRng rng(9, 0, 0);
    const auto u = ScalarField::parse("abs2(z1 - 0.4) - 2 * indicator(ball(0.5i; 0.6))", 1);
    for (int trial = 0; trial < 30; ++trial) {
        const AnalyticDisc f(random_coeffs(rng, 3, 1, 0.4));
        LaurentFamily lam;
        lam.A.push_back(random_coeffs(rng, 3, 1, 0.3));
        const auto pc = choose_phase(f, lam, 3, u, {Arc{0.0, 2.0}, Arc{3.0, 5.5}}, 16, QuadratureSpec{128, {}});
        EXPECT_LE(pc.value, pc.mean);
    }
}

TEST(Properties, BoundaryProximity) {
    CounterRng rng(10, 0, 0);
    const AnalyticDisc f(random_coeffs(rng, 4, 1, 0.5));
    const auto fam = make_family(f, 32, 2, [](cplx zeta, int q, Eigen::Index) {
        return q == 1 ? 0.3 * zeta : cplx{0.1, 0.0};
    });
    const auto fit = fit_laurent(fam, 0, 2, 2);
    const int k = 32;
    const auto h = compose_rh(f, fit.family, k, 1.0);
    const std::size_t L = 256;
    const auto wz = roots_of_unity(L);
    for (std::size_t j = 0; j < fam.M(); ++j) {
        const cplx zeta = roots_of_unity(fam.M())[j];
        const cplx hv = h.eval(zeta)[0];
        double best = 1e300;
        for (std::size_t l = 0; l < L; ++l) best = std::min(best, std::abs(hv - fam.samples[j].eval(wz[l])[0]));
        EXPECT_LE(best, fit.residual + 0.5 * kTwoPi / L);
    }
}

TEST(Properties, InteriorProximityMonotoneInK) {
    CounterRng rng(11, 0, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const AnalyticDisc f(random_coeffs(rng, 3, 2, 0.5));
        LaurentFamily lam;
        lam.m = trial % 3;
        for (int j = 0; j < 3; ++j) lam.A.push_back(random_coeffs(rng, 4, 2, 0.5));
        double prev = 1e300;
        for (int k : {8, 16, 32, 64}) {
            const auto h = compose_rh(f, lam, k, 1.0);
            double sup = 0.0;
            for (int s = 0; s < 256; ++s) {
                const cplx z = std::polar(0.5, kTwoPi * s / 256.0);
                sup = std::max(sup, distance(h.eval(z), f.eval(z)));
            }
            EXPECT_LT(sup, prev);
            prev = sup;
        }
    }
}

TEST(Properties, Localization) {
    // g is the constant disc off the arc J = {|arg zeta| < 0.6}.
    const AnalyticDisc f = AnalyticDisc::constant(ComplexPoint{0.0});
    const auto fam = make_family(f, 64, 1, [](cplx zeta, int, Eigen::Index) {
        const double a = std::abs(std::arg(zeta));
        return cplx{a < 0.6 ? 0.5 * std::pow(std::cos(a * kPi / 1.2), 2) : 0.0, 0.0};
    });
    const auto fit = fit_laurent(fam, 16, 1, 32);
    const auto h = compose_rh(f, fit.family, 64, 1.0);
    for (int s = 0; s < 360; ++s) {
        const double t = kTwoPi * s / 360.0;
        if (std::abs(std::remainder(t, kTwoPi)) < 1.2) continue;
        for (double r : {1.0, 0.8, 0.3}) EXPECT_LT(std::abs(h.eval(std::polar(r, t))[0]), 3.0 * fit.residual + 1e-3);
    }
}
