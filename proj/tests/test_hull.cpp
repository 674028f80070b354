#include <gtest/gtest.h>

#include "penv/hull.hpp"

using namespace penv;

namespace {

CompactSet unit_circle_c2() {
    CompactSet K(2);
    K.add_polydisc({0.0, 0.0}, {1.0, 0.0}, {CompactSet::Factor::Circle, CompactSet::Factor::Disc});
    return K;
}

CompactSet two_points() {
    CompactSet K(1);
    K.add_points({ComplexPoint{cplx{2.0, 0.0}}, ComplexPoint{cplx{-2.0, 0.0}}}, 0.0);
    return K;
}

SearchBudget hull_budget() {
    SearchBudget b;
    b.degree_schedule = {2, 4};
    b.restarts = 8;
    b.descent_iters = 30;
    b.seed = 1;
    b.step_init = 1.0;  // K has unit scale; the -chi_U landscape is flat below that
    return b;
}

}  // namespace

TEST(CompactSet, Distances) {
    const auto K = unit_circle_c2();
    EXPECT_DOUBLE_EQ(K.distance_to(ComplexPoint{cplx{0.0}, cplx{0.0}}), 1.0);
    EXPECT_DOUBLE_EQ(K.distance_to(ComplexPoint{cplx{0.0, 1.0}, cplx{0.0}}), 0.0);
    EXPECT_NEAR(K.distance_to(ComplexPoint{cplx{2.0}, cplx{0.0, 1.0}}), std::sqrt(2.0), 1e-15);
    CompactSet B(1);
    B.add_ball({cplx{1.0, 1.0}}, 0.5);
    EXPECT_DOUBLE_EQ(B.distance_to(ComplexPoint{cplx{1.0, 3.0}}), 1.5);
    EXPECT_TRUE(B.contains(ComplexPoint{cplx{1.2, 1.2}}));
    EXPECT_DOUBLE_EQ(two_points().distance_to(ComplexPoint{cplx{0.5}}), 1.5);
}

TEST(CompactSet, BoundingBallAndWindow) {
    const auto [c, R] = unit_circle_c2().bounding_ball();
    EXPECT_DOUBLE_EQ(R, 1.0);
    const auto V = default_window(two_points());
    EXPECT_DOUBLE_EQ(V.radius[0], 4.0);
}

TEST(Hull, UnitCircleCertificate) {
    const auto K = unit_circle_c2();
    const ComplexPoint x{cplx{0.0}, cplx{0.0}};
    const QuadratureSpec q{256, {}};
    const auto res = hull_membership(K, x, 0.1, 0.3, default_window(K), hull_budget(), q);
    ASSERT_TRUE(res.found()) << "best value " << res.best_value;
    EXPECT_EQ(res.certificate->exceptional_measure, 0.0);
    EXPECT_LE(res.best_value, -1.0 + 1e-12);
    EXPECT_EQ(res.certificate->disc.center(), x);
    const auto rep = verify_certificate(*res.certificate, K, psh_corpus(2), q);
    EXPECT_TRUE(rep.center_ok);
    EXPECT_TRUE(rep.window_ok);
    for (const auto& c : rep.checks) EXPECT_TRUE(c.passed) << c.rho << ": " << c.failure;
    EXPECT_TRUE(rep.passed());
}

TEST(Hull, RhoChainValues) {
    // Hand-built certificate: f = (zeta, 0) around the unit circle.
    const auto K = unit_circle_c2();
    Eigen::MatrixXcd coeffs = Eigen::MatrixXcd::Zero(2, 2);
    coeffs(1, 0) = 1.0;
    HullCertificate cert{ComplexPoint{cplx{0.0}, cplx{0.0}}, AnalyticDisc(coeffs), 0.1, 0.0, 512};
    const QuadratureSpec q{512, {}};
    const auto rep = verify_certificate(
        cert, K, {ScalarField::parse("log(abs(z1))", 2), ScalarField::parse("abs2(z1)", 2)}, q);
    ASSERT_EQ(rep.checks.size(), 2u);
    EXPECT_EQ(rep.checks[0].rho_x, kNegInf);
    EXPECT_NEAR(rep.checks[0].integral_good, 0.0, 1e-14);
    EXPECT_TRUE(rep.checks[0].passed);
    EXPECT_EQ(rep.checks[1].rho_x, 0.0);
    EXPECT_NEAR(rep.checks[1].integral_good, 1.0, 1e-14);
    EXPECT_NEAR(rep.checks[1].sup_K, 1.0, 1e-12);
    EXPECT_TRUE(rep.passed());
}

TEST(Hull, NonPshFieldFlagged) {
    const auto K = unit_circle_c2();
    Eigen::MatrixXcd coeffs = Eigen::MatrixXcd::Zero(2, 2);
    coeffs(1, 0) = 1.0;
    HullCertificate cert{ComplexPoint{cplx{0.0}, cplx{0.0}}, AnalyticDisc(coeffs), 0.1, 0.0, 512};
    const auto rep2 = verify_certificate(cert, K, {ScalarField::parse("1 - abs2(z1)", 2)}, QuadratureSpec{512, {}});
    EXPECT_FALSE(rep2.checks[0].passed);
    EXPECT_FALSE(rep2.passed());
}

TEST(Hull, TwoPointsNotFound) {
    const auto K = two_points();
    const ComplexPoint x{cplx{0.0}};
    const QuadratureSpec q{256, {}};
    for (int level = 0; level < 3; ++level) {
        SearchBudget b = hull_budget();
        b.restarts = 4 << level;
        b.descent_iters = 10 << level;
        const auto res = hull_membership(K, x, 0.1, 0.05, default_window(K), b, q);
        EXPECT_FALSE(res.found());
        EXPECT_GE(res.best_value, -0.5);
    }
}

TEST(Hull, ClosedDiscCertifies) {
    CompactSet K(1);
    K.add_ball({cplx{0.0}}, 1.0);
    const QuadratureSpec q{128, {}};
    for (cplx x : {cplx{0.0}, cplx{0.5, -0.5}, cplx{0.0, 1.0}}) {
        const auto res = hull_membership(K, ComplexPoint{x}, 0.05, 0.1, default_window(K), hull_budget(), q);
        ASSERT_TRUE(res.found());
        EXPECT_EQ(res.certificate->exceptional_measure, 0.0);
    }
}

TEST(Hull, ExceptionalMeasureMonotoneInRadius) {
    const auto K = unit_circle_c2();
    Eigen::MatrixXcd coeffs = Eigen::MatrixXcd::Zero(3, 2);
    coeffs(1, 0) = 0.9;
    coeffs(2, 1) = 0.3;
    const AnalyticDisc f(coeffs);
    double prev = 0.0;
    for (double r : {0.8, 0.4, 0.2, 0.1, 0.05}) {
        const double m = exceptional_measure(K, f, r, 256);
        EXPECT_GE(m, prev);
        prev = m;
    }
    EXPECT_GT(prev, 0.0);
}

TEST(Hull, PointOutsideWindow) {
    const auto K = two_points();
    EXPECT_THROW(
        {
            try {
                hull_membership(K, ComplexPoint{cplx{5.0}}, 0.1, 0.05, default_window(K), hull_budget(),
                                QuadratureSpec{64, {}});
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::PointOutsideWindow);
                throw;
            }
        },
        Error);
}

TEST(Hull, PshCorpusParses) {
    EXPECT_GE(psh_corpus(1).size(), 8u);
    EXPECT_GT(psh_corpus(2).size(), psh_corpus(1).size());
}
