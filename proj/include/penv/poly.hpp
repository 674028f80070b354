#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <span>
#include <vector>

#include "penv/core.hpp"

// Univariate complex polynomials stored low-to-high: p[j] is the coefficient of t^j.
namespace penv::poly {

using Coeffs = std::vector<cplx>;

inline cplx horner(std::span<const cplx> p, cplx t) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = p.size(); j-- > 0;) acc = acc * t + p[j];
    return acc;
}

/// Degree after dropping exactly-zero leading coefficients; -1 for the zero polynomial.
inline int degree(std::span<const cplx> p) {
    for (std::size_t j = p.size(); j-- > 0;)
        if (p[j] != cplx{0.0, 0.0}) return static_cast<int>(j);
    return -1;
}

inline Coeffs trimmed(Coeffs p) {
    p.resize(static_cast<std::size_t>(std::max(degree(p), 0)) + 1);
    return p;
}

inline Coeffs derivative(std::span<const cplx> p) {
    if (p.size() <= 1) return {cplx{0.0, 0.0}};
    Coeffs d(p.size() - 1);
    for (std::size_t j = 1; j < p.size(); ++j) d[j - 1] = p[j] * static_cast<double>(j);
    return d;
}

inline Coeffs subtract(Coeffs a, std::span<const cplx> b) {
    if (a.size() < b.size()) a.resize(b.size());
    for (std::size_t j = 0; j < b.size(); ++j) a[j] -= b[j];
    return a;
}

/// Quotient of p(t) by (t - s), remainder discarded (synthetic division).
inline Coeffs divide_linear(std::span<const cplx> p, cplx s) {
    if (p.size() <= 1) return {cplx{0.0, 0.0}};
    Coeffs q(p.size() - 1);
    cplx carry{0.0, 0.0};
    for (std::size_t j = p.size(); j-- > 1;) {
        carry = carry * s + p[j];
        q[j - 1] = carry;
    }
    return q;
}

/// All complex roots via eigenvalues of the companion matrix. Leading
/// coefficients with |c| <= 1e-14 * max|c| are treated as zero.
inline std::vector<cplx> roots(std::span<const cplx> p) {
    double scale = 0.0;
    for (const auto& c : p) scale = std::max(scale, std::abs(c));
    if (scale == 0.0) throw Error(ErrorCode::InvalidArgument, "roots of the zero polynomial");
    int n = static_cast<int>(p.size()) - 1;
    while (n > 0 && std::abs(p[static_cast<std::size_t>(n)]) <= 1e-14 * scale) --n;
    if (n <= 0) return {};
    Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(n, n);
    const cplx lead = p[static_cast<std::size_t>(n)];
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -p[static_cast<std::size_t>(i)] / lead;
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(companion, false);
    std::vector<cplx> out(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return out;
}

/// Newton polish of a root of p; stops early if the step does not shrink |p|.
inline cplx polish_root(std::span<const cplx> p, cplx t, int iters = 8) {
    const Coeffs dp = derivative(p);
    for (int it = 0; it < iters; ++it) {
        const cplx v = horner(p, t);
        const cplx d = horner(dp, t);
        if (d == cplx{0.0, 0.0}) break;
        const cplx next = t - v / d;
        if (!(std::abs(horner(p, next)) < std::abs(v))) break;
        t = next;
    }
    return t;
}

}  // namespace penv::poly
