#pragma once

#include <optional>
#include <vector>

#include "penv/core.hpp"
#include "penv/disc.hpp"
#include "penv/field.hpp"

namespace penv {

struct QuadratureSpec {
    std::size_t M = 512;
    /// Floor applied to integrand values before summing.
    std::optional<double> clip;

    void validate() const {
        require(M >= 16 && is_power_of_two(M), ErrorCode::InvalidArgument,
                "quadrature M must be a power of two and at least 16");
    }
};

struct Arc {
    double t0 = 0.0;
    double t1 = kTwoPi;
};

/// Mean of already-sampled integrand values (the trapezoid rule on the circle).
inline double boundary_mean(std::vector<double>& vals, const std::optional<double>& clip) {
    bool neg_inf = false;
    for (double& v : vals) {
        if (clip) v = std::max(v, *clip);
        if (v == kNegInf) neg_inf = true;
    }
    if (neg_inf) return kNegInf;
    return pairwise_sum(vals.data(), vals.size()) / static_cast<double>(vals.size());
}

/// u(f(e^{2 pi i j / M})) for j = 0..M-1.
inline std::vector<double> boundary_field_values(const ScalarField& u, const AnalyticDisc& f, std::size_t M) {
    require(u.input_dim() == f.ambient_dim(), ErrorCode::InvalidArgument, "field and disc dimensions differ");
    const auto pts = f.boundary_values(M);
    const std::size_t N = f.ambient_dim();
    std::vector<double> vals(M);
    for (std::size_t j = 0; j < M; ++j) vals[j] = u.eval_raw(pts.data() + j * N);
    return vals;
}

/// P_u(f) = int_0^{2pi} u(f(e^{it})) dt / 2pi by the M-node trapezoid rule.
inline double poisson_functional(const ScalarField& u, const AnalyticDisc& f, const QuadratureSpec& q) {
    q.validate();
    auto vals = boundary_field_values(u, f, q.M);
    return boundary_mean(vals, q.clip);
}

/// Node weights (in units of 2pi) for integrating the periodic piecewise-linear
/// interpolant of M equispaced samples over [t0, t1]. Full-circle weights are exactly 1/M.
inline std::vector<double> arc_weights(std::size_t M, const Arc& arc) {
    require(0.0 <= arc.t0 && arc.t0 < arc.t1 && arc.t1 <= kTwoPi, ErrorCode::InvalidArgument,
            "arc must satisfy 0 <= t0 < t1 <= 2pi");
    std::vector<double> w(M, 0.0);
    const double h = kTwoPi / static_cast<double>(M);
    const double inv = 1.0 / static_cast<double>(M);
    for (std::size_t j = 0; j < M; ++j) {
        const double a = h * static_cast<double>(j);
        const double b = h * static_cast<double>(j + 1);
        const double lo = std::max(a, arc.t0), hi = std::min(b, arc.t1);
        if (!(hi > lo)) continue;
        double alpha = (lo - a) / h, beta = (hi - a) / h;
        if (lo == a) alpha = 0.0;
        if (hi == b) beta = 1.0;
        const double sq = 0.5 * (beta * beta - alpha * alpha);
        w[j] += ((beta - alpha) - sq) * inv;
        w[(j + 1) % M] += sq * inv;
    }
    return w;
}

/// Weighted sum with the -inf convention: any -inf value under positive weight gives -inf.
inline double weighted_mean(const std::vector<double>& vals, const std::vector<double>& w) {
    std::vector<double> terms(vals.size());
    for (std::size_t j = 0; j < vals.size(); ++j) {
        if (w[j] == 0.0) {
            terms[j] = 0.0;
            continue;
        }
        if (vals[j] == kNegInf) return kNegInf;
        terms[j] = vals[j] * w[j];
    }
    return pairwise_sum(terms.data(), terms.size());
}

/// int_{t0}^{t1} u(f(e^{it})) dt / 2pi, normalized by 2pi rather than by arc length.
inline double arc_functional(const ScalarField& u, const AnalyticDisc& f, const QuadratureSpec& q, const Arc& arc) {
    q.validate();
    auto vals = boundary_field_values(u, f, q.M);
    if (q.clip)
        for (double& v : vals) v = std::max(v, *q.clip);
    return weighted_mean(vals, arc_weights(q.M, arc));
}

}  // namespace penv
