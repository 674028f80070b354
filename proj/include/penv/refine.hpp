#pragma once

#include <optional>
#include <vector>

#include "penv/disc.hpp"
#include "penv/functional.hpp"

namespace penv {

struct PhaseChoice {
    cplx c{1.0, 0.0};
    double value = 0.0;
    std::size_t index = 0;
    /// Mean of the arc sum over the phase grid; value <= mean always.
    double mean = 0.0;
};

inline double arcs_functional(const std::vector<double>& vals, std::size_t M, const std::vector<Arc>& arcs) {
    double total = 0.0;
    for (const auto& arc : arcs) total += weighted_mean(vals, arc_weights(M, arc));
    return total;
}

namespace detail {

/// Phase scan with a caller-supplied score; ties keep the smallest phase index.
template <class Score>
PhaseChoice scan_phases(const AnalyticDisc& f, const LaurentFamily& lam, int k, std::size_t n_phases, int degree_cap,
                        Score&& score, AnalyticDisc* best_disc = nullptr) {
    require(n_phases >= 8, ErrorCode::InvalidArgument, "phase scan needs at least 8 phases");
    PhaseChoice best;
    double sum = 0.0;
    bool neg_inf = false;
    for (std::size_t p = 0; p < n_phases; ++p) {
        const double phi = kTwoPi * static_cast<double>(p) / static_cast<double>(n_phases);
        const cplx c = p == 0 ? cplx{1.0, 0.0} : cplx{std::cos(phi), std::sin(phi)};
        AnalyticDisc h = compose_rh(f, lam, k, c, degree_cap);
        const double value = score(h);
        if (value == kNegInf) neg_inf = true;
        else sum += value;
        if (p == 0 || value < best.value) {
            best.c = c;
            best.value = value;
            best.index = p;
            if (best_disc) *best_disc = std::move(h);
        }
    }
    best.mean = neg_inf ? kNegInf : sum / static_cast<double>(n_phases);
    return best;
}

}  // namespace detail

/// Scans c = e^{i phi} over n_phases equispaced phases and returns the phase
/// minimizing sum_arcs int_arc u(h_k(e^{it}, c)) dt/2pi. Ties go to the smallest phi.
inline PhaseChoice choose_phase(const AnalyticDisc& f, const LaurentFamily& lam, int k, const ScalarField& u,
                                const std::vector<Arc>& arcs, std::size_t n_phases, const QuadratureSpec& q,
                                int degree_cap = 256) {
    require(!arcs.empty(), ErrorCode::InvalidArgument, "choose_phase needs at least one arc");
    q.validate();
    return detail::scan_phases(f, lam, k, n_phases, degree_cap, [&](const AnalyticDisc& h) {
        auto vals = boundary_field_values(u, h, q.M);
        if (q.clip)
            for (double& v : vals) v = std::max(v, *q.clip);
        return arcs_functional(vals, q.M, arcs);
    });
}

/// sum_arcs int_0^{2pi} int_arc u(g(e^{it}, e^{i theta})) dt/2pi dtheta/2pi, with the
/// t-integral taken over the family's sample nodes (piecewise-linear in t).
inline double double_integral(const ScalarField& u, const BoundaryFamily& family, const std::vector<Arc>& arcs,
                              const QuadratureSpec& q) {
    std::vector<double> inner(family.M());
    for (std::size_t j = 0; j < family.M(); ++j) {
        auto vals = boundary_field_values(u, family.samples[j], q.M);
        inner[j] = boundary_mean(vals, q.clip);
    }
    return arcs_functional(inner, family.M(), arcs);
}

struct RhOptions {
    int m = 0;
    int n_terms = 4;
    int deg_A = 4;
    std::vector<int> k_schedule{8, 16, 32, 64};
    std::size_t n_phases = 16;
    int degree_cap = 256;
    FitOptions fit;
};

/// One Riemann-Hilbert refinement: fit, then sweep k x phases.
struct RhStep {
    AnalyticDisc disc;
    double value = 0.0;
    /// Double integral of u over the family on the same arcs.
    double double_integral = 0.0;
    /// max(0, value - double_integral).
    double eps_report = 0.0;
    int k = 0;
    cplx c{1.0, 0.0};
    double fit_residual = 0.0;
    std::optional<double> r_prime;
};

/// Composes f with `lam` for every admissible k in the schedule and keeps the
/// best (k, phase) by `score` (first wins on ties). Empty if no k fits under
/// the degree cap.
template <class Score>
std::optional<RhStep> compose_best(const AnalyticDisc& f, const LaurentFamily& lam, const RhOptions& opt,
                                   Score&& score) {
    std::optional<RhStep> best;
    for (int k : opt.k_schedule) {
        if (k <= lam.m) continue;
        AnalyticDisc h;
        PhaseChoice pc;
        try {
            pc = detail::scan_phases(f, lam, k, opt.n_phases, opt.degree_cap, score, &h);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::DegreeOverflow) continue;
            throw;
        }
        if (!best || pc.value < best->value) {
            best = RhStep{};
            best->disc = std::move(h);
            best->value = pc.value;
            best->k = k;
            best->c = pc.c;
        }
    }
    return best;
}

/// Fits the family, then compose_best. `family_integral` is the double
/// integral the caller measured for the same arcs.
template <class Score>
std::optional<RhStep> rh_refine_scored(const BoundaryFamily& family, const RhOptions& opt, double family_integral,
                                       Score&& score) {
    const FitResult fit = fit_laurent(family, opt.m, opt.n_terms, opt.deg_A, opt.fit);
    auto best = compose_best(family.base, fit.family, opt, score);
    if (best) {
        best->double_integral = family_integral;
        best->eps_report = std::max(0.0, best->value - family_integral);
        best->fit_residual = fit.residual;
        best->r_prime = fit.r_prime;
    }
    return best;
}

inline std::optional<RhStep> rh_refine(const ScalarField& u, const BoundaryFamily& family, const std::vector<Arc>& arcs,
                                       const RhOptions& opt, const QuadratureSpec& q) {
    q.validate();
    const double di = double_integral(u, family, arcs, q);
    return rh_refine_scored(family, opt, di, [&](const AnalyticDisc& h) {
        auto vals = boundary_field_values(u, h, q.M);
        if (q.clip)
            for (double& v : vals) v = std::max(v, *q.clip);
        return arcs_functional(vals, q.M, arcs);
    });
}

}  // namespace penv
