#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "penv/core.hpp"
#include "penv/poly.hpp"

namespace penv {

/// One branch of a normalization map: t -> (p_1(t), ..., p_N(t)).
struct BranchMap {
    std::string label;
    std::vector<poly::Coeffs> components;

    BranchMap() = default;
    BranchMap(std::string label_, std::vector<poly::Coeffs> components_)
        : label(std::move(label_)), components(std::move(components_)) {
        validate();
    }

    std::size_t ambient_dim() const { return components.size(); }

    void validate() const {
        require(!components.empty(), ErrorCode::InvalidArgument, "branch '" + label + "' has no components");
        bool nonconstant = false;
        for (const auto& c : components) {
            require(!c.empty(), ErrorCode::InvalidArgument, "empty branch polynomial");
            for (const auto& a : c)
                require(is_finite(a), ErrorCode::InvalidArgument, "branch coefficients must be finite");
            if (poly::degree(c) >= 1) nonconstant = true;
        }
        require(nonconstant, ErrorCode::InvalidArgument, "branch '" + label + "' is constant");
    }

    void eval_into(cplx t, cplx* out) const {
        for (std::size_t c = 0; c < components.size(); ++c) out[c] = poly::horner(components[c], t);
    }

    std::vector<cplx> eval(cplx t) const {
        std::vector<cplx> out(components.size());
        eval_into(t, out.data());
        return out;
    }

    /// Index of the nonconstant component of smallest degree (first on ties).
    std::size_t pivot_component() const {
        std::size_t best = components.size();
        int best_deg = 0;
        for (std::size_t c = 0; c < components.size(); ++c) {
            const int d = poly::degree(components[c]);
            if (d >= 1 && (best == components.size() || d < best_deg)) {
                best = c;
                best_deg = d;
            }
        }
        return best;
    }

    friend bool operator==(const BranchMap& a, const BranchMap& b) {
        return a.label == b.label && a.components == b.components;
    }
};

/// Bounded region that discs must stay in: a polydisc (one radius per
/// coordinate) or a Euclidean ball (single radius).
struct DomainConstraint {
    enum class Shape { Polydisc, Ball };

    Shape shape = Shape::Polydisc;
    std::vector<cplx> center;
    std::vector<double> radius;

    static DomainConstraint polydisc(std::vector<cplx> center, std::vector<double> radius) {
        require(center.size() == radius.size(), ErrorCode::InvalidArgument, "polydisc center/radius size mismatch");
        DomainConstraint d{Shape::Polydisc, std::move(center), std::move(radius)};
        d.validate();
        return d;
    }

    static DomainConstraint ball(std::vector<cplx> center, double radius) {
        DomainConstraint d{Shape::Ball, std::move(center), {radius}};
        d.validate();
        return d;
    }

    void validate() const {
        require(!center.empty(), ErrorCode::InvalidArgument, "domain constraint needs a center");
        for (double r : radius) require(r > 0.0, ErrorCode::InvalidArgument, "domain radius must be positive");
    }

    /// Largest amount by which p sticks out of the region (<= 0 inside).
    double excess(const cplx* p) const {
        if (shape == Shape::Ball) {
            double s = 0.0;
            for (std::size_t i = 0; i < center.size(); ++i) s += std::norm(p[i] - center[i]);
            return std::sqrt(s) - radius[0];
        }
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < center.size(); ++i) worst = std::max(worst, std::abs(p[i] - center[i]) - radius[i]);
        return worst;
    }

    bool contains(std::span<const cplx> p, double tol = 0.0) const {
        require(p.size() == center.size(), ErrorCode::InvalidArgument, "domain constraint dimension mismatch");
        return excess(p.data()) <= tol;
    }

    friend bool operator==(const DomainConstraint&, const DomainConstraint&) = default;
};

enum class SpaceKind { Euclidean, NormalizedCurve };

/// The complex space X: C^N (optionally restricted to a bounded region), or a
/// curve given by the normalization maps of its branches.
class SpaceModel {
public:
    static SpaceModel euclidean(std::size_t dim, std::optional<DomainConstraint> constraint = std::nullopt) {
        require(dim >= 1, ErrorCode::InvalidArgument, "ambient dimension must be positive");
        if (constraint)
            require(constraint->center.size() == dim, ErrorCode::InvalidArgument, "constraint dimension mismatch");
        SpaceModel s;
        s.kind_ = SpaceKind::Euclidean;
        s.dim_ = dim;
        s.constraint_ = std::move(constraint);
        return s;
    }

    static SpaceModel normalized_curve(std::vector<BranchMap> branches,
                                       std::optional<DomainConstraint> constraint = std::nullopt) {
        require(!branches.empty(), ErrorCode::InvalidArgument, "a curve model needs at least one branch");
        const std::size_t dim = branches.front().ambient_dim();
        for (std::size_t i = 0; i < branches.size(); ++i) {
            branches[i].validate();
            require(branches[i].ambient_dim() == dim, ErrorCode::InvalidArgument, "branches disagree on dimension");
            for (std::size_t j = 0; j < i; ++j)
                require(branches[i].label != branches[j].label, ErrorCode::InvalidArgument,
                        "duplicate branch label '" + branches[i].label + "'");
        }
        if (constraint)
            require(constraint->center.size() == dim, ErrorCode::InvalidArgument, "constraint dimension mismatch");
        SpaceModel s;
        s.kind_ = SpaceKind::NormalizedCurve;
        s.dim_ = dim;
        s.branches_ = std::move(branches);
        s.constraint_ = std::move(constraint);
        return s;
    }

    SpaceKind kind() const { return kind_; }
    std::size_t ambient_dim() const { return dim_; }
    /// Dimension of the space discs are parametrized in (1 for curve branches).
    std::size_t param_dim() const { return kind_ == SpaceKind::Euclidean ? dim_ : 1; }
    const std::vector<BranchMap>& branches() const { return branches_; }
    bool irreducible() const { return kind_ == SpaceKind::Euclidean || branches_.size() <= 1; }
    const std::optional<DomainConstraint>& domain_constraint() const { return constraint_; }

    const BranchMap& branch(const std::string& label) const {
        for (const auto& b : branches_)
            if (b.label == label) return b;
        throw Error(ErrorCode::InvalidArgument, "unknown branch '" + label + "'");
    }

private:
    SpaceKind kind_ = SpaceKind::Euclidean;
    std::size_t dim_ = 1;
    std::vector<BranchMap> branches_;
    std::optional<DomainConstraint> constraint_;
};

/// A point of a curve model expressed in normalization coordinates.
struct LiftedPoint {
    std::string branch;
    cplx t;
};

namespace detail {

inline double branch_residual(const BranchMap& b, cplx t, std::span<const cplx> p) {
    double worst = 0.0;
    for (std::size_t c = 0; c < b.components.size(); ++c)
        worst = std::max(worst, std::abs(poly::horner(b.components[c], t) - p[c]));
    return worst;
}

/// Parameters t with b(t) = p within tol, deduplicated.
inline std::vector<cplx> branch_preimages(const BranchMap& b, std::span<const cplx> p, double tol) {
    const std::size_t pivot = b.pivot_component();
    poly::Coeffs eq = b.components[pivot];
    eq[0] -= p[pivot];
    std::vector<cplx> out;
    for (cplx t : poly::roots(eq)) {
        t = poly::polish_root(eq, t);
        if (branch_residual(b, t, p) > tol) continue;
        bool dup = false;
        for (auto& s : out) {
            if (std::abs(s - t) <= 1e-6 * (1.0 + std::abs(t))) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(t);
    }
    return out;
}

/// Resultant in t of two polynomials whose coefficients depend on s, as a
/// polynomial in s. `make(s)` returns the pair (P_s, Q_s); `deg_bound` bounds
/// the s-degree of the resultant. Sampled on roots of unity and interpolated.
template <class MakePair>
poly::Coeffs resultant_in_s(MakePair make, int deg_bound) {
    const int n = deg_bound + 1;
    std::vector<cplx> samples(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const cplx s = std::polar(1.0, kTwoPi * i / n);
        auto [P, Q] = make(s);
        const int dp = static_cast<int>(P.size()) - 1;
        const int dq = static_cast<int>(Q.size()) - 1;
        const int size = dp + dq;
        if (size == 0) {
            samples[static_cast<std::size_t>(i)] = 1.0;
            continue;
        }
        Eigen::MatrixXcd syl = Eigen::MatrixXcd::Zero(size, size);
        for (int r = 0; r < dq; ++r)
            for (int j = 0; j <= dp; ++j) syl(r, r + j) = P[static_cast<std::size_t>(dp - j)];
        for (int r = 0; r < dp; ++r)
            for (int j = 0; j <= dq; ++j) syl(dq + r, r + j) = Q[static_cast<std::size_t>(dq - j)];
        samples[static_cast<std::size_t>(i)] = syl.partialPivLu().determinant();
    }
    poly::Coeffs coeffs(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        cplx acc{0.0, 0.0};
        for (int i = 0; i < n; ++i) acc += samples[static_cast<std::size_t>(i)] * std::polar(1.0, -kTwoPi * i * k / n);
        coeffs[static_cast<std::size_t>(k)] = acc / static_cast<double>(n);
    }
    return coeffs;
}

inline bool negligible(const poly::Coeffs& p) {
    double m = 0.0;
    for (auto c : p) m = std::max(m, std::abs(c));
    return m < 1e-12;
}

inline void push_unique(std::vector<ComplexPoint>& pts, std::vector<cplx> q) {
    for (const auto& p : pts)
        if (distance(p.coords(), q) <= 1e-7) return;
    pts.emplace_back(std::move(q));
}

}  // namespace detail

/// Membership of p in the space. Curve models decide it by lifting through the
/// branch maps (root solving on one coordinate, residual check on the rest).
inline bool contains(const SpaceModel& space, const ComplexPoint& p, double tol) {
    require(tol > 0.0, ErrorCode::InvalidArgument, "contains: tol must be positive");
    require(p.dim() == space.ambient_dim(), ErrorCode::InvalidArgument, "contains: dimension mismatch");
    if (space.domain_constraint() && !space.domain_constraint()->contains(p.coords(), tol)) return false;
    if (space.kind() == SpaceKind::Euclidean) return true;
    for (const auto& b : space.branches())
        if (!detail::branch_preimages(b, p.coords(), tol).empty()) return true;
    return false;
}

/// Every (branch, t) with branch(t) = p within tol.
inline std::vector<LiftedPoint> lift_point(const SpaceModel& space, const ComplexPoint& p, double tol) {
    require(space.kind() == SpaceKind::NormalizedCurve, ErrorCode::NotApplicable, "lift_point needs a curve model");
    require(tol > 0.0, ErrorCode::InvalidArgument, "lift_point: tol must be positive");
    require(p.dim() == space.ambient_dim(), ErrorCode::InvalidArgument, "lift_point: dimension mismatch");
    std::vector<LiftedPoint> out;
    for (const auto& b : space.branches())
        for (cplx t : detail::branch_preimages(b, p.coords(), tol)) out.push_back({b.label, t});
    if (out.empty()) throw Error(ErrorCode::PointNotOnSpace, "point is on no branch within tolerance");
    return out;
}

/// Candidate singular points: critical points of a branch, points where two
/// branches meet, and self-intersections of a branch.
inline std::vector<ComplexPoint> singular_locus_hint(const SpaceModel& space) {
    require(space.kind() == SpaceKind::NormalizedCurve, ErrorCode::NotApplicable,
            "singular_locus_hint: Euclidean space is smooth");
    std::vector<ComplexPoint> out;
    const auto& branches = space.branches();
    const std::size_t N = space.ambient_dim();

    for (const auto& b : branches) {
        const std::size_t pivot = b.pivot_component();
        const auto dpiv = poly::derivative(b.components[pivot]);
        if (poly::degree(dpiv) < 1) continue;
        for (cplx t : poly::roots(dpiv)) {
            bool all_vanish = true;
            for (const auto& comp : b.components) {
                const auto d = poly::derivative(comp);
                if (std::abs(poly::horner(d, t)) > 1e-8 * (1.0 + std::abs(t))) {
                    all_vanish = false;
                    break;
                }
            }
            if (all_vanish) detail::push_unique(out, b.eval(t));
        }
    }

    if (N < 2) return out;

    // Pairs (b1(s), b2(t)) and (b(s), b(t)) with s != t.
    for (std::size_t i = 0; i < branches.size(); ++i) {
        for (std::size_t j = i; j < branches.size(); ++j) {
            const BranchMap& b1 = branches[i];
            const BranchMap& b2 = branches[j];
            const bool self = (i == j);
            bool done = false;
            for (std::size_t a = 0; a < N && !done; ++a) {
                for (std::size_t c = 0; c < N && !done; ++c) {
                    if (a == c) continue;
                    const int d2a = std::max(poly::degree(b2.components[a]), 0);
                    const int d2c = std::max(poly::degree(b2.components[c]), 0);
                    const int d1a = std::max(poly::degree(b1.components[a]), 0);
                    const int d1c = std::max(poly::degree(b1.components[c]), 0);
                    if (d2a == 0 && d2c == 0) continue;
                    if (self && (d2a < 2 && d2c < 2)) continue;  // an injective coordinate: no self-crossing
                    auto make = [&](cplx s) {
                        auto pa = poly::trimmed(b2.components[a]);
                        auto pc = poly::trimmed(b2.components[c]);
                        pa[0] -= poly::horner(b1.components[a], s);
                        pc[0] -= poly::horner(b1.components[c], s);
                        if (self) {
                            pa = poly::divide_linear(pa, s);
                            pc = poly::divide_linear(pc, s);
                        }
                        return std::pair{pa, pc};
                    };
                    const int bound = self ? 2 * std::max(d2a, 1) * std::max(d2c, 1)
                                           : d2c * d1a + d2a * d1c;
                    if (bound == 0) continue;
                    auto R = detail::resultant_in_s(make, bound);
                    if (detail::negligible(R)) continue;
                    done = true;
                    if (poly::degree(R) < 1) continue;
                    for (cplx s : poly::roots(R)) {
                        const auto q = b1.eval(s);
                        for (cplx t : detail::branch_preimages(b2, q, 1e-7 * (1.0 + std::abs(s)))) {
                            if (self && std::abs(t - s) <= 1e-6 * (1.0 + std::abs(s))) continue;
                            detail::push_unique(out, q);
                        }
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace penv
