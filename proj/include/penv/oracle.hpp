#pragma once

#include <Eigen/Dense>
#include <optional>
#include <queue>
#include <vector>

#include "penv/field.hpp"

namespace penv {

/// Square n x n node grid over [a,b] x [c,d] (equal spacing) with an active mask.
struct GridDomain {
    double a = -1.0, b = 1.0, c = -1.0, d = 1.0;
    std::size_t n = 129;
    /// mask(i, j) != 0 for active nodes; node (i, j) sits at a + i h + (c + j h) i.
    Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> mask;

    double h() const { return (b - a) / static_cast<double>(n - 1); }
    cplx node(std::size_t i, std::size_t j) const {
        return {a + static_cast<double>(i) * h(), c + static_cast<double>(j) * h()};
    }
    bool active(long i, long j) const {
        return i >= 0 && j >= 0 && i < static_cast<long>(n) && j < static_cast<long>(n) && mask(i, j) != 0;
    }
    /// Active node with an inactive (or missing) four-neighbor.
    bool is_boundary(std::size_t i, std::size_t j) const {
        const long I = static_cast<long>(i), J = static_cast<long>(j);
        return active(I, J) && !(active(I + 1, J) && active(I - 1, J) && active(I, J + 1) && active(I, J - 1));
    }

    static GridDomain annulus(std::size_t n, cplx center, double r_inner, double r_outer) {
        require(r_outer > 0.0 && r_inner >= 0.0 && r_inner < r_outer, ErrorCode::InvalidArgument, "bad annulus radii");
        GridDomain g;
        g.a = center.real() - r_outer;
        g.b = center.real() + r_outer;
        g.c = center.imag() - r_outer;
        g.d = center.imag() + r_outer;
        g.n = n;
        require(n >= 33, ErrorCode::InvalidArgument, "grid needs n >= 33");
        g.mask.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        const double slack = 1e-12 * r_outer;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double r = std::abs(g.node(i, j) - center);
                g.mask(i, j) = (r <= r_outer + slack && r >= r_inner - slack) ? 1 : 0;
            }
        g.validate();
        return g;
    }

    static GridDomain disc(std::size_t n, cplx center = 0.0, double radius = 1.0) {
        return annulus(n, center, 0.0, radius);
    }

    void validate() const {
        require(n >= 33, ErrorCode::InvalidArgument, "grid needs n >= 33");
        require(b > a && d > c && std::abs((d - c) - (b - a)) <= 1e-12 * (b - a), ErrorCode::InvalidArgument,
                "grid must be square with equal spacing");
        require(mask.rows() == static_cast<Eigen::Index>(n) && mask.cols() == static_cast<Eigen::Index>(n),
                ErrorCode::InvalidArgument, "mask size mismatch");
        // Connectedness by flood fill.
        std::size_t total = 0, seen = 0;
        std::vector<unsigned char> vis(n * n, 0);
        std::queue<std::pair<long, long>> qu;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (mask(i, j)) {
                    if (total++ == 0) {
                        qu.push({static_cast<long>(i), static_cast<long>(j)});
                        vis[i * n + j] = 1;
                    }
                }
        require(total > 0, ErrorCode::InvalidArgument, "empty grid mask");
        while (!qu.empty()) {
            auto [i, j] = qu.front();
            qu.pop();
            ++seen;
            const long di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                const long a2 = i + di[k], b2 = j + dj[k];
                if (active(a2, b2) && !vis[static_cast<std::size_t>(a2) * n + static_cast<std::size_t>(b2)]) {
                    vis[static_cast<std::size_t>(a2) * n + static_cast<std::size_t>(b2)] = 1;
                    qu.push({a2, b2});
                }
            }
        }
        require(seen == total, ErrorCode::InvalidArgument, "grid mask is not connected");
    }
};

/// Samples a one-variable field on the active nodes (0 elsewhere). -inf is
/// replaced by `floor` when given, otherwise rejected.
inline Eigen::MatrixXd sample_on_grid(const ScalarField& u, const GridDomain& g, std::optional<double> floor = {}) {
    require(u.input_dim() == 1, ErrorCode::InvalidArgument, "grid oracle is one-dimensional");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.n), static_cast<Eigen::Index>(g.n));
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.mask(i, j)) continue;
            const cplx z = g.node(i, j);
            double v = u.eval_raw(&z);
            if (v == kNegInf) {
                require(floor.has_value(), ErrorCode::DomainError, "field is -inf on the grid; truncate first");
                v = *floor;
            }
            out(i, j) = floor ? std::max(v, *floor) : v;
        }
    return out;
}

class NotConvergedError : public Error {
public:
    NotConvergedError(std::size_t iters, Eigen::MatrixXd last)
        : Error(ErrorCode::NotConverged, "obstacle solver hit max_iters = " + std::to_string(iters)),
          last_iterate(std::move(last)) {}
    Eigen::MatrixXd last_iterate;
};

struct MinorantOptions {
    double tol = 1e-10;
    std::size_t max_iters = 1000000;
    /// Over-relaxation factor in (0, 2); 0 picks 2 / (1 + sin(pi / (n - 1))).
    double omega = 0.0;
};

/// Discrete largest subharmonic minorant: the fixpoint of v = min(u, average of
/// the four neighbors) on interior active nodes, boundary nodes pinned to u.
/// Red-black projected over-relaxation; one sweep visits red then black.
inline Eigen::MatrixXd subharmonic_minorant(const Eigen::MatrixXd& u, const GridDomain& g,
                                            const MinorantOptions& opt = {}) {
    g.validate();
    require(u.rows() == static_cast<Eigen::Index>(g.n) && u.cols() == static_cast<Eigen::Index>(g.n),
            ErrorCode::InvalidArgument, "u grid size mismatch");
    require(opt.tol > 0.0 && opt.max_iters > 0, ErrorCode::InvalidArgument, "need tol > 0 and max_iters > 0");
    const double omega = opt.omega > 0.0 ? opt.omega : 2.0 / (1.0 + std::sin(kPi / static_cast<double>(g.n - 1)));
    require(omega > 0.0 && omega < 2.0, ErrorCode::InvalidArgument, "omega must lie in (0, 2)");

    struct Node {
        Eigen::Index i, j;
    };
    std::vector<Node> colors[2];
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.mask(i, j)) continue;
            require(std::isfinite(u(i, j)), ErrorCode::DomainError, "u must be finite on the mask");
            if (!g.is_boundary(i, j))
                colors[(i + j) % 2].push_back({static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)});
        }

    Eigen::MatrixXd v = u;
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
        double change = 0.0;
        for (const auto& col : colors)
            for (const auto& nd : col) {
                const double avg = 0.25 * (v(nd.i + 1, nd.j) + v(nd.i - 1, nd.j) + v(nd.i, nd.j + 1) + v(nd.i, nd.j - 1));
                const double old = v(nd.i, nd.j);
                const double nv = std::min(u(nd.i, nd.j), old + omega * (avg - old));
                change = std::max(change, std::abs(nv - old));
                v(nd.i, nd.j) = nv;
            }
        if (change < opt.tol) return v;
    }
    throw NotConvergedError(opt.max_iters, std::move(v));
}

/// Bilinear interpolation of a grid function at z; cells touching inactive
/// nodes fall back to the nearest active node.
inline double grid_value(const Eigen::MatrixXd& v, const GridDomain& g, cplx z) {
    const double h = g.h();
    const double fx = (z.real() - g.a) / h, fy = (z.imag() - g.c) / h;
    require(fx >= -1e-9 && fy >= -1e-9 && fx <= static_cast<double>(g.n - 1) + 1e-9 &&
                fy <= static_cast<double>(g.n - 1) + 1e-9,
            ErrorCode::InterpolationOutOfRange, "point outside the grid rectangle");
    const long i0 = std::clamp(static_cast<long>(std::floor(fx)), 0L, static_cast<long>(g.n) - 2);
    const long j0 = std::clamp(static_cast<long>(std::floor(fy)), 0L, static_cast<long>(g.n) - 2);
    const double s = std::clamp(fx - static_cast<double>(i0), 0.0, 1.0);
    const double t = std::clamp(fy - static_cast<double>(j0), 0.0, 1.0);
    if (g.active(i0, j0) && g.active(i0 + 1, j0) && g.active(i0, j0 + 1) && g.active(i0 + 1, j0 + 1))
        return (1 - s) * (1 - t) * v(i0, j0) + s * (1 - t) * v(i0 + 1, j0) + (1 - s) * t * v(i0, j0 + 1) +
               s * t * v(i0 + 1, j0 + 1);
    double best_d = std::numeric_limits<double>::infinity(), best = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j)
            if (g.mask(i, j)) {
                const double dd = std::abs(g.node(i, j) - z);
                if (dd < best_d) {
                    best_d = dd;
                    best = v(i, j);
                }
            }
    return best;
}

/// Piecewise-linear function of t, constant beyond the last knot on the left
/// and linearly extended on the right.
struct PiecewiseLinear {
    std::vector<double> t, v;

    double operator()(double x) const {
        require(!t.empty(), ErrorCode::InvalidArgument, "empty piecewise-linear function");
        if (t.size() == 1 || x <= t.front()) return v.front();
        std::size_t k = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), x) - t.begin());
        if (k >= t.size()) k = t.size() - 1;
        const double w = (x - t[k - 1]) / (t[k] - t[k - 1]);
        return v[k - 1] + w * (v[k] - v[k - 1]);
    }
};

/// Largest convex nondecreasing minorant of samples (t, u(e^t)): lower hull by
/// monotone chain, then the part left of the hull minimum is flattened.
inline PiecewiseLinear radial_envelope(const std::vector<std::pair<double, double>>& samples) {
    require(!samples.empty(), ErrorCode::InvalidArgument, "radial_envelope needs samples");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        require(std::isfinite(samples[i].first) && std::isfinite(samples[i].second), ErrorCode::InvalidArgument,
                "radial samples must be finite");
        if (i) require(samples[i].first > samples[i - 1].first, ErrorCode::InvalidArgument, "samples must be sorted in t");
    }
    std::vector<std::pair<double, double>> hull;
    for (const auto& p : samples) {
        while (hull.size() >= 2) {
            const auto& o = hull[hull.size() - 2];
            const auto& a = hull.back();
            const long double cr = (static_cast<long double>(a.first) - o.first) * (p.second - o.second) -
                                   (static_cast<long double>(a.second) - o.second) * (p.first - o.first);
            if (cr <= 0) hull.pop_back();
            else break;
        }
        hull.push_back(p);
    }
    std::size_t imin = 0;
    for (std::size_t i = 1; i < hull.size(); ++i)
        if (hull[i].second < hull[imin].second) imin = i;
    PiecewiseLinear out;
    if (imin > 0) {
        out.t.push_back(samples.front().first);
        out.v.push_back(hull[imin].second);
    }
    for (std::size_t i = imin; i < hull.size(); ++i) {
        out.t.push_back(hull[i].first);
        out.v.push_back(hull[i].second);
    }
    return out;
}

}  // namespace penv
