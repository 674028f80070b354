#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "penv/core.hpp"

namespace penv {

/// Delaunay triangulation of planar points (Bowyer-Watson) with
/// piecewise-linear interpolation of nodal values.
class PlanarInterpolant {
public:
    PlanarInterpolant(std::vector<cplx> nodes, std::vector<double> values)
        : nodes_(std::move(nodes)), values_(std::move(values)) {
        require(nodes_.size() == values_.size(), ErrorCode::InvalidArgument, "interpolant: size mismatch");
        require(nodes_.size() >= 3, ErrorCode::InterpolationOutOfRange, "interpolant needs at least three nodes");
        triangulate();
    }

    /// Interpolated value at p; empty outside the triangulated region.
    std::optional<double> operator()(cplx p) const {
        for (const auto& t : tris_) {
            const cplx a = nodes_[t[0]], b = nodes_[t[1]], c = nodes_[t[2]];
            const double det = cross(b - a, c - a);
            const double l1 = cross(b - p, c - p) / det;
            const double l2 = cross(c - p, a - p) / det;
            const double l3 = 1.0 - l1 - l2;
            const double tol = -1e-10;
            if (l1 >= tol && l2 >= tol && l3 >= tol) {
                const double va = values_[t[0]], vb = values_[t[1]], vc = values_[t[2]];
                // Exact nodal values avoid 0 * (-inf).
                if (l1 >= 1.0 - 1e-14) return va;
                if (l2 >= 1.0 - 1e-14) return vb;
                if (l3 >= 1.0 - 1e-14) return vc;
                return l1 * va + l2 * vb + l3 * vc;
            }
        }
        return std::nullopt;
    }

    std::size_t triangle_count() const { return tris_.size(); }
    const std::vector<std::array<std::size_t, 3>>& triangles() const { return tris_; }

private:
    static double cross(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

    static bool in_circumcircle(cplx a, cplx b, cplx c, cplx p) {
        // Orientation-normalized incircle determinant in long double.
        using L = long double;
        const L ax = L(a.real()) - L(p.real()), ay = L(a.imag()) - L(p.imag());
        const L bx = L(b.real()) - L(p.real()), by = L(b.imag()) - L(p.imag());
        const L cx = L(c.real()) - L(p.real()), cy = L(c.imag()) - L(p.imag());
        const L det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay) +
                      (cx * cx + cy * cy) * (ax * by - bx * ay);
        const L orient = (L(b.real()) - L(a.real())) * (L(c.imag()) - L(a.imag())) -
                         (L(b.imag()) - L(a.imag())) * (L(c.real()) - L(a.real()));
        return orient > 0 ? det > 0 : det < 0;
    }

    void triangulate() {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& p : nodes_) {
            xmin = std::min(xmin, p.real());
            xmax = std::max(xmax, p.real());
            ymin = std::min(ymin, p.imag());
            ymax = std::max(ymax, p.imag());
        }
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
        const cplx mid{0.5 * (xmin + xmax), 0.5 * (ymin + ymax)};
        const std::size_t n = nodes_.size();
        std::vector<cplx> pts = nodes_;
        pts.push_back(mid + cplx{-1e3 * span, -1e3 * span});
        pts.push_back(mid + cplx{1e3 * span, -1e3 * span});
        pts.push_back(mid + cplx{0.0, 1e3 * span});

        std::vector<std::array<std::size_t, 3>> tris{{n, n + 1, n + 2}};
        for (std::size_t i = 0; i < n; ++i) {
            const cplx p = pts[i];
            std::vector<std::array<std::size_t, 3>> keep;
            std::vector<std::array<std::size_t, 2>> edges;
            for (const auto& t : tris) {
                if (in_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], p)) {
                    for (int e = 0; e < 3; ++e) {
                        std::array<std::size_t, 2> edge{t[e], t[(e + 1) % 3]};
                        if (edge[0] > edge[1]) std::swap(edge[0], edge[1]);
                        edges.push_back(edge);
                    }
                } else {
                    keep.push_back(t);
                }
            }
            std::sort(edges.begin(), edges.end());
            for (std::size_t e = 0; e < edges.size(); ++e) {
                const bool dup = (e + 1 < edges.size() && edges[e] == edges[e + 1]) || (e > 0 && edges[e] == edges[e - 1]);
                if (!dup) keep.push_back({edges[e][0], edges[e][1], i});
            }
            tris = std::move(keep);
        }
        for (const auto& t : tris) {
            if (t[0] >= n || t[1] >= n || t[2] >= n) continue;
            if (std::abs(cross(nodes_[t[1]] - nodes_[t[0]], nodes_[t[2]] - nodes_[t[0]])) <= 1e-14 * span * span) continue;
            tris_.push_back(t);
        }
    }

    std::vector<cplx> nodes_;
    std::vector<double> values_;
    std::vector<std::array<std::size_t, 3>> tris_;
};

}  // namespace penv
