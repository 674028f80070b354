#pragma once

#include <optional>
#include <string>
#include <vector>

#include "penv/envelope.hpp"

namespace penv {

/// Finite union of closed pieces in C^N: Euclidean balls, products of
/// discs/circles (one factor per coordinate), and blown-up point clouds.
class CompactSet {
public:
    enum class Factor { Disc, Circle };

    struct Piece {
        enum class Kind { Ball, Polydisc, PointCloud } kind = Kind::Ball;
        std::vector<cplx> center;
        /// Ball: one radius. Polydisc: one radius per coordinate.
        std::vector<double> radius;
        std::vector<Factor> factors;
        std::vector<ComplexPoint> points;
        double blowup = 0.0;
    };

    explicit CompactSet(std::size_t dim) : dim_(dim) {
        require(dim >= 1, ErrorCode::InvalidArgument, "compact set dimension must be positive");
    }

    CompactSet& add_ball(std::vector<cplx> center, double r) {
        require(center.size() == dim_ && r >= 0.0 && std::isfinite(r), ErrorCode::InvalidArgument, "bad ball");
        pieces_.push_back({Piece::Kind::Ball, std::move(center), {r}, {}, {}, 0.0});
        return *this;
    }

    /// Product of closed discs (or circles, per coordinate) |z_i - c_i| <= r_i (= r_i).
    CompactSet& add_polydisc(std::vector<cplx> center, std::vector<double> radii, std::vector<Factor> factors = {}) {
        if (factors.empty()) factors.assign(dim_, Factor::Disc);
        require(center.size() == dim_ && radii.size() == dim_ && factors.size() == dim_, ErrorCode::InvalidArgument,
                "polydisc needs one center, radius and factor kind per coordinate");
        for (double r : radii) require(r >= 0.0 && std::isfinite(r), ErrorCode::InvalidArgument, "bad polydisc radius");
        pieces_.push_back({Piece::Kind::Polydisc, std::move(center), std::move(radii), std::move(factors), {}, 0.0});
        return *this;
    }

    CompactSet& add_points(std::vector<ComplexPoint> pts, double blowup) {
        require(!pts.empty() && blowup >= 0.0, ErrorCode::InvalidArgument, "point cloud needs points and blowup >= 0");
        for (const auto& p : pts) require(p.dim() == dim_, ErrorCode::InvalidArgument, "point cloud dimension mismatch");
        pieces_.push_back({Piece::Kind::PointCloud, {}, {}, {}, std::move(pts), blowup});
        return *this;
    }

    std::size_t dim() const { return dim_; }
    const std::vector<Piece>& pieces() const { return pieces_; }

    /// Euclidean distance from p to the set (0 on the set).
    double distance_to(const cplx* p) const {
        require(!pieces_.empty(), ErrorCode::InvalidArgument, "empty compact set");
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pc : pieces_) {
            double d = 0.0;
            switch (pc.kind) {
                case Piece::Kind::Ball: {
                    double s = 0.0;
                    for (std::size_t i = 0; i < dim_; ++i) s += std::norm(p[i] - pc.center[i]);
                    d = std::max(0.0, std::sqrt(s) - pc.radius[0]);
                    break;
                }
                case Piece::Kind::Polydisc: {
                    double s = 0.0;
                    for (std::size_t i = 0; i < dim_; ++i) {
                        const double a = std::abs(p[i] - pc.center[i]) - pc.radius[i];
                        const double di = pc.factors[i] == Factor::Circle ? std::abs(a) : std::max(0.0, a);
                        s += di * di;
                    }
                    d = std::sqrt(s);
                    break;
                }
                case Piece::Kind::PointCloud: {
                    d = std::numeric_limits<double>::infinity();
                    for (const auto& q : pc.points) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < dim_; ++i) s += std::norm(p[i] - q[i]);
                        d = std::min(d, std::max(0.0, std::sqrt(s) - pc.blowup));
                    }
                    break;
                }
            }
            best = std::min(best, d);
        }
        return best;
    }

    double distance_to(const ComplexPoint& p) const {
        require(p.dim() == dim_, ErrorCode::InvalidArgument, "point dimension mismatch");
        return distance_to(p.coords().data());
    }

    bool contains(const ComplexPoint& p) const { return distance_to(p) == 0.0; }

    /// A ball containing the set: center = mean of piece centers.
    std::pair<std::vector<cplx>, double> bounding_ball() const {
        require(!pieces_.empty(), ErrorCode::InvalidArgument, "empty compact set");
        std::vector<cplx> c(dim_, 0.0);
        std::size_t count = 0;
        for (const auto& pc : pieces_) {
            if (pc.kind == Piece::Kind::PointCloud) {
                for (const auto& q : pc.points) {
                    for (std::size_t i = 0; i < dim_; ++i) c[i] += q[i];
                    ++count;
                }
            } else {
                for (std::size_t i = 0; i < dim_; ++i) c[i] += pc.center[i];
                ++count;
            }
        }
        for (auto& v : c) v /= static_cast<double>(count);
        double R = 0.0;
        for (const auto& pc : pieces_) {
            if (pc.kind == Piece::Kind::PointCloud) {
                for (const auto& q : pc.points) R = std::max(R, distance(q.coords(), c) + pc.blowup);
            } else {
                double extent = 0.0;
                if (pc.kind == Piece::Kind::Ball) extent = pc.radius[0];
                else
                    for (double r : pc.radius) extent += r * r;
                if (pc.kind == Piece::Kind::Polydisc) extent = std::sqrt(extent);
                R = std::max(R, distance(pc.center, c) + extent);
            }
        }
        return {c, R};
    }

    /// Deterministic sample of points of the set (for sup estimates).
    std::vector<ComplexPoint> sample(std::size_t per_piece, std::uint64_t seed = 0) const {
        std::vector<ComplexPoint> out;
        CounterRng rng(seed, 0x4b53u, 0u);
        for (const auto& pc : pieces_) {
            if (pc.kind == Piece::Kind::PointCloud) {
                for (const auto& q : pc.points) out.push_back(q);
                continue;
            }
            for (std::size_t s = 0; s < per_piece; ++s) {
                std::vector<cplx> p(dim_);
                if (pc.kind == Piece::Kind::Ball) {
                    std::vector<cplx> g(dim_);
                    double norm = 0.0;
                    for (auto& v : g) {
                        v = rng.complex_normal();
                        norm += std::norm(v);
                    }
                    const double rad = s % 2 == 0 ? pc.radius[0] : pc.radius[0] * rng.uniform();
                    for (std::size_t i = 0; i < dim_; ++i) p[i] = pc.center[i] + rad * g[i] / std::sqrt(norm);
                } else {
                    for (std::size_t i = 0; i < dim_; ++i) {
                        const double ang = kTwoPi * rng.uniform();
                        const double rad = pc.factors[i] == Factor::Circle || s % 2 == 0 ? pc.radius[i]
                                                                                          : pc.radius[i] * rng.uniform();
                        p[i] = pc.center[i] + std::polar(rad, ang);
                    }
                }
                out.emplace_back(std::move(p));
            }
        }
        return out;
    }

private:
    std::size_t dim_;
    std::vector<Piece> pieces_;
};

struct HullCertificate {
    ComplexPoint x;
    AnalyticDisc disc;
    double U_radius = 0.0;
    /// 2 pi * (boundary nodes with dist(f, K) >= U_radius) / M.
    double exceptional_measure = 0.0;
    std::size_t M = 0;
};

struct HullResult {
    std::optional<HullCertificate> certificate;
    /// Best P_u found for u = -chi_U (the NotFound diagnostic).
    double best_value = 0.0;
    EnvelopeResult search;

    bool found() const { return certificate.has_value(); }
};

/// The window V as a Euclidean ball (default: twice K's bounding radius).
inline DomainConstraint default_window(const CompactSet& K) {
    auto [c, R] = K.bounding_ball();
    return DomainConstraint::ball(c, std::max(2.0 * R, 1e-6));
}

/// u = -chi_U for U = {dist(., K) < U_radius}.
inline ScalarField neighborhood_field(const CompactSet& K, double U_radius) {
    return ScalarField::custom("-chi_U(K, " + ScalarField::format_real(U_radius) + ")", K.dim(),
                               [K, U_radius](const cplx* p) { return K.distance_to(p) < U_radius ? -1.0 : 0.0; });
}

inline double exceptional_measure(const CompactSet& K, const AnalyticDisc& f, double U_radius, std::size_t M) {
    const auto pts = f.boundary_values(M);
    std::size_t bad = 0;
    for (std::size_t j = 0; j < M; ++j)
        if (!(K.distance_to(pts.data() + j * K.dim()) < U_radius)) ++bad;
    return kTwoPi * static_cast<double>(bad) / static_cast<double>(M);
}

/// Disc search for x in the psh hull of K: minimizes P_u for u = -chi_U inside
/// the window V and certifies when the value drops below -1 + eps / 2pi.
inline HullResult hull_membership(const CompactSet& K, const ComplexPoint& x, double U_radius, double eps,
                                  const DomainConstraint& V, const SearchBudget& b, const QuadratureSpec& q) {
    require(U_radius > 0.0 && eps > 0.0, ErrorCode::InvalidArgument, "need U_radius > 0 and eps > 0");
    require(x.dim() == K.dim() && V.center.size() == K.dim(), ErrorCode::InvalidArgument, "dimension mismatch");
    if (!V.contains(x.coords()))
        throw Error(ErrorCode::PointOutsideWindow, "x lies outside the window V");
    for (const auto& p : K.sample(64))
        if (!V.contains(p.coords(), 1e-12)) throw Error(ErrorCode::PointOutsideWindow, "K is not inside the window V");
    const auto space = SpaceModel::euclidean(K.dim(), V);
    HullResult res;
    res.search = envelope_at(neighborhood_field(K, U_radius), space, x, b, q);
    res.best_value = res.search.value;
    if (res.best_value < -1.0 + eps / kTwoPi) {
        HullCertificate cert;
        cert.x = x;
        cert.disc = res.search.witness;
        cert.U_radius = U_radius;
        cert.M = q.M;
        cert.exceptional_measure = exceptional_measure(K, cert.disc, U_radius, q.M);
        res.certificate = std::move(cert);
    }
    return res;
}

struct RhoCheck {
    std::string rho;
    double rho_x = 0.0;
    /// int over E_f and over its complement of rho(f(e^{it})) dt / 2pi.
    double integral_exceptional = 0.0;
    double integral_good = 0.0;
    double sup_V = 0.0;
    double sup_U = 0.0;
    double sup_K = 0.0;
    /// sup_V |E_f| / 2pi + sup_U (1 - |E_f| / 2pi).
    double bound = 0.0;
    bool passed = true;
    std::string failure;
};

struct CertificateReport {
    bool center_ok = true;
    bool window_ok = true;
    double exceptional_measure = 0.0;
    std::vector<RhoCheck> checks;
    bool passed() const {
        if (!center_ok || !window_ok) return false;
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

/// Re-checks rho(x) <= int_E rho o f + int_{E^c} rho o f <= sup_V rho |E|/2pi + sup_U rho (1 - |E|/2pi)
/// for each test field; sup_V and sup_U are sampled estimates that include the disc's own nodes.
inline CertificateReport verify_certificate(const HullCertificate& cert, const CompactSet& K,
                                            const std::vector<ScalarField>& rho_list, const QuadratureSpec& q,
                                            std::optional<DomainConstraint> V = std::nullopt, double tol = 1e-6) {
    q.validate();
    if (!V) V = default_window(K);
    CertificateReport rep;
    const std::size_t N = K.dim();
    rep.center_ok = distance(cert.disc.center(), cert.x) <= 1e-9;
    const auto pts = cert.disc.boundary_values(q.M);
    std::vector<bool> good(q.M);
    std::size_t bad = 0;
    for (std::size_t j = 0; j < q.M; ++j) {
        good[j] = K.distance_to(pts.data() + j * N) < cert.U_radius;
        if (!good[j]) ++bad;
        if (V->excess(pts.data() + j * N) > 1e-12) rep.window_ok = false;
    }
    rep.exceptional_measure = kTwoPi * static_cast<double>(bad) / static_cast<double>(q.M);
    const double frac = static_cast<double>(bad) / static_cast<double>(q.M);

    // Window and neighborhood samples for the sup estimates.
    std::vector<ComplexPoint> v_samples, u_samples;
    {
        CounterRng rng(0x5eed, 0x56u, 0u);
        for (int s = 0; s < 2048; ++s) {
            std::vector<cplx> g(N);
            double norm = 0.0;
            for (auto& z : g) {
                z = rng.complex_normal();
                norm += std::norm(z);
            }
            const double rad = V->radius[0] * (s % 2 == 0 ? 1.0 : std::pow(rng.uniform(), 1.0 / (2.0 * N)));
            std::vector<cplx> p(N);
            for (std::size_t i = 0; i < N; ++i) p[i] = V->center[i] + rad * g[i] / std::sqrt(norm);
            v_samples.emplace_back(std::move(p));
        }
        for (const auto& k : K.sample(256)) {
            u_samples.push_back(k);
            std::vector<cplx> p(k.coords());
            for (auto& z : p) z += 0.999 * cert.U_radius / std::sqrt(static_cast<double>(N)) * rng.complex_normal() / 2.0;
            ComplexPoint pp(std::move(p));
            if (K.distance_to(pp) < cert.U_radius) u_samples.push_back(std::move(pp));
        }
    }
    const auto k_samples = K.sample(256);

    for (const auto& rho : rho_list) {
        require(rho.input_dim() == N, ErrorCode::InvalidArgument, "test field dimension mismatch");
        RhoCheck c;
        c.rho = rho.text();
        c.rho_x = rho(cert.x);
        std::vector<double> ve(q.M, 0.0), vg(q.M, 0.0);
        double supV = kNegInf, supU = kNegInf, supK = kNegInf;
        bool e_neg_inf = false, g_neg_inf = false;
        for (std::size_t j = 0; j < q.M; ++j) {
            const double r = rho.eval_raw(pts.data() + j * N);
            supV = std::max(supV, r);
            if (good[j]) {
                supU = std::max(supU, r);
                if (r == kNegInf) g_neg_inf = true;
                else vg[j] = r;
            } else {
                if (r == kNegInf) e_neg_inf = true;
                else ve[j] = r;
            }
        }
        for (const auto& p : v_samples) supV = std::max(supV, rho(p));
        for (const auto& p : u_samples) supU = std::max(supU, rho(p));
        for (const auto& p : k_samples) supK = std::max(supK, rho(p));
        supV = std::max(supV, supU);
        const double inv = 1.0 / static_cast<double>(q.M);
        c.integral_exceptional = e_neg_inf ? kNegInf : pairwise_sum(ve.data(), q.M) * inv;
        c.integral_good = g_neg_inf ? kNegInf : pairwise_sum(vg.data(), q.M) * inv;
        c.sup_V = supV;
        c.sup_U = supU;
        c.sup_K = supK;
        c.bound = (frac > 0.0 ? supV * frac : 0.0) + (frac < 1.0 ? supU * (1.0 - frac) : 0.0);
        const double total = c.integral_exceptional + c.integral_good;
        if (c.rho_x != kNegInf && !(c.rho_x <= total + tol)) {
            c.passed = false;
            c.failure = "rho(x) exceeds the boundary integral (non-psh test field or bad disc)";
        } else if (total != kNegInf && !(total <= c.bound + tol)) {
            c.passed = false;
            c.failure = "boundary integral exceeds the sup bound";
        }
        rep.checks.push_back(std::move(c));
    }
    return rep;
}

/// Plurisubharmonic test fields on C^N: real parts of polynomials, log|affine|,
/// squared norms and max-combinations.
inline std::vector<ScalarField> psh_corpus(std::size_t N) {
    std::vector<std::string> exprs = {
        "0",
        "re(z1)",
        "im(z1)",
        "abs2(z1)",
        "re((1 - 2i) * z1^3 + 0.5 * z1)",
        "log(abs(z1 - 0.3))",
        "log(abs(2 * z1 + 1i))",
        "max(re(z1), log(abs(z1 + 0.5)))",
        "max(abs2(z1) - 1, -0.5)",
        "log(0.001 + abs2(z1))",
    };
    if (N >= 2) {
        for (const char* e : {"re(z1 * z2)", "abs2(z1) + abs2(z2)", "log(abs(z1 + 2 * z2 - 0.5))",
                              "max(re(z1), re(z2))", "max(log(abs(z2 - 0.25)), im(z1 - z2))", "re(z2^2 - 3i * z1)"})
            exprs.push_back(e);
    }
    std::vector<ScalarField> out;
    for (const auto& e : exprs) out.push_back(ScalarField::parse(e, N));
    return out;
}

}  // namespace penv
