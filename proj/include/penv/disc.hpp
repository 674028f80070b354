#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "penv/core.hpp"
#include "penv/space.hpp"

namespace penv {

/// e^{2 pi i j / M}, j = 0..M-1.
inline std::vector<cplx> roots_of_unity(std::size_t M) {
    std::vector<cplx> w(M);
    for (std::size_t j = 0; j < M; ++j) {
        const double a = kTwoPi * static_cast<double>(j) / static_cast<double>(M);
        w[j] = {std::cos(a), std::sin(a)};
    }
    return w;
}

/// Polynomial disc zeta -> sum_j a_j zeta^j. Row j of coeffs() holds a_j.
/// A branch disc lives in the parameter line of a curve branch (one column)
/// and is pushed forward by the branch map.
class AnalyticDisc {
public:
    using Matrix = Eigen::MatrixXcd;

    AnalyticDisc() = default;

    explicit AnalyticDisc(Matrix coeffs) : coeffs_(std::move(coeffs)) { validate(); }

    AnalyticDisc(Matrix coeffs, std::shared_ptr<const BranchMap> branch)
        : coeffs_(std::move(coeffs)), branch_(std::move(branch)) {
        validate();
    }

    static AnalyticDisc constant(const ComplexPoint& x) {
        Matrix c(1, static_cast<Eigen::Index>(x.dim()));
        for (std::size_t i = 0; i < x.dim(); ++i) c(0, static_cast<Eigen::Index>(i)) = x[i];
        return AnalyticDisc(std::move(c));
    }

    static AnalyticDisc constant_on_branch(std::shared_ptr<const BranchMap> branch, cplx t) {
        Matrix c(1, 1);
        c(0, 0) = t;
        return AnalyticDisc(std::move(c), std::move(branch));
    }

    int degree() const { return static_cast<int>(coeffs_.rows()) - 1; }
    std::size_t param_dim() const { return static_cast<std::size_t>(coeffs_.cols()); }
    std::size_t ambient_dim() const { return branch_ ? branch_->ambient_dim() : param_dim(); }
    const Matrix& coeffs() const { return coeffs_; }
    const BranchMap* branch() const { return branch_.get(); }
    const std::shared_ptr<const BranchMap>& branch_ptr() const { return branch_; }
    std::optional<std::string> branch_label() const {
        return branch_ ? std::optional<std::string>(branch_->label) : std::nullopt;
    }

    /// Copy with degree raised (zero rows appended) or truncated.
    AnalyticDisc with_degree(int d) const {
        Matrix c = Matrix::Zero(d + 1, coeffs_.cols());
        const Eigen::Index rows = std::min<Eigen::Index>(coeffs_.rows(), d + 1);
        c.topRows(rows) = coeffs_.topRows(rows);
        return AnalyticDisc(std::move(c), branch_);
    }

    /// Value in parameter coordinates (ambient coordinates for Euclidean discs).
    void eval_param_into(cplx zeta, cplx* out) const {
        const Eigen::Index P = coeffs_.cols();
        for (Eigen::Index c = 0; c < P; ++c) {
            cplx acc{0.0, 0.0};
            for (Eigen::Index j = coeffs_.rows(); j-- > 0;) acc = acc * zeta + coeffs_(j, c);
            out[c] = acc;
        }
    }

    void eval_into(cplx zeta, cplx* out) const {
        if (branch_) {
            cplx t;
            eval_param_into(zeta, &t);
            branch_->eval_into(t, out);
        } else {
            eval_param_into(zeta, out);
        }
    }

    ComplexPoint eval(cplx zeta) const {
        require(std::abs(zeta) <= 1.0 + 1e-12, ErrorCode::InvalidArgument, "disc evaluated outside the closed unit disc");
        std::vector<cplx> out(ambient_dim());
        eval_into(zeta, out.data());
        return ComplexPoint(std::move(out));
    }

    /// f(0) in ambient coordinates.
    ComplexPoint center() const {
        std::vector<cplx> out(ambient_dim());
        eval_into(cplx{0.0, 0.0}, out.data());
        return ComplexPoint(std::move(out));
    }

    /// Ambient values at the M equispaced boundary nodes, row-major M x N.
    std::vector<cplx> boundary_values(std::size_t M) const {
        const auto w = roots_of_unity(M);
        const std::size_t N = ambient_dim();
        std::vector<cplx> out(M * N);
        for (std::size_t j = 0; j < M; ++j) eval_into(w[j], out.data() + j * N);
        return out;
    }

    friend bool operator==(const AnalyticDisc& a, const AnalyticDisc& b) {
        const bool same_branch = (!a.branch_ && !b.branch_) || (a.branch_ && b.branch_ && *a.branch_ == *b.branch_);
        return same_branch && a.coeffs_.rows() == b.coeffs_.rows() && a.coeffs_.cols() == b.coeffs_.cols() &&
               a.coeffs_ == b.coeffs_;
    }

private:
    void validate() const {
        require(coeffs_.rows() >= 1 && coeffs_.cols() >= 1, ErrorCode::InvalidArgument, "disc needs at least one coefficient row");
        for (Eigen::Index i = 0; i < coeffs_.size(); ++i)
            require(is_finite(coeffs_.data()[i]), ErrorCode::InvalidArgument, "disc coefficients must be finite");
        if (branch_)
            require(coeffs_.cols() == 1, ErrorCode::InvalidArgument, "branch discs have a single parameter column");
    }

    Matrix coeffs_;
    std::shared_ptr<const BranchMap> branch_;
};

/// lambda~(zeta, z) = zeta^{-m} sum_{j=1..N} A_j(zeta) z^j.
/// A[j-1] is a (deg_A + 1) x P coefficient matrix of A_j.
struct LaurentFamily {
    int m = 0;
    std::vector<Eigen::MatrixXcd> A;

    int n_terms() const { return static_cast<int>(A.size()); }
    int deg_A() const { return A.empty() ? 0 : static_cast<int>(A.front().rows()) - 1; }
    std::size_t param_dim() const { return A.empty() ? 0 : static_cast<std::size_t>(A.front().cols()); }

    static LaurentFamily zero(int m, int n_terms, int deg_A, std::size_t P) {
        LaurentFamily lam;
        lam.m = m;
        lam.A.assign(static_cast<std::size_t>(n_terms),
                     Eigen::MatrixXcd::Zero(deg_A + 1, static_cast<Eigen::Index>(P)));
        return lam;
    }

    /// Value at (zeta, z), zeta != 0 when m > 0.
    void eval_into(cplx zeta, cplx z, cplx* out) const {
        const std::size_t P = param_dim();
        for (std::size_t c = 0; c < P; ++c) out[c] = 0.0;
        cplx zj = z;
        for (const auto& Aj : A) {
            for (std::size_t c = 0; c < P; ++c) {
                cplx acc{0.0, 0.0};
                for (Eigen::Index q = Aj.rows(); q-- > 0;) acc = acc * zeta + Aj(q, static_cast<Eigen::Index>(c));
                out[c] += acc * zj;
            }
            zj *= z;
        }
        if (m != 0) {
            const cplx scale = std::pow(zeta, -m);
            for (std::size_t c = 0; c < P; ++c) out[c] *= scale;
        }
    }
};

/// Discs g_{t_j}, t_j = 2 pi j / M, attached along the boundary of `base`.
struct BoundaryFamily {
    AnalyticDisc base;
    std::vector<AnalyticDisc> samples;

    std::size_t M() const { return samples.size(); }

    /// Throws InvalidArgument unless every g_{t_j}(0) matches base(e^{i t_j}) within tol.
    void validate(double tol = 1e-9) const {
        require(!samples.empty(), ErrorCode::InvalidArgument, "boundary family is empty");
        const auto w = roots_of_unity(samples.size());
        const std::size_t P = base.param_dim();
        std::vector<cplx> fb(P);
        for (std::size_t j = 0; j < samples.size(); ++j) {
            require(samples[j].param_dim() == P, ErrorCode::InvalidArgument, "boundary disc dimension mismatch");
            require(samples[j].branch_label() == base.branch_label(), ErrorCode::InvalidArgument,
                    "boundary discs must live in the base disc's branch");
            base.eval_param_into(w[j], fb.data());
            for (std::size_t c = 0; c < P; ++c)
                require(std::abs(samples[j].coeffs()(0, static_cast<Eigen::Index>(c)) - fb[c]) <= tol,
                        ErrorCode::InvalidArgument, "boundary disc " + std::to_string(j) + " is not centered on the base boundary");
        }
    }
};

struct FitOptions {
    /// Number of z-samples on the circle; 0 picks max(16, 4 * N_terms).
    std::size_t n_theta = 0;
    double condition_bound = 1e10;
    /// Target for the r' diagnostic: the uniform error bound is eps / 2.
    double eps = 0.02;
};

struct FitResult {
    LaurentFamily family;
    /// Sup-norm residual of lambda~ - lambda on the (t_j, theta_l) grid.
    double residual = 0.0;
    double condition = 1.0;
    /// Smallest rho in {0.90, 0.95, 0.99} such that on the grid both
    /// |lambda~(rho' e^{it}, z) - lambda(e^{it}, z)| and |f(rho' e^{it}) - f(e^{it})|
    /// stay below eps / 2 for every grid rho' >= rho; empty if none qualifies.
    std::optional<double> r_prime;
};

/// Least-squares fit of lambda(zeta, z) = g(zeta, z) - f(zeta) by a LaurentFamily.
inline FitResult fit_laurent(const BoundaryFamily& family, int m, int n_terms, int deg_A, const FitOptions& opt = {}) {
    require(m >= 0 && n_terms >= 1 && deg_A >= 0, ErrorCode::InvalidArgument, "fit_laurent: bad shape parameters");
    family.validate(1e-9);
    const std::size_t Mb = family.M();
    const std::size_t L = opt.n_theta ? opt.n_theta : std::max<std::size_t>(16, 4 * static_cast<std::size_t>(n_terms));
    const std::size_t P = family.base.param_dim();
    const auto wt = roots_of_unity(Mb);
    const auto wz = roots_of_unity(L);

    const Eigen::Index rows = static_cast<Eigen::Index>(Mb * L);
    const Eigen::Index cols = static_cast<Eigen::Index>(n_terms) * (deg_A + 1);
    Eigen::MatrixXcd design(rows, cols);
    Eigen::MatrixXcd rhs(rows, static_cast<Eigen::Index>(P));
    std::vector<cplx> fb(P), gz(P);
    for (std::size_t j = 0; j < Mb; ++j) {
        family.base.eval_param_into(wt[j], fb.data());
        for (std::size_t l = 0; l < L; ++l) {
            const Eigen::Index r = static_cast<Eigen::Index>(j * L + l);
            family.samples[j].eval_param_into(wz[l], gz.data());
            for (std::size_t c = 0; c < P; ++c) rhs(r, static_cast<Eigen::Index>(c)) = gz[c] - fb[c];
            cplx zpow = wz[l];
            for (int a = 0; a < n_terms; ++a) {
                cplx zeta_pow = std::pow(wt[j], -m);
                for (int q = 0; q <= deg_A; ++q) {
                    design(r, a * (deg_A + 1) + q) = zeta_pow * zpow;
                    zeta_pow *= wt[j];
                }
                zpow *= wz[l];
            }
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(design);
    const auto& R = qr.matrixR();
    const Eigen::Index rank_dim = std::min(rows, cols);
    double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < rank_dim; ++i) {
        const double d = std::abs(R(i, i));
        rmax = std::max(rmax, d);
        rmin = std::min(rmin, d);
    }
    const double condition = rmin > 0.0 ? rmax / rmin : std::numeric_limits<double>::infinity();
    if (rows < cols || !(condition <= opt.condition_bound))
        throw Error(ErrorCode::IllConditioned, "Laurent fit condition estimate " + std::to_string(condition) +
                                                   " exceeds bound; raise deg_A/M or lower N_terms");
    const Eigen::MatrixXcd sol = qr.solve(rhs);

    FitResult out;
    out.condition = condition;
    out.family = LaurentFamily::zero(m, n_terms, deg_A, P);
    for (int a = 0; a < n_terms; ++a)
        out.family.A[static_cast<std::size_t>(a)] = sol.block(a * (deg_A + 1), 0, deg_A + 1, static_cast<Eigen::Index>(P));

    // Error of the fitted map at zeta = rho e^{it_j} against lambda(e^{it_j}, .).
    std::vector<cplx> lt(P), fr(P);
    auto grid_error = [&](double rho) {
        double worst_lam = 0.0, worst_f = 0.0;
        for (std::size_t j = 0; j < Mb; ++j) {
            family.base.eval_param_into(wt[j], fb.data());
            family.base.eval_param_into(rho * wt[j], fr.data());
            double df = 0.0;
            for (std::size_t c = 0; c < P; ++c) df += std::norm(fr[c] - fb[c]);
            worst_f = std::max(worst_f, std::sqrt(df));
            for (std::size_t l = 0; l < L; ++l) {
                const Eigen::Index r = static_cast<Eigen::Index>(j * L + l);
                out.family.eval_into(rho * wt[j], wz[l], lt.data());
                double e = 0.0;
                for (std::size_t c = 0; c < P; ++c) e += std::norm(lt[c] - rhs(r, static_cast<Eigen::Index>(c)));
                worst_lam = std::max(worst_lam, std::sqrt(e));
            }
        }
        return std::pair{worst_lam, worst_f};
    };
    out.residual = grid_error(1.0).first;

    const double half = 0.5 * opt.eps;
    const double grid[] = {0.90, 0.95, 0.99};
    bool ok_above = out.residual < half;
    for (int g = 2; g >= 0 && ok_above; --g) {
        const auto [el, ef] = grid_error(grid[g]);
        ok_above = el < half && ef < half;
        if (ok_above) out.r_prime = grid[g];
    }
    return out;
}

/// h(zeta) = f(zeta) + c zeta^{k-m} sum_j A_j(zeta) (c zeta^k)^{j-1}.
/// Built coefficient-wise, so h(0) = f(0) exactly.
inline AnalyticDisc compose_rh(const AnalyticDisc& f, const LaurentFamily& lam, int k, cplx c, int degree_cap = 256) {
    require(k > lam.m, ErrorCode::InvalidArgument, "compose_rh needs k > m");
    require(std::abs(std::abs(c) - 1.0) <= 1e-12, ErrorCode::InvalidArgument, "compose_rh needs |c| = 1");
    require(lam.A.empty() || lam.param_dim() == f.param_dim(), ErrorCode::InvalidArgument,
            "compose_rh: Laurent family dimension mismatch");
    const int n = lam.n_terms();
    const int top = n == 0 ? 0 : k * n - lam.m + lam.deg_A();
    const int deg = std::max(f.degree(), top);
    if (deg > degree_cap)
        throw Error(ErrorCode::DegreeOverflow, "composed disc degree " + std::to_string(deg) + " exceeds cap " +
                                                   std::to_string(degree_cap));
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(deg + 1, f.coeffs().cols());
    h.topRows(f.coeffs().rows()) = f.coeffs();
    cplx cj = c;
    for (int j = 1; j <= n; ++j) {
        const auto& Aj = lam.A[static_cast<std::size_t>(j - 1)];
        const int shift = k * j - lam.m;
        for (Eigen::Index q = 0; q < Aj.rows(); ++q) h.row(shift + q) += cj * Aj.row(q);
        cj *= c;
    }
    return AnalyticDisc(std::move(h), f.branch_ptr());
}

}  // namespace penv
