#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "penv/core.hpp"
#include "penv/disc.hpp"
#include "penv/field.hpp"
#include "penv/functional.hpp"
#include "penv/refine.hpp"
#include "penv/rng.hpp"
#include "penv/space.hpp"
#include "penv/triangulation.hpp"

namespace penv {

struct SearchBudget {
    std::vector<int> degree_schedule{2, 4, 8};
    int restarts = 8;
    /// Coordinate-descent sweeps per population member and per degree stage.
    int descent_iters = 20;
    int rh_rounds = 0;
    std::vector<int> k_schedule{8, 16, 32};
    std::size_t n_phases = 16;
    std::uint64_t seed = 0;
    double step_init = 0.25;
    double step_shrink = 0.5;
    double min_step = 1e-4;
    /// Random discs: row j gets Gaussian coefficients of scale init_scale * scale_decay^(j-1).
    double init_scale = 0.5;
    double scale_decay = 0.7;
    /// The search runs on max(u, -truncation).
    int truncation = 50;
    /// Boundary family size M_b and child-search shape for RH rounds.
    std::size_t boundary_samples = 16;
    int child_degree = 4;
    double child_fraction = 0.1;
    int laurent_m = 0;
    int laurent_deg = 4;
    int degree_cap = 256;
    /// Descent sweeps on the fitted Laurent family before composing, and the
    /// (t, theta) grid its double integral is measured on.
    int family_sweeps = 10;
    /// Continuation radii: descent first runs on u averaged over `smoothing_points`
    /// parameter offsets of radius sigma, for each sigma in turn, then on u itself.
    std::vector<double> smoothing;
    std::size_t smoothing_points = 8;
    /// During smoothing stages, domain violations cost this much per unit of mean
    /// excess instead of being repaired (0 keeps repair throughout).
    double constraint_penalty = 0.0;
    std::size_t family_grid_t = 64;
    std::size_t family_grid_theta = 32;
    /// Boundary projection after the degree stages: for each radius, `projection_iters`
    /// relaxed alternating projections between "each node moved to the best point of a
    /// stencil of that radius" and "discs of the current degree with the given center".
    std::vector<double> projection_radii;
    /// Exploratory chains start from linear discs; each reach schedule gives one
    /// chain per coordinate that runs those coarser radii before the fine ones.
    std::vector<std::vector<double>> projection_reach;
    int projection_iters = 100;
    double projection_beta = 0.5;
    std::size_t projection_stencil = 16;

    void validate() const {
        require(!degree_schedule.empty(), ErrorCode::InvalidArgument, "degree_schedule is empty");
        for (std::size_t i = 0; i < degree_schedule.size(); ++i) {
            require(degree_schedule[i] >= 1, ErrorCode::InvalidArgument, "degrees must be positive");
            require(i == 0 || degree_schedule[i] > degree_schedule[i - 1], ErrorCode::InvalidArgument,
                    "degree_schedule must be increasing");
        }
        require(degree_schedule.back() <= degree_cap, ErrorCode::InvalidArgument, "degree_schedule exceeds degree_cap");
        require(restarts >= 0 && descent_iters >= 0 && rh_rounds >= 0, ErrorCode::InvalidArgument,
                "restarts, descent_iters and rh_rounds must be nonnegative");
        for (int k : k_schedule) require(k > 0, ErrorCode::InvalidArgument, "k_schedule entries must be positive");
        require(rh_rounds == 0 || !k_schedule.empty(), ErrorCode::InvalidArgument, "rh_rounds need a k_schedule");
        require(n_phases >= 8, ErrorCode::InvalidArgument, "n_phases must be at least 8");
        require(step_init > 0.0 && step_shrink > 0.0 && step_shrink < 1.0 && min_step > 0.0,
                ErrorCode::InvalidArgument, "need step_init > 0, 0 < step_shrink < 1, min_step > 0");
        require(init_scale > 0.0 && scale_decay > 0.0, ErrorCode::InvalidArgument, "random disc scales must be positive");
        require(truncation >= 1, ErrorCode::InvalidArgument, "truncation must be >= 1");
        require(boundary_samples >= 4, ErrorCode::InvalidArgument, "boundary_samples must be >= 4");
        require(child_degree >= 1 && laurent_m >= 0 && laurent_deg >= 0, ErrorCode::InvalidArgument,
                "bad RH family shape");
        require(child_fraction > 0.0 && child_fraction <= 1.0, ErrorCode::InvalidArgument, "child_fraction must be in (0, 1]");
        for (double sg : smoothing) require(sg > 0.0, ErrorCode::InvalidArgument, "smoothing radii must be positive");
        require(constraint_penalty >= 0.0, ErrorCode::InvalidArgument, "constraint_penalty must be >= 0");
        for (const auto& sched : projection_reach)
            for (double r : sched) require(r > 0.0, ErrorCode::InvalidArgument, "projection reach radii must be positive");
        for (double r : projection_radii) require(r > 0.0, ErrorCode::InvalidArgument, "projection radii must be positive");
        require(projection_iters >= 0 && projection_beta > 0.0 && projection_beta <= 1.0 && projection_stencil >= 4,
                ErrorCode::InvalidArgument, "need projection_iters >= 0, beta in (0, 1], stencil >= 4");
        require(smoothing.empty() || smoothing_points >= 1, ErrorCode::InvalidArgument, "smoothing_points must be >= 1");
        require(family_sweeps >= 0 && family_grid_t >= 8 && family_grid_theta >= 8, ErrorCode::InvalidArgument,
                "family_sweeps must be >= 0 and family grids >= 8");
    }
};

struct RhRoundDiagnostics {
    double candidate = 0.0;
    /// Mean of the independent child values.
    double children_integral = 0.0;
    /// Double integral of the composed family (after polishing).
    double double_integral = 0.0;
    double eps_report = 0.0;
    double fit_residual = 0.0;
    int k = 0;
    bool accepted = false;
    /// Set when the round produced no candidate (ill-conditioned fit, degree cap).
    std::string skipped;
};

struct PointDiagnostics {
    /// Incumbent value after each degree stage, RH round and the warm-start pass.
    std::vector<double> rounds;
    std::vector<RhRoundDiagnostics> rh;
    /// Best value per lift (curve spaces; one entry otherwise).
    std::vector<double> branch_values;
    std::uint64_t evaluations = 0;

    int rounds_to_converge() const {
        for (std::size_t i = 0; i < rounds.size(); ++i)
            if (rounds[i] == rounds.back()) return static_cast<int>(i);
        return 0;
    }
};

struct EnvelopeResult {
    double value = 0.0;
    AnalyticDisc witness;
    PointDiagnostics diagnostics;
};

namespace detail {

/// Boundary-sampled disc search in one parameter chart (a Euclidean space or one branch).
class DiscSearch {
public:
    using Matrix = Eigen::MatrixXcd;

    struct State {
        Matrix a;
        std::vector<cplx> B;  // parameter values at the M boundary nodes, row-major M x P
        double value = 0.0;
    };

    DiscSearch(const ScalarField& u, std::shared_ptr<const BranchMap> branch, const DomainConstraint* dom,
               std::size_t P, const QuadratureSpec& q)
        : u_(u), branch_(std::move(branch)), dom_(dom), M_(q.M), P_(P), clip_(q.clip), w_(roots_of_unity(q.M)),
          vals_(q.M), amb_(branch_ ? branch_->ambient_dim() : P) {}

    std::uint64_t evaluations() const { return evals_; }
    std::size_t param_dim() const { return P_; }

    void boundary(const Matrix& a, std::vector<cplx>& B) const {
        B.resize(M_ * P_);
        const Eigen::Index rows = a.rows();
        for (std::size_t j = 0; j < M_; ++j) {
            const cplx z = w_[j];
            for (std::size_t c = 0; c < P_; ++c) {
                cplx acc{0.0, 0.0};
                for (Eigen::Index r = rows; r-- > 0;) acc = acc * z + a(r, static_cast<Eigen::Index>(c));
                B[j * P_ + c] = acc;
            }
        }
    }

    const cplx* ambient(const cplx* param) {
        if (!branch_) return param;
        branch_->eval_into(param[0], amb_.data());
        return amb_.data();
    }

    bool feasible(const std::vector<cplx>& B) {
        if (!dom_ || penalty_ > 0.0) return true;
        for (std::size_t j = 0; j < M_; ++j)
            if (dom_->excess(ambient(B.data() + j * P_)) > 0.0) return false;
        return true;
    }

    double score(const std::vector<cplx>& B) {
        const double pen = penalty_term(B);
        return pen == 0.0 ? raw_score(B) : raw_score(B) + pen;
    }

    /// penalty * mean positive domain excess over the boundary nodes (0 when off).
    double penalty_term(const std::vector<cplx>& B) {
        if (!dom_ || penalty_ <= 0.0) return 0.0;
        double acc = 0.0;
        for (std::size_t j = 0; j < M_; ++j) acc += std::max(0.0, dom_->excess(ambient(B.data() + j * P_)));
        return penalty_ * acc / static_cast<double>(M_);
    }

    /// Domain violations cost `penalty` * mean excess instead of being repaired (0 restores repair).
    void set_penalty(double penalty) { penalty_ = penalty; }

    double raw_score(const std::vector<cplx>& B) {
        ++evals_;
        if (sigma_ > 0.0) {
            const std::size_t S = offsets_.size() / P_;
            smooth_.resize(M_ * S);
            std::vector<cplx> p(P_);
            for (std::size_t j = 0; j < M_; ++j)
                for (std::size_t k = 0; k < S; ++k) {
                    for (std::size_t c = 0; c < P_; ++c) p[c] = B[j * P_ + c] + sigma_ * offsets_[k * P_ + c];
                    smooth_[j * S + k] = u_.eval_raw(ambient(p.data()));
                }
            return boundary_mean(smooth_, clip_);
        }
        for (std::size_t j = 0; j < M_; ++j) vals_[j] = u_.eval_raw(ambient(B.data() + j * P_));
        return boundary_mean(vals_, clip_);
    }

    /// Switches scoring to the offset-averaged surrogate (sigma > 0) or back to u (sigma = 0).
    void set_smoothing(double sigma, std::size_t points) {
        sigma_ = sigma;
        if (sigma_ > 0.0 && offsets_.size() != points * P_) {
            // Fixed offsets, uniform in the unit ball of C^P; independent of the run seed.
            offsets_.assign(points * P_, cplx{0.0, 0.0});
            CounterRng rng(0x736d6f6fULL, 0u, 0u);
            for (std::size_t k = 0; k < points; ++k) {
                double norm = 0.0;
                for (std::size_t c = 0; c < P_; ++c) {
                    offsets_[k * P_ + c] = rng.complex_normal();
                    norm += std::norm(offsets_[k * P_ + c]);
                }
                const double r = std::pow(rng.uniform(), 1.0 / (2.0 * static_cast<double>(P_))) / std::sqrt(norm);
                for (std::size_t c = 0; c < P_; ++c) offsets_[k * P_ + c] *= r;
            }
        }
    }

    /// Relaxed averaged alternating reflections on the boundary values. The
    /// nonconvex side moves every node to the lowest stencil point (feasible
    /// first, ties to the smaller move); the linear side keeps Fourier modes
    /// 1..degree and pins the center. Each iterate is repaired and scored; the
    /// best one replaces s if it is better.
    void project(State& s, const SearchBudget& b) {
        if (b.projection_radii.empty() || b.projection_iters == 0) return;
        const Eigen::Index deg = s.a.rows() - 1;
        if (deg < 1) return;
        // Stencil directions: unit vectors in C^P, evenly spaced angles when P = 1.
        const std::size_t K = b.projection_stencil;
        std::vector<cplx> dirs(K * P_);
        CounterRng rng(0x70726f6aULL, 0u, 0u);
        for (std::size_t k = 0; k < K; ++k) {
            if (P_ == 1) {
                dirs[k] = std::polar(1.0, 2.0 * kPi * static_cast<double>(k) / static_cast<double>(K));
                continue;
            }
            double norm = 0.0;
            for (std::size_t c = 0; c < P_; ++c) {
                dirs[k * P_ + c] = rng.complex_normal();
                norm += std::norm(dirs[k * P_ + c]);
            }
            for (std::size_t c = 0; c < P_; ++c) dirs[k * P_ + c] /= std::sqrt(norm);
        }
        const cplx half_turn = std::polar(1.0, kPi / static_cast<double>(K));

        std::vector<cplx> x, pm(M_ * P_), rm(M_ * P_), ps, cand(P_);
        auto to_coeffs = [&](const std::vector<cplx>& B) {
            Matrix a = Matrix::Zero(deg + 1, static_cast<Eigen::Index>(P_));
            a.row(0) = s.a.row(0);
            for (Eigen::Index r = 1; r <= deg; ++r)
                for (std::size_t c = 0; c < P_; ++c) {
                    cplx acc{0.0, 0.0};
                    for (std::size_t j = 0; j < M_; ++j)
                        acc += B[j * P_ + c] * std::conj(w_[(j * static_cast<std::size_t>(r)) % M_]);
                    a(r, static_cast<Eigen::Index>(c)) = acc / static_cast<double>(M_);
                }
            return a;
        };
        auto node_target = [&](const cplx* p, double rho, cplx* out) {
            double best_ex = std::numeric_limits<double>::infinity(), best_v = best_ex;
            auto consider = [&](double scale, const cplx* dir, cplx turn) {
                for (std::size_t c = 0; c < P_; ++c) cand[c] = p[c] + (dir ? scale * dir[c] * turn : cplx{0.0, 0.0});
                const cplx* amb = ambient(cand.data());
                const double ex = dom_ ? std::max(0.0, dom_->excess(amb)) : 0.0;
                if (ex > best_ex) return;
                const double v = ex > 0.0 ? 0.0 : u_.eval_raw(amb);
                if (ex < best_ex || v < best_v) {
                    best_ex = ex;
                    best_v = v;
                    std::copy(cand.begin(), cand.end(), out);
                }
            };
            consider(0.0, nullptr, 1.0);
            for (std::size_t k = 0; k < K; ++k) consider(0.5 * rho, &dirs[k * P_], P_ == 1 ? half_turn : cplx{1.0, 0.0});
            for (std::size_t k = 0; k < K; ++k) consider(rho, &dirs[k * P_], 1.0);
        };

        // Chains: the incumbent with the fine radii, and per coordinate the widest
        // feasible linear disc (a constant disc is a fixed point, every node would
        // move alike) with each reach schedule first. Coarse radii would pull the
        // incumbent out of its basin, so it never gets them.
        struct Chain {
            Matrix a0;
            std::vector<double> radii;
        };
        std::vector<Chain> chains{{s.a, b.projection_radii}};
        double radius0 = *std::max_element(b.projection_radii.begin(), b.projection_radii.end());
        for (const auto& sched : b.projection_reach)
            for (double r : sched) radius0 = std::max(radius0, r);
        for (std::size_t c = 0; c < P_; ++c) {
            Matrix a = Matrix::Zero(deg + 1, static_cast<Eigen::Index>(P_));
            a.row(0) = s.a.row(0);
            a(1, static_cast<Eigen::Index>(c)) = dom_ ? 1e6 * (1.0 + s.a.row(0).norm()) : 2.0 * radius0;
            a = repair(a);
            if (b.projection_reach.empty()) chains.push_back({a, b.projection_radii});
            for (const auto& sched : b.projection_reach) {
                chains.push_back({a, sched});
                chains.back().radii.insert(chains.back().radii.end(), b.projection_radii.begin(), b.projection_radii.end());
            }
        }
        State best = s;
        for (const auto& ch : chains) {
            // The raw iterate carries over between radii; progress is often
            // invisible after repair until late.
            State chain = make_state(ch.a0);
            x = chain.B;
            for (double rho : ch.radii) {
                for (int it = 0; it < b.projection_iters; ++it) {
                    for (std::size_t j = 0; j < M_; ++j) node_target(&x[j * P_], rho, &pm[j * P_]);
                    evals_ += M_ * (2 * K + 1);
                    for (std::size_t i = 0; i < x.size(); ++i) rm[i] = 2.0 * pm[i] - x[i];
                    boundary(to_coeffs(rm), ps);
                    const double beta = b.projection_beta;
                    for (std::size_t i = 0; i < x.size(); ++i)
                        x[i] = 0.5 * beta * (2.0 * ps[i] - rm[i] + x[i]) + (1.0 - beta) * pm[i];
                    auto st = make_state(to_coeffs(x));
                    if (st.value < chain.value) chain = std::move(st);
                }
            }
            if (chain.value < best.value) best = std::move(chain);
        }
        if (best.value < s.value) s = std::move(best);
    }

    /// Multiplies row j by rho^j with the largest rho in [0, 1] (bisection) keeping
    /// the boundary samples inside the domain. The center row is untouched.
    Matrix repair(const Matrix& a) {
        std::vector<cplx> B;
        auto scaled = [&](double rho) {
            Matrix s = a;
            double pw = 1.0;
            for (Eigen::Index r = 1; r < a.rows(); ++r) {
                pw *= rho;
                s.row(r) *= pw;
            }
            return s;
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            boundary(scaled(mid), B);
            if (feasible(B)) lo = mid;
            else hi = mid;
        }
        return scaled(lo);
    }

    State make_state(Matrix a) {
        State s;
        boundary(a, s.B);
        if (!feasible(s.B)) {
            a = repair(a);
            boundary(a, s.B);
        }
        s.a = std::move(a);
        s.value = score(s.B);
        return s;
    }

    /// Coordinate descent over the real and imaginary parts of rows >= 1. Moves
    /// are +-step and +-i step; the first strict improvement per coordinate is
    /// kept and the step shrinks after a sweep without improvement.
    void descend(State& s, const SearchBudget& b, int sweeps) {
        double step = b.step_init;
        const Eigen::Index rows = s.a.rows();
        const cplx dirs[4] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
        std::vector<cplx> trial(M_ * P_), fresh;
        for (int sweep = 0; sweep < sweeps && step >= b.min_step; ++sweep) {
            bool improved = false;
            const Matrix start = s.a;
            for (Eigen::Index r = 1; r < rows; ++r) {
                for (std::size_t c = 0; c < P_; ++c) {
                    for (const cplx& dir : dirs) {
                        const cplx delta = step * dir;
                        trial = s.B;
                        for (std::size_t j = 0; j < M_; ++j)
                            trial[j * P_ + c] += delta * w_[(j * static_cast<std::size_t>(r)) % M_];
                        Matrix a = s.a;
                        a(r, static_cast<Eigen::Index>(c)) += delta;
                        double v;
                        if (feasible(trial)) {
                            v = score(trial);
                            if (!(v < s.value)) continue;
                        } else {
                            a = repair(a);
                        }
                        boundary(a, fresh);
                        if (!feasible(fresh)) continue;
                        v = score(fresh);
                        if (v < s.value) {
                            s.a = std::move(a);
                            s.B.swap(fresh);
                            s.value = v;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if (!improved) {
                step *= b.step_shrink;
                continue;
            }
            // Pattern move: repeat the sweep's net displacement while it keeps helping.
            for (int rep = 0; rep < 8; ++rep) {
                Matrix a = s.a + (s.a - start) * static_cast<double>(1 << rep);
                a.row(0) = s.a.row(0);
                boundary(a, fresh);
                if (!feasible(fresh)) {
                    a = repair(a);
                    boundary(a, fresh);
                    if (!feasible(fresh)) break;
                }
                const double v = score(fresh);
                if (!(v < s.value)) break;
                s.a = std::move(a);
                s.B.swap(fresh);
                s.value = v;
            }
        }
    }

    Matrix random_disc(const Matrix& center_row, int degree, const SearchBudget& b, CounterRng& rng) const {
        Matrix a = Matrix::Zero(degree + 1, static_cast<Eigen::Index>(P_));
        a.row(0) = center_row;
        double scale = b.init_scale;
        for (int r = 1; r <= degree; ++r) {
            for (std::size_t c = 0; c < P_; ++c) a(r, static_cast<Eigen::Index>(c)) = scale * rng.complex_normal();
            scale *= b.scale_decay;
        }
        return a;
    }

    AnalyticDisc to_disc(const Matrix& a) const { return branch_ ? AnalyticDisc(a, branch_) : AnalyticDisc(a); }

private:
    const ScalarField& u_;
    std::shared_ptr<const BranchMap> branch_;
    const DomainConstraint* dom_;
    std::size_t M_, P_;
    std::optional<double> clip_;
    std::vector<cplx> w_;
    std::vector<double> vals_, smooth_;
    std::vector<cplx> amb_;
    std::uint64_t evals_ = 0;
    double sigma_ = 0.0;
    double penalty_ = 0.0;
    std::vector<cplx> offsets_;
};

/// Descent with the smoothing continuation of the budget; returns the state
/// with the best true value seen at the end of any stage.
inline void descend_continued(DiscSearch& s, DiscSearch::State& st, const SearchBudget& b, int sweeps) {
    if (b.smoothing.empty()) {
        s.descend(st, b, sweeps);
        return;
    }
    DiscSearch::State best_true = st;
    for (double sigma : b.smoothing) {
        s.set_smoothing(sigma, b.smoothing_points);
        s.set_penalty(b.constraint_penalty);
        st.value = s.score(st.B);
        s.descend(st, b, sweeps);
        s.set_smoothing(0.0, b.smoothing_points);
        s.set_penalty(0.0);
        // The penalized trajectory continues unrepaired; a repaired copy is scored.
        auto repaired = s.make_state(st.a);
        if (repaired.value < best_true.value) best_true = std::move(repaired);
    }
    if (b.constraint_penalty > 0.0) {
        s.set_penalty(b.constraint_penalty);
        st.value = s.score(st.B);
        s.descend(st, b, sweeps);
        s.set_penalty(0.0);
    }
    st = s.make_state(std::move(st.a));
    s.descend(st, b, sweeps);
    if (best_true.value < st.value) st = std::move(best_true);
}

/// Coordinate descent over the coefficients of a Laurent family attached to a
/// base disc f, minimizing the double integral of u over g_t(e^{i theta}) =
/// f(e^{it}) + lambda(e^{it}, e^{i theta}) on an Mt x L grid. A composed disc
/// h = f + lambda(., c zeta^k) has exactly these boundary values along theta = kt + phi.
class FamilySearch {
public:
    FamilySearch(const ScalarField& u, std::shared_ptr<const BranchMap> branch, const DomainConstraint* dom,
                 const AnalyticDisc& f, LaurentFamily lam, std::size_t Mt, std::size_t L, std::optional<double> clip)
        : u_(u), branch_(std::move(branch)), dom_(dom), lam_(std::move(lam)), Mt_(Mt), L_(L), P_(f.param_dim()),
          clip_(clip), amb_(branch_ ? branch_->ambient_dim() : P_) {
        wt_ = roots_of_unity(Mt_);
        wl_ = roots_of_unity(L_);
        F_.resize(Mt_ * P_);
        for (std::size_t t = 0; t < Mt_; ++t) f.eval_param_into(wt_[t], F_.data() + t * P_);
        G_.assign(Mt_ * L_ * P_, cplx{0.0, 0.0});
        for (std::size_t t = 0; t < Mt_; ++t)
            for (std::size_t l = 0; l < L_; ++l) lam_.eval_into(wt_[t], wl_[l], G_.data() + (t * L_ + l) * P_);
        vals_.resize(Mt_ * L_);
        value_ = evaluate(G_, feasible_);
    }

    double value() const { return value_; }
    bool feasible() const { return feasible_; }
    const LaurentFamily& family() const { return lam_; }

    void descend(const SearchBudget& b, int sweeps) {
        double step = b.step_init;
        const cplx dirs[4] = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}};
        std::vector<cplx> trial(G_.size());
        for (int sweep = 0; sweep < sweeps && step >= b.min_step; ++sweep) {
            bool improved = false;
            for (std::size_t j = 0; j < lam_.A.size(); ++j)
                for (Eigen::Index q = 0; q < lam_.A[j].rows(); ++q)
                    for (std::size_t c = 0; c < P_; ++c)
                        for (const cplx& dir : dirs) {
                            const cplx delta = step * dir;
                            trial = G_;
                            const int freq = static_cast<int>(q) - lam_.m;
                            for (std::size_t t = 0; t < Mt_; ++t) {
                                const cplx et = wt_[(static_cast<std::size_t>(freq % static_cast<int>(Mt_) +
                                                                              static_cast<int>(Mt_)) *
                                                     t) %
                                                    Mt_];
                                for (std::size_t l = 0; l < L_; ++l)
                                    trial[(t * L_ + l) * P_ + c] += delta * et * wl_[((j + 1) * l) % L_];
                            }
                            bool ok = false;
                            const double v = evaluate(trial, ok);
                            if (ok && v < value_) {
                                G_.swap(trial);
                                trial.resize(G_.size());
                                value_ = v;
                                feasible_ = true;
                                lam_.A[j](q, static_cast<Eigen::Index>(c)) += delta;
                                improved = true;
                                break;
                            }
                        }
            if (!improved) step *= b.step_shrink;
        }
    }

private:
    const cplx* ambient(const cplx* param) {
        if (!branch_) return param;
        branch_->eval_into(param[0], amb_.data());
        return amb_.data();
    }

    double evaluate(const std::vector<cplx>& G, bool& ok) {
        std::vector<cplx> p(P_);
        ok = true;
        for (std::size_t t = 0; t < Mt_; ++t)
            for (std::size_t l = 0; l < L_; ++l) {
                for (std::size_t c = 0; c < P_; ++c) p[c] = F_[t * P_ + c] + G[(t * L_ + l) * P_ + c];
                const cplx* a = ambient(p.data());
                if (dom_ && dom_->excess(a) > 0.0) {
                    ok = false;
                    return std::numeric_limits<double>::infinity();
                }
                vals_[t * L_ + l] = u_.eval_raw(a);
            }
        return boundary_mean(vals_, clip_);
    }

    const ScalarField& u_;
    std::shared_ptr<const BranchMap> branch_;
    const DomainConstraint* dom_;
    LaurentFamily lam_;
    std::size_t Mt_, L_, P_;
    std::optional<double> clip_;
    std::vector<cplx> amb_, wt_, wl_, F_, G_;
    std::vector<double> vals_;
    double value_ = 0.0;
    bool feasible_ = true;
};

enum Purpose : std::uint32_t { kPopulation = 1, kChild = 2 };

inline Eigen::MatrixXcd pad(const Eigen::MatrixXcd& a, int degree) {
    if (a.rows() >= degree + 1) return a;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(degree + 1, a.cols());
    out.topRows(a.rows()) = a;
    return out;
}

/// Best disc from a population of the constant disc, an optional warm start
/// and `restarts` random discs, each descended for `sweeps` sweeps.
inline DiscSearch::State search_population(DiscSearch& s, const Eigen::MatrixXcd& center_row, int degree, int restarts,
                                           int sweeps, const SearchBudget& b, std::uint64_t seed, std::uint32_t stream_a,
                                           std::uint32_t stream_b_base, const Eigen::MatrixXcd* warm) {
    std::vector<Eigen::MatrixXcd> pop;
    Eigen::MatrixXcd c0 = Eigen::MatrixXcd::Zero(degree + 1, center_row.cols());
    c0.row(0) = center_row;
    pop.push_back(c0);
    if (warm) {
        Eigen::MatrixXcd w = pad(*warm, degree).topRows(degree + 1);
        w.row(0) = center_row;
        pop.push_back(w);
    }
    for (int r = 0; r < restarts; ++r) {
        CounterRng rng(seed, stream_a, stream_id({stream_b_base, static_cast<std::uint32_t>(r)}));
        pop.push_back(s.random_disc(center_row, degree, b, rng));
    }
    std::optional<DiscSearch::State> best;
    for (auto& a : pop) {
        auto st = s.make_state(std::move(a));
        descend_continued(s, st, b, sweeps);
        if (!best || st.value < best->value) best = std::move(st);
    }
    return std::move(*best);
}

/// Full search for one lift: population, degree stages, RH rounds.
inline EnvelopeResult search_chart(const ScalarField& u_trunc, std::shared_ptr<const BranchMap> branch,
                                   const DomainConstraint* dom, const Eigen::MatrixXcd& center_row,
                                   const SearchBudget& b, const QuadratureSpec& q, std::uint32_t point_index,
                                   std::uint32_t lift_index) {
    const std::size_t P = static_cast<std::size_t>(center_row.cols());
    DiscSearch s(u_trunc, branch, dom, P, q);
    const std::uint32_t stream_a = stream_id({point_index, lift_index});
    EnvelopeResult res;

    auto best = search_population(s, center_row, b.degree_schedule.front(), b.restarts, b.descent_iters, b, b.seed,
                                  stream_a, stream_id({kPopulation, 0u}), nullptr);
    res.diagnostics.rounds.push_back(best.value);
    for (std::size_t st = 1; st < b.degree_schedule.size(); ++st) {
        auto next = s.make_state(pad(best.a, b.degree_schedule[st]));
        if (next.value <= best.value) {
            descend_continued(s, next, b, b.descent_iters);
            if (next.value <= best.value) best = std::move(next);
        }
        res.diagnostics.rounds.push_back(best.value);
    }
    if (!b.projection_radii.empty()) {
        const double before = best.value;
        s.project(best, b);
        if (best.value < before) s.descend(best, b, b.descent_iters);
        res.diagnostics.rounds.push_back(best.value);
    }

    const int child_restarts = static_cast<int>(std::floor(b.restarts * b.child_fraction));
    const int child_sweeps = std::max(1, static_cast<int>(std::ceil(b.descent_iters * b.child_fraction)));
    RhOptions opt;
    opt.m = b.laurent_m;
    opt.n_terms = b.child_degree;
    opt.deg_A = b.laurent_deg;
    opt.k_schedule = b.k_schedule;
    opt.n_phases = b.n_phases;
    opt.degree_cap = b.degree_cap;
    const std::vector<Arc> full{Arc{}};
    std::optional<Eigen::MatrixXcd> shape;

    for (int round = 0; round < b.rh_rounds; ++round) {
        RhRoundDiagnostics rd;
        BoundaryFamily fam{s.to_disc(best.a), {}};
        const auto wb = roots_of_unity(b.boundary_samples);
        std::vector<double> inner(b.boundary_samples);
        for (std::size_t j = 0; j < b.boundary_samples; ++j) {
            Eigen::MatrixXcd crow(1, static_cast<Eigen::Index>(P));
            fam.base.eval_param_into(wb[j], crow.data());
            const auto child = search_population(
                s, crow, b.child_degree, child_restarts, child_sweeps, b, b.seed, stream_a,
                stream_id({kChild, static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(j)}),
                shape ? &*shape : nullptr);
            shape = child.a;
            inner[j] = child.value;
            fam.samples.push_back(s.to_disc(child.a));
        }
        rd.children_integral = arcs_functional(inner, b.boundary_samples, full);
        LaurentFamily lam = LaurentFamily::zero(opt.m, opt.n_terms, opt.deg_A, P);
        try {
            const FitResult fit = fit_laurent(fam, opt.m, opt.n_terms, opt.deg_A, opt.fit);
            lam = fit.family;
            rd.fit_residual = fit.residual;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IllConditioned) throw;
            rd.skipped = e.what();
        }
        std::optional<FamilySearch> fs;
        fs.emplace(u_trunc, branch, dom, fam.base, lam, b.family_grid_t, b.family_grid_theta, q.clip);
        if (!fs->feasible() || fs->value() > best.value) {
            // The fitted family is worse than doing nothing; polish from zero instead.
            fs.emplace(u_trunc, branch, dom, fam.base, LaurentFamily::zero(opt.m, opt.n_terms, opt.deg_A, P),
                       b.family_grid_t, b.family_grid_theta, q.clip);
        }
        fs->descend(b, b.family_sweeps);
        rd.double_integral = fs->value();
        const auto step = compose_best(fam.base, fs->family(), opt,
                                       [&](const AnalyticDisc& h) { return s.make_state(h.coeffs()).value; });
        if (step) {
            auto cand = s.make_state(step->disc.coeffs());
            rd.candidate = cand.value;
            rd.eps_report = std::max(0.0, cand.value - rd.double_integral);
            rd.k = step->k;
            if (cand.value < best.value - 1e-12) {
                best = std::move(cand);
                rd.accepted = true;
            }
        } else if (rd.skipped.empty()) {
            rd.skipped = "no k in the schedule fits under the degree cap";
        }
        res.diagnostics.rh.push_back(rd);
        res.diagnostics.rounds.push_back(best.value);
    }

    res.value = best.value;
    res.witness = s.to_disc(best.a);
    res.diagnostics.evaluations = s.evaluations();
    return res;
}

inline void check_field(const ScalarField& u, const SpaceModel& space) {
    require(u.input_dim() == space.ambient_dim(), ErrorCode::InvalidArgument,
            "field dimension " + std::to_string(u.input_dim()) + " does not match the space dimension " +
                std::to_string(space.ambient_dim()));
}

}  // namespace detail

/// Search from already-lifted start points; the minimum over lifts wins (first on ties).
inline EnvelopeResult envelope_at_lifts(const ScalarField& u, const SpaceModel& space, const std::vector<LiftedPoint>& lifts,
                                        const SearchBudget& b, const QuadratureSpec& q, std::uint32_t point_index = 0) {
    b.validate();
    q.validate();
    detail::check_field(u, space);
    require(space.kind() == SpaceKind::NormalizedCurve, ErrorCode::InvalidArgument, "lifted points need a curve model");
    require(!lifts.empty(), ErrorCode::PointNotOnSpace, "no lifts given");
    const ScalarField ut = u.truncated_below(-static_cast<double>(b.truncation));
    const DomainConstraint* dom = space.domain_constraint() ? &*space.domain_constraint() : nullptr;
    std::optional<EnvelopeResult> best;
    std::vector<double> per_lift;
    for (std::size_t i = 0; i < lifts.size(); ++i) {
        auto br = std::make_shared<const BranchMap>(space.branch(lifts[i].branch));
        if (dom) {
            const auto p = br->eval(lifts[i].t);
            require(dom->contains(p), ErrorCode::PointNotOnSpace, "point lies outside the domain constraint");
        }
        Eigen::MatrixXcd row(1, 1);
        row(0, 0) = lifts[i].t;
        auto r = detail::search_chart(ut, br, dom, row, b, q, point_index, static_cast<std::uint32_t>(i));
        per_lift.push_back(r.value);
        if (!best || r.value < best->value) best = std::move(r);
    }
    best->diagnostics.branch_values = per_lift;
    return std::move(*best);
}

inline EnvelopeResult envelope_at(const ScalarField& u, const SpaceModel& space, const LiftedPoint& x,
                                  const SearchBudget& b, const QuadratureSpec& q, std::uint32_t point_index = 0) {
    return envelope_at_lifts(u, space, {x}, b, q, point_index);
}

/// u^(x) estimate: min of P_u over the searched discs centered at x.
inline EnvelopeResult envelope_at(const ScalarField& u, const SpaceModel& space, const ComplexPoint& x,
                                  const SearchBudget& b, const QuadratureSpec& q, std::uint32_t point_index = 0) {
    require(x.dim() == space.ambient_dim(), ErrorCode::InvalidArgument, "point dimension mismatch");
    if (space.kind() == SpaceKind::NormalizedCurve)
        return envelope_at_lifts(u, space, lift_point(space, x, 1e-9), b, q, point_index);
    b.validate();
    q.validate();
    detail::check_field(u, space);
    require(contains(space, x, 1e-12), ErrorCode::PointNotOnSpace, "point lies outside the domain constraint");
    const ScalarField ut = u.truncated_below(-static_cast<double>(b.truncation));
    const DomainConstraint* dom = space.domain_constraint() ? &*space.domain_constraint() : nullptr;
    Eigen::MatrixXcd row(1, static_cast<Eigen::Index>(x.dim()));
    for (std::size_t i = 0; i < x.dim(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
    auto r = detail::search_chart(ut, nullptr, dom, row, b, q, point_index, 0);
    r.diagnostics.branch_values = {r.value};
    return r;
}

struct PointResult {
    ComplexPoint x;
    double value = 0.0;
    AnalyticDisc witness;
    PointDiagnostics diagnostics;
    bool warm_started = false;
    /// Set when the point failed; value and witness are then meaningless.
    std::optional<std::string> error;
};

struct EnvelopeEstimate {
    std::vector<PointResult> points;

    std::size_t size() const { return points.size(); }
    std::vector<double> values() const {
        std::vector<double> v;
        for (const auto& p : points) v.push_back(p.value);
        return v;
    }
};

struct GridOptions {
    std::size_t threads = 1;
    /// Witnesses of this many nearest grid neighbors are tried as warm starts.
    std::size_t neighbors = 4;
};

namespace detail {

template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

/// Witness of another point re-centered at x (same chart); empty if x is not on its branch.
inline std::optional<Eigen::MatrixXcd> recenter(const AnalyticDisc& w, const ComplexPoint& x) {
    Eigen::MatrixXcd a = w.coeffs();
    if (const BranchMap* br = w.branch()) {
        const auto pre = branch_preimages(*br, x.coords(), 1e-9);
        if (pre.empty()) return std::nullopt;
        a(0, 0) = pre.front();
    } else {
        for (std::size_t i = 0; i < x.dim(); ++i) a(0, static_cast<Eigen::Index>(i)) = x[i];
    }
    return a;
}

}  // namespace detail

/// envelope_at on every grid point (in parallel), then a deterministic warm-start
/// pass that tries neighbors' witnesses re-centered at each point.
inline EnvelopeEstimate envelope_grid(const ScalarField& u, const SpaceModel& space, const std::vector<ComplexPoint>& grid,
                                      const SearchBudget& b, const QuadratureSpec& q, const GridOptions& g = {}) {
    b.validate();
    q.validate();
    EnvelopeEstimate est;
    est.points.resize(grid.size());
    detail::parallel_for(grid.size(), g.threads, [&](std::size_t i) {
        PointResult& pr = est.points[i];
        pr.x = grid[i];
        try {
            auto r = envelope_at(u, space, grid[i], b, q, static_cast<std::uint32_t>(i));
            pr.value = r.value;
            pr.witness = std::move(r.witness);
            pr.diagnostics = std::move(r.diagnostics);
        } catch (const Error& e) {
            pr.error = e.what();
        }
    });
    if (g.neighbors == 0) return est;

    const ScalarField ut = u.truncated_below(-static_cast<double>(b.truncation));
    const DomainConstraint* dom = space.domain_constraint() ? &*space.domain_constraint() : nullptr;
    std::vector<std::optional<std::pair<double, AnalyticDisc>>> upgrades(grid.size());
    detail::parallel_for(grid.size(), g.threads, [&](std::size_t i) {
        if (est.points[i].error) return;
        std::vector<std::pair<double, std::size_t>> order;
        for (std::size_t j = 0; j < grid.size(); ++j)
            if (j != i && !est.points[j].error) order.emplace_back(distance(grid[i], grid[j]), j);
        std::sort(order.begin(), order.end());
        if (order.size() > g.neighbors) order.resize(g.neighbors);
        double best = est.points[i].value;
        for (const auto& [d, j] : order) {
            const AnalyticDisc& w = est.points[j].witness;
            const auto a = detail::recenter(w, grid[i]);
            if (!a) continue;
            detail::DiscSearch s(ut, w.branch_ptr(), dom, w.param_dim(), q);
            const auto st = s.make_state(*a);
            if (st.value < best) {
                best = st.value;
                upgrades[i] = std::pair{st.value, s.to_disc(st.a)};
            }
        }
    });
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!upgrades[i]) continue;
        auto& pr = est.points[i];
        pr.value = upgrades[i]->first;
        pr.witness = std::move(upgrades[i]->second);
        pr.warm_started = true;
        pr.diagnostics.rounds.push_back(pr.value);
    }
    return est;
}

struct SubmeanViolation {
    std::size_t disc_index = 0;
    ComplexPoint center;
    double center_value = 0.0;
    double boundary_mean = 0.0;
    /// center_value - boundary_mean (> tol).
    double excess = 0.0;
    /// Boundary sample where the interpolated v is smallest.
    ComplexPoint culprit;
};

struct SubmeanReport {
    std::size_t checked = 0;
    std::vector<SubmeanViolation> violations;
    bool empty() const { return violations.empty(); }
};

namespace detail {

inline bool is_regular(const SpaceModel& space, const std::vector<ComplexPoint>& singular, const ComplexPoint& p) {
    if (space.kind() == SpaceKind::Euclidean) return true;
    for (const auto& s : singular)
        if (distance(s, p) <= 1e-9) return false;
    return true;
}

}  // namespace detail

/// Discrete submean test v(f(0)) <= mean v(f(e^{it})) for trial discs, with v
/// interpolated piecewise-linearly from the grid (curve parameter planes or one
/// complex coordinate); in higher dimension every sample must hit a grid point.
inline SubmeanReport check_submean(const EnvelopeEstimate& v, const SpaceModel& space,
                                   const std::vector<AnalyticDisc>& trial_discs, const QuadratureSpec& q, double tol) {
    q.validate();
    std::vector<ComplexPoint> pts;
    std::vector<double> vals;
    for (const auto& p : v.points)
        if (!p.error) {
            pts.push_back(p.x);
            vals.push_back(p.value);
        }
    require(!pts.empty(), ErrorCode::InterpolationOutOfRange, "grid has no valid points");
    const std::size_t N = space.ambient_dim();

    // Interpolation in a chart: returns v at a parameter value, or throws.
    std::function<double(const AnalyticDisc&, cplx)> interp;
    std::vector<std::pair<std::string, std::shared_ptr<PlanarInterpolant>>> charts;
    std::optional<std::size_t> slice_coord;
    std::shared_ptr<PlanarInterpolant> planar;

    if (space.kind() == SpaceKind::NormalizedCurve) {
        for (const auto& br : space.branches()) {
            std::vector<cplx> nodes;
            std::vector<double> nv;
            for (std::size_t i = 0; i < pts.size(); ++i)
                for (cplx t : detail::branch_preimages(br, pts[i].coords(), 1e-9)) {
                    nodes.push_back(t);
                    nv.push_back(vals[i]);
                }
            if (nodes.size() >= 3) charts.emplace_back(br.label, std::make_shared<PlanarInterpolant>(nodes, nv));
        }
    } else {
        // A complex line slice: exactly one coordinate varies over the grid.
        std::vector<std::size_t> varying;
        for (std::size_t c = 0; c < N; ++c)
            for (const auto& p : pts)
                if (p[c] != pts.front()[c]) {
                    varying.push_back(c);
                    break;
                }
        if (varying.size() <= 1 && pts.size() >= 3) {
            slice_coord = varying.empty() ? 0 : varying.front();
            std::vector<cplx> nodes;
            for (const auto& p : pts) nodes.push_back(p[*slice_coord]);
            planar = std::make_shared<PlanarInterpolant>(nodes, vals);
        }
    }

    auto value_at = [&](const AnalyticDisc& f, cplx zeta) -> double {
        if (space.kind() == SpaceKind::NormalizedCurve) {
            require(f.branch() != nullptr, ErrorCode::InterpolationOutOfRange, "trial discs on curves must be branch discs");
            cplx t;
            f.eval_param_into(zeta, &t);
            for (const auto& [label, chart] : charts)
                if (label == f.branch()->label) {
                    const auto r = (*chart)(t);
                    if (!r) throw Error(ErrorCode::InterpolationOutOfRange, "trial disc leaves the gridded region");
                    return *r;
                }
            throw Error(ErrorCode::InterpolationOutOfRange, "no grid on branch '" + f.branch()->label + "'");
        }
        std::vector<cplx> p(N);
        f.eval_into(zeta, p.data());
        if (planar) {
            for (std::size_t c = 0; c < N; ++c)
                if (c != *slice_coord && std::abs(p[c] - pts.front()[c]) > 1e-12)
                    throw Error(ErrorCode::InterpolationOutOfRange, "trial disc leaves the gridded slice");
            const auto r = (*planar)(p[*slice_coord]);
            if (!r) throw Error(ErrorCode::InterpolationOutOfRange, "trial disc leaves the gridded region");
            return *r;
        }
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (distance(pts[i].coords(), p) <= 1e-9) return vals[i];
        throw Error(ErrorCode::InterpolationOutOfRange, "trial disc sample is not a grid point");
    };

    SubmeanReport rep;
    const auto w = roots_of_unity(q.M);
    for (std::size_t d = 0; d < trial_discs.size(); ++d) {
        const AnalyticDisc& f = trial_discs[d];
        require(f.ambient_dim() == N, ErrorCode::InvalidArgument, "trial disc dimension mismatch");
        const double vc = value_at(f, 0.0);
        std::vector<double> bv(q.M);
        std::size_t argmin = 0;
        for (std::size_t j = 0; j < q.M; ++j) {
            bv[j] = value_at(f, w[j]);
            if (bv[j] < bv[argmin]) argmin = j;
        }
        std::vector<double> tmp = bv;
        const double mean = boundary_mean(tmp, q.clip);
        ++rep.checked;
        if (vc - mean > tol) rep.violations.push_back({d, f.center(), vc, mean, vc - mean, f.eval(w[argmin])});
    }
    return rep;
}

struct UpperRegularization {
    /// Maximum over the smallest-radius shell.
    double value = 0.0;
    std::vector<double> radii;
    std::vector<double> shell_max;
};

/// Finite-scale limsup of v at p over regular grid points: max of v on each
/// punctured shell 0 < |q - p| <= r.
inline UpperRegularization upper_regularize(const EnvelopeEstimate& v, const SpaceModel& space, const ComplexPoint& p,
                                            std::vector<double> radii) {
    require(!radii.empty(), ErrorCode::InvalidArgument, "upper_regularize needs radii");
    require(contains(space, p, 1e-9), ErrorCode::PointNotOnSpace, "point is not on the space");
    std::sort(radii.begin(), radii.end());
    const std::vector<ComplexPoint> singular =
        space.kind() == SpaceKind::NormalizedCurve ? singular_locus_hint(space) : std::vector<ComplexPoint>{};
    UpperRegularization out;
    out.radii = radii;
    for (double r : radii) {
        require(r > 0.0, ErrorCode::InvalidArgument, "radii must be positive");
        double mx = kNegInf;
        bool any = false;
        for (const auto& q : v.points) {
            if (q.error) continue;
            const double d = distance(q.x, p);
            if (d > 0.0 && d <= r && detail::is_regular(space, singular, q.x)) {
                mx = any ? std::max(mx, q.value) : q.value;
                any = true;
            }
        }
        if (!any) throw Error(ErrorCode::EmptyShell, "no regular grid points within radius " + std::to_string(r));
        out.shell_max.push_back(mx);
    }
    out.value = out.shell_max.front();
    return out;
}

}  // namespace penv
