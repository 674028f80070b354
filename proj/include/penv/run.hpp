#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <thread>

#include "penv/io.hpp"
#include "penv/oracle.hpp"

namespace penv {

inline constexpr const char* kVersion = "0.1.0";

enum class Mode { Envelope, Hull, Oracle, Verify, Counterexample };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::Envelope: return "envelope";
        case Mode::Hull: return "hull";
        case Mode::Oracle: return "oracle";
        case Mode::Verify: return "verify";
        case Mode::Counterexample: return "counterexample";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::Envelope, Mode::Hull, Mode::Oracle, Mode::Verify, Mode::Counterexample})
        if (s == to_string(m)) return m;
    throw Error(ErrorCode::ConfigError, "unknown mode '" + s + "'");
}

struct HullSpec {
    CompactSet K{1};
    ComplexPoint x;
    double U_radius = 0.1;
    double eps = 0.1;
    std::optional<DomainConstraint> window;
    /// User assertion that the psh hull of K is compact (not checkable here).
    bool hull_compact_assumed = false;
    std::vector<std::string> rho;
};

struct OracleSpec {
    std::size_t n = 129;
    cplx center{0.0, 0.0};
    double radius = 1.0;
    double inner_radius = 0.0;
    std::optional<double> floor;
    MinorantOptions options;
    std::optional<std::string> compare;
};

struct VerifySpec {
    std::string certificate;
    double tol = 1e-6;
};

struct RunConfig {
    std::optional<Mode> mode;
    std::uint64_t seed = 0;
    std::optional<SpaceModel> space;
    std::string field_text;
    std::vector<ComplexPoint> points;
    SearchBudget budget;
    QuadratureSpec quadrature;
    std::size_t neighbors = 4;
    std::optional<HullSpec> hull;
    std::optional<OracleSpec> oracle;
    std::optional<VerifySpec> verify;
    /// FNV-1a of the canonical config text.
    std::string hash;
    /// Directory of the config file; relative paths inside it resolve here.
    std::string base_dir = ".";
};

namespace detail {

inline std::vector<cplx> point_coords(const std::string& s, const std::string& what) {
    return io::parse_complex_list(s, what);
}

inline std::vector<ComplexPoint> point_list(const std::string& s, const std::string& what) {
    std::vector<ComplexPoint> out;
    for (const auto& p : io::split_top(s, ';')) out.emplace_back(point_coords(p, what));
    return out;
}

inline SpaceModel preset_space(const std::string& name) {
    if (name == "zw0")
        return SpaceModel::normalized_curve({BranchMap("z", {{0.0, 1.0}, {0.0}}), BranchMap("w", {{0.0}, {0.0, 1.0}})});
    if (name == "cusp") return SpaceModel::normalized_curve({BranchMap("branch_0", {{0.0, 0.0, 0.0, 1.0}, {0.0, 0.0, 1.0}})});
    throw Error(ErrorCode::ConfigError, "unknown space preset '" + name + "'");
}

inline std::optional<DomainConstraint> read_domain(io::ConfigReader& r, const std::string& sec, const std::string& prefix,
                                                   std::size_t dim) {
    const std::string shape = r.get(sec, prefix).value_or("none");
    if (shape == "none") return std::nullopt;
    const auto center = point_coords(r.need(sec, prefix + "_center"), sec + "." + prefix + "_center");
    const auto radius = io::parse_double_list(r.need(sec, prefix + "_radius"), sec + "." + prefix + "_radius");
    require(center.size() == dim, ErrorCode::ConfigError, sec + "." + prefix + "_center has the wrong dimension");
    if (shape == "ball") {
        require(radius.size() == 1, ErrorCode::ConfigError, sec + "." + prefix + "_radius: a ball has one radius");
        return DomainConstraint::ball(center, radius[0]);
    }
    require(shape == "polydisc", ErrorCode::ConfigError, sec + "." + prefix + ": expected none, ball or polydisc");
    require(radius.size() == dim, ErrorCode::ConfigError, sec + "." + prefix + "_radius needs one radius per coordinate");
    return DomainConstraint::polydisc(center, radius);
}

inline SpaceModel read_space(io::ConfigReader& r) {
    const std::string kind = r.need("space", "kind");
    if (kind == "euclidean") {
        const auto dim = static_cast<std::size_t>(r.get_int("space", "dim", 0));
        require(dim >= 1, ErrorCode::ConfigError, "space.dim must be a positive integer");
        return SpaceModel::euclidean(dim, read_domain(r, "space", "domain", dim));
    }
    require(kind == "curve", ErrorCode::ConfigError, "space.kind must be euclidean or curve");
    if (auto preset = r.get("space", "preset")) {
        const auto base = preset_space(*preset);
        return SpaceModel::normalized_curve(base.branches(), read_domain(r, "space", "domain", base.ambient_dim()));
    }
    std::vector<BranchMap> branches;
    for (const auto& name : io::split_top(r.need("space", "branches"), ',')) {
        std::vector<poly::Coeffs> comps;
        for (const auto& c : io::split_top(r.need("space", "branch." + name), '|'))
            comps.push_back(io::parse_complex_list(c, "space.branch." + name));
        branches.emplace_back(name, std::move(comps));
    }
    require(!branches.empty(), ErrorCode::ConfigError, "space.branches is empty");
    const std::size_t dim = branches.front().ambient_dim();
    return SpaceModel::normalized_curve(std::move(branches), read_domain(r, "space", "domain", dim));
}

/// Lexicographic lattice, last real axis fastest. counts[k] == 1 pins axis k at lower.
inline std::vector<std::vector<double>> real_lattice(const std::vector<double>& lo, const std::vector<double>& hi,
                                                     const std::vector<int>& counts) {
    std::vector<std::vector<double>> out{{}};
    for (std::size_t k = 0; k < counts.size(); ++k) {
        require(counts[k] >= 1, ErrorCode::ConfigError, "grid.counts entries must be >= 1");
        std::vector<std::vector<double>> next;
        for (const auto& pre : out)
            for (int i = 0; i < counts[k]; ++i) {
                auto p = pre;
                p.push_back(counts[k] == 1 ? lo[k] : lo[k] + (hi[k] - lo[k]) * i / (counts[k] - 1));
                next.push_back(std::move(p));
            }
        out = std::move(next);
    }
    return out;
}

inline std::vector<ComplexPoint> read_grid(io::ConfigReader& r, const SpaceModel& space) {
    const std::string kind = r.get("grid", "kind").value_or("points");
    const std::size_t N = space.ambient_dim();
    std::vector<ComplexPoint> pts;
    if (kind == "points") {
        pts = point_list(r.need("grid", "points"), "grid.points");
        for (const auto& p : pts) require(p.dim() == N, ErrorCode::ConfigError, "grid point of the wrong dimension");
    } else if (kind == "lattice" || kind == "branch_lattice") {
        const auto lo = point_coords(r.need("grid", "lower"), "grid.lower");
        const auto hi = point_coords(r.need("grid", "upper"), "grid.upper");
        const auto counts = io::parse_int_list(r.need("grid", "counts"), "grid.counts");
        const std::size_t P = kind == "lattice" ? N : 1;
        require(lo.size() == P && hi.size() == P && counts.size() == 2 * P, ErrorCode::ConfigError,
                "grid.lower/upper need " + std::to_string(P) + " coordinates and grid.counts " + std::to_string(2 * P));
        std::vector<double> rl, rh;
        for (std::size_t i = 0; i < P; ++i) {
            rl.insert(rl.end(), {lo[i].real(), lo[i].imag()});
            rh.insert(rh.end(), {hi[i].real(), hi[i].imag()});
        }
        const auto lat = real_lattice(rl, rh, counts);
        if (kind == "lattice") {
            for (const auto& v : lat) {
                std::vector<cplx> c(N);
                for (std::size_t i = 0; i < N; ++i) c[i] = {v[2 * i], v[2 * i + 1]};
                pts.emplace_back(std::move(c));
            }
        } else {
            require(space.kind() == SpaceKind::NormalizedCurve, ErrorCode::ConfigError, "branch_lattice needs a curve space");
            for (const auto& name : io::split_top(r.need("grid", "branch"), ','))
                for (const auto& v : lat) {
                    ComplexPoint p(space.branch(name).eval({v[0], v[1]}));
                    bool dup = false;
                    for (const auto& q : pts) dup = dup || distance(p, q) <= 1e-12;
                    if (!dup) pts.push_back(std::move(p));
                }
        }
    } else {
        throw Error(ErrorCode::ConfigError, "grid.kind must be points, lattice or branch_lattice");
    }
    require(!pts.empty(), ErrorCode::ConfigError, "the grid is empty");
    return pts;
}

inline void read_budget(io::ConfigReader& r, SearchBudget& b, std::size_t& neighbors) {
    const std::string s = "budget";
    auto ints = [&](const char* k, std::vector<int>& dst) {
        if (auto v = r.get(s, k)) dst = io::parse_int_list(*v, s + "." + k);
    };
    auto dbls = [&](const char* k, std::vector<double>& dst) {
        if (auto v = r.get(s, k)) dst = io::parse_double_list(*v, s + "." + k);
    };
    auto i = [&](const char* k, auto& dst) { dst = static_cast<std::remove_reference_t<decltype(dst)>>(r.get_int(s, k, static_cast<long long>(dst))); };
    auto d = [&](const char* k, double& dst) { dst = r.get_double(s, k, dst); };
    ints("degree_schedule", b.degree_schedule);
    i("restarts", b.restarts);
    i("descent_iters", b.descent_iters);
    i("rh_rounds", b.rh_rounds);
    ints("k_schedule", b.k_schedule);
    i("n_phases", b.n_phases);
    d("step_init", b.step_init);
    d("step_shrink", b.step_shrink);
    d("min_step", b.min_step);
    d("init_scale", b.init_scale);
    d("scale_decay", b.scale_decay);
    i("truncation", b.truncation);
    i("boundary_samples", b.boundary_samples);
    i("child_degree", b.child_degree);
    d("child_fraction", b.child_fraction);
    i("laurent_m", b.laurent_m);
    i("laurent_deg", b.laurent_deg);
    i("degree_cap", b.degree_cap);
    i("family_sweeps", b.family_sweeps);
    i("family_grid_t", b.family_grid_t);
    i("family_grid_theta", b.family_grid_theta);
    dbls("smoothing", b.smoothing);
    i("smoothing_points", b.smoothing_points);
    d("constraint_penalty", b.constraint_penalty);
    dbls("projection_radii", b.projection_radii);
    if (auto v = r.get(s, "projection_reach")) {
        b.projection_reach.clear();
        for (const auto& sched : io::split_top(*v, '|'))
            b.projection_reach.push_back(io::parse_double_list(sched, s + ".projection_reach"));
    }
    i("projection_iters", b.projection_iters);
    d("projection_beta", b.projection_beta);
    i("projection_stencil", b.projection_stencil);
    i("neighbors", neighbors);
}

inline CompactSet read_compact(io::ConfigReader& r, std::size_t N) {
    CompactSet K(N);
    const std::string s = "hull";
    if (auto v = r.get(s, "ball"))
        for (const auto& e : io::split_top(*v, '|')) {
            const auto parts = io::split_top(e, ';');
            require(parts.size() == 2, ErrorCode::ConfigError, "hull.ball entries are <center> ; <radius>");
            K.add_ball(point_coords(parts[0], "hull.ball"), io::parse_double(parts[1], "hull.ball"));
        }
    if (auto v = r.get(s, "polydisc"))
        for (const auto& e : io::split_top(*v, '|')) {
            const auto parts = io::split_top(e, ';');
            require(parts.size() == 2 || parts.size() == 3, ErrorCode::ConfigError,
                    "hull.polydisc entries are <center> ; <radii> [; <disc|circle list>]");
            std::vector<CompactSet::Factor> factors;
            if (parts.size() == 3)
                for (const auto& f : io::split_top(parts[2], ',')) {
                    require(f == "disc" || f == "circle", ErrorCode::ConfigError, "polydisc factors are disc or circle");
                    factors.push_back(f == "circle" ? CompactSet::Factor::Circle : CompactSet::Factor::Disc);
                }
            K.add_polydisc(point_coords(parts[0], "hull.polydisc"), io::parse_double_list(parts[1], "hull.polydisc"),
                           std::move(factors));
        }
    if (auto v = r.get(s, "points")) K.add_points(point_list(*v, "hull.points"), r.get_double(s, "points_blowup", 0.0));
    else r.get(s, "points_blowup");
    require(!K.pieces().empty(), ErrorCode::ConfigError, "hull needs at least one of ball, polydisc, points");
    return K;
}

}  // namespace detail

/// Parses and validates a config. Every key must be known; `run.seed` is required.
inline RunConfig parse_config(const io::IniDoc& doc, std::optional<Mode> mode_hint = std::nullopt) {
    io::ConfigReader r(doc);
    RunConfig c;
    if (auto m = r.get("run", "mode")) c.mode = parse_mode(*m);
    if (mode_hint && c.mode)
        require(*c.mode == *mode_hint, ErrorCode::ConfigError,
                std::string("config is for mode ") + to_string(*c.mode) + ", not " + to_string(*mode_hint));
    if (mode_hint) c.mode = mode_hint;
    require(c.mode.has_value(), ErrorCode::ConfigError, "missing required key 'mode' in section [run]");
    {
        const auto seed = r.get("run", "seed");
        require(seed.has_value(), ErrorCode::ConfigError, "missing required key 'seed' in section [run]");
        const long long sv = io::parse_int(*seed, "run.seed");
        require(sv >= 0, ErrorCode::ConfigError, "run.seed must be nonnegative");
        c.seed = static_cast<std::uint64_t>(sv);
    }
    detail::read_budget(r, c.budget, c.neighbors);
    c.budget.seed = c.seed;
    c.quadrature.M = static_cast<std::size_t>(r.get_int("quadrature", "M", 512));
    if (auto v = r.get("quadrature", "clip")) c.quadrature.clip = io::parse_double(*v, "quadrature.clip");
    try {
        c.budget.validate();
        c.quadrature.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }

    const Mode mode = *c.mode;
    if (mode == Mode::Envelope || mode == Mode::Oracle) {
        c.space = detail::read_space(r);
        c.field_text = r.need("field", "expr");
        (void)ScalarField::parse(c.field_text, c.space->ambient_dim());
        if (mode == Mode::Envelope || r.has_section("grid")) c.points = detail::read_grid(r, *c.space);
    }
    if (mode == Mode::Hull) {
        const auto N = static_cast<std::size_t>(r.get_int("hull", "dim", 0));
        require(N >= 1, ErrorCode::ConfigError, "hull.dim must be a positive integer");
        HullSpec h;
        h.K = detail::read_compact(r, N);
        h.x = ComplexPoint(detail::point_coords(r.need("hull", "x"), "hull.x"));
        require(h.x.dim() == N, ErrorCode::ConfigError, "hull.x has the wrong dimension");
        h.U_radius = r.get_double("hull", "U_radius", h.U_radius);
        h.eps = r.get_double("hull", "eps", h.eps);
        h.window = detail::read_domain(r, "hull", "window", N);
        h.hull_compact_assumed = r.get_bool("hull", "hull_compact_assumed", false);
        if (auto v = r.get("hull", "rho")) h.rho = io::split_top(*v, ';');
        for (const auto& e : h.rho) (void)ScalarField::parse(e, N);
        require(h.U_radius > 0.0 && h.eps > 0.0, ErrorCode::ConfigError, "hull.U_radius and hull.eps must be positive");
        c.hull = std::move(h);
    }
    if (mode == Mode::Oracle) {
        OracleSpec o;
        o.n = static_cast<std::size_t>(r.get_int("oracle", "n", 129));
        if (auto v = r.get("oracle", "center")) o.center = io::parse_complex(*v, "oracle.center");
        o.radius = r.get_double("oracle", "radius", 1.0);
        o.inner_radius = r.get_double("oracle", "inner_radius", 0.0);
        if (auto v = r.get("oracle", "floor")) o.floor = io::parse_double(*v, "oracle.floor");
        o.options.tol = r.get_double("oracle", "tol", o.options.tol);
        o.options.max_iters = static_cast<std::size_t>(r.get_int("oracle", "max_iters", 1000000));
        o.options.omega = r.get_double("oracle", "omega", 0.0);
        o.compare = r.get("oracle", "compare");
        c.oracle = std::move(o);
    }
    if (mode == Mode::Verify) {
        VerifySpec v;
        v.certificate = r.need("verify", "certificate");
        v.tol = r.get_double("verify", "tol", v.tol);
        c.verify = std::move(v);
    }
    r.finish();
    c.hash = io::fnv1a_hex(doc.canonical());
    return c;
}

inline RunConfig load_config(const std::string& path, std::optional<Mode> mode_hint = std::nullopt) {
    auto c = parse_config(io::IniDoc::load(path), mode_hint);
    c.base_dir = std::filesystem::path(path).parent_path().string();
    if (c.base_dir.empty()) c.base_dir = ".";
    return c;
}

/// Built-in zw = 0 scenario: u(z, 0) = 0 for z != 0, u(0, w) = 1, both axes
/// sampled on an 11 x 11 lattice of spacing 0.1.
inline RunConfig counterexample_config(std::uint64_t seed) {
    RunConfig c;
    c.mode = Mode::Counterexample;
    c.seed = seed;
    c.space = detail::preset_space("zw0");
    c.field_text = "cindicator(box(0, 0; 0, inf))";
    const double h = 0.1;
    for (int i = -5; i <= 5; ++i)
        for (int j = -5; j <= 5; ++j) {
            const cplx w{i * h, j * h};
            c.points.push_back(ComplexPoint{cplx{0.0}, w});
            if (w != 0.0) c.points.push_back(ComplexPoint{w, cplx{0.0}});
        }
    c.budget.degree_schedule = {2, 4};
    c.budget.restarts = 4;
    c.budget.descent_iters = 8;
    c.budget.seed = seed;
    c.quadrature.M = 64;
    c.hash = io::fnv1a_hex("counterexample:" + std::to_string(seed));
    return c;
}

/// Counterexample run from a config: the scenario is built in, the config only
/// supplies seed, [budget] and [quadrature].
inline RunConfig load_counterexample(const std::string& path) {
    const auto doc = io::IniDoc::load(path);
    const auto c = parse_config(doc, Mode::Counterexample);
    auto out = counterexample_config(c.seed);
    if (doc.sections.count("budget")) out.budget = c.budget;
    if (doc.sections.count("quadrature")) out.quadrature = c.quadrature;
    out.neighbors = c.neighbors;
    out.hash = c.hash;
    return out;
}

struct RunOptions {
    std::string out_dir = ".";
    std::size_t threads = 1;
    bool quiet = false;
};

inline std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Outcome of a run: the deterministic results document plus the files written.
struct RunOutput {
    io::json results;
    std::vector<std::string> files;
    /// Nonzero exit for numerical failures detected after the fact (verify mismatch, empty report).
    int exit_code = 0;
    std::string message;
};

namespace detail {

inline io::json manifest_core(const RunConfig& c) {
    return io::json{{"tool", "penv"},
                    {"version", kVersion},
                    {"mode", to_string(*c.mode)},
                    {"config_hash", c.hash},
                    {"seed", c.seed}};
}

inline std::string resolve(const RunConfig& c, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (std::filesystem::path(c.base_dir) / path).string();
}

inline EnvelopeEstimate run_grid(const RunConfig& c, const RunOptions& o) {
    const auto u = ScalarField::parse(c.field_text, c.space->ambient_dim());
    GridOptions g;
    g.threads = o.threads;
    g.neighbors = c.neighbors;
    return envelope_grid(u, *c.space, c.points, c.budget, c.quadrature, g);
}

inline void say(const RunOptions& o, const std::string& s) {
    if (!o.quiet) std::cerr << s << "\n";
}

inline io::json submean_json(const SubmeanReport& rep) {
    io::json v = io::json::array();
    for (const auto& x : rep.violations)
        v.push_back(io::json{{"disc_index", x.disc_index},
                             {"center", io::to_json(x.center)},
                             {"center_value", io::num(x.center_value)},
                             {"boundary_mean", io::num(x.boundary_mean)},
                             {"excess", io::num(x.excess)},
                             {"culprit", io::to_json(x.culprit)}});
    return io::json{{"checked", rep.checked}, {"violations", std::move(v)}};
}

inline RunOutput run_envelope(const RunConfig& c, const RunOptions& o) {
    RunOutput out;
    const auto est = run_grid(c, o);
    out.results = io::json{{"manifest", manifest_core(c)}, {"points", io::to_json(est)}};
    io::write_text(o.out_dir + "/results.csv", io::estimate_csv(est));
    out.files.push_back("results.csv");
    std::size_t failed = 0;
    for (const auto& p : est.points) failed += p.error ? 1 : 0;
    say(o, "envelope: " + std::to_string(est.size()) + " points, " + std::to_string(failed) + " failed");
    return out;
}

inline RunOutput run_counterexample(const RunConfig& c, const RunOptions& o) {
    RunOutput out;
    const auto est = run_grid(c, o);
    const SpaceModel& X = *c.space;
    Eigen::MatrixXcd coeffs(2, 1);
    coeffs(0, 0) = 0.1;
    coeffs(1, 0) = 0.1;
    const AnalyticDisc trial(coeffs, std::make_shared<const BranchMap>(X.branch("w")));
    const auto rep = check_submean(est, X, {trial}, c.quadrature, 1e-6);
    const auto reg = upper_regularize(est, X, ComplexPoint{cplx{0.0}, cplx{0.0}}, {0.15, 0.3, 0.5});
    io::json shells = io::json::array();
    for (std::size_t i = 0; i < reg.radii.size(); ++i)
        shells.push_back(io::json{{"radius", io::num(reg.radii[i])}, {"max", io::num(reg.shell_max[i])}});
    out.results = io::json{{"manifest", manifest_core(c)},
                           {"points", io::to_json(est)},
                           {"trial_disc", io::to_json(trial)},
                           {"submean", submean_json(rep)},
                           {"upper_regularization", io::json{{"value", io::num(reg.value)}, {"shells", shells}}}};
    io::write_text(o.out_dir + "/results.csv", io::estimate_csv(est));
    out.files.push_back("results.csv");
    if (rep.empty()) {
        out.exit_code = 3;
        out.message = "counterexample: the submean check reported no violation";
    } else {
        say(o, "counterexample: " + std::to_string(rep.violations.size()) + " submean violation(s); upper regularization at 0 = " +
                   io::format_double(reg.value));
    }
    return out;
}

inline std::vector<ScalarField> rho_fields(const HullSpec& h) {
    if (h.rho.empty()) return psh_corpus(h.K.dim());
    std::vector<ScalarField> out;
    for (const auto& e : h.rho) out.push_back(ScalarField::parse(e, h.K.dim()));
    return out;
}

inline RunOutput run_hull(const RunConfig& c, const RunOptions& o) {
    RunOutput out;
    const HullSpec& h = *c.hull;
    const DomainConstraint V = h.window ? *h.window : default_window(h.K);
    const auto res = hull_membership(h.K, h.x, h.U_radius, h.eps, V, c.budget, c.quadrature);
    io::json hj{{"K", io::to_json(h.K)},
                {"x", io::to_json(h.x)},
                {"U_radius", io::num(h.U_radius)},
                {"eps", io::num(h.eps)},
                {"window", io::to_json(V)},
                {"hull_compact_assumed", h.hull_compact_assumed},
                {"found", res.found()},
                {"best_value", io::num(res.best_value)}};
    EnvelopeEstimate est;
    PointResult pr;
    pr.x = h.x;
    pr.value = res.search.value;
    pr.witness = res.search.witness;
    pr.diagnostics = res.search.diagnostics;
    est.points.push_back(std::move(pr));
    if (res.found()) {
        const auto rep = verify_certificate(*res.certificate, h.K, rho_fields(h), c.quadrature, V);
        hj["certificate"] = io::to_json(*res.certificate);
        hj["report"] = io::to_json(rep);
        io::json cert{{"K", io::to_json(h.K)},
                      {"window", io::to_json(V)},
                      {"M", c.quadrature.M},
                      {"rho", io::json::array()},
                      {"hull_compact_assumed", h.hull_compact_assumed},
                      {"certificate", io::to_json(*res.certificate)},
                      {"report", io::to_json(rep)}};
        for (const auto& r : rho_fields(h)) cert["rho"].push_back(r.text());
        io::write_text(o.out_dir + "/certificate.json", io::dump(cert));
        out.files.push_back("certificate.json");
        say(o, std::string("hull: certificate found, verification ") + (rep.passed() ? "passed" : "FAILED"));
    } else {
        say(o, "hull: not found, best value " + io::format_double(res.best_value));
    }
    out.results = io::json{{"manifest", manifest_core(c)}, {"points", io::to_json(est)}, {"hull", std::move(hj)}};
    return out;
}

inline RunOutput run_verify(const RunConfig& c, const RunOptions& o) {
    RunOutput out;
    const auto path = resolve(c, c.verify->certificate);
    const auto doc = io::load_json(path);
    const auto K = io::compact_set_from(io::field(doc, "K"));
    const auto V = io::domain_from(io::field(doc, "window"));
    const auto cert = io::certificate_from(io::field(doc, "certificate"));
    std::vector<ScalarField> rho;
    for (const auto& e : io::field(doc, "rho")) rho.push_back(ScalarField::parse(e.get<std::string>(), K.dim()));
    const QuadratureSpec q{io::field(doc, "M").get<std::size_t>(), {}};
    const auto rep = verify_certificate(cert, K, rho, q, V, c.verify->tol);
    const auto fresh = io::to_json(rep);
    const bool match = fresh == io::field(doc, "report");
    out.results = io::json{{"manifest", manifest_core(c)},
                           {"verify", io::json{{"certificate", c.verify->certificate},
                                               {"stored_report_matches", match},
                                               {"passed", rep.passed()},
                                               {"report", fresh}}}};
    if (!match || !rep.passed()) {
        out.exit_code = 3;
        out.message = !match ? "verify: recomputed report differs from the stored one" : "verify: certificate check failed";
    } else {
        say(o, "verify: certificate re-checked bit-exactly, all checks passed");
    }
    return out;
}

inline RunOutput run_oracle(const RunConfig& c, const RunOptions& o) {
    RunOutput out;
    const OracleSpec& os = *c.oracle;
    require(c.space->ambient_dim() == 1, ErrorCode::ConfigError, "oracle mode needs a one-dimensional space");
    const auto u = ScalarField::parse(c.field_text, 1);
    const auto g = GridDomain::annulus(os.n, os.center, os.inner_radius, os.radius);
    const std::optional<double> floor = os.floor ? os.floor : std::optional<double>(-static_cast<double>(c.budget.truncation));
    const auto ug = sample_on_grid(u, g, floor);
    const auto v = subharmonic_minorant(ug, g, os.options);
    std::string grid_csv = "re,im,u,v\n";
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.mask(i, j)) continue;
            const cplx z = g.node(i, j);
            grid_csv += io::format_double(z.real()) + "," + io::format_double(z.imag()) + "," + io::format_double(ug(i, j)) +
                        "," + io::format_double(v(i, j)) + "\n";
        }
    io::write_text(o.out_dir + "/oracle.csv", grid_csv);
    out.files.push_back("oracle.csv");

    io::json table = io::json::array();
    std::vector<std::pair<ComplexPoint, std::optional<double>>> probes;
    if (os.compare) {
        const auto doc = io::load_json(resolve(c, *os.compare));
        for (const auto& p : io::estimate_from(io::field(doc, "points")).points)
            probes.push_back({p.x, p.error ? std::nullopt : std::optional<double>(p.value)});
    }
    for (const auto& p : c.points) probes.push_back({p, std::nullopt});
    std::string cmp_csv = "re,im,envelope,oracle,diff\n";
    double worst = 0.0;
    for (const auto& [x, env] : probes) {
        require(x.dim() == 1, ErrorCode::SchemaMismatch, "oracle comparison needs one-dimensional points");
        const double ov = grid_value(v, g, x[0]);
        io::json row{{"x", io::to_json(x)}, {"oracle", io::num(ov)}};
        cmp_csv += io::format_double(x[0].real()) + "," + io::format_double(x[0].imag()) + ",";
        if (env) {
            row["envelope"] = io::num(*env);
            row["diff"] = io::num(*env - ov);
            worst = std::max(worst, std::abs(*env - ov));
            cmp_csv += io::format_double(*env) + "," + io::format_double(ov) + "," + io::format_double(*env - ov) + "\n";
        } else {
            cmp_csv += "nan," + io::format_double(ov) + ",nan\n";
        }
        table.push_back(std::move(row));
        if (!o.quiet) {
            std::cerr << "  x = " << io::format_double(x[0].real()) << (x[0].imag() < 0 ? " - " : " + ")
                      << io::format_double(std::abs(x[0].imag())) << "i  oracle " << io::format_double(ov);
            if (env) std::cerr << "  envelope " << io::format_double(*env) << "  diff " << io::format_double(*env - ov);
            std::cerr << "\n";
        }
    }
    io::write_text(o.out_dir + "/compare.csv", cmp_csv);
    out.files.push_back("compare.csv");
    out.results = io::json{{"manifest", manifest_core(c)},
                           {"oracle", io::json{{"n", os.n},
                                               {"h", io::num(g.h())},
                                               {"center", io::to_json(os.center)},
                                               {"radius", io::num(os.radius)},
                                               {"inner_radius", io::num(os.inner_radius)},
                                               {"max_abs_diff", io::num(worst)},
                                               {"table", std::move(table)}}}};
    say(o, "oracle: n = " + std::to_string(os.n) + ", " + std::to_string(probes.size()) + " probe(s), max |diff| " +
               io::format_double(worst));
    return out;
}

}  // namespace detail

/// Runs one mode and writes results.json, manifest.json and the mode's extra files
/// into o.out_dir. results.json depends only on the config (never on threads or time).
inline RunOutput run(const RunConfig& c, const RunOptions& opt) {
    RunOptions o = opt;
    o.threads = resolve_threads(o.threads);
    std::filesystem::create_directories(o.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    RunOutput out;
    switch (*c.mode) {
        case Mode::Envelope: out = detail::run_envelope(c, o); break;
        case Mode::Counterexample: out = detail::run_counterexample(c, o); break;
        case Mode::Hull: out = detail::run_hull(c, o); break;
        case Mode::Verify: out = detail::run_verify(c, o); break;
        case Mode::Oracle: out = detail::run_oracle(c, o); break;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_text(o.out_dir + "/results.json", io::dump(out.results));
    out.files.insert(out.files.begin(), "results.json");
    io::json man = detail::manifest_core(c);
    man["wall_time_s"] = wall;
    man["threads"] = o.threads;
    man["exit_code"] = out.exit_code;
    man["files"] = out.files;
    io::write_text(o.out_dir + "/manifest.json", io::dump(man));
    return out;
}

/// Exit code for an error: 2 for validation and input problems, 3 for numerical failures.
inline int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::PointNotOnSpace:
        case ErrorCode::ParseError:
        case ErrorCode::PointOutsideWindow:
        case ErrorCode::SchemaMismatch:
        case ErrorCode::ConfigError:
        case ErrorCode::NotApplicable: return 2;
        case ErrorCode::IllConditioned:
        case ErrorCode::DegreeOverflow:
        case ErrorCode::DomainError:
        case ErrorCode::InterpolationOutOfRange:
        case ErrorCode::EmptyShell:
        case ErrorCode::NotConverged: return 3;
    }
    return 3;
}

// ---------------------------------------------------------------- diff

struct DiffEntry {
    std::size_t index = 0;
    std::string field;
    double a = 0.0, b = 0.0;
};

struct DiffReport {
    bool byte_identical = false;
    std::size_t compared = 0;
    double max_abs_diff = 0.0;
    /// Values differing by more than the tolerance.
    std::vector<DiffEntry> entries;
    bool empty() const { return entries.empty(); }
};

namespace detail {

/// A manifest.json points at its results.json; a results document is used as is.
inline io::json load_results(const std::string& path) {
    auto j = io::load_json(path);
    if (j.contains("manifest")) return j;
    require(j.contains("files") && j.contains("mode"), ErrorCode::SchemaMismatch,
            "'" + path + "' is neither a results document nor a run manifest");
    const auto dir = std::filesystem::path(path).parent_path();
    return io::load_json((dir / "results.json").string());
}

inline double diff_value(const io::json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : io::num_from(j); }

}  // namespace detail

/// Compares two runs point by point: values and per-round incumbents. Points
/// must match in count and coordinates; the mode must agree.
inline DiffReport diff_runs(const std::string& path_a, const std::string& path_b, double tol = 0.0) {
    const auto A = detail::load_results(path_a);
    const auto B = detail::load_results(path_b);
    DiffReport rep;
    rep.byte_identical = io::dump(A) == io::dump(B);
    require(io::field(io::field(A, "manifest"), "mode") == io::field(io::field(B, "manifest"), "mode"),
            ErrorCode::SchemaMismatch, "runs are of different modes");
    const bool pa = A.contains("points"), pb = B.contains("points");
    require(pa == pb, ErrorCode::SchemaMismatch, "only one run has points");
    if (!pa) return rep;
    const auto& P = A.at("points");
    const auto& Q = B.at("points");
    require(P.size() == Q.size(), ErrorCode::SchemaMismatch, "runs have different point counts");
    auto note = [&](std::size_t i, const std::string& f, double a, double b) {
        ++rep.compared;
        if (a == b) return;
        const double d = std::abs(a - b);
        if (std::isfinite(d)) rep.max_abs_diff = std::max(rep.max_abs_diff, d);
        if (!(d <= tol)) rep.entries.push_back({i, f, a, b});
    };
    for (std::size_t i = 0; i < P.size(); ++i) {
        require(io::point_from(io::field(P[i], "x")) == io::point_from(io::field(Q[i], "x")), ErrorCode::SchemaMismatch,
                "point " + std::to_string(i) + " has different coordinates");
        const bool ea = P[i].contains("error"), eb = Q[i].contains("error");
        if (ea || eb) {
            if (ea != eb) rep.entries.push_back({i, "error", ea ? 1.0 : 0.0, eb ? 1.0 : 0.0});
            continue;
        }
        note(i, "value", detail::diff_value(P[i].at("value")), detail::diff_value(Q[i].at("value")));
        const auto& ra = io::field(P[i], "rounds");
        const auto& rb = io::field(Q[i], "rounds");
        if (ra.size() != rb.size()) {
            rep.entries.push_back({i, "rounds.size", static_cast<double>(ra.size()), static_cast<double>(rb.size())});
            continue;
        }
        for (std::size_t k = 0; k < ra.size(); ++k)
            note(i, "rounds[" + std::to_string(k) + "]", io::num_from(ra[k]), io::num_from(rb[k]));
    }
    return rep;
}

}  // namespace penv
