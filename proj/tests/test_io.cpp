#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "penv/penv.hpp"

using namespace penv;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("penv_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kPshConfig = R"(
[run]
mode = envelope
seed = 4

[space]
kind = euclidean
dim = 2

[field]
expr = abs2(z1) + abs2(z2)

[grid]
kind = lattice
lower = (-0.5, 0), (0.2, -0.3)
upper = (0.5, 0), (0.2, 0.3)
counts = 3, 1, 1, 2

[budget]
degree_schedule = 2, 4
restarts = 2
descent_iters = 4

[quadrature]
M = 128
)";

const char* kObstacleConfig = R"(
[run]
mode = envelope
seed = 9

[space]
kind = euclidean
dim = 1
domain = ball
domain_center = 0
domain_radius = 1

[field]
expr = -indicator(ball(0; 0.25))

[grid]
points = 0.5 ; (0, 0.6) ; 0.1

[budget]
degree_schedule = 2, 4
restarts = 3
descent_iters = 6

[quadrature]
M = 128
)";

RunConfig parse_text(const std::string& text, std::optional<Mode> hint = std::nullopt) {
    return parse_config(io::IniDoc::parse(text), hint);
}

void expect_config_error(const std::string& text, const std::string& needle) {
    try {
        parse_text(text);
        FAIL() << "expected ConfigError mentioning " << needle;
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigError);
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        EXPECT_EQ(exit_code_for(e.code()), 2);
    }
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto i = s.find(from);
    if (i != std::string::npos) s.replace(i, from.size(), to);
    return s;
}

}  // namespace

TEST(Ini, SectionsCommentsAndErrors) {
    const auto doc = io::IniDoc::parse("# c\n[a]\nx = 1\n; c2\ny=two words \n[b]\nz = (1, 2)\n");
    EXPECT_EQ(doc.sections.at("a").at("x"), "1");
    EXPECT_EQ(doc.sections.at("a").at("y"), "two words");
    EXPECT_EQ(doc.sections.at("b").at("z"), "(1, 2)");
    EXPECT_THROW(io::IniDoc::parse("[a]\nx = 1\nx = 2\n"), Error);
    EXPECT_THROW(io::IniDoc::parse("x = 1\n"), Error);
    EXPECT_THROW(io::IniDoc::parse("[a]\nnot a pair\n"), Error);
    EXPECT_THROW(io::IniDoc::parse("[a]\n[a]\n"), Error);
}

TEST(Ini, ValueParsers) {
    EXPECT_EQ(io::parse_complex("(1.5, -2)", "t"), cplx(1.5, -2.0));
    EXPECT_EQ(io::parse_complex(" 3 ", "t"), cplx(3.0, 0.0));
    EXPECT_EQ(io::parse_complex_list("(1, 2), 3, (0, -1)", "t").size(), 3u);
    EXPECT_EQ(io::parse_double("-inf", "t"), kNegInf);
    EXPECT_THROW(io::parse_double("1.5x", "t"), Error);
    EXPECT_THROW(io::parse_int("2.5", "t"), Error);
    EXPECT_THROW(io::parse_complex("(1, 2", "t"), Error);
    EXPECT_EQ(io::split_top("a(1;2); b ;; c", ';'), (std::vector<std::string>{"a(1;2)", "b", "c"}));
}

TEST(Ini, Fnv1aVectors) {
    EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Config, ParsesLatticeAndBudget) {
    const auto c = parse_text(kPshConfig);
    EXPECT_EQ(*c.mode, Mode::Envelope);
    EXPECT_EQ(c.seed, 4u);
    EXPECT_EQ(c.budget.seed, 4u);
    EXPECT_EQ(c.budget.degree_schedule, (std::vector<int>{2, 4}));
    EXPECT_EQ(c.quadrature.M, 128u);
    ASSERT_EQ(c.points.size(), 6u);
    EXPECT_EQ(c.points[0], (ComplexPoint{cplx{-0.5, 0.0}, cplx{0.2, -0.3}}));
    EXPECT_EQ(c.points[1], (ComplexPoint{cplx{-0.5, 0.0}, cplx{0.2, 0.3}}));
    EXPECT_EQ(c.points[5], (ComplexPoint{cplx{0.5, 0.0}, cplx{0.2, 0.3}}));
}

TEST(Config, HashIgnoresLayout) {
    const std::string a = "[run]\nmode = envelope\nseed = 1\n[space]\nkind = euclidean\ndim = 1\n[field]\nexpr = re(z1)\n[grid]\npoints = 0\n";
    const std::string b = "[grid]\npoints=0\n\n[field]\n  expr =   re(z1)\n[space]\ndim=1\nkind=euclidean\n[run]\nseed=1\nmode=envelope\n";
    EXPECT_EQ(parse_text(a).hash, parse_text(b).hash);
    EXPECT_NE(parse_text(a).hash, parse_text(replace(a, "seed = 1", "seed = 2")).hash);
}

TEST(Config, MissingSeedNamesTheKey) { expect_config_error(replace(kPshConfig, "seed = 4", ""), "'seed'"); }

TEST(Config, UnknownKeysAreErrors) {
    expect_config_error(replace(kPshConfig, "restarts = 2", "restarts = 2\nrestrats = 3"), "budget.restrats");
    expect_config_error(std::string(kPshConfig) + "\n[extra]\nfoo = 1\n", "extra.foo");
}

TEST(Config, BadValuesAreErrors) {
    expect_config_error(replace(kPshConfig, "M = 128", "M = 100"), "power of two");
    expect_config_error(replace(kPshConfig, "degree_schedule = 2, 4", "degree_schedule = 4, 2"), "increasing");
    expect_config_error(replace(kPshConfig, "kind = euclidean", "kind = torus"), "space.kind");
    expect_config_error(replace(kPshConfig, "mode = envelope", "mode = dance"), "dance");
    EXPECT_THROW(parse_text(replace(kPshConfig, "abs2(z1) + abs2(z2)", "abs2(z3)")), Error);
}

TEST(Config, ModeMustMatchSubcommand) {
    EXPECT_THROW(parse_text(kPshConfig, Mode::Hull), Error);
    EXPECT_NO_THROW(parse_text(kPshConfig, Mode::Envelope));
}

TEST(Config, CurveSpaceAndBranchLattice) {
    const std::string text = R"(
[run]
mode = envelope
seed = 0
[space]
kind = curve
branches = z, w
branch.z = 0, 1 | 0
branch.w = 0 | 0, 1
[field]
expr = re(z1)
[grid]
kind = branch_lattice
branch = z, w
lower = (-1, 0)
upper = (1, 0)
counts = 3, 1
)";
    const auto c = parse_text(text);
    EXPECT_EQ(c.space->branches().size(), 2u);
    // (-1,0), (0,0), (1,0) on z and (0,-1), (0,1) on w; the origin is listed once.
    EXPECT_EQ(c.points.size(), 5u);
    const auto p = parse_text(replace(replace(text, "branches = z, w\n", "preset = zw0\n"), "branch.z = 0, 1 | 0\nbranch.w = 0 | 0, 1\n", ""));
    EXPECT_EQ(p.space->branches(), c.space->branches());
}

TEST(Json, DiscRoundTrip) {
    Eigen::MatrixXcd c(3, 2);
    c << cplx{0.1, 0.2}, cplx{-1.0 / 3.0, 0.0}, cplx{1e-300, 5.0}, cplx{0.7, -0.7}, cplx{0.0, 0.0}, cplx{2.5, 1.0 / 7.0};
    const AnalyticDisc f(c);
    const auto j = io::to_json(f);
    EXPECT_EQ(j["degree"], 2);
    EXPECT_EQ(j["ambient_dim"], 2);
    EXPECT_FALSE(j.contains("branch"));
    const auto g = io::disc_from(io::json::parse(j.dump()));
    EXPECT_TRUE(g == f);

    Eigen::MatrixXcd t(2, 1);
    t << cplx{0.3, 0.0}, cplx{0.0, 0.1};
    const AnalyticDisc h(t, std::make_shared<const BranchMap>(BranchMap("c", {{0.0, 0.0, 1.0}, {0.0, 0.0, 0.0, 1.0}})));
    const auto hj = io::to_json(h);
    EXPECT_EQ(hj["ambient_dim"], 2);
    const auto h2 = io::disc_from(io::json::parse(hj.dump()));
    EXPECT_EQ(h2.coeffs(), h.coeffs());
    EXPECT_EQ(*h2.branch(), *h.branch());
    EXPECT_THROW(io::disc_from(io::json::parse(R"({"degree": 3, "ambient_dim": 1, "coeffs": [[0, 0]]})")), Error);
}

TEST(Json, NonFiniteNumbersAsStrings) {
    EXPECT_EQ(io::num(kNegInf), "-inf");
    EXPECT_EQ(io::num_from(io::json("-inf")), kNegInf);
    EXPECT_EQ(io::num_from(io::num(0.1)), 0.1);
    EXPECT_THROW(io::num_from(io::json("minus infinity")), Error);
}

TEST(Json, EstimateRoundTripIsExact) {
    auto c = parse_text(kObstacleConfig);
    const auto dir = temp_dir("estimate_rt");
    run(c, RunOptions{dir, 1, true});
    const auto text = slurp(dir + "/results.json");
    const auto j = io::json::parse(text);
    const auto est = io::estimate_from(j["points"]);
    ASSERT_EQ(est.size(), 3u);
    auto again = j;
    again["points"] = io::to_json(est);
    EXPECT_EQ(io::dump(again), text);
    // A -inf round value survives too.
    auto p = est.points[0];
    p.diagnostics.rounds.push_back(kNegInf);
    EXPECT_EQ(io::point_result_from(io::to_json(p)).diagnostics.rounds.back(), kNegInf);
}

TEST(Csv, ValueColumnMatchesPshField) {
    const auto c = parse_text(kPshConfig);
    const auto dir = temp_dir("csv_psh");
    EXPECT_EQ(run(c, RunOptions{dir, 2, true}).exit_code, 0);
    const auto t = io::parse_csv(slurp(dir + "/results.csv"));
    EXPECT_EQ(t.header, (std::vector<std::string>{"re_x1", "im_x1", "re_x2", "im_x2", "value", "witness_degree", "p_rounds"}));
    ASSERT_EQ(t.rows.size(), c.points.size());
    const auto u = ScalarField::parse("abs2(z1) + abs2(z2)", 2);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& r = t.rows[i];
        const ComplexPoint x{cplx{r[0], r[1]}, cplx{r[2], r[3]}};
        EXPECT_EQ(x, c.points[i]);
        EXPECT_NEAR(r[4], u(x), 1e-6);
    }
}

TEST(Csv, SeventeenDigits) {
    EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(io::parse_double(io::format_double(1.0 / 3.0), "t"), 1.0 / 3.0);
}

TEST(Run, ResultsIndependentOfThreadsAndRepeats) {
    const auto c = parse_text(kObstacleConfig);
    const auto a = temp_dir("det_a"), b = temp_dir("det_b"), d = temp_dir("det_c");
    run(c, RunOptions{a, 1, true});
    run(c, RunOptions{b, 4, true});
    run(c, RunOptions{d, 1, true});
    EXPECT_EQ(slurp(a + "/results.json"), slurp(b + "/results.json"));
    EXPECT_EQ(slurp(a + "/results.json"), slurp(d + "/results.json"));
    EXPECT_EQ(slurp(a + "/results.csv"), slurp(b + "/results.csv"));
    // The manifest carries the run-dependent facts.
    const auto m = io::load_json(b + "/manifest.json");
    EXPECT_EQ(m["threads"], 4);
    EXPECT_TRUE(m.contains("wall_time_s"));
    EXPECT_EQ(m["config_hash"], c.hash);
    EXPECT_FALSE(io::load_json(a + "/results.json")["manifest"].contains("wall_time_s"));

    const auto rep = diff_runs(a + "/results.json", b + "/manifest.json");
    EXPECT_TRUE(rep.byte_identical);
    EXPECT_TRUE(rep.empty());
    EXPECT_GT(rep.compared, 3u);
}

TEST(Diff, DifferentSeedsAndSchemas) {
    auto c1 = parse_text(kObstacleConfig);
    auto c2 = parse_text(replace(kObstacleConfig, "seed = 9", "seed = 10"));
    const auto a = temp_dir("diff_a"), b = temp_dir("diff_b"), e = temp_dir("diff_e");
    run(c1, RunOptions{a, 1, true});
    run(c2, RunOptions{b, 1, true});
    const auto rep = diff_runs(a + "/results.json", b + "/results.json", 1.0);
    EXPECT_FALSE(rep.byte_identical);
    EXPECT_TRUE(rep.empty());  // everything within tol 1
    EXPECT_LT(rep.max_abs_diff, 1.0);

    auto c3 = parse_text(replace(kObstacleConfig, "points = 0.5 ; (0, 0.6) ; 0.1", "points = 0.5"));
    run(c3, RunOptions{e, 1, true});
    try {
        diff_runs(a + "/results.json", e + "/results.json");
        FAIL();
    } catch (const Error& err) {
        EXPECT_EQ(err.code(), ErrorCode::SchemaMismatch);
    }
    const auto cx = temp_dir("diff_cx");
    run(counterexample_config(1), RunOptions{cx, 1, true});
    EXPECT_THROW(diff_runs(a + "/results.json", cx + "/results.json"), Error);
}

TEST(Run, CounterexampleReportsViolation) {
    const auto dir = temp_dir("cex");
    const auto out = run(counterexample_config(7), RunOptions{dir, 2, true});
    EXPECT_EQ(out.exit_code, 0);
    const auto j = io::load_json(dir + "/results.json");
    EXPECT_FALSE(j["submean"]["violations"].empty());
    EXPECT_EQ(io::num_from(j["upper_regularization"]["value"]), 1.0);
}

TEST(Run, HullCertificateVerifies) {
    const std::string hull = R"(
[run]
mode = hull
seed = 1
[hull]
dim = 2
polydisc = (0, 0), (0, 0) ; 1, 0 ; circle, disc
x = 0, 0
U_radius = 0.1
eps = 0.3
hull_compact_assumed = true
rho = re(z1) ; abs2(z1) + abs2(z2) ; log(abs(z1 - 0.3))
[budget]
degree_schedule = 2, 4
restarts = 8
descent_iters = 30
step_init = 1
[quadrature]
M = 256
)";
    const auto dir = temp_dir("hull");
    const auto out = run(parse_text(hull), RunOptions{dir, 1, true});
    EXPECT_EQ(out.exit_code, 0);
    const auto j = io::load_json(dir + "/results.json");
    ASSERT_TRUE(j["hull"]["found"].get<bool>());
    EXPECT_TRUE(j["hull"]["report"]["passed"].get<bool>());
    EXPECT_TRUE(fs::exists(dir + "/certificate.json"));
    const auto cert = io::certificate_from(io::load_json(dir + "/certificate.json")["certificate"]);
    EXPECT_EQ(cert.exceptional_measure, 0.0);

    const std::string verify = "[run]\nmode = verify\nseed = 1\n[verify]\ncertificate = " + dir + "/certificate.json\n";
    const auto vdir = temp_dir("verify");
    EXPECT_EQ(run(parse_text(verify), RunOptions{vdir, 1, true}).exit_code, 0);
    EXPECT_TRUE(io::load_json(vdir + "/results.json")["verify"]["stored_report_matches"].get<bool>());

    // A tampered disc no longer reproduces the stored report.
    auto doc = io::load_json(dir + "/certificate.json");
    doc["certificate"]["disc"]["coeffs"][2][0] = 0.5;
    io::write_text(dir + "/tampered.json", io::dump(doc));
    const std::string v2 = "[run]\nmode = verify\nseed = 1\n[verify]\ncertificate = " + dir + "/tampered.json\n";
    EXPECT_EQ(run(parse_text(v2), RunOptions{vdir, 1, true}).exit_code, 3);
}

TEST(Run, OracleComparesStoredEstimate) {
    const auto edir = temp_dir("oracle_env");
    run(parse_text(kObstacleConfig), RunOptions{edir, 1, true});
    const std::string text = "[run]\nmode = oracle\nseed = 0\n[space]\nkind = euclidean\ndim = 1\n[field]\nexpr = "
                             "-indicator(ball(0; 0.25))\n[oracle]\nn = 65\ncompare = " +
                             edir + "/results.json\n";
    const auto dir = temp_dir("oracle");
    EXPECT_EQ(run(parse_text(text), RunOptions{dir, 1, true}).exit_code, 0);
    const auto j = io::load_json(dir + "/results.json");
    const auto& table = j["oracle"]["table"];
    ASSERT_EQ(table.size(), 3u);
    // The inner point sits in the obstacle, where both sides are -1.
    EXPECT_NEAR(io::num_from(table[2]["oracle"]), -1.0, 1e-9);
    EXPECT_NEAR(io::num_from(table[2]["envelope"]), -1.0, 1e-12);
    // Search values are upper bounds, so the envelope never sits far below the oracle.
    for (const auto& row : table) EXPECT_GE(io::num_from(row["diff"]), -0.05);
    const auto grid = io::parse_csv(slurp(dir + "/oracle.csv"));
    EXPECT_EQ(grid.header, (std::vector<std::string>{"re", "im", "u", "v"}));
    for (const auto& r : grid.rows) EXPECT_LE(r[3], r[2] + 1e-12);
}
