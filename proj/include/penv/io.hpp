#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "penv/envelope.hpp"
#include "penv/hull.hpp"

namespace penv::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- text helpers

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// Splits on `sep` at parenthesis depth 0; pieces are trimmed, empty ones dropped.
inline std::vector<std::string> split_top(std::string_view s, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        const char c = i < s.size() ? s[i] : sep;
        if (c == '(' || c == '[') ++depth;
        else if (c == ')' || c == ']') --depth;
        if (c == sep && depth == 0) {
            auto piece = trim(s.substr(start, i - start));
            if (!piece.empty()) out.push_back(std::move(piece));
            start = i + 1;
        }
    }
    require(depth == 0, ErrorCode::ConfigError, "unbalanced parentheses in '" + std::string(s) + "'");
    return out;
}

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return kNegInf;
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == t.size() && !t.empty() && !std::isnan(v), ErrorCode::ConfigError,
            what + ": '" + t + "' is not a number");
    return v;
}

inline long long parse_int(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == t.size() && !t.empty(), ErrorCode::ConfigError, what + ": '" + t + "' is not an integer");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    throw Error(ErrorCode::ConfigError, what + ": '" + t + "' is not a boolean");
}

/// `1.5`, `(1.5, -2)`; a bare number is real.
inline cplx parse_complex(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (!t.empty() && t.front() == '(') {
        require(t.back() == ')', ErrorCode::ConfigError, what + ": unclosed '(' in '" + t + "'");
        const auto parts = split_top(std::string_view(t).substr(1, t.size() - 2), ',');
        require(parts.size() == 2, ErrorCode::ConfigError, what + ": complex literal needs (re, im): '" + t + "'");
        return {parse_double(parts[0], what), parse_double(parts[1], what)};
    }
    return {parse_double(t, what), 0.0};
}

/// Comma-separated list of complex literals.
inline std::vector<cplx> parse_complex_list(const std::string& s, const std::string& what) {
    std::vector<cplx> out;
    for (const auto& p : split_top(s, ',')) out.push_back(parse_complex(p, what));
    return out;
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& p : split_top(s, ',')) out.push_back(parse_double(p, what));
    return out;
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    for (const auto& p : split_top(s, ',')) out.push_back(static_cast<int>(parse_int(p, what)));
    return out;
}

// ---------------------------------------------------------------- INI

/// `[section]` headers, `key = value` lines, `#` or `;` comments on their own
/// line. Keys and sections are case-sensitive; duplicates are errors.
struct IniDoc {
    std::map<std::string, std::map<std::string, std::string>> sections;

    static IniDoc parse(const std::string& text) {
        IniDoc doc;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            const std::string where = "line " + std::to_string(lineno);
            if (t.front() == '[') {
                require(t.back() == ']', ErrorCode::ConfigError, where + ": bad section header");
                section = trim(std::string_view(t).substr(1, t.size() - 2));
                require(!section.empty(), ErrorCode::ConfigError, where + ": empty section name");
                require(!doc.sections.count(section), ErrorCode::ConfigError, where + ": duplicate section [" + section + "]");
                doc.sections[section];
                continue;
            }
            const auto eq = t.find('=');
            require(eq != std::string::npos, ErrorCode::ConfigError, where + ": expected key = value");
            require(!section.empty(), ErrorCode::ConfigError, where + ": key outside any section");
            const std::string key = trim(std::string_view(t).substr(0, eq));
            const std::string val = trim(std::string_view(t).substr(eq + 1));
            require(!key.empty(), ErrorCode::ConfigError, where + ": empty key");
            auto& sec = doc.sections[section];
            require(!sec.count(key), ErrorCode::ConfigError, where + ": duplicate key " + section + "." + key);
            sec[key] = val;
        }
        return doc;
    }

    static IniDoc load(const std::string& path) {
        std::ifstream f(path);
        require(static_cast<bool>(f), ErrorCode::ConfigError, "cannot read config '" + path + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    /// Sections and keys sorted, values trimmed: stable under reformatting.
    std::string canonical() const {
        std::string out;
        for (const auto& [s, kv] : sections) {
            out += "[" + s + "]\n";
            for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
        }
        return out;
    }
};

/// Reads keys off an IniDoc and remembers which were used, so leftovers can be
/// reported as unknown.
class ConfigReader {
public:
    explicit ConfigReader(const IniDoc& doc) : doc_(doc) {}

    bool has_section(const std::string& s) const { return doc_.sections.count(s) != 0; }
    bool has(const std::string& s, const std::string& k) const {
        auto it = doc_.sections.find(s);
        return it != doc_.sections.end() && it->second.count(k);
    }

    std::optional<std::string> get(const std::string& s, const std::string& k) {
        used_.insert(s + "." + k);
        auto it = doc_.sections.find(s);
        if (it == doc_.sections.end()) return std::nullopt;
        auto jt = it->second.find(k);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
    }

    std::string need(const std::string& s, const std::string& k) {
        auto v = get(s, k);
        require(v.has_value(), ErrorCode::ConfigError, "missing required key '" + k + "' in section [" + s + "]");
        return *v;
    }

    template <class T, class Parse>
    T get_or(const std::string& s, const std::string& k, T fallback, Parse parse) {
        auto v = get(s, k);
        return v ? parse(*v, s + "." + k) : fallback;
    }

    double get_double(const std::string& s, const std::string& k, double fb) { return get_or(s, k, fb, parse_double); }
    long long get_int(const std::string& s, const std::string& k, long long fb) { return get_or(s, k, fb, parse_int); }
    bool get_bool(const std::string& s, const std::string& k, bool fb) { return get_or(s, k, fb, parse_bool); }

    /// Throws ConfigError naming every key (or section) that was never read.
    void finish() const {
        std::string unknown;
        for (const auto& [s, kv] : doc_.sections)
            for (const auto& [k, v] : kv)
                if (!used_.count(s + "." + k)) unknown += (unknown.empty() ? "" : ", ") + s + "." + k;
        require(unknown.empty(), ErrorCode::ConfigError, "unknown config keys: " + unknown);
    }

private:
    const IniDoc& doc_;
    std::set<std::string> used_;
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- JSON

/// Finite doubles as numbers; infinities and NaN as the strings "inf", "-inf", "nan".
inline json num(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

inline double num_from(const json& j) {
    if (j.is_number()) return j.get<double>();
    require(j.is_string(), ErrorCode::SchemaMismatch, "expected a number");
    const auto s = j.get<std::string>();
    if (s == "-inf") return kNegInf;
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorCode::SchemaMismatch, "bad numeric string '" + s + "'");
}

inline json to_json(cplx z) { return json::array({num(z.real()), num(z.imag())}); }

inline cplx cplx_from(const json& j) {
    require(j.is_array() && j.size() == 2, ErrorCode::SchemaMismatch, "complex numbers are [re, im]");
    return {num_from(j[0]), num_from(j[1])};
}

inline json to_json(const ComplexPoint& p) {
    json a = json::array();
    for (const auto& z : p.coords()) a.push_back(to_json(z));
    return a;
}

inline ComplexPoint point_from(const json& j) {
    require(j.is_array(), ErrorCode::SchemaMismatch, "points are arrays of [re, im]");
    std::vector<cplx> c;
    for (const auto& e : j) c.push_back(cplx_from(e));
    return ComplexPoint(std::move(c));
}

inline const json& field(const json& j, const char* key) {
    require(j.is_object() && j.contains(key), ErrorCode::SchemaMismatch, std::string("missing field '") + key + "'");
    return j.at(key);
}

inline json to_json(const BranchMap& b) {
    json comps = json::array();
    for (const auto& c : b.components) {
        json row = json::array();
        for (const auto& a : c) row.push_back(to_json(a));
        comps.push_back(std::move(row));
    }
    return json{{"label", b.label}, {"components", std::move(comps)}};
}

inline BranchMap branch_from(const json& j) {
    std::vector<poly::Coeffs> comps;
    for (const auto& row : field(j, "components")) {
        poly::Coeffs c;
        for (const auto& a : row) c.push_back(cplx_from(a));
        comps.push_back(std::move(c));
    }
    return BranchMap(field(j, "label").get<std::string>(), std::move(comps));
}

/// {degree, ambient_dim, branch?, coeffs}; coeffs is the (degree + 1) x param_dim
/// matrix flattened row-major.
inline json to_json(const AnalyticDisc& f) {
    json j;
    j["degree"] = f.degree();
    j["ambient_dim"] = f.ambient_dim();
    if (f.branch()) j["branch"] = to_json(*f.branch());
    json c = json::array();
    for (Eigen::Index r = 0; r < f.coeffs().rows(); ++r)
        for (Eigen::Index k = 0; k < f.coeffs().cols(); ++k) c.push_back(to_json(f.coeffs()(r, k)));
    j["coeffs"] = std::move(c);
    return j;
}

inline AnalyticDisc disc_from(const json& j) {
    const int degree = field(j, "degree").get<int>();
    const auto amb = field(j, "ambient_dim").get<std::size_t>();
    std::shared_ptr<const BranchMap> br;
    if (j.contains("branch")) br = std::make_shared<const BranchMap>(branch_from(j.at("branch")));
    const std::size_t P = br ? 1 : amb;
    const auto& c = field(j, "coeffs");
    require(degree >= 0 && c.size() == static_cast<std::size_t>(degree + 1) * P, ErrorCode::SchemaMismatch,
            "disc coeffs size does not match degree and dimension");
    Eigen::MatrixXcd m(degree + 1, static_cast<Eigen::Index>(P));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r <= degree; ++r)
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(P); ++k) m(r, k) = cplx_from(c[i++]);
    AnalyticDisc f = br ? AnalyticDisc(std::move(m), br) : AnalyticDisc(std::move(m));
    require(f.ambient_dim() == amb, ErrorCode::SchemaMismatch, "disc ambient_dim mismatch");
    return f;
}

inline json to_json(const RhRoundDiagnostics& d) {
    json j{{"candidate", num(d.candidate)},       {"children_integral", num(d.children_integral)},
           {"double_integral", num(d.double_integral)}, {"eps_report", num(d.eps_report)},
           {"fit_residual", num(d.fit_residual)}, {"k", d.k},
           {"accepted", d.accepted}};
    if (!d.skipped.empty()) j["skipped"] = d.skipped;
    return j;
}

inline RhRoundDiagnostics rh_from(const json& j) {
    RhRoundDiagnostics d;
    d.candidate = num_from(field(j, "candidate"));
    d.children_integral = num_from(field(j, "children_integral"));
    d.double_integral = num_from(field(j, "double_integral"));
    d.eps_report = num_from(field(j, "eps_report"));
    d.fit_residual = num_from(field(j, "fit_residual"));
    d.k = field(j, "k").get<int>();
    d.accepted = field(j, "accepted").get<bool>();
    if (j.contains("skipped")) d.skipped = j.at("skipped").get<std::string>();
    return d;
}

inline json to_json(const PointResult& p) {
    json j;
    j["x"] = to_json(p.x);
    if (p.error) {
        j["error"] = *p.error;
        return j;
    }
    j["value"] = num(p.value);
    j["witness"] = to_json(p.witness);
    json rounds = json::array();
    for (double r : p.diagnostics.rounds) rounds.push_back(num(r));
    j["rounds"] = std::move(rounds);
    json rh = json::array();
    for (const auto& d : p.diagnostics.rh) rh.push_back(to_json(d));
    j["rh"] = std::move(rh);
    json bv = json::array();
    for (double v : p.diagnostics.branch_values) bv.push_back(num(v));
    j["branch_values"] = std::move(bv);
    j["evaluations"] = p.diagnostics.evaluations;
    j["warm_started"] = p.warm_started;
    return j;
}

inline PointResult point_result_from(const json& j) {
    PointResult p;
    p.x = point_from(field(j, "x"));
    if (j.contains("error")) {
        p.error = j.at("error").get<std::string>();
        return p;
    }
    p.value = num_from(field(j, "value"));
    p.witness = disc_from(field(j, "witness"));
    for (const auto& r : field(j, "rounds")) p.diagnostics.rounds.push_back(num_from(r));
    for (const auto& d : field(j, "rh")) p.diagnostics.rh.push_back(rh_from(d));
    for (const auto& v : field(j, "branch_values")) p.diagnostics.branch_values.push_back(num_from(v));
    p.diagnostics.evaluations = field(j, "evaluations").get<std::uint64_t>();
    p.warm_started = field(j, "warm_started").get<bool>();
    return p;
}

inline json to_json(const EnvelopeEstimate& e) {
    json a = json::array();
    for (const auto& p : e.points) a.push_back(to_json(p));
    return a;
}

inline EnvelopeEstimate estimate_from(const json& j) {
    require(j.is_array(), ErrorCode::SchemaMismatch, "points must be an array");
    EnvelopeEstimate e;
    for (const auto& p : j) e.points.push_back(point_result_from(p));
    return e;
}

inline json to_json(const CertificateReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks)
        checks.push_back(json{{"rho", c.rho},
                              {"rho_x", num(c.rho_x)},
                              {"integral_exceptional", num(c.integral_exceptional)},
                              {"integral_good", num(c.integral_good)},
                              {"sup_V", num(c.sup_V)},
                              {"sup_U", num(c.sup_U)},
                              {"sup_K", num(c.sup_K)},
                              {"bound", num(c.bound)},
                              {"passed", c.passed},
                              {"failure", c.failure}});
    return json{{"center_ok", r.center_ok},
                {"window_ok", r.window_ok},
                {"exceptional_measure", num(r.exceptional_measure)},
                {"passed", r.passed()},
                {"checks", std::move(checks)}};
}

inline CertificateReport report_from(const json& j) {
    CertificateReport r;
    r.center_ok = field(j, "center_ok").get<bool>();
    r.window_ok = field(j, "window_ok").get<bool>();
    r.exceptional_measure = num_from(field(j, "exceptional_measure"));
    for (const auto& c : field(j, "checks")) {
        RhoCheck k;
        k.rho = field(c, "rho").get<std::string>();
        k.rho_x = num_from(field(c, "rho_x"));
        k.integral_exceptional = num_from(field(c, "integral_exceptional"));
        k.integral_good = num_from(field(c, "integral_good"));
        k.sup_V = num_from(field(c, "sup_V"));
        k.sup_U = num_from(field(c, "sup_U"));
        k.sup_K = num_from(field(c, "sup_K"));
        k.bound = num_from(field(c, "bound"));
        k.passed = field(c, "passed").get<bool>();
        k.failure = field(c, "failure").get<std::string>();
        r.checks.push_back(std::move(k));
    }
    return r;
}

inline json to_json(const HullCertificate& c) {
    return json{{"x", to_json(c.x)},
                {"U_radius", num(c.U_radius)},
                {"exceptional_measure", num(c.exceptional_measure)},
                {"M", c.M},
                {"disc", to_json(c.disc)}};
}

inline HullCertificate certificate_from(const json& j) {
    HullCertificate c{point_from(field(j, "x")), disc_from(field(j, "disc")), num_from(field(j, "U_radius")),
                      num_from(field(j, "exceptional_measure")), field(j, "M").get<std::size_t>()};
    return c;
}

inline json to_json(const CompactSet& K) {
    json pieces = json::array();
    for (const auto& p : K.pieces()) {
        json j;
        switch (p.kind) {
            case CompactSet::Piece::Kind::Ball:
                j = json{{"kind", "ball"}, {"center", to_json(ComplexPoint(p.center))}, {"radius", num(p.radius[0])}};
                break;
            case CompactSet::Piece::Kind::Polydisc: {
                json radii = json::array(), factors = json::array();
                for (double r : p.radius) radii.push_back(num(r));
                for (auto f : p.factors) factors.push_back(f == CompactSet::Factor::Circle ? "circle" : "disc");
                j = json{{"kind", "polydisc"},
                         {"center", to_json(ComplexPoint(p.center))},
                         {"radii", std::move(radii)},
                         {"factors", std::move(factors)}};
                break;
            }
            case CompactSet::Piece::Kind::PointCloud: {
                json pts = json::array();
                for (const auto& q : p.points) pts.push_back(to_json(q));
                j = json{{"kind", "points"}, {"points", std::move(pts)}, {"blowup", num(p.blowup)}};
                break;
            }
        }
        pieces.push_back(std::move(j));
    }
    return json{{"dim", K.dim()}, {"pieces", std::move(pieces)}};
}

inline CompactSet compact_set_from(const json& j) {
    CompactSet K(field(j, "dim").get<std::size_t>());
    for (const auto& p : field(j, "pieces")) {
        const auto kind = field(p, "kind").get<std::string>();
        if (kind == "ball") {
            K.add_ball(point_from(field(p, "center")).coords(), num_from(field(p, "radius")));
        } else if (kind == "polydisc") {
            std::vector<double> radii;
            std::vector<CompactSet::Factor> factors;
            for (const auto& r : field(p, "radii")) radii.push_back(num_from(r));
            for (const auto& f : field(p, "factors"))
                factors.push_back(f.get<std::string>() == "circle" ? CompactSet::Factor::Circle : CompactSet::Factor::Disc);
            K.add_polydisc(point_from(field(p, "center")).coords(), std::move(radii), std::move(factors));
        } else if (kind == "points") {
            std::vector<ComplexPoint> pts;
            for (const auto& q : field(p, "points")) pts.push_back(point_from(q));
            K.add_points(std::move(pts), num_from(field(p, "blowup")));
        } else {
            throw Error(ErrorCode::SchemaMismatch, "unknown compact piece kind '" + kind + "'");
        }
    }
    return K;
}

inline json to_json(const DomainConstraint& d) {
    json radius = json::array();
    for (double r : d.radius) radius.push_back(num(r));
    return json{{"shape", d.shape == DomainConstraint::Shape::Ball ? "ball" : "polydisc"},
                {"center", to_json(ComplexPoint(d.center))},
                {"radius", std::move(radius)}};
}

inline DomainConstraint domain_from(const json& j) {
    const auto shape = field(j, "shape").get<std::string>();
    const auto c = point_from(field(j, "center")).coords();
    std::vector<double> r;
    for (const auto& x : field(j, "radius")) r.push_back(num_from(x));
    if (shape == "ball") {
        require(r.size() == 1, ErrorCode::SchemaMismatch, "ball needs one radius");
        return DomainConstraint::ball(c, r[0]);
    }
    require(shape == "polydisc", ErrorCode::SchemaMismatch, "unknown domain shape '" + shape + "'");
    return DomainConstraint::polydisc(c, r);
}

/// Serialized text with two-space indentation and a trailing newline.
inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json load_json(const std::string& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), ErrorCode::SchemaMismatch, "cannot read '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaMismatch, "'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::ConfigError, "cannot write '" + path + "'");
    f << text;
    require(static_cast<bool>(f), ErrorCode::ConfigError, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------- CSV

/// Header: re_x1,im_x1,...,value,witness_degree,p_rounds. Failed points carry
/// value nan and witness_degree -1.
inline std::string estimate_csv(const EnvelopeEstimate& e) {
    std::string out;
    const std::size_t N = e.points.empty() ? 0 : e.points.front().x.dim();
    for (std::size_t i = 1; i <= N; ++i) out += "re_x" + std::to_string(i) + ",im_x" + std::to_string(i) + ",";
    out += "value,witness_degree,p_rounds\n";
    for (const auto& p : e.points) {
        for (const auto& z : p.x.coords()) out += format_double(z.real()) + "," + format_double(z.imag()) + ",";
        if (p.error) {
            out += "nan,-1,0\n";
            continue;
        }
        out += format_double(p.value) + "," + std::to_string(p.witness.degree()) + "," +
               std::to_string(p.diagnostics.rounds_to_converge()) + "\n";
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        require(cells.size() == t.header.size(), ErrorCode::SchemaMismatch, "ragged CSV row");
        std::vector<double> row;
        for (const auto& c : cells) {
            if (c == "nan") row.push_back(std::numeric_limits<double>::quiet_NaN());
            else row.push_back(parse_double(c, "csv"));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace penv::io
