#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penv/core.hpp"
#include "penv/space.hpp"

namespace penv {

/// Real-valued (possibly -inf) function on C^N, compiled from a small
/// expression language:
///
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := '-' unary | power
///   power  := primary ('^' integer)?
///   primary:= number ['i'] | 'i' | 'pi' | 'inf' | zK | func '(' args ')' | '(' expr ')'
///   func   := re im abs abs2 conj log exp sqrt min max lt le gt ge
///             indicator(S) cindicator(S)
///   S      := ball(c1,...,cN; r) | box(c1,...,cN; r1,...,rN)
///
/// Values are typed real or complex at parse time; the top level must be real.
/// indicator() uses the open set (strict inequalities), cindicator() the closed one.
/// log(0) = -inf; division by zero, log of a negative number, and any
/// operation that would produce NaN raise DomainError during evaluation.
class ScalarField {
public:
    using External = std::function<double(const cplx*)>;

    ScalarField() = default;

    static ScalarField parse(std::string_view text, std::size_t ambient_dim);

    /// Field backed by a native function of the ambient coordinates.
    static ScalarField custom(std::string label, std::size_t ambient_dim, External fn) {
        ScalarField f;
        f.text_ = std::move(label);
        f.dim_ = ambient_dim;
        f.externals_.push_back(std::move(fn));
        f.code_.push_back({Op::External, 0, {}});
        f.max_stack_ = 1;
        return f;
    }

    double eval(std::span<const cplx> p) const {
        require(p.size() == input_dim(), ErrorCode::InvalidArgument, "field evaluated at a point of wrong dimension");
        return eval_raw(p.data());
    }

    double operator()(const ComplexPoint& p) const { return eval(p.coords()); }

    /// Evaluation without the dimension check; `p` has input_dim() entries.
    double eval_raw(const cplx* p) const {
        if (premap_) {
            cplx buf[16];
            std::vector<cplx> heap;
            cplx* amb = buf;
            if (dim_ > 16) {
                heap.resize(dim_);
                amb = heap.data();
            }
            premap_->eval_into(p[0], amb);
            return run(amb);
        }
        return run(p);
    }

    /// max(u, level): the truncation used for decreasing approximations.
    ScalarField truncated_below(double level) const {
        ScalarField f = *this;
        f.code_.push_back({Op::Const, 0, cplx{level, 0.0}});
        f.code_.push_back({Op::MaxR, 0, {}});
        f.max_stack_ = max_stack_ + 1;
        f.text_ = "max(" + text_ + ", " + format_real(level) + ")";
        return f;
    }

    /// u o pi for a branch map pi: a field on the normalization parameter.
    ScalarField pullback(const BranchMap& branch) const {
        require(!premap_, ErrorCode::InvalidArgument, "field is already a pullback");
        require(branch.ambient_dim() == dim_, ErrorCode::InvalidArgument, "pullback: branch dimension mismatch");
        ScalarField f = *this;
        f.premap_ = std::make_shared<BranchMap>(branch);
        f.text_ = "pullback(" + branch.label + ", " + text_ + ")";
        return f;
    }

    const std::string& text() const { return text_; }
    /// Dimension of the ambient space the expression refers to.
    std::size_t ambient_dim() const { return dim_; }
    /// Dimension of the points eval() accepts (1 for a pullback).
    std::size_t input_dim() const { return premap_ ? 1 : dim_; }

    static std::string format_real(double v) {
        if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

private:
    enum class Op {
        Const, Coord, External,
        NegR, NegC, AddR, AddC, SubR, SubC, MulR, MulC, DivR, DivC,
        Re, Im, Abs, Abs2, Conj, LogR, ExpR, ExpC, SqrtR, PowR, PowC,
        MinR, MaxR, Lt, Le, Gt, Ge,
        IndicatorOpen, IndicatorClosed,
    };

    struct Instr {
        Op op;
        int arg;
        cplx value;
    };

    struct Region {
        bool ball = true;
        std::vector<cplx> center;
        std::vector<double> radius;
    };

    class Parser;

    static double checked(double v) {
        if (std::isnan(v)) throw Error(ErrorCode::DomainError, "undefined operation (NaN) in field evaluation");
        return v;
    }

    static cplx checked(cplx v) {
        if (std::isnan(v.real()) || std::isnan(v.imag()))
            throw Error(ErrorCode::DomainError, "undefined operation (NaN) in field evaluation");
        return v;
    }

    bool in_region(const Region& r, const cplx* p, bool closed) const {
        if (r.ball) {
            double s = 0.0;
            for (std::size_t i = 0; i < r.center.size(); ++i) s += std::norm(p[i] - r.center[i]);
            const double d = std::sqrt(s);
            return closed ? d <= r.radius[0] : d < r.radius[0];
        }
        for (std::size_t i = 0; i < r.center.size(); ++i) {
            const double d = std::abs(p[i] - r.center[i]);
            if (closed ? !(d <= r.radius[i]) : !(d < r.radius[i])) return false;
        }
        return true;
    }

    double run(const cplx* p) const {
        cplx small[32];
        std::vector<cplx> heap;
        cplx* st = small;
        if (max_stack_ > 32) {
            heap.resize(max_stack_);
            st = heap.data();
        }
        int top = -1;
        for (const Instr& in : code_) {
            switch (in.op) {
                case Op::Const: st[++top] = in.value; break;
                case Op::Coord: st[++top] = p[in.arg]; break;
                case Op::External: st[++top] = cplx{checked(externals_[static_cast<std::size_t>(in.arg)](p)), 0.0}; break;
                case Op::NegR: st[top] = cplx{-st[top].real(), 0.0}; break;
                case Op::NegC: st[top] = -st[top]; break;
                case Op::AddR: --top; st[top] = cplx{checked(st[top].real() + st[top + 1].real()), 0.0}; break;
                case Op::AddC: --top; st[top] = checked(st[top] + st[top + 1]); break;
                case Op::SubR: --top; st[top] = cplx{checked(st[top].real() - st[top + 1].real()), 0.0}; break;
                case Op::SubC: --top; st[top] = checked(st[top] - st[top + 1]); break;
                case Op::MulR: --top; st[top] = cplx{checked(st[top].real() * st[top + 1].real()), 0.0}; break;
                case Op::MulC: --top; st[top] = checked(st[top] * st[top + 1]); break;
                case Op::DivR:
                    --top;
                    if (st[top + 1].real() == 0.0) throw Error(ErrorCode::DomainError, "division by zero");
                    st[top] = cplx{checked(st[top].real() / st[top + 1].real()), 0.0};
                    break;
                case Op::DivC:
                    --top;
                    if (st[top + 1] == cplx{0.0, 0.0}) throw Error(ErrorCode::DomainError, "division by zero");
                    st[top] = checked(st[top] / st[top + 1]);
                    break;
                case Op::Re: st[top] = cplx{st[top].real(), 0.0}; break;
                case Op::Im: st[top] = cplx{st[top].imag(), 0.0}; break;
                case Op::Abs: st[top] = cplx{std::abs(st[top]), 0.0}; break;
                case Op::Abs2: st[top] = cplx{std::norm(st[top]), 0.0}; break;
                case Op::Conj: st[top] = std::conj(st[top]); break;
                case Op::LogR: {
                    const double x = st[top].real();
                    if (x < 0.0) throw Error(ErrorCode::DomainError, "log of a negative number");
                    st[top] = cplx{x == 0.0 ? kNegInf : std::log(x), 0.0};
                    break;
                }
                case Op::ExpR: st[top] = cplx{std::exp(st[top].real()), 0.0}; break;
                case Op::ExpC: st[top] = checked(std::exp(st[top])); break;
                case Op::SqrtR: {
                    const double x = st[top].real();
                    if (x < 0.0) throw Error(ErrorCode::DomainError, "sqrt of a negative number");
                    st[top] = cplx{std::sqrt(x), 0.0};
                    break;
                }
                case Op::PowR: {
                    double acc = 1.0;
                    for (int k = 0; k < in.arg; ++k) acc *= st[top].real();
                    st[top] = cplx{checked(acc), 0.0};
                    break;
                }
                case Op::PowC: {
                    cplx acc{1.0, 0.0};
                    for (int k = 0; k < in.arg; ++k) acc *= st[top];
                    st[top] = checked(acc);
                    break;
                }
                case Op::MinR: --top; st[top] = cplx{std::min(st[top].real(), st[top + 1].real()), 0.0}; break;
                case Op::MaxR: --top; st[top] = cplx{std::max(st[top].real(), st[top + 1].real()), 0.0}; break;
                case Op::Lt: --top; st[top] = cplx{st[top].real() < st[top + 1].real() ? 1.0 : 0.0, 0.0}; break;
                case Op::Le: --top; st[top] = cplx{st[top].real() <= st[top + 1].real() ? 1.0 : 0.0, 0.0}; break;
                case Op::Gt: --top; st[top] = cplx{st[top].real() > st[top + 1].real() ? 1.0 : 0.0, 0.0}; break;
                case Op::Ge: --top; st[top] = cplx{st[top].real() >= st[top + 1].real() ? 1.0 : 0.0, 0.0}; break;
                case Op::IndicatorOpen:
                    st[++top] = cplx{in_region(regions_[static_cast<std::size_t>(in.arg)], p, false) ? 1.0 : 0.0, 0.0};
                    break;
                case Op::IndicatorClosed:
                    st[++top] = cplx{in_region(regions_[static_cast<std::size_t>(in.arg)], p, true) ? 1.0 : 0.0, 0.0};
                    break;
            }
        }
        return st[0].real();
    }

    std::string text_;
    std::size_t dim_ = 0;
    std::vector<Instr> code_;
    std::vector<Region> regions_;
    std::vector<External> externals_;
    std::shared_ptr<const BranchMap> premap_;
    std::size_t max_stack_ = 0;
};

class ScalarField::Parser {
public:
    Parser(std::string_view src, std::size_t dim, ScalarField& out) : src_(src), dim_(dim), out_(out) {}

    void parse_top() {
        const bool is_real = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        if (!is_real) fail("field must be real-valued; wrap complex expressions in re(), im(), abs() or abs2()");
    }

private:
    // Each parse routine emits code and returns true when the value is real.
    bool expr() {
        bool r = term();
        for (;;) {
            skip_ws();
            if (peek() == '+' || peek() == '-') {
                const char op = src_[pos_++];
                const bool r2 = term();
                const bool rr = r && r2;
                emit(op == '+' ? (rr ? Op::AddR : Op::AddC) : (rr ? Op::SubR : Op::SubC));
                pop();
                r = rr;
            } else {
                return r;
            }
        }
    }

    bool term() {
        bool r = unary();
        for (;;) {
            skip_ws();
            if (peek() == '*' || peek() == '/') {
                const char op = src_[pos_++];
                const bool r2 = unary();
                const bool rr = r && r2;
                emit(op == '*' ? (rr ? Op::MulR : Op::MulC) : (rr ? Op::DivR : Op::DivC));
                pop();
                r = rr;
            } else {
                return r;
            }
        }
    }

    bool unary() {
        skip_ws();
        if (peek() == '-') {
            ++pos_;
            const bool r = unary();
            emit(r ? Op::NegR : Op::NegC);
            return r;
        }
        if (peek() == '+') {
            ++pos_;
            return unary();
        }
        return power();
    }

    bool power() {
        const bool r = primary();
        skip_ws();
        if (peek() == '^') {
            ++pos_;
            skip_ws();
            const std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (start == pos_) fail("exponent must be a nonnegative integer literal");
            const int n = std::stoi(std::string(src_.substr(start, pos_ - start)));
            if (n > 64) fail("exponent too large");
            out_.code_.push_back({r ? Op::PowR : Op::PowC, n, {}});
        }
        return r;
    }

    bool primary() {
        skip_ws();
        const char c = peek();
        if (c == '(') {
            ++pos_;
            const bool r = expr();
            expect(')');
            return r;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::string name = identifier();
            skip_ws();
            if (peek() == '(') return call(name);
            if (name == "i") return push_const(cplx{0.0, 1.0});
            if (name == "pi") return push_const(cplx{kPi, 0.0});
            if (name == "inf") return push_const(cplx{std::numeric_limits<double>::infinity(), 0.0});
            if (name.size() >= 2 && name[0] == 'z' &&
                std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
                const std::size_t k = std::stoul(name.substr(1));
                if (k < 1 || k > dim_) fail("coordinate " + name + " out of range for dimension " + std::to_string(dim_));
                out_.code_.push_back({Op::Coord, static_cast<int>(k - 1), {}});
                push();
                return false;
            }
            fail("unknown identifier '" + name + "'");
        }
        fail("unexpected character");
    }

    bool number() {
        const std::string rest(src_.substr(pos_));
        char* end = nullptr;
        const double v = std::strtod(rest.c_str(), &end);
        const std::size_t len = static_cast<std::size_t>(end - rest.c_str());
        if (len == 0) fail("malformed number");
        pos_ += len;
        if (peek() == 'i' && !(pos_ + 1 < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '_'))) {
            ++pos_;
            return push_const(cplx{0.0, v});
        }
        return push_const(cplx{v, 0.0});
    }

    bool call(const std::string& name) {
        expect('(');
        if (name == "indicator" || name == "cindicator") {
            Region region = parse_region();
            expect(')');
            out_.regions_.push_back(std::move(region));
            out_.code_.push_back({name == "indicator" ? Op::IndicatorOpen : Op::IndicatorClosed,
                                  static_cast<int>(out_.regions_.size() - 1), {}});
            push();
            return true;
        }
        std::vector<bool> kinds;
        kinds.push_back(expr());
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            kinds.push_back(expr());
            skip_ws();
        }
        expect(')');
        const bool all_real = std::all_of(kinds.begin(), kinds.end(), [](bool b) { return b; });
        auto unary_only = [&] {
            if (kinds.size() != 1) fail(name + "() takes one argument");
        };
        auto real_args = [&] {
            if (!all_real) fail(name + "() needs real arguments");
        };
        if (name == "re" || name == "im" || name == "abs" || name == "abs2") {
            unary_only();
            emit(name == "re" ? Op::Re : name == "im" ? Op::Im : name == "abs" ? Op::Abs : Op::Abs2);
            return true;
        }
        if (name == "conj") {
            unary_only();
            emit(Op::Conj);
            return kinds[0];
        }
        if (name == "log" || name == "sqrt") {
            unary_only();
            real_args();
            emit(name == "log" ? Op::LogR : Op::SqrtR);
            return true;
        }
        if (name == "exp") {
            unary_only();
            emit(kinds[0] ? Op::ExpR : Op::ExpC);
            return kinds[0];
        }
        if (name == "min" || name == "max") {
            if (kinds.size() < 2) fail(name + "() needs at least two arguments");
            real_args();
            for (std::size_t k = 1; k < kinds.size(); ++k) {
                emit(name == "min" ? Op::MinR : Op::MaxR);
                pop();
            }
            return true;
        }
        if (name == "lt" || name == "le" || name == "gt" || name == "ge") {
            if (kinds.size() != 2) fail(name + "() takes two arguments");
            real_args();
            emit(name == "lt" ? Op::Lt : name == "le" ? Op::Le : name == "gt" ? Op::Gt : Op::Ge);
            pop();
            return true;
        }
        fail("unknown function '" + name + "'");
    }

    Region parse_region() {
        skip_ws();
        const std::string kind = identifier();
        if (kind != "ball" && kind != "box") fail("expected ball(...) or box(...)");
        expect('(');
        Region region;
        region.ball = (kind == "ball");
        region.center.push_back(constant_expr());
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            region.center.push_back(constant_expr());
            skip_ws();
        }
        expect(';');
        region.radius.push_back(constant_expr().real());
        skip_ws();
        while (peek() == ',') {
            ++pos_;
            region.radius.push_back(constant_expr().real());
            skip_ws();
        }
        expect(')');
        if (region.center.size() != dim_)
            fail(kind + "() center needs " + std::to_string(dim_) + " coordinates");
        if (region.ball && region.radius.size() != 1) fail("ball() takes a single radius");
        if (!region.ball && region.radius.size() != dim_) fail("box() needs one radius per coordinate");
        for (double r : region.radius)
            if (!(r >= 0.0)) fail("region radii must be nonnegative");
        return region;
    }

    /// Parses an expression in a scratch field and evaluates it without coordinates.
    cplx constant_expr() {
        ScalarField scratch;
        scratch.dim_ = dim_;
        Parser sub(src_, dim_, scratch);
        sub.pos_ = pos_;
        sub.expr();
        pos_ = sub.pos_;
        for (const auto& in : scratch.code_)
            if (in.op == Op::Coord || in.op == Op::IndicatorOpen || in.op == Op::IndicatorClosed)
                fail("region parameters must be constants");
        // run() keeps only the real part, so constants are folded here.
        std::vector<cplx> st;
        for (const auto& in : scratch.code_) {
            switch (in.op) {
                case Op::Const: st.push_back(in.value); break;
                case Op::NegR: case Op::NegC: st.back() = -st.back(); break;
                case Op::AddR: case Op::AddC: { auto b = st.back(); st.pop_back(); st.back() += b; break; }
                case Op::SubR: case Op::SubC: { auto b = st.back(); st.pop_back(); st.back() -= b; break; }
                case Op::MulR: case Op::MulC: { auto b = st.back(); st.pop_back(); st.back() *= b; break; }
                case Op::DivR: case Op::DivC: { auto b = st.back(); st.pop_back(); st.back() /= b; break; }
                default: fail("unsupported operation in a constant");
            }
        }
        if (st.size() != 1) fail("malformed constant");
        return st.back();
    }

    bool push_const(cplx v) {
        out_.code_.push_back({Op::Const, 0, v});
        push();
        return v.imag() == 0.0;
    }

    void emit(Op op) { out_.code_.push_back({op, 0, {}}); }
    void push() {
        ++depth_;
        max_depth_ = std::max(max_depth_, depth_);
    }
    void pop() { --depth_; }

    std::string identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
        if (start == pos_) fail("expected identifier");
        return std::string(src_.substr(start, pos_ - start));
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }
    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }
    [[noreturn]] void fail(const std::string& msg) {
        throw Error(ErrorCode::ParseError, msg + " at offset " + std::to_string(pos_) + " in '" + std::string(src_) + "'");
    }

    std::string_view src_;
    std::size_t dim_;
    ScalarField& out_;
    std::size_t pos_ = 0;
    int depth_ = 0;
    int max_depth_ = 0;

    friend class ScalarField;
};

inline ScalarField ScalarField::parse(std::string_view text, std::size_t ambient_dim) {
    require(ambient_dim >= 1, ErrorCode::InvalidArgument, "field dimension must be positive");
    ScalarField f;
    f.text_ = std::string(text);
    f.dim_ = ambient_dim;
    Parser p(text, ambient_dim, f);
    p.parse_top();
    f.max_stack_ = static_cast<std::size_t>(p.max_depth_) + 2;
    return f;
}

/// max(u, -k), the truncation step of the decreasing approximation u_k.
inline ScalarField decreasing_approximation(const ScalarField& u, int k) {
    require(k >= 1, ErrorCode::InvalidArgument, "decreasing_approximation: k must be >= 1");
    return u.truncated_below(-static_cast<double>(k));
}

}  // namespace penv
