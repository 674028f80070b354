#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace penv {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class ErrorCode {
    InvalidArgument,
    PointNotOnSpace,
    NotApplicable,
    IllConditioned,
    DegreeOverflow,
    DomainError,
    ParseError,
    InterpolationOutOfRange,
    EmptyShell,
    PointOutsideWindow,
    NotConverged,
    SchemaMismatch,
    ConfigError,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::PointNotOnSpace: return "PointNotOnSpace";
        case ErrorCode::NotApplicable: return "NotApplicable";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::DegreeOverflow: return "DegreeOverflow";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InterpolationOutOfRange: return "InterpolationOutOfRange";
        case ErrorCode::EmptyShell: return "EmptyShell";
        case ErrorCode::PointOutsideWindow: return "PointOutsideWindow";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Library-wide exception. Every failure mode named in the public contracts
/// maps to one ErrorCode so callers (and the CLI exit-code table) can switch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) throw Error(code, msg);
}

inline bool is_finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// A point of C^N. Coordinates are always finite.
class ComplexPoint {
public:
    ComplexPoint() = default;
    explicit ComplexPoint(std::vector<cplx> coords) : coords_(std::move(coords)) { validate(); }
    ComplexPoint(std::initializer_list<cplx> coords) : coords_(coords) { validate(); }

    std::size_t dim() const noexcept { return coords_.size(); }
    const cplx& operator[](std::size_t i) const { return coords_[i]; }
    const std::vector<cplx>& coords() const noexcept { return coords_; }

    friend bool operator==(const ComplexPoint& a, const ComplexPoint& b) { return a.coords_ == b.coords_; }

private:
    void validate() const {
        for (const auto& z : coords_)
            require(is_finite(z), ErrorCode::InvalidArgument, "ComplexPoint coordinates must be finite");
    }

    std::vector<cplx> coords_;
};

inline double distance(const ComplexPoint& a, const ComplexPoint& b) {
    require(a.dim() == b.dim(), ErrorCode::InvalidArgument, "dimension mismatch in distance");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s);
}

inline double distance(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a[i] - b[i]);
    return std::sqrt(s);
}

/// Pairwise summation. For a power-of-two count of identical values the
/// result is exact, so the constant disc reproduces u(x) bit for bit.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n == 8) return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
    if (n == 1) return v[0];
    if (n == 0) return 0.0;
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace penv
