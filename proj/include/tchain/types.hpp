#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tchain {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;

enum class ErrorKind {
    OnSwitchingManifold,
    UnsupportedOrder,
    NotAFoldFold,
    NotSliding,
    DegenerateDenominator,
    NoReturn,
    LeftBox,
    GrazingEvent,
    ExitedDomain,
    ReachedSliding,
    StencilFailure,
    NotTSingularity,
    NonHyperbolic,
    NotTransverse,
    Ambiguous,
    DegenerateBoundary,
    PatternViolation,
    NoValidPatch,
    NotCertified,
    NewtonDivergence,
    ConfigError,
    UnknownArtifact,
};

inline const char* to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::OnSwitchingManifold: return "OnSwitchingManifold";
    case ErrorKind::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorKind::NotAFoldFold: return "NotAFoldFold";
    case ErrorKind::NotSliding: return "NotSliding";
    case ErrorKind::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorKind::NoReturn: return "NoReturn";
    case ErrorKind::LeftBox: return "LeftBox";
    case ErrorKind::GrazingEvent: return "GrazingEvent";
    case ErrorKind::ExitedDomain: return "ExitedDomain";
    case ErrorKind::ReachedSliding: return "ReachedSliding";
    case ErrorKind::StencilFailure: return "StencilFailure";
    case ErrorKind::NotTSingularity: return "NotTSingularity";
    case ErrorKind::NonHyperbolic: return "NonHyperbolic";
    case ErrorKind::NotTransverse: return "NotTransverse";
    case ErrorKind::Ambiguous: return "Ambiguous";
    case ErrorKind::DegenerateBoundary: return "DegenerateBoundary";
    case ErrorKind::PatternViolation: return "PatternViolation";
    case ErrorKind::NoValidPatch: return "NoValidPatch";
    case ErrorKind::NotCertified: return "NotCertified";
    case ErrorKind::NewtonDivergence: return "NewtonDivergence";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::UnknownArtifact: return "UnknownArtifact";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

enum class Side { Upper, Lower };
enum class Direction { Forward, Backward };

inline const char* to_string(Side s) { return s == Side::Upper ? "upper" : "lower"; }

// Axis-aligned working box.
struct Box {
    Vec3 lo{-10, -10, -10};
    Vec3 hi{10, 10, 10};

    bool empty() const { return !(lo.array() < hi.array()).all(); }
    bool contains(const Vec3& p) const
    {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
};

// Planar box used for searches on Sigma.
struct Rect {
    double x0 = -1, x1 = 1, y0 = -1, y1 = 1;
};

// Plane {p : normal . p = offset}.
struct Plane {
    Vec3 normal{0, 0, 1};
    double offset = 0;

    double eval(const Vec3& p) const { return normal.dot(p) - offset; }
    bool operator==(const Plane& o) const { return normal == o.normal && offset == o.offset; }
};

inline Vec3 lift(const Vec2& q) { return {q.x(), q.y(), 0.0}; }
inline Vec2 drop(const Vec3& p) { return {p.x(), p.y()}; }

inline double tangency_tol(const Vec3& v) { return 1e-9 * (1.0 + v.norm()); }

} // namespace tchain
