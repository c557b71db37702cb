#pragma once

#include "polynomial.hpp"
#include "types.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace tchain {

struct ScalarField {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> grad;
    std::optional<Poly3> poly;

    double operator()(const Vec3& p) const { return value(p); }
    Vec3 gradient(const Vec3& p) const { return grad(p); }

    static ScalarField from_poly(const Poly3& f)
    {
        auto fx = f.diff(0), fy = f.diff(1), fz = f.diff(2);
        ScalarField s;
        s.value = [f](const Vec3& p) { return f(p); };
        s.grad = [fx, fy, fz](const Vec3& p) { return Vec3(fx(p), fy(p), fz(p)); };
        s.poly = f;
        return s;
    }
    static ScalarField from_plane(const Plane& pl)
    {
        Poly3 f = Poly3::monomial(1, 0, 0, pl.normal.x()) + Poly3::monomial(0, 1, 0, pl.normal.y()) +
                  Poly3::monomial(0, 0, 1, pl.normal.z()) + Poly3::constant(-pl.offset);
        return from_poly(f);
    }
};

struct SmoothField {
    std::function<Vec3(const Vec3&)> value;
    std::function<Vec3(double, const Vec3&)> flow; // optional closed form
    std::optional<PolyVec> poly;

    Vec3 operator()(const Vec3& p) const { return value(p); }

    static SmoothField from_poly(const PolyVec& v)
    {
        SmoothField s;
        s.value = [v](const Vec3& p) { return eval(v, p); };
        s.poly = v;
        return s;
    }
};

// Second discontinuity surface g = 0 splitting each half-space field in two
// (cross-shaped switching).  Base fields act on g < 0, these on g > 0.
struct AuxSwitch {
    ScalarField g;
    SmoothField upper;
    SmoothField lower;
};

struct PiecewiseSystem {
    SmoothField upper; // X, on f > 0
    SmoothField lower; // Y, on f < 0
    ScalarField switching;
    Box box;
    std::shared_ptr<const AuxSwitch> aux;
    std::string name;

    const SmoothField& field(Side s, const Vec3& p) const
    {
        if (aux && aux->g(p) > 0) return s == Side::Upper ? aux->upper : aux->lower;
        return s == Side::Upper ? upper : lower;
    }
    double f(const Vec3& p) const { return switching(p); }
};

enum class RegionLabel { Crossing, StableSliding, UnstableSliding, TangencyX, TangencyY, TangencyBoth };

inline const char* to_string(RegionLabel r)
{
    switch (r) {
    case RegionLabel::Crossing: return "Crossing";
    case RegionLabel::StableSliding: return "StableSliding";
    case RegionLabel::UnstableSliding: return "UnstableSliding";
    case RegionLabel::TangencyX: return "TangencyX";
    case RegionLabel::TangencyY: return "TangencyY";
    case RegionLabel::TangencyBoth: return "TangencyBoth";
    }
    return "?";
}

enum class FoldClass { VisibleVisible, InvisibleVisible, VisibleInvisible, Invisible_T };

inline const char* to_string(FoldClass c)
{
    switch (c) {
    case FoldClass::VisibleVisible: return "VisibleVisible";
    case FoldClass::InvisibleVisible: return "InvisibleVisible";
    case FoldClass::VisibleInvisible: return "VisibleInvisible";
    case FoldClass::Invisible_T: return "Invisible_T";
    }
    return "?";
}

struct FoldReport {
    FoldClass cls;
    double x2f = 0, y2f = 0;
    double det = 0; // sine of the angle between S_X and S_Y at p
};

namespace detail {

inline double fd_step(const Vec3& p) { return 1e-5 * (1.0 + p.norm()); }

inline Vec3 fd_gradient(const std::function<double(const Vec3&)>& fn, const Vec3& p)
{
    const double h = fd_step(p);
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
        Vec3 a = p, b = p;
        a[i] += h;
        b[i] -= h;
        g[i] = (fn(a) - fn(b)) / (2 * h);
    }
    return g;
}

inline std::function<double(const Vec3&)> lie_fn(const SmoothField& v, const ScalarField& f, int order)
{
    std::function<double(const Vec3&)> cur = [&v, &f](const Vec3& p) { return v(p).dot(f.gradient(p)); };
    for (int k = 2; k <= order; ++k) {
        auto prev = cur;
        cur = [prev, &v](const Vec3& p) { return v(p).dot(fd_gradient(prev, p)); };
    }
    return cur;
}

inline Poly3 lie_poly(const PolyVec& v, const Poly3& f, int order)
{
    Poly3 cur = f;
    for (int k = 0; k < order; ++k) cur = lie(v, cur);
    return cur;
}

} // namespace detail

inline double lie_derivative(const SmoothField& v, const ScalarField& f, const Vec3& p, int order)
{
    if (order < 1 || order > 3) throw Error(ErrorKind::UnsupportedOrder, "order " + std::to_string(order));
    if (v.poly && f.poly) return detail::lie_poly(*v.poly, *f.poly, order)(p);
    return detail::lie_fn(v, f, order)(p);
}

// Finite-difference variant regardless of available coefficient tables.
inline double lie_derivative_fd(const SmoothField& v, const ScalarField& f, const Vec3& p, int order)
{
    if (order < 1 || order > 3) throw Error(ErrorKind::UnsupportedOrder, "order " + std::to_string(order));
    return detail::lie_fn(v, f, order)(p);
}

inline Vec3 lie_gradient(const SmoothField& v, const ScalarField& f, const Vec3& p)
{
    if (v.poly && f.poly) return gradient(lie(*v.poly, *f.poly), p);
    return detail::fd_gradient(detail::lie_fn(v, f, 1), p);
}

inline Vec3 evaluate_filippov(const PiecewiseSystem& z, const Vec3& p)
{
    const double fp = z.f(p);
    if (std::abs(fp) <= 1e-12) throw Error(ErrorKind::OnSwitchingManifold, "|f(p)| <= 1e-12");
    return fp > 0 ? z.field(Side::Upper, p)(p) : z.field(Side::Lower, p)(p);
}

inline RegionLabel classify_sigma_point(const PiecewiseSystem& z, const Vec3& p)
{
    const SmoothField& x = z.field(Side::Upper, p);
    const SmoothField& y = z.field(Side::Lower, p);
    const Vec3 grad = z.switching.gradient(p);
    const Vec3 xv = x(p), yv = y(p);
    const double xf = xv.dot(grad), yf = yv.dot(grad);
    const bool tx = std::abs(xf) <= tangency_tol(xv);
    const bool ty = std::abs(yf) <= tangency_tol(yv);
    if (tx && ty) return RegionLabel::TangencyBoth;
    if (tx) return RegionLabel::TangencyX;
    if (ty) return RegionLabel::TangencyY;
    if (xf * yf > 0) return RegionLabel::Crossing;
    if (xf < 0) return RegionLabel::StableSliding;
    return RegionLabel::UnstableSliding;
}

inline FoldReport classify_fold_fold(const PiecewiseSystem& z, const Vec3& p)
{
    const SmoothField& x = z.field(Side::Upper, p);
    const SmoothField& y = z.field(Side::Lower, p);
    FoldReport r{};
    r.x2f = lie_derivative(x, z.switching, p, 2);
    r.y2f = lie_derivative(y, z.switching, p, 2);
    const Vec3 n = z.switching.gradient(p);
    const Vec3 tx = n.cross(lie_gradient(x, z.switching, p));
    const Vec3 ty = n.cross(lie_gradient(y, z.switching, p));
    const double scale = tx.norm() * ty.norm() * n.norm();
    r.det = scale > 0 ? tx.cross(ty).dot(n) / scale : 0.0;
    if (std::abs(r.x2f) <= tangency_tol(x(p)) || std::abs(r.y2f) <= tangency_tol(y(p)))
        throw Error(ErrorKind::NotAFoldFold, "second Lie derivative vanishes");
    if (std::abs(r.det) < 1e-8) throw Error(ErrorKind::NotAFoldFold, "tangency lines not transverse");
    if (r.x2f > 0)
        r.cls = r.y2f < 0 ? FoldClass::VisibleVisible : FoldClass::VisibleInvisible;
    else
        r.cls = r.y2f < 0 ? FoldClass::InvisibleVisible : FoldClass::Invisible_T;
    return r;
}

inline Vec3 normalized_sliding_field(const PiecewiseSystem& z, const Vec3& p)
{
    const Vec3 n = z.switching.gradient(p);
    const Vec3 xv = z.field(Side::Upper, p)(p), yv = z.field(Side::Lower, p)(p);
    return yv.dot(n) * xv - xv.dot(n) * yv;
}

inline Vec3 sliding_field(const PiecewiseSystem& z, const Vec3& p)
{
    const auto lab = classify_sigma_point(z, p);
    if (lab != RegionLabel::StableSliding && lab != RegionLabel::UnstableSliding)
        throw Error(ErrorKind::NotSliding, to_string(lab));
    const Vec3 n = z.switching.gradient(p);
    const Vec3 xv = z.field(Side::Upper, p)(p), yv = z.field(Side::Lower, p)(p);
    const double xf = xv.dot(n), yf = yv.dot(n);
    const double den = yf - xf;
    if (std::abs(den) < 1e-12) throw Error(ErrorKind::DegenerateDenominator, "|Yf - Xf| < 1e-12");
    return (yf * xv - xf * yv) / den;
}

// Lie derivatives of f along both fields at p, (Xf, Yf).
inline std::pair<double, double> lie_pair(const PiecewiseSystem& z, const Vec3& p)
{
    const Vec3 n = z.switching.gradient(p);
    return {z.field(Side::Upper, p)(p).dot(n), z.field(Side::Lower, p)(p).dot(n)};
}

} // namespace tchain
