#pragma once

#include "core.hpp"
#include "exact.hpp"

#include <numbers>
#include <string>

namespace tchain {

// Exact planar half maps on Sigma = {z = 0} for systems whose half-returns
// are known in closed form.
struct PlanarHalfMaps {
    std::function<Vec2(const Vec2&)> upper;
    std::function<Vec2(const Vec2&)> lower;
};

enum class ModelKind { Z1, Z2, CrossZ0, RegularizedZeps };

struct ModelId {
    ModelKind kind = ModelKind::Z1;
    double eps = 0;

    static ModelId z1() { return {ModelKind::Z1, 0}; }
    static ModelId z2() { return {ModelKind::Z2, 0}; }
    static ModelId cross() { return {ModelKind::CrossZ0, 0}; }
    static ModelId zeps(double e)
    {
        if (!(e > 0 && e <= 1)) throw Error(ErrorKind::ConfigError, "eps must lie in (0, 1]");
        return {ModelKind::RegularizedZeps, e};
    }
    std::string name() const;
    static ModelId parse(const std::string& s);
};

// C^1 blend: -1 below -1, sin(pi x / 2) on [-1, 1], 1 above 1.
inline double regularization_blend(double x)
{
    if (x < -1) return -1.0;
    if (x > 1) return 1.0;
    return std::sin(std::numbers::pi / 2 * x);
}

namespace models {

inline Poly3 X(int i, int j, int k, double c = 1) { return Poly3::monomial(i, j, k, c); }
inline Poly3 C(double c) { return Poly3::constant(c); }

// Switching function z.
inline ScalarField plane_z() { return ScalarField::from_poly(X(0, 0, 1)); }

// Cross-section y + 1.7x - 2.5, negative on the origin side.
inline ScalarField cross_g() { return ScalarField::from_poly(X(0, 1, 0) + X(1, 0, 0, 1.7) + C(-2.5)); }
inline Plane cross_plane(double level = 0) { return Plane{Vec3(1.7, 1.0, 0.0), 2.5 + level}; }

inline SmoothField x1()
{
    auto s = SmoothField::from_poly({C(1), C(-1), X(0, 1, 0)});
    s.flow = [](double t, const Vec3& p) {
        return Vec3(p.x() + t, p.y() - t, p.z() - (p.y() - t) * (p.y() - t) / 2 + p.y() * p.y() / 2);
    };
    return s;
}
inline SmoothField y1()
{
    auto s = SmoothField::from_poly({C(-1), C(2), X(1, 0, 0, -1)});
    s.flow = [](double t, const Vec3& p) {
        return Vec3(p.x() - t, p.y() + 2 * t, p.z() + (p.x() - t) * (p.x() - t) / 2 - p.x() * p.x() / 2);
    };
    return s;
}
inline SmoothField x2()
{
    auto s = SmoothField::from_poly({C(1), C(-1), X(0, 1, 0) + C(-2)});
    s.flow = [](double t, const Vec3& p) {
        return Vec3(p.x() + t, p.y() - t,
                    p.z() - (p.y() - t) * (p.y() - t) / 2 + p.y() * p.y() / 2 - 2 * t);
    };
    return s;
}
inline SmoothField y2()
{
    auto s = SmoothField::from_poly({C(-1), C(3), X(1, 0, 0, -1) + C(2)});
    s.flow = [](double t, const Vec3& p) {
        return Vec3(p.x() - t, p.y() + 3 * t,
                    p.z() + (p.x() - t) * (p.x() - t) / 2 - p.x() * p.x() / 2 + 2 * t);
    };
    return s;
}

inline PiecewiseSystem pair(SmoothField up, SmoothField lo, std::string name)
{
    PiecewiseSystem z;
    z.upper = std::move(up);
    z.lower = std::move(lo);
    z.switching = plane_z();
    z.name = std::move(name);
    return z;
}

} // namespace models

inline PiecewiseSystem model_system(const ModelId& id)
{
    using namespace models;
    switch (id.kind) {
    case ModelKind::Z1: return pair(x1(), y1(), "Z1");
    case ModelKind::Z2: return pair(x2(), y2(), "Z2");
    case ModelKind::CrossZ0: {
        auto z = pair(x1(), y1(), "CrossZ0");
        auto aux = std::make_shared<AuxSwitch>();
        aux->g = cross_g();
        aux->upper = x2();
        aux->lower = y2();
        z.aux = aux;
        return z;
    }
    case ModelKind::RegularizedZeps: {
        const double eps = id.eps;
        const auto g = cross_g();
        SmoothField up, lo;
        up.value = [eps, g](const Vec3& p) {
            const double s = g(p) / eps;
            if (s <= -1) return Vec3(1, -1, p.y());
            if (s >= 1) return Vec3(1, -1, p.y() - 2);
            return Vec3(1, -1, p.y() - 1 - regularization_blend(s));
        };
        lo.value = [eps, g](const Vec3& p) {
            const double s = g(p) / eps;
            if (s <= -1) return Vec3(-1, 2, -p.x());
            if (s >= 1) return Vec3(-1, 3, -p.x() + 2);
            const double b = regularization_blend(s);
            return Vec3(-1, 2.5 + b / 2, -p.x() + 1 + b);
        };
        return pair(up, lo, id.name());
    }
    }
    throw Error(ErrorKind::ConfigError, "unknown model");
}

inline std::string ModelId::name() const
{
    switch (kind) {
    case ModelKind::Z1: return "Z1";
    case ModelKind::Z2: return "Z2";
    case ModelKind::CrossZ0: return "CrossZ0";
    case ModelKind::RegularizedZeps: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "Zeps:%.17g", eps);
        return buf;
    }
    }
    return "?";
}

inline ModelId ModelId::parse(const std::string& s)
{
    if (s == "Z1") return z1();
    if (s == "Z2") return z2();
    if (s == "CrossZ0") return cross();
    if (s.rfind("Zeps:", 0) == 0) {
        try {
            return zeps(std::stod(s.substr(5)));
        } catch (const std::invalid_argument&) {
            throw Error(ErrorKind::ConfigError, "bad eps in model name '" + s + "'");
        }
    }
    throw Error(ErrorKind::ConfigError, "unknown model name '" + s + "'");
}

// Planar involutions of Z1 / Z2, generic in the scalar type so they can run on surds.
template <class T>
std::array<T, 2> model_involution(const ModelId& id, Side side, const std::array<T, 2>& q)
{
    const T& x = q[0];
    const T& y = q[1];
    const T two(2);
    if (id.kind == ModelKind::Z1) {
        if (side == Side::Upper) return {x + two * y, T(0) - y};
        return {T(0) - x, T(4) * x + y};
    }
    if (id.kind == ModelKind::Z2) {
        if (side == Side::Upper) return {x + two * (y - two), two - (y - two)};
        return {two - (x - two), y + T(6) * (x - two)};
    }
    throw Error(ErrorKind::ConfigError, "involutions exist only for Z1 and Z2");
}

inline Vec2 model_involution(const ModelId& id, Side side, const Vec2& q)
{
    auto r = model_involution<double>(id, side, std::array<double, 2>{q.x(), q.y()});
    return {r[0], r[1]};
}

// Lower after upper, the composition printed for the models.
inline Vec2 model_return_map(const ModelId& id, const Vec2& q)
{
    return model_involution(id, Side::Lower, model_involution(id, Side::Upper, q));
}

inline PlanarHalfMaps model_half_maps(const ModelId& id)
{
    return {[id](const Vec2& q) { return model_involution(id, Side::Upper, q); },
            [id](const Vec2& q) { return model_involution(id, Side::Lower, q); }};
}

struct ParamLine {
    Vec2 base;
    Vec2 dir;
    Vec2 at(double a) const { return base + a * dir; }
    double distance(const Vec2& p) const
    {
        const Vec2 d = dir.normalized();
        const Vec2 r = p - base;
        return std::abs(r.x() * d.y() - r.y() * d.x());
    }
};

struct EigenData {
    Surd lambda_plus, lambda_minus;
    std::array<Surd, 2> v_plus, v_minus;
    Vec2 fixed;
    Mat2 matrix;
    ParamLine line_plus, line_minus; // D^+, D^-
};

inline EigenData model_eigen_data(const ModelId& id)
{
    EigenData e;
    if (id.kind == ModelKind::Z1) {
        e.lambda_plus = Surd(3, 2, 2);
        e.lambda_minus = Surd(3, -2, 2);
        e.v_plus = {Surd(-1, Rational(1, 2), 2), Surd(1)};
        e.v_minus = {Surd(-1, Rational(-1, 2), 2), Surd(1)};
        e.fixed = Vec2(0, 0);
        e.matrix << -1, -2, 4, 7;
    } else if (id.kind == ModelKind::Z2) {
        e.lambda_plus = Surd(5, 2, 6);
        e.lambda_minus = Surd(5, -2, 6);
        e.v_plus = {Surd(-1, Rational(1, 3), 6), Surd(1)};
        e.v_minus = {Surd(-1, Rational(-1, 3), 6), Surd(1)};
        e.fixed = Vec2(2, 2);
        e.matrix << -1, -2, 6, 11;
    } else {
        throw Error(ErrorKind::ConfigError, "eigen data exists only for Z1 and Z2");
    }
    e.line_plus = {e.fixed, Vec2(e.v_plus[0].value(), e.v_plus[1].value())};
    e.line_minus = {e.fixed, Vec2(e.v_minus[0].value(), e.v_minus[1].value())};
    return e;
}

enum class ConeBranch { UnstableZ1, StableZ2 };

struct ConeParametrization {
    ConeBranch branch;
    bool upper = true; // z > 0 half

    // alpha >= 0, t in [0, 2 alpha]
    Vec3 operator()(double alpha, double t) const
    {
        if (branch == ConeBranch::UnstableZ1) {
            const double c = -1 + std::sqrt(2.0) / 2;
            return {alpha * c + t, alpha - t, -(alpha - t) * (alpha - t) / 2 + alpha * alpha / 2};
        }
        const double c = -1 - std::sqrt(2.0 / 3.0);
        const double a2 = 2 + alpha;
        return {2 + c * alpha + t, 2 + alpha - t, a2 * a2 / 2 - (a2 - t) * (a2 - t) / 2 - 2 * t};
    }
};

struct SectionCurve {
    std::function<Vec3(double)> map;
    Surd lo, hi;
    Vec3 operator()(double a) const { return map(a); }
};

inline std::pair<SectionCurve, SectionCurve> cone_section_curves()
{
    const double r2 = std::sqrt(2.0), r6 = std::sqrt(6.0);
    SectionCurve gu, gs;
    gu.map = [r2](double a) {
        return Vec3(-5.0 / 7.0 * (-5 + r2 * a), (-50 + 17 * r2 * a) / 14.0,
                    (-1250 + 850 * r2 * a - 191 * a * a) / 196.0);
    };
    gu.lo = Surd(Rational(-350, 191), Rational(425, 191), 2);
    gu.hi = Surd(Rational(350, 191), Rational(425, 191), 2);
    gs.map = [r6](double a) {
        return Vec3(5.0 / 21.0 * (-9 + 2 * r6 * a), (129 - 17 * r6 * a) / 21.0,
                    (-2523 + 986 * r6 * a - 431 * a * a) / 294.0);
    };
    gs.lo = Surd(Rational(-609, 431), Rational(493, 431), 6);
    gs.hi = Surd(Rational(609, 431), Rational(493, 431), 6);
    return {gu, gs};
}

inline std::array<Surd, 3> cone_intersection_point_exact()
{
    return {Surd(Rational(335, 49), Rational(-40, 49), 51), Surd(Rational(-447, 49), Rational(68, 49), 51),
            Surd(Rational(-330577, 4802), Rational(48248, 4802), 51)};
}

inline Vec3 cone_intersection_point()
{
    auto e = cone_intersection_point_exact();
    return {e[0].value(), e[1].value(), e[2].value()};
}

// Twin connection point in z < 0 on the same plane; no closed form is printed for it,
// the value is the CrossZ0 trace intersection (lower arcs) refined to 1e-12.
inline Vec3 cone_intersection_point_lower() { return {1.655463040701, -0.314287169191, -0.874682252980}; }

// Reversible planar fixtures with X = (1,-1,y), Y = (-1, h(x), -x), f = z.
// Their half maps are (x + 2y, -y) and (-x, y + g(x)) with g odd and h = g'/2.
struct Fixture {
    PiecewiseSystem system;
    PlanarHalfMaps maps;
    Vec2 fixed{0, 0};
    std::string name;
};

namespace models {

inline Fixture reversible_fixture(std::function<double(double)> g, std::function<double(double)> h,
                                  std::optional<PolyVec> lower_poly, std::string name)
{
    Fixture fx;
    SmoothField lo;
    lo.value = [h](const Vec3& p) { return Vec3(-1, h(p.x()), -p.x()); };
    lo.flow = [g](double t, const Vec3& p) {
        const double x = p.x();
        return Vec3(x - t, p.y() + (g(x) - g(x - t)) / 2, p.z() - x * t + t * t / 2);
    };
    lo.poly = std::move(lower_poly);
    fx.system = pair(x1(), lo, name);
    fx.maps.upper = [](const Vec2& q) { return Vec2(q.x() + 2 * q.y(), -q.y()); };
    fx.maps.lower = [g](const Vec2& q) { return Vec2(-q.x(), q.y() + g(q.x())); };
    fx.name = std::move(name);
    return fx;
}

} // namespace models

// Cubic reversible fixture; delta = 0 has a transverse homoclinic tangle,
// delta near 0.0887564600453 a homoclinic tangency.
inline Fixture cubic_fixture(double delta)
{
    using namespace models;
    auto g = [delta](double x) { return 4 * x - x * x * x + delta * x * x * x * x * x; };
    auto h = [delta](double x) { return 2 - 1.5 * x * x + 2.5 * delta * x * x * x * x; };
    PolyVec lower{C(-1), C(2) + X(2, 0, 0, -1.5) + X(4, 0, 0, 2.5 * delta), X(1, 0, 0, -1)};
    char buf[64];
    std::snprintf(buf, sizeof buf, "Cubic:%.17g", delta);
    return reversible_fixture(g, h, lower, buf);
}

inline constexpr double cubic_tangency_delta = 0.0887564600453;

// Integrable at kappa = 0 (pinched torus), split separatrices for kappa != 0.
inline Fixture mcmillan_fixture(double kappa)
{
    auto g = [kappa](double a) {
        const double d = 1 + a * a;
        return a + 3 * a / d + kappa / 2 * a * a * a / (d * d);
    };
    auto h = [kappa](double a) {
        const double a2 = a * a, d = 1 + a2;
        return (1 + 3 * (1 - a2) / (d * d) + kappa / 2 * (3 * a2 - a2 * a2) / (d * d * d)) / 2;
    };
    char buf[64];
    std::snprintf(buf, sizeof buf, "McMillan:%.17g", kappa);
    return models::reversible_fixture(g, h, std::nullopt, buf);
}

} // namespace tchain
