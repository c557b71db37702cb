#pragma once

#include "integrate.hpp"

#include <algorithm>

namespace tchain {

struct TSingularityReport {
    Vec3 location;
    FoldReport fold;
    Vec2 tangent_x, tangent_y; // directions of S_X and S_Y in the (x, y) chart
    JacobianEstimate jacobian;
    double lambda_plus = 0, lambda_minus = 0;
    Vec2 v_plus, v_minus; // unit eigendirections, unstable and stable
    bool saddle = false;
    bool sector_ok = false;
    bool stable = false;
    Order order = Order::UpperAfterLower;
    std::string caveat;
};

enum class Branch { UnstablePlus, UnstableMinus, StablePlus, StableMinus };

inline bool is_unstable(Branch b) { return b == Branch::UnstablePlus || b == Branch::UnstableMinus; }
inline bool is_minus(Branch b) { return b == Branch::UnstableMinus || b == Branch::StableMinus; }

inline const char* to_string(Branch b)
{
    switch (b) {
    case Branch::UnstablePlus: return "u+";
    case Branch::UnstableMinus: return "u-";
    case Branch::StablePlus: return "s+";
    case Branch::StableMinus: return "s-";
    }
    return "?";
}

// Unit direction of a manifold branch: "-" points to decreasing x (decreasing y if x is flat).
inline Vec2 branch_direction(const TSingularityReport& r, Branch b)
{
    Vec2 v = is_unstable(b) ? r.v_plus : r.v_minus;
    const bool neg = std::abs(v.x()) > 1e-12 ? v.x() < 0 : v.y() < 0;
    if (neg != is_minus(b)) v = -v;
    return v;
}

inline std::vector<Vec3> find_t_singularities(const PiecewiseSystem& z, const Rect& r, int grid_n)
{
    if (grid_n < 8) throw Error(ErrorKind::ConfigError, "grid_n must be >= 8");
    std::vector<Vec3> found;
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            Vec3 p(r.x0 + (r.x1 - r.x0) * (i + 0.5) / grid_n, r.y0 + (r.y1 - r.y0) * (j + 0.5) / grid_n, 0.0);
            bool ok = false;
            for (int it = 0; it < 50; ++it) {
                const SmoothField& x = z.field(Side::Upper, p);
                const SmoothField& y = z.field(Side::Lower, p);
                Vec3 F(x(p).dot(z.switching.gradient(p)), y(p).dot(z.switching.gradient(p)), z.f(p));
                Eigen::Matrix3d J;
                J.row(0) = lie_gradient(x, z.switching, p).transpose();
                J.row(1) = lie_gradient(y, z.switching, p).transpose();
                J.row(2) = z.switching.gradient(p).transpose();
                if (std::abs(J.determinant()) < 1e-14) break;
                const Vec3 dp = J.fullPivLu().solve(-F);
                p += dp;
                if (!p.allFinite() || p.norm() > 1e8) break;
                if (dp.norm() < 1e-14 * (1 + p.norm())) {
                    ok = true;
                    break;
                }
            }
            if (!ok) {
                const SmoothField& x = z.field(Side::Upper, p);
                const SmoothField& y = z.field(Side::Lower, p);
                const Vec3 n = z.switching.gradient(p);
                ok = p.allFinite() && std::abs(x(p).dot(n)) < 1e-10 && std::abs(y(p).dot(n)) < 1e-10 &&
                     std::abs(z.f(p)) < 1e-10;
            }
            if (!ok) continue;
            if (p.x() < r.x0 || p.x() > r.x1 || p.y() < r.y0 || p.y() > r.y1 || !z.box.contains(p)) continue;
            try {
                if (classify_fold_fold(z, p).cls != FoldClass::Invisible_T) continue;
            } catch (const Error&) {
                continue;
            }
            bool dup = false;
            for (const auto& q : found)
                if ((q - p).norm() < 1e-6) dup = true;
            if (!dup) found.push_back(p);
        }
    }
    std::sort(found.begin(), found.end(), [](const Vec3& a, const Vec3& b) {
        return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
    });
    return found;
}

inline bool crossing_probe(const PiecewiseSystem& z, const Vec3& p)
{
    const auto [xf, yf] = lie_pair(z, p);
    return detail::sgn(xf) * detail::sgn(yf) > 0;
}

inline TSingularityReport analyze_t_singularity(const PiecewiseSystem& z, const Vec3& p, const ReturnMapHandle& h)
{
    TSingularityReport r;
    r.location = p;
    r.order = h.order;
    {
        const auto [xf, yf] = lie_pair(z, p);
        const Vec3 xv = z.field(Side::Upper, p)(p), yv = z.field(Side::Lower, p)(p);
        if (std::abs(xf) > tangency_tol(xv) || std::abs(yf) > tangency_tol(yv) || std::abs(z.f(p)) > 1e-9)
            throw Error(ErrorKind::NotTSingularity, "point is not on both tangency lines");
    }
    try {
        r.fold = classify_fold_fold(z, p);
    } catch (const Error& e) {
        throw Error(ErrorKind::NotTSingularity, e.what());
    }
    if (r.fold.cls != FoldClass::Invisible_T) throw Error(ErrorKind::NotTSingularity, to_string(r.fold.cls));

    const Vec3 n = z.switching.gradient(p);
    auto planar = [](const Vec3& v) {
        Vec2 d(v.x(), v.y());
        return Vec2(d.normalized());
    };
    r.tangent_x = planar(n.cross(lie_gradient(z.field(Side::Upper, p), z.switching, p)));
    r.tangent_y = planar(n.cross(lie_gradient(z.field(Side::Lower, p), z.switching, p)));

    r.jacobian = jacobian_2d(h, drop(p));
    const Mat2& J = r.jacobian.matrix;
    const double tr = J.trace(), det = J.determinant();
    const double disc = tr * tr - 4 * det;
    if (disc <= 0) throw Error(ErrorKind::NonHyperbolic, "complex or repeated eigenvalues");
    const double sq = std::sqrt(disc);
    double l1 = (tr + sq) / 2, l2 = (tr - sq) / 2;
    if (std::abs(l1) < std::abs(l2)) std::swap(l1, l2);
    if (std::abs(std::abs(l1) - 1) < 1e-6) throw Error(ErrorKind::NonHyperbolic, "|lambda| within 1e-6 of 1");
    r.lambda_plus = l1;
    r.lambda_minus = l2;
    auto eigvec = [&J](double lam) {
        Vec2 a(J(0, 1), lam - J(0, 0)), b(lam - J(1, 1), J(1, 0));
        Vec2 v = a.norm() > b.norm() ? a : b;
        v.normalize();
        if (v.y() < 0 || (std::abs(v.y()) < 1e-14 && v.x() < 0)) v = -v;
        return v;
    };
    r.v_plus = eigvec(l1);
    r.v_minus = eigvec(l2);
    r.saddle = l1 > 1 + 1e-6 && l2 > 0 && l2 < 1;
    const double delta = 1e-4;
    r.sector_ok = true;
    for (const Vec2& v : {r.v_plus, r.v_minus})
        for (double s : {1.0, -1.0})
            r.sector_ok = r.sector_ok && crossing_probe(z, p + s * delta * lift(v));
    r.stable = r.saddle && r.sector_ok;
    r.caveat = "stability checked on eigendirections and grown manifold samples, not on the germ";
    return r;
}

struct ConeSample {
    bool unstable = true;
    Vec3 vertex;
    std::vector<std::vector<Vec3>> arcs;
    std::vector<Vec3> seeds;
};

// Crossing orbit arcs through seeds on one eigenline; one full return per seed.
inline ConeSample sample_diabolo(const PiecewiseSystem& z, const TSingularityReport& r, const ReturnMapHandle& h,
                                 bool unstable, int n_rays, double radius)
{
    if (!r.stable) throw Error(ErrorKind::NotTSingularity, "T-singularity is not stable");
    ConeSample cs;
    cs.unstable = unstable;
    cs.vertex = r.location;
    const Vec2 v = unstable ? r.v_plus : r.v_minus;
    for (int k = 1; k <= n_rays; ++k) {
        const Vec3 seed = r.location + lift(v) * (radius * k / n_rays);
        cs.seeds.push_back(seed);
        std::vector<OrbitSample> dump;
        Side side = h.first_side(!unstable);
        Vec3 cur = seed;
        for (int leg = 0; leg < 2; ++leg) {
            const auto lab = classify_sigma_point(z, cur);
            if (lab != RegionLabel::Crossing)
                throw Error(ErrorKind::ReachedSliding, std::string("seed orbit reached ") + to_string(lab));
            const Direction dir = departure_direction(z, side, cur);
            cur = follow_leg(z, side, cur, dir, {}, h.cfg, &dump).p;
            side = side == Side::Upper ? Side::Lower : Side::Upper;
        }
        if (classify_sigma_point(z, cur) != RegionLabel::Crossing)
            throw Error(ErrorKind::ReachedSliding, "seed orbit left the crossing region");
        std::vector<Vec3> arc;
        for (const auto& s : dump) arc.push_back(s.p);
        cs.arcs.push_back(std::move(arc));
    }
    return cs;
}

} // namespace tchain
