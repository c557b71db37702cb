#pragma once

#include "types.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

namespace tchain::geom {

using Polyline = std::vector<Vec2>;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct SegHit {
    double s, t; // parameters on the two segments
    Vec2 p;
};

// Proper or touching intersection of segments [a0,a1] and [b0,b1].
inline std::optional<SegHit> segment_intersection(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1)
{
    const Vec2 r = a1 - a0, s = b1 - b0;
    const double den = cross2(r, s);
    if (den == 0) return std::nullopt;
    const Vec2 qp = b0 - a0;
    const double t = cross2(qp, s) / den;
    const double u = cross2(qp, r) / den;
    if (t < 0 || t > 1 || u < 0 || u > 1) return std::nullopt;
    return SegHit{t, u, a0 + t * r};
}

struct PolyHit {
    size_t i, j; // segment indices
    double s, t;
    Vec2 p;
};

// Uniform bucket grid over the segments of a polyline.
class SegmentGrid {
public:
    explicit SegmentGrid(const Polyline& poly) : poly_(poly)
    {
        if (poly.size() < 2) return;
        lo_ = hi_ = poly[0];
        double total = 0;
        for (size_t i = 0; i < poly.size(); ++i) {
            lo_ = lo_.cwiseMin(poly[i]);
            hi_ = hi_.cwiseMax(poly[i]);
            if (i > 0) total += (poly[i] - poly[i - 1]).norm();
        }
        const Vec2 ext = (hi_ - lo_).cwiseMax(1e-12);
        const double mean = total / (poly.size() - 1);
        cell_ = std::max({mean * 2, std::sqrt(ext.x() * ext.y() / static_cast<double>(poly.size())), 1e-12});
        nx_ = std::min<long>(4096, static_cast<long>(ext.x() / cell_) + 1);
        ny_ = std::min<long>(4096, static_cast<long>(ext.y() / cell_) + 1);
        cell_ = std::max(ext.x() / nx_, ext.y() / ny_) * (1 + 1e-12);
        cells_.assign(static_cast<size_t>(nx_ * ny_), {});
        for (size_t i = 0; i + 1 < poly.size(); ++i) {
            const Vec2 a = poly[i].cwiseMin(poly[i + 1]), b = poly[i].cwiseMax(poly[i + 1]);
            for (long cx = ix(a.x()); cx <= ix(b.x()); ++cx)
                for (long cy = iy(a.y()); cy <= iy(b.y()); ++cy) cells_[static_cast<size_t>(cx * ny_ + cy)].push_back(i);
        }
    }

    const Polyline& poly() const { return poly_; }

    // Calls fn(segment index) once per segment whose cell range meets [a, b].
    template <class Fn>
    void visit(const Vec2& a, const Vec2& b, Fn&& fn) const
    {
        if (cells_.empty()) return;
        if (a.x() > hi_.x() || a.y() > hi_.y() || b.x() < lo_.x() || b.y() < lo_.y()) return;
        ++stamp_;
        if (seen_.size() != poly_.size()) seen_.assign(poly_.size(), 0);
        for (long cx = ix(a.x()); cx <= ix(b.x()); ++cx)
            for (long cy = iy(a.y()); cy <= iy(b.y()); ++cy)
                for (size_t j : cells_[static_cast<size_t>(cx * ny_ + cy)]) {
                    if (seen_[j] == stamp_) continue;
                    seen_[j] = stamp_;
                    fn(j);
                }
    }

    // Nearest segment: grows a square window until the best hit lies inside it.
    // Beyond max_r the result is only an upper bound (possibly infinite).
    std::pair<double, std::pair<size_t, double>> nearest(const Vec2& p,
                                                         double max_r = std::numeric_limits<double>::infinity()) const
    {
        double best = std::numeric_limits<double>::infinity();
        size_t seg = 0;
        double par = 0;
        if (poly_.size() == 1) return {(poly_[0] - p).norm(), {0, 0.0}};
        if (cells_.empty()) return {best, {0, 0.0}};
        const Vec2 c = p.cwiseMax(lo_).cwiseMin(hi_);
        const double off = (c - p).norm();
        for (double r = cell_;; r *= 2) {
            const Vec2 d(r, r);
            visit(c - d, c + d, [&](size_t j) {
                double t;
                const double dist = point_segment_distance(p, poly_[j], poly_[j + 1], &t);
                if (dist < best) {
                    best = dist;
                    seg = j;
                    par = t;
                }
            });
            if (best <= r - off || (r > (hi_ - lo_).norm() + cell_ && std::isfinite(best))) break;
            if (r - off > max_r) break;
        }
        return {best, {seg, par}};
    }

private:
    long ix(double x) const { return std::clamp<long>(static_cast<long>((x - lo_.x()) / cell_), 0, nx_ - 1); }
    long iy(double y) const { return std::clamp<long>(static_cast<long>((y - lo_.y()) / cell_), 0, ny_ - 1); }

    static double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* param)
    {
        const Vec2 d = b - a;
        const double L2 = d.squaredNorm();
        const double t = L2 > 0 ? std::clamp((p - a).dot(d) / L2, 0.0, 1.0) : 0.0;
        *param = t;
        return (a + t * d - p).norm();
    }

    const Polyline& poly_;
    Vec2 lo_{0, 0}, hi_{0, 0};
    double cell_ = 1;
    long nx_ = 0, ny_ = 0;
    std::vector<std::vector<size_t>> cells_;
    mutable std::vector<unsigned> seen_;
    mutable unsigned stamp_ = 0;
};

// All crossings of two polylines; a crossing exactly at a shared vertex is reported once.
inline std::vector<PolyHit> polyline_intersections(const Polyline& a, const Polyline& b)
{
    std::vector<PolyHit> out;
    if (a.size() < 2 || b.size() < 2) return out;
    const SegmentGrid grid(b);
    for (size_t i = 0; i + 1 < a.size(); ++i) {
        const Vec2 alo = a[i].cwiseMin(a[i + 1]), ahi = a[i].cwiseMax(a[i + 1]);
        std::vector<PolyHit> local;
        grid.visit(alo, ahi, [&](size_t j) {
            const Vec2 blo = b[j].cwiseMin(b[j + 1]), bhi = b[j].cwiseMax(b[j + 1]);
            if ((alo.array() > bhi.array()).any() || (blo.array() > ahi.array()).any()) return;
            auto h = segment_intersection(a[i], a[i + 1], b[j], b[j + 1]);
            if (!h) return;
            if ((h->s == 1.0 && i + 2 < a.size()) || (h->t == 1.0 && j + 2 < b.size())) return;
            local.push_back({i, j, h->s, h->t, h->p});
        });
        std::sort(local.begin(), local.end(), [](const PolyHit& x, const PolyHit& y) { return x.j < y.j; });
        out.insert(out.end(), local.begin(), local.end());
    }
    return out;
}

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, double* param = nullptr)
{
    const Vec2 d = b - a;
    const double L2 = d.squaredNorm();
    const double t = L2 > 0 ? std::clamp((p - a).dot(d) / L2, 0.0, 1.0) : 0.0;
    if (param) *param = t;
    return (a + t * d - p).norm();
}

struct Nearest {
    double dist = std::numeric_limits<double>::infinity();
    size_t seg = 0;
    double t = 0;
};

inline Nearest nearest_on_polyline(const Polyline& poly, const Vec2& p)
{
    Nearest n;
    if (poly.size() == 1) {
        n.dist = (poly[0] - p).norm();
        return n;
    }
    for (size_t i = 0; i + 1 < poly.size(); ++i) {
        double t;
        const double d = point_segment_distance(p, poly[i], poly[i + 1], &t);
        if (d < n.dist) n = {d, i, t};
    }
    return n;
}

inline double distance_to_polyline(const Polyline& poly, const Vec2& p) { return nearest_on_polyline(poly, p).dist; }

// One-sided distance sampled at vertices and segment midpoints of a.
// Once a sample is farther than cap the search stops and returns a value above cap.
inline double directed_hausdorff(const Polyline& a, const Polyline& b,
                                 double cap = std::numeric_limits<double>::infinity())
{
    if (b.size() < 2) {
        double h = 0;
        for (const auto& p : a) h = std::max(h, distance_to_polyline(b, p));
        return h;
    }
    const SegmentGrid grid(b);
    double h = 0;
    for (size_t i = 0; i < a.size() && h <= cap; ++i) {
        h = std::max(h, grid.nearest(a[i], cap).first);
        if (i + 1 < a.size()) h = std::max(h, grid.nearest(0.5 * (a[i] + a[i + 1]), cap).first);
    }
    return h;
}

inline double hausdorff(const Polyline& a, const Polyline& b, double cap = std::numeric_limits<double>::infinity())
{
    const double h = directed_hausdorff(a, b, cap);
    if (h > cap) return h;
    return std::max(h, directed_hausdorff(b, a, cap));
}

inline double min_distance(const Polyline& a, const Polyline& b)
{
    if (!polyline_intersections(a, b).empty()) return 0.0;
    double d = std::numeric_limits<double>::infinity();
    if (a.size() >= 2 && b.size() >= 2) {
        const SegmentGrid ga(a), gb(b);
        for (const auto& p : a) d = std::min(d, gb.nearest(p).first);
        for (const auto& p : b) d = std::min(d, ga.nearest(p).first);
        return d;
    }
    for (const auto& p : a) d = std::min(d, distance_to_polyline(b, p));
    for (const auto& p : b) d = std::min(d, distance_to_polyline(a, p));
    return d;
}

// Ray-crossing test; closed polygon given without repeating the first vertex.
inline bool point_in_polygon(const Polyline& poly, const Vec2& p)
{
    bool in = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y() > p.y()) != (b.y() > p.y())) {
            const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
            if (p.x() < x) in = !in;
        }
    }
    return in;
}

inline double signed_area(const Polyline& poly)
{
    double a = 0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) a += cross2(poly[i], poly[(i + 1) % n]);
    return 0.5 * a;
}

inline std::vector<double> arclengths(const Polyline& p)
{
    std::vector<double> s(p.size(), 0.0);
    for (size_t i = 1; i < p.size(); ++i) s[i] = s[i - 1] + (p[i] - p[i - 1]).norm();
    return s;
}

inline double length(const Polyline& p) { return p.empty() ? 0.0 : arclengths(p).back(); }

// Angle in [0, pi/2] between two directions.
inline double line_angle(const Vec2& a, const Vec2& b)
{
    const double c = std::abs(a.normalized().dot(b.normalized()));
    return std::acos(std::min(1.0, c));
}

// Orthonormal in-plane basis for a plane normal.
inline std::pair<Vec3, Vec3> plane_basis(const Vec3& normal)
{
    const Vec3 n = normal.normalized();
    Vec3 u = std::abs(n.z()) < 0.9 ? Vec3(0, 0, 1).cross(n) : Vec3(1, 0, 0).cross(n);
    u.normalize();
    return {u, n.cross(u)};
}

} // namespace tchain::geom
