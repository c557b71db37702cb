#pragma once

#include "manifolds.hpp"

#include <Eigen/LU>

namespace tchain {

// ---------------------------------------------------------------------------
// Region partition around the T-singularity

enum class RegionId { R1, R2, R3, R4, Boundary, Outside };

inline const char* to_string(RegionId r)
{
    switch (r) {
    case RegionId::R1: return "R1";
    case RegionId::R2: return "R2";
    case RegionId::R3: return "R3";
    case RegionId::R4: return "R4";
    case RegionId::Boundary: return "Boundary";
    case RegionId::Outside: return "Outside";
    }
    return "?";
}

struct RegionPartition {
    Vec2 p0{0, 0};
    std::array<geom::Polyline, 4> arcs;   // indexed by Branch: u+, u-, s+, s-
    std::array<Vec2, 4> marked;           // arc ends: p^u_R, p^u_loc, p^s_R, p^s_loc
    std::array<double, 4> lengths{};      // arclength cut of each arc
    std::array<geom::Polyline, 4> chords; // closing segments of R1..R4
    std::array<geom::Polyline, 4> regions;

    RegionId locate(const Vec2& q, double tol = 1e-9) const
    {
        for (const auto& a : arcs)
            if (geom::distance_to_polyline(a, q) <= tol) return RegionId::Boundary;
        for (const auto& c : chords)
            if (geom::distance_to_polyline(c, q) <= tol) return RegionId::Boundary;
        for (int k = 0; k < 4; ++k)
            if (geom::point_in_polygon(regions[k], q)) return static_cast<RegionId>(k);
        return RegionId::Outside;
    }
};

namespace detail {

inline geom::Polyline cut_curve(const ManifoldCurve& c, double len)
{
    geom::Polyline out;
    for (size_t i = 0; i < c.points.size(); ++i) {
        if (c.s[i] <= len) {
            out.push_back(c.points[i]);
            continue;
        }
        const double t = (len - c.s[i - 1]) / (c.s[i] - c.s[i - 1]);
        out.push_back(c.points[i - 1] + t * (c.points[i] - c.points[i - 1]));
        break;
    }
    return out;
}

} // namespace detail

// Regions: R1 between u+ and s+, R2 between s+ and u-, R3 between u- and s-, R4 between s- and u+.
inline RegionPartition build_region_partition(const std::array<const ManifoldCurve*, 4>& branches,
                                              const std::array<double, 4>& lengths)
{
    RegionPartition rp;
    rp.p0 = branches[0]->fixed;
    rp.lengths = lengths;
    for (int k = 0; k < 4; ++k) {
        if (!(lengths[k] > 0)) throw Error(ErrorKind::DegenerateBoundary, "partition arcs need positive length");
        if (branches[k]->length() < lengths[k])
            throw Error(ErrorKind::DegenerateBoundary, "manifold branch shorter than the requested arc");
        rp.arcs[k] = detail::cut_curve(*branches[k], lengths[k]);
        rp.arcs[k].front() = rp.p0;
        rp.marked[k] = rp.arcs[k].back();
    }
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if ((rp.marked[i] - rp.marked[j]).norm() <= 1e-9)
                throw Error(ErrorKind::DegenerateBoundary, "marked points coincide");
    const int U_P = 0, U_M = 1, S_P = 2, S_M = 3;
    const std::array<std::pair<int, int>, 4> pairs{{{U_P, S_P}, {S_P, U_M}, {U_M, S_M}, {S_M, U_P}}};
    for (int k = 0; k < 4; ++k) {
        const auto [a, b] = pairs[k];
        rp.chords[k] = {rp.marked[a], rp.marked[b]};
        geom::Polyline poly = rp.arcs[a];
        for (size_t i = rp.arcs[b].size() - 1; i >= 1; --i) poly.push_back(rp.arcs[b][i]);
        rp.regions[k] = poly;
    }
    // arcs and chords may meet only at p0 and at their own endpoints
    std::vector<geom::Polyline> pieces(rp.arcs.begin(), rp.arcs.end());
    pieces.insert(pieces.end(), rp.chords.begin(), rp.chords.end());
    for (size_t i = 0; i < pieces.size(); ++i)
        for (size_t j = i + 1; j < pieces.size(); ++j)
            for (const auto& hit : geom::polyline_intersections(pieces[i], pieces[j])) {
                bool shared = (hit.p - rp.p0).norm() < 1e-9;
                for (const auto& m : rp.marked) shared = shared || (hit.p - m).norm() < 1e-9;
                if (!shared) throw Error(ErrorKind::DegenerateBoundary, "partition arcs intersect");
            }
    return rp;
}

// ---------------------------------------------------------------------------
// The patch Q in a manifold frame

struct PatchParams {
    double lo_frac = 0.55;    // l2 = s(Phi_X q2) - lo_frac (s(Phi_X q2) - s(Phi q1))
    double hi_frac = 0.4;     // l1 = s(q1) + hi_frac (s_loc - s(q1))
    double height_frac = 0.08; // height = height_frac * (l1 - l2)
    int frame_samples = 2000;
    int grid = 21;
    int max_shrink = 30;
    double shrink = 0.8;
};

struct QuadPatch {
    // P(a, b) = W(s_lo + a (s_hi - s_lo)) + b * height * normal, with W the stable branch
    double s_lo = 0, s_hi = 0, height = 0;
    Vec2 tangent{1, 0}, normal{0, 1};
    std::vector<Vec2> frame_pts; // dense exact samples of W over the extended range
    std::vector<double> frame_s, frame_proj;
    std::array<Vec2, 4> corners; // P(0,0), P(1,0), P(1,1), P(0,1)
    Vec2 l1, l2;                 // P(1,0) and P(0,0)
    Vec2 q1_hat, phix_q2_hat, phi_q1_hat;
    double s_q1 = 0, s_qx = 0, s_phi_q1 = 0, s_loc = 0;
    std::array<bool, 7> conditions{};

    Vec2 frame_at(double s) const
    {
        auto it = std::upper_bound(frame_s.begin(), frame_s.end(), s);
        size_t k = std::clamp<size_t>(static_cast<size_t>(it - frame_s.begin()), 1, frame_s.size() - 1) - 1;
        const double t = (s - frame_s[k]) / (frame_s[k + 1] - frame_s[k]);
        return frame_pts[k] + t * (frame_pts[k + 1] - frame_pts[k]);
    }
    Vec2 at(double a, double b) const { return frame_at(s_lo + a * (s_hi - s_lo)) + b * height * normal; }

    // Chart coordinates (a, b); empty outside the slab covered by the frame.
    std::optional<Vec2> chart(const Vec2& p) const
    {
        if (!p.allFinite()) return std::nullopt;
        const double v = p.dot(tangent);
        if (v < frame_proj.front() || v > frame_proj.back()) return std::nullopt;
        auto it = std::upper_bound(frame_proj.begin(), frame_proj.end(), v);
        size_t k = std::clamp<size_t>(static_cast<size_t>(it - frame_proj.begin()), 1, frame_proj.size() - 1) - 1;
        const double den = frame_proj[k + 1] - frame_proj[k];
        const double t = den > 0 ? (v - frame_proj[k]) / den : 0.0;
        const double s = frame_s[k] + t * (frame_s[k + 1] - frame_s[k]);
        const Vec2 w = frame_pts[k] + t * (frame_pts[k + 1] - frame_pts[k]);
        return Vec2((s - s_lo) / (s_hi - s_lo), (p - w).dot(normal) / height);
    }
    bool contains(const Vec2& p) const
    {
        auto c = chart(p);
        return c && c->x() >= 0 && c->x() <= 1 && c->y() >= 0 && c->y() <= 1;
    }
    Vec2 center() const { return 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]); }
    double radius() const
    {
        double r = 0;
        for (const auto& c : corners) r = std::max(r, (c - center()).norm());
        return r + height; // the stable side may bulge past the corners
    }
    geom::Polyline boundary(int n = 64) const
    {
        geom::Polyline out;
        for (int k = 0; k < n; ++k) out.push_back(at(static_cast<double>(k) / n, 0));
        for (int k = 0; k < n; ++k) out.push_back(at(1, static_cast<double>(k) / n));
        for (int k = 0; k < n; ++k) out.push_back(at(1 - static_cast<double>(k) / n, 1));
        for (int k = 0; k < n; ++k) out.push_back(at(0, 1 - static_cast<double>(k) / n));
        return out;
    }
};

struct StripDecomposition {
    geom::Polyline q_l, q_c, q_r; // closed polygons (first vertex not repeated)
    geom::Polyline a1, a2;        // unstable arcs across Q
    Vec2 a1_range{0, 0}, a2_range{0, 0}; // chart a-extent of each arc
};

namespace detail {

inline double curve_param_s(const ManifoldCurve& c, const Vec2& q)
{
    const auto n = geom::nearest_on_polyline(c.points, q);
    return c.s[n.seg] + n.t * (c.s[n.seg + 1] - c.s[n.seg]);
}

// Exact point of a curve at arclength s (parameter interpolated between vertices).
inline Vec2 curve_exact(const ManifoldCurve& c, double s)
{
    auto it = std::upper_bound(c.s.begin(), c.s.end(), s);
    size_t k = std::clamp<size_t>(static_cast<size_t>(it - c.s.begin()), 1, c.s.size() - 1) - 1;
    const double t = std::clamp((s - c.s[k]) / (c.s[k + 1] - c.s[k]), 0.0, 1.0);
    return c.at(c.u[k] + t * (c.u[k + 1] - c.u[k]));
}

// Arc of `curve` through the point at arclength s0 clipped to the chart square; both ends on b = 0 or 1.
inline std::optional<geom::Polyline> arc_across(const QuadPatch& q, const ManifoldCurve& curve, double s0,
                                                Vec2* a_range, std::string* why)
{
    const auto n = geom::nearest_on_polyline(curve.points, curve_exact(curve, s0));
    const size_t i0 = n.seg;
    auto inside = [&](const Vec2& p) {
        auto c = q.chart(p);
        return c && c->x() > 0 && c->x() < 1 && c->y() > -1e-7 && c->y() < 1 + 1e-7;
    };
    // walk both ways until the chart square is left
    size_t lo = i0, hi = i0 + 1;
    while (lo > 0 && inside(curve.points[lo])) --lo;
    while (hi + 1 < curve.points.size() && inside(curve.points[hi])) ++hi;
    geom::Polyline arc(curve.points.begin() + static_cast<long>(lo), curve.points.begin() + static_cast<long>(hi) + 1);
    auto ce = q.chart(arc.front()), cx = q.chart(arc.back());
    if (!ce || !cx) {
        *why = "unstable arc leaves the chart";
        return std::nullopt;
    }
    const bool enters_b = ce->y() <= 1e-7 || ce->y() >= 1 - 1e-7;
    const bool exits_b = cx->y() <= 1e-7 || cx->y() >= 1 - 1e-7;
    if (!enters_b || !exits_b || (ce->y() < 0.5) == (cx->y() < 0.5)) {
        *why = "unstable arc does not cross Q from b=0 to b=1";
        return std::nullopt;
    }
    const auto bd = q.boundary(256);
    geom::Polyline closed = bd;
    closed.push_back(bd.front());
    const auto hits = geom::polyline_intersections(arc, closed);
    int count = 0;
    for (const auto& h : hits) {
        const Vec2 da = arc[h.i + 1] - arc[h.i];
        const Vec2 db = closed[h.j + 1] - closed[h.j];
        if (geom::line_angle(da, db) <= 1e-3) {
            *why = "unstable arc meets the boundary of Q tangentially";
            return std::nullopt;
        }
        ++count;
    }
    // the entry may sit exactly on L (a homoclinic point); count it if no segment hit recorded it
    if (count < 2 && std::abs(ce->y()) <= 1e-7) ++count;
    if (count < 2 && std::abs(cx->y()) <= 1e-7) ++count;
    if (count != 2) {
        *why = "unstable arc meets the boundary of Q " + std::to_string(count) + " times";
        return std::nullopt;
    }
    double amin = 1, amax = 0;
    for (const auto& p : arc) {
        auto c = q.chart(p);
        if (!c) continue;
        if (c->y() < 0 || c->y() > 1) continue;
        amin = std::min(amin, c->x());
        amax = std::max(amax, c->x());
    }
    *a_range = Vec2(amin, amax);
    return arc;
}

inline geom::Polyline clip_to_square(const QuadPatch& q, const geom::Polyline& arc)
{
    geom::Polyline out;
    for (const auto& p : arc) {
        auto c = q.chart(p);
        if (!c) continue;
        out.push_back(q.at(c->x(), std::clamp(c->y(), 0.0, 1.0)));
    }
    return out;
}

} // namespace detail

// First meeting of the unstable branch with the local stable arc, transverse or tangential.
struct FirstContact {
    bool found = false;
    bool transverse = false;
    Vec2 q{0, 0};
    double s_unstable = 0, distance = 0, angle = 0;
};

inline FirstContact first_contact(const ManifoldCurve& wu, const geom::Polyline& ws_local, double s_unstable_min,
                                  double contact_tol = 1e-4)
{
    FirstContact fc;
    if (ws_local.size() < 2) return fc;
    const geom::SegmentGrid grid(ws_local);
    auto signed_dist = [&](const Vec2& p, double* angle_out, const Vec2* dir) -> std::optional<double> {
        const auto [d, loc] = grid.nearest(p, 1.0);
        if (!std::isfinite(d) || d > 1.0) return std::nullopt;
        const size_t j = loc.first;
        const bool end = (j == 0 && loc.second == 0.0) || (j + 2 == ws_local.size() && loc.second == 1.0);
        if (end) return std::nullopt;
        const Vec2 t = ws_local[j + 1] - ws_local[j];
        if (angle_out && dir) *angle_out = geom::line_angle(*dir, t);
        return geom::cross2(t, p - ws_local[j]) >= 0 ? d : -d;
    };
    std::optional<double> prev, prev2;
    for (size_t i = 0; i < wu.points.size(); ++i) {
        if (wu.s[i] <= s_unstable_min) continue;
        const auto d = signed_dist(wu.points[i], nullptr, nullptr);
        if (prev && d && (*prev > 0) != (*d > 0) && std::abs(*prev) < 0.1 && std::abs(*d) < 0.1) {
            const Vec2 dir = wu.points[i] - wu.points[i - 1];
            double ang = 0;
            signed_dist(wu.points[i], &ang, &dir);
            const double t = *prev / (*prev - *d);
            fc = {true, true, wu.points[i - 1] + t * dir, wu.s[i - 1] + t * (wu.s[i] - wu.s[i - 1]), 0, ang};
            return fc;
        }
        // local minimum of |distance| without a sign change: refine on the exact branch
        if (prev2 && prev && d && std::abs(*prev) <= std::abs(*prev2) && std::abs(*prev) <= std::abs(*d) &&
            std::abs(*prev) < 1e-3 && (*prev2 > 0) == (*prev > 0) && (*prev > 0) == (*d > 0)) {
            double lo = wu.u[i - 2], hi = wu.u[i];
            auto f = [&](double uu) {
                auto v = signed_dist(wu.at(uu), nullptr, nullptr);
                return v ? std::abs(*v) : std::numeric_limits<double>::infinity();
            };
            const double g = (std::sqrt(5.0) - 1) / 2;
            double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo), f1 = f(x1), f2 = f(x2);
            for (int it = 0; it < 80 && hi - lo > 1e-15; ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - g * (hi - lo);
                    f1 = f(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + g * (hi - lo);
                    f2 = f(x2);
                }
            }
            const double um = 0.5 * (lo + hi);
            const double dm = f(um);
            if (dm < contact_tol) {
                const Vec2 pm = wu.at(um);
                const Vec2 dir = wu.at(um + 1e-6) - wu.at(um - 1e-6);
                double ang = 0;
                signed_dist(pm, &ang, &dir);
                fc = {true, false, pm, wu.s[i - 1], dm, ang};
                return fc;
            }
        }
        prev2 = prev;
        prev = d;
    }
    return fc;
}

struct PatchResult {
    QuadPatch patch;
    StripDecomposition strips;
    int shrink_steps = 0;
};

inline const char* patch_condition_name(int k)
{
    static const char* names[] = {"inside R3",        "L on the stable branch", "l1 ordering", "l2 ordering",
                                  "A1 crosses Q",     "A2 crosses Q",           "inside crossing region"};
    return names[k];
}

// q1: first return of the unstable branch to the local stable arc; Phi_X(q2): the unique
// unstable crossing strictly between Phi(q1) and q1 along the stable branch.
inline PatchResult build_q_patch(const ReturnMapHandle& h, const RegionPartition& part, const ManifoldCurve& wu_minus,
                                 const ManifoldCurve& ws_minus, const std::vector<HomoclinicPoint>& homoclinics,
                                 const PatchParams& pp = {})
{
    const double s_loc = part.lengths[3];
    const HomoclinicPoint* q1 = nullptr;
    for (const auto& hp : homoclinics)
        if (hp.s_stable > 1e-6 && hp.s_stable < s_loc && (!q1 || hp.s_unstable < q1->s_unstable)) q1 = &hp;
    if (!q1) throw Error(ErrorKind::PatternViolation, "no return of the unstable branch to the local stable arc");
    const Vec2 phi_q1 = h.eval(q1->q);
    const double s_phi = detail::curve_param_s(ws_minus, phi_q1);
    std::vector<const HomoclinicPoint*> between;
    for (const auto& hp : homoclinics)
        if (hp.s_stable > s_phi && hp.s_stable < q1->s_stable && (hp.q - phi_q1).norm() > 1e-6 &&
            (hp.q - q1->q).norm() > 1e-6)
            between.push_back(&hp);
    if (between.size() != 1)
        throw Error(ErrorKind::PatternViolation, std::to_string(between.size()) +
                                                     " unstable crossings between Phi(q1) and q1 on the stable branch");
    const HomoclinicPoint& qx = *between.front();

    QuadPatch q;
    q.q1_hat = q1->q;
    q.phix_q2_hat = qx.q;
    q.phi_q1_hat = phi_q1;
    q.s_q1 = q1->s_stable;
    q.s_qx = qx.s_stable;
    q.s_phi_q1 = s_phi;
    q.s_loc = s_loc;
    double s_lo = q.s_qx - pp.lo_frac * (q.s_qx - s_phi);
    double s_hi = q.s_q1 + pp.hi_frac * (s_loc - q.s_q1);
    double height = pp.height_frac * (s_hi - s_lo);
    std::string last;
    for (int step = 0; step <= pp.max_shrink; ++step) {
        q.s_lo = s_lo;
        q.s_hi = s_hi;
        q.height = height;
        // frame: dense exact samples of the stable branch over the extended range
        const double ext = 0.5 * (s_hi - s_lo);
        const double f_lo = std::max(1e-6, s_lo - ext), f_hi = std::min(ws_minus.length(), s_hi + ext);
        q.frame_pts.clear();
        q.frame_s.clear();
        for (int k = 0; k <= pp.frame_samples; ++k) {
            const double s = f_lo + (f_hi - f_lo) * k / pp.frame_samples;
            q.frame_s.push_back(s);
            q.frame_pts.push_back(detail::curve_exact(ws_minus, s));
        }
        const Vec2 chord = q.frame_at(s_hi) - q.frame_at(s_lo);
        q.tangent = chord.normalized();
        q.frame_proj.clear();
        for (const auto& p : q.frame_pts) q.frame_proj.push_back(p.dot(q.tangent));
        // keep the monotone part of the projection around [s_lo, s_hi]
        {
            size_t k_lo = 0, k_hi = q.frame_proj.size() - 1;
            const size_t mid = q.frame_proj.size() / 2;
            for (size_t k = mid; k > 0; --k)
                if (q.frame_proj[k - 1] >= q.frame_proj[k]) {
                    k_lo = k;
                    break;
                }
            for (size_t k = mid; k + 1 < q.frame_proj.size(); ++k)
                if (q.frame_proj[k + 1] <= q.frame_proj[k]) {
                    k_hi = k;
                    break;
                }
            if (q.frame_s[k_lo] > s_lo || q.frame_s[k_hi] < s_hi) {
                last = "stable branch not monotone over the patch";
                s_lo = q.s_qx - pp.shrink * (q.s_qx - s_lo);
                s_hi = q.s_q1 + pp.shrink * (s_hi - q.s_q1);
                height *= pp.shrink;
                continue;
            }
            q.frame_pts = std::vector<Vec2>(q.frame_pts.begin() + static_cast<long>(k_lo),
                                            q.frame_pts.begin() + static_cast<long>(k_hi) + 1);
            q.frame_s = std::vector<double>(q.frame_s.begin() + static_cast<long>(k_lo),
                                            q.frame_s.begin() + static_cast<long>(k_hi) + 1);
            q.frame_proj = std::vector<double>(q.frame_proj.begin() + static_cast<long>(k_lo),
                                               q.frame_proj.begin() + static_cast<long>(k_hi) + 1);
        }
        // normal side: the one pointing into R3
        q.normal = Vec2(-q.tangent.y(), q.tangent.x());
        if (part.locate(q.at(0.5, 0.5)) != RegionId::R3) q.normal = -q.normal;
        q.corners = {q.at(0, 0), q.at(1, 0), q.at(1, 1), q.at(0, 1)};
        q.l1 = q.corners[1];
        q.l2 = q.corners[0];

        auto& c = q.conditions;
        c.fill(true);
        const auto& sys = *h.system;
        for (int i = 0; i < pp.grid; ++i)
            for (int j = 0; j < pp.grid; ++j) {
                const Vec2 p = q.at(static_cast<double>(i) / (pp.grid - 1), static_cast<double>(j) / (pp.grid - 1));
                const bool on_l = j == 0;
                const RegionId rid = part.locate(p, on_l ? 1e-6 : 1e-9); // L is exact, the arcs are polylines
                if (!(rid == RegionId::R3 || (on_l && rid == RegionId::Boundary))) c[0] = false;
                if (classify_sigma_point(sys, lift(p)) != RegionLabel::Crossing) c[6] = false;
            }
        // L on the stable branch: forward iterates approach p0
        for (int i = 0; i < pp.grid && c[1]; ++i) {
            try {
                const Vec2 p = h.iterate(q.at(static_cast<double>(i) / (pp.grid - 1), 0), 12);
                if ((p - part.p0).norm() > 1e-3) c[1] = false;
            } catch (const Error&) {
                c[1] = false;
            }
        }
        c[2] = q.s_q1 < s_hi && s_hi < s_loc;
        c[3] = s_phi < s_lo && s_lo < q.s_qx;
        StripDecomposition sd;
        std::string why1, why2;
        auto a1 = detail::arc_across(q, wu_minus, q1->s_unstable, &sd.a1_range, &why1);
        auto a2 = detail::arc_across(q, wu_minus, qx.s_unstable, &sd.a2_range, &why2);
        c[4] = a1.has_value();
        c[5] = a2.has_value();
        if (c[4] && c[5] && sd.a2_range.y() >= sd.a1_range.x()) {
            c[5] = false;
            why2 = "A2 does not lie between l2 and A1";
        }
        int failed = -1;
        for (int k = 0; k < 7; ++k)
            if (!c[k]) {
                failed = k;
                break;
            }
        if (failed < 0) {
            sd.a1 = detail::clip_to_square(q, *a1);
            sd.a2 = detail::clip_to_square(q, *a2);
            auto oriented = [&](geom::Polyline arc) {
                if (q.chart(arc.front())->y() > q.chart(arc.back())->y()) std::reverse(arc.begin(), arc.end());
                return arc; // from b = 0 to b = 1
            };
            const auto A1 = oriented(sd.a1), A2 = oriented(sd.a2);
            const int n = 64;
            auto bottom = [&](double a0, double a1v) {
                geom::Polyline out;
                for (int k = 0; k <= n; ++k) out.push_back(q.at(a0 + (a1v - a0) * k / n, 0));
                return out;
            };
            auto top = [&](double a0, double a1v) {
                geom::Polyline out;
                for (int k = 0; k <= n; ++k) out.push_back(q.at(a0 + (a1v - a0) * k / n, 1));
                return out;
            };
            auto side = [&](double a0, bool up) {
                geom::Polyline out;
                for (int k = 0; k <= n; ++k) out.push_back(q.at(a0, up ? double(k) / n : 1 - double(k) / n));
                return out;
            };
            auto append = [](geom::Polyline& dst, const geom::Polyline& src) {
                for (const auto& p : src)
                    if (dst.empty() || (dst.back() - p).norm() > 1e-14) dst.push_back(p);
            };
            auto ca = [&](const Vec2& p) { return q.chart(p)->x(); };
            // Q_L: left side, bottom to A2, up A2, top back
            append(sd.q_l, bottom(0, ca(A2.front())));
            append(sd.q_l, A2);
            append(sd.q_l, top(ca(A2.back()), 0));
            append(sd.q_l, side(0, false));
            // Q_C: between A2 and A1
            append(sd.q_c, bottom(ca(A2.front()), ca(A1.front())));
            append(sd.q_c, A1);
            append(sd.q_c, top(ca(A1.back()), ca(A2.back())));
            append(sd.q_c, geom::Polyline(A2.rbegin(), A2.rend()));
            // Q_R
            append(sd.q_r, bottom(ca(A1.front()), 1));
            append(sd.q_r, side(1, true));
            append(sd.q_r, top(1, ca(A1.back())));
            append(sd.q_r, geom::Polyline(A1.rbegin(), A1.rend()));
            for (auto* poly : {&sd.q_l, &sd.q_c, &sd.q_r})
                if ((poly->front() - poly->back()).norm() < 1e-12) poly->pop_back();
            return {q, sd, step};
        }
        last = std::string(patch_condition_name(failed));
        if (failed == 4 && !why1.empty()) last += " (" + why1 + ")";
        if (failed == 5 && !why2.empty()) last += " (" + why2 + ")";
        s_lo = q.s_qx - pp.shrink * (q.s_qx - s_lo);
        s_hi = q.s_q1 + pp.shrink * (s_hi - q.s_q1);
        height *= pp.shrink;
    }
    throw Error(ErrorKind::NoValidPatch, "last failing condition: " + last);
}

// ---------------------------------------------------------------------------
// Iterating regions

namespace detail {

// Adaptive image of an open polyline: refines the preimage until image edges are below h_max.
template <class F>
std::pair<geom::Polyline, geom::Polyline> map_polyline(const F& fn, const geom::Polyline& pre, double h_max,
                                                       size_t max_points, const Vec2& focus = Vec2::Zero(),
                                                       double focus_r = std::numeric_limits<double>::infinity())
{
    struct Node {
        Vec2 x, y;
    };
    std::vector<Node> nodes;
    for (const auto& p : pre) nodes.push_back({p, fn(p)});
    for (int pass = 0; pass < 60; ++pass) {
        std::vector<Node> out;
        bool changed = false;
        out.push_back(nodes[0]);
        for (size_t i = 0; i + 1 < nodes.size(); ++i) {
            const bool f0 = nodes[i].y.allFinite(), f1 = nodes[i + 1].y.allFinite();
            const double gap = (nodes[i + 1].x - nodes[i].x).norm();
            // escaped samples are refined only down to a coarse preimage spacing
            // image edges far from the focus disc only need to stay short relative to their distance
            bool far = f0 != f1 && gap > 1e-7;
            if (f0 && f1 && gap > 1e-14) {
                const double len = (nodes[i + 1].y - nodes[i].y).norm();
                const double dist =
                    std::min((nodes[i].y - focus).norm(), (nodes[i + 1].y - focus).norm()) - focus_r;
                far = len > h_max && len > 0.5 * dist;
            }
            if (far) {
                const Vec2 m = 0.5 * (nodes[i].x + nodes[i + 1].x);
                out.push_back({m, fn(m)});
                changed = true;
            }
            out.push_back(nodes[i + 1]);
        }
        nodes = std::move(out);
        if (nodes.size() > max_points) throw Error(ErrorKind::NotCertified, "boundary refinement exceeds point budget");
        if (!changed) break;
    }
    geom::Polyline xs, ys;
    for (const auto& n : nodes) {
        xs.push_back(n.x);
        ys.push_back(n.y);
    }
    return {xs, ys};
}

inline Vec2 checked_iterate(const ReturnMapHandle& h, Vec2 q, int n, size_t sample)
{
    const bool check = h.sliding == SlidingPolicy::Reject;
    for (int k = 0; k < std::abs(n); ++k) {
        if (check) {
            const auto lab = classify_sigma_point(*h.system, lift(q));
            if (lab == RegionLabel::StableSliding || lab == RegionLabel::UnstableSliding)
                throw Error(ErrorKind::ReachedSliding, "sample " + std::to_string(sample) + " at step " +
                                                           std::to_string(n > 0 ? k : -k) + " is " + to_string(lab));
        }
        try {
            q = n > 0 ? h.eval(q) : h.inverse(q);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::ReachedSliding)
                throw Error(ErrorKind::ReachedSliding, "sample " + std::to_string(sample) + " at step " +
                                                           std::to_string(n > 0 ? k + 1 : -(k + 1)) + ": " + e.what());
            throw;
        }
    }
    return q;
}

} // namespace detail

// Image of a closed polygon (first vertex not repeated) under Phi^n.
inline geom::Polyline iterate_patch(const ReturnMapHandle& h, const geom::Polyline& region, int n, double h_max = 1e-2,
                                    size_t max_points = 2000000)
{
    if (n == 0) return region;
    geom::Polyline closed = region;
    closed.push_back(region.front());
    size_t counter = 0;
    std::map<std::pair<double, double>, size_t> ids;
    auto fn = [&](const Vec2& x) {
        auto key = std::make_pair(x.x(), x.y());
        auto it = ids.find(key);
        size_t id = it == ids.end() ? (ids[key] = counter++) : it->second;
        return detail::checked_iterate(h, x, n, id);
    };
    auto [xs, ys] = detail::map_polyline(fn, closed, h_max, max_points);
    ys.pop_back();
    return ys;
}

// ---------------------------------------------------------------------------
// Horseshoe certificate

struct HorseshoeParams {
    int n_max = 32;
    int depth = 6;
    double cone_opening = 0.5;
    double expansion_margin = 1.05;
    double contraction_margin = 0.95;
    double strip_overshoot = 0.25; // strips extend to image b = -overshoot and 1 + overshoot
    int lines = 17;                // chart a-lines used to locate the strips
    int cone_grid_a = 11, cone_grid_b = 5;
    double image_step = 0.1;       // image refinement, in units of the patch height
};

struct CoveringStrip {
    char symbol = 'L';
    std::vector<std::array<double, 3>> profile; // (a, b_lo, b_hi) at the chart lines
    int orientation = 1;                        // +1 if the bottom maps below Q
    Vec2 image_a{0, 0};                         // chart a-extent of Delta(strip) inside Q
    double image_center_a = 0;
    geom::Polyline polygon;                     // chart boundary mapped to the plane
    geom::Polyline image;                       // Delta(boundary)

    double b_lo(double a) const { return interp(a, 1); }
    double b_hi(double a) const { return interp(a, 2); }
    double interp(double a, int col) const
    {
        size_t k = 0;
        while (k + 2 < profile.size() && profile[k + 1][0] < a) ++k;
        const double t = (a - profile[k][0]) / (profile[k + 1][0] - profile[k][0]);
        return profile[k][col] + t * (profile[k + 1][col] - profile[k][col]);
    }
};

enum class AuditLabel { Crossing, PseudoOrbit, SlidingCapture };

inline const char* to_string(AuditLabel l)
{
    switch (l) {
    case AuditLabel::Crossing: return "Crossing";
    case AuditLabel::PseudoOrbit: return "PseudoOrbit";
    case AuditLabel::SlidingCapture: return "SlidingCapture";
    }
    return "?";
}

struct AuditEntry {
    Vec2 start;
    AuditLabel label = AuditLabel::Crossing;
    int steps_done = 0;
    std::vector<RegionLabel> hits;
    double max_deviation = 0; // real-flow arrival vs map image when anchored
    std::string note;
};

struct AuditReport {
    std::vector<AuditEntry> entries;
    int crossing = 0, pseudo = 0, sliding = 0;
};

struct HorseshoeCertificate {
    int n0 = 0;
    std::array<CoveringStrip, 2> strips; // L, R
    double expansion_min = 0, contraction_max = 0;
    bool cones_ok = false;
    int depth = 0;
    std::vector<std::string> lambda_words;
    std::vector<Vec2> lambda_samples;
    std::vector<double> lambda_residuals;
    bool all_crossing = false;
    AuditReport audit;
    std::vector<std::string> diagnostics;
    std::string crossing_bound; // the all-n claim is checked up to depth only
    QuadPatch patch;
    std::shared_ptr<const ReturnMapHandle> map;
    HorseshoeParams params;

    Vec2 delta(const Vec2& x) const { return map->iterate(x, n0); }
};

namespace detail {

inline Mat2 delta_jacobian(const ReturnMapHandle& h, Vec2 x, int n)
{
    Mat2 J = Mat2::Identity();
    for (int k = 0; k < n; ++k) {
        J = jacobian_of([&h](const Vec2& y) { return h.eval(y); }, x).matrix * J;
        x = h.eval(x);
    }
    return J;
}

struct LineCrossing {
    double b_enter, b_exit; // preimage parameters of the run inside Q
    int orientation;        // +1: image b increases across the run
    double a_min, a_max;    // image chart a within Q
};

// Runs of the line {a0} x [0,1] whose Delta-image crosses Q fully in b.
template <class F>
std::vector<LineCrossing> line_crossings(const QuadPatch& q, const F& delta, double a0, double h_img)
{
    geom::Polyline pre;
    for (int k = 0; k <= 256; ++k) pre.push_back(Vec2(a0, k / 256.0));
    auto img = [&](const Vec2& ab) { return delta(q.at(ab.x(), ab.y())); };
    auto [xs, ys] = map_polyline(img, pre, h_img, 4000000, q.center(), q.radius());
    std::vector<LineCrossing> out;
    std::vector<std::optional<Vec2>> ch(ys.size());
    for (size_t i = 0; i < ys.size(); ++i) ch[i] = q.chart(ys[i]);
    auto in = [&](size_t i) {
        const auto& c = ch[i];
        return c && c->x() > 0 && c->x() < 1 && c->y() >= 0 && c->y() <= 1;
    };
    size_t i = 0;
    while (i < ys.size()) {
        if (!in(i)) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j + 1 < ys.size() && in(j + 1)) ++j;
        if (i > 0 && j + 1 < ys.size() && ch[i - 1] && ch[j + 1]) {
            const auto& cb = *ch[i - 1];
            const auto& ce = *ch[j + 1];
            const bool a_ok = cb.x() > 0 && cb.x() < 1 && ce.x() > 0 && ce.x() < 1;
            const bool up = cb.y() < 0 && ce.y() > 1, down = cb.y() > 1 && ce.y() < 0;
            if (a_ok && (up || down)) {
                LineCrossing lc{xs[i - 1].y(), xs[j + 1].y(), up ? 1 : -1, 1, 0};
                for (size_t k = i; k <= j; ++k) {
                    lc.a_min = std::min(lc.a_min, ch[k]->x());
                    lc.a_max = std::max(lc.a_max, ch[k]->x());
                }
                out.push_back(lc);
            }
        }
        i = j + 1;
    }
    return out;
}

// Preimage parameter b on the line {a0} where the image reaches chart level `level`, bracketed by [b0, b1].
template <class F>
std::optional<double> solve_level(const QuadPatch& q, const F& delta, double a0, double b0, double b1, double level,
                                  int orientation)
{
    auto val = [&](double b) -> std::optional<double> {
        auto c = q.chart(delta(q.at(a0, b)));
        if (!c) return std::nullopt;
        return (c->y() - level) * orientation;
    };
    auto f0 = val(b0), f1 = val(b1);
    if (!f0 || !f1 || (*f0 > 0) == (*f1 > 0)) return std::nullopt;
    for (int it = 0; it < 200 && std::abs(b1 - b0) > 1e-15; ++it) {
        const double m = 0.5 * (b0 + b1);
        auto fm = val(m);
        if (!fm) return std::nullopt;
        if ((*fm > 0) == (*f0 > 0)) {
            b0 = m;
            f0 = fm;
        } else {
            b1 = m;
        }
    }
    return 0.5 * (b0 + b1);
}

} // namespace detail

// Phi^n, with NaN for orbits that leave the return-map domain.
inline Vec2 escaping_iterate(const ReturnMapHandle& h, const Vec2& p, int n)
{
    try {
        return h.iterate(p, n);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ExitedDomain) throw;
        return Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
    }
}

struct CoveringCheck {
    bool ok = false;
    std::string failure;
};

// Covering relation Delta(strip) => Q, checked on the mapped strip boundary.
inline CoveringCheck verify_covering(const ReturnMapHandle& h, const QuadPatch& q, const CoveringStrip& s, int n,
                                     double h_img)
{
    CoveringCheck res;
    auto delta = [&](const Vec2& ab) { return escaping_iterate(h, q.at(ab.x(), ab.y()), n); };
    const int m = 64;
    auto edge = [&](int which) {
        geom::Polyline pre;
        for (int k = 0; k <= m; ++k) {
            const double t = static_cast<double>(k) / m;
            switch (which) {
            case 0: pre.push_back(Vec2(t, s.b_lo(t))); break;
            case 1: pre.push_back(Vec2(t, s.b_hi(t))); break;
            case 2: pre.push_back(Vec2(0, s.b_lo(0) + t * (s.b_hi(0) - s.b_lo(0)))); break;
            default: pre.push_back(Vec2(1, s.b_lo(1) + t * (s.b_hi(1) - s.b_lo(1)))); break;
            }
        }
        return detail::map_polyline(delta, pre, h_img, 4000000, q.center(), q.radius()).second;
    };
    try {
        for (int e = 0; e < 2; ++e) {
            const double want = (e == 0) == (s.orientation > 0) ? -1 : 1; // side of the image
            for (const auto& p : edge(e)) {
                auto c = q.chart(p);
                if (!c || c->x() < 0 || c->x() > 1) continue;
                if (c->y() >= 0 && c->y() <= 1) {
                    res.failure = "image of an exit edge meets Q";
                    return res;
                }
                if ((c->y() < 0 ? -1 : 1) != want) {
                    res.failure = "image of an exit edge lies on the wrong side of Q";
                    return res;
                }
            }
        }
        for (int e = 2; e < 4; ++e) {
            bool below = false, above = false;
            for (const auto& p : edge(e)) {
                auto c = q.chart(p);
                if (!c) continue;
                if (c->y() >= 0 && c->y() <= 1 && (c->x() <= 0 || c->x() >= 1)) {
                    res.failure = "image of an entry edge leaves Q through a contracting side";
                    return res;
                }
                if (c->x() > 0 && c->x() < 1) {
                    below = below || c->y() < 0;
                    above = above || c->y() > 1;
                }
            }
            if (!below || !above) {
                res.failure = "image of an entry edge does not stretch across Q";
                return res;
            }
        }
    } catch (const Error& e) {
        res.failure = e.what();
        return res;
    }
    res.ok = true;
    return res;
}

struct ConeCheck {
    double expansion_min = std::numeric_limits<double>::infinity();
    double contraction_max = 0;
    bool invariant = true;
};

inline ConeCheck check_cones(const ReturnMapHandle& h, const QuadPatch& q, const CoveringStrip& s, int n,
                             const HorseshoeParams& hp)
{
    ConeCheck cc;
    Mat2 F;
    F.col(0) = q.tangent;
    F.col(1) = q.normal;
    const double k = hp.cone_opening;
    for (int i = 0; i < hp.cone_grid_a; ++i)
        for (int j = 0; j < hp.cone_grid_b; ++j) {
            const double a = static_cast<double>(i) / (hp.cone_grid_a - 1);
            const double b = s.b_lo(a) + (s.b_hi(a) - s.b_lo(a)) * j / (hp.cone_grid_b - 1);
            const Mat2 J = F.transpose() * detail::delta_jacobian(h, q.at(a, b), n) * F;
            const Mat2 Ji = J.inverse();
            for (int d = 0; d <= 10; ++d) {
                const double c = -k + 2 * k * d / 10;
                const Vec2 vu(c, 1), vs(1, c);
                const Vec2 wu = J * vu, ws = Ji * vs;
                if (std::abs(wu.x()) > k * std::abs(wu.y()) || std::abs(ws.y()) > k * std::abs(ws.x()))
                    cc.invariant = false;
                cc.expansion_min = std::min(cc.expansion_min, wu.norm() / vu.norm());
                cc.contraction_max = std::max(cc.contraction_max, vs.norm() / ws.norm());
            }
        }
    return cc;
}

struct PeriodicPoint {
    std::string word;
    std::vector<Vec2> orbit; // x_k, Delta(x_k) = x_{k+1}
    double residual = 0;       // multiple-shooting residual
    bool newton_ok = false;
    std::array<Vec2, 2> enclosure{}; // chart box of the initial guess when Newton fails
};

inline void validate_word(const std::string& w)
{
    if (w.empty()) throw Error(ErrorKind::ConfigError, "empty symbol word");
    for (char c : w)
        if (c != 'L' && c != 'R') throw Error(ErrorKind::ConfigError, "symbols must be L or R");
}

inline PeriodicPoint symbolic_periodic_point(const HorseshoeCertificate& cert, const std::string& word)
{
    validate_word(word);
    const int n = static_cast<int>(word.size());
    const auto& q = cert.patch;
    auto strip = [&](char c) -> const CoveringStrip& { return cert.strips[c == 'L' ? 0 : 1]; };
    std::vector<Vec2> x(static_cast<size_t>(n));
    PeriodicPoint pt;
    pt.word = word;
    for (int k = 0; k < n; ++k) {
        const CoveringStrip& prev = strip(word[static_cast<size_t>((k + n - 1) % n)]);
        const CoveringStrip& cur = strip(word[static_cast<size_t>(k)]);
        const double a = prev.image_center_a;
        x[static_cast<size_t>(k)] = q.at(a, 0.5 * (cur.b_lo(a) + cur.b_hi(a)));
        if (k == 0) pt.enclosure = {Vec2(prev.image_a.x(), cur.b_lo(a)), Vec2(prev.image_a.y(), cur.b_hi(a))};
    }
    const auto& h = *cert.map;
    auto residual = [&](const std::vector<Vec2>& xs, Eigen::VectorXd* F) {
        double r = 0;
        for (int k = 0; k < n; ++k) {
            const Vec2 d = cert.delta(xs[static_cast<size_t>(k)]) - xs[static_cast<size_t>((k + 1) % n)];
            if (F) F->segment(2 * k, 2) = d;
            r = std::max(r, d.cwiseAbs().maxCoeff());
        }
        return r;
    };
    try {
        for (int it = 0; it < 40; ++it) {
            Eigen::VectorXd F(2 * n);
            const double r = residual(x, &F);
            pt.residual = r;
            if (r < 1e-13) break;
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
            for (int k = 0; k < n; ++k) {
                J.block(2 * k, 2 * k, 2, 2) = detail::delta_jacobian(h, x[static_cast<size_t>(k)], cert.n0);
                J.block(2 * k, 2 * ((k + 1) % n), 2, 2) -= Mat2::Identity();
            }
            const Eigen::VectorXd dx = J.fullPivLu().solve(-F);
            double step = 1;
            for (; step > 1e-6; step /= 2) {
                std::vector<Vec2> y = x;
                for (int k = 0; k < n; ++k) y[static_cast<size_t>(k)] += step * dx.segment(2 * k, 2);
                double ry;
                try {
                    ry = residual(y, nullptr);
                } catch (const Error&) {
                    continue;
                }
                if (ry < r || step < 1e-3) {
                    x = y;
                    break;
                }
            }
        }
        pt.residual = residual(x, nullptr);
    } catch (const Error& e) {
        throw Error(ErrorKind::NewtonDivergence, e.what());
    }
    pt.orbit = x;
    pt.newton_ok = pt.residual < 1e-8;
    for (int k = 0; k < n && pt.newton_ok; ++k) {
        auto c = q.chart(x[static_cast<size_t>(k)]);
        const CoveringStrip& s = strip(word[static_cast<size_t>(k)]);
        if (!c || c->x() < 0 || c->x() > 1 || c->y() < s.b_lo(c->x()) - 1e-9 || c->y() > s.b_hi(c->x()) + 1e-9)
            pt.newton_ok = false;
    }
    if (!pt.newton_ok)
        throw Error(ErrorKind::NewtonDivergence,
                    "no periodic point for word " + word + " (enclosure a in [" + std::to_string(pt.enclosure[0].x()) +
                        ", " + std::to_string(pt.enclosure[1].x()) + "], b in [" +
                        std::to_string(pt.enclosure[0].y()) + ", " + std::to_string(pt.enclosure[1].y()) + "])");
    return pt;
}

// Follows the flow orbit through each point, one return at a time. With an anchor map the
// next return starts from the map image, so long itineraries stay on the map orbit.
inline AuditReport orbit_crossing_audit(const PiecewiseSystem& z, const std::vector<Vec2>& points, int steps,
                                        Order order, const EventIntegratorConfig& cfg = {},
                                        const ReturnMapHandle* anchor = nullptr)
{
    AuditReport rep;
    const bool inv = steps < 0;
    const bool upper_first = (order == Order::LowerAfterUpper) != inv;
    for (const auto& p : points) {
        AuditEntry e;
        e.start = p;
        Vec2 cur = p;
        std::optional<Direction> orient;
        bool done = false;
        for (int k = 0; k < std::abs(steps) && !done; ++k) {
            Vec3 q = lift(cur);
            Side side = upper_first ? Side::Upper : Side::Lower;
            for (int leg = 0; leg < 2 && !done; ++leg) {
                const auto lab = classify_sigma_point(z, q);
                e.hits.push_back(lab);
                const bool sliding = lab == RegionLabel::StableSliding || lab == RegionLabel::UnstableSliding;
                if (lab != RegionLabel::Crossing) {
                    const bool at_start = k == 0 && leg == 0;
                    e.label = sliding && !at_start ? AuditLabel::SlidingCapture : AuditLabel::PseudoOrbit;
                    e.note = std::string("Sigma hit is ") + to_string(lab);
                    done = true;
                    break;
                }
                try {
                    const Direction d = departure_direction(z, side, q);
                    if (orient && d != *orient) {
                        e.label = AuditLabel::PseudoOrbit;
                        e.note = "arc concatenated against the time orientation";
                        done = true;
                        break;
                    }
                    orient = d;
                    q = follow_leg(z, side, q, d, {}, cfg).p;
                } catch (const Error& err) {
                    e.label = AuditLabel::PseudoOrbit;
                    e.note = err.what();
                    done = true;
                    break;
                }
                side = side == Side::Upper ? Side::Lower : Side::Upper;
            }
            if (done) break;
            if (anchor) {
                try {
                    const Vec2 img = inv ? anchor->inverse(cur) : anchor->eval(cur);
                    e.max_deviation = std::max(e.max_deviation, (img - drop(q)).norm());
                    cur = img;
                } catch (const Error& err) {
                    e.label = AuditLabel::PseudoOrbit;
                    e.note = err.what();
                    break;
                }
            } else {
                cur = drop(q);
            }
            e.steps_done = k + 1;
        }
        if (!done && e.label == AuditLabel::Crossing) {
            const auto lab = classify_sigma_point(z, lift(cur));
            e.hits.push_back(lab);
            if (lab != RegionLabel::Crossing) {
                const bool sliding = lab == RegionLabel::StableSliding || lab == RegionLabel::UnstableSliding;
                e.label = sliding ? AuditLabel::SlidingCapture : AuditLabel::PseudoOrbit;
                e.note = std::string("final Sigma hit is ") + to_string(lab);
            }
        }
        switch (e.label) {
        case AuditLabel::Crossing: ++rep.crossing; break;
        case AuditLabel::PseudoOrbit: ++rep.pseudo; break;
        case AuditLabel::SlidingCapture: ++rep.sliding; break;
        }
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

// One period of a symbolic periodic orbit, audited segment by segment from the shooting nodes.
inline AuditEntry audit_periodic_orbit(const PiecewiseSystem& z, const PeriodicPoint& pt, int n0, Order order,
                                       const EventIntegratorConfig& cfg = {}, const ReturnMapHandle* anchor = nullptr)
{
    const auto seg = orbit_crossing_audit(z, pt.orbit, n0, order, cfg, anchor);
    AuditEntry e;
    e.start = pt.orbit.front();
    for (const auto& s : seg.entries) {
        e.hits.insert(e.hits.end(), s.hits.begin(), s.hits.end());
        e.max_deviation = std::max(e.max_deviation, s.max_deviation);
        e.steps_done += s.steps_done;
        if (e.label == AuditLabel::Crossing && s.label != AuditLabel::Crossing) {
            // only the very first node is the starting point of the orbit
            e.label = &s == &seg.entries.front() || s.label == AuditLabel::PseudoOrbit ? s.label
                                                                                         : AuditLabel::SlidingCapture;
            e.note = s.note;
        }
    }
    return e;
}

inline std::vector<std::string> all_words(int n)
{
    std::vector<std::string> out;
    for (int m = 0; m < (1 << n); ++m) {
        std::string w;
        for (int k = n - 1; k >= 0; --k) w.push_back((m >> k) & 1 ? 'R' : 'L');
        out.push_back(w);
    }
    return out;
}

inline HorseshoeCertificate certify_horseshoe(const ReturnMapHandle& h, const QuadPatch& q,
                                              const StripDecomposition& sd, const HorseshoeParams& hp = {},
                                              const EventIntegratorConfig& cfg = {})
{
    HorseshoeCertificate cert;
    cert.patch = q;
    cert.params = hp;
    cert.map = std::make_shared<const ReturnMapHandle>(h);
    const double h_img = hp.image_step * q.height;
    const double a2c = 0.5 * (sd.a2_range.x() + sd.a2_range.y());
    const double a1c = 0.5 * (sd.a1_range.x() + sd.a1_range.y());
    for (int n = 1; n <= hp.n_max; ++n) {
        auto delta = [&](const Vec2& p) { return escaping_iterate(h, p, n); };
        std::string diag = "N=" + std::to_string(n) + ": ";
        // locate the crossing runs on each chart line
        std::vector<std::vector<detail::LineCrossing>> runs;
        bool consistent = true;
        try {
            for (int j = 0; j < hp.lines; ++j) {
                const double a0 = static_cast<double>(j) / (hp.lines - 1);
                runs.push_back(detail::line_crossings(q, delta, a0, h_img));
                if (runs.back().size() != 2) consistent = false;
            }
        } catch (const Error& e) {
            cert.diagnostics.push_back(diag + e.what());
            continue;
        }
        if (!consistent) {
            std::string counts;
            for (const auto& r : runs) counts += std::to_string(r.size()) + " ";
            cert.diagnostics.push_back(diag + "full crossings per chart line: " + counts);
            continue;
        }
        std::array<CoveringStrip, 2> strips;
        bool built = true;
        for (int k = 0; k < 2 && built; ++k) {
            CoveringStrip& s = strips[static_cast<size_t>(k)];
            s.orientation = runs[0][static_cast<size_t>(k)].orientation;
            s.image_a = Vec2(1, 0);
            for (int j = 0; j < hp.lines && built; ++j) {
                const auto& lc = runs[static_cast<size_t>(j)][static_cast<size_t>(k)];
                const double a0 = static_cast<double>(j) / (hp.lines - 1);
                if (lc.orientation != s.orientation) built = false;
                s.image_a = Vec2(std::min(s.image_a.x(), lc.a_min), std::max(s.image_a.y(), lc.a_max));
                const double lo_level = s.orientation > 0 ? -hp.strip_overshoot : 1 + hp.strip_overshoot;
                const double hi_level = s.orientation > 0 ? 1 + hp.strip_overshoot : -hp.strip_overshoot;
                // bracket outward from the run
                const double w = lc.b_exit - lc.b_enter;
                std::optional<double> bl, bh;
                for (double ext = w; ext < 1 && !bl; ext *= 2)
                    bl = detail::solve_level(q, delta, a0, lc.b_enter - ext, lc.b_exit, lo_level, s.orientation);
                for (double ext = w; ext < 1 && !bh; ext *= 2)
                    bh = detail::solve_level(q, delta, a0, lc.b_enter, lc.b_exit + ext, hi_level, s.orientation);
                if (!bl || !bh) {
                    built = false;
                    break;
                }
                s.profile.push_back({a0, std::min(*bl, *bh), std::max(*bl, *bh)});
            }
            s.image_center_a = 0.5 * (s.image_a.x() + s.image_a.y());
        }
        if (!built) {
            cert.diagnostics.push_back(diag + "strip boundaries could not be bracketed");
            continue;
        }
        // symbol L: image next to A2
        if (std::abs(strips[0].image_center_a - a2c) > std::abs(strips[1].image_center_a - a2c))
            std::swap(strips[0], strips[1]);
        if (std::abs(strips[0].image_center_a - a2c) > std::abs(strips[0].image_center_a - a1c)) {
            cert.diagnostics.push_back(diag + "both strip images lie next to the same unstable arc");
            continue;
        }
        strips[0].symbol = 'L';
        strips[1].symbol = 'R';
        bool cover_ok = true;
        for (auto& s : strips) {
            const auto c1 = verify_covering(h, q, s, n, h_img);
            const auto c2 = c1.ok ? verify_covering(h, q, s, n, 0.5 * h_img) : c1;
            if (!c2.ok) {
                cert.diagnostics.push_back(diag + "strip " + s.symbol + ": " + c2.failure);
                cover_ok = false;
                break;
            }
        }
        if (!cover_ok) continue;
        ConeCheck total;
        try {
            for (const auto& s : strips) {
                const auto cc = check_cones(h, q, s, n, hp);
                total.invariant = total.invariant && cc.invariant;
                total.expansion_min = std::min(total.expansion_min, cc.expansion_min);
                total.contraction_max = std::max(total.contraction_max, cc.contraction_max);
            }
        } catch (const Error& e) {
            cert.diagnostics.push_back(diag + "cone sampling failed: " + e.what());
            continue;
        }
        if (!total.invariant || total.expansion_min < hp.expansion_margin ||
            total.contraction_max > hp.contraction_margin) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "cone condition fails (invariant %d, expansion %.6g, contraction %.6g)",
                          total.invariant ? 1 : 0, total.expansion_min, total.contraction_max);
            cert.diagnostics.push_back(diag + buf);
            continue;
        }
        // certified at this N
        cert.n0 = n;
        cert.expansion_min = total.expansion_min;
        cert.contraction_max = total.contraction_max;
        cert.cones_ok = true;
        for (auto& s : strips) {
            geom::Polyline chart_bd;
            const int m = 64;
            for (int k = 0; k <= m; ++k) chart_bd.push_back(Vec2(double(k) / m, s.b_lo(double(k) / m)));
            for (int k = m; k >= 0; --k) chart_bd.push_back(Vec2(double(k) / m, s.b_hi(double(k) / m)));
            for (const auto& ab : chart_bd) s.polygon.push_back(q.at(ab.x(), ab.y()));
            for (const auto& ab : chart_bd) s.image.push_back(delta(q.at(ab.x(), ab.y())));
        }
        cert.strips = strips;
        break;
    }
    if (cert.n0 == 0) {
        std::string msg = "no covering relations up to N_max = " + std::to_string(hp.n_max);
        for (const auto& d : cert.diagnostics) msg += "; " + d;
        throw Error(ErrorKind::NotCertified, msg);
    }
    // Lambda at depth d: periodic points of all words of length d
    cert.depth = hp.depth;
    for (const auto& w : all_words(hp.depth)) {
        const auto pt = symbolic_periodic_point(cert, w);
        cert.lambda_words.push_back(w);
        cert.lambda_samples.push_back(pt.orbit[0]);
        cert.lambda_residuals.push_back(pt.residual);
        auto e = audit_periodic_orbit(*h.system, pt, cert.n0, h.order, cfg, &h);
        switch (e.label) {
        case AuditLabel::Crossing: ++cert.audit.crossing; break;
        case AuditLabel::PseudoOrbit: ++cert.audit.pseudo; break;
        case AuditLabel::SlidingCapture: ++cert.audit.sliding; break;
        }
        cert.audit.entries.push_back(std::move(e));
    }
    cert.all_crossing = cert.audit.crossing == static_cast<int>(cert.lambda_samples.size());
    cert.crossing_bound = "crossing checked over one period (" + std::to_string(cert.n0 * hp.depth) +
                          " returns) of each depth-" + std::to_string(hp.depth) +
                          " periodic sample; non-periodic points of the invariant set are not sampled";
    return cert;
}

struct HorseshoePipelineParams {
    GrowthParams growth;
    double unstable_length = 100; // arclength grown on the unstable "-" branch
    double stable_length = 12;
    std::array<double, 4> arc_cuts{2.0, 2.0, 3.2, 3.2}; // partition arcs u+, u-, s+, s-
    double theta_min = 1e-3;
    PatchParams patch;
    HorseshoeParams horseshoe;
};

struct HorseshoeRun {
    std::string stage; // last stage reached
    bool certified = false;
    ErrorKind failure = ErrorKind::NotCertified;
    std::string message;
    std::array<ManifoldCurve, 4> branches;
    std::optional<RegionPartition> partition;
    std::vector<HomoclinicPoint> homoclinics;
    FirstContact contact;
    std::optional<PatchResult> patch;
    std::optional<HorseshoeCertificate> certificate;
};

// Manifolds, partition, homoclinic pattern, patch and certificate for one saddle.
// A tangential first return ends the run as NotCertified: no covering relation passes through it.
inline HorseshoeRun run_horseshoe(const ReturnMapHandle& h, const TSingularityReport& r,
                                  const HorseshoePipelineParams& pp = {})
{
    HorseshoeRun run;
    auto fail = [&](ErrorKind k, const std::string& msg) {
        run.failure = k;
        run.message = msg;
        return run;
    };
    try {
        run.stage = "manifolds";
        const std::array<Branch, 4> order{Branch::UnstablePlus, Branch::UnstableMinus, Branch::StablePlus,
                                          Branch::StableMinus};
        for (int k = 0; k < 4; ++k) {
            double len = pp.arc_cuts[static_cast<size_t>(k)] * 1.5;
            if (k == 1) len = std::max(len, pp.unstable_length);
            if (k == 3) len = std::max(len, pp.stable_length);
            run.branches[static_cast<size_t>(k)] = grow_manifold(h, r, order[static_cast<size_t>(k)], len, pp.growth);
        }
        run.stage = "partition";
        run.partition = build_region_partition(
            {&run.branches[0], &run.branches[1], &run.branches[2], &run.branches[3]}, pp.arc_cuts);
        run.stage = "homoclinics";
        const auto& wu = run.branches[1];
        const auto& ws = run.branches[3];
        run.homoclinics = find_homoclinic_points(wu, ws);
        run.contact = first_contact(wu, run.partition->arcs[3], pp.arc_cuts[1]);
        if (!run.contact.found)
            return fail(ErrorKind::NotCertified, "unstable branch never returns to the local stable arc");
        if (!run.contact.transverse || run.contact.angle < pp.theta_min) {
            char buf[200];
            std::snprintf(buf, sizeof buf,
                          "first return of the unstable branch is tangential at (%.9g, %.9g): distance %.3g, "
                          "angle %.3g",
                          run.contact.q.x(), run.contact.q.y(), run.contact.distance, run.contact.angle);
            return fail(ErrorKind::NotCertified, buf);
        }
        run.stage = "patch";
        run.patch = build_q_patch(h, *run.partition, wu, ws, run.homoclinics, pp.patch);
        run.stage = "certify";
        run.certificate = certify_horseshoe(h, run.patch->patch, run.patch->strips, pp.horseshoe, h.cfg);
        run.certified = true;
        run.stage = "done";
    } catch (const Error& e) {
        return fail(e.kind(), e.what());
    }
    return run;
}

} // namespace tchain
