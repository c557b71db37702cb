#pragma once

#include "geometry.hpp"
#include "tsing.hpp"

#include <map>
#include <set>

namespace tchain {

struct GrowthParams {
    double delta0 = 1e-3;
    int m0 = 32;
    double h_max = 1e-2;
    double h_min = 1e-4;
    int max_generations = 60;
    size_t max_points = 400000;
};

struct ManifoldCurve {
    Branch branch = Branch::UnstablePlus;
    std::vector<Vec2> points;
    std::vector<double> s; // arclength
    std::vector<double> u; // generation + fundamental-domain parameter
    int generations = 0;
    bool truncated = false;
    std::string truncation;

    // Exact resampling data.
    std::shared_ptr<const ReturnMapHandle> map;
    Vec2 fixed{0, 0};
    Vec2 q0{0, 0}, q1{0, 0};
    double growth = 1;
    int period = 1;

    bool forward() const { return is_unstable(branch); }

    Vec2 seed(double sigma) const
    {
        return q0 + (q1 - q0) * ((std::pow(growth, sigma) - 1) / (growth - 1));
    }
    // Point of generation floor(uu) at fundamental-domain parameter frac(uu).
    Vec2 at(double uu) const
    {
        int g = static_cast<int>(std::floor(uu));
        double sg = uu - g;
        if (g < 0) {
            g = 0;
            sg = 0;
        }
        const Vec2 p = seed(sg);
        return map->iterate(p, (forward() ? 1 : -1) * g * period);
    }
    double length() const { return s.empty() ? 0.0 : s.back(); }
};

inline ManifoldCurve grow_manifold(const ReturnMapHandle& h, const TSingularityReport& r, Branch branch,
                                   double max_arclength, const GrowthParams& gp = {})
{
    if (!r.stable) throw Error(ErrorKind::NotTSingularity, "T-singularity is not stable");
    ManifoldCurve c;
    c.branch = branch;
    c.map = std::make_shared<const ReturnMapHandle>(h);
    c.fixed = drop(r.location);
    const bool fwd = is_unstable(branch);
    const double lam = fwd ? r.lambda_plus : r.lambda_minus;
    c.period = lam > 0 ? 1 : 2;
    c.growth = fwd ? std::pow(std::abs(lam), c.period) : std::pow(1.0 / std::abs(lam), c.period);
    c.q0 = c.fixed + gp.delta0 * branch_direction(r, branch);
    c.q1 = h.iterate(c.q0, (fwd ? 1 : -1) * c.period);
    const int step = (fwd ? 1 : -1) * c.period;

    struct Node {
        double sigma;
        Vec2 p;
    };
    std::vector<Node> cur;
    for (int k = 0; k < gp.m0; ++k) {
        const double sg = static_cast<double>(k) / (gp.m0 - 1);
        cur.push_back({sg, c.seed(sg)});
    }
    auto emit = [&](const std::vector<Node>& gen, int g, bool skip_first) {
        for (size_t i = skip_first ? 1 : 0; i < gen.size(); ++i) {
            const Vec2& p = gen[i].p;
            if (!c.points.empty()) {
                const double d = (p - c.points.back()).norm();
                const bool last = i + 1 == gen.size();
                if (d < gp.h_min && !last && c.points.size() > 1) continue;
                c.s.push_back(c.s.back() + d);
            } else {
                c.s.push_back(0.0);
            }
            c.points.push_back(p);
            c.u.push_back(g + gen[i].sigma);
        }
    };
    // refine one generation so consecutive images are at most h_max apart
    auto refine = [&](std::vector<Node>& gen, int g) -> bool {
        bool ok = true;
        for (int pass = 0; pass < 60; ++pass) {
            std::vector<Node> out;
            bool changed = false;
            out.push_back(gen[0]);
            for (size_t i = 0; i + 1 < gen.size(); ++i) {
                const Node& a = gen[i];
                const Node& b = gen[i + 1];
                if ((b.p - a.p).norm() > gp.h_max && b.sigma - a.sigma > 1e-14) {
                    const double sm = 0.5 * (a.sigma + b.sigma);
                    try {
                        out.push_back({sm, h.iterate(c.seed(sm), g * step)});
                        changed = true;
                    } catch (const Error& e) {
                        c.truncated = true;
                        c.truncation = to_string(e.kind());
                        gen = std::move(out);
                        return false;
                    }
                }
                out.push_back(b);
                if (out.size() > gp.max_points) {
                    c.truncated = true;
                    c.truncation = "max_points";
                    gen = out;
                    return false;
                }
            }
            gen = std::move(out);
            if (!changed) break;
        }
        return ok;
    };
    bool ok = refine(cur, 0);
    emit(cur, 0, false);
    c.generations = 0;
    for (int g = 1; ok && g <= gp.max_generations && c.length() < max_arclength; ++g) {
        std::vector<Node> next;
        next.reserve(cur.size());
        for (const auto& n : cur) {
            try {
                next.push_back({n.sigma, h.iterate(n.p, step)});
            } catch (const Error& e) {
                c.truncated = true;
                c.truncation = to_string(e.kind());
                ok = false;
                break;
            }
        }
        if (next.size() < 2) break;
        if (ok) ok = refine(next, g);
        emit(next, g, true);
        c.generations = g;
        cur = std::move(next);
        if (c.points.size() > gp.max_points) {
            c.truncated = true;
            c.truncation = "max_points";
            break;
        }
    }
    if (max_arclength > 0 && c.length() > max_arclength) {
        size_t k = 0;
        while (k < c.s.size() && c.s[k] <= max_arclength) ++k;
        k = std::min(k + 1, c.s.size());
        c.points.resize(k);
        c.s.resize(k);
        c.u.resize(k);
    }
    return c;
}

// max over vertices of the distance from their image (one period) to the curve;
// vertices of the last generation are skipped since their images lie beyond the end.
inline double invariance_residual(const ManifoldCurve& c)
{
    if (c.points.size() < 2) return 0;
    const geom::SegmentGrid grid(c.points);
    double worst = 0;
    const double cut = c.u.back() - 1;
    for (size_t i = 0; i < c.points.size(); ++i) {
        if (c.u[i] > cut) continue;
        Vec2 img;
        try {
            img = c.map->iterate(c.points[i], (c.forward() ? 1 : -1) * c.period);
        } catch (const Error&) {
            continue;
        }
        worst = std::max(worst, grid.nearest(img).first);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Circle traces

struct TraceParams {
    double delta0 = 1e-3;
    double spacing = 1e-3;
    int n0 = 64;
    size_t max_points = 200000;
};

struct TracePoint {
    double th = 0, th_hi = 0;
    Vec3 p;
    int key = 0, key_hi = 0; // number of Sigma crossings before the section; corners carry both sides
    bool corner = false;
};

using TraceEval = std::function<std::pair<Vec3, int>(double)>;

struct CircleTrace {
    Section section;
    std::vector<Vec3> points; // closed: front() == back()
    std::vector<double> params;
    std::vector<int> keys;
    std::vector<int> tags; // +1 upper arc, -1 lower arc, 0 corner
    std::vector<size_t> corners;
    TraceEval resample; // may be empty for deserialized traces

    geom::Polyline planar() const
    {
        auto [u, w] = geom::plane_basis(section.plane.normal);
        geom::Polyline out;
        out.reserve(points.size());
        for (const auto& p : points) out.emplace_back(p.dot(u), p.dot(w));
        return out;
    }
};

namespace detail {

inline std::vector<TracePoint> adaptive_trace(const TraceEval& eval, double spacing, int n0, size_t max_points)
{
    std::vector<TracePoint> pts;
    for (int k = 0; k <= n0; ++k) {
        const double th = static_cast<double>(k) / n0;
        auto [p, key] = eval(th);
        pts.push_back({th, th, p, key, key, false});
    }
    // turning angle at vertex i; kinks inside a smooth arc (grazes of an inner switching
    // surface) are resolved by refining the segments next to sharp turns
    auto turn = [&pts](size_t i) {
        if (i == 0 || i + 1 >= pts.size()) return 0.0;
        const Vec3 u = pts[i].p - pts[i - 1].p, w = pts[i + 1].p - pts[i].p;
        const double nu = u.norm(), nw = w.norm();
        if (nu == 0 || nw == 0) return 0.0;
        return std::acos(std::clamp(u.dot(w) / (nu * nw), -1.0, 1.0));
    };
    const double kink = 0.05, min_len = spacing * 1e-7;
    for (int pass = 0; pass < 200; ++pass) {
        bool changed = false;
        std::vector<TracePoint> out;
        out.push_back(pts[0]);
        std::vector<double> turns(pts.size());
        for (size_t i = 0; i < pts.size(); ++i) turns[i] = turn(i);
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            const TracePoint& a = pts[i];
            const TracePoint& b = pts[i + 1];
            const double len = (b.p - a.p).norm();
            const bool sharp = (turns[i] > kink && !a.corner) || (turns[i + 1] > kink && !b.corner);
            const int ka = a.key_hi, kb = b.key;
            if (ka != kb) {
                double lo = a.th_hi, hi = b.th;
                Vec3 plo = a.p, phi = b.p;
                int khi = kb;
                while (hi - lo > 1e-13) {
                    const double mid = 0.5 * (lo + hi);
                    auto [pm, km] = eval(mid);
                    if (km == ka) {
                        lo = mid;
                        plo = pm;
                    } else {
                        hi = mid;
                        phi = pm;
                        khi = km;
                    }
                }
                TracePoint c{lo, hi, 0.5 * (plo + phi), ka, khi, true};
                out.push_back(c);
                changed = true;
            } else if ((len > spacing || (sharp && len > min_len)) && b.th - a.th_hi > 1e-13) {
                const double mid = 0.5 * (a.th_hi + b.th);
                auto [pm, km] = eval(mid);
                out.push_back({mid, mid, pm, km, km, false});
                changed = true;
            }
            out.push_back(b);
        }
        pts = std::move(out);
        if (pts.size() > max_points) throw Error(ErrorKind::NotTransverse, "trace refinement does not converge");
        if (!changed) break;
    }
    return pts;
}

inline CircleTrace assemble(const Section& sec, const std::vector<TracePoint>& pts, const ScalarField& f,
                            TraceEval resample)
{
    CircleTrace t;
    t.section = sec;
    for (const auto& q : pts) {
        t.points.push_back(q.p);
        t.params.push_back(q.th);
        t.keys.push_back(q.key);
        if (q.corner) t.corners.push_back(t.points.size() - 1);
        t.tags.push_back(q.corner ? 0 : (f(q.p) > 0 ? 1 : -1));
    }
    t.points.back() = t.points.front();
    t.resample = std::move(resample);
    return t;
}

} // namespace detail

// Seed fundamental domain of a cone branch and the time direction of its orbits.
struct ConeSeeds {
    Vec2 q0, q1;
    double growth = 1;
    Direction dir = Direction::Forward;
    Vec2 at(double th) const { return q0 + (q1 - q0) * ((std::pow(growth, th) - 1) / (growth - 1)); }
};

inline ConeSeeds cone_seeds(const PiecewiseSystem& z, const TSingularityReport& r, const ReturnMapHandle& h,
                            bool unstable, double delta0)
{
    const Vec2 v = unstable ? r.v_plus : r.v_minus;
    const Direction want = unstable ? Direction::Forward : Direction::Backward;
    const Side s1 = h.first_side(!unstable);
    const double lam = unstable ? r.lambda_plus : r.lambda_minus;
    if (lam <= 0) throw Error(ErrorKind::NotTransverse, "negative multiplier: cone seeds need a positive eigenvalue");
    for (double sg : {1.0, -1.0}) {
        const Vec2 q = drop(r.location) + sg * delta0 * v;
        Direction d;
        try {
            d = departure_direction(z, s1, lift(q));
        } catch (const Error&) {
            continue;
        }
        if (d != want) continue;
        ConeSeeds cs;
        cs.q0 = q;
        cs.q1 = h.iterate(q, unstable ? 1 : -1);
        cs.growth = unstable ? lam : 1.0 / lam;
        cs.dir = want;
        return cs;
    }
    throw Error(ErrorKind::NotTransverse, "no eigen-ray departs into the first half-space");
}

inline CircleTrace trace_cone_circle(const PiecewiseSystem& z, const TSingularityReport& r, const ReturnMapHandle& h,
                                     bool unstable, const Section& section, const EventIntegratorConfig& cfg,
                                     const TraceParams& tp = {})
{
    if (std::abs(section.plane.eval(r.location)) <= 1e-9 * section.plane.normal.norm())
        throw Error(ErrorKind::NotTransverse, "section passes through the cone vertex");
    const ConeSeeds seeds = cone_seeds(z, r, h, unstable, tp.delta0);
    const Section sigma(Plane{Vec3(0, 0, 1), 0});
    auto zsys = std::make_shared<const PiecewiseSystem>(z);
    TraceEval eval = [zsys, seeds, section, sigma, cfg](double th) {
        auto res = section_map_full(*zsys, sigma, section, lift(seeds.at(th)), cfg, seeds.dir);
        return std::make_pair(res.p, static_cast<int>(res.sigma_hits.size()));
    };
    auto pts = detail::adaptive_trace(eval, tp.spacing, tp.n0, tp.max_points);
    return detail::assemble(section, pts, z.switching, eval);
}

inline CircleTrace propagate_circle(const PiecewiseSystem& z, const CircleTrace& src, const Section& target,
                                    const EventIntegratorConfig& cfg, const TraceParams& tp = {})
{
    if (src.section == target) return src;
    if (!src.resample) throw Error(ErrorKind::ConfigError, "source trace cannot be resampled");
    auto zsys = std::make_shared<const PiecewiseSystem>(z);
    const Section from = src.section;
    const TraceEval base = src.resample;
    TraceEval eval = [zsys, base, from, target, cfg](double th) {
        auto [p, k] = base(th);
        SectionMapResult res;
        try {
            res = section_map_full(*zsys, from, target, p, cfg, Direction::Forward);
        } catch (const Error& e) {
            char buf[96];
            std::snprintf(buf, sizeof buf, " (source parameter %.17g)", th);
            throw Error(e.kind(), e.what() + std::string(buf));
        }
        return std::make_pair(res.p, k + static_cast<int>(res.sigma_hits.size()));
    };
    auto pts = detail::adaptive_trace(eval, tp.spacing, tp.n0, tp.max_points);
    return detail::assemble(target, pts, z.switching, eval);
}

// ---------------------------------------------------------------------------
// Chain classification

enum class ChainKind { NoChain, PinchedTorus, TransverseChains };

inline const char* to_string(ChainKind k)
{
    switch (k) {
    case ChainKind::NoChain: return "NoChain";
    case ChainKind::PinchedTorus: return "PinchedTorus";
    case ChainKind::TransverseChains: return "TransverseChains";
    }
    return "?";
}

struct ChainIntersection {
    Vec3 p;
    double angle = 0;
    double param_a = 0, param_b = 0;
};

struct ChainClassification {
    ChainKind kind = ChainKind::NoChain;
    int K = 0;
    std::vector<ChainIntersection> points;
    double min_distance = 0;
    double hausdorff = 0; // capped: values above d_sep are lower bounds only
};

struct ChainThresholds {
    double d_sep = 1e-3;
    double d_coincide = 1e-6;
    double theta_min = 1e-3;
};

inline ChainClassification classify_chain(const CircleTrace& chat_u, const CircleTrace& c_s,
                                          const ChainThresholds& th = {}, const ScalarField* f = nullptr)
{
    const Plane& pa = chat_u.section.plane;
    const Plane& pb = c_s.section.plane;
    if ((pa.normal.normalized() - pb.normal.normalized()).norm() > 1e-12 ||
        std::abs(pa.offset / pa.normal.norm() - pb.offset / pb.normal.norm()) > 1e-12)
        throw Error(ErrorKind::ConfigError, "traces lie on different planes");
    auto [bu, bw] = geom::plane_basis(pa.normal);
    auto proj = [bu = bu, bw = bw](const Vec3& p) { return Vec2(p.dot(bu), p.dot(bw)); };
    const auto A = chat_u.planar(), B = c_s.planar();

    ChainClassification out;
    out.min_distance = geom::min_distance(A, B);
    if (out.min_distance > th.d_sep) return out;
    out.hausdorff = geom::hausdorff(A, B, th.d_sep);
    if (out.hausdorff < th.d_coincide) {
        out.kind = ChainKind::PinchedTorus;
        return out;
    }
    for (const auto& hit : geom::polyline_intersections(A, B)) {
        double ta = chat_u.params[hit.i] + hit.s * (chat_u.params[hit.i + 1] - chat_u.params[hit.i]);
        double tb = c_s.params[hit.j] + hit.t * (c_s.params[hit.j + 1] - c_s.params[hit.j]);
        Vec2 da = (A[hit.i + 1] - A[hit.i]), db = (B[hit.j + 1] - B[hit.j]);
        Vec3 p = chat_u.points[hit.i] + hit.s * (chat_u.points[hit.i + 1] - chat_u.points[hit.i]);
        if (chat_u.resample && c_s.resample) {
            // chord-Jacobian Newton on the exact traces
            const double wa = chat_u.params[hit.i + 1] - chat_u.params[hit.i];
            const double wb = c_s.params[hit.j + 1] - c_s.params[hit.j];
            if (wa != 0 && wb != 0) {
                Mat2 J;
                J.col(0) = da / wa;
                J.col(1) = -db / wb;
                if (std::abs(J.determinant()) > 0) {
                    const Mat2 Ji = J.inverse();
                    for (int it = 0; it < 12; ++it) {
                        const Vec3 pa3 = chat_u.resample(ta).first;
                        const Vec3 pb3 = c_s.resample(tb).first;
                        const Vec2 F = proj(pa3) - proj(pb3);
                        p = 0.5 * (pa3 + pb3);
                        if (F.norm() < 1e-13) break;
                        const Vec2 d = Ji * F;
                        ta -= d.x();
                        tb -= d.y();
                    }
                }
            }
        }
        ChainIntersection ci{p, geom::line_angle(da, db), ta, tb};
        bool dup = false;
        for (const auto& q : out.points)
            if ((q.p - ci.p).norm() < 1e-9) dup = true;
        if (dup) continue;
        const double fv = f ? (*f)(ci.p) : ci.p.z();
        if (ci.angle <= th.theta_min || std::abs(fv) <= 1e-9)
            throw Error(ErrorKind::Ambiguous, "intersection is neither transverse nor off Sigma");
        out.points.push_back(ci);
    }
    out.K = static_cast<int>(out.points.size());
    if (out.K == 0) return out; // close but not crossing
    if (out.K % 2 != 0) throw Error(ErrorKind::Ambiguous, "odd number of intersections");
    out.kind = ChainKind::TransverseChains;
    return out;
}

// ---------------------------------------------------------------------------
// (TC)/(R)

struct ConditionsReport {
    bool tc1 = false, tc2 = false, tc3 = false, r = false;
    bool overall = false;
    std::optional<TSingularityReport> tsing;
    std::string tc1_note, tc2_note, tc3_note, r_note;
    std::optional<CircleTrace> c_u, chat_u, c_s;
    std::vector<Vec3> r_u, r_s; // upward and downward Sigma hits of the cylinder samples
    std::vector<Vec3> marked; // Sigma hits of the two corner orbits
    int cylinder_orbits = 0;
    std::optional<ChainClassification> chain;
    std::string caveat = "TC2 verified on the sampled circle and at sample transversality only, not as a germ";
};

inline ConditionsReport check_tc_r(const PiecewiseSystem& z, const Vec3& p0, const Section& tau_u,
                                   const Section& tau_s, const EventIntegratorConfig& cfg,
                                   const TraceParams& tp = {}, Order order = Order::UpperAfterLower)
{
    ConditionsReport rep;
    const ReturnMapHandle h = make_handle(z, order, cfg);
    try {
        rep.tsing = analyze_t_singularity(z, p0, h);
        rep.tc1 = rep.tsing->stable;
        if (!rep.tc1) rep.tc1_note = "T-singularity is not stable";
    } catch (const Error& e) {
        rep.tc1_note = e.what();
    }
    if (!rep.tsing) return rep;
    try {
        rep.c_u = trace_cone_circle(z, *rep.tsing, h, true, tau_u, cfg, tp);
    } catch (const Error& e) {
        rep.tc2_note = std::string("unstable trace: ") + e.what();
    }
    try {
        rep.c_s = trace_cone_circle(z, *rep.tsing, h, false, tau_s, cfg, tp);
    } catch (const Error& e) {
        rep.r_note = std::string("stable trace: ") + e.what();
    }
    if (rep.c_u) {
        try {
            rep.chat_u = propagate_circle(z, *rep.c_u, tau_s, cfg, tp);
            rep.tc2 = rep.chat_u->corners.size() == 2 && (rep.chat_u->points.front() - rep.chat_u->points.back()).norm() == 0;
            if (!rep.tc2) rep.tc2_note = "propagated circle does not have exactly two corners";
        } catch (const Error& e) {
            rep.tc2_note = e.what();
        }
    }
    if (rep.tc2) {
        // cylinder: follow sample orbits from C^u to the target section
        const auto& cu = *rep.c_u;
        std::set<size_t> idx;
        const size_t n = cu.points.size() - 1;
        for (size_t k = 0; k < 64; ++k) idx.insert(k * n / 64);
        for (size_t c : cu.corners) idx.insert(c);
        bool ok = true;
        for (size_t i : idx) {
            try {
                auto res = section_map_full(z, tau_u, tau_s, cu.points[i], cfg);
                for (size_t k = 0; k < res.hit_dirs.size(); ++k) {
                    if (k > 0 && res.hit_dirs[k] == res.hit_dirs[k - 1]) ok = false;
                    (res.hit_dirs[k] > 0 ? rep.r_u : rep.r_s).push_back(res.sigma_hits[k]);
                }
                if (cu.tags[i] == 0)
                    for (const auto& q : res.sigma_hits) rep.marked.push_back(q);
                ++rep.cylinder_orbits;
            } catch (const Error& e) {
                ok = false;
                rep.tc3_note = e.what();
            }
        }
        rep.tc3 = ok && !rep.r_u.empty() && !rep.r_s.empty();
        if (!rep.tc3 && rep.tc3_note.empty()) rep.tc3_note = "cylinder orbit hit the same Sigma curve consecutively";
    } else {
        rep.tc3_note = "no cylinder without TC2";
    }
    if (rep.chat_u && rep.c_s) {
        try {
            rep.chain = classify_chain(*rep.chat_u, *rep.c_s);
            rep.r = rep.chain->kind == ChainKind::TransverseChains;
            if (!rep.r) rep.r_note = std::string("classification is ") + to_string(rep.chain->kind);
        } catch (const Error& e) {
            rep.r_note = e.what();
        }
    } else if (rep.r_note.empty()) {
        rep.r_note = "traces unavailable";
    }
    rep.overall = rep.tc1 && rep.tc2 && rep.tc3 && rep.r;
    return rep;
}

// Connection between the unstable cone of p1 and the stable cone of p2.
struct ChainRun {
    std::optional<TSingularityReport> t1, t2;
    std::optional<CircleTrace> c_u, chat_u, c_s;
    std::optional<ChainClassification> chain;
    std::vector<std::string> errors;
};

inline ChainRun connect_cones(const PiecewiseSystem& z, const Vec3& p1, const Vec3& p2, const Section& tau_u,
                              const Section& tau_s, const EventIntegratorConfig& cfg, const TraceParams& tp = {},
                              Order order = Order::LowerAfterUpper)
{
    ChainRun run;
    const ReturnMapHandle h = make_handle(z, order, cfg);
    auto attempt = [&](const char* stage, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            run.errors.push_back(std::string(stage) + ": " + e.what());
        }
    };
    attempt("analyze p1", [&] { run.t1 = analyze_t_singularity(z, p1, h); });
    attempt("analyze p2", [&] { run.t2 = analyze_t_singularity(z, p2, h); });
    if (run.t1) attempt("unstable trace", [&] { run.c_u = trace_cone_circle(z, *run.t1, h, true, tau_u, cfg, tp); });
    if (run.t2) attempt("stable trace", [&] { run.c_s = trace_cone_circle(z, *run.t2, h, false, tau_s, cfg, tp); });
    if (run.c_u) attempt("propagate", [&] { run.chat_u = propagate_circle(z, *run.c_u, tau_s, cfg, tp); });
    if (run.chat_u && run.c_s) attempt("classify", [&] { run.chain = classify_chain(*run.chat_u, *run.c_s); });
    return run;
}

// ---------------------------------------------------------------------------
// Homoclinic points

struct HomoclinicPoint {
    Vec2 q;
    double angle = 0;
    double u_unstable = 0, u_stable = 0; // curve parameters
    double s_unstable = 0, s_stable = 0; // arclengths
    std::vector<Vec2> itinerary; // backward and forward iterates, -3..3 where defined
};

inline double arclength_at(const ManifoldCurve& c, size_t seg, double t)
{
    return c.s[seg] + t * (c.s[seg + 1] - c.s[seg]);
}

inline std::vector<HomoclinicPoint> find_homoclinic_points(const ManifoldCurve& wu, const ManifoldCurve& ws)
{
    std::vector<HomoclinicPoint> out;
    for (const auto& hit : geom::polyline_intersections(wu.points, ws.points)) {
        if ((hit.p - wu.fixed).norm() < 1e-9) continue;
        HomoclinicPoint hp;
        double ua = wu.u[hit.i] + hit.s * (wu.u[hit.i + 1] - wu.u[hit.i]);
        double ub = ws.u[hit.j] + hit.t * (ws.u[hit.j + 1] - ws.u[hit.j]);
        const Vec2 da = wu.points[hit.i + 1] - wu.points[hit.i];
        const Vec2 db = ws.points[hit.j + 1] - ws.points[hit.j];
        hp.q = hit.p;
        const double wa = wu.u[hit.i + 1] - wu.u[hit.i], wb = ws.u[hit.j + 1] - ws.u[hit.j];
        if (wu.map && ws.map && wa > 0 && wb > 0 && std::floor(wu.u[hit.i]) == std::floor(wu.u[hit.i + 1] - 1e-15) &&
            std::floor(ws.u[hit.j]) == std::floor(ws.u[hit.j + 1] - 1e-15)) {
            Mat2 J;
            J.col(0) = da / wa;
            J.col(1) = -db / wb;
            if (std::abs(J.determinant()) > 0) {
                const Mat2 Ji = J.inverse();
                try {
                    for (int it = 0; it < 20; ++it) {
                        const Vec2 a = wu.at(ua), b = ws.at(ub);
                        const Vec2 F = a - b;
                        hp.q = 0.5 * (a + b);
                        if (F.norm() < 1e-14 * (1 + a.norm())) break;
                        const Vec2 d = Ji * F;
                        ua -= d.x();
                        ub -= d.y();
                    }
                } catch (const Error&) {
                    hp.q = hit.p;
                }
            }
        }
        hp.u_unstable = ua;
        hp.u_stable = ub;
        hp.s_unstable = arclength_at(wu, hit.i, hit.s);
        hp.s_stable = arclength_at(ws, hit.j, hit.t);
        hp.angle = geom::line_angle(da, db);
        if (wu.map) {
            for (int k = -3; k <= 3; ++k) {
                try {
                    hp.itinerary.push_back(wu.map->iterate(hp.q, k));
                } catch (const Error&) {
                    hp.itinerary.push_back(Vec2(NAN, NAN));
                }
            }
        }
        bool dup = false;
        for (const auto& o : out)
            if ((o.q - hp.q).norm() < 1e-9) dup = true;
        if (!dup) out.push_back(hp);
    }
    std::sort(out.begin(), out.end(),
              [](const HomoclinicPoint& a, const HomoclinicPoint& b) { return a.s_stable < b.s_stable; });
    return out;
}

} // namespace tchain
