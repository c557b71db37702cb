#pragma once

#include "core.hpp"
#include "geometry.hpp"
#include "models.hpp"

#include <boost/numeric/odeint.hpp>

#include <bit>
#include <limits>
#include <mutex>
#include <unordered_map>
#include <vector>

namespace tchain {

struct EventIntegratorConfig {
    double rtol = 1e-10;
    double atol = 1e-12;
    double event_tol = 1e-12;
    double max_step = 0.25;
    double max_time = 100;

    void validate() const
    {
        if (!(rtol > 0 && atol > 0 && event_tol > 0 && max_step > 0 && max_time > 0))
            throw Error(ErrorKind::ConfigError, "integrator tolerances must be positive");
        if (event_tol > atol * 100) throw Error(ErrorKind::ConfigError, "event_tol must be <= 100 * atol");
    }
};

struct OrbitSample {
    double t;
    Vec3 p;
    Side side;
    int event; // 0 interior, 1 Sigma hit, 2 plane hit, 3 auxiliary switch
};

struct HalfReturnResult {
    Vec3 arrival;
    double time = 0; // always > 0, the magnitude of the flight time
    Side side = Side::Upper;
    Direction direction = Direction::Forward;
    bool monotone = true;
};

namespace detail {

using State = std::array<double, 3>;

inline int sgn(double v) { return (v > 0) - (v < 0); }

struct EventFn {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> grad;
    int start_sign = 0; // expected sign right after departure when starting on the surface
    std::function<bool(const Vec3&)> accept; // hits failing this are passed through
};

struct EventHit {
    Vec3 p;
    double t = 0;
    int which = -1;
};

// Integrates dp/dtau = dir * field(p) from p0 until the first event surface is crossed.
inline EventHit integrate_events(const std::function<Vec3(const Vec3&)>& field, double dir, const Vec3& p0,
                                 const std::vector<EventFn>& ev, const EventIntegratorConfig& cfg,
                                 const Box& box, double t_budget, std::vector<OrbitSample>* dump, Side side)
{
    namespace ode = boost::numeric::odeint;
    auto rhs = [&](const State& x, State& dx, double) {
        const Vec3 v = field(Vec3(x[0], x[1], x[2]));
        dx = {dir * v[0], dir * v[1], dir * v[2]};
    };
    auto stepper = ode::make_dense_output(cfg.atol, cfg.rtol, cfg.max_step, ode::runge_kutta_dopri5<State>());
    stepper.initialize(State{p0[0], p0[1], p0[2]}, 0.0, std::min(cfg.max_step, 1e-2));

    std::vector<int> prev(ev.size());
    for (size_t i = 0; i < ev.size(); ++i) {
        prev[i] = ev[i].start_sign != 0 ? ev[i].start_sign : sgn(ev[i].value(p0));
    }
    auto at = [&](double t) {
        State x;
        stepper.calc_state(t, x);
        return Vec3(x[0], x[1], x[2]);
    };
    if (dump) dump->push_back({0.0, p0, side, 0});

    double ta = 0;
    for (;;) {
        std::pair<double, double> span;
        try {
            span = stepper.do_step(rhs);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::NoReturn, std::string("integrator failure: ") + e.what());
        }
        const auto [t0, t1] = span;
        for (int k = 1; k <= 4; ++k) {
            const double tb = t0 + (t1 - t0) * k / 4.0;
            const Vec3 pb = at(tb);
            if (!pb.allFinite() || !box.contains(pb))
                throw Error(ErrorKind::LeftBox, "trajectory left the working box");
            int best = -1;
            double best_t = tb;
            Vec3 best_p = pb;
            for (size_t i = 0; i < ev.size(); ++i) {
                const double vb = ev[i].value(pb);
                if (sgn(vb) == prev[i] || prev[i] == 0) continue;
                double lo = ta, hi = tb;
                if (vb != 0) {
                    for (int it = 0; it < 200 && hi - lo > 4e-16 * std::max(1.0, hi); ++it) {
                        const double mid = 0.5 * (lo + hi);
                        const int s = sgn(ev[i].value(at(mid)));
                        if (s == prev[i]) lo = mid;
                        else hi = mid;
                    }
                }
                if (ev[i].accept && !ev[i].accept(at(hi))) continue;
                if (hi < best_t || best < 0) {
                    best = static_cast<int>(i);
                    best_t = hi;
                }
            }
            if (best >= 0) {
                best_p = at(best_t);
                const auto& e = ev[best];
                // Newton projection along the exact field.
                for (int it = 0; it < 12; ++it) {
                    const double val = e.value(best_p);
                    if (std::abs(val) <= cfg.event_tol * 1e-3) break;
                    const Vec3 v = dir * field(best_p);
                    const double dv = e.grad(best_p).dot(v);
                    if (dv == 0) break;
                    const double dt = -val / dv;
                    best_p += dt * v;
                    best_t += dt;
                }
                if (dump) dump->push_back({best_t, best_p, side, 0});
                return {best_p, best_t, best};
            }
            for (size_t i = 0; i < ev.size(); ++i) {
                const int s = sgn(ev[i].value(pb));
                if (s != 0) prev[i] = s;
            }
            if (dump) dump->push_back({tb, pb, side, 0});
            ta = tb;
        }
        if (t1 > t_budget) throw Error(ErrorKind::NoReturn, "max flight time exceeded");
    }
}

} // namespace detail

inline HalfReturnResult flow_to_sigma(const SmoothField& v, const ScalarField& f, const Vec3& p, Direction dir,
                                      const EventIntegratorConfig& cfg, const Box& box = Box{})
{
    const double s = dir == Direction::Forward ? 1.0 : -1.0;
    detail::EventFn ev{f.value, f.grad, 0, {}};
    HalfReturnResult r;
    r.direction = dir;
    const double f0 = f(p);
    if (std::abs(f0) <= 1e-9) {
        const double d = s * v(p).dot(f.gradient(p));
        if (std::abs(d) < tangency_tol(v(p))) throw Error(ErrorKind::GrazingEvent, "departure is tangent to Sigma");
        ev.start_sign = detail::sgn(d);
    }
    r.side = (ev.start_sign != 0 ? ev.start_sign : detail::sgn(f0)) > 0 ? Side::Upper : Side::Lower;
    auto hit = detail::integrate_events([&v](const Vec3& q) { return v(q); }, s, p, {ev}, cfg, box, cfg.max_time,
                                        nullptr, r.side);
    const Vec3 va = v(hit.p);
    if (std::abs(va.dot(f.gradient(hit.p))) < tangency_tol(va))
        throw Error(ErrorKind::GrazingEvent, "tangential arrival at Sigma");
    r.arrival = hit.p;
    r.time = hit.t;
    return r;
}

// One leg of a Filippov orbit inside a single half-space, switching between the
// pieces of a cross-shaped system, ending at Sigma or at one of the target planes.
struct LegEnd {
    Vec3 p;
    double t = 0;
    bool at_sigma = true;
    int target = -1;
};

// Transversal section: a plane, optionally restricted to a disk around a center.
struct Section {
    Plane plane;
    Vec3 center{0, 0, 0};
    double radius = std::numeric_limits<double>::infinity();

    Section() = default;
    Section(const Plane& p) : plane(p) {}
    Section(const Plane& p, const Vec3& c, double r) : plane(p), center(c), radius(r) {}
    bool accepts(const Vec3& q) const { return (q - center).norm() <= radius; }
    bool operator==(const Section& o) const
    {
        return plane == o.plane && center == o.center && radius == o.radius;
    }
};

inline LegEnd follow_leg(const PiecewiseSystem& z, Side side, const Vec3& p, Direction dir,
                         const std::vector<Section>& targets, const EventIntegratorConfig& cfg,
                         std::vector<OrbitSample>* dump = nullptr)
{
    const double s = dir == Direction::Forward ? 1.0 : -1.0;
    Vec3 cur = p;
    double elapsed = 0;
    bool first = true;
    for (int leg = 0; leg < 64; ++leg) {
        int piece = 0;
        if (z.aux) {
            const double gv = z.aux->g(cur);
            if (std::abs(gv) <= 1e-10) {
                const SmoothField& base = side == Side::Upper ? z.upper : z.lower;
                piece = s * base(cur).dot(z.aux->g.gradient(cur)) > 0 ? 1 : 0;
            } else {
                piece = gv > 0 ? 1 : 0;
            }
        }
        const SmoothField& fld = piece == 1 ? (side == Side::Upper ? z.aux->upper : z.aux->lower)
                                            : (side == Side::Upper ? z.upper : z.lower);
        auto fn = [&fld](const Vec3& q) { return fld(q); };
        std::vector<detail::EventFn> ev;
        auto start_sign = [&](const std::function<double(const Vec3&)>& val,
                              const std::function<Vec3(const Vec3&)>& gr, ErrorKind on_tangent) {
            if (std::abs(val(cur)) > 1e-10) return 0;
            const double d = s * fld(cur).dot(gr(cur));
            if (std::abs(d) < tangency_tol(fld(cur)) * std::max(1.0, gr(cur).norm()))
                throw Error(on_tangent, "departure tangent to a surface");
            return detail::sgn(d);
        };
        ev.push_back({z.switching.value, z.switching.grad, 0, {}});
        ev[0].start_sign = start_sign(ev[0].value, ev[0].grad, ErrorKind::GrazingEvent);
        if (ev[0].start_sign != 0) {
            const int want = side == Side::Upper ? 1 : -1;
            if (first && ev[0].start_sign != want)
                throw Error(ErrorKind::GrazingEvent, "departure leaves Sigma into the wrong half-space");
            if (!first && ev[0].start_sign != want) {
                // switched pieces right at Sigma and the new piece crosses it at once
                if (dump) dump->back().event = 1;
                return {cur, elapsed, true, -1};
            }
        }
        for (const auto& sec : targets) {
            const Plane pl = sec.plane;
            auto val = [pl](const Vec3& q) { return pl.eval(q); };
            auto gr = [pl](const Vec3&) { return pl.normal; };
            detail::EventFn e{val, gr, 0, {}};
            if (std::isfinite(sec.radius)) e.accept = [sec](const Vec3& q) { return sec.accepts(q); };
            e.start_sign = std::abs(pl.eval(cur)) <= 1e-10 ? start_sign(val, gr, ErrorKind::NotTransverse) : 0;
            ev.push_back(e);
        }
        const int aux_idx = static_cast<int>(ev.size());
        if (z.aux) {
            detail::EventFn e{z.aux->g.value, z.aux->g.grad, 0, {}};
            e.start_sign = std::abs(z.aux->g(cur)) <= 1e-10 ? (piece == 1 ? 1 : -1) : 0;
            ev.push_back(e);
        }
        auto hit = detail::integrate_events(fn, s, cur, ev, cfg, z.box, cfg.max_time - elapsed, dump, side);
        elapsed += hit.t;
        cur = hit.p;
        first = false;
        const Vec3 va = fld(cur);
        if (hit.which == 0) {
            if (std::abs(va.dot(z.switching.gradient(cur))) < tangency_tol(va))
                throw Error(ErrorKind::GrazingEvent, "tangential arrival at Sigma");
            if (dump) dump->back().event = 1;
            return {cur, elapsed, true, -1};
        }
        int target = hit.which - 1;
        if (hit.which == aux_idx) {
            // a target plane may coincide with the auxiliary surface; the tie counts as arrival
            target = -1;
            for (size_t k = 0; k < targets.size() && target < 0; ++k)
                if (std::abs(targets[k].plane.eval(cur)) <= 1e-10 * std::max(1.0, targets[k].plane.normal.norm()) &&
                    targets[k].accepts(cur))
                    target = static_cast<int>(k);
            if (target < 0) {
                if (dump) dump->back().event = 3;
                continue;
            }
        }
        const Plane& pl = targets[static_cast<size_t>(target)].plane;
        if (std::abs(va.dot(pl.normal)) < 1e-8 * pl.normal.norm())
            throw Error(ErrorKind::NotTransverse, "orbit meets the section tangentially");
        if (dump) dump->back().event = 2;
        return {cur, elapsed, false, target};
    }
    throw Error(ErrorKind::NoReturn, "too many auxiliary switches");
}

// Direction in which the side's field leaves q into its own half-space.
inline Direction departure_direction(const PiecewiseSystem& z, Side side, const Vec3& q)
{
    const SmoothField& fld = z.field(side, q);
    const Vec3 v = fld(q);
    const double d = v.dot(z.switching.gradient(q));
    if (std::abs(d) < tangency_tol(v)) throw Error(ErrorKind::GrazingEvent, "departure Lie derivative vanishes");
    const bool up = d > 0;
    return (side == Side::Upper) == up ? Direction::Forward : Direction::Backward;
}

inline HalfReturnResult half_return_full(const PiecewiseSystem& z, Side side, const Vec3& q,
                                         const EventIntegratorConfig& cfg)
{
    const Direction dir = departure_direction(z, side, q);
    auto end = follow_leg(z, side, q, dir, {}, cfg);
    return {end.p, end.t, side, dir, true};
}

inline Vec3 half_return(const PiecewiseSystem& z, Side side, const Vec3& q, const EventIntegratorConfig& cfg)
{
    return half_return_full(z, side, q, cfg).arrival;
}

enum class Order { LowerAfterUpper, UpperAfterLower };
enum class SlidingPolicy { Reject, Ignore };

inline const char* to_string(Order o) { return o == Order::LowerAfterUpper ? "lower_after_upper" : "upper_after_lower"; }

// Union of a disk around the T-singularity and tubes around continued curves.
// An unrestricted domain only requires the point to lie in the box.
struct Domain {
    bool restricted = false;
    Vec2 center{0, 0};
    double r_v = 0.5;
    double r_r = 0.1;
    std::vector<std::vector<Vec2>> tubes;

    bool contains(const Vec2& q) const
    {
        if (!restricted) return true;
        if ((q - center).norm() < r_v) return true;
        for (const auto& t : tubes)
            if (geom::distance_to_polyline(t, q) < r_r) return true;
        return false;
    }
};

struct ReturnMapHandle {
    std::shared_ptr<const PiecewiseSystem> system;
    Order order = Order::UpperAfterLower;
    Domain domain;
    SlidingPolicy sliding = SlidingPolicy::Reject;
    EventIntegratorConfig cfg;
    std::optional<PlanarHalfMaps> closed_form;

    // Numeric results only, shared by copies; the key covers the order and the integrator settings.
    struct Cache {
        std::mutex mu;
        std::unordered_map<std::uint64_t, std::pair<Vec2, Vec2>> map; // intermediate arrival, image
    };
    std::shared_ptr<Cache> cache = std::make_shared<Cache>();

    Vec2 half(Side side, const Vec2& q) const
    {
        if (closed_form) return side == Side::Upper ? closed_form->upper(q) : closed_form->lower(q);
        // fold points are fixed by the involution; the flight time shrinks to zero there
        const Vec3 p = lift(q);
        const Vec3 v = system->field(side, p)(p);
        if (std::abs(v.dot(system->switching.gradient(p))) < tangency_tol(v)) return q;
        return drop(half_return(*system, side, p, cfg));
    }

    Vec2 eval(const Vec2& q) const { return apply(q, false); }
    Vec2 inverse(const Vec2& q) const { return apply(q, true); }
    Vec2 iterate(Vec2 q, int n) const
    {
        for (int i = 0; i < std::abs(n); ++i) q = n > 0 ? eval(q) : inverse(q);
        return q;
    }
    Side first_side(bool inv) const
    {
        const bool upper_first = (order == Order::LowerAfterUpper) != inv;
        return upper_first ? Side::Upper : Side::Lower;
    }

private:
    std::uint64_t key(const Vec2& q, bool inv) const
    {
        std::uint64_t h = first_side(inv) == Side::Upper ? 0xA5A5A5A5A5A5A5A5ull : 0x5A5A5A5A5A5A5A5Aull;
        for (double v : {q.x(), q.y(), cfg.rtol, cfg.atol, cfg.event_tol, cfg.max_step, cfg.max_time}) {
            const std::uint64_t a = std::bit_cast<std::uint64_t>(v);
            h ^= a + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        }
        return h;
    }

    void check_domain(const Vec2& q, const char* what) const
    {
        if (!domain.contains(q) || !system->box.contains(lift(q)))
            throw Error(ErrorKind::ExitedDomain, std::string(what) + " outside the return-map domain");
    }

    Vec2 apply(const Vec2& q, bool inv) const
    {
        check_domain(q, "input");
        const bool cached = cache && !closed_form;
        const std::uint64_t k = cached ? key(q, inv) : 0;
        std::optional<std::pair<Vec2, Vec2>> hit;
        if (cached) {
            std::lock_guard<std::mutex> lock(cache->mu);
            auto it = cache->map.find(k);
            if (it != cache->map.end()) hit = it->second;
        }
        const Side s1 = first_side(inv);
        const Side s2 = s1 == Side::Upper ? Side::Lower : Side::Upper;
        const Vec2 mid = hit ? hit->first : half(s1, q);
        // policy and domain checks run on every call: copies may differ in both
        if (sliding == SlidingPolicy::Reject) {
            const auto lab = classify_sigma_point(*system, lift(mid));
            if (lab == RegionLabel::StableSliding || lab == RegionLabel::UnstableSliding)
                throw Error(ErrorKind::ReachedSliding, std::string("intermediate arrival is ") + to_string(lab));
        }
        const Vec2 out = hit ? hit->second : half(s2, mid);
        check_domain(out, "output");
        if (cached && !hit) {
            std::lock_guard<std::mutex> lock(cache->mu);
            if (cache->map.size() > 2000000) cache->map.clear();
            cache->map.emplace(k, std::make_pair(mid, out));
        }
        return out;
    }
};

inline ReturnMapHandle make_handle(const PiecewiseSystem& z, Order order, const EventIntegratorConfig& cfg = {})
{
    ReturnMapHandle h;
    h.system = std::make_shared<const PiecewiseSystem>(z);
    h.order = order;
    h.cfg = cfg;
    return h;
}

struct JacobianEstimate {
    Mat2 matrix = Mat2::Zero();
    double step = 0;
    double condition = 0;
    double determinant = 0;
};

template <class Map>
JacobianEstimate jacobian_of(const Map& m, const Vec2& q)
{
    JacobianEstimate est;
    const double h = 1e-4 * (1 + q.norm());
    // Rotated orthonormal stencil: axis-aligned points would sit on the fold
    // lines when q is a fold-fold point.
    Mat2 rot;
    rot << std::cos(0.3), -std::sin(0.3), std::sin(0.3), std::cos(0.3);
    auto central = [&](double s) {
        Mat2 j;
        for (int c = 0; c < 2; ++c) {
            const Vec2 e = s * rot.col(c);
            j.col(c) = (m(q + e) - m(q - e)) / (2 * s);
        }
        return Mat2(j * rot.transpose());
    };
    try {
        est.matrix = (4 * central(h / 2) - central(h)) / 3;
    } catch (const Error& e) {
        throw Error(ErrorKind::StencilFailure, e.what());
    }
    est.step = h;
    est.determinant = est.matrix.determinant();
    Eigen::JacobiSVD<Mat2> svd(est.matrix);
    const auto sv = svd.singularValues();
    est.condition = sv(1) > 0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
    return est;
}

inline JacobianEstimate jacobian_2d(const ReturnMapHandle& h, const Vec2& q)
{
    return jacobian_of([&h](const Vec2& x) { return h.eval(x); }, q);
}

struct SectionMapResult {
    Vec3 p;
    double t = 0;
    std::vector<Vec3> sigma_hits;
    std::vector<int> hit_dirs; // +1 upward crossing, -1 downward
};

inline SectionMapResult section_map_full(const PiecewiseSystem& z, const Section& from, const Section& to,
                                         const Vec3& p, const EventIntegratorConfig& cfg,
                                         Direction dir = Direction::Forward, std::vector<OrbitSample>* dump = nullptr)
{
    SectionMapResult r;
    r.p = p;
    if (from == to && std::abs(to.plane.eval(p)) <= 1e-10) return r;
    const double s = dir == Direction::Forward ? 1.0 : -1.0;
    Vec3 cur = p;
    Side side;
    const double f0 = z.f(cur);
    if (std::abs(f0) <= 1e-10) {
        const auto lab = classify_sigma_point(z, cur);
        if (lab != RegionLabel::Crossing)
            throw Error(ErrorKind::ReachedSliding, std::string("start point is ") + to_string(lab));
        const double xf = lie_pair(z, cur).first;
        side = s * xf > 0 ? Side::Upper : Side::Lower;
    } else {
        side = f0 > 0 ? Side::Upper : Side::Lower;
    }
    for (int n = 0; n < 256; ++n) {
        auto end = follow_leg(z, side, cur, dir, {to}, cfg, dump);
        r.t += end.t;
        cur = end.p;
        if (!end.at_sigma) {
            r.p = cur;
            return r;
        }
        const auto lab = classify_sigma_point(z, cur);
        if (lab != RegionLabel::Crossing)
            throw Error(ErrorKind::ReachedSliding, std::string("orbit reached ") + to_string(lab));
        r.sigma_hits.push_back(cur);
        const int updown = (side == Side::Upper) == (s > 0) ? -1 : 1;
        r.hit_dirs.push_back(updown);
        if (std::abs(to.plane.eval(cur)) <= 1e-10 && to.accepts(cur)) {
            // Sigma hit on the target plane itself: the leg would start on it
            r.p = cur;
            return r;
        }
        side = side == Side::Upper ? Side::Lower : Side::Upper;
    }
    throw Error(ErrorKind::NoReturn, "too many Sigma crossings before the target plane");
}

inline Vec3 section_map(const PiecewiseSystem& z, const Section& from, const Section& to, const Vec3& p,
                        const EventIntegratorConfig& cfg, Direction dir = Direction::Forward)
{
    return section_map_full(z, from, to, p, cfg, dir).p;
}

} // namespace tchain
