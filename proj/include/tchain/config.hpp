#pragma once

#include "io.hpp"
#include "models.hpp"

namespace tchain {

struct ChainSetup {
    Vec3 p1{0, 0, 0};
    std::optional<Vec3> p2; // absent: self-chain at p1
    Section unstable_section, stable_section;
};

struct ScenarioConfig {
    int schema_version = 1;
    std::string name;
    std::string model; // built-in name; empty when coefficient tables are given
    std::optional<PolyVec> upper, lower;
    std::optional<Poly3> switching;
    Box box;
    Order order = Order::LowerAfterUpper;
    EventIntegratorConfig integrator;
    Rect search{-3, 3, -3, 3};
    int search_grid = 16;
    Rect atlas{-2, 2, -2, 2};
    int atlas_samples = 10000;
    std::optional<ChainSetup> chain;
    TraceParams trace;
    HorseshoePipelineParams horseshoe;
    Vec3 saddle{0, 0, 0}; // T-singularity whose manifolds carry the horseshoe
    bool closed_form = true; // use exact half maps when the model has them
    std::optional<SlidingPolicy> sliding; // default: ignore for planar fixtures, reject otherwise
    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

namespace detail {

// One table per component: a list of {"powers": [i, j, k], "coeff": c}.
inline Poly3 poly_from(const io::json& j, const std::string& field)
{
    Poly3 p;
    if (!j.is_array()) throw Error(ErrorKind::ConfigError, "field '" + field + "': expected a list of terms");
    for (size_t n = 0; n < j.size(); ++n) {
        const auto& t = j[n];
        const std::string at = field + "[" + std::to_string(n) + "]";
        if (!t.is_object() || !t.contains("powers") || !t.contains("coeff") || !t.at("coeff").is_number())
            throw Error(ErrorKind::ConfigError, "field '" + at + "': expected {powers: [i, j, k], coeff: c}");
        const auto& pw = t.at("powers");
        if (!pw.is_array() || pw.size() != 3 || !pw[0].is_number_integer() || !pw[1].is_number_integer() ||
            !pw[2].is_number_integer())
            throw Error(ErrorKind::ConfigError, "field '" + at + ".powers': expected three integers");
        const int a = pw[0].get<int>(), b = pw[1].get<int>(), c = pw[2].get<int>();
        if (a < 0 || b < 0 || c < 0) throw Error(ErrorKind::ConfigError, "field '" + at + ".powers': negative exponent");
        p.add_term({a, b, c}, t.at("coeff").get<double>());
    }
    return p;
}

inline PolyVec polyvec_from(const io::json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorKind::ConfigError, "field '" + field + "': expected three component tables");
    return {poly_from(j[0], field + "[0]"), poly_from(j[1], field + "[1]"), poly_from(j[2], field + "[2]")};
}

template <class T>
T get(const io::json& j, const char* key, const std::string& prefix, T fallback)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const io::json::exception& e) {
        throw Error(ErrorKind::ConfigError, "field '" + prefix + key + "': " + e.what());
    }
}

inline Vec3 vec3_field(const io::json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 3) throw Error(ErrorKind::ConfigError, "field '" + field + "': expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Rect rect_field(const io::json& j, const std::string& field)
{
    if (!j.is_array() || j.size() != 4)
        throw Error(ErrorKind::ConfigError, "field '" + field + "': expected [x0, x1, y0, y1]");
    Rect r{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!(r.x0 < r.x1 && r.y0 < r.y1)) throw Error(ErrorKind::ConfigError, "field '" + field + "': empty rectangle");
    return r;
}

inline Section section_field(const io::json& j, const std::string& field)
{
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "field '" + field + "': expected an object");
    if (!j.contains("normal") || !j.contains("offset"))
        throw Error(ErrorKind::ConfigError, "field '" + field + "': needs normal and offset");
    Section s(Plane{vec3_field(j.at("normal"), field + ".normal"), j.at("offset").get<double>()});
    if (s.plane.normal.norm() == 0) throw Error(ErrorKind::ConfigError, "field '" + field + ".normal': zero vector");
    if (j.contains("center")) s.center = vec3_field(j.at("center"), field + ".center");
    if (j.contains("radius")) {
        s.radius = j.at("radius").get<double>();
        if (!(s.radius > 0)) throw Error(ErrorKind::ConfigError, "field '" + field + ".radius': must be positive");
    }
    return s;
}

inline void positive(double v, const std::string& field)
{
    if (!(v > 0)) throw Error(ErrorKind::ConfigError, "field '" + field + "': must be positive");
}

} // namespace detail

inline ScenarioConfig parse_config(const io::json& j)
{
    using detail::get;
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be a JSON object");
    ScenarioConfig c;
    c.schema_version = get<int>(j, "schema_version", "", 0);
    if (c.schema_version != 1)
        throw Error(ErrorKind::ConfigError, "field 'schema_version': expected 1, got " + std::to_string(c.schema_version));
    c.name = get<std::string>(j, "name", "", "scenario");
    if (!j.contains("system")) throw Error(ErrorKind::ConfigError, "field 'system': missing");
    const auto& sys = j.at("system");
    const bool has_model = sys.contains("model"), has_tables = sys.contains("tables");
    if (has_model == has_tables)
        throw Error(ErrorKind::ConfigError, "field 'system': give exactly one of 'model' and 'tables'");
    if (has_model) {
        c.model = get<std::string>(sys, "model", "system.", "");
    } else {
        const auto& t = sys.at("tables");
        for (const char* k : {"upper", "lower", "switching"})
            if (!t.contains(k)) throw Error(ErrorKind::ConfigError, std::string("field 'system.tables.") + k + "': missing");
        c.upper = detail::polyvec_from(t.at("upper"), "system.tables.upper");
        c.lower = detail::polyvec_from(t.at("lower"), "system.tables.lower");
        c.switching = detail::poly_from(t.at("switching"), "system.tables.switching");
        if (c.switching->is_zero()) throw Error(ErrorKind::ConfigError, "field 'system.tables.switching': zero polynomial");
    }
    if (j.contains("box")) {
        const auto& b = j.at("box");
        if (!b.contains("lo") || !b.contains("hi")) throw Error(ErrorKind::ConfigError, "field 'box': needs lo and hi");
        c.box.lo = detail::vec3_field(b.at("lo"), "box.lo");
        c.box.hi = detail::vec3_field(b.at("hi"), "box.hi");
    }
    if (c.box.empty()) throw Error(ErrorKind::ConfigError, "field 'box': empty box (need lo < hi in every coordinate)");
    const std::string order = get<std::string>(j, "order", "", "lower_after_upper");
    if (order == "lower_after_upper") c.order = Order::LowerAfterUpper;
    else if (order == "upper_after_lower") c.order = Order::UpperAfterLower;
    else throw Error(ErrorKind::ConfigError, "field 'order': unknown value '" + order + "'");
    if (j.contains("integrator")) {
        const auto& g = j.at("integrator");
        auto& ic = c.integrator;
        ic.rtol = get<double>(g, "rtol", "integrator.", ic.rtol);
        ic.atol = get<double>(g, "atol", "integrator.", ic.atol);
        ic.event_tol = get<double>(g, "event_tol", "integrator.", ic.event_tol);
        ic.max_step = get<double>(g, "max_step", "integrator.", ic.max_step);
        ic.max_time = get<double>(g, "max_time", "integrator.", ic.max_time);
        for (auto [v, n] : {std::pair{ic.rtol, "rtol"}, {ic.atol, "atol"}, {ic.event_tol, "event_tol"},
                            {ic.max_step, "max_step"}, {ic.max_time, "max_time"}})
            detail::positive(v, std::string("integrator.") + n);
        try {
            ic.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::ConfigError, std::string("field 'integrator': ") + e.what());
        }
    }
    if (j.contains("analyze")) {
        const auto& a = j.at("analyze");
        if (a.contains("search")) c.search = detail::rect_field(a.at("search"), "analyze.search");
        c.search_grid = get<int>(a, "search_grid", "analyze.", c.search_grid);
        if (c.search_grid < 8) throw Error(ErrorKind::ConfigError, "field 'analyze.search_grid': must be >= 8");
        if (a.contains("atlas")) c.atlas = detail::rect_field(a.at("atlas"), "analyze.atlas");
        c.atlas_samples = get<int>(a, "atlas_samples", "analyze.", c.atlas_samples);
        if (c.atlas_samples < 1) throw Error(ErrorKind::ConfigError, "field 'analyze.atlas_samples': must be >= 1");
    }
    if (j.contains("chain")) {
        const auto& ch = j.at("chain");
        ChainSetup cs;
        if (ch.contains("p1")) cs.p1 = detail::vec3_field(ch.at("p1"), "chain.p1");
        if (ch.contains("p2")) cs.p2 = detail::vec3_field(ch.at("p2"), "chain.p2");
        for (const char* k : {"unstable_section", "stable_section"})
            if (!ch.contains(k)) throw Error(ErrorKind::ConfigError, std::string("field 'chain.") + k + "': missing");
        cs.unstable_section = detail::section_field(ch.at("unstable_section"), "chain.unstable_section");
        cs.stable_section = detail::section_field(ch.at("stable_section"), "chain.stable_section");
        c.chain = cs;
    }
    if (j.contains("trace")) {
        const auto& t = j.at("trace");
        c.trace.delta0 = get<double>(t, "delta0", "trace.", c.trace.delta0);
        c.trace.spacing = get<double>(t, "spacing", "trace.", c.trace.spacing);
        c.trace.n0 = get<int>(t, "n0", "trace.", c.trace.n0);
        detail::positive(c.trace.delta0, "trace.delta0");
        detail::positive(c.trace.spacing, "trace.spacing");
        if (c.trace.n0 < 8) throw Error(ErrorKind::ConfigError, "field 'trace.n0': must be >= 8");
    }
    auto& hp = c.horseshoe;
    if (j.contains("manifolds")) {
        const auto& m = j.at("manifolds");
        auto& g = hp.growth;
        g.delta0 = get<double>(m, "delta0", "manifolds.", g.delta0);
        g.m0 = get<int>(m, "m0", "manifolds.", g.m0);
        g.h_max = get<double>(m, "h_max", "manifolds.", g.h_max);
        g.h_min = get<double>(m, "h_min", "manifolds.", g.h_min);
        g.max_generations = get<int>(m, "max_generations", "manifolds.", g.max_generations);
        for (auto [v, n] : {std::pair{g.delta0, "delta0"}, {g.h_max, "h_max"}, {g.h_min, "h_min"}})
            detail::positive(v, std::string("manifolds.") + n);
        if (g.h_min >= g.h_max) throw Error(ErrorKind::ConfigError, "field 'manifolds.h_min': must be below h_max");
        if (g.m0 < 2) throw Error(ErrorKind::ConfigError, "field 'manifolds.m0': must be >= 2");
    }
    if (j.contains("horseshoe")) {
        const auto& h = j.at("horseshoe");
        auto& hs = hp.horseshoe;
        hs.n_max = get<int>(h, "n_max", "horseshoe.", hs.n_max);
        hs.depth = get<int>(h, "depth", "horseshoe.", hs.depth);
        hs.cone_opening = get<double>(h, "cone_opening", "horseshoe.", hs.cone_opening);
        hs.expansion_margin = get<double>(h, "expansion_margin", "horseshoe.", hs.expansion_margin);
        hs.contraction_margin = get<double>(h, "contraction_margin", "horseshoe.", hs.contraction_margin);
        hp.unstable_length = get<double>(h, "unstable_length", "horseshoe.", hp.unstable_length);
        hp.stable_length = get<double>(h, "stable_length", "horseshoe.", hp.stable_length);
        if (h.contains("arc_cuts")) {
            const auto& a = h.at("arc_cuts");
            if (!a.is_array() || a.size() != 4)
                throw Error(ErrorKind::ConfigError, "field 'horseshoe.arc_cuts': expected four lengths");
            for (size_t k = 0; k < 4; ++k) {
                hp.arc_cuts[k] = a[k].get<double>();
                detail::positive(hp.arc_cuts[k], "horseshoe.arc_cuts");
            }
        }
        c.closed_form = get<bool>(h, "closed_form", "horseshoe.", c.closed_form);
        if (h.contains("saddle")) c.saddle = detail::vec3_field(h.at("saddle"), "horseshoe.saddle");
        if (hs.n_max < 1) throw Error(ErrorKind::ConfigError, "field 'horseshoe.n_max': must be >= 1");
        if (hs.depth < 1 || hs.depth > 12) throw Error(ErrorKind::ConfigError, "field 'horseshoe.depth': must be in 1..12");
        detail::positive(hs.cone_opening, "horseshoe.cone_opening");
        if (!(hs.expansion_margin > 1))
            throw Error(ErrorKind::ConfigError, "field 'horseshoe.expansion_margin': must exceed 1");
        if (!(hs.contraction_margin > 0 && hs.contraction_margin < 1))
            throw Error(ErrorKind::ConfigError, "field 'horseshoe.contraction_margin': must lie in (0, 1)");
    }
    if (j.contains("sliding")) {
        const std::string sl = get<std::string>(j, "sliding", "", "");
        if (sl == "reject") c.sliding = SlidingPolicy::Reject;
        else if (sl == "ignore") c.sliding = SlidingPolicy::Ignore;
        else throw Error(ErrorKind::ConfigError, "field 'sliding': unknown value '" + sl + "'");
    }
    c.out_dir = get<std::string>(j, "out", "", c.out_dir);
    c.seed = get<std::uint64_t>(j, "seed", "", c.seed);
    return c;
}

inline ScenarioConfig load_config(const std::string& path) { return parse_config(io::read_json(path)); }

struct BuiltSystem {
    PiecewiseSystem z;
    std::optional<PlanarHalfMaps> maps;
    std::optional<ModelId> model;
    bool fixture = false; // planar reversible fixture (Cubic, McMillan)
};

// Built-in names: Z1, Z2, CrossZ0, Zeps:<eps>, Cubic:<delta>, Cubic:tangency, McMillan:<kappa>.
inline BuiltSystem build_system(const ScenarioConfig& c)
{
    BuiltSystem b;
    if (!c.model.empty()) {
        auto param = [&](size_t at) {
            const std::string s = c.model.substr(at);
            try {
                size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::exception&) {
                throw Error(ErrorKind::ConfigError, "field 'system.model': bad parameter in '" + c.model + "'");
            }
        };
        if (c.model.rfind("Cubic:", 0) == 0) {
            const double d = c.model == "Cubic:tangency" ? cubic_tangency_delta : param(6);
            auto fx = cubic_fixture(d);
            b.z = fx.system;
            b.maps = fx.maps;
            b.fixture = true;
        } else if (c.model.rfind("McMillan:", 0) == 0) {
            auto fx = mcmillan_fixture(param(9));
            b.z = fx.system;
            b.maps = fx.maps;
            b.fixture = true;
        } else {
            const ModelId id = ModelId::parse(c.model);
            b.z = model_system(id);
            b.model = id;
            if (id.kind == ModelKind::Z1 || id.kind == ModelKind::Z2) b.maps = model_half_maps(id);
        }
    } else {
        b.z = models::pair(SmoothField::from_poly(*c.upper), SmoothField::from_poly(*c.lower), c.name);
        b.z.switching = ScalarField::from_poly(*c.switching);
    }
    b.z.box = c.box;
    return b;
}

inline ReturnMapHandle build_handle(const ScenarioConfig& c, const BuiltSystem& b)
{
    ReturnMapHandle h = make_handle(b.z, c.order, c.integrator);
    if (c.closed_form && b.maps) h.closed_form = b.maps;
    h.sliding = c.sliding.value_or(b.fixture ? SlidingPolicy::Ignore : SlidingPolicy::Reject);
    return h;
}

} // namespace tchain
