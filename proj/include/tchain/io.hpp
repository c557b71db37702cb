#pragma once

#include "horseshoe.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace tchain::io {

using json = nlohmann::json;

inline std::string num(double v)
{
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline void write(std::ostringstream& os, const json& j, int indent, int depth)
{
    const std::string pad(static_cast<size_t>(indent * (depth + 1)), ' ');
    const std::string end(static_cast<size_t>(indent * depth), ' ');
    switch (j.type()) {
    case json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << "{\n";
        size_t k = 0;
        for (auto it = j.begin(); it != j.end(); ++it, ++k) {
            os << pad << json(it.key()).dump() << ": ";
            write(os, it.value(), indent, depth + 1);
            os << (k + 1 < j.size() ? ",\n" : "\n");
        }
        os << end << "}";
        return;
    }
    case json::value_t::array: {
        if (j.empty()) {
            os << "[]";
            return;
        }
        // numeric rows stay on one line
        bool flat = true;
        for (const auto& v : j) flat = flat && (v.is_number() || v.is_null());
        if (flat) {
            os << "[";
            for (size_t k = 0; k < j.size(); ++k) {
                if (k) os << ", ";
                write(os, j[k], indent, depth + 1);
            }
            os << "]";
            return;
        }
        os << "[\n";
        for (size_t k = 0; k < j.size(); ++k) {
            os << pad;
            write(os, j[k], indent, depth + 1);
            os << (k + 1 < j.size() ? ",\n" : "\n");
        }
        os << end << "]";
        return;
    }
    case json::value_t::number_float: os << num(j.get<double>()); return;
    default: os << j.dump(); return;
    }
}

} // namespace detail

// JSON text with every float printed to 17 significant digits.
inline std::string dump(const json& j, int indent = 2)
{
    std::ostringstream os;
    detail::write(os, j, indent, 0);
    os << "\n";
    return os.str();
}

inline void write_file(const std::string& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::ConfigError, "cannot write " + path);
    f << text;
}

inline json read_json(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::ConfigError, "cannot read " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigError, path + ": " + e.what());
    }
}

inline double to_num(const json& j) { return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>(); }

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header)
    {
        for (size_t k = 0; k < header.size(); ++k) os_ << (k ? "," : "") << header[k];
        os_ << "\n";
    }
    template <class... T>
    void row(const T&... cells)
    {
        size_t k = 0;
        ((os_ << (k++ ? "," : "") << cell(cells)), ...);
        os_ << "\n";
    }
    std::string str() const { return os_.str(); }

private:
    static std::string cell(double v) { return num(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(size_t v) { return std::to_string(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    std::ostringstream os_;
};

// ---------------------------------------------------------------------------
// Records

inline json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }
inline json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline Vec2 vec2(const json& j) { return {to_num(j.at(0)), to_num(j.at(1))}; }
inline Vec3 vec3(const json& j) { return {to_num(j.at(0)), to_num(j.at(1)), to_num(j.at(2))}; }

inline json polyline(const geom::Polyline& p)
{
    json a = json::array();
    for (const auto& v : p) a.push_back(vec(v));
    return a;
}

inline geom::Polyline polyline_from(const json& j)
{
    geom::Polyline p;
    for (const auto& v : j) p.push_back(vec2(v));
    return p;
}

inline json to_json(const TSingularityReport& r)
{
    return {{"location", vec(r.location)},
            {"fold_class", to_string(r.fold.cls)},
            {"tangent_x", vec(r.tangent_x)},
            {"tangent_y", vec(r.tangent_y)},
            {"jacobian", json::array({r.jacobian.matrix(0, 0), r.jacobian.matrix(0, 1), r.jacobian.matrix(1, 0),
                                      r.jacobian.matrix(1, 1)})},
            {"determinant", r.jacobian.matrix.determinant()},
            {"lambda_plus", r.lambda_plus},
            {"lambda_minus", r.lambda_minus},
            {"v_plus", vec(r.v_plus)},
            {"v_minus", vec(r.v_minus)},
            {"saddle", r.saddle},
            {"sector_ok", r.sector_ok},
            {"stable", r.stable},
            {"order", to_string(r.order)},
            {"caveat", r.caveat}};
}

inline TSingularityReport tsing_from_json(const json& j)
{
    TSingularityReport r;
    r.location = vec3(j.at("location"));
    r.tangent_x = vec2(j.at("tangent_x"));
    r.tangent_y = vec2(j.at("tangent_y"));
    const auto& m = j.at("jacobian");
    r.jacobian.matrix << m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>(), m.at(3).get<double>();
    r.lambda_plus = j.at("lambda_plus").get<double>();
    r.lambda_minus = j.at("lambda_minus").get<double>();
    r.v_plus = vec2(j.at("v_plus"));
    r.v_minus = vec2(j.at("v_minus"));
    r.saddle = j.at("saddle").get<bool>();
    r.sector_ok = j.at("sector_ok").get<bool>();
    r.stable = j.at("stable").get<bool>();
    r.order = j.at("order").get<std::string>() == "lower_after_upper" ? Order::LowerAfterUpper : Order::UpperAfterLower;
    r.caveat = j.at("caveat").get<std::string>();
    const std::string fc = j.at("fold_class").get<std::string>();
    for (auto c : {FoldClass::VisibleVisible, FoldClass::InvisibleVisible, FoldClass::VisibleInvisible,
                   FoldClass::Invisible_T})
        if (fc == to_string(c)) r.fold.cls = c;
    return r;
}

inline json to_json(const ChainClassification& c)
{
    json pts = json::array();
    for (const auto& p : c.points)
        pts.push_back({{"p", vec(p.p)}, {"angle", p.angle}, {"param_a", p.param_a}, {"param_b", p.param_b}});
    return {{"kind", to_string(c.kind)},
            {"K", c.K},
            {"points", pts},
            {"min_distance", c.min_distance},
            {"hausdorff", c.hausdorff}};
}

inline ChainClassification chain_from_json(const json& j)
{
    ChainClassification c;
    const std::string k = j.at("kind").get<std::string>();
    for (auto v : {ChainKind::NoChain, ChainKind::PinchedTorus, ChainKind::TransverseChains})
        if (k == to_string(v)) c.kind = v;
    c.K = j.at("K").get<int>();
    for (const auto& p : j.at("points"))
        c.points.push_back({vec3(p.at("p")), p.at("angle").get<double>(), p.at("param_a").get<double>(),
                            p.at("param_b").get<double>()});
    c.min_distance = to_num(j.at("min_distance"));
    c.hausdorff = to_num(j.at("hausdorff"));
    return c;
}

inline json section_json(const Section& s)
{
    return {{"normal", vec(s.plane.normal)},
            {"offset", s.plane.offset},
            {"center", vec(s.center)},
            {"radius", s.radius}};
}

inline json trace_meta(const CircleTrace& t)
{
    json corners = json::array();
    for (size_t c : t.corners) corners.push_back({{"index", c}, {"point", vec(t.points[c])}});
    return {{"section", section_json(t.section)}, {"points", t.points.size()}, {"corners", corners}};
}

inline json to_json(const ConditionsReport& r)
{
    json j = {{"tc1", r.tc1},
              {"tc2", r.tc2},
              {"tc3", r.tc3},
              {"r", r.r},
              {"overall", r.overall},
              {"notes", {{"tc1", r.tc1_note}, {"tc2", r.tc2_note}, {"tc3", r.tc3_note}, {"r", r.r_note}}},
              {"cylinder_orbits", r.cylinder_orbits},
              {"r_u_hits", r.r_u.size()},
              {"r_s_hits", r.r_s.size()},
              {"caveat", r.caveat}};
    json marked = json::array();
    for (const auto& m : r.marked) marked.push_back(vec(m));
    j["marked"] = marked;
    if (r.tsing) j["tsing"] = to_json(*r.tsing);
    if (r.chain) j["chain"] = to_json(*r.chain);
    if (r.c_u) j["c_u"] = trace_meta(*r.c_u);
    if (r.chat_u) j["chat_u"] = trace_meta(*r.chat_u);
    if (r.c_s) j["c_s"] = trace_meta(*r.c_s);
    return j;
}

inline void trace_rows(CsvWriter& w, const CircleTrace& t, const std::string& name)
{
    const auto s = geom::arclengths(t.planar());
    for (size_t i = 0; i < t.points.size(); ++i) {
        const char* tag = t.tags[i] > 0 ? "upper" : t.tags[i] < 0 ? "lower" : "corner";
        w.row(name, s[i], t.points[i].x(), t.points[i].y(), t.points[i].z(), std::string(tag));
    }
}

inline void curve_rows(CsvWriter& w, const ManifoldCurve& c)
{
    for (size_t i = 0; i < c.points.size(); ++i)
        w.row(std::string(to_string(c.branch)), c.s[i], c.points[i].x(), c.points[i].y(), 0.0,
              "gen" + std::to_string(static_cast<int>(std::floor(c.u[i]))));
}

inline json to_json(const ManifoldCurve& c)
{
    return {{"branch", to_string(c.branch)},
            {"points", c.points.size()},
            {"length", c.length()},
            {"generations", c.generations},
            {"truncated", c.truncated},
            {"truncation", c.truncation}};
}

inline json to_json(const HomoclinicPoint& h)
{
    json it = json::array();
    for (const auto& p : h.itinerary) it.push_back(vec(p));
    return {{"q", vec(h.q)},
            {"angle", h.angle},
            {"s_unstable", h.s_unstable},
            {"s_stable", h.s_stable},
            {"itinerary", it}};
}

inline json to_json(const AuditEntry& e)
{
    json hits = json::array();
    for (auto h : e.hits) hits.push_back(to_string(h));
    return {{"start", vec(e.start)},
            {"label", to_string(e.label)},
            {"steps", e.steps_done},
            {"max_deviation", e.max_deviation},
            {"note", e.note},
            {"hits", hits}};
}

inline json to_json(const AuditReport& r)
{
    json entries = json::array();
    for (const auto& e : r.entries) entries.push_back(to_json(e));
    return {{"crossing", r.crossing}, {"pseudo_orbit", r.pseudo}, {"sliding_capture", r.sliding}, {"entries", entries}};
}

inline json to_json(const HorseshoeCertificate& c)
{
    const auto& q = c.patch;
    json strips = json::array();
    for (const auto& s : c.strips) {
        json prof = json::array();
        for (const auto& p : s.profile) prof.push_back(json::array({p[0], p[1], p[2]}));
        strips.push_back({{"symbol", std::string(1, s.symbol)},
                          {"orientation", s.orientation},
                          {"image_a", vec(s.image_a)},
                          {"image_center_a", s.image_center_a},
                          {"profile", prof},
                          {"polygon", polyline(s.polygon)},
                          {"image", polyline(s.image)}});
    }
    json lambda = json::array();
    for (size_t k = 0; k < c.lambda_samples.size(); ++k)
        lambda.push_back({{"word", c.lambda_words[k]},
                          {"point", vec(c.lambda_samples[k])},
                          {"residual", c.lambda_residuals[k]},
                          {"label", to_string(c.audit.entries[k].label)}});
    json diags = c.diagnostics;
    return {{"n0", c.n0},
            {"patch",
             {{"s_lo", q.s_lo},
              {"s_hi", q.s_hi},
              {"height", q.height},
              {"tangent", vec(q.tangent)},
              {"normal", vec(q.normal)},
              {"corners", polyline({q.corners.begin(), q.corners.end()})},
              {"q1", vec(q.q1_hat)},
              {"phix_q2", vec(q.phix_q2_hat)},
              {"phi_q1", vec(q.phi_q1_hat)},
              {"boundary", polyline(q.boundary(32))}}},
            {"strips", strips},
            {"expansion_min", c.expansion_min},
            {"contraction_max", c.contraction_max},
            {"cones_ok", c.cones_ok},
            {"cone_opening", c.params.cone_opening},
            {"expansion_margin", c.params.expansion_margin},
            {"contraction_margin", c.params.contraction_margin},
            {"depth", c.depth},
            {"lambda", lambda},
            {"all_crossing", c.all_crossing},
            {"crossing_bound", c.crossing_bound},
            {"diagnostics", diags}};
}

// Summary record of a certificate, as parsed back from its JSON.
struct CertificateRecord {
    int n0 = 0;
    double expansion_min = 0, contraction_max = 0;
    bool cones_ok = false, all_crossing = false;
    int depth = 0;
    std::vector<std::string> words, labels;
    std::vector<Vec2> lambda;
    std::vector<double> residuals;
    std::array<std::vector<std::array<double, 3>>, 2> profiles;

    bool operator==(const CertificateRecord&) const = default;
};

inline CertificateRecord record_of(const HorseshoeCertificate& c)
{
    CertificateRecord r;
    r.n0 = c.n0;
    r.expansion_min = c.expansion_min;
    r.contraction_max = c.contraction_max;
    r.cones_ok = c.cones_ok;
    r.all_crossing = c.all_crossing;
    r.depth = c.depth;
    r.words = c.lambda_words;
    for (const auto& e : c.audit.entries) r.labels.push_back(to_string(e.label));
    r.lambda = c.lambda_samples;
    r.residuals = c.lambda_residuals;
    for (int k = 0; k < 2; ++k) r.profiles[static_cast<size_t>(k)] = c.strips[static_cast<size_t>(k)].profile;
    return r;
}

inline CertificateRecord certificate_from_json(const json& j)
{
    CertificateRecord r;
    r.n0 = j.at("n0").get<int>();
    r.expansion_min = to_num(j.at("expansion_min"));
    r.contraction_max = to_num(j.at("contraction_max"));
    r.cones_ok = j.at("cones_ok").get<bool>();
    r.all_crossing = j.at("all_crossing").get<bool>();
    r.depth = j.at("depth").get<int>();
    for (const auto& e : j.at("lambda")) {
        r.words.push_back(e.at("word").get<std::string>());
        r.labels.push_back(e.at("label").get<std::string>());
        r.lambda.push_back(vec2(e.at("point")));
        r.residuals.push_back(to_num(e.at("residual")));
    }
    for (size_t k = 0; k < 2; ++k)
        for (const auto& p : j.at("strips").at(k).at("profile"))
            r.profiles[k].push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    return r;
}

} // namespace tchain::io
