#include "tchain/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace tchain::cli {

using io::json;

namespace {

class Runner {
public:
    Runner(RunReport& rep, bool verbose) : rep_(rep), verbose_(verbose) {}

    // Runs one stage; Error is recorded and turned into a failed stage.
    template <class Fn>
    bool stage(const std::string& name, Fn&& fn)
    {
        const auto t0 = std::chrono::steady_clock::now();
        StageStatus st{name, "ok", "", 0};
        try {
            fn();
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::ConfigError) throw;
            st.status = "failed";
            st.message = e.what();
        }
        st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (verbose_)
            std::cerr << rep_.command << " " << name << ": " << st.status << " in " << st.seconds << " s"
                      << (st.message.empty() ? "" : " (" + st.message + ")") << "\n";
        rep_.stages.push_back(st);
        return st.status == "ok";
    }

    void skip(const std::string& name, const std::string& why) { rep_.stages.push_back({name, "skipped", why, 0}); }

private:
    RunReport& rep_;
    bool verbose_;
};

std::string out_dir(const ScenarioConfig& cfg, const Options& opt)
{
    const std::string d = opt.out_dir.empty() ? cfg.out_dir : opt.out_dir;
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw Error(ErrorKind::ConfigError, "cannot create output directory " + d + ": " + ec.message());
    return d;
}

void emit(RunReport& rep, const std::string& dir, const std::string& name, const std::string& text)
{
    const std::string path = (fs::path(dir) / name).string();
    io::write_file(path, text);
    rep.artifacts.push_back(path);
}

void finish(RunReport& rep, const std::string& dir)
{
    const std::string path = (fs::path(dir) / ("report_" + rep.command + ".json")).string();
    rep.artifacts.push_back(path);
    io::write_file(path, io::dump(to_json(rep)) + "\n");
}

// Point of Sigma above (x, y): Newton on z from z = 0.
std::optional<Vec3> sigma_point(const PiecewiseSystem& z, double x, double y)
{
    Vec3 p(x, y, 0);
    for (int it = 0; it < 50; ++it) {
        const double f = z.f(p);
        if (std::abs(f) < 1e-13 * (1 + p.norm())) return p;
        const double fz = z.switching.gradient(p).z();
        if (fz == 0) return std::nullopt;
        p.z() -= f / fz;
    }
    if (std::abs(z.f(p)) < 1e-10 * (1 + p.norm())) return p;
    return std::nullopt;
}

struct ChainDefaults {
    Vec3 p1{0, 0, 0};
    std::optional<Vec3> p2;
    Section tau_u, tau_s;
};

std::optional<ChainDefaults> chain_setup(const ScenarioConfig& cfg, const BuiltSystem& b)
{
    if (cfg.chain) return ChainDefaults{cfg.chain->p1, cfg.chain->p2, cfg.chain->unstable_section,
                                        cfg.chain->stable_section};
    if (!b.model) return std::nullopt;
    if (b.model->kind == ModelKind::CrossZ0)
        return ChainDefaults{{0, 0, 0}, Vec3(2, 2, 0), Section(models::cross_plane(0)), Section(models::cross_plane(0))};
    if (b.model->kind == ModelKind::RegularizedZeps)
        return ChainDefaults{{0, 0, 0}, Vec3(2, 2, 0), Section(models::cross_plane(-b.model->eps)),
                             Section(models::cross_plane(b.model->eps))};
    return std::nullopt;
}

double nearest_distance(const ChainClassification& c, const Vec3& ref)
{
    double d = std::numeric_limits<double>::infinity();
    for (const auto& p : c.points) d = std::min(d, (p.p - ref).norm());
    return d;
}

} // namespace

json to_json(const RunReport& r)
{
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back({{"name", s.name}, {"status", s.status}, {"message", s.message}});
    return {{"command", r.command},
            {"scenario", r.scenario},
            {"stages", stages},
            {"artifacts", r.artifacts},
            {"warnings", r.warnings},
            {"summary", r.summary},
            {"exit_code", r.exit_code}};
}

// ---------------------------------------------------------------------------

RunReport cmd_analyze(const ScenarioConfig& cfg, const Options& opt)
{
    RunReport rep;
    rep.command = "analyze";
    rep.scenario = cfg.name;
    const std::string dir = out_dir(cfg, opt);
    Runner run(rep, opt.verbose);
    const BuiltSystem b = build_system(cfg);
    const ReturnMapHandle h = build_handle(cfg, b);
    const std::uint64_t seed = opt.seed.value_or(cfg.seed);

    run.stage("atlas", [&] {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> ux(cfg.atlas.x0, cfg.atlas.x1), uy(cfg.atlas.y0, cfg.atlas.y1);
        io::CsvWriter w({"x", "y", "z", "label"});
        std::map<std::string, int> counts;
        int off_sigma = 0, outside = 0;
        for (int k = 0; k < cfg.atlas_samples; ++k) {
            const double x = ux(rng), y = uy(rng);
            const auto p = sigma_point(b.z, x, y);
            if (!p) {
                ++off_sigma;
                continue;
            }
            if (!b.z.box.contains(*p)) {
                ++outside;
                continue;
            }
            const std::string lab = to_string(classify_sigma_point(b.z, *p));
            ++counts[lab];
            w.row(p->x(), p->y(), p->z(), lab);
        }
        emit(rep, dir, "atlas.csv", w.str());
        json c = json::object();
        for (const auto& [k, v] : counts) c[k] = v;
        rep.summary["atlas_counts"] = c;
        const int tangency = counts["TangencyX"] + counts["TangencyY"] + counts["TangencyBoth"];
        if (tangency) rep.warnings.push_back(std::to_string(tangency) + " atlas samples in the tangency band");
        if (off_sigma) rep.warnings.push_back(std::to_string(off_sigma) + " atlas samples without a Sigma point");
        if (outside) rep.warnings.push_back(std::to_string(outside) + " atlas samples outside the box");
    });

    std::vector<Vec3> found;
    const bool searched = run.stage("tsing search", [&] { found = find_t_singularities(b.z, cfg.search, cfg.search_grid); });
    if (searched) {
        run.stage("tsing analysis", [&] {
            json reports = json::array(), failures = json::array();
            for (const auto& p : found) {
                try {
                    reports.push_back(io::to_json(analyze_t_singularity(b.z, p, h)));
                } catch (const Error& e) {
                    failures.push_back({{"location", io::vec(p)}, {"error", to_string(e.kind())}, {"message", e.what()}});
                    rep.warnings.push_back(std::string("T-singularity analysis: ") + e.what());
                }
            }
            emit(rep, dir, "tsing.json", io::dump({{"reports", reports}, {"failures", failures}}) + "\n");
            rep.summary["tsing_count"] = reports.size();
        });
    } else {
        run.skip("tsing analysis", "search failed");
    }
    for (const auto& s : rep.stages)
        if (s.status == "failed") rep.exit_code = 3;
    finish(rep, dir);
    return rep;
}

// ---------------------------------------------------------------------------

RunReport cmd_chain(const ScenarioConfig& cfg, const Options& opt)
{
    RunReport rep;
    rep.command = "chain";
    rep.scenario = cfg.name;
    const std::string dir = out_dir(cfg, opt);
    Runner run(rep, opt.verbose);
    const BuiltSystem b = build_system(cfg);
    const auto setup = chain_setup(cfg, b);

    json out = {{"scenario", cfg.name}};
    if (!setup) {
        run.skip("chain", "no communication configured");
        ChainClassification none;
        out["chain"] = io::to_json(none);
        out["note"] = "no communication configured";
        emit(rep, dir, "chain.json", io::dump(out) + "\n");
        rep.summary["kind"] = to_string(none.kind);
        finish(rep, dir);
        return rep;
    }
    out["unstable_section"] = io::section_json(setup->tau_u);
    out["stable_section"] = io::section_json(setup->tau_s);

    std::optional<ChainClassification> chain;
    io::CsvWriter traces({"name", "s", "x", "y", "z", "tag"});
    bool ok = true;
    if (setup->p2) {
        ok = run.stage("connect", [&] {
            const ChainRun cr = connect_cones(b.z, setup->p1, *setup->p2, setup->tau_u, setup->tau_s, cfg.integrator,
                                              cfg.trace, cfg.order);
            if (cr.t1) out["t1"] = io::to_json(*cr.t1);
            if (cr.t2) out["t2"] = io::to_json(*cr.t2);
            if (cr.c_u) io::trace_rows(traces, *cr.c_u, "c_u"), out["c_u"] = io::trace_meta(*cr.c_u);
            if (cr.chat_u) io::trace_rows(traces, *cr.chat_u, "chat_u"), out["chat_u"] = io::trace_meta(*cr.chat_u);
            if (cr.c_s) io::trace_rows(traces, *cr.c_s, "c_s"), out["c_s"] = io::trace_meta(*cr.c_s);
            out["errors"] = cr.errors;
            for (const auto& e : cr.errors) rep.warnings.push_back(e);
            chain = cr.chain;
            if (!chain) throw Error(ErrorKind::NotCertified, "no classification: " + (cr.errors.empty() ? std::string("?") : cr.errors.back()));
        });
    } else {
        ok = run.stage("conditions", [&] {
            const ConditionsReport cr =
                check_tc_r(b.z, setup->p1, setup->tau_u, setup->tau_s, cfg.integrator, cfg.trace, cfg.order);
            if (cr.c_u) io::trace_rows(traces, *cr.c_u, "c_u");
            if (cr.chat_u) io::trace_rows(traces, *cr.chat_u, "chat_u");
            if (cr.c_s) io::trace_rows(traces, *cr.c_s, "c_s");
            emit(rep, dir, "conditions.json", io::dump(io::to_json(cr)) + "\n");
            rep.summary["overall"] = cr.overall;
            chain = cr.chain;
        });
    }
    if (chain) {
        out["chain"] = io::to_json(*chain);
        rep.summary["kind"] = to_string(chain->kind);
        rep.summary["K"] = chain->K;
        if (b.model && (b.model->kind == ModelKind::CrossZ0 || b.model->kind == ModelKind::RegularizedZeps)) {
            const Vec3 pp = cone_intersection_point(), pm = cone_intersection_point_lower();
            const double dp = nearest_distance(*chain, pp), dm = nearest_distance(*chain, pm);
            out["reference"] = {{"p_plus", io::vec(pp)},
                                {"p_minus", io::vec(pm)},
                                {"distance_plus", dp},
                                {"distance_minus", dm}};
            rep.summary["distance_plus"] = dp;
            rep.summary["distance_minus"] = dm;
        }
    }
    emit(rep, dir, "chain.json", io::dump(out) + "\n");
    emit(rep, dir, "traces.csv", traces.str());
    if (!ok) rep.exit_code = 3;
    finish(rep, dir);
    return rep;
}

// ---------------------------------------------------------------------------

RunReport cmd_horseshoe(const ScenarioConfig& cfg, const Options& opt)
{
    RunReport rep;
    rep.command = "horseshoe";
    rep.scenario = cfg.name;
    const std::string dir = out_dir(cfg, opt);
    Runner run(rep, opt.verbose);
    const BuiltSystem b = build_system(cfg);
    const ReturnMapHandle h = build_handle(cfg, b);

    std::optional<TSingularityReport> ts;
    if (!run.stage("tsing", [&] { ts = analyze_t_singularity(b.z, cfg.saddle, h); })) {
        rep.exit_code = 3;
        emit(rep, dir, "certificate.json", io::dump({{"certified", false}, {"stage", "tsing"},
                                                      {"message", rep.stages.back().message}}) + "\n");
        finish(rep, dir);
        return rep;
    }

    HorseshoeRun hr;
    run.stage("pipeline", [&] {
        hr = run_horseshoe(h, *ts, cfg.horseshoe);
        if (!hr.certified) throw Error(hr.failure, hr.stage + ": " + hr.message);
    });

    io::CsvWriter mf({"name", "s", "x", "y", "z", "tag"});
    for (const auto& c : hr.branches) {
        io::curve_rows(mf, c);
        if (c.truncated) rep.warnings.push_back(std::string(to_string(c.branch)) + " truncated: " + c.truncation);
    }
    emit(rep, dir, "manifolds.csv", mf.str());

    json cert = {{"certified", hr.certified}, {"stage", hr.stage}, {"message", hr.message}};
    cert["contact"] = {{"found", hr.contact.found},
                       {"transverse", hr.contact.transverse},
                       {"q", io::vec(hr.contact.q)},
                       {"s_unstable", hr.contact.s_unstable},
                       {"distance", hr.contact.distance},
                       {"angle", hr.contact.angle}};
    json hom = json::array();
    for (const auto& p : hr.homoclinics) hom.push_back(io::to_json(p));
    cert["homoclinics"] = hom;
    cert["certificate"] = hr.certificate ? io::to_json(*hr.certificate) : json(nullptr);
    emit(rep, dir, "certificate.json", io::dump(cert) + "\n");
    rep.summary["certified"] = hr.certified;

    if (!hr.certificate) {
        rep.exit_code = 3;
        run.skip("periodic", "no certificate");
        finish(rep, dir);
        return rep;
    }
    const auto& c = *hr.certificate;
    rep.summary["n0"] = c.n0;
    rep.summary["lambda_crossing"] = c.audit.crossing;
    rep.summary["lambda_samples"] = c.audit.entries.size();

    io::CsvWriter lw({"word", "x", "y", "residual", "label"});
    for (size_t k = 0; k < c.lambda_samples.size(); ++k)
        lw.row(c.lambda_words[k], c.lambda_samples[k].x(), c.lambda_samples[k].y(), c.lambda_residuals[k],
               std::string(to_string(c.audit.entries[k].label)));
    emit(rep, dir, "lambda.csv", lw.str());
    emit(rep, dir, "audit.json", io::dump(io::to_json(c.audit)) + "\n");

    run.stage("periodic", [&] {
        io::CsvWriter pw({"n", "word", "k", "x", "y", "residual", "newton_ok"});
        json counts = json::array();
        for (int n = 1; n <= 4; ++n) {
            std::vector<Vec2> distinct;
            for (const auto& w : all_words(n)) {
                try {
                    const PeriodicPoint pt = symbolic_periodic_point(c, w);
                    for (size_t k = 0; k < pt.orbit.size(); ++k)
                        pw.row(n, w, k, pt.orbit[k].x(), pt.orbit[k].y(), pt.residual, pt.newton_ok ? 1 : 0);
                    if (!pt.newton_ok || !(pt.residual < 1e-8)) continue;
                    bool fresh = true;
                    for (const auto& q : distinct) fresh = fresh && (q - pt.orbit[0]).norm() > 1e-8;
                    if (fresh) distinct.push_back(pt.orbit[0]);
                } catch (const Error& e) {
                    rep.warnings.push_back("word " + w + ": " + e.what());
                }
            }
            counts.push_back(distinct.size());
        }
        emit(rep, dir, "periodic.csv", pw.str());
        rep.summary["periodic_counts"] = counts;
    });
    for (const auto& s : rep.stages)
        if (s.status == "failed") rep.exit_code = 3;
    finish(rep, dir);
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

using Blocks = std::vector<std::pair<std::string, std::vector<std::vector<double>>>>;

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<double>& block(Blocks& bl, const std::string& name)
{
    for (auto& [n, rows] : bl)
        if (n == name) return rows.emplace_back();
    bl.push_back({name, {}});
    return bl.back().second.emplace_back();
}

void closed(Blocks& bl, const std::string& name, const geom::Polyline& p)
{
    if (p.empty()) return;
    bl.push_back({name, {}});
    for (const auto& v : p) bl.back().second.push_back({v.x(), v.y()});
    bl.back().second.push_back({p.front().x(), p.front().y()});
}

Blocks csv_blocks(const std::string& path)
{
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    Blocks bl;
    auto d = [](const std::string& s) { return s == "null" ? std::nan("") : std::stod(s); };
    if (line == "name,s,x,y,z,tag") {
        bool planar = true;
        while (std::getline(f, line)) {
            const auto c = split(line);
            if (c.size() != 6) throw Error(ErrorKind::UnknownArtifact, path + ": malformed row");
            block(bl, c[0]) = {d(c[2]), d(c[3]), d(c[4])};
            planar = planar && d(c[4]) == 0;
        }
        if (planar)
            for (auto& [n, rows] : bl)
                for (auto& r : rows) r.pop_back();
    } else if (line == "x,y,z,label") {
        while (std::getline(f, line)) {
            const auto c = split(line);
            if (c.size() != 4) throw Error(ErrorKind::UnknownArtifact, path + ": malformed row");
            block(bl, c[3]) = {d(c[0]), d(c[1])};
        }
    } else if (line == "word,x,y,residual,label") {
        while (std::getline(f, line)) {
            const auto c = split(line);
            if (c.size() != 5) throw Error(ErrorKind::UnknownArtifact, path + ": malformed row");
            block(bl, c[4]) = {d(c[1]), d(c[2])};
        }
    } else {
        throw Error(ErrorKind::UnknownArtifact, path + ": unrecognized CSV header '" + line + "'");
    }
    return bl;
}

Blocks certificate_blocks(const json& j)
{
    const json& c = j.contains("certificate") ? j.at("certificate") : j;
    if (!c.is_object() || !c.contains("patch") || !c.contains("strips"))
        throw Error(ErrorKind::UnknownArtifact, "JSON artifact carries no certificate");
    Blocks bl;
    closed(bl, "Q", io::polyline_from(c.at("patch").at("boundary")));
    for (const auto& s : c.at("strips")) {
        const std::string sym = s.at("symbol").get<std::string>();
        closed(bl, "strip_" + sym, io::polyline_from(s.at("polygon")));
        closed(bl, "image_" + sym, io::polyline_from(s.at("image")));
    }
    return bl;
}

} // namespace

RunReport cmd_plotdata(const std::string& artifact, const Options& opt)
{
    RunReport rep;
    rep.command = "plotdata";
    rep.scenario = artifact;
    if (!fs::is_regular_file(artifact)) throw Error(ErrorKind::UnknownArtifact, "no such artifact: " + artifact);
    const std::string dir = opt.out_dir.empty() ? fs::path(artifact).parent_path().string() : opt.out_dir;
    if (!dir.empty()) fs::create_directories(dir);
    Blocks bl;
    const std::string ext = fs::path(artifact).extension().string();
    if (ext == ".csv") {
        bl = csv_blocks(artifact);
    } else if (ext == ".json") {
        json j;
        try {
            std::ifstream f(artifact);
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::UnknownArtifact, artifact + ": " + e.what());
        }
        if (j.contains("certificate") && j.at("certificate").is_null())
            throw Error(ErrorKind::UnknownArtifact, artifact + ": run was not certified, nothing to plot");
        bl = certificate_blocks(j);
    } else {
        throw Error(ErrorKind::UnknownArtifact, artifact + ": unsupported artifact type");
    }
    std::ostringstream os;
    os.precision(17);
    for (size_t k = 0; k < bl.size(); ++k) {
        if (k) os << "\n\n";
        os << "# " << bl[k].first << "\n";
        for (const auto& r : bl[k].second) {
            for (size_t i = 0; i < r.size(); ++i) os << (i ? " " : "") << io::num(r[i]);
            os << "\n";
        }
    }
    const std::string name = fs::path(artifact).stem().string() + ".dat";
    emit(rep, dir.empty() ? "." : dir, name, os.str());
    rep.summary["blocks"] = bl.size();
    return rep;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv)
{
    CLI::App app{"T-singularity chains and horseshoes in 3D Filippov systems"};
    app.require_subcommand(1);
    std::string config, artifact;
    Options opt;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "scenario JSON");
        if (needs_config) c->required();
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--seed", seed, "sampling seed (overrides the config)");
        sub->add_flag("--verbose", opt.verbose, "stage timings on stderr");
    };
    auto* an = app.add_subcommand("analyze", "Sigma atlas and T-singularity reports");
    auto* ch = app.add_subcommand("chain", "cone traces and T-chain classification");
    auto* hs = app.add_subcommand("horseshoe", "horseshoe certificate, periodic orbits and audit");
    auto* pd = app.add_subcommand("plotdata", "gnuplot data blocks from an artifact");
    add_common(an, true);
    add_common(ch, true);
    add_common(hs, true);
    add_common(pd, false);
    pd->add_option("--artifact", artifact, "CSV or JSON artifact")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    for (auto* sub : {an, ch, hs, pd})
        if (sub->count_all() && sub->get_option("--seed")->count()) opt.seed = seed;

    try {
        RunReport rep;
        if (pd->parsed()) {
            rep = cmd_plotdata(artifact, opt);
        } else {
            const ScenarioConfig cfg = load_config(config);
            if (an->parsed()) rep = cmd_analyze(cfg, opt);
            else if (ch->parsed()) rep = cmd_chain(cfg, opt);
            else rep = cmd_horseshoe(cfg, opt);
        }
        for (const auto& s : rep.stages)
            if (s.status == "failed") std::cerr << rep.command << ": " << s.name << " failed: " << s.message << "\n";
        for (const auto& a : rep.artifacts) std::cout << a << "\n";
        return rep.exit_code;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return e.kind() == ErrorKind::ConfigError ? 2 : 3;
    }
}

} // namespace tchain::cli
