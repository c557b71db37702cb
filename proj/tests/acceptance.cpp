// One PASS/FAIL line per acceptance criterion. Every tolerance is a named constant below.
#include "tchain/cli.hpp"
#include "tchain/horseshoe.hpp"
#include "tchain/io.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace tchain;
namespace fs = std::filesystem;

namespace {

// criterion 1
constexpr double kReturnMapTol = 1e-8;
constexpr double kReturnMapSeconds = 10;
// criterion 2
constexpr double kEigenvalueTol = 1e-6;
constexpr double kEigenAngleTol = 1e-5;
constexpr double kDeterminantTol = 1e-6;
// criterion 3
constexpr int kAtlasSamples = 10000;
constexpr double kTangencyBand = 1e-6;
// criterion 4
constexpr double kConeHausdorffTol = 1e-6;
constexpr double kConnectionTol = 1e-6;
constexpr double kMinTransversality = 0.01;
constexpr double kConeSeconds = 60;
// criterion 6
constexpr int kMaxN0 = 8;
constexpr double kPeriodicResidual = 1e-8;
constexpr double kDistinctTol = 1e-8;
constexpr double kHorseshoeSeconds = 120;
// criterion 7
constexpr double kInvolutionTol = 1e-7;
constexpr double kSlidingTangencyTol = 1e-10;
constexpr double kReparamTol = 1e-10;
constexpr double kInvarianceTol = 1e-6;

const std::string kScenarios = std::string(TCHAIN_SOURCE_DIR) + "/scenarios/";
const fs::path kWork = fs::temp_directory_path() / "tchain_acceptance";

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << "[fail] " << what << "; ";
        }
    }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

PiecewiseSystem boxed(PiecewiseSystem z, double half = 50)
{
    z.box.lo = Vec3::Constant(-half);
    z.box.hi = Vec3::Constant(half);
    return z;
}

ReturnMapHandle numeric(const PiecewiseSystem& z)
{
    auto h = make_handle(z, Order::LowerAfterUpper);
    h.sliding = SlidingPolicy::Ignore;
    return h;
}

double seg_dist(const Vec3& a, const Vec3& b, const Vec3& p)
{
    const Vec3 d = b - a;
    const double l2 = d.squaredNorm();
    const double t = l2 > 0 ? std::clamp((p - a).dot(d) / l2, 0.0, 1.0) : 0.0;
    return (a + t * d - p).norm();
}

double dist_to(const std::vector<std::pair<Vec3, Vec3>>& segs, const Vec3& p)
{
    double best = 1e300;
    for (const auto& [a, b] : segs) best = std::min(best, seg_dist(a, b, p));
    return best;
}

// Two-sided Hausdorff distance between the upper arc of a trace and a closed-form section curve.
double upper_arc_hausdorff(const CircleTrace& t, const SectionCurve& c)
{
    std::vector<std::pair<Vec3, Vec3>> arc, curve;
    for (size_t i = 0; i + 1 < t.points.size(); ++i)
        if (t.tags[i] >= 0 && t.tags[i + 1] >= 0 && (t.tags[i] > 0 || t.tags[i + 1] > 0))
            arc.emplace_back(t.points[i], t.points[i + 1]);
    const double lo = c.lo.value(), hi = c.hi.value();
    const int n = 20000;
    Vec3 prev = c(lo);
    for (int k = 1; k <= n; ++k) {
        const Vec3 cur = c(lo + (hi - lo) * k / n);
        curve.emplace_back(prev, cur);
        prev = cur;
    }
    double h = 0;
    for (size_t i = 0; i < t.points.size(); ++i)
        if (t.tags[i] > 0) h = std::max(h, dist_to(curve, t.points[i]));
    for (int k = 0; k <= 2000; ++k) h = std::max(h, dist_to(arc, c(lo + (hi - lo) * k / 2000)));
    return h;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::ifstream f(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(f, line); // header
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

cli::Options out_to(const std::string& name)
{
    cli::Options o;
    o.out_dir = (kWork / name).string();
    fs::remove_all(o.out_dir);
    return o;
}

// ---------------------------------------------------------------------------

void return_map_grid(Outcome& o)
{
    const auto t0 = Clock::now();
    const auto h = numeric(boxed(model_system(ModelId::z1())));
    double worst = 0;
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            const Vec2 q(-2 + 4.0 * i / 19, -2 + 4.0 * j / 19);
            const Vec2 want(-q.x() - 2 * q.y(), 4 * q.x() + 7 * q.y());
            worst = std::max(worst, (h.eval(q) - want).cwiseAbs().maxCoeff());
        }
    const double secs = since(t0);
    o.detail << "max error " << worst << ", " << secs << " s";
    o.check(worst < kReturnMapTol, "grid error");
    o.check(secs < kReturnMapSeconds, "runtime");
}

void eigen_data(Outcome& o)
{
    for (const auto& [id, loc] : {std::pair{ModelId::z1(), Vec3(0, 0, 0)}, std::pair{ModelId::z2(), Vec3(2, 2, 0)}}) {
        const auto z = boxed(model_system(id));
        const auto r = analyze_t_singularity(z, loc, numeric(z));
        const auto e = model_eigen_data(id);
        const double dl = std::max(std::abs(r.lambda_plus - e.lambda_plus.value()),
                                   std::abs(r.lambda_minus - e.lambda_minus.value()));
        auto angle = [](const Vec2& a, const Vec2& b) {
            return std::acos(std::min(1.0, std::abs(a.normalized().dot(b.normalized()))));
        };
        const double da = std::max(angle(r.v_plus, e.line_plus.dir), angle(r.v_minus, e.line_minus.dir));
        const double dd = std::abs(r.jacobian.matrix.determinant() - 1);
        o.detail << id.name() << ": dlambda " << dl << " angle " << da << " ddet " << dd << "; ";
        o.check(dl < kEigenvalueTol, id.name() + " eigenvalues");
        o.check(da < kEigenAngleTol, id.name() + " eigendirections");
        o.check(dd < kDeterminantTol, id.name() + " determinant");
    }
}

void region_atlases(Outcome& o)
{
    for (const auto& [file, c] : {std::pair{"z1.json", 0.0}, std::pair{"z2.json", 2.0}}) {
        const auto cfg = load_config(kScenarios + file);
        const auto rep = cli::cmd_analyze(cfg, out_to(std::string("atlas_") + file));
        const auto rows = read_csv(fs::path(rep.artifacts.front()));
        int wrong = 0, band = 0;
        for (const auto& row : rows) {
            const double x = std::stod(row[0]), y = std::stod(row[1]);
            const std::string& lab = row[3];
            if (std::min(std::abs(x - c), std::abs(y - c)) <= kTangencyBand) {
                ++band;
                continue;
            }
            std::string want = "Crossing";
            if (x > c && y > c) want = "UnstableSliding";
            if (x < c && y < c) want = "StableSliding";
            if (lab != want) ++wrong;
        }
        o.detail << cfg.name << ": " << rows.size() << " samples, " << wrong << " misclassified, " << band
                 << " in band; ";
        o.check(static_cast<int>(rows.size()) == kAtlasSamples, cfg.name + " sample count");
        o.check(wrong == 0, cfg.name + " misclassifications");
    }
}

struct ConeTraces {
    std::optional<CircleTrace> u, s;
};

ConeTraces cone_geometry(Outcome& o)
{
    const auto t0 = Clock::now();
    ConeTraces ct;
    const Section pi(models::cross_plane(0));
    const auto [gu, gs] = cone_section_curves();
    const auto z1 = boxed(model_system(ModelId::z1())), z2 = boxed(model_system(ModelId::z2()));
    const auto h1 = numeric(z1), h2 = numeric(z2);
    ct.u = trace_cone_circle(z1, analyze_t_singularity(z1, {0, 0, 0}, h1), h1, true, pi, {});
    ct.s = trace_cone_circle(z2, analyze_t_singularity(z2, {2, 2, 0}, h2), h2, false, pi, {});
    const double hu = upper_arc_hausdorff(*ct.u, gu), hs = upper_arc_hausdorff(*ct.s, gs);
    const auto chain = classify_chain(*ct.u, *ct.s);
    const Vec3 ref = cone_intersection_point();
    double best = 1e300, angle = 0;
    for (const auto& p : chain.points)
        if ((p.p - ref).norm() < best) {
            best = (p.p - ref).norm();
            angle = p.angle;
        }
    const double secs = since(t0);
    o.detail << "Hausdorff u " << hu << " s " << hs << "; p+* = (" << ref.x() << ", " << ref.y() << ", " << ref.z()
             << ") recovered within " << best << ", angle " << angle << " rad; " << secs << " s";
    o.check(hu < kConeHausdorffTol, "unstable cone vs closed form");
    o.check(hs < kConeHausdorffTol, "stable cone vs closed form");
    o.check(best < kConnectionTol, "connection point");
    o.check(angle > kMinTransversality, "transversality");
    o.check(secs < kConeSeconds, "runtime");
    return ct;
}

std::vector<io::json> regularized_persistence(Outcome& o)
{
    std::vector<io::json> chains;
    double last_p = 1e300, last_m = 1e300;
    for (const char* eps : {"0.2", "0.1", "0.05"}) {
        const auto cfg = load_config(kScenarios + "zeps_" + eps + ".json");
        const auto rep = cli::cmd_chain(cfg, out_to(std::string("zeps_") + eps));
        const auto& s = rep.summary;
        if (!s.contains("K")) {
            o.check(false, std::string("eps ") + eps + " produced no classification");
            continue;
        }
        chains.push_back(io::read_json((kWork / (std::string("zeps_") + eps) / "chain.json").string()));
        const int K = s.at("K").get<int>();
        const double dp = s.at("distance_plus").get<double>(), dm = s.at("distance_minus").get<double>();
        o.detail << "eps " << eps << ": K " << K << ", |q-p+*| " << dp << ", |q-p-*| " << dm << "; ";
        o.check(s.at("kind") == "TransverseChains" && K == 2, std::string("eps ") + eps + " intersection count");
        o.check(dp <= last_p && dm <= last_m, std::string("eps ") + eps + " monotone convergence");
        last_p = dp;
        last_m = dm;
    }
    return chains;
}

void horseshoe(Outcome& o)
{
    const auto t0 = Clock::now();
    auto handle = [](double delta) {
        auto fx = cubic_fixture(delta);
        auto h = make_handle(boxed(fx.system, 1e4), Order::LowerAfterUpper);
        h.closed_form = fx.maps;
        h.sliding = SlidingPolicy::Ignore;
        return h;
    };
    const auto h = handle(0);
    const auto run = run_horseshoe(h, analyze_t_singularity(*h.system, {0, 0, 0}, h));
    o.check(run.certified, "cubic fixture certificate: " + run.message);
    if (run.certificate) {
        const auto& c = *run.certificate;
        o.detail << "N0 " << c.n0 << ", periodic counts";
        o.check(c.n0 >= 1 && c.n0 <= kMaxN0, "N0");
        for (int n = 1; n <= 4; ++n) {
            std::vector<Vec2> distinct;
            for (const auto& w : all_words(n)) {
                try {
                    const auto pt = symbolic_periodic_point(c, w);
                    if (!pt.newton_ok || !(pt.residual < kPeriodicResidual)) continue;
                    bool fresh = true;
                    for (const auto& q : distinct) fresh = fresh && (q - pt.orbit[0]).norm() > kDistinctTol;
                    if (fresh) distinct.push_back(pt.orbit[0]);
                } catch (const Error&) {
                }
            }
            o.detail << " " << distinct.size();
            o.check(distinct.size() == (size_t{1} << n), "periodic count for n = " + std::to_string(n));
        }
        o.detail << ", Lambda " << c.audit.crossing << "/" << c.audit.entries.size() << " Crossing at depth "
                 << c.depth << "; ";
        o.check(!c.audit.entries.empty() && c.audit.crossing == static_cast<int>(c.audit.entries.size()),
                "Lambda samples Crossing");
        o.check(c.depth == 6, "sample depth");
    }
    const auto ht = handle(cubic_tangency_delta);
    const auto tan = run_horseshoe(ht, analyze_t_singularity(*ht.system, {0, 0, 0}, ht));
    o.detail << "tangency: " << (tan.certified ? "certified" : to_string(tan.failure)) << "; ";
    o.check(!tan.certified && tan.failure == ErrorKind::NotCertified, "tangency fixture");
    const double secs = since(t0);
    o.detail << secs << " s";
    o.check(secs < kHorseshoeSeconds, "runtime");
}

void invariants(Outcome& o, const ConeTraces& cones, const std::vector<io::json>& chains)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.5, 1.5);

    // involutions: model handles and the planar fixtures, integrated numerically
    struct Named {
        std::string name;
        PiecewiseSystem z;
        Vec2 c;
    };
    std::vector<Named> systems{{"Z1", boxed(model_system(ModelId::z1())), {0, 0}},
                               {"Z2", boxed(model_system(ModelId::z2())), {2, 2}},
                               {"Cubic:0", boxed(cubic_fixture(0).system), {0, 0}},
                               {"McMillan:4", boxed(mcmillan_fixture(4).system), {0, 0}}};
    double inv = 0;
    for (const auto& s : systems) {
        const auto h = numeric(s.z);
        for (Side side : {Side::Upper, Side::Lower})
            for (int k = 0; k < 50;) {
                const Vec2 q = s.c + Vec2(u(rng), u(rng));
                if (std::min(std::abs(q.x() - s.c.x()), std::abs(q.y() - s.c.y())) < 1e-3) continue;
                ++k;
                inv = std::max(inv, (h.half(side, h.half(side, q)) - q).norm());
            }
    }
    o.detail << "involution " << inv << "; ";
    o.check(inv < kInvolutionTol, "involution idempotence");

    // sliding vector field: tangency and the normalized-field identity
    double tang = 0, rep = 0;
    int sliding = 0;
    for (const auto& id : {ModelId::z1(), ModelId::z2(), ModelId::cross(), ModelId::parse("Zeps:0.1")}) {
        const auto z = model_system(id);
        for (int k = 0; k < 2000; ++k) {
            const Vec3 p(1 + 2 * u(rng), 1 + 2 * u(rng), 0);
            const auto lab = classify_sigma_point(z, p);
            if (lab != RegionLabel::StableSliding && lab != RegionLabel::UnstableSliding) continue;
            ++sliding;
            const Vec3 f = sliding_field(z, p), n = normalized_sliding_field(z, p), g = z.switching.gradient(p);
            if (f.norm() > 0) tang = std::max(tang, std::abs(f.dot(g)) / (f.norm() * g.norm()));
            const auto [xf, yf] = lie_pair(z, p);
            rep = std::max(rep, (n - (yf - xf) * f).norm() / std::max(1.0, n.norm()));
        }
    }
    o.detail << "sliding tangency " << tang << ", reparameterization " << rep << " over " << sliding << " points; ";
    o.check(sliding > 1000, "sliding samples");
    o.check(tang < kSlidingTangencyTol, "sliding tangency");
    o.check(rep < kReparamTol, "reparameterization identity");

    // invariant manifolds
    double res = 0;
    {
        const auto z = boxed(model_system(ModelId::z1()));
        const auto h = numeric(z);
        const auto r = analyze_t_singularity(z, {0, 0, 0}, h);
        for (Branch b : {Branch::UnstablePlus, Branch::StableMinus})
            res = std::max(res, invariance_residual(grow_manifold(h, r, b, 3.0)));
    }
    // fixture curves are grown with closed-form maps; the flow-integrated map checks them independently
    double res_flow = 0;
    for (const auto& fx : {cubic_fixture(0), mcmillan_fixture(4)}) {
        auto h = numeric(boxed(fx.system, 1e4));
        const auto flow = std::make_shared<const ReturnMapHandle>(h);
        h.closed_form = fx.maps;
        const auto r = analyze_t_singularity(*h.system, {0, 0, 0}, h);
        for (Branch b : {Branch::UnstablePlus, Branch::UnstableMinus, Branch::StablePlus, Branch::StableMinus}) {
            auto c = grow_manifold(h, r, b, 4.0);
            res = std::max(res, invariance_residual(c));
            c.map = flow;
            res_flow = std::max(res_flow, invariance_residual(c));
        }
    }
    o.detail << "invariance " << res << " (flow map " << res_flow << "); ";
    o.check(res < kInvarianceTol, "manifold invariance");
    o.check(res_flow < kInvarianceTol, "manifold invariance under the flow map");

    // traces close with exactly two corners; chain counts are even
    int traces = 0, bad = 0;
    for (const auto* t : {&cones.u, &cones.s})
        if (*t) {
            ++traces;
            if ((*t)->corners.size() != 2 || (*t)->points.front() != (*t)->points.back()) ++bad;
        }
    std::vector<int> ks;
    if (cones.u && cones.s) ks.push_back(classify_chain(*cones.u, *cones.s).K);
    for (const auto& j : chains) {
        for (const char* k : {"c_u", "chat_u", "c_s"})
            if (j.contains(k)) {
                ++traces;
                if (j.at(k).at("corners").size() != 2) ++bad;
            }
        ks.push_back(j.at("chain").at("K").get<int>());
    }
    int odd = 0;
    for (int k : ks) odd += k % 2 != 0;
    o.detail << traces << " traces, " << bad << " without two corners; " << ks.size() << " chains, " << odd
             << " with odd K";
    o.check(traces >= 8 && bad == 0, "two-corner traces");
    o.check(!ks.empty() && odd == 0, "K parity");
}

// Two runs of the CLI binary per command; every artifact must match byte for byte.
void determinism(Outcome& o)
{
    struct Cmd {
        std::string name, args;
    };
    const std::vector<Cmd> cmds{{"analyze", "analyze --config " + kScenarios + "z1.json"},
                                {"chain", "chain --config " + kScenarios + "crossz0.json"},
                                {"horseshoe", "horseshoe --config " + kScenarios + "cubic.json"}};
    int files = 0, diffs = 0;
    auto run_twice = [&](const std::string& name, const std::string& args) {
        std::array<fs::path, 2> dirs{kWork / ("det_" + name + "_a"), kWork / ("det_" + name + "_b")};
        for (const auto& d : dirs) {
            fs::remove_all(d);
            const std::string cmd = std::string(TCHAIN_CLI) + " " + args + " --out " + d.string() + " > /dev/null 2>&1";
            const int rc = std::system(cmd.c_str());
            o.check(rc == 0, name + " exit status");
        }
        for (const auto& e : fs::directory_iterator(dirs[0])) {
            if (!e.is_regular_file()) continue;
            ++files;
            std::string a = slurp(e.path());
            const std::string b = slurp(dirs[1] / e.path().filename());
            // reports list their own artifact paths
            for (size_t at; (at = a.find(dirs[0].string())) != std::string::npos;)
                a.replace(at, dirs[0].string().size(), dirs[1].string());
            if (a != b) {
                ++diffs;
                o.check(false, name + ": " + e.path().filename().string() + " differs");
            }
        }
        return dirs;
    };
    std::array<fs::path, 2> hs;
    for (const auto& c : cmds) {
        const auto d = run_twice(c.name, c.args);
        if (c.name == "horseshoe") hs = d;
    }
    run_twice("plotdata", "plotdata --artifact " + (hs[0] / "certificate.json").string());
    o.detail << files << " artifacts compared across 4 commands, " << diffs << " differ";
    o.check(files >= 12, "artifact count");
}

} // namespace

int main()
{
    fs::create_directories(kWork);
    int failed = 0;
    auto report = [&](int n, const std::function<void(Outcome&)>& fn) {
        Outcome o;
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::cout << "CRITERION " << n << ": " << (o.pass ? "PASS" : "FAIL") << " -- " << o.detail.str() << std::endl;
        failed += !o.pass;
    };
    ConeTraces cones;
    std::vector<io::json> chains;
    report(1, return_map_grid);
    report(2, eigen_data);
    report(3, region_atlases);
    report(4, [&](Outcome& o) { cones = cone_geometry(o); });
    report(5, [&](Outcome& o) { chains = regularized_persistence(o); });
    report(6, horseshoe);
    report(7, [&](Outcome& o) { invariants(o, cones, chains); });
    report(8, determinism);
    std::cout << (failed ? "ACCEPTANCE: FAIL (" + std::to_string(failed) + " criteria)" : std::string("ACCEPTANCE: PASS"))
              << std::endl;
    return failed ? 1 : 0;
}
