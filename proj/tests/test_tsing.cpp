#include "tchain/models.hpp"
#include "tchain/tsing.hpp"

#include <gtest/gtest.h>

using namespace tchain;

namespace {

ErrorKind kind_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::UnknownArtifact;
}

PiecewiseSystem boxed(PiecewiseSystem z)
{
    z.box.lo = Vec3::Constant(-50);
    z.box.hi = Vec3::Constant(50);
    return z;
}

ReturnMapHandle handle(const PiecewiseSystem& z)
{
    auto h = make_handle(z, Order::LowerAfterUpper);
    h.sliding = SlidingPolicy::Ignore;
    return h;
}

// X = (a, b, y), Y = (c, d, -x): an invisible fold-fold at the origin whenever b < 0 < -c.
// The return map is [[-1, -A], [B, A B - 1]] with A = -2a/b, B = -2d/c.
PiecewiseSystem linear_pair(double a, double b, double c, double d)
{
    using namespace models;
    return boxed(pair(SmoothField::from_poly({C(a), C(b), X(0, 1, 0)}),
                      SmoothField::from_poly({C(c), C(d), X(1, 0, 0, -1)}), "linear"));
}

} // namespace

TEST(FindTSingularities, ModelExamples)
{
    const auto z1 = boxed(model_system(ModelId::z1())), z2 = boxed(model_system(ModelId::z2()));
    auto f1 = find_t_singularities(z1, {-3, 3, -3, 3}, 16);
    ASSERT_EQ(f1.size(), 1u);
    EXPECT_LT(f1[0].norm(), 1e-10);
    auto f2 = find_t_singularities(z2, {-1, 5, -1, 5}, 16);
    ASSERT_EQ(f2.size(), 1u);
    EXPECT_LT((f2[0] - Vec3(2, 2, 0)).norm(), 1e-10);
    EXPECT_TRUE(find_t_singularities(z1, {1, 3, 1, 3}, 16).empty());
    EXPECT_EQ(kind_of([&] { find_t_singularities(z1, {-3, 3, -3, 3}, 4); }), ErrorKind::ConfigError);
}

TEST(FindTSingularities, VisibleFoldFoldsAreFiltered)
{
    // X2f = b > 0 makes the upper fold visible
    EXPECT_TRUE(find_t_singularities(linear_pair(1, 1, -1, 2), {-3, 3, -3, 3}, 8).empty());
}

TEST(AnalyzeTSingularity, Z1)
{
    const auto z = boxed(model_system(ModelId::z1()));
    const auto r = analyze_t_singularity(z, {0, 0, 0}, handle(z));
    EXPECT_NEAR(r.lambda_plus, 3 + 2 * std::sqrt(2.0), 1e-6);
    EXPECT_NEAR(r.lambda_minus, 3 - 2 * std::sqrt(2.0), 1e-6);
    Mat2 m;
    m << -1, -2, 4, 7;
    EXPECT_LT((r.jacobian.matrix - m).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_TRUE(r.saddle);
    EXPECT_TRUE(r.sector_ok);
    EXPECT_TRUE(r.stable);
    // eigendirections are the closed-form invariant lines
    const auto e = model_eigen_data(ModelId::z1());
    EXPECT_LT(e.line_plus.distance(r.v_plus), 1e-6);
    EXPECT_LT(e.line_minus.distance(r.v_minus), 1e-6);
    // and lie in the crossing quadrants
    EXPECT_LT(r.v_plus.x() * r.v_plus.y(), 0);
    EXPECT_LT(r.v_minus.x() * r.v_minus.y(), 0);
}

TEST(AnalyzeTSingularity, Z2)
{
    const auto z = boxed(model_system(ModelId::z2()));
    const auto r = analyze_t_singularity(z, {2, 2, 0}, handle(z));
    EXPECT_NEAR(r.lambda_plus, 5 + 2 * std::sqrt(6.0), 1e-6);
    EXPECT_NEAR(r.lambda_minus, 5 - 2 * std::sqrt(6.0), 1e-6);
    Mat2 m;
    m << -1, -2, 6, 11;
    EXPECT_LT((r.jacobian.matrix - m).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_TRUE(r.stable);
}

// A = -2, B = -4: the same eigenvalues as Z1 but both eigenlines run through the sliding quadrants.
TEST(AnalyzeTSingularity, EigenlineInSlidingSectorIsUnstable)
{
    const auto z = linear_pair(-1, -1, -1, -2);
    const auto r = analyze_t_singularity(z, {0, 0, 0}, handle(z));
    EXPECT_NEAR(r.lambda_plus, 3 + 2 * std::sqrt(2.0), 1e-6);
    EXPECT_TRUE(r.saddle);
    EXPECT_FALSE(r.sector_ok);
    EXPECT_FALSE(r.stable);
}

TEST(AnalyzeTSingularity, Errors)
{
    const auto z1 = boxed(model_system(ModelId::z1()));
    EXPECT_EQ(kind_of([&] { analyze_t_singularity(z1, {1, 1, 0}, handle(z1)); }), ErrorKind::NotTSingularity);
    const auto vis = linear_pair(1, 1, -1, 2);
    EXPECT_EQ(kind_of([&] { analyze_t_singularity(vis, {0, 0, 0}, handle(vis)); }), ErrorKind::NotTSingularity);
    // A = B = 1: trace -1, elliptic
    const auto ell = linear_pair(0.5, -1, -1, 0.5);
    EXPECT_EQ(kind_of([&] { analyze_t_singularity(ell, {0, 0, 0}, handle(ell)); }), ErrorKind::NonHyperbolic);
}

TEST(SectorTest, InvariantUnderDirectionSign)
{
    for (const auto& z : {boxed(model_system(ModelId::z1())), linear_pair(-1, -1, -1, -2), linear_pair(1, -1, -1, 3)}) {
        const auto r = analyze_t_singularity(z, {0, 0, 0}, handle(z));
        for (const Vec2& v : {r.v_plus, r.v_minus})
            for (double d : {1e-4, 1e-2, 0.5})
                EXPECT_EQ(crossing_probe(z, lift(d * v)), crossing_probe(z, lift(-d * v)));
    }
}

namespace {

// Sigma hits of every arc alternate between the two lines and end on the seed line.
void check_arcs(const ConeSample& cs, const ParamLine& seed_line, const ParamLine& other)
{
    ASSERT_FALSE(cs.arcs.empty());
    for (size_t k = 0; k < cs.arcs.size(); ++k) {
        EXPECT_LT(seed_line.distance(drop(cs.seeds[k])), 1e-9);
        EXPECT_LT(std::abs(cs.arcs[k].back().z()), 1e-9);
        // first arrival sits on the other line, the second back on the seed line
        int hits = 0;
        Vec3 last = cs.seeds[k];
        for (const Vec3& p : cs.arcs[k]) {
            // a leg's first sample repeats the previous leg's arrival
            if (std::abs(p.z()) > 1e-10 || (p - last).norm() < 1e-12) continue;
            last = p;
            const ParamLine& want = hits % 2 == 0 ? other : seed_line;
            EXPECT_LT(want.distance(drop(p)), 1e-6);
            ++hits;
        }
        EXPECT_GE(hits, 2);
    }
}

double max_diameter(const ConeSample& cs)
{
    double d = 0;
    for (const auto& arc : cs.arcs)
        for (const Vec3& p : arc) d = std::max(d, (p - cs.vertex).norm());
    return d;
}

} // namespace

TEST(SampleDiabolo, Z1UnstableArcsStayOnInvariantLines)
{
    const auto z = boxed(model_system(ModelId::z1()));
    const auto h = handle(z);
    const auto r = analyze_t_singularity(z, {0, 0, 0}, h);
    const auto e = model_eigen_data(ModelId::z1());
    check_arcs(sample_diabolo(z, r, h, true, 6, 1.0), e.line_plus, e.line_minus);
}

TEST(SampleDiabolo, Z2StableArcsStayOnInvariantLines)
{
    const auto z = boxed(model_system(ModelId::z2()));
    const auto h = handle(z);
    const auto r = analyze_t_singularity(z, {2, 2, 0}, h);
    const auto e = model_eigen_data(ModelId::z2());
    check_arcs(sample_diabolo(z, r, h, false, 6, 1.0), e.line_minus, e.line_plus);
}

TEST(SampleDiabolo, ArcsCollapseToTheVertex)
{
    const auto z = boxed(model_system(ModelId::z1()));
    const auto h = handle(z);
    const auto r = analyze_t_singularity(z, {0, 0, 0}, h);
    double prev = 1e300;
    for (double rad : {1.0, 0.3, 0.1, 0.01, 0.001}) {
        const double d = max_diameter(sample_diabolo(z, r, h, true, 4, rad));
        EXPECT_LT(d, prev);
        prev = d;
    }
    EXPECT_LT(prev, 0.01);
}

TEST(SampleDiabolo, RequiresStableVerdict)
{
    const auto z = linear_pair(-1, -1, -1, -2);
    const auto h = handle(z);
    const auto r = analyze_t_singularity(z, {0, 0, 0}, h);
    EXPECT_EQ(kind_of([&] { sample_diabolo(z, r, h, true, 4, 0.5); }), ErrorKind::NotTSingularity);
}
