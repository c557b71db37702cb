#include "tchain/models.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tchain;

TEST(Models, FieldsAtReferencePoints)
{
    EXPECT_EQ(model_system(ModelId::z1()).upper({0, 0, 0}), Vec3(1, -1, 0));
    EXPECT_EQ(model_system(ModelId::z2()).lower({2, 2, 0}), Vec3(-1, 3, 0));
}

TEST(Models, CrossCarriesAuxiliarySwitch)
{
    const auto z = model_system(ModelId::cross());
    ASSERT_TRUE(z.aux);
    // g vanishes on the plane y + 1.7 x = 2.5, up to the sign convention
    EXPECT_NEAR(z.aux->g({1, 0.8, 0}), 0, 1e-15);
    EXPECT_EQ(z.field(Side::Upper, {0, 0, 1}).value({0, 0, 1}), Vec3(1, -1, 0));
    EXPECT_EQ(z.field(Side::Upper, {3, 3, 1}).value({3, 3, 1}), Vec3(1, -1, 1));
}

TEST(Models, ParseNames)
{
    EXPECT_EQ(ModelId::parse("Z1").kind, ModelKind::Z1);
    EXPECT_EQ(ModelId::parse("Z2").kind, ModelKind::Z2);
    EXPECT_EQ(ModelId::parse("CrossZ0").kind, ModelKind::CrossZ0);
    const auto e = ModelId::parse("Zeps:0.05");
    EXPECT_EQ(e.kind, ModelKind::RegularizedZeps);
    EXPECT_DOUBLE_EQ(e.eps, 0.05);
    for (const char* bad : {"Zeps:0", "Zeps:2", "Z3", "Zeps:x"}) {
        try {
            ModelId::parse(bad);
            FAIL() << bad;
        } catch (const Error& err) {
            EXPECT_EQ(err.kind(), ErrorKind::ConfigError);
        }
    }
}

TEST(Models, RegularizedSaturation)
{
    const auto z1 = model_system(ModelId::z1()), z2 = model_system(ModelId::z2());
    const auto g = models::cross_g();
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(-4, 4);
    for (double eps : {0.2, 0.05}) {
        const auto ze = model_system(ModelId::zeps(eps));
        int n_lo = 0, n_hi = 0;
        for (int k = 0; k < 400; ++k) {
            const Vec3 p(u(rng), u(rng), u(rng));
            const double gv = g(p);
            if (gv <= -eps) {
                ++n_lo;
                EXPECT_LT((ze.upper(p) - z1.upper(p)).norm(), 1e-14);
                EXPECT_LT((ze.lower(p) - z1.lower(p)).norm(), 1e-14);
            } else if (gv >= eps) {
                ++n_hi;
                EXPECT_LT((ze.upper(p) - z2.upper(p)).norm(), 1e-14);
                EXPECT_LT((ze.lower(p) - z2.lower(p)).norm(), 1e-14);
            }
        }
        EXPECT_GT(n_lo, 50);
        EXPECT_GT(n_hi, 50);
    }
}

TEST(Models, BlendValuesAndSmoothness)
{
    EXPECT_EQ(regularization_blend(0), 0);
    EXPECT_EQ(regularization_blend(1), 1);
    EXPECT_EQ(regularization_blend(-2), -1);
    EXPECT_EQ(regularization_blend(3), 1);
    const double h = 1e-7;
    for (double x : {-1.0, 1.0}) {
        const double left = (regularization_blend(x) - regularization_blend(x - h)) / h;
        const double right = (regularization_blend(x + h) - regularization_blend(x)) / h;
        EXPECT_NEAR(left, 0, 1e-6);
        EXPECT_NEAR(right, 0, 1e-6);
    }
}

TEST(Flows, ClosedFormsSolveTheFields)
{
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-3, 3), ut(-2, 2);
    for (const auto& id : {ModelId::z1(), ModelId::z2()}) {
        const auto z = model_system(id);
        for (const SmoothField* v : {&z.upper, &z.lower}) {
            ASSERT_TRUE(v->flow);
            for (int k = 0; k < 100; ++k) {
                const Vec3 p(u(rng), u(rng), u(rng));
                const double t = ut(rng), h = 1e-5;
                const Vec3 d = (v->flow(t + h, p) - v->flow(t - h, p)) / (2 * h);
                EXPECT_LT((d - (*v)(v->flow(t, p))).norm(), 1e-8 * (1 + d.norm()));
                EXPECT_LT((v->flow(0, p) - p).norm(), 1e-15);
                const double s = ut(rng);
                EXPECT_LT((v->flow(s, v->flow(t, p)) - v->flow(s + t, p)).norm(), 1e-10 * (1 + p.norm()));
            }
        }
    }
}

TEST(Flows, ReturnTimeOfUpperZ1)
{
    const auto z = model_system(ModelId::z1());
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int k = 0; k < 100; ++k) {
        const double x = u(rng), y = u(rng);
        const Vec3 q = z.upper.flow(2 * y, {x, y, 0});
        EXPECT_NEAR(q.z(), 0, 1e-14 * (1 + y * y));
        EXPECT_NEAR((Vec2(q.x(), q.y()) - model_involution(ModelId::z1(), Side::Upper, {x, y})).norm(), 0, 1e-13);
    }
}

TEST(Involutions, ReferenceValues)
{
    EXPECT_EQ(model_involution(ModelId::z1(), Side::Upper, {1, 1}), Vec2(3, -1));
    EXPECT_EQ(model_involution(ModelId::z1(), Side::Lower, {1, 0}), Vec2(-1, 4));
    // points of the fold lines are fixed
    EXPECT_EQ(model_involution(ModelId::z1(), Side::Upper, {0.7, 0}), Vec2(0.7, 0));
    EXPECT_EQ(model_involution(ModelId::z1(), Side::Lower, {0, -1.3}), Vec2(0, -1.3));
    EXPECT_EQ(model_involution(ModelId::z2(), Side::Upper, {5, 2}), Vec2(5, 2));
    EXPECT_EQ(model_involution(ModelId::z2(), Side::Lower, {2, 9}), Vec2(2, 9));
}

TEST(Involutions, SquareToIdentity)
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-5, 5);
    for (const auto& id : {ModelId::z1(), ModelId::z2()})
        for (Side s : {Side::Upper, Side::Lower})
            for (int k = 0; k < 200; ++k) {
                const Vec2 q(u(rng), u(rng));
                EXPECT_LE((model_involution(id, s, model_involution(id, s, q)) - q).norm(), 1e-12 * (1 + q.norm()));
            }
}

TEST(ReturnMaps, ReferenceValues)
{
    EXPECT_EQ(model_return_map(ModelId::z1(), {1, 0}), Vec2(-1, 4));
    EXPECT_EQ(model_return_map(ModelId::z1(), {0, 0}), Vec2(0, 0));
    EXPECT_EQ(model_return_map(ModelId::z2(), {2, 2}), Vec2(2, 2));
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int k = 0; k < 50; ++k) {
        const Vec2 q(u(rng), u(rng));
        EXPECT_LT((model_return_map(ModelId::z1(), q) - Vec2(-q.x() - 2 * q.y(), 4 * q.x() + 7 * q.y())).norm(), 1e-13);
    }
}

TEST(EigenData, ExactValues)
{
    const auto e1 = model_eigen_data(ModelId::z1());
    EXPECT_NEAR(e1.lambda_plus.value(), 3 + 2 * std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(e1.lambda_minus.value(), 3 - 2 * std::sqrt(2.0), 1e-15);
    EXPECT_TRUE(e1.lambda_plus * e1.lambda_minus == Surd(1));
    const auto e2 = model_eigen_data(ModelId::z2());
    EXPECT_NEAR(e2.lambda_plus.value(), 5 + 2 * std::sqrt(6.0), 1e-14);
    EXPECT_NEAR(e2.lambda_minus.value(), 5 - 2 * std::sqrt(6.0), 1e-15);
    EXPECT_TRUE(e2.lambda_plus * e2.lambda_minus == Surd(1));
}

TEST(EigenData, ResidualsAndDeterminants)
{
    for (const auto& id : {ModelId::z1(), ModelId::z2()}) {
        const auto e = model_eigen_data(id);
        EXPECT_NEAR(e.matrix.determinant(), 1.0, 1e-14);
        for (const auto& [lam, v] : {std::pair{e.lambda_plus, e.v_plus}, std::pair{e.lambda_minus, e.v_minus}}) {
            const Vec2 vv(v[0].value(), v[1].value());
            EXPECT_LE((e.matrix * vv - lam.value() * vv).norm(), 1e-12 * (1 + lam.value()));
        }
    }
}

TEST(EigenData, InvariantLines)
{
    const auto id = ModelId::z1();
    const auto e = model_eigen_data(id);
    for (const ParamLine* line : {&e.line_plus, &e.line_minus})
        for (int k = -25; k < 25; ++k) {
            const Vec2 q = line->at(0.1 * k);
            EXPECT_LT(line->distance(model_return_map(id, q)), 1e-10 * (1 + q.squaredNorm()));
        }
    // the upper involution exchanges the two lines
    for (int k = -25; k < 25; ++k)
        EXPECT_LT(e.line_plus.distance(model_involution(id, Side::Upper, e.line_minus.at(0.1 * k))), 1e-12);
}

TEST(Cones, EndpointsOnSigmaAndSigns)
{
    for (ConeBranch b : {ConeBranch::UnstableZ1, ConeBranch::StableZ2}) {
        ConeParametrization c{b, true};
        for (double a : {0.3, 1.0, 2.5}) {
            EXPECT_LT(std::abs(c(a, 0).z()), 1e-10);
            EXPECT_LT(std::abs(c(a, 2 * a).z()), 1e-10);
            for (int k = 1; k < 10; ++k) EXPECT_GT(c(a, 2 * a * k / 10.0).z(), 0);
        }
    }
}

TEST(SectionCurves, OnThePlaneAndMeetingSigma)
{
    const auto [gu, gs] = cone_section_curves();
    const auto g = models::cross_g();
    for (const auto* c : {&gu, &gs})
        for (int k = 0; k <= 100; ++k) {
            const double a = c->lo.value() + (c->hi.value() - c->lo.value()) * k / 100.0;
            EXPECT_LT(std::abs(g((*c)(a))), 1e-9);
        }
    // the printed interval endpoints are where the curves meet Sigma
    EXPECT_NEAR(gu(gu.hi.value()).z(), 0, 1e-9);
    EXPECT_NEAR(gu(gu.lo.value()).z(), 0, 1e-9);
    EXPECT_NEAR(gs(gs.hi.value()).z(), 0, 1e-9);
    EXPECT_NEAR(gs(gs.lo.value()).z(), 0, 1e-9);
    EXPECT_NEAR(gu.hi.value(), 25.0 / 191 * (14 + 17 * std::sqrt(2.0)), 1e-14);
    EXPECT_NEAR(gs.hi.value(), 29.0 / 431 * (21 + 17 * std::sqrt(6.0)), 1e-14);
}

namespace {

// Closest parameter on a section curve by dense sampling plus golden-section polish.
double closest(const SectionCurve& c, const Vec3& p, double* at = nullptr)
{
    const double lo = c.lo.value(), hi = c.hi.value();
    double best = 1e300, ba = lo;
    for (int k = 0; k <= 20000; ++k) {
        const double a = lo + (hi - lo) * k / 20000.0;
        const double d = (c(a) - p).norm();
        if (d < best) best = d, ba = a;
    }
    double l = ba - (hi - lo) / 20000.0, r = ba + (hi - lo) / 20000.0;
    for (int it = 0; it < 200; ++it) {
        const double m1 = l + (r - l) * 0.382, m2 = l + (r - l) * 0.618;
        if ((c(m1) - p).norm() < (c(m2) - p).norm()) r = m2;
        else l = m1;
    }
    if (at) *at = 0.5 * (l + r);
    return (c(0.5 * (l + r)) - p).norm();
}

} // namespace

TEST(IntersectionPoint, ClosedFormValue)
{
    const Vec3 p = cone_intersection_point();
    // long double evaluation of the same closed form
    const long double s = std::sqrt(51.0L);
    EXPECT_NEAR(p.x(), static_cast<double>(-5.0L / 49 * (-67 + 8 * s)), 1e-15);
    EXPECT_NEAR(p.y(), static_cast<double>((-447 + 68 * s) / 49), 1e-15);
    EXPECT_NEAR(p.z(), static_cast<double>((-330577 + 48248 * s) / 4802), 1e-14);
    EXPECT_NEAR(p.x(), 1.007, 1e-3);
    EXPECT_NEAR(p.y(), 0.788, 1e-3);
    EXPECT_NEAR(p.z(), 2.912, 1e-3);
    EXPECT_LT(std::abs(models::cross_g()(p)), 1e-9);
}

TEST(IntersectionPoint, OnBothCurvesTransversally)
{
    const auto [gu, gs] = cone_section_curves();
    const Vec3 p = cone_intersection_point();
    double au, as;
    EXPECT_LT(closest(gu, p, &au), 1e-7);
    EXPECT_LT(closest(gs, p, &as), 1e-7);
    const double h = 1e-6;
    const Vec3 tu = (gu(au + h) - gu(au - h)).normalized(), ts = (gs(as + h) - gs(as - h)).normalized();
    EXPECT_GT(std::acos(std::min(1.0, std::abs(tu.dot(ts)))), 0.01);
}

TEST(Fixtures, ReversibleHalfMapsAreInvolutions)
{
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-2, 2);
    for (const auto& fx : {cubic_fixture(0), cubic_fixture(cubic_tangency_delta), mcmillan_fixture(4)}) {
        for (int k = 0; k < 100; ++k) {
            const Vec2 q(u(rng), u(rng));
            EXPECT_LT((fx.maps.upper(fx.maps.upper(q)) - q).norm(), 1e-12);
            EXPECT_LT((fx.maps.lower(fx.maps.lower(q)) - q).norm(), 1e-12);
        }
    }
}
