#include "tchain/models.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace tchain;

namespace {

const PiecewiseSystem& z1()
{
    static const PiecewiseSystem z = model_system(ModelId::z1());
    return z;
}
const PiecewiseSystem& z2()
{
    static const PiecewiseSystem z = model_system(ModelId::z2());
    return z;
}

// X = (0, a, y) folds along y = 0 with X^2 f = a; Y = (b, 0, x) folds along x = 0 with Y^2 f = b.
PiecewiseSystem fold_fold(double a, double b)
{
    using namespace models;
    return pair(SmoothField::from_poly({C(0), C(a), X(0, 1, 0)}), SmoothField::from_poly({C(b), C(0), X(1, 0, 0)}),
                "fold-fold");
}

} // namespace

TEST(Filippov, UpperAndLowerFieldsOfZ1)
{
    EXPECT_EQ(evaluate_filippov(z1(), {0, 0, 1}), Vec3(1, -1, 0));
    EXPECT_EQ(evaluate_filippov(z1(), {0, 0, -1}), Vec3(-1, 2, 0));
    const Vec3 p(0.3, -2.1, 0.7);
    EXPECT_EQ(evaluate_filippov(z1(), p), z1().upper(p));
}

TEST(Filippov, OnSwitchingManifoldIsAnError)
{
    try {
        evaluate_filippov(z1(), {1, 1, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::OnSwitchingManifold);
    }
}

TEST(LieDerivative, FirstAndSecondOrderOnZ1)
{
    EXPECT_DOUBLE_EQ(lie_derivative(z1().upper, z1().switching, {5, 2, 0}, 1), 2.0);
    EXPECT_DOUBLE_EQ(lie_derivative(z1().lower, z1().switching, {3, 0, 0}, 1), -3.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-4, 4);
    for (int k = 0; k < 20; ++k) {
        const Vec3 p(u(rng), u(rng), u(rng));
        EXPECT_DOUBLE_EQ(lie_derivative(z1().upper, z1().switching, p, 2), -1.0);
        EXPECT_DOUBLE_EQ(lie_derivative(z1().lower, z1().switching, p, 2), 1.0);
    }
}

TEST(LieDerivative, OrderFourUnsupported)
{
    try {
        lie_derivative(z1().upper, z1().switching, {0, 0, 0}, 4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnsupportedOrder);
    }
}

TEST(LieDerivative, SymbolicMatchesFiniteDifferences)
{
    using namespace models;
    // a nonlinear polynomial pair
    const PolyVec v{X(0, 1, 0) + C(1), X(1, 0, 1, 0.5) - C(1), X(2, 0, 0) + X(0, 1, 1, -0.3)};
    const auto f = ScalarField::from_poly(X(0, 0, 1) + X(1, 1, 0, 0.2) + X(0, 0, 2, 0.1));
    const auto V = SmoothField::from_poly(v);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int k = 0; k < 50; ++k) {
        const Vec3 p(u(rng), u(rng), u(rng));
        const double s = lie_derivative(V, f, p, 2), n = lie_derivative_fd(V, f, p, 2);
        EXPECT_NEAR(n, s, 1e-5 * std::max(1.0, std::abs(s)));
    }
}

TEST(ScalarField, GradientMatchesCentralDifferences)
{
    const auto g = models::cross_g();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int k = 0; k < 50; ++k) {
        const Vec3 p(u(rng), u(rng), u(rng));
        const double h = 1e-6;
        Vec3 n;
        for (int i = 0; i < 3; ++i) {
            Vec3 e = Vec3::Zero();
            e[i] = h;
            n[i] = (g(p + e) - g(p - e)) / (2 * h);
        }
        const Vec3 a = g.gradient(p);
        EXPECT_LT((a - n).norm(), 1e-6 * std::max(1.0, a.norm()));
    }
}

TEST(Classification, Z1Quadrants)
{
    EXPECT_EQ(classify_sigma_point(z1(), {1, 1, 0}), RegionLabel::UnstableSliding);
    EXPECT_EQ(classify_sigma_point(z1(), {1, -1, 0}), RegionLabel::Crossing);
    EXPECT_EQ(classify_sigma_point(z1(), {-1, -1, 0}), RegionLabel::StableSliding);
    EXPECT_EQ(classify_sigma_point(z1(), {0, 1, 0}), RegionLabel::TangencyY);
    EXPECT_EQ(classify_sigma_point(z1(), {1, 0, 0}), RegionLabel::TangencyX);
    EXPECT_EQ(classify_sigma_point(z1(), {0, 0, 0}), RegionLabel::TangencyBoth);
    EXPECT_EQ(classify_sigma_point(z2(), {0, 0, 0}), RegionLabel::StableSliding);
}

// Quadrant oracle: Xf = y - c, Yf = -(x - c) for the fixed point (c, c).
TEST(Classification, RandomPointsMatchQuadrants)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-4, 4);
    for (const auto& [z, c] : {std::pair{&z1(), 0.0}, std::pair{&z2(), 2.0}}) {
        for (int k = 0; k < 1000; ++k) {
            const double x = c + u(rng), y = c + u(rng);
            const auto lab = classify_sigma_point(*z, {x, y, 0});
            RegionLabel want;
            if (x > c && y > c) want = RegionLabel::UnstableSliding;
            else if (x < c && y < c) want = RegionLabel::StableSliding;
            else want = RegionLabel::Crossing;
            EXPECT_EQ(lab, want) << x << " " << y;
        }
    }
}

TEST(FoldFold, TSingularitiesOfTheModels)
{
    EXPECT_EQ(classify_fold_fold(z1(), {0, 0, 0}).cls, FoldClass::Invisible_T);
    EXPECT_EQ(classify_fold_fold(z2(), {2, 2, 0}).cls, FoldClass::Invisible_T);
    const auto r = classify_fold_fold(z1(), {0, 0, 0});
    EXPECT_DOUBLE_EQ(r.x2f, -1.0);
    EXPECT_DOUBLE_EQ(r.y2f, 1.0);
}

TEST(FoldFold, SignTable)
{
    EXPECT_EQ(classify_fold_fold(fold_fold(1, -1), {0, 0, 0}).cls, FoldClass::VisibleVisible);
    EXPECT_EQ(classify_fold_fold(fold_fold(-1, 1), {0, 0, 0}).cls, FoldClass::Invisible_T);
    EXPECT_EQ(classify_fold_fold(fold_fold(-1, -1), {0, 0, 0}).cls, FoldClass::InvisibleVisible);
    EXPECT_EQ(classify_fold_fold(fold_fold(1, 1), {0, 0, 0}).cls, FoldClass::VisibleInvisible);
}

TEST(FoldFold, DegenerateSecondDerivative)
{
    try {
        classify_fold_fold(fold_fold(0, 1), {0, 0, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotAFoldFold);
    }
}

TEST(Sliding, ValuesOnZ1)
{
    const Vec3 f = sliding_field(z1(), {-1, -1, 0});
    EXPECT_NEAR((f - Vec3(0, 0.5, 0)).norm(), 0, 1e-15);
    EXPECT_NEAR((normalized_sliding_field(z1(), {-1, -1, 0}) - Vec3(0, 1, 0)).norm(), 0, 1e-15);
    EXPECT_EQ(normalized_sliding_field(z1(), {0, 0, 0}), Vec3(0, 0, 0));
}

TEST(Sliding, NotSlidingOnCrossing)
{
    try {
        sliding_field(z1(), {1, -1, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NotSliding);
    }
}

TEST(Sliding, EqualFieldsGiveThatField)
{
    using namespace models;
    // X = (1, 2, -1) above and Y = (1, 2, 1) below: X f < 0 < Y f, stable sliding everywhere
    auto z = pair(SmoothField::from_poly({C(1), C(2), C(-1)}), SmoothField::from_poly({C(1), C(2), C(1)}), "eq");
    const Vec3 f = sliding_field(z, {0.4, -0.2, 0});
    EXPECT_NEAR((f - Vec3(1, 2, 0)).norm(), 0, 1e-15);
}

// Sliding tangency and the normalized-field identity on all sliding points of both models.
TEST(Sliding, TangencyAndReparameterization)
{
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-4, 4);
    for (const auto* z : {&z1(), &z2()}) {
        int tested = 0;
        for (int k = 0; k < 2000; ++k) {
            const Vec3 p(2 + u(rng), 2 + u(rng), 0);
            const auto lab = classify_sigma_point(*z, p);
            if (lab != RegionLabel::StableSliding && lab != RegionLabel::UnstableSliding) continue;
            ++tested;
            const Vec3 f = sliding_field(*z, p), n = normalized_sliding_field(*z, p);
            const Vec3 g = z->switching.gradient(p);
            EXPECT_LE(std::abs(f.dot(g)), 1e-10 * f.norm() * g.norm());
            const auto [xf, yf] = lie_pair(*z, p);
            EXPECT_LT((n - (yf - xf) * f).norm(), 1e-10 * std::max(1.0, n.norm()));
            if (lab == RegionLabel::UnstableSliding && f.norm() > 0 && n.norm() > 0)
                EXPECT_LT(f.normalized().dot(n.normalized()), -1 + 1e-9);
            if (lab == RegionLabel::StableSliding && f.norm() > 0 && n.norm() > 0)
                EXPECT_GT(f.normalized().dot(n.normalized()), 1 - 1e-9);
        }
        EXPECT_GT(tested, 500);
    }
}

TEST(Sliding, Z2CrossCheckedAgainstNormalizedField)
{
    const Vec3 p(0, 0, 0);
    const auto [xf, yf] = lie_pair(z2(), p);
    const Vec3 want = normalized_sliding_field(z2(), p) / (yf - xf);
    EXPECT_LT((sliding_field(z2(), p) - want).norm(), 1e-14);
}

TEST(Switching, ZeroIsARegularValueOnTheBox)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-10, 10);
    for (int k = 0; k < 200; ++k) {
        const Vec3 p(u(rng), u(rng), 0);
        EXPECT_GT(z1().switching.gradient(p).norm(), 0);
    }
}
