#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "shrinkproj/space.hpp"

using namespace shrinkproj;

namespace {

// Naive reference norm, independent of the scaled implementation.
double naive_norm(const Vector& v, double p)
{
    double s = 0.0;
    for (auto c : v) {
        s += std::pow(std::abs(c), p);
    }
    return std::pow(s, 1.0 / p);
}

Vector random_vector(std::mt19937_64& rng, int d, double scale = 3.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n(rng);
    }
    return v;
}

} // namespace

TEST(SpaceConfig, DerivesConjugateExponent)
{
    SpaceConfig s(4, 3.0);
    EXPECT_DOUBLE_EQ(s.conjugate(), 1.5);
    EXPECT_FALSE(s.is_hilbert());
    EXPECT_TRUE(SpaceConfig(2, 2.0).is_hilbert());
    EXPECT_DOUBLE_EQ(SpaceConfig(2, 2.0).conjugate(), 2.0);
}

TEST(SpaceConfig, RejectsBadExponentAndDimension)
{
    EXPECT_THROW(SpaceConfig(3, 1.0), Error);
    EXPECT_THROW(SpaceConfig(3, 1.05), Error);
    EXPECT_THROW(SpaceConfig(3, 12.0), Error);
    EXPECT_THROW(SpaceConfig(0, 2.0), Error);
    EXPECT_NO_THROW(SpaceConfig(3, 1.1));
    EXPECT_NO_THROW(SpaceConfig(3, 10.0));
}

TEST(Points, RejectWrongLengthAndNonFinite)
{
    SpaceConfig s(2, 3.0);
    EXPECT_THROW(PrimalPoint(s, Vector::Zero(3)), Error);
    Vector bad(2);
    bad << 1.0, std::nan("");
    EXPECT_THROW(PrimalPoint(s, bad), Error);
}

TEST(DualityMap, IdentityInHilbertMode)
{
    SpaceConfig s(2, 2.0);
    const auto w = duality_map(PrimalPoint(s, Eigen::Vector2d(3.0, -4.0)));
    EXPECT_EQ(w.coords(), Eigen::Vector2d(3.0, -4.0));
}

TEST(DualityMap, ZeroMapsToZero)
{
    for (double p : {1.5, 2.0, 3.0, 10.0}) {
        SpaceConfig s(3, p);
        EXPECT_EQ(duality_map(PrimalPoint::zero(s)).coords(), Vector::Zero(3));
        EXPECT_EQ(inverse_duality_map(DualPoint::zero(s)).coords(), Vector::Zero(3));
    }
}

TEST(DualityMap, CubeNormOfOnesVector)
{
    // Expected value from the defining identities: <x, Jx> = |x|_3^2 and
    // |Jx|_{3/2} = |x|_3 with Jx = (c, c) force c = 2^{-1/3}.
    SpaceConfig s(2, 3.0);
    const PrimalPoint x(s, Eigen::Vector2d(1.0, 1.0));
    const double nx = naive_norm(x.coords(), 3.0);
    const double c = nx * nx / 2.0;
    ASSERT_NEAR(naive_norm(Eigen::Vector2d(c, c), 1.5), nx, 1e-14);
    const auto w = duality_map(x);
    EXPECT_NEAR(w[0], c, 1e-14);
    EXPECT_NEAR(w[1], c, 1e-14);
    EXPECT_NEAR(w[0], 0.7937005259840998, 1e-14);
}

TEST(InverseDualityMap, RoundTripsTheCubeExample)
{
    SpaceConfig s(2, 3.0);
    const PrimalPoint x(s, Eigen::Vector2d(1.0, 1.0));
    const auto back = inverse_duality_map(duality_map(x));
    EXPECT_NEAR(back[0], 1.0, 1e-14);
    EXPECT_NEAR(back[1], 1.0, 1e-14);
    const auto id = inverse_duality_map(DualPoint(SpaceConfig(2, 2.0), Eigen::Vector2d(1.0, 2.0)));
    EXPECT_EQ(id.coords(), Eigen::Vector2d(1.0, 2.0));
}

TEST(LyapunovPhi, Examples)
{
    SpaceConfig h(2, 2.0);
    EXPECT_NEAR(lyapunov_phi(PrimalPoint(h, Eigen::Vector2d(1, 0)), PrimalPoint(h, Eigen::Vector2d(0, 1))), 2.0,
                1e-15);
    SpaceConfig s(2, 3.0);
    const PrimalPoint x(s, Eigen::Vector2d(1.0, 1.0));
    EXPECT_NEAR(lyapunov_phi(x, x), 0.0, 1e-15);
    EXPECT_NEAR(lyapunov_phi(x, PrimalPoint::zero(s)), std::pow(2.0, 2.0 / 3.0), 1e-14);
    EXPECT_NEAR(lyapunov_phi(x, PrimalPoint::zero(s)), 1.5874010519681994, 1e-14);
}

class GeometryProperties : public ::testing::TestWithParam<double> {};

TEST_P(GeometryProperties, DualityIdentitiesRoundTripsAndBounds)
{
    const double p = GetParam();
    SpaceConfig s(8, p);
    std::mt19937_64 rng(42);
    for (int k = 0; k < 300; ++k) {
        const PrimalPoint x(s, random_vector(rng, 8));
        const PrimalPoint y(s, random_vector(rng, 8));
        const double nx = naive_norm(x.coords(), p);
        const double ny = naive_norm(y.coords(), p);
        const auto jx = duality_map(x);

        EXPECT_LE(std::abs(pairing(x, jx) - nx * nx), 1e-10 * (1 + nx * nx));
        EXPECT_LE(std::abs(naive_norm(jx.coords(), s.conjugate()) - nx), 1e-10 * (1 + nx));

        const auto back = inverse_duality_map(jx);
        EXPECT_LE((back.coords() - x.coords()).norm(), 1e-8 * x.coords().norm());
        const DualPoint w(s, random_vector(rng, 8));
        EXPECT_LE((duality_map(inverse_duality_map(w)).coords() - w.coords()).norm(), 1e-8 * w.coords().norm());

        const double phi = lyapunov_phi(x, y);
        EXPECT_GE(phi, (nx - ny) * (nx - ny) - 1e-12 * (1 + nx * nx + ny * ny));
        EXPECT_LE(phi, (nx + ny) * (nx + ny) + 1e-12 * (1 + nx * nx + ny * ny));

        const double lambda = 0.1 + 5.0 * (k % 7);
        const auto jlx = duality_map(lambda * x);
        EXPECT_LE((jlx.coords() - lambda * jx.coords()).norm(), 1e-10 * (1 + lambda * jx.coords().norm()));

        if (s.is_hilbert()) {
            const double d2 = (x.coords() - y.coords()).squaredNorm();
            EXPECT_LE(std::abs(phi - d2), 1e-12 * (1 + d2));
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Exponents, GeometryProperties, ::testing::Values(1.1, 1.5, 2.0, 3.0, 10.0));

TEST(DualityJacobian, MatchesFiniteDifferences)
{
    std::mt19937_64 rng(3);
    for (double p : {1.5, 2.0, 3.0}) {
        for (int k = 0; k < 20; ++k) {
            const Vector v = random_vector(rng, 5, 1.0);
            const Matrix jac = lp_duality_jacobian(v, p);
            for (int j = 0; j < 5; ++j) {
                Vector e = Vector::Zero(5);
                e[j] = 1e-6;
                const Vector fd = (lp_duality(v + e, p) - lp_duality(v - e, p)) / 2e-6;
                EXPECT_LE((fd - jac.col(j)).norm(), 1e-5 * (1 + fd.norm())) << "p=" << p;
            }
        }
    }
}
