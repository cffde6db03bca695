#include <gtest/gtest.h>

#include <random>

#include "shrinkproj/retraction.hpp"

using namespace shrinkproj;

namespace {

RetractionProblem problem(double p, ConstraintSet set, Vector anchor)
{
    SpaceConfig s(static_cast<int>(anchor.size()), p);
    return RetractionProblem(s, std::move(set), PrimalPoint(s, std::move(anchor)));
}

ConstraintSet dual_ball(double p, double radius = 1.0)
{
    return ConstraintSet(BaseSet::ball(radius, p / (p - 1.0), Frame::Dual));
}

ConstraintSet random_dual_set(std::mt19937_64& rng, double p, int d, int cuts)
{
    std::normal_distribution<double> n(0.0, 1.0);
    auto set = dual_ball(p);
    for (int c = 0; c < cuts; ++c) {
        Vector a(d);
        for (int i = 0; i < d; ++i) {
            a[i] = n(rng);
        }
        // offsets >= 0 keep the origin feasible
        set = set.with_cut(Halfspace(a, 0.3 * std::abs(n(rng)), Frame::Dual));
    }
    return set;
}

Vector random_vector(std::mt19937_64& rng, int d, double scale)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n(rng);
    }
    return v;
}

} // namespace

TEST(SunnyRetract, HilbertBallIsMetricProjection)
{
    const auto prob = problem(2.0, dual_ball(2.0), Eigen::Vector2d(2, 0));
    const auto z = sunny_retract(prob, 1e-8);
    EXPECT_LE((z.coords() - Eigen::Vector2d(1, 0)).norm(), 1e-12);
}

TEST(SunnyRetract, FeasibleAnchorIsFixed)
{
    const auto prob = problem(3.0, dual_ball(3.0), Eigen::Vector2d(0.3, -0.4));
    const auto z = sunny_retract(prob, 1e-8);
    EXPECT_LE((z.coords() - prob.anchor.coords()).norm(), 1e-8);
}

TEST(SunnyRetract, CubeSpaceWithHalfplaneAgainstGridSearch)
{
    const auto set = dual_ball(3.0).with_cut(Halfspace(Eigen::Vector2d(1, 0), 0.0, Frame::Dual));
    const auto prob = problem(3.0, set, Eigen::Vector2d(1, 1));
    const auto z = sunny_retract(prob, 1e-8);
    EXPECT_LE(retraction_vi_residual(prob, z, 500), 1e-8);

    // dense grid minimization of h(w) = |w|_q^2 - 2<x, w> over the dual set
    const double q = 1.5;
    double best = 1e300;
    Eigen::Vector2d best_w;
    const int m = 1501;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const Eigen::Vector2d w(-1.0 + 2.0 * i / (m - 1), -1.0 + 2.0 * j / (m - 1));
            if (!contains(set, w, 0.0)) {
                continue;
            }
            const double nw = lp_norm(w, q);
            const double h = nw * nw - 2.0 * (w[0] + w[1]);
            if (h < best) {
                best = h;
                best_w = w;
            }
        }
    }
    EXPECT_LE((duality_map(z).coords() - best_w).norm(), 2e-3);
    EXPECT_LE((z.coords() - Eigen::Vector2d(0, 1)).norm(), 1e-8);
}

TEST(RetractionResidual, InteriorAnchorAndWrongPoint)
{
    const auto interior = problem(3.0, dual_ball(3.0), Eigen::Vector2d(0.2, 0.1));
    EXPECT_LE(retraction_vi_residual(interior, interior.anchor, 200), 1e-12);

    const auto prob = problem(2.0, dual_ball(2.0), Eigen::Vector2d(2, 0));
    const PrimalPoint wrong(prob.space, Eigen::Vector2d(0, 1));
    EXPECT_GT(retraction_vi_residual(prob, wrong, 200), 0.5);
}

TEST(SunnyRetract, RejectsPrimalFrameSet)
{
    SpaceConfig s(2, 3.0);
    EXPECT_THROW(RetractionProblem(s, ConstraintSet(BaseSet::ball(1.0, 3.0, Frame::Primal)), PrimalPoint::zero(s)),
                 Error);
}

class RetractionProperties : public ::testing::TestWithParam<double> {};

TEST_P(RetractionProperties, ResidualIdempotenceThreePointAndUniqueness)
{
    const double p = GetParam();
    const int d = 4;
    std::mt19937_64 rng(static_cast<std::uint64_t>(p * 1000));
    for (int trial = 0; trial < 15; ++trial) {
        const auto set = random_dual_set(rng, p, d, 1 + trial % 5);
        const auto prob = problem(p, set, random_vector(rng, d, 1.5));
        const auto z = sunny_retract(prob, 1e-8);
        EXPECT_TRUE(contains(set, duality_map(z).coords(), 1e-6));
        EXPECT_LE(retraction_vi_residual(prob, z, 200, trial), 1e-6);

        const auto again = sunny_retract(RetractionProblem(prob.space, set, z), 1e-8);
        EXPECT_LE((again.coords() - z.coords()).norm(), 1e-8);

        for (const auto& w : sample_feasible(set, d, 20, 100 + trial)) {
            const PrimalPoint zr = inverse_duality_map(DualPoint(prob.space, w));
            const double lhs = lyapunov_phi(prob.anchor, z) + lyapunov_phi(z, zr);
            EXPECT_LE(lhs, lyapunov_phi(prob.anchor, zr) + 1e-6);
        }

        RetractionOptions opt;
        opt.start = DualPoint(prob.space, random_vector(rng, d, 1.0));
        const auto other = sunny_retract(prob, 1e-8, opt);
        EXPECT_LE((other.coords() - z.coords()).norm(), 1e-6);

        if (prob.space.is_hilbert()) {
            const Vector proj = dykstra_project(set, prob.anchor.coords(), 1e-14, 100000);
            EXPECT_LE((proj - z.coords()).norm(), 1e-6);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Exponents, RetractionProperties, ::testing::Values(1.5, 2.0, 3.0));
