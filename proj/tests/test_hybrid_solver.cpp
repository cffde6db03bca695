#include <gtest/gtest.h>

#include <random>

#include "shrinkproj/hybrid_solver.hpp"

using namespace shrinkproj;

namespace {

Vector random_vector(std::mt19937_64& rng, int d, double scale)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n(rng);
    }
    return v;
}

Vector random_in_ball(std::mt19937_64& rng, int d, double p, double radius)
{
    std::uniform_real_distribution<double> u(0.2, 0.9);
    Vector v = random_vector(rng, d, 1.0);
    return u(rng) * radius * v / lp_norm(v, p);
}

ProblemBundle lp_bundle(Vector start)
{
    SpaceConfig s(static_cast<int>(start.size()), 3.0);
    ConstraintSet omega(BaseSet::ball(1.0, 3.0, Frame::Primal));
    ResolventProblem res({Bifunction::dual_pairing(PairingMap::inverse_duality())}, MixedTerm::dual_norm(),
                         PerturbationMap::duality(), omega, 1.0, PrimalPoint::zero(s));
    OperatorFamily fam({RelaxedFamily(JStarMap::shift())}, [](int) { return Eigen::Vector2d(0.5, 0.5); });
    return ProblemBundle{omega, fam, res, PrimalPoint(s, std::move(start))};
}

ProblemBundle hilbert_bundle(Vector start)
{
    SpaceConfig s(static_cast<int>(start.size()), 2.0);
    ConstraintSet omega(BaseSet::ball(1.0, 2.0, Frame::Primal));
    ResolventProblem res({}, MixedTerm::zero(), PerturbationMap::zero(), omega, 1.0, PrimalPoint::zero(s));
    OperatorFamily fam({RelaxedFamily(JStarMap::shift(), constant_schedule(0.5)),
                        RelaxedFamily(JStarMap::shift(), constant_schedule(0.25))});
    return ProblemBundle{omega, fam, res, PrimalPoint(s, std::move(start))};
}

const Eigen::Vector3d kB(1.0, -2.0, 0.5);

ProblemBundle optimization_bundle(Vector start)
{
    SpaceConfig s(3, 2.0);
    ConstraintSet omega(BaseSet::box(Vector::Constant(3, -5.0), Vector::Constant(3, 5.0), Frame::Primal));
    ResolventProblem res({Bifunction::potential(Potential::quadratic(kB))}, MixedTerm::weighted_l1(0.3),
                         PerturbationMap::zero(), omega, 1.0, PrimalPoint::zero(s));
    return ProblemBundle{omega, OperatorFamily({}), res, PrimalPoint(s, std::move(start))};
}

SolverConfig config(Mode mode, const SpaceConfig& s)
{
    SolverConfig cfg;
    cfg.mode = mode;
    cfg.reference_solution = PrimalPoint::zero(s);
    return cfg;
}

} // namespace

TEST(StepY, HilbertExample)
{
    SpaceConfig s(2, 2.0);
    const OperatorFamily fam({RelaxedFamily(JStarMap::shift())}, [](int) { return Eigen::Vector2d(0.5, 0.5); });
    const PrimalPoint x(s, Eigen::Vector2d(1, 2));
    for (Mode m : {Mode::HilbertMain, Mode::BanachMain2}) {
        EXPECT_LE((step_y(m, fam, x, 1).coords() - Eigen::Vector2d(0.75, 1.75)).norm(), 1e-15);
    }
}

TEST(StepY, FixedPointAndIdentityCombination)
{
    std::mt19937_64 rng(1);
    SpaceConfig s(5, 3.0);
    const OperatorFamily fam({RelaxedFamily(JStarMap::shift()), RelaxedFamily(JStarMap::duality())});
    EXPECT_EQ(step_y(Mode::BanachMain2, fam, PrimalPoint::zero(s), 3).coords(), Vector::Zero(5));
    const OperatorFamily none({});
    const PrimalPoint x(s, random_vector(rng, 5, 1.0));
    EXPECT_LE((step_y(Mode::BanachMain2, none, x, 1).coords() - x.coords()).norm(), 1e-15);
}

TEST(StepY, ModesCoincideInHilbertSpace)
{
    std::mt19937_64 rng(2);
    SpaceConfig s(4, 2.0);
    const OperatorFamily fam({RelaxedFamily(JStarMap::shift(), constant_schedule(0.3)),
                              RelaxedFamily(JStarMap::duality())});
    for (int k = 0; k < 50; ++k) {
        const PrimalPoint x(s, random_vector(rng, 4, 1.0));
        EXPECT_LE((step_y(Mode::HilbertMain, fam, x, k + 1) - step_y(Mode::BanachMain2, fam, x, k + 1))
                      .coords()
                      .norm(),
                  1e-14);
    }
}

TEST(ComparisonHalfspace, Examples)
{
    SpaceConfig h(2, 2.0);
    const PrimalPoint u = PrimalPoint::zero(h);
    const PrimalPoint x(h, Eigen::Vector2d(1, 0));
    EXPECT_FALSE(make_comparison_halfspace(Mode::HilbertMain, x, x).has_value());

    const auto cut = make_comparison_halfspace(Mode::HilbertMain, u, x);
    ASSERT_TRUE(cut.has_value());
    EXPECT_EQ(cut->frame, Frame::Primal);
    // z_1 <= 1/2
    EXPECT_NEAR(cut->offset / cut->normal[0], 0.5, 1e-15);
    EXPECT_EQ(cut->normal[1], 0.0);
    EXPECT_LE(cut->violation(u.coords()), 0.0);
    EXPECT_GT(cut->violation(x.coords()), 0.0);

    SpaceConfig b(2, 3.0);
    const auto dual_cut =
        make_comparison_halfspace(Mode::BanachMain2, PrimalPoint::zero(b), PrimalPoint(b, Eigen::Vector2d(1, 0)));
    ASSERT_TRUE(dual_cut.has_value());
    EXPECT_EQ(dual_cut->frame, Frame::Dual);
    EXPECT_NEAR(dual_cut->offset / dual_cut->normal[0], 0.5, 1e-15);
}

TEST(ComparisonHalfspace, MatchesLyapunovComparison)
{
    std::mt19937_64 rng(3);
    for (double p : {1.5, 2.0, 3.0}) {
        SpaceConfig s(3, p);
        for (int k = 0; k < 300; ++k) {
            const PrimalPoint u(s, random_vector(rng, 3, 1.0));
            const PrimalPoint x(s, random_vector(rng, 3, 1.0));
            const PrimalPoint z(s, random_vector(rng, 3, 1.0));
            const auto dual_cut = make_comparison_halfspace(Mode::BanachMain2, u, x);
            const double margin = lyapunov_phi(x, z) - lyapunov_phi(u, z);
            if (std::abs(margin) > 1e-9) {
                EXPECT_EQ(dual_cut->violation(duality_map(z).coords()) <= 0.0, margin >= 0.0);
            }
            if (s.is_hilbert()) {
                const auto cut = make_comparison_halfspace(Mode::HilbertMain, u, x);
                const double m = lyapunov_phi(z, x) - lyapunov_phi(z, u);
                if (std::abs(m) > 1e-9) {
                    EXPECT_EQ(cut->violation(z.coords()) <= 0.0, m >= 0.0);
                }
            }
        }
    }
}

TEST(Run, AnchorAlreadySolution)
{
    const auto bundle = lp_bundle(Vector::Zero(8));
    const auto res = run(bundle, config(Mode::BanachMain2, bundle.anchor.space()));
    EXPECT_TRUE(res.converged);
    ASSERT_EQ(res.history.size(), 1u);
    EXPECT_EQ(res.x_star.coords(), Vector::Zero(8));
    EXPECT_TRUE(res.audit.passed());
}

TEST(Run, LpExampleConvergesToOrigin)
{
    std::mt19937_64 rng(7);
    const auto bundle = lp_bundle(random_in_ball(rng, 8, 3.0, 1.0));
    const auto res = run(bundle, config(Mode::BanachMain2, bundle.anchor.space()));
    // the move-based stop need not fire; the accuracy target must be met by the cap
    EXPECT_LE(res.history.size(), 200u);
    EXPECT_LE(norm(res.x_star), 1e-3);
    EXPECT_TRUE(res.audit.passed()) << "anchor " << res.audit.anchor_monotonicity << " fejer "
                                    << res.audit.fejer_u.value_or(0) << " feas " << res.audit.feasibility
                                    << " gap " << res.audit.final_gap_xu << " retr "
                                    << res.audit.retraction_residual;
    for (std::size_t k = 1; k < res.history.size(); ++k) {
        EXPECT_GE(res.history[k].phi_anchor, res.history[k - 1].phi_anchor - 1e-8);
        EXPECT_LE(*res.history[k].fejer_slack, 1e-6);
    }
}

TEST(Run, OptimizationMatchesSoftThreshold)
{
    const Eigen::Vector3d expected(0.7, -1.7, 0.2);
    for (const Eigen::Vector3d& start : {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(4, 4, -4)}) {
        const auto bundle = optimization_bundle(start);
        SolverConfig cfg;
        cfg.mode = Mode::HilbertMain;
        cfg.reference_solution = PrimalPoint(bundle.anchor.space(), expected);
        const auto res = run(bundle, cfg);
        EXPECT_LE((res.x_star.coords() - expected).norm(), 1e-4);
        EXPECT_TRUE(res.audit.passed());
    }
}

TEST(Run, ModesCoincideOnHilbertFamily)
{
    std::mt19937_64 rng(8);
    const auto bundle = hilbert_bundle(random_in_ball(rng, 4, 2.0, 1.0));
    SolverConfig cfg = config(Mode::HilbertMain, bundle.anchor.space());
    cfg.outer_tol = 0.0;
    cfg.max_outer = 50;
    const auto h = run(bundle, cfg);
    cfg.mode = Mode::BanachMain2;
    const auto b = run(bundle, cfg);
    ASSERT_EQ(h.history.size(), b.history.size());
    for (std::size_t k = 0; k < h.history.size(); ++k) {
        EXPECT_LE((h.history[k].x - b.history[k].x).coords().norm(), 1e-8) << k;
    }
    EXPECT_LE(norm(h.x_star), norm(bundle.anchor));
}

TEST(Run, IterationCapZero)
{
    std::mt19937_64 rng(9);
    const auto bundle = lp_bundle(random_in_ball(rng, 8, 3.0, 1.0));
    SolverConfig cfg = config(Mode::BanachMain2, bundle.anchor.space());
    cfg.max_outer = 0;
    const auto res = run(bundle, cfg);
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.stop_reason, StopReason::IterationCap);
    EXPECT_EQ(res.x_star.coords(), bundle.anchor.coords());
    EXPECT_TRUE(res.history.empty());
}

TEST(Run, Deterministic)
{
    std::mt19937_64 rng(10);
    const auto bundle = lp_bundle(random_in_ball(rng, 8, 3.0, 1.0));
    SolverConfig cfg = config(Mode::BanachMain2, bundle.anchor.space());
    cfg.max_outer = 5;
    const auto a = run(bundle, cfg);
    const auto b = run(bundle, cfg);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) {
        EXPECT_EQ(a.history[k].x.coords(), b.history[k].x.coords());
        EXPECT_EQ(a.history[k].retraction_residual, b.history[k].retraction_residual);
    }
}

TEST(Run, RejectsBadConfigurations)
{
    std::mt19937_64 rng(11);
    const auto bundle = lp_bundle(random_in_ball(rng, 8, 3.0, 1.0));
    auto expect_code = [&](const SolverConfig& cfg, ErrorCode code) {
        try {
            run(bundle, cfg);
            ADD_FAILURE() << "expected " << to_string(code);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), code) << e.what();
        }
    };
    SolverConfig hilbert_on_lp = config(Mode::HilbertMain, bundle.anchor.space());
    expect_code(hilbert_on_lp, ErrorCode::InvalidArgument);

    SolverConfig small_r = config(Mode::BanachMain2, bundle.anchor.space());
    small_r.r_schedule = [](int n) { return 1.0 / n; };
    small_r.r_lower = 0.5;
    expect_code(small_r, ErrorCode::InvalidArgument);

    SolverConfig few_cuts = config(Mode::BanachMain2, bundle.anchor.space());
    few_cuts.max_cuts = 2;
    expect_code(few_cuts, ErrorCode::NonConverged);

    auto outside = lp_bundle(Vector::Constant(8, 1.0));
    EXPECT_THROW(run(outside, config(Mode::BanachMain2, outside.anchor.space())), Error);
}
