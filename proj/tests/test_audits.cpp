#include <gtest/gtest.h>

#include "shrinkproj/audits.hpp"
#include "shrinkproj/scenario.hpp"

using namespace shrinkproj;

TEST(Check, UpperAndLowerBounds)
{
    SuiteResult r{"t", {}, 0.0, {}};
    auto& upper = detail::check(r, "upper", 1e-6);
    auto& lower = detail::check(r, "lower", 0.1, true);
    EXPECT_TRUE(upper.ok());
    EXPECT_FALSE(lower.ok()); // nothing observed yet
    detail::note(upper, 1e-7);
    lower.worst = 0.5;
    EXPECT_TRUE(r.passed());
    detail::note(upper, 1e-3);
    EXPECT_FALSE(r.passed());
    EXPECT_NE(r.summary().find("VIOLATED"), std::string::npos);
}

TEST(Check, ErrorsFailTheSuite)
{
    SuiteResult r{"t", {}, 0.0, "boom"};
    EXPECT_FALSE(r.passed());
    EXPECT_NE(r.summary().find("boom"), std::string::npos);
}

TEST(Suites, GeometryAndClosedForms)
{
    const auto g = geometry_suite(5, {1.5, 2.0, 3.0}, 60, 3);
    EXPECT_TRUE(g.passed()) << g.summary();
    EXPECT_EQ(g.checks.size(), 5u);
    const auto c = resolvent_closed_forms(10, 3);
    EXPECT_TRUE(c.passed()) << c.summary();
}

TEST(Suites, RetractionSmall)
{
    const auto r = retraction_suite(4, {1.5, 2.0, 3.0}, 9, 11);
    EXPECT_TRUE(r.passed()) << r.summary();
}

TEST(Suites, ResolventOnHilbertCases)
{
    auto cases = standard_resolvent_cases();
    cases.pop_back(); // the l_p case is covered by the acceptance run
    const auto r = resolvent_suite(cases, 12, 5);
    EXPECT_TRUE(r.passed()) << r.summary();
}

TEST(Suites, WrongSolutionIsCaught)
{
    auto cs = standard_resolvent_cases().front();
    cs.solution = PrimalPoint(cs.space, Vector::Constant(3, 0.9)); // outside the ball, not a fixed point
    const auto r = resolvent_suite({cs}, 2, 5);
    EXPECT_FALSE(r.passed());
}

TEST(Suites, NegativeControlsAreFlagged)
{
    const auto r = negative_controls(7);
    EXPECT_TRUE(r.passed()) << r.summary();
    for (const auto& c : r.checks) {
        EXPECT_TRUE(c.lower_bound);
        EXPECT_GT(c.worst, 0.1) << c.name;
    }
}

TEST(Suites, OperatorFamilyOfHilbertScenario)
{
    const auto prob = build_problem(hilbert_family());
    const auto r = operator_suite(prob.bundle.family, prob.bundle.anchor.space(), prob.bundle.omega, 40, 1);
    EXPECT_TRUE(r.passed()) << r.summary();
}

TEST(Verify, HilbertAndOptimizationScenarios)
{
    for (const auto& spec : {hilbert_family(), optimization_app()}) {
        const auto suites = verify_scenario(spec, 60);
        EXPECT_EQ(suites.size(), 5u);
        for (const auto& s : suites) {
            EXPECT_TRUE(s.passed()) << spec.name << ": " << s.name << ": " << s.summary();
        }
    }
}
