#pragma once

// Property suites over random samples. Each suite reports its worst observed
// slack per check next to the limit it must stay under; they back the `verify`
// command and the acceptance binary.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "convex_sets.hpp"
#include "equilibrium.hpp"
#include "operators.hpp"
#include "retraction.hpp"
#include "space.hpp"

namespace shrinkproj {

struct Check {
    std::string name;
    double worst = 0.0;
    double limit = 0.0;
    bool lower_bound = false; // true: worst must exceed limit (negative controls)

    bool ok() const { return lower_bound ? worst > limit : worst <= limit; }
};

struct SuiteResult {
    std::string name;
    std::deque<Check> checks; // stable references while suites fill it
    double seconds = 0.0;
    std::string error; // set when a solver threw; the suite then fails

    bool passed() const
    {
        if (!error.empty()) {
            return false;
        }
        for (const auto& c : checks) {
            if (!c.ok()) {
                return false;
            }
        }
        return true;
    }

    std::string summary() const
    {
        std::ostringstream os;
        os.precision(3);
        bool first = true;
        for (const auto& c : checks) {
            os << (first ? "" : "; ") << c.name << " " << c.worst << (c.lower_bound ? " > " : " <= ") << c.limit
               << (c.ok() ? "" : " VIOLATED");
            first = false;
        }
        if (!error.empty()) {
            os << (first ? "" : "; ") << "error: " << error;
        }
        return os.str();
    }
};

namespace detail {

class SuiteTimer {
public:
    explicit SuiteTimer(SuiteResult& r) : r_(r), t0_(std::chrono::steady_clock::now()) {}
    ~SuiteTimer() { r_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }
    SuiteTimer(const SuiteTimer&) = delete;
    SuiteTimer& operator=(const SuiteTimer&) = delete;

private:
    SuiteResult& r_;
    std::chrono::steady_clock::time_point t0_;
};

inline Vector gaussian(std::mt19937_64& rng, int d, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    Vector v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n(rng);
    }
    return v;
}

/// Gaussian direction rescaled to a p-norm length drawn from [lo, hi].
inline Vector random_with_length(std::mt19937_64& rng, int d, double p, double lo, double hi)
{
    Vector v = gaussian(rng, d);
    while (v.norm() == 0.0) {
        v = gaussian(rng, d);
    }
    std::uniform_real_distribution<double> len(lo, hi);
    return len(rng) * v / lp_norm(v, p);
}

inline Check& check(SuiteResult& r, const std::string& name, double limit, bool lower_bound = false)
{
    r.checks.push_back({name, lower_bound ? -std::numeric_limits<double>::infinity() : 0.0, limit, lower_bound});
    return r.checks.back();
}

inline void note(Check& c, double v) { c.worst = std::max(c.worst, v); }

} // namespace detail

/// Duality identities, the J_* round trip and the Lyapunov bounds
/// (|x| - |y|)^2 <= phi(x, y) <= (|x| + |y|)^2, all relative.
inline SuiteResult geometry_suite(int dimension, const std::vector<double>& exponents, int samples,
                                  std::uint64_t seed)
{
    SuiteResult r{"geometry", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& pairing_id = detail::check(r, "<x,Jx>=|x|^2", 1e-8);
    auto& norm_id = detail::check(r, "|Jx|_q=|x|_p", 1e-8);
    auto& roundtrip = detail::check(r, "J_*Jx=x", 1e-8);
    auto& lower = detail::check(r, "phi lower bound", 1e-8);
    auto& upper = detail::check(r, "phi upper bound", 1e-8);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> log_scale(-3.0, 3.0);
    for (double p : exponents) {
        const SpaceConfig space(dimension, p);
        for (int k = 0; k < samples; ++k) {
            const PrimalPoint x(space, detail::gaussian(rng, dimension, std::exp(log_scale(rng))));
            const PrimalPoint y(space, detail::gaussian(rng, dimension, std::exp(log_scale(rng))));
            const double nx = norm(x);
            const double ny = norm(y);
            const DualPoint jx = duality_map(x);
            detail::note(pairing_id, std::abs(pairing(x, jx) - nx * nx) / (nx * nx));
            detail::note(norm_id, std::abs(norm(jx) - nx) / nx);
            detail::note(roundtrip, lp_norm(inverse_duality_map(jx).coords() - x.coords(), p) / nx);
            const double phi = lyapunov_phi(x, y);
            const double scale = (nx + ny) * (nx + ny);
            detail::note(lower, ((nx - ny) * (nx - ny) - phi) / scale);
            detail::note(upper, (phi - scale) / scale);
        }
    }
    return r;
}

/// Random anchors retracted onto random dual sets (q-ball cut by up to five
/// halfspaces through a neighbourhood of the origin).
inline SuiteResult retraction_suite(int dimension, const std::vector<double>& exponents, int anchors,
                                    std::uint64_t seed, double tol = 1e-9)
{
    SuiteResult r{"retraction", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& vi = detail::check(r, "VI residual", 1e-6);
    auto& idem = detail::check(r, "idempotence", 1e-8);
    auto& three_point = detail::check(r, "phi(x,Rx)+phi(Rx,z)<=phi(x,z)", 1e-6);
    auto& unique = detail::check(r, "restart agreement", 1e-6);
    auto& hilbert = detail::check(r, "Hilbert = Dykstra", 1e-6);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> cut_count(0, 5);
    std::normal_distribution<double> n01(0.0, 1.0);
    try {
        for (int k = 0; k < anchors; ++k) {
            const double p = exponents[static_cast<std::size_t>(k) % exponents.size()];
            const SpaceConfig space(dimension, p);
            ConstraintSet set(BaseSet::ball(1.0, space.conjugate(), Frame::Dual));
            const int cuts = cut_count(rng);
            for (int c = 0; c < cuts; ++c) {
                set = set.with_cut(Halfspace(detail::gaussian(rng, dimension), 0.3 * std::abs(n01(rng)), Frame::Dual));
            }
            const PrimalPoint x(space, detail::gaussian(rng, dimension, 1.5));
            const RetractionProblem prob(space, set, x);
            const PrimalPoint z = sunny_retract(prob, tol);
            detail::note(vi, retraction_vi_residual(prob, z, 64, seed + static_cast<std::uint64_t>(k)));

            const PrimalPoint zz = sunny_retract(RetractionProblem(space, set, z), tol);
            detail::note(idem, lp_norm(zz.coords() - z.coords(), p));

            for (const auto& w : sample_feasible(set, dimension, 16, seed + 1000 + static_cast<std::uint64_t>(k))) {
                const PrimalPoint zref = inverse_duality_map(DualPoint(space, w));
                detail::note(three_point, lyapunov_phi(x, z) + lyapunov_phi(z, zref) - lyapunov_phi(x, zref));
            }

            // a different feasible start exercises the iterative path in every geometry
            RetractionOptions opt;
            opt.start = DualPoint(space, sample_feasible(set, dimension, 1, seed + 2000 + static_cast<std::uint64_t>(k))[0]);
            const PrimalPoint z2 = sunny_retract(prob, tol, opt);
            detail::note(unique, lp_norm(z2.coords() - z.coords(), p));
            if (space.is_hilbert()) {
                const Vector dyk = dykstra_project(set, x.coords(), 1e-13, 50000);
                detail::note(hilbert, std::max((z.coords() - dyk).norm(), (z2.coords() - dyk).norm()));
            }
        }
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

/// One supported resolvent class with a known point of its solution set and a
/// sampler for inputs at which the resolvent is known to exist.
struct ResolventCase {
    std::string name;
    SpaceConfig space;
    std::function<ResolventProblem(const PrimalPoint&)> make;
    PrimalPoint solution;
    std::function<Vector(std::mt19937_64&)> sample_input;
    double tol = 1e-9;
};

inline std::vector<ResolventCase> standard_resolvent_cases()
{
    std::vector<ResolventCase> out;
    const SpaceConfig h3(3, 2.0);
    out.push_back({"projection",
                   h3,
                   [](const PrimalPoint& x) {
                       return ResolventProblem({}, MixedTerm::zero(), PerturbationMap::zero(),
                                               ConstraintSet(BaseSet::ball(1.0, 2.0, Frame::Primal)), 0.8, x);
                   },
                   PrimalPoint(h3, Vector::Constant(3, 0.2)),
                   [](std::mt19937_64& rng) { return detail::gaussian(rng, 3, 1.5); },
                   1e-9});
    out.push_back({"potential+l1 on box",
                   h3,
                   [](const PrimalPoint& x) {
                       return ResolventProblem(
                           {Bifunction::potential(Potential::quadratic(Vector::Zero(3)))}, MixedTerm::weighted_l1(0.3),
                           PerturbationMap::zero(),
                           ConstraintSet(BaseSet::box(Vector::Constant(3, -2.0), Vector::Constant(3, 2.0), Frame::Primal)),
                           1.5, x);
                   },
                   PrimalPoint::zero(h3),
                   [](std::mt19937_64& rng) { return detail::gaussian(rng, 3, 1.5); },
                   1e-9});
    Matrix m(3, 3);
    m << 1.0, 0.5, -0.3, -0.5, 0.8, 0.2, 0.3, -0.2, 0.6; // positive definite symmetric part
    out.push_back({"skew affine pairing+quadratic",
                   h3,
                   [m](const PrimalPoint& x) {
                       return ResolventProblem({Bifunction::dual_pairing(PairingMap::affine(m, Vector::Zero(3)))},
                                               MixedTerm::quadratic(Vector::Zero(3)),
                                               PerturbationMap::affine(m.transpose(), Vector::Zero(3)),
                                               ConstraintSet(BaseSet::whole_space(Frame::Primal)), 0.5, x);
                   },
                   PrimalPoint::zero(h3),
                   [](std::mt19937_64& rng) { return detail::gaussian(rng, 3, 1.5); },
                   1e-9});
    const SpaceConfig l3(8, 3.0);
    out.push_back({"l_p pairing+dual norm+J",
                   l3,
                   [](const PrimalPoint& x) {
                       return ResolventProblem({Bifunction::dual_pairing(PairingMap::inverse_duality())},
                                               MixedTerm::dual_norm(), PerturbationMap::duality(),
                                               ConstraintSet(BaseSet::ball(4.0, 3.0, Frame::Primal)), 1.0, x);
                   },
                   PrimalPoint::zero(l3),
                   // the resolvent is certified to exist up to input length 3
                   [](std::mt19937_64& rng) { return detail::random_with_length(rng, 8, 3.0, 0.0, 3.0); },
                   1e-8});
    return out;
}

/// Firm nonexpansiveness <T x - T y, J T x - J T y> <= <x - y, J T x - J T y>,
/// the Lyapunov decrease phi(p, T x) + phi(T x, x) <= phi(p, x) for a known
/// solution p, and T p = p. `pairs` input pairs are split across the cases.
inline SuiteResult resolvent_suite(const std::vector<ResolventCase>& cases, int pairs, std::uint64_t seed)
{
    SuiteResult r{"resolvent", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& firm = detail::check(r, "firm nonexpansiveness", 1e-6);
    auto& decrease = detail::check(r, "Lyapunov decrease", 1e-6);
    auto& fixed = detail::check(r, "solution is fixed", 1e-6);
    std::mt19937_64 rng(seed);
    std::string current;
    try {
        for (std::size_t c = 0; c < cases.size(); ++c) {
            const auto& cs = cases[c];
            current = cs.name;
            detail::note(fixed, lp_norm(solve_resolvent(cs.make(cs.solution), cs.tol).coords() - cs.solution.coords(),
                                        cs.space.exponent()));
            const int share = pairs / static_cast<int>(cases.size()) +
                              (static_cast<int>(c) < pairs % static_cast<int>(cases.size()) ? 1 : 0);
            for (int k = 0; k < share; ++k) {
                const PrimalPoint x(cs.space, cs.sample_input(rng));
                const PrimalPoint y(cs.space, cs.sample_input(rng));
                const PrimalPoint tx = solve_resolvent(cs.make(x), cs.tol);
                const PrimalPoint ty = solve_resolvent(cs.make(y), cs.tol);
                const DualPoint jd = duality_map(tx) - duality_map(ty);
                detail::note(firm, pairing(tx - ty, jd) - pairing(x - y, jd));
                detail::note(decrease,
                             lyapunov_phi(cs.solution, tx) + lyapunov_phi(tx, x) - lyapunov_phi(cs.solution, x));
            }
        }
    } catch (const Error& e) {
        r.error = current + ": " + e.what();
    }
    return r;
}

/// Closed forms: projection onto the Euclidean unit ball, and the prox case
/// phi = |.|^2 / 2 on the whole space where T_r x = x / (1 + r).
inline SuiteResult resolvent_closed_forms(int samples, std::uint64_t seed)
{
    SuiteResult r{"resolvent closed forms", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& proj = detail::check(r, "projection case", 1e-8);
    auto& prox = detail::check(r, "prox case", 1e-8);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> rdist(0.2, 3.0);
    const SpaceConfig s(4, 2.0);
    try {
        for (int k = 0; k < samples; ++k) {
            const Vector xv = detail::gaussian(rng, 4, 1.5);
            const double rr = rdist(rng);
            const PrimalPoint x(s, xv);
            const ResolventProblem pp({}, MixedTerm::zero(), PerturbationMap::zero(),
                                      ConstraintSet(BaseSet::ball(1.0, 2.0, Frame::Primal)), rr, x);
            const Vector expect_proj = xv.norm() <= 1.0 ? xv : Vector(xv / xv.norm());
            detail::note(proj, (solve_resolvent(pp, 1e-10).coords() - expect_proj).norm());
            const ResolventProblem px({}, MixedTerm::quadratic(Vector::Zero(4)), PerturbationMap::zero(),
                                      ConstraintSet(BaseSet::whole_space(Frame::Primal)), rr, x);
            detail::note(prox, (solve_resolvent(px, 1e-10).coords() - xv / (1.0 + rr)).norm());
        }
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

/// Every member of the family is generalized J*-nonexpansive around each of
/// its declared J-fixed points.
inline SuiteResult operator_suite(const OperatorFamily& fam, const SpaceConfig& space, const ConstraintSet& omega,
                                  int samples, std::uint64_t seed)
{
    SuiteResult r{"operators", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& c = detail::check(r, "J*-nonexpansive violation", 1e-10);
    for (int i = 1; i <= fam.size(); ++i) {
        const JStarMap& base = fam.member(i).base();
        for (const auto& p : base.known_j_fixed_points(space)) {
            detail::note(c, jstar_nonexpansive_violation(base, p, omega, samples, seed + static_cast<std::uint64_t>(i)));
        }
    }
    return r;
}

/// Broken inputs must be flagged: T = 2J is not generalized J*-nonexpansive,
/// and u = 0 is not the projection of (2, 0) onto the unit disc.
inline SuiteResult negative_controls(std::uint64_t seed)
{
    SuiteResult r{"negative controls", {}, 0.0, {}};
    detail::SuiteTimer timer(r);
    auto& op = detail::check(r, "2J violation", 0.1, true);
    auto& gap = detail::check(r, "wrong resolvent gap", 0.1, true);
    const SpaceConfig s(8, 3.0);
    const auto two_j = [](const PrimalPoint& x) { return 2.0 * duality_map(x); };
    op.worst = jstar_nonexpansive_violation(two_j, PrimalPoint::zero(s),
                                            ConstraintSet(BaseSet::ball(1.0, 3.0, Frame::Primal)), 64, seed);
    const SpaceConfig h(2, 2.0);
    const ResolventProblem prob({}, MixedTerm::zero(), PerturbationMap::zero(),
                                ConstraintSet(BaseSet::ball(1.0, 2.0, Frame::Primal)), 1.0,
                                PrimalPoint(h, Eigen::Vector2d(2.0, 0.0)));
    gap.worst = resolvent_gap(prob, PrimalPoint::zero(h));
    return r;
}

} // namespace shrinkproj
