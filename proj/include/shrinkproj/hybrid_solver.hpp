#pragma once

// Hybrid shrinking-projection loop for common J-fixed points of a finite
// operator family and solutions of a generalized mixed equilibrium problem:
//
//     y_n      = combination of x_n and T^i_n x_n
//     u_n      = T_{r_n}(y_n)
//     Omega_n+1 = Omega_n cut by the comparison halfspace of (u_n, x_n)
//     x_n+1    = R_{Omega_n+1} x_1
//
// Every iteration is audited against the inequalities the convergence proof
// relies on; the worst slacks are returned with the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "convex_sets.hpp"
#include "equilibrium.hpp"
#include "operators.hpp"
#include "retraction.hpp"
#include "space.hpp"

namespace shrinkproj {

enum class Mode {
    HilbertMain, // primal-frame cuts phi(z, u) <= phi(z, x); needs p = 2
    BanachMain2, // dual-frame cuts phi(u, z) <= phi(x, z)
};

inline const char* to_string(Mode m) { return m == Mode::HilbertMain ? "HILBERT_MAIN" : "BANACH_MAIN2"; }

enum class StopReason { Converged, IterationCap };

inline const char* to_string(StopReason r) { return r == StopReason::Converged ? "CONVERGED" : "ITERATION_CAP"; }

struct SolverConfig {
    Mode mode = Mode::BanachMain2;
    Schedule r_schedule = constant_schedule(1.0);
    double r_lower = 1.0; // a in r_n >= a > 0
    double outer_tol = 1e-6;
    int max_outer = 200;
    double resolvent_tol = 1e-8;
    double retraction_tol = 1e-8;
    std::optional<PrimalPoint> reference_solution;
    int max_cuts = 500;
    std::uint64_t seed = 7;
    bool audit = true;
    int audit_samples = 32;
};

/// Slack thresholds of the audited invariants.
struct AuditTolerances {
    double anchor_monotonicity = 1e-8;
    double fejer = 1e-6;
    double feasibility = 1e-6;
    double vanishing_gap_factor = 10.0; // times outer_tol
    double retraction_residual = 1e-6;
};

struct IterationRecord {
    int n = 0;
    PrimalPoint x, y, u;
    double phi_anchor = 0.0;          // phi(x_1, x_n)
    double gap_xu = 0.0;              // |x_n - u_n|
    double resolvent_gap = 0.0;       // certificate of u_n
    double retraction_residual = 0.0; // of x_{n+1}
    std::optional<double> fejer_slack; // for u_n, mode-appropriate argument order
    int cut_count = 0;                // after adding this iteration's cut
};

struct AuditSummary {
    // worst observed violations, clamped at 0 where the inequality has a one-sided form
    double anchor_monotonicity = 0.0; // largest decrease of phi(x_1, x_n)
    std::optional<double> fejer_u;
    std::optional<double> fejer_y;
    double feasibility = 0.0;
    double final_gap_xu = 0.0;
    double resolvent_gap = 0.0;
    double retraction_residual = 0.0;

    bool anchor_monotonicity_ok = true;
    bool fejer_ok = true;
    bool feasibility_ok = true;
    bool vanishing_gap_ok = true;
    bool resolvent_ok = true;
    bool retraction_ok = true;

    bool passed() const noexcept
    {
        return anchor_monotonicity_ok && fejer_ok && feasibility_ok && vanishing_gap_ok && resolvent_ok &&
               retraction_ok;
    }
};

struct SolverResult {
    PrimalPoint x_star;
    bool converged = false;
    StopReason stop_reason = StopReason::IterationCap;
    std::vector<IterationRecord> history;
    AuditSummary audit;
};

struct ProblemBundle {
    ConstraintSet omega; // primal frame, no cuts
    OperatorFamily family;
    ResolventProblem resolvent; // its feasible set is omega; input and r are overwritten
    PrimalPoint anchor;         // x_1 in omega
};

/// HILBERT_MAIN: J^{-1}(a0 Jx + sum a_i T^i_n x); BANACH_MAIN2: a0 x + sum a_i J_*(T^i_n x).
inline PrimalPoint step_y(Mode mode, const OperatorFamily& fam, const PrimalPoint& x, int n)
{
    const Vector w = fam.weights(n);
    if (mode == Mode::HilbertMain) {
        DualPoint acc = w[0] * duality_map(x);
        for (int i = 1; i <= fam.size(); ++i) {
            acc = acc + w[i] * apply_member(fam, i, n, x);
        }
        return inverse_duality_map(acc);
    }
    PrimalPoint acc = w[0] * x;
    for (int i = 1; i <= fam.size(); ++i) {
        acc = acc + w[i] * inverse_duality_map(apply_member(fam, i, n, x));
    }
    return acc;
}

/// The cut every solution must satisfy, as a halfspace in the mode's frame;
/// nullopt when u and x coincide (the cut would be the whole space).
inline std::optional<Halfspace> make_comparison_halfspace(Mode mode, const PrimalPoint& u, const PrimalPoint& x)
{
    const Vector diff = x.coords() - u.coords();
    if (lp_norm(diff, x.space().exponent()) <= 1e-14) {
        return std::nullopt;
    }
    const double nx = norm(x);
    const double nu = norm(u);
    const Frame frame = mode == Mode::HilbertMain ? Frame::Primal : Frame::Dual;
    return Halfspace(2.0 * diff, nx * nx - nu * nu, frame);
}

namespace detail {

inline ConstraintSet as_dual_frame(const ConstraintSet& primal, const SpaceConfig& space)
{
    ConstraintSet out(dual_image(primal.base(), space));
    for (const auto& h : primal.cuts()) {
        out = out.with_cut(Halfspace(h.normal, h.offset, Frame::Dual));
    }
    return out;
}

[[noreturn]] inline void rethrow_with_context(const Error& e, int n, const char* stage)
{
    std::ostringstream os;
    os << "iteration " << n << ", " << stage << ": " << e.message();
    throw Error(e.code(), os.str());
}

} // namespace detail

inline void validate(const SolverConfig& cfg, const ProblemBundle& bundle)
{
    const auto& space = bundle.anchor.space();
    std::ostringstream os;
    if (cfg.mode == Mode::HilbertMain && !space.is_hilbert()) {
        os << "HILBERT_MAIN needs p = 2, got p = " << space.exponent();
    } else if (!(cfg.r_lower > 0.0)) {
        os << "lower bound a of r_n must be positive";
    } else if (!(cfg.outer_tol >= 0.0) || !(cfg.resolvent_tol > 0.0) || !(cfg.retraction_tol > 0.0)) {
        os << "tolerances must be positive";
    } else if (cfg.max_outer < 0 || cfg.max_cuts < 1) {
        os << "max_outer must be >= 0 and max_cuts >= 1";
    } else if (bundle.omega.frame() != Frame::Primal || !bundle.omega.cuts().empty()) {
        os << "Omega must be a primal-frame base set without cuts";
    } else if (!(bundle.resolvent.space() == space)) {
        os << "resolvent template lives in another space";
    } else if (!contains(bundle.omega, bundle.anchor.coords(), 1e-9)) {
        os << "anchor x_1 is not in Omega";
    } else if (cfg.reference_solution && !(cfg.reference_solution->space() == space)) {
        os << "reference solution lives in another space";
    }
    if (!os.str().empty()) {
        throw Error(ErrorCode::InvalidArgument, os.str());
    }
    for (int n = 1; n <= kScheduleHorizon; ++n) {
        if (!(cfg.r_schedule(n) >= cfg.r_lower)) {
            std::ostringstream msg;
            msg << "r_" << n << " = " << cfg.r_schedule(n) << " below a = " << cfg.r_lower;
            throw Error(ErrorCode::InvalidArgument, msg.str());
        }
    }
    // fails early with UNSUPPORTED_COMBINATION
    classify(bundle.resolvent);
}

inline SolverResult run(const ProblemBundle& bundle, const SolverConfig& cfg,
                        const AuditTolerances& tols = AuditTolerances{})
{
    validate(cfg, bundle);
    const auto& space = bundle.anchor.space();
    const PrimalPoint& x1 = bundle.anchor;
    const Mode mode = cfg.mode;

    ConstraintSet cuts_set = mode == Mode::HilbertMain ? bundle.omega : detail::as_dual_frame(bundle.omega, space);

    ResolventOptions ropt;
    ropt.gap.seed = cfg.seed;
    RetractionOptions topt;

    SolverResult result{x1, false, StopReason::IterationCap, {}, {}};
    AuditSummary& audit = result.audit;
    auto fejer_pair = [&](const PrimalPoint& ref, const PrimalPoint& a, const PrimalPoint& x) {
        // Hilbert form phi(ref, a) - phi(ref, x); Banach form phi(a, ref) - phi(x, ref)
        return mode == Mode::HilbertMain ? lyapunov_phi(ref, a) - lyapunov_phi(ref, x)
                                         : lyapunov_phi(a, ref) - lyapunov_phi(x, ref);
    };
    auto note_max = [](std::optional<double>& slot, double v) { slot = slot ? std::max(*slot, v) : v; };

    PrimalPoint x = x1;
    for (int n = 1; n <= cfg.max_outer; ++n) {
        const PrimalPoint y = step_y(mode, bundle.family, x, n);
        ResolventStats rstats;
        std::optional<PrimalPoint> u;
        try {
            u = solve_resolvent(bundle.resolvent.with_input(y, cfg.r_schedule(n)), cfg.resolvent_tol, ropt, &rstats);
        } catch (const Error& e) {
            detail::rethrow_with_context(e, n, "resolvent");
        }
        IterationRecord rec{n, x, y, *u, {}, {}, {}, {}, std::nullopt, 0};
        rec.resolvent_gap = rstats.gap;

        if (auto cut = make_comparison_halfspace(mode, rec.u, x)) {
            cuts_set = cuts_set.with_cut(*cut);
        }
        rec.cut_count = static_cast<int>(cuts_set.cuts().size());
        if (rec.cut_count > cfg.max_cuts) {
            std::ostringstream os;
            os << "iteration " << n << ": cut set exceeds the cap of " << cfg.max_cuts;
            throw Error(ErrorCode::NonConverged, os.str());
        }

        PrimalPoint next = x1;
        try {
            if (mode == Mode::HilbertMain) {
                next = PrimalPoint(space, dykstra_project(cuts_set, x1.coords(), topt.dykstra_tol,
                                                          topt.dykstra_max_iter));
            } else {
                next = sunny_retract(RetractionProblem(space, cuts_set, x1), cfg.retraction_tol, topt);
            }
        } catch (const Error& e) {
            detail::rethrow_with_context(e, n, "retraction");
        }

        rec.phi_anchor = lyapunov_phi(x1, x);
        rec.gap_xu = norm(x - rec.u);
        if (cfg.reference_solution) {
            rec.fejer_slack = fejer_pair(*cfg.reference_solution, rec.u, x);
        }

        if (cfg.audit) {
            const ConstraintSet dual_set = mode == Mode::HilbertMain ? detail::as_dual_frame(cuts_set, space)
                                                                     : cuts_set;
            rec.retraction_residual = retraction_vi_residual(RetractionProblem(space, dual_set, x1), next,
                                                             cfg.audit_samples, cfg.seed + static_cast<unsigned>(n));
            const Vector probe = mode == Mode::HilbertMain ? next.coords() : duality_map(next).coords();
            audit.feasibility = std::max(audit.feasibility, std::max(0.0, cuts_set.violation(probe)));
            audit.anchor_monotonicity =
                std::max(audit.anchor_monotonicity, lyapunov_phi(x1, x) - lyapunov_phi(x1, next));
            if (cfg.reference_solution) {
                note_max(audit.fejer_u, *rec.fejer_slack);
                note_max(audit.fejer_y, fejer_pair(*cfg.reference_solution, rec.y, x));
            }
            audit.resolvent_gap = std::max(audit.resolvent_gap, rec.resolvent_gap);
            audit.retraction_residual = std::max(audit.retraction_residual, rec.retraction_residual);
        }

        const double move = norm(next - x);
        result.history.push_back(std::move(rec));
        x = next;
        if (move <= cfg.outer_tol) {
            result.converged = true;
            result.stop_reason = StopReason::Converged;
            break;
        }
    }
    result.x_star = x;

    if (!result.history.empty()) {
        audit.final_gap_xu = result.history.back().gap_xu;
    }
    if (cfg.audit) {
        audit.anchor_monotonicity_ok = audit.anchor_monotonicity <= tols.anchor_monotonicity;
        audit.fejer_ok =
            (!audit.fejer_u || *audit.fejer_u <= tols.fejer) && (!audit.fejer_y || *audit.fejer_y <= tols.fejer);
        audit.feasibility_ok = audit.feasibility <= tols.feasibility;
        // only meaningful once the outer loop has settled
        audit.vanishing_gap_ok = !result.converged || audit.final_gap_xu <= tols.vanishing_gap_factor * cfg.outer_tol;
        audit.resolvent_ok = audit.resolvent_gap <= cfg.resolvent_tol;
        audit.retraction_ok = audit.retraction_residual <= tols.retraction_residual;
    }
    return result;
}

} // namespace shrinkproj
