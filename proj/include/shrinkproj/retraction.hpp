#pragma once

// Sunny generalized nonexpansive retraction R_C onto a set C whose dual image
// JC is closed and convex. With w = Jz,
//
//     phi(x, z) = |x|^2 - 2<x, w> + |w|_q^2,
//
// so Rx = J_*(w*) where w* minimizes h(w) = |w|_q^2 - 2<x, w> over JC. The
// gradient of h is 2(J_* w - x), hence the first-order condition of this
// program is exactly <x - Rx, Jy - JRx> <= 0 for all y in C.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <utility>
#include <variant>
#include <vector>

#include "convex_sets.hpp"
#include "space.hpp"

namespace shrinkproj {

struct RetractionProblem {
    SpaceConfig space;
    ConstraintSet dual_feasible; // JC, dual frame
    PrimalPoint anchor;

    RetractionProblem(SpaceConfig s, ConstraintSet feasible, PrimalPoint x)
        : space(s), dual_feasible(std::move(feasible)), anchor(std::move(x))
    {
        if (dual_feasible.frame() != Frame::Dual) {
            throw Error(ErrorCode::InvalidArgument, "retraction needs a dual-frame constraint set");
        }
        if (!(anchor.space() == space)) {
            throw Error(ErrorCode::InvalidArgument, "retraction anchor lives in another space");
        }
    }
};

struct RetractionOptions {
    int max_iter = 10000;
    double dykstra_tol = 1e-13;
    int dykstra_max_iter = 50000;
    std::optional<DualPoint> start; // defaults to the Euclidean projection of J(anchor)
};

struct RetractionStats {
    int iterations = 0;
    double projected_gradient_norm = 0.0;
    double lipschitz_estimate = 0.0;
};

namespace detail {

inline Vector project_dual(const ConstraintSet& set, const Vector& w, const RetractionOptions& opt)
{
    try {
        return dykstra_project(set, w, opt.dykstra_tol, opt.dykstra_max_iter);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Infeasible) {
            throw;
        }
        throw Error(ErrorCode::NonConverged, std::string("retraction inner projection: ") + e.what());
    }
}

// Power iteration on the gradient-difference operator v -> grad(w + e v) - grad(w).
template <class Grad>
double estimate_lipschitz(Grad&& grad, const Vector& w)
{
    const auto d = w.size();
    Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    const Vector g0 = grad(w);
    const double eps = 1e-6 * (1.0 + w.norm());
    double lip = 0.0;
    for (int k = 0; k < 20; ++k) {
        const Vector hv = (grad(w + eps * v) - g0) / eps;
        const double n = hv.norm();
        if (!(n > 0.0) || !std::isfinite(n)) {
            break;
        }
        lip = n;
        v = hv / n;
    }
    return lip > 0.0 ? lip : 2.0;
}

// Hessian of |w|_q^2 (twice the Jacobian of J_*). Coordinates at zero are
// floored so that q < 2 gives a large but finite curvature there.
inline Matrix norm_sq_hessian(const Vector& w, double q)
{
    const double n = lp_norm(w, q);
    const Vector a = w.cwiseAbs().cwiseMax(1e-14 * n);
    const Vector u = a.array().pow(q - 1.0) * w.array().sign();
    Matrix h = (2.0 * (q - 1.0) * std::pow(n, 2.0 - q) * a.array().pow(q - 2.0)).matrix().asDiagonal();
    h += 2.0 * (2.0 - q) * std::pow(n, 2.0 - 2.0 * q) * u * u.transpose();
    h.diagonal().array() += 1e-12 * h.diagonal().maxCoeff() + 1e-300;
    return h;
}

// Step d minimizing <g, d> + d'Hd/2 over the linear constraints of the set at
// w + d; a ball base enters through its tangent halfspace at w. With H = LL'
// and y = L'd + L^{-1}g this is a least-distance program in y.
inline std::optional<Vector> newton_direction(const ConstraintSet& set, const Vector& w, const Vector& g,
                                              const Matrix& h)
{
    const auto d = w.size();
    std::vector<std::pair<Vector, double>> rows;
    for (const auto& c : set.cuts()) {
        rows.emplace_back(c.normal, c.offset);
    }
    if (const auto* box = std::get_if<Box>(&set.base().shape())) {
        for (Eigen::Index i = 0; i < d; ++i) {
            rows.emplace_back(Vector::Unit(d, i), box->upper[i]);
            rows.emplace_back(-Vector::Unit(d, i), -box->lower[i]);
        }
    } else if (const auto* ball = std::get_if<NormBall>(&set.base().shape())) {
        const double n = lp_norm(w, ball->exponent);
        if (n >= 0.5 * ball->radius) {
            const Vector a = lp_duality(w, ball->exponent) / n; // gradient of the norm
            rows.emplace_back(a, ball->radius - n + a.dot(w));
        }
    }
    const Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) {
        return std::nullopt;
    }
    const Vector d0 = -llt.solve(g);
    if (rows.empty()) {
        return d0;
    }
    Matrix a(static_cast<Eigen::Index>(rows.size()), d);
    Vector b(a.rows());
    for (Eigen::Index k = 0; k < a.rows(); ++k) {
        a.row(k) = rows[static_cast<std::size_t>(k)].first.transpose();
        b[k] = rows[static_cast<std::size_t>(k)].second;
    }
    // A L^{-T} = (L^{-1} A')'
    const Matrix m = llt.matrixL().solve(a.transpose()).transpose();
    const Vector rhs = b - a * (w + d0);
    try {
        const Vector y = project_polyhedron(m, rhs, Vector::Zero(d));
        const Vector dy = llt.matrixU().solve(y);
        return Vector(d0 + dy);
    } catch (const Error&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Projected gradient on h over the dual feasible set.
/// Stops when the gradient mapping at the reference step s0 = 1/L,
/// |w - P(w - s0 grad h(w))| / s0, is <= tol. Measuring at the backtracked
/// step instead would let rounding in h shrink the step until projection
/// noise dominates.
inline PrimalPoint sunny_retract(const RetractionProblem& prob, double tol,
                                 const RetractionOptions& opt = {}, RetractionStats* stats = nullptr)
{
    const double q = prob.space.conjugate();
    const Vector& x = prob.anchor.coords();
    auto grad = [&](const Vector& w) -> Vector { return 2.0 * (lp_duality(w, q) - x); };
    auto h = [&](const Vector& w) { return std::pow(lp_norm(w, q), 2) - 2.0 * x.dot(w); };

    Vector w = opt.start ? opt.start->coords() : lp_duality(x, prob.space.exponent());
    w = detail::project_dual(prob.dual_feasible, w, opt);
    if (prob.space.exponent() == 2.0 && !opt.start) {
        // J is the identity, so the retraction is the metric projection itself.
        if (stats) {
            stats->iterations = 0;
            stats->projected_gradient_norm = 0.0;
        }
        return PrimalPoint(prob.space, std::move(w));
    }

    const double lip = detail::estimate_lipschitz(grad, w);
    const double step0 = 1.0 / lip;
    double step = step0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        const Vector g = grad(w);
        const double pg = (w - detail::project_dual(prob.dual_feasible, w - step0 * g, opt)).norm() / step0;
        if (stats) {
            stats->iterations = it;
            stats->projected_gradient_norm = pg;
            stats->lipschitz_estimate = lip;
        }
        if (pg <= tol) {
            return PrimalPoint(prob.space, lp_duality(w, q));
        }
        // Projected Newton first: near coordinates where w vanishes the
        // curvature of |w|_q^2 blows up (q < 2) and gradient steps crawl.
        // The step is only taken when it stays inside a curved base set;
        // backtracking across the tangent cut would crawl.
        const auto dir = w.cwiseAbs().maxCoeff() > 0.0
                             ? detail::newton_direction(prob.dual_feasible, w, g, detail::norm_sq_hessian(w, q))
                             : std::nullopt;
        if (dir && prob.dual_feasible.base().violation(w + *dir) <= 0.0) {
            const double slope = g.dot(*dir);
            if (slope < 0.0) {
                const double h0 = h(w);
                bool moved = false;
                for (double t = 1.0; t > 1e-10; t *= 0.5) {
                    const Vector wt = w + t * *dir;
                    if (h(wt) <= h0 + 1e-4 * t * slope) {
                        w = wt;
                        moved = true;
                        break;
                    }
                }
                if (moved) {
                    continue;
                }
            }
        }
        // Backtrack on the local Lipschitz constant of grad h between w and the
        // trial point. Unlike a sufficient-decrease test on h, this stays
        // informative once h is flat to rounding (about sqrt(eps) from w*).
        Vector w_new;
        for (int bt = 0;; ++bt) {
            w_new = detail::project_dual(prob.dual_feasible, w - step * g, opt);
            const double dw = (w_new - w).norm();
            if ((grad(w_new) - g).norm() * step <= dw || bt >= 60) {
                break;
            }
            step *= 0.5;
        }
        w = std::move(w_new);
        step = std::min(step * 1.5, 1e4 * step0);
    }
    std::ostringstream os;
    os << "sunny retraction did not converge in " << opt.max_iter << " iterations";
    throw Error(ErrorCode::NonConverged, os.str());
}

/// max over sampled feasible dual points w_y of <anchor - z, w_y - Jz>.
/// A true retraction gives a value <= 0 up to rounding and solver tolerance.
inline double retraction_vi_residual(const RetractionProblem& prob, const PrimalPoint& z, int samples,
                                     std::uint64_t seed = 1)
{
    const Vector jz = duality_map(z).coords();
    const Vector diff = prob.anchor.coords() - z.coords();
    double worst = 0.0; // y = z
    const double fallback = 2.0 * (1.0 + jz.norm() + prob.anchor.coords().norm());
    for (const auto& wy : sample_feasible(prob.dual_feasible, prob.space.dimension(), samples, seed, fallback)) {
        worst = std::max(worst, diff.dot(wy - jz));
    }
    return worst;
}

} // namespace shrinkproj
