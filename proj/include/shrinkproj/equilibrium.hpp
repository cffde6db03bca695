#pragma once

// Generalized mixed equilibrium data and the resolvent T_r. For an input x,
// T_r(x) is the unique u in Omega with
//
//     sum_i f_i(Ju, Jy) + phi(Jy) - phi(Ju) + <y - u, A u> + (1/r) <u - x, Jy - Ju>  >=  0
//
// for every y in Omega. Bifunctions and the mixed term act on dual vectors,
// the perturbation A maps primal to dual.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <variant>
#include <vector>

#include "convex_sets.hpp"
#include "space.hpp"

namespace shrinkproj {

/// Smooth convex function on dual vectors with a gradient oracle.
struct Potential {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
    double lipschitz = 0.0; // of the gradient

    /// psi(v) = weight/2 |v - center|_2^2
    static Potential quadratic(Vector center, double weight = 1.0)
    {
        if (!(weight >= 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "quadratic potential weight must be nonnegative");
        }
        Potential p;
        p.value = [center, weight](const Vector& v) { return 0.5 * weight * (v - center).squaredNorm(); };
        p.gradient = [center, weight](const Vector& v) -> Vector { return weight * (v - center); };
        p.lipschitz = weight;
        return p;
    }
};

/// g in f(w, v) = <g(w), v - w>; maps dual vectors to primal vectors.
struct PairingMap {
    struct InverseDuality {};
    struct Affine {
        Matrix m;
        Vector b;
    };
    std::variant<InverseDuality, Affine> kind;

    static PairingMap inverse_duality() { return PairingMap{InverseDuality{}}; }
    static PairingMap affine(Matrix m, Vector b);

    Vector apply(const DualPoint& w) const
    {
        if (const auto* a = std::get_if<Affine>(&kind)) {
            return a->m * w.coords() + a->b;
        }
        return inverse_duality_map(w).coords();
    }

    bool is_inverse_duality() const { return std::holds_alternative<InverseDuality>(kind); }
};

namespace detail {

inline double min_symmetric_eigenvalue(const Matrix& m)
{
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double spectral_norm(const Matrix& m)
{
    return m.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

inline void require_monotone_affine(const Matrix& m, const Vector& b, const char* what)
{
    if (m.rows() != m.cols() || m.rows() != b.size()) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": matrix/vector shapes disagree");
    }
    if (min_symmetric_eigenvalue(m) < -1e-10) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": matrix is not positive semidefinite");
    }
}

} // namespace detail

inline PairingMap PairingMap::affine(Matrix m, Vector b)
{
    detail::require_monotone_affine(m, b, "affine pairing map");
    return PairingMap{Affine{std::move(m), std::move(b)}};
}

/// Bifunction on J(Omega) x J(Omega) satisfying (A1)-(A4) by construction:
/// POTENTIAL gives f(w, v) = psi(v) - psi(w), DUAL_PAIRING gives <g(w), v - w>.
class Bifunction {
public:
    static Bifunction potential(Potential psi) { return Bifunction(std::move(psi)); }
    static Bifunction dual_pairing(PairingMap g) { return Bifunction(std::move(g)); }

    double evaluate(const DualPoint& w, const DualPoint& v) const
    {
        if (const auto* psi = std::get_if<Potential>(&kind_)) {
            return psi->value(v.coords()) - psi->value(w.coords());
        }
        const auto& g = std::get<PairingMap>(kind_);
        return g.apply(w).dot(v.coords() - w.coords());
    }

    /// Gradient of v -> f(w, v).
    Vector gradient_second(const DualPoint& w, const DualPoint& v) const
    {
        if (const auto* psi = std::get_if<Potential>(&kind_)) {
            return psi->gradient(v.coords());
        }
        return std::get<PairingMap>(kind_).apply(w);
    }

    const Potential* as_potential() const { return std::get_if<Potential>(&kind_); }
    const PairingMap* as_pairing() const { return std::get_if<PairingMap>(&kind_); }

private:
    explicit Bifunction(Potential psi) : kind_(std::move(psi)) {}
    explicit Bifunction(PairingMap g) : kind_(std::move(g)) {}

    std::variant<Potential, PairingMap> kind_;
};

/// Convex lower semicontinuous phi on dual vectors.
class MixedTerm {
public:
    enum class Kind { Zero, DualNorm, WeightedL1, Quadratic };

    static MixedTerm zero() { return MixedTerm(Kind::Zero, 0.0, {}); }
    /// phi(v) = |v|_q
    static MixedTerm dual_norm() { return MixedTerm(Kind::DualNorm, 0.0, {}); }
    /// phi(v) = lambda |v|_1
    static MixedTerm weighted_l1(double lambda)
    {
        if (!(lambda >= 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "weighted l1 term needs lambda >= 0");
        }
        return MixedTerm(Kind::WeightedL1, lambda, {});
    }
    /// phi(v) = 1/2 |v - center|_2^2
    static MixedTerm quadratic(Vector center) { return MixedTerm(Kind::Quadratic, 0.0, std::move(center)); }

    Kind kind() const noexcept { return kind_; }
    double lambda() const noexcept { return lambda_; }
    const Vector& center() const noexcept { return center_; }

    double evaluate(const DualPoint& v) const
    {
        switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::DualNorm: return norm(v);
        case Kind::WeightedL1: return lambda_ * v.coords().lpNorm<1>();
        case Kind::Quadratic: return 0.5 * (v.coords() - center_).squaredNorm();
        }
        return 0.0;
    }

    /// One element of the subdifferential (the minimal-norm one at kinks).
    Vector subgradient(const DualPoint& v) const
    {
        const Vector& c = v.coords();
        switch (kind_) {
        case Kind::Zero: return Vector::Zero(c.size());
        case Kind::DualNorm: {
            const double q = v.space().conjugate();
            const double n = lp_norm(c, q);
            return n == 0.0 ? Vector::Zero(c.size()) : Vector(lp_duality(c, q) / n);
        }
        case Kind::WeightedL1: return lambda_ * c.array().sign().matrix();
        case Kind::Quadratic: return c - center_;
        }
        return Vector::Zero(c.size());
    }

    /// Euclidean prox of y -> step * phi(Jy) for the p-duality map J. Closed
    /// form when phi(J.) is simple: always for Zero, for DualNorm (phi(Jy) =
    /// |y|_p, handled through Moreau: z minus the projection onto the q-ball of
    /// radius step), and for every kind when p = 2.
    Vector prox(const Vector& z, double step, double p) const
    {
        if (!has_prox(p)) {
            throw Error(ErrorCode::UnsupportedCombination, "phi(J.) has no closed-form prox for p != 2");
        }
        switch (kind_) {
        case Kind::Zero: return z;
        case Kind::DualNorm: {
            if (p == 2.0) {
                const double n = z.norm();
                return n <= step ? Vector::Zero(z.size()) : Vector((1.0 - step / n) * z);
            }
            return z - project_norm_ball(z, step, p / (p - 1.0));
        }
        case Kind::WeightedL1: {
            const double t = step * lambda_;
            return z.unaryExpr([t](double x) { return std::copysign(std::max(std::abs(x) - t, 0.0), x); });
        }
        case Kind::Quadratic: return (z + step * center_) / (1.0 + step);
        }
        return z;
    }

    bool has_prox(double p) const noexcept { return p == 2.0 || kind_ == Kind::Zero || kind_ == Kind::DualNorm; }

    bool separable() const noexcept { return kind_ != Kind::DualNorm; }

private:
    MixedTerm(Kind k, double lambda, Vector center) : kind_(k), lambda_(lambda), center_(std::move(center)) {}

    Kind kind_;
    double lambda_;
    Vector center_;
};

/// Monotone A: Omega -> X*.
class PerturbationMap {
public:
    enum class Kind { Zero, Duality, Affine };

    static PerturbationMap zero() { return PerturbationMap(Kind::Zero, {}, {}); }
    static PerturbationMap duality() { return PerturbationMap(Kind::Duality, {}, {}); }
    static PerturbationMap affine(Matrix m, Vector b)
    {
        detail::require_monotone_affine(m, b, "affine perturbation");
        return PerturbationMap(Kind::Affine, std::move(m), std::move(b));
    }

    Kind kind() const noexcept { return kind_; }
    const Matrix& matrix() const noexcept { return m_; }

    DualPoint apply(const PrimalPoint& x) const
    {
        switch (kind_) {
        case Kind::Zero: return DualPoint::zero(x.space());
        case Kind::Duality: return duality_map(x);
        case Kind::Affine: return DualPoint(x.space(), m_ * x.coords() + b_);
        }
        return DualPoint::zero(x.space());
    }

private:
    PerturbationMap(Kind k, Matrix m, Vector b) : kind_(k), m_(std::move(m)), b_(std::move(b)) {}

    Kind kind_;
    Matrix m_;
    Vector b_;
};

struct ResolventProblem {
    std::vector<Bifunction> bifunctions;
    MixedTerm mixed = MixedTerm::zero();
    PerturbationMap perturbation = PerturbationMap::zero();
    ConstraintSet feasible; // Omega, primal frame
    double r;
    PrimalPoint input;

    ResolventProblem(std::vector<Bifunction> f, MixedTerm phi, PerturbationMap a, ConstraintSet omega, double reg,
                     PrimalPoint x)
        : bifunctions(std::move(f)), mixed(std::move(phi)), perturbation(std::move(a)), feasible(std::move(omega)),
          r(reg), input(std::move(x))
    {
        if (feasible.frame() != Frame::Primal) {
            throw Error(ErrorCode::InvalidArgument, "resolvent feasible set must be in the primal frame");
        }
        if (!(r > 0.0) || !std::isfinite(r)) {
            throw Error(ErrorCode::InvalidArgument, "resolvent regularization r must be positive");
        }
    }

    const SpaceConfig& space() const noexcept { return input.space(); }

    ResolventProblem with_input(PrimalPoint x, double reg) const
    {
        ResolventProblem out = *this;
        out.input = std::move(x);
        out.r = reg;
        return out;
    }
};

/// sum_i f_i(Ju, Jy) + phi(Jy) - phi(Ju) + <y - u, Au> + (1/r) <u - input, Jy - Ju>
inline double resolvent_lhs(const ResolventProblem& prob, const PrimalPoint& u, const PrimalPoint& y)
{
    const auto ju = duality_map(u);
    const auto jy = duality_map(y);
    double total = 0.0;
    for (const auto& f : prob.bifunctions) {
        total += f.evaluate(ju, jy);
    }
    total += prob.mixed.evaluate(jy) - prob.mixed.evaluate(ju);
    total += pairing(y - u, prob.perturbation.apply(u));
    total += pairing(u - prob.input, jy - ju) / prob.r;
    return total;
}

struct GapOptions {
    int starts = 16; // random starts, in addition to y = u
    int max_iter = 3000;
    double step_tol = 1e-13;
    std::uint64_t seed = 17;
    // stop as soon as the gap is known to exceed this (threshold queries)
    double early_exit = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Proximal map of step*phi(J.) + indicator(Omega) in Euclidean geometry, J the
/// p-duality map (see MixedTerm::prox). Exact
/// for the separable kinds on boxes and whenever one of the two is trivial;
/// otherwise the Dykstra-like proximal splitting of the two terms.
inline Vector prox_on_set(const MixedTerm& phi, double step, const ConstraintSet& omega, const Vector& z, double p)
{
    const bool whole = std::holds_alternative<WholeSpace>(omega.base().shape()) && omega.cuts().empty();
    if (phi.kind() == MixedTerm::Kind::Zero) {
        return dykstra_project(omega, z, 1e-14, 100000);
    }
    if (whole) {
        return phi.prox(z, step, p);
    }
    if (phi.separable() && std::holds_alternative<Box>(omega.base().shape()) && omega.cuts().empty()) {
        return project_primitive(phi.prox(z, step, p), omega.base());
    }
    // an unconstrained prox point that is already feasible is the answer
    Vector y0 = phi.prox(z, step, p);
    if (contains(omega, y0, 0.0)) {
        return y0;
    }
    // |y|_p plus a p-ball: |prox_t(z)|_p falls monotonically in t and both
    // optimality conditions share the subgradient direction, so when prox_step
    // leaves the ball the answer is the ball projection of z itself.
    if (const auto* ball = std::get_if<NormBall>(&omega.base().shape());
        ball && omega.cuts().empty() && phi.kind() == MixedTerm::Kind::DualNorm && ball->exponent == p) {
        return project_norm_ball(z, ball->radius, p);
    }
    Vector x = z;
    Vector pv = Vector::Zero(z.size());
    Vector qv = Vector::Zero(z.size());
    for (int it = 0; it < 100000; ++it) {
        const Vector y = phi.prox(x + pv, step, p);
        pv = x + pv - y;
        const Vector x_new = dykstra_project(omega, y + qv, 1e-15, 100000);
        qv = y + qv - x_new;
        const double move = (x_new - x).norm();
        x = x_new;
        if (move <= 1e-15 * (1.0 + x.norm())) {
            break;
        }
    }
    return x;
}

/// Gradient in y of the smooth part of resolvent_lhs(prob, u, .), i.e.
/// everything except phi(Jy), plus (when include_phi) a subgradient of phi(Jy).
inline Vector lhs_gradient(const ResolventProblem& prob, const PrimalPoint& u, const DualPoint& ju,
                           const Vector& au, const Vector& y, bool include_phi)
{
    const auto& space = prob.space();
    const PrimalPoint yp(space, y);
    const DualPoint jy = duality_map(yp);
    Vector dual_grad = (u.coords() - prob.input.coords()) / prob.r;
    for (const auto& f : prob.bifunctions) {
        dual_grad += f.gradient_second(ju, jy);
    }
    if (include_phi) {
        dual_grad += prob.mixed.subgradient(jy);
    }
    return lp_duality_jacobian(y, space.exponent()) * dual_grad + au;
}

} // namespace detail

/// Minimizes y -> resolvent_lhs(prob, u, y) over Omega from one start:
/// proximal gradient (phi(J.) through its prox) when that prox has a closed
/// form, otherwise projected subgradient with Armijo backtracking.
inline double minimize_lhs_from(const ResolventProblem& prob, const PrimalPoint& u, Vector y, const GapOptions& opt)
{
    const auto& space = prob.space();
    const double p = space.exponent();
    const bool use_prox = prob.mixed.has_prox(p);
    const DualPoint ju = duality_map(u);
    const Vector au = prob.perturbation.apply(u).coords();
    auto full = [&](const Vector& v) { return resolvent_lhs(prob, u, PrimalPoint(space, v)); };
    auto smooth = [&](const Vector& v) {
        return full(v) - prob.mixed.evaluate(duality_map(PrimalPoint(space, v)));
    };

    double step = 1.0;
    double best = full(y);
    int stalled = 0;
    for (int it = 0; it < opt.max_iter && best > -opt.early_exit; ++it) {
        const Vector g = detail::lhs_gradient(prob, u, ju, au, y, !use_prox);
        Vector y_new;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            if (use_prox) {
                y_new = detail::prox_on_set(prob.mixed, step, prob.feasible, y - step * g, p);
                const Vector dy = y_new - y;
                const double model = smooth(y) + g.dot(dy) + dy.squaredNorm() / (2.0 * step);
                if (smooth(y_new) <= model + 1e-14 * (1.0 + std::abs(model))) {
                    accepted = true;
                    break;
                }
            } else {
                y_new = dykstra_project(prob.feasible, y - step * g, 1e-14, 100000);
                const Vector dy = y_new - y;
                if (full(y_new) <= full(y) + 1e-4 * g.dot(dy)) {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
        const double move = (y_new - y).norm();
        y = std::move(y_new);
        const double value = full(y);
        stalled = value > best - 1e-14 * (1.0 + std::abs(best)) ? stalled + 1 : 0;
        best = std::min(best, value);
        if (move <= opt.step_tol * (1.0 + y.norm()) || stalled >= 10) {
            break;
        }
        step = std::min(step * 2.0, 1e6);
    }
    return std::min(best, full(y));
}

/// max(0, -min_y resolvent_lhs(prob, u, y)) with the inner minimum estimated
/// from y = u plus `starts` random feasible starts. Each start gives a valid
/// lower bound on the true gap; ties resolve to the earliest start.
inline double resolvent_gap(const ResolventProblem& prob, const PrimalPoint& u, const GapOptions& opt = {})
{
    const int d = prob.space().dimension();
    const double fallback = 2.0 * (1.0 + u.coords().norm() + prob.input.coords().norm());
    double lowest = minimize_lhs_from(prob, u, u.coords(), opt);
    for (const auto& y0 : sample_feasible(prob.feasible, d, opt.starts, opt.seed, fallback)) {
        if (lowest <= -opt.early_exit) {
            break;
        }
        lowest = std::min(lowest, minimize_lhs_from(prob, u, y0, opt));
    }
    return std::max(0.0, -lowest);
}

struct ResolventOptions {
    int max_iter = 20000;
    int fallback_evaluations = 200; // gap evaluations spent on pattern search
    GapOptions gap;
};

struct ResolventStats {
    int iterations = 0;
    double gap = 0.0;
    const char* method = "";
};

enum class ResolventClass { HilbertSplitting, BanachDualPairing };

/// Which solver handles the problem, or UNSUPPORTED_COMBINATION.
inline ResolventClass classify(const ResolventProblem& prob)
{
    const auto& space = prob.space();
    if (space.is_hilbert()) {
        for (const auto& f : prob.bifunctions) {
            if (const auto* psi = f.as_potential(); psi && !psi->gradient) {
                throw Error(ErrorCode::UnsupportedCombination, "potential bifunction without a gradient oracle");
            }
        }
        return ResolventClass::HilbertSplitting;
    }
    std::ostringstream why;
    for (const auto& f : prob.bifunctions) {
        const auto* g = f.as_pairing();
        if (!g || !g->is_inverse_duality()) {
            why << "Banach resolvent supports only f(w,v) = <J_* w, v - w> bifunctions; ";
        }
    }
    if (prob.mixed.kind() != MixedTerm::Kind::DualNorm) {
        why << "Banach resolvent needs the dual-norm mixed term; ";
    }
    if (prob.perturbation.kind() != PerturbationMap::Kind::Duality) {
        why << "Banach resolvent needs the duality perturbation A = J; ";
    }
    const auto& shape = prob.feasible.base().shape();
    const auto* ball = std::get_if<NormBall>(&shape);
    const bool ok_set = prob.feasible.cuts().empty() &&
                        (std::holds_alternative<WholeSpace>(shape) || (ball && ball->exponent == space.exponent()));
    if (!ok_set) {
        why << "Banach resolvent needs Omega to be a p-ball or the whole space; ";
    }
    if (!why.str().empty()) {
        throw Error(ErrorCode::UnsupportedCombination, why.str());
    }
    return ResolventClass::BanachDualPairing;
}

namespace detail {

/// Forward-backward splitting on
///     0 in d(phi + i_Omega)(u) + sum grad psi_i(u) + sum g_i(u) + A u + (u - x)/r,
/// strongly monotone with modulus 1/r.
inline Vector solve_hilbert_resolvent(const ResolventProblem& prob, double tol, const ResolventOptions& opt,
                                      ResolventStats* stats)
{
    const auto& space = prob.space();
    double lip = 1.0 / prob.r;
    bool symmetric = true;
    for (const auto& f : prob.bifunctions) {
        if (const auto* psi = f.as_potential()) {
            lip += psi->lipschitz;
        } else {
            const auto& g = *f.as_pairing();
            if (const auto* a = std::get_if<PairingMap::Affine>(&g.kind)) {
                lip += spectral_norm(a->m);
                symmetric = symmetric && a->m.isApprox(a->m.transpose());
            } else {
                lip += 1.0;
            }
        }
    }
    if (prob.perturbation.kind() == PerturbationMap::Kind::Affine) {
        const Matrix& m = prob.perturbation.matrix();
        lip += spectral_norm(m);
        symmetric = symmetric && m.isApprox(m.transpose());
    } else if (prob.perturbation.kind() == PerturbationMap::Kind::Duality) {
        lip += 1.0;
    }
    const double mu = 1.0 / prob.r;
    // cocoercive (gradient) operators take 1/L; a skew part needs mu/L^2
    const double step = symmetric ? 1.0 / lip : mu / (lip * lip);

    auto forward = [&](const Vector& u) -> Vector {
        const PrimalPoint up(space, u);
        const DualPoint ju(space, u);
        Vector out = (u - prob.input.coords()) / prob.r + prob.perturbation.apply(up).coords();
        for (const auto& f : prob.bifunctions) {
            out += f.gradient_second(ju, ju);
        }
        return out;
    };

    Vector u = dykstra_project(prob.feasible, prob.input.coords(), 1e-14, 100000);
    for (int it = 1; it <= opt.max_iter; ++it) {
        const Vector u_new = prox_on_set(prob.mixed, step, prob.feasible, u - step * forward(u), 2.0);
        const double move = (u_new - u).norm();
        u = u_new;
        if (stats) {
            stats->iterations = it;
        }
        if (move <= 0.1 * tol * step) {
            return u;
        }
    }
    std::ostringstream os;
    os << "forward-backward resolvent did not converge in " << opt.max_iter << " iterations";
    throw Error(ErrorCode::NonConverged, os.str());
}

/// Banach route for the l_p dual-pairing class. The origin is tried first
/// (it resolves every input inside a ball of radius r). Otherwise Newton's
/// method with a finite-difference Jacobian and backtracking on |G| drives the
/// natural residual G(u) = u - P(u - F(u)) to zero, where F is the gradient of
/// y -> resolvent_lhs(prob, u, y) at y = u; it starts from the projected input
/// and the result is certified by the gap. Coordinate pattern search on the
/// gap is the fallback when certification fails.
inline Vector solve_banach_resolvent(const ResolventProblem& prob, double tol, const ResolventOptions& opt,
                                     ResolventStats* stats, double& certified_gap)
{
    const auto& space = prob.space();
    const int d = space.dimension();
    int evaluations = 0;
    auto gap_at = [&](const Vector& u, double early_exit = std::numeric_limits<double>::infinity()) {
        ++evaluations;
        GapOptions g = opt.gap;
        g.early_exit = std::min(g.early_exit, early_exit);
        return resolvent_gap(prob, PrimalPoint(space, u), g);
    };
    auto finish = [&](const Vector& u) {
        if (stats) {
            stats->iterations = evaluations;
        }
        return u;
    };
    auto natural_residual = [&](const Vector& u) -> Vector {
        const PrimalPoint up(space, u);
        const DualPoint ju = duality_map(up);
        const Vector g = lhs_gradient(prob, up, ju, prob.perturbation.apply(up).coords(), u, true);
        return u - dykstra_project(prob.feasible, u - g, 1e-15, 100000);
    };

    const Vector origin = Vector::Zero(d);
    certified_gap = gap_at(origin, tol);
    if (certified_gap <= tol) {
        return finish(origin);
    }

    Vector u = dykstra_project(prob.feasible, prob.input.coords(), 1e-15, 100000);
    if (u.norm() == 0.0) {
        u = Vector::Constant(d, 1e-3);
    }
    Vector res = natural_residual(u);
    Matrix jac(d, d);
    for (int it = 0; it < 100 && res.norm() > 1e-15 * (1.0 + u.norm()); ++it) {
        ++evaluations;
        const double h = 1e-7 * (1.0 + u.norm());
        for (int j = 0; j < d; ++j) {
            Vector e = Vector::Zero(d);
            e[j] = h;
            jac.col(j) = (natural_residual(u + e) - natural_residual(u - e)) / (2.0 * h);
        }
        const Vector dir = -jac.colPivHouseholderQr().solve(res);
        if (!dir.allFinite()) {
            break;
        }
        bool moved = false;
        for (double t = 1.0; t > 1e-10; t *= 0.5) {
            const Vector cand = u + t * dir;
            // the origin is stationary for every input; stay off it
            if (cand.norm() == 0.0) {
                continue;
            }
            const Vector cand_res = natural_residual(cand);
            if (cand_res.norm() < (1.0 - 1e-4 * t) * res.norm()) {
                u = cand;
                res = cand_res;
                moved = true;
                break;
            }
        }
        if (!moved) {
            break;
        }
    }
    u = dykstra_project(prob.feasible, u, 1e-15, 100000);

    Vector best = u;
    double best_gap = gap_at(u);

    const int budget = evaluations + opt.fallback_evaluations;
    double h = 0.1 * std::max(1e-3, best.norm());
    while (best_gap > tol && h > 1e-13 && evaluations < budget) {
        bool improved = false;
        for (int i = 0; i < d && !improved; ++i) {
            for (double sgn : {1.0, -1.0}) {
                Vector trial = best;
                trial[i] += sgn * h;
                trial = dykstra_project(prob.feasible, trial, 1e-14, 100000);
                const double gt = gap_at(trial, best_gap);
                if (gt < best_gap) {
                    best = trial;
                    best_gap = gt;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved) {
            h *= 0.5;
        }
    }
    if (best_gap > tol) {
        std::ostringstream os;
        os << "Banach resolvent gap " << best_gap << " above tolerance " << tol << " after " << evaluations
           << " evaluations";
        throw Error(ErrorCode::NonConverged, os.str());
    }
    certified_gap = best_gap;
    return finish(best);
}
} // namespace detail

/// u = T_r(input), certified by resolvent_gap(prob, u) <= tol.
inline PrimalPoint solve_resolvent(const ResolventProblem& prob, double tol, const ResolventOptions& opt = {},
                                   ResolventStats* stats = nullptr)
{
    const auto cls = classify(prob);
    const auto& space = prob.space();
    double gap = 0.0;
    Vector u = cls == ResolventClass::HilbertSplitting ? detail::solve_hilbert_resolvent(prob, tol, opt, stats)
                                                       : detail::solve_banach_resolvent(prob, tol, opt, stats, gap);
    const PrimalPoint result(space, std::move(u));
    if (cls == ResolventClass::HilbertSplitting) {
        gap = resolvent_gap(prob, result, opt.gap);
    }
    if (stats) {
        stats->gap = gap;
        stats->method = cls == ResolventClass::HilbertSplitting ? "forward-backward" : "gap-minimization";
    }
    if (gap > tol) {
        std::ostringstream os;
        os << "resolvent certificate failed: gap " << gap << " > " << tol;
        throw Error(ErrorCode::NonConverged, os.str());
    }
    return result;
}

} // namespace shrinkproj
