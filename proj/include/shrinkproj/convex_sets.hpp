#pragma once

// Feasible sets for the shrinking-projection loop: a base set (norm ball, box
// or whole space) intersected with accumulated halfspace cuts. Every
// projection here is Euclidean; the l_p geometry enters only through the
// objectives the callers minimize.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <type_traits>
#include <variant>
#include <vector>

#include "error.hpp"
#include "scalar_root.hpp"
#include "space.hpp"

namespace shrinkproj {

enum class Frame { Primal, Dual };

inline const char* to_string(Frame f) { return f == Frame::Primal ? "primal" : "dual"; }

/// {v : <normal, v> <= offset}
struct Halfspace {
    Vector normal;
    double offset;
    Frame frame;

    Halfspace(Vector n, double b, Frame f) : normal(std::move(n)), offset(b), frame(f)
    {
        if (normal.size() == 0 || normal.cwiseAbs().maxCoeff() == 0.0) {
            throw Error(ErrorCode::InvalidArgument, "halfspace normal must be nonzero");
        }
        if (!normal.allFinite() || !std::isfinite(offset)) {
            throw Error(ErrorCode::InvalidArgument, "halfspace data must be finite");
        }
    }

    /// Signed Euclidean distance past the boundary (<= 0 inside).
    double violation(const Vector& v) const { return (normal.dot(v) - offset) / normal.norm(); }
};

struct WholeSpace {};

/// {v : |v|_exponent <= radius}
struct NormBall {
    double radius;
    double exponent;
};

struct Box {
    Vector lower;
    Vector upper;
};

class BaseSet {
public:
    using Shape = std::variant<WholeSpace, NormBall, Box>;

    static BaseSet whole_space(Frame frame) { return BaseSet(WholeSpace{}, frame); }

    static BaseSet ball(double radius, double exponent, Frame frame)
    {
        if (!(radius > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "ball radius must be positive");
        }
        if (!(exponent > 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "ball exponent must exceed 1");
        }
        return BaseSet(NormBall{radius, exponent}, frame);
    }

    static BaseSet box(Vector lower, Vector upper, Frame frame)
    {
        if (lower.size() != upper.size() || (lower.array() > upper.array()).any()) {
            throw Error(ErrorCode::InvalidArgument, "box bounds must satisfy lower <= upper");
        }
        return BaseSet(Box{std::move(lower), std::move(upper)}, frame);
    }

    const Shape& shape() const noexcept { return shape_; }
    Frame frame() const noexcept { return frame_; }

    double violation(const Vector& v) const
    {
        return std::visit(
            [&](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, WholeSpace>) {
                    return -std::numeric_limits<double>::infinity();
                } else if constexpr (std::is_same_v<S, NormBall>) {
                    return lp_norm(v, s.exponent) - s.radius;
                } else {
                    return std::max((s.lower - v).maxCoeff(), (v - s.upper).maxCoeff());
                }
            },
            shape_);
    }

private:
    BaseSet(Shape shape, Frame frame) : shape_(std::move(shape)), frame_(frame) {}

    Shape shape_;
    Frame frame_;
};

/// Projection onto {|z|_r <= R} solves z_i = sign(v_i) t_i with
/// t_i + lambda t_i^{r-1} = |v_i| and sum t_i^r = R^r. The multiplier lambda
/// is found by bracketing and safeguarded Newton; each t_i the same way.
inline Vector project_norm_ball(const Vector& v, double radius, double r)
{
    if (lp_norm(v, r) <= radius) {
        return v;
    }
    if (r == 2.0) {
        return v * (radius / v.norm());
    }
    const double scale = v.cwiseAbs().maxCoeff();
    const Vector a = v.cwiseAbs() / scale;
    const double rad = radius / scale;
    const double target = std::pow(rad, r);
    const auto d = a.size();

    auto solve_coord = [&](double ai, double lambda) {
        if (ai == 0.0) {
            return 0.0;
        }
        if (lambda == 0.0) {
            return ai;
        }
        auto f = [&](double t) { return t + lambda * std::pow(t, r - 1.0) - ai; };
        auto df = [&](double t) { return 1.0 + lambda * (r - 1.0) * std::pow(t, r - 2.0); };
        const auto res = detail::safeguarded_newton(f, df, 0.0, ai, 4e-16 * ai, 400);
        if (!res) {
            throw Error(ErrorCode::NonConverged, "norm-ball projection: coordinate solve");
        }
        return std::clamp(res->root, 0.0, ai);
    };

    Vector t(d);
    auto fill = [&](double lambda) {
        for (Eigen::Index i = 0; i < d; ++i) {
            t[i] = solve_coord(a[i], lambda);
        }
    };
    auto g = [&](double lambda) {
        fill(lambda);
        double s = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            s += std::pow(t[i], r);
        }
        return s - target;
    };
    auto dg = [&](double lambda) {
        fill(lambda);
        double s = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (t[i] > 0.0) {
                const double dt = -t[i] / (std::pow(t[i], 2.0 - r) + lambda * (r - 1.0));
                s += r * std::pow(t[i], r - 1.0) * dt;
            }
        }
        return s;
    };

    double hi = 1.0;
    int doublings = 0;
    while (g(hi) > 0.0) {
        hi *= 2.0;
        if (++doublings > 200) {
            throw Error(ErrorCode::NonConverged, "norm-ball projection: multiplier bracket");
        }
    }
    const auto root = detail::safeguarded_newton(g, dg, 0.0, hi, 1e-12 * std::max(1.0, hi), 200);
    if (!root) {
        throw Error(ErrorCode::NonConverged, "norm-ball projection: multiplier did not converge");
    }
    fill(root->root);
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        z[i] = (v[i] < 0.0 ? -t[i] : t[i]) * scale;
    }
    // the multiplier tolerance leaves the point a hair outside; pull it onto the sphere
    const double nz = lp_norm(z, r);
    if (nz > radius) {
        z *= radius / nz;
    }
    return z;
}

inline Vector project_primitive(const Vector& v, const BaseSet& base)
{
    return std::visit(
        [&](const auto& s) -> Vector {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, WholeSpace>) {
                return v;
            } else if constexpr (std::is_same_v<S, NormBall>) {
                return project_norm_ball(v, s.radius, s.exponent);
            } else {
                return v.cwiseMax(s.lower).cwiseMin(s.upper);
            }
        },
        base.shape());
}

inline Vector project_primitive(const Vector& v, const Halfspace& h)
{
    const double excess = h.normal.dot(v) - h.offset;
    if (excess <= 0.0) {
        return v;
    }
    return v - (excess / h.normal.squaredNorm()) * h.normal;
}

/// J-image of a primal base set. Since |Jx|_q = |x|_p, the p-ball of radius R
/// maps onto the q-ball of radius R. A box is its own image only when J is the
/// identity.
inline BaseSet dual_image(const BaseSet& primal, const SpaceConfig& space)
{
    if (primal.frame() != Frame::Primal) {
        throw Error(ErrorCode::InvalidArgument, "dual_image expects a primal-frame base set");
    }
    return std::visit(
        [&](const auto& s) -> BaseSet {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, WholeSpace>) {
                return BaseSet::whole_space(Frame::Dual);
            } else if constexpr (std::is_same_v<S, NormBall>) {
                if (s.exponent != space.exponent()) {
                    throw Error(ErrorCode::UnsupportedCombination,
                                "dual image of a norm ball needs the ball exponent to match the space");
                }
                return BaseSet::ball(s.radius, space.conjugate(), Frame::Dual);
            } else {
                if (!space.is_hilbert()) {
                    throw Error(ErrorCode::UnsupportedCombination, "the J-image of a box is not convex for p != 2");
                }
                return BaseSet::box(s.lower, s.upper, Frame::Dual);
            }
        },
        primal.shape());
}

/// Base set intersected with halfspace cuts, all in one frame. Values are
/// immutable; with_cut returns a new set.
class ConstraintSet {
public:
    static constexpr double parallel_angle = 1e-9;

    explicit ConstraintSet(BaseSet base) : base_(std::move(base)) {}

    ConstraintSet(BaseSet base, std::vector<Halfspace> cuts) : base_(std::move(base)), cuts_(std::move(cuts))
    {
        for (const auto& c : cuts_) {
            if (c.frame != base_.frame()) {
                throw Error(ErrorCode::InvalidArgument, "cut frame does not match base-set frame");
            }
        }
    }

    const BaseSet& base() const noexcept { return base_; }
    const std::vector<Halfspace>& cuts() const noexcept { return cuts_; }
    Frame frame() const noexcept { return base_.frame(); }

    /// Appends a cut, dropping any existing cut with the same normal direction
    /// and a weaker normalized offset. A new cut that is itself weaker than a
    /// parallel existing cut is not added.
    ConstraintSet with_cut(const Halfspace& cut) const
    {
        if (cut.frame != frame()) {
            throw Error(ErrorCode::InvalidArgument, "cut frame does not match constraint set");
        }
        const Vector n_new = cut.normal.normalized();
        const double b_new = cut.offset / cut.normal.norm();
        std::vector<Halfspace> kept;
        kept.reserve(cuts_.size() + 1);
        for (const auto& c : cuts_) {
            const double chord = (c.normal.normalized() - n_new).norm();
            if (2.0 * std::asin(std::min(1.0, 0.5 * chord)) <= parallel_angle) {
                const double b_old = c.offset / c.normal.norm();
                if (b_old <= b_new) {
                    return *this;
                }
                continue;
            }
            kept.push_back(c);
        }
        kept.push_back(cut);
        return ConstraintSet(base_, std::move(kept));
    }

    /// Largest violation over the base set and all cuts (<= 0 when strictly inside).
    double violation(const Vector& v) const
    {
        double worst = base_.violation(v);
        for (const auto& c : cuts_) {
            worst = std::max(worst, c.violation(v));
        }
        return worst;
    }

private:
    BaseSet base_;
    std::vector<Halfspace> cuts_;
};

inline bool contains(const ConstraintSet& set, const Vector& v, double tol)
{
    return set.violation(v) <= tol;
}

namespace detail {

/// Lawson-Hanson active-set solver for min |E u - f| subject to u >= 0.
inline Vector nnls(const Matrix& e, const Vector& f)
{
    const auto m = e.cols();
    Vector u = Vector::Zero(m);
    std::vector<char> passive(static_cast<std::size_t>(m), 0);
    const double tol = 10.0 * std::numeric_limits<double>::epsilon() * e.cwiseAbs().colwise().sum().maxCoeff() *
                       static_cast<double>(std::max(e.rows(), m));
    const int max_iter = 3 * static_cast<int>(m) + 50;
    auto solve_passive = [&](Vector& s) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (passive[static_cast<std::size_t>(j)]) {
                idx.push_back(j);
            }
        }
        Matrix ep(e.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            ep.col(static_cast<Eigen::Index>(k)) = e.col(idx[k]);
        }
        const Vector sp = ep.colPivHouseholderQr().solve(f);
        s.setZero(m);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            s[idx[k]] = sp[static_cast<Eigen::Index>(k)];
        }
    };
    Vector s(m);
    for (int outer = 0; outer < max_iter; ++outer) {
        const Vector w = e.transpose() * (f - e * u);
        Eigen::Index t = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w[j] > best) {
                best = w[j];
                t = j;
            }
        }
        if (t < 0) {
            return u;
        }
        passive[static_cast<std::size_t>(t)] = 1;
        for (int inner = 0; inner < max_iter; ++inner) {
            solve_passive(s);
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < m; ++j) {
                if (passive[static_cast<std::size_t>(j)] && s[j] <= 0.0) {
                    alpha = std::min(alpha, u[j] / (u[j] - s[j]));
                }
            }
            if (!std::isfinite(alpha)) {
                u = s;
                break;
            }
            u += alpha * (s - u);
            for (Eigen::Index j = 0; j < m; ++j) {
                if (passive[static_cast<std::size_t>(j)] && u[j] <= tol) {
                    passive[static_cast<std::size_t>(j)] = 0;
                    u[j] = 0.0;
                }
            }
        }
    }
    throw Error(ErrorCode::NonConverged, "NNLS active set did not settle");
}

/// Euclidean projection onto {z : A z <= b} (rows of A of unit length). With
/// z = v + x this is the least-distance program min |x| s.t. -A x >= A v - b,
/// solved through the NNLS problem min |E u - e_{d+1}|, E = [-A^T; (A v - b)^T]:
/// the residual r gives x = -r_{1..d} / r_{d+1}, and r = 0 means infeasible.
inline Vector project_polyhedron(const Matrix& a, const Vector& b, const Vector& v)
{
    const auto d = a.cols();
    const Vector h = a * v - b;
    if (h.maxCoeff() <= 0.0) {
        return v;
    }
    // scale so the distance being computed is O(1)
    const double scale = h.maxCoeff();
    Matrix e(d + 1, a.rows());
    e.topRows(d) = -a.transpose();
    e.row(d) = h.transpose() / scale;
    Vector f = Vector::Zero(d + 1);
    f[d] = 1.0;
    const Vector u = nnls(e, f);
    const Vector r = e * u - f;
    if (!(std::abs(r[d]) > 1e-12)) {
        throw Error(ErrorCode::Infeasible, "halfspace cuts have an empty intersection");
    }
    const Vector z = v - scale * r.head(d) / r[d];
    // The residual formula loses digits when r_{d+1} is small; redo the step as
    // the minimum-norm correction onto the identified active constraints.
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        if (u[j] > 0.0) {
            active.push_back(j);
        }
    }
    Matrix ap(static_cast<Eigen::Index>(active.size()), d);
    Vector rhs(ap.rows());
    for (std::size_t k = 0; k < active.size(); ++k) {
        ap.row(static_cast<Eigen::Index>(k)) = a.row(active[k]);
        rhs[static_cast<Eigen::Index>(k)] = b[active[k]] - a.row(active[k]).dot(v);
    }
    const Vector polished = v + ap.completeOrthogonalDecomposition().solve(rhs);
    const double tol = 1e-12 * (1.0 + v.norm());
    return (a * polished - b).maxCoeff() <= std::max(tol, (a * z - b).maxCoeff()) ? polished : z;
}

} // namespace detail

/// Euclidean projection onto base set intersected with the cuts. The cuts
/// (and a box base, which is polyhedral too) are handled together by an exact
/// active-set projection; a norm-ball base is combined with that polyhedron
/// by two-set Dykstra iterations. Stops when a sweep moves the iterate less
/// than tol and no constraint is violated by more than tol.
inline Vector dykstra_project(const ConstraintSet& set, const Vector& v, double tol, int max_iter)
{
    if (set.cuts().empty()) {
        return project_primitive(v, set.base());
    }
    if (contains(set, v, 0.0)) {
        return v;
    }
    const auto d = v.size();
    const auto* box = std::get_if<Box>(&set.base().shape());
    const auto rows = static_cast<Eigen::Index>(set.cuts().size()) + (box ? 2 * d : 0);
    Matrix a(rows, d);
    Vector b(rows);
    Eigen::Index row = 0;
    for (const auto& c : set.cuts()) {
        const double n = c.normal.norm();
        a.row(row) = c.normal.transpose() / n;
        b[row++] = c.offset / n;
    }
    if (box) {
        for (Eigen::Index i = 0; i < d; ++i) {
            a.row(row).setZero();
            a(row, i) = 1.0;
            b[row++] = box->upper[i];
            a.row(row).setZero();
            a(row, i) = -1.0;
            b[row++] = -box->lower[i];
        }
    }
    if (!std::holds_alternative<NormBall>(set.base().shape())) {
        return detail::project_polyhedron(a, b, v);
    }

    Vector x = v;
    Vector inc_base = Vector::Zero(d);
    Vector inc_poly = Vector::Zero(d);
    const double blowup = 1e8 * (1.0 + v.norm());
    for (int sweep = 1; sweep <= max_iter; ++sweep) {
        const Vector start = x;
        Vector y = x + inc_base;
        const Vector x_base = project_primitive(y, set.base());
        inc_base = y - x_base;
        y = x_base + inc_poly;
        x = detail::project_polyhedron(a, b, y);
        inc_poly = y - x;
        if (!(inc_base.norm() < blowup) || !(inc_poly.norm() < blowup)) {
            throw Error(ErrorCode::Infeasible, "Dykstra increments diverge; intersection is empty or nearly so");
        }
        // The increments always sum to v - x and each is a normal of its set at
        // the point it was taken, so <v - x, c - x> <= |inc_base| |x_base - x|
        // for every feasible c. A small move alone is not enough: a sweep can
        // leave x in place while x_base is far away. The split gap is held to
        // sqrt(tol) because near points of infinite boundary curvature (q < 2
        // balls where a coordinate vanishes) it decays only like 1/sweeps
        // while x itself is already accurate. Feasibility cannot be certified
        // below the rounding floor of the constraint evaluation.
        if ((x - start).norm() < tol && (x_base - x).norm() <= std::sqrt(tol) * (1.0 + v.norm()) &&
            set.violation(x) <= tol + 1e-13 * (1.0 + x.norm())) {
            return x;
        }
    }
    std::ostringstream os;
    os << "Dykstra projection did not converge in " << max_iter << " sweeps (violation "
       << set.violation(x) << ")";
    throw Error(ErrorCode::NonConverged, os.str());
}

namespace detail {

/// Radius of a cube known to enclose the feasible set, or a fallback scale
/// for unbounded sets.
inline double sampling_radius(const ConstraintSet& set, double fallback)
{
    return std::visit(
        [&](const auto& s) -> double {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, NormBall>) {
                return s.radius; // every l_r ball of radius R sits in the sup-norm cube of radius R
            } else if constexpr (std::is_same_v<S, Box>) {
                return std::max(s.lower.cwiseAbs().maxCoeff(), s.upper.cwiseAbs().maxCoeff());
            } else {
                return fallback;
            }
        },
        set.base().shape());
}

} // namespace detail

/// Feasible points of a constraint set: random points of an enclosing cube,
/// half of them projected from twice the cube (so many land on the boundary).
inline std::vector<Vector> sample_feasible(const ConstraintSet& set, int dimension, int count,
                                           std::uint64_t seed, double fallback_radius = 2.0)
{
    std::mt19937_64 rng(seed);
    const double rad = detail::sampling_radius(set, fallback_radius);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<Vector> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        Vector v(dimension);
        const double spread = (k % 2 == 0) ? rad : 2.0 * rad;
        for (int i = 0; i < dimension; ++i) {
            v[i] = spread * unif(rng);
        }
        if (!contains(set, v, 0.0)) {
            v = dykstra_project(set, v, 1e-13, 50000);
        }
        out.push_back(std::move(v));
    }
    return out;
}

} // namespace shrinkproj
