#pragma once

// Generalized J*-nonexpansive maps T: Omega -> X*, their relaxations
// T_n = alpha_n J + (1 - alpha_n) T, and finite families of those.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "convex_sets.hpp"
#include "space.hpp"

namespace shrinkproj {

class JStarMap {
public:
    enum class Kind { Shift, Duality, Custom };
    using Callable = std::function<DualPoint(const PrimalPoint&)>;

    /// T x = J(0, x_1, ..., x_{d-1}); its only J-fixed point is 0.
    static JStarMap shift()
    {
        return JStarMap(Kind::Shift, {}, "shift", {});
    }
    /// T = J; every point is J-fixed.
    static JStarMap duality() { return JStarMap(Kind::Duality, {}, "duality", {}); }
    static JStarMap custom(Callable f, std::string name = "custom", std::vector<Vector> j_fixed = {})
    {
        if (!f) {
            throw Error(ErrorCode::InvalidArgument, "custom map needs a callable");
        }
        return JStarMap(Kind::Custom, std::move(f), std::move(name), std::move(j_fixed));
    }

    Kind kind() const noexcept { return kind_; }
    const std::string& name() const noexcept { return name_; }

    DualPoint apply(const PrimalPoint& x) const
    {
        switch (kind_) {
        case Kind::Shift: {
            const Vector& c = x.coords();
            Vector s = Vector::Zero(c.size());
            s.tail(c.size() - 1) = c.head(c.size() - 1);
            return duality_map(PrimalPoint(x.space(), std::move(s)));
        }
        case Kind::Duality: return duality_map(x);
        case Kind::Custom: {
            DualPoint out = fn_(x);
            if (!(out.space() == x.space())) {
                throw Error(ErrorCode::InvalidArgument, "custom map '" + name_ + "' changed the space");
            }
            return out;
        }
        }
        return duality_map(x);
    }

    /// Declared J-fixed points (Tx = Jx) in the given space. For DUALITY any
    /// point qualifies; the origin is returned as a representative.
    std::vector<PrimalPoint> known_j_fixed_points(const SpaceConfig& space) const
    {
        if (kind_ != Kind::Custom) {
            return {PrimalPoint::zero(space)};
        }
        std::vector<PrimalPoint> out;
        for (const auto& v : fixed_) {
            out.emplace_back(space, v);
        }
        return out;
    }

private:
    JStarMap(Kind k, Callable f, std::string name, std::vector<Vector> fixed)
        : kind_(k), fn_(std::move(f)), name_(std::move(name)), fixed_(std::move(fixed))
    {
    }

    Kind kind_;
    Callable fn_;
    std::string name_;
    std::vector<Vector> fixed_;
};

using Schedule = std::function<double(int)>;

inline Schedule constant_schedule(double value)
{
    return [value](int) { return value; };
}

/// Schedules are checked on n = 1..kScheduleHorizon at construction and again
/// at every evaluation.
inline constexpr int kScheduleHorizon = 1000;

/// T_n = alpha_n J + (1 - alpha_n) T with alpha_n in (0, 1/2].
class RelaxedFamily {
public:
    explicit RelaxedFamily(JStarMap base, Schedule alpha = constant_schedule(0.5))
        : base_(std::move(base)), alpha_(std::move(alpha))
    {
        if (!alpha_) {
            throw Error(ErrorCode::InvalidArgument, "relaxation schedule missing");
        }
        for (int n = 1; n <= kScheduleHorizon; ++n) {
            this->alpha(n);
        }
    }

    const JStarMap& base() const noexcept { return base_; }

    double alpha(int n) const
    {
        const double a = alpha_(n);
        if (!(a > 0.0 && a < 1.0) || 1.0 - a < 0.5) {
            std::ostringstream os;
            os << "relaxation weight alpha_" << n << " = " << a << " must lie in (0, 1) with 1 - alpha >= 1/2";
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
        return a;
    }

    DualPoint apply(int n, const PrimalPoint& x) const
    {
        const double a = alpha(n);
        return a * duality_map(x) + (1.0 - a) * base_.apply(x);
    }

private:
    JStarMap base_;
    Schedule alpha_;
};

/// N relaxed members combined with weights (alpha^0_n, ..., alpha^N_n) on the
/// simplex; alpha^0_n * alpha^i_n >= a_w keeps every member active.
class OperatorFamily {
public:
    using WeightSchedule = std::function<Vector(int)>;

    OperatorFamily(std::vector<RelaxedFamily> members, WeightSchedule weights = {}, double a_w = 1e-3)
        : members_(std::move(members)), weights_(std::move(weights)), a_w_(a_w)
    {
        if (!(a_w_ > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "a_w must be positive");
        }
        if (!weights_) {
            const int count = static_cast<int>(members_.size()) + 1;
            weights_ = [count](int) { return Vector::Constant(count, 1.0 / count); };
        }
        for (int n = 1; n <= kScheduleHorizon; ++n) {
            this->weights(n);
        }
    }

    int size() const noexcept { return static_cast<int>(members_.size()); }
    const RelaxedFamily& member(int i) const
    {
        if (i < 1 || i > size()) {
            std::ostringstream os;
            os << "member index " << i << " outside 1.." << size();
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
        return members_[static_cast<std::size_t>(i - 1)];
    }
    double a_w() const noexcept { return a_w_; }

    Vector weights(int n) const
    {
        const Vector w = weights_(n);
        std::ostringstream os;
        if (w.size() != size() + 1) {
            os << "weight vector at n = " << n << " has " << w.size() << " entries, expected " << size() + 1;
        } else if (!w.allFinite() || w.minCoeff() < 0.0 || w.maxCoeff() > 1.0) {
            os << "weights at n = " << n << " leave [0, 1]";
        } else if (std::abs(w.sum() - 1.0) > 1e-12) {
            os << "weights at n = " << n << " sum to " << w.sum();
        } else {
            for (int i = 1; i <= size(); ++i) {
                if (w[0] * w[i] < a_w_) {
                    os << "alpha^0_" << n << " * alpha^" << i << "_" << n << " = " << w[0] * w[i] << " below a_w = "
                       << a_w_;
                    break;
                }
            }
        }
        if (!os.str().empty()) {
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
        return w;
    }

private:
    std::vector<RelaxedFamily> members_;
    WeightSchedule weights_;
    double a_w_;
};

/// alpha_n J x + (1 - alpha_n) T_i x for member i (1-based).
inline DualPoint apply_member(const OperatorFamily& fam, int i, int n, const PrimalPoint& x)
{
    return fam.member(i).apply(n, x);
}

/// max over sampled x in omega of phi(p, J_*(T x)) - phi(p, x); a generalized
/// J*-nonexpansive map with J-fixed point p gives <= 0 up to rounding.
inline double jstar_nonexpansive_violation(const std::function<DualPoint(const PrimalPoint&)>& map,
                                           const PrimalPoint& p, const ConstraintSet& omega, int samples,
                                           std::uint64_t seed = 1)
{
    const auto& space = p.space();
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& v : sample_feasible(omega, space.dimension(), samples, seed)) {
        const PrimalPoint x(space, v);
        const PrimalPoint tx = inverse_duality_map(map(x));
        worst = std::max(worst, lyapunov_phi(p, tx) - lyapunov_phi(p, x));
    }
    return worst;
}

inline double jstar_nonexpansive_violation(const JStarMap& map, const PrimalPoint& p, const ConstraintSet& omega,
                                           int samples, std::uint64_t seed = 1)
{
    return jstar_nonexpansive_violation([&map](const PrimalPoint& x) { return map.apply(x); }, p, omega, samples,
                                        seed);
}

struct NstReport {
    double relaxed = 0.0; // tail max of |Jx_n - T^i_n x_n|
    double base = 0.0;    // tail max of |Jx_n - T^i x_n|
};

/// Tail maxima over the last half of the trajectory (x_1 is n = 1), both in
/// the dual norm. base <= relaxed / (1 - alpha_n) <= 2 relaxed.
inline NstReport nst_diagnostic(const OperatorFamily& fam, const std::vector<PrimalPoint>& trajectory)
{
    NstReport out;
    const std::size_t len = trajectory.size();
    for (std::size_t k = len / 2; k < len; ++k) {
        const int n = static_cast<int>(k) + 1;
        const PrimalPoint& x = trajectory[k];
        const DualPoint jx = duality_map(x);
        for (int i = 1; i <= fam.size(); ++i) {
            out.relaxed = std::max(out.relaxed, norm(jx - apply_member(fam, i, n, x)));
            out.base = std::max(out.base, norm(jx - fam.member(i).base().apply(x)));
        }
    }
    return out;
}

} // namespace shrinkproj
