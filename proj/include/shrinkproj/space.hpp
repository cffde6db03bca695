#pragma once

// Finite-dimensional l_p geometry: norms, the canonical pairing, the
// normalized duality maps J and J_* = J^{-1}, and the Lyapunov functional
//
//     phi(x, y) = |x|^2 - 2 <x, J y> + |y|^2.
//
// Primal vectors live in (R^d, |.|_p), dual vectors in (R^d, |.|_q) with
// 1/p + 1/q = 1. The two frames are kept apart at the type level.

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <utility>

#include "error.hpp"

namespace shrinkproj {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dimension and exponent of the primal space. The conjugate exponent is derived.
class SpaceConfig {
public:
    static constexpr double min_exponent = 1.1;
    static constexpr double max_exponent = 10.0;

    SpaceConfig(int dimension, double exponent) : dimension_(dimension), exponent_(exponent)
    {
        if (dimension <= 0) {
            throw Error(ErrorCode::InvalidArgument, "space dimension must be positive");
        }
        if (!(exponent >= min_exponent && exponent <= max_exponent)) {
            std::ostringstream os;
            os << "exponent p=" << exponent << " outside supported band [" << min_exponent << ", "
               << max_exponent << "]";
            throw Error(ErrorCode::InvalidArgument, os.str());
        }
        conjugate_ = exponent / (exponent - 1.0);
    }

    int dimension() const noexcept { return dimension_; }
    double exponent() const noexcept { return exponent_; }
    double conjugate() const noexcept { return conjugate_; }
    bool is_hilbert() const noexcept { return exponent_ == 2.0; }

    friend bool operator==(const SpaceConfig& a, const SpaceConfig& b) noexcept
    {
        return a.dimension_ == b.dimension_ && a.exponent_ == b.exponent_;
    }

private:
    int dimension_;
    double exponent_;
    double conjugate_ = 2.0;
};

struct PrimalFrame {};
struct DualFrame {};

/// Coordinate vector tagged with its space and its frame (primal or dual).
template <class Frame>
class FramedPoint {
public:
    FramedPoint(SpaceConfig space, Vector coords) : space_(space), coords_(std::move(coords))
    {
        if (coords_.size() != space_.dimension()) {
            throw Error(ErrorCode::InvalidArgument, "point length does not match space dimension");
        }
        if (!coords_.allFinite()) {
            throw Error(ErrorCode::InvalidArgument, "point has non-finite coordinates");
        }
    }

    static FramedPoint zero(SpaceConfig space)
    {
        return FramedPoint(space, Vector::Zero(space.dimension()));
    }

    const SpaceConfig& space() const noexcept { return space_; }
    const Vector& coords() const noexcept { return coords_; }
    int size() const noexcept { return static_cast<int>(coords_.size()); }
    double operator[](int i) const { return coords_[i]; }

    friend FramedPoint operator+(const FramedPoint& a, const FramedPoint& b)
    {
        return FramedPoint(a.space_, a.coords_ + b.coords_);
    }
    friend FramedPoint operator-(const FramedPoint& a, const FramedPoint& b)
    {
        return FramedPoint(a.space_, a.coords_ - b.coords_);
    }
    friend FramedPoint operator*(double s, const FramedPoint& a)
    {
        return FramedPoint(a.space_, s * a.coords_);
    }

private:
    SpaceConfig space_;
    Vector coords_;
};

using PrimalPoint = FramedPoint<PrimalFrame>;
using DualPoint = FramedPoint<DualFrame>;

/// |v|_p, computed with max-scaling so tiny and huge vectors do not under/overflow.
inline double lp_norm(const Vector& v, double p)
{
    const double scale = v.cwiseAbs().maxCoeff();
    if (scale == 0.0 || v.size() == 0) {
        return 0.0;
    }
    if (p == 2.0) {
        return scale * (v / scale).norm();
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        sum += std::pow(std::abs(v[i]) / scale, p);
    }
    return scale * std::pow(sum, 1.0 / p);
}

/// Normalized duality map of (R^d, |.|_p) on raw coordinates:
/// w_i = |v|^{2-p} |v_i|^{p-1} sign(v_i), with J0 = 0.
inline Vector lp_duality(const Vector& v, double p)
{
    const double n = lp_norm(v, p);
    if (n == 0.0) {
        return Vector::Zero(v.size());
    }
    if (p == 2.0) {
        return v;
    }
    Vector w(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double t = std::abs(v[i]) / n;
        w[i] = (v[i] < 0.0 ? -n : n) * std::pow(t, p - 1.0);
        if (v[i] == 0.0) {
            w[i] = 0.0;
        }
    }
    return w;
}

/// Jacobian of the p-duality map (the Hessian of |v|_p^2 / 2) at v != 0:
///     (p-1) diag(t_i^{p-2}) + (2-p) s s^T,  t = |v|/|v|_p,  s_i = sign(v_i) t_i^{p-1}.
/// For p < 2 the diagonal is singular at zero coordinates; those entries are clamped.
inline Matrix lp_duality_jacobian(const Vector& v, double p)
{
    const auto d = v.size();
    const double n = lp_norm(v, p);
    if (p == 2.0) {
        return Matrix::Identity(d, d);
    }
    if (n == 0.0) {
        // J is positively homogeneous of degree one; no derivative at the origin.
        return Matrix::Zero(d, d);
    }
    constexpr double t_floor = 1e-8;
    Vector s(d);
    Matrix h = Matrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double t = std::abs(v[i]) / n;
        s[i] = (v[i] < 0.0 ? -1.0 : 1.0) * std::pow(t, p - 1.0);
        h(i, i) = (p - 1.0) * std::pow(std::max(t, p < 2.0 ? t_floor : 0.0), p - 2.0);
    }
    h.noalias() += (2.0 - p) * s * s.transpose();
    return h;
}

inline double norm(const PrimalPoint& x) { return lp_norm(x.coords(), x.space().exponent()); }
inline double norm(const DualPoint& w) { return lp_norm(w.coords(), w.space().conjugate()); }

/// Canonical pairing <x, w> of a primal with a dual vector.
inline double pairing(const PrimalPoint& x, const DualPoint& w) { return x.coords().dot(w.coords()); }

/// J: X -> X*.
inline DualPoint duality_map(const PrimalPoint& x)
{
    return DualPoint(x.space(), lp_duality(x.coords(), x.space().exponent()));
}

/// J_* = J^{-1}: X* -> X.
inline PrimalPoint inverse_duality_map(const DualPoint& w)
{
    return PrimalPoint(w.space(), lp_duality(w.coords(), w.space().conjugate()));
}

/// Lyapunov functional phi(x, y) = |x|^2 - 2<x, Jy> + |y|^2. Clamped at zero
/// to absorb rounding; the exact value is always nonnegative.
inline double lyapunov_phi(const PrimalPoint& x, const PrimalPoint& y)
{
    if (!(x.space() == y.space())) {
        throw Error(ErrorCode::InvalidArgument, "lyapunov_phi: points from different spaces");
    }
    const double nx = norm(x);
    const double ny = norm(y);
    const double value = nx * nx - 2.0 * pairing(x, duality_map(y)) + ny * ny;
    return std::max(0.0, value);
}

} // namespace shrinkproj
