#pragma once

#include <cmath>
#include <optional>

namespace shrinkproj::detail {

struct RootResult {
    double root;
    int iterations;
};

/// Safeguarded Newton on a bracket [lo, hi] with f(lo) and f(hi) of opposite
/// sign. A Newton step that leaves the bracket, or fails to halve the bracket
/// width over two steps, is replaced by bisection. Returns nullopt when the
/// iteration cap is hit before |step| <= xtol.
template <class F, class DF>
std::optional<RootResult> safeguarded_newton(F&& f, DF&& df, double lo, double hi, double xtol,
                                             int max_iter = 200)
{
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) {
        return RootResult{lo, 0};
    }
    if (fhi == 0.0) {
        return RootResult{hi, 0};
    }
    if ((flo > 0.0) == (fhi > 0.0)) {
        return std::nullopt;
    }
    // orient so that f(lo) < 0 < f(hi)
    if (flo > 0.0) {
        std::swap(lo, hi);
    }
    double x = 0.5 * (lo + hi);
    double dx_old = std::abs(hi - lo);
    double dx = dx_old;
    double fx = f(x);
    double dfx = df(x);
    for (int it = 1; it <= max_iter; ++it) {
        const bool newton_out = ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) > 0.0;
        const bool too_slow = std::abs(2.0 * fx) > std::abs(dx_old * dfx);
        if (newton_out || too_slow || !std::isfinite(dfx) || dfx == 0.0) {
            dx_old = dx;
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx_old = dx;
            dx = fx / dfx;
            x -= dx;
        }
        if (std::abs(dx) <= xtol || std::abs(hi - lo) <= xtol) {
            return RootResult{x, it};
        }
        fx = f(x);
        dfx = df(x);
        if (fx == 0.0) {
            return RootResult{x, it};
        }
        if (fx < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
    }
    return std::nullopt;
}

} // namespace shrinkproj::detail
