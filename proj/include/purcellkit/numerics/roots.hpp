#pragma once

// Bracketed scalar root finding (TOMS 748) and sign-change scanning.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "../errors.hpp"

namespace purcellkit::numerics {

// Root of f in [lo, hi]; f(lo) and f(hi) must differ in sign. Stops when the bracket
// is narrower than rel_tol relative to its midpoint (or abs_tol).
template <class F>
double find_root(F&& f, double lo, double hi, double rel_tol = 1e-14, double abs_tol = 0.0) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0) == (fhi > 0)) throw NumericalError("no sign change in root bracket");
    auto tol = [&](double a, double b) {
        return std::abs(b - a) <= std::max(abs_tol, rel_tol * std::abs(0.5 * (a + b)));
    };
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    if (iters >= 200) throw NumericalError("root search did not converge");
    return 0.5 * (r.first + r.second);
}

// All sign-change roots of f on a uniform scan of n intervals over [lo, hi].
template <class F>
std::vector<double> scan_roots(F&& f, double lo, double hi, int n, double rel_tol = 1e-14) {
    std::vector<double> roots;
    double x0 = lo, f0 = f(lo);
    for (int i = 1; i <= n; ++i) {
        double x1 = lo + (hi - lo) * i / n;
        double f1 = f(x1);
        if (f0 == 0.0) {
            roots.push_back(x0);
        } else if ((f0 > 0) != (f1 > 0) && f1 != 0.0) {
            roots.push_back(find_root(f, x0, x1, rel_tol));
        }
        x0 = x1;
        f0 = f1;
    }
    if (f0 == 0.0) roots.push_back(x0);
    return roots;
}

}  // namespace purcellkit::numerics
