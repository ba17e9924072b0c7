#pragma once

// Ordinary least squares for straight lines and small polynomial models.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "../errors.hpp"

namespace purcellkit::numerics {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
    double slope_stderr = 0.0;
    double slope_lo = 0.0;  // 95% confidence interval
    double slope_hi = 0.0;
    std::size_t points = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n != y.size()) throw ValidationError("fit_line: x and y differ in length");
    if (n < 2) throw NumericalError("fit_line: need at least two points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0) throw NumericalError("fit_line: abscissae are all equal");
    LineFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (f.intercept + f.slope * x[i]);
        ss += r * r;
    }
    f.residual_rms = std::sqrt(ss / n);
    if (n > 2) {
        f.slope_stderr = std::sqrt(ss / (n - 2) / sxx);
        boost::math::students_t dist(static_cast<double>(n - 2));
        double q = boost::math::quantile(boost::math::complement(dist, 0.025));
        f.slope_lo = f.slope - q * f.slope_stderr;
        f.slope_hi = f.slope + q * f.slope_stderr;
    } else {
        f.slope_lo = f.slope_hi = f.slope;
    }
    return f;
}

// Least squares y ~ sum_k c_k x^powers[k] (no implicit constant term).
inline Eigen::VectorXd fit_powers(const std::vector<double>& x, const std::vector<double>& y,
                                  const std::vector<int>& powers) {
    if (x.size() != y.size() || x.size() < powers.size())
        throw NumericalError("fit_powers: not enough points for the model");
    Eigen::MatrixXd A(x.size(), powers.size());
    Eigen::VectorXd b(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t k = 0; k < powers.size(); ++k) A(i, k) = std::pow(x[i], powers[k]);
        b(i) = y[i];
    }
    return A.colPivHouseholderQr().solve(b);
}

}  // namespace purcellkit::numerics
