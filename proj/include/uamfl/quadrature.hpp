#pragma once

#include <cmath>
#include <sstream>
#include <string_view>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "uamfl/error.hpp"

namespace uamfl {

struct QuadratureSpec {
    double rel_tol = 1e-5;
    double abs_tol = 1e-14;
    /// Integration window radius for cluster centers and corridor offsets;
    /// 0 means "use the simulation disc radius".
    double truncation_radius = 0.0;
    unsigned max_subdivisions = 12;  // bisection depth of the adaptive rule
};

/// Adaptive 15-point Gauss-Kronrod on [a, b]. Throws NumericalError when the
/// error estimate stays far above the requested tolerance.
template <class F>
double integrate(F&& f, double a, double b, const QuadratureSpec& q, std::string_view what) {
    if (!(b > a)) {
        return 0.0;
    }
    double err = 0.0;
    double l1 = 0.0;
    const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, q.max_subdivisions, q.rel_tol, &err, &l1);
    const double allowed = std::max(100.0 * q.rel_tol * l1, q.abs_tol);
    if (!std::isfinite(value) || err > allowed) {
        std::ostringstream msg;
        msg << "quadrature failed for " << what << " on [" << a << ", " << b << "]: value=" << value
            << " error=" << err << " allowed=" << allowed;
        throw NumericalError(msg.str());
    }
    return value;
}

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace uamfl
