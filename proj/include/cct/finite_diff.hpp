#pragma once

#include <cmath>
#include <functional>

#include "cct/linalg.hpp"

namespace cct {

// Central-difference gradient estimate, one coordinate at a time.
// OracleError if f evaluates to a non-finite value at any probe point.
inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                               double eps) {
    Vector grad(x.size());
    Vector probe = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        probe[k] = x[k] + eps;
        const double fp = f(probe);
        probe[k] = x[k] - eps;
        const double fm = f(probe);
        probe[k] = x[k];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw OracleError("finite_diff_grad: non-finite evaluation at coordinate " +
                              std::to_string(k));
        }
        grad[k] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

}  // namespace cct
