#pragma once

#include "hetdim/saddle_model.hpp"
#include "hetdim/types.hpp"

#include <vector>

namespace hetdim {

struct LocalOrbit {
    Vec end;
    Mat jacobian;                  ///< d(end)/d(start)
    std::vector<Vec> trajectory;   ///< k + 1 points, start first
    std::vector<Mat> steps;        ///< per-step Jacobians, k entries

    [[nodiscard]] SplitVector end_point() const { return SplitVector::from_flat(end); }
};

/// k-fold T0 with chained Jacobian. Throws EscapeError carrying the first step
/// whose image leaves the validity box.
LocalOrbit iterate_local(const SaddleModel& model, const Vec& p, int k);
LocalOrbit iterate_local(const SaddleModel& model, const SplitVector& p, int k);

/// Boundary-value form of T0^k: given (x0, y_k, z0) find (x_k, y0, z_k).
struct CrossFormResult {
    double x_k = 0.0;
    double y_0 = 0.0;
    Vec z_k;
    double residual = 0.0;
    int iterations = 0;
    /// d(x_k, y_0, z_k) / d(x0, y_k, z0), flat ordering.
    Mat jacobian;
};

CrossFormResult solve_cross_form(const SaddleModel& model, double x0, double yk, const Vec& z0, int k);

/// Cross Jacobian assembled from the direct Jacobian of T0^k.
Mat cross_jacobian(const Mat& direct);

struct DerivativeRatios {
    double ratio_x = 0.0;  ///< ||dx_k/dz0|| / lambda0^k
    double ratio_z = 0.0;  ///< ||dz_k/dz0|| / lambda0^k
};

/// Strong-contraction bounds on the cross-form derivatives along the orbit of p.
DerivativeRatios strong_derivative_bounds(const SaddleModel& model, const SplitVector& p, int k);

}  // namespace hetdim
