#pragma once

#include "hetdim/types.hpp"

#include <complex>
#include <functional>
#include <string>
#include <vector>

namespace hetdim {

using VectorFn = std::function<Vec(const Vec&)>;
using MatrixFn = std::function<Mat(const Vec&)>;

/// Central-difference Jacobian with an absolute step per variable.
Mat fd_jacobian(const VectorFn& f, const Vec& x, const Vec& steps);

struct NewtonOptions {
    int max_iter = 50;
    double tol = 1e-12;     ///< on the scaled residual, max-norm
    Vec var_scale;          ///< typical magnitude per unknown (default ones)
    Vec eq_scale;           ///< typical magnitude per equation (default ones)
    double fd_rel_step = 1e-7;
    MatrixFn jacobian;      ///< analytic Jacobian; finite differences when empty
};

struct NewtonResult {
    Vec x;
    Vec residual;
    double abs_residual = 0.0;     ///< max-norm of F(x)
    double scaled_residual = 0.0;  ///< max-norm of F(x) / eq_scale
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton with column-pivoted QR on the equilibrated system.
NewtonResult newton_solve(const VectorFn& f, const Vec& x0, const NewtonOptions& opts);

/// Throws ConvergenceError naming `what` when the solve did not converge.
NewtonResult newton_solve_or_throw(const VectorFn& f, const Vec& x0, const NewtonOptions& opts,
                                   const std::string& what);

/// Diagonal similarity D^-1 A D with power-of-two entries equalising row and
/// column norms. Eigenvalues are unchanged; returns the balanced matrix and D.
struct Balanced {
    Mat matrix;
    Vec scale;
};
Balanced balance(const Mat& a);

/// Eigenvalues of a dense matrix (balanced first), sorted by decreasing modulus.
std::vector<std::complex<double>> spectrum(const Mat& a);

/// Least-squares slope of log|values| against ks.
double fit_log_slope(const Vec& ks, const Vec& values);

}  // namespace hetdim
