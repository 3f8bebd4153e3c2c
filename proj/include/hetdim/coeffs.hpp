#pragma once

#include "hetdim/types.hpp"

namespace hetdim {

/// Optional higher-order terms of the global map. Only a cubic y-term in the
/// second component is exposed: h2 = e3 * (y1 - y^-)^3.
struct HigherOrderTerms {
    double e3 = 0.0;
};

/// Tangency data of the global map T1 near M^- = (0, y^-, 0):
///   x0 - x^+ = a x1 + b (y1 - y^-) + alpha1 z1 + h1
///   y0       = mu + c x1 + d (y1 - y^-)^2 + alpha2 z1 + h2
///   z0 - z^+ = a_t x1 + b_t (y1 - y^-) + alpha3 z1 + h3
/// `alpha` stacks the rows alpha1, alpha2 and the (D-2)x(D-2) block alpha3.
struct GlobalMapCoeffs {
    double mu = 0.0;
    double x_plus = 0.0;
    double y_minus = 0.0;
    Vec z_plus;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    Vec a_t;
    Vec b_t;
    Mat alpha;
    HigherOrderTerms h;

    [[nodiscard]] int dim() const { return static_cast<int>(z_plus.size()) + 2; }
    [[nodiscard]] Eigen::RowVectorXd alpha1() const { return alpha.row(0); }
    [[nodiscard]] Eigen::RowVectorXd alpha2() const { return alpha.row(1); }
    [[nodiscard]] Mat alpha3() const { return alpha.bottomRows(alpha.rows() - 2); }

    /// Throws ModelError on size mismatch or a degenerate coefficient.
    void validate(int dim) const;
};

/// Coefficients with every z-coupling zeroed and alpha3 = diag(0.5); handy
/// defaults for tests and configs that only specify the planar data.
GlobalMapCoeffs planar_coeffs(int dim, double mu, double x_plus, double y_minus, double a, double b,
                              double c, double d);

/// Coordinates (x, -y, z): the same global map written for the flipped unstable axis.
GlobalMapCoeffs flip_y(const GlobalMapCoeffs& k);

/// Conjugation by (x, y, z) -> (x, y, S z). Used to express the mirror image of a
/// tangency under R = diag(1, -1, S) in the y-mirrored frame of the general solver.
GlobalMapCoeffs conjugate_z(const GlobalMapCoeffs& k, const Vec& signs);

}  // namespace hetdim
