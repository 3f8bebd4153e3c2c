#pragma once

#include "hetdim/coeffs.hpp"
#include "hetdim/saddle_model.hpp"

#include <cmath>
#include <random>

namespace fixtures {

using hetdim::Vec;

inline hetdim::Multipliers default_multipliers() { return {}; }

inline hetdim::SaddleModel linear_model(int dim = 3) {
    auto m = default_multipliers();
    m.strong = Vec::LinSpaced(dim - 2, 0.25, 0.25 - 0.05 * (dim - 3));
    return hetdim::build_model(m, dim, {}, Vec::Constant(dim - 2, -1.0), true);
}

inline hetdim::SaddleModel polynomial_model(double eps = 0.05, int dim = 3) {
    auto m = default_multipliers();
    m.strong = Vec::LinSpaced(dim - 2, 0.25, 0.25 - 0.05 * (dim - 3));
    return hetdim::build_model(m, dim, {hetdim::NonlinearityKind::polynomial, eps}, Vec::Constant(dim - 2, -1.0),
                               true);
}

/// Tangency data used by the cycle experiments: c d x+ > 0, c x+ y- > 0.
inline hetdim::GlobalMapCoeffs cycle_coeffs(double c = 0.5, double d = 2.0, int dim = 3) {
    auto k = hetdim::planar_coeffs(dim, 0.0, 0.4, 0.2, 0.1, 0.5, c, d);
    k.z_plus = Vec::Constant(dim - 2, 0.03);
    return k;
}

/// Uniform point of the box [-r, r]^dim.
inline Vec random_point(std::mt19937_64& rng, int dim, double r) {
    std::uniform_real_distribution<double> u(-r, r);
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = u(rng);
    return v;
}

}  // namespace fixtures
