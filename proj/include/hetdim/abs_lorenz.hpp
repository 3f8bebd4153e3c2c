#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace hetdim {

/// Characteristic exponents at a saddle equilibrium of a 3-D flow.
struct FlowExponents {
    double beta = 0.0;                ///< unstable, > 0
    double alpha = 0.0;               ///< weak stable, < 0
    std::vector<double> alpha_strong; ///< real parts, Re alpha_1 >= Re alpha_2 >= ...
};

struct LorenzParams {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
};

struct MoriokaShimizuParams {
    double alpha = 0.5;
    double lambda = 1.0;
};

FlowExponents equilibrium_exponents(const LorenzParams& p);
FlowExponents equilibrium_exponents(const MoriokaShimizuParams& p);

struct C3PrimeCheck {
    bool ok = false;
    double strong_margin = 0.0;  ///< Re alpha_1 - 2 alpha
    double weak_margin = 0.0;    ///< alpha + 2 beta / 3
};

C3PrimeCheck check_c3prime(const FlowExponents& e);

/// Skew-product Poincare model of a Lorenz-like attractor:
///   u' = sign(u) (-nu + A |u|^rho),  v' = contraction * v + sign(u) * offset + drift * u
struct AbsConfig {
    double A = 1.9;
    double rho = 0.7;
    double nu = 0.95;
    double contraction = 0.3;
    double offset = 0.5;
    double drift = 0.1;
    double half_width = 1.0;

    /// Throws ModelError if the quotient map is not expanding or not trapping.
    void validate() const;
};

/// nullopt when u == 0 (the orbit falls into the saddle's stable manifold).
std::optional<double> abs_quotient_step(const AbsConfig& cfg, double u);
double abs_quotient_derivative(const AbsConfig& cfg, double u);

struct AbsPoint {
    int step = 0;
    double u = 0.0;
    double v = 0.0;
    char symbol = 'R';  ///< 'R' for u > 0, 'L' for u < 0, 'O' when absorbed
};

struct AbsOrbit {
    std::vector<AbsPoint> points;
    bool absorbed = false;
};

AbsOrbit simulate_poincare(const AbsConfig& cfg, double u0, double v0, int n);

struct AbsBatchReport {
    int orbits = 0;
    int escapes = 0;
    int absorbed = 0;
    double min_expansion = 0.0;  ///< min |du'/du| over a grid of the domain
    double max_image = 0.0;      ///< max |u'| over the grid
};

/// Random seeds drawn from mt19937_64(seed), uniformly in the domain.
AbsBatchReport abs_trapping_batch(const AbsConfig& cfg, std::uint64_t seed, int orbits, int steps);

}  // namespace hetdim
