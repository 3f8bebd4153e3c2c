#pragma once

#include "hetdim/global_map.hpp"
#include "hetdim/saddle_model.hpp"

#include <complex>
#include <optional>
#include <utility>
#include <vector>

namespace hetdim {

inline constexpr double kConeMax = 1e3;
inline constexpr double kLeafStep = 1e-3;

enum class ConeKind { cu, s };

struct ConeWitness {
    ConeKind kind = ConeKind::cu;
    double K_const = 0.0;   ///< opening of the invariant cone
    Mat subspace;           ///< orthonormal basis, 2 or D-2 columns
    std::vector<std::complex<double>> eigenvalues;  ///< of the product restricted to the subspace
    double contraction_ratio = 0.0;  ///< opening of the cone image / K_const
    double bound_B = 0.0;   ///< s-kind: max |eigenvalue| / rate_reference
    int iterations = 0;
};

/// Product J_n ... J_1 of a chain listed in application order.
Mat chain_product(const std::vector<Mat>& chain);

/// Eigenvalues of a product restricted to its dominant 2-plane (no cone check).
std::vector<std::complex<double>> dominant_pair(const Mat& product);

/// Forward-invariant 2-plane of the chain's product and its cone
/// {||dz|| <= K (|dx| + |dy|)}. Throws ConvergenceError when no K <= kConeMax is invariant.
ConeWitness invariant_cu_subspace(const std::vector<Mat>& chain);

/// Backward-invariant (D-2)-plane and its cone {|dx|, |dy| <= K ||dz||}.
/// `rate_reference` is the comparison rate (lambda_hat^{sum k}) for bound_B.
ConeWitness invariant_s_subspace(const std::vector<Mat>& chain, double rate_reference = 1.0);

/// One excursion of a return orbit: `stay` local steps followed by `map`.
/// With `end_y` set, the stay is solved as a boundary-value problem landing on that y,
/// which keeps long excursions near a known orbit from blowing up.
struct ReturnBlock {
    int stay = 0;
    GlobalMap map;
    std::optional<double> end_y;
};

/// E^s at p: the z-plane at the end of the blocks pulled back step by step.
/// Columns are orthonormal.
Mat stable_frame(const SaddleModel& model, const Vec& p, const std::vector<ReturnBlock>& blocks);

/// Strong-stable leaf through `base` followed along the straight z-path to `z_target`
/// (Heun on the E^s slope field with step kLeafStep). Returns the leaf point over z_target.
Vec follow_leaf(const SaddleModel& model, const Vec& base, const std::vector<ReturnBlock>& blocks,
                const Vec& z_target, double step = kLeafStep);

struct LeafSample {
    SplitVector base;
    int k = 0;
    Vec offsets;  ///< z - z* along the first strong direction
    Vec phi1;     ///< (x - x*) / (z - z*)
    Vec phi2;     ///< (y - y*) / (z - z*)
    double c1 = 0.0;  ///< max |phi1| / (lambda0^k |lambda|^-k)
    double c2 = 0.0;  ///< max |phi2| / (|lambda_hat|^k |gamma|^-k)
    std::optional<std::pair<double, double>> fit_exponents;
};

/// Leaf of the strong-stable foliation through base in sigma0_k, sampled over
/// |z1 - z1*| <= half_width. Symmetric models use the twin map for bases with y < 0.
LeafSample strong_stable_leaf(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& base, int k,
                              double half_width = 0.05);

/// Base of sigma0_k used for the sweeps: T0^k lands on (., y^-, .) from (x^+, ., z^+).
SplitVector strip_center(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k);

struct LeafFit {
    std::vector<LeafSample> samples;
    double slope1 = 0.0;  ///< d log max|phi1| / dk
    double slope2 = 0.0;
};

/// Decay exponents of the leaf slopes across a k-sweep (at least 6 values).
LeafFit fit_leaf_exponents(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const std::vector<int>& ks,
                           double half_width = 0.05);

}  // namespace hetdim
