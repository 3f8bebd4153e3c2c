#pragma once

#include "hetdim/cone_analysis.hpp"
#include "hetdim/global_map.hpp"
#include "hetdim/saddle_model.hpp"

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace hetdim {

inline constexpr double kIndexAmbiguity = 1e-8;
inline constexpr double kTransverseSeedRadius = 1e-6;
inline constexpr int kTransverseCap = 50;

/// Period-2 orbit Q01 -> T0^k -> Q11 -> T1 -> Q02 -> T0^m -> Q12 -> T1 -> Q01.
struct PeriodTwoOrbit {
    SplitVector q01, q11, q02, q12;
    int k = 0;
    int m = 0;
    double eta1 = 0.0;  ///< y11 - y^-
    double eta2 = 0.0;  ///< y12 - y^-
    Mat jacobian_2;     ///< DT^2 at Q01
    std::vector<Mat> chain;  ///< per-step Jacobians over one period, in application order
    double s_value = 0.0;    ///< tr / (det + 1) of DT^2 on its dominant 2-plane
    double closure_residual = 0.0;  ///< ||T^2(Q01) - Q01|| by forward iteration
    double leg_residual = 0.0;      ///< worst of the four single-leg mismatches
};

/// Newton on the closure system at fixed mu. Without a seed, the orbit is seeded from
/// the leading-order balance; `branch` picks the sign of the dominant eta.
PeriodTwoOrbit solve_period2(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m, double mu,
                             int branch = 1, const std::optional<Vec>& seed = std::nullopt);

/// Period-2 orbit with mu free and the index relation s = s_target imposed.
struct TargetedOrbit {
    PeriodTwoOrbit orbit;
    double mu = 0.0;
};
TargetedOrbit solve_period2_with_s(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m,
                                   double s_target, int branch = 1);

/// Number of eigenvalues of DT^2 outside the unit circle; throws AmbiguousIndexError
/// when a modulus lies within kIndexAmbiguity of 1.
int orbit_index(const PeriodTwoOrbit& orbit);
int matrix_index(const Mat& jacobian);

struct Index2Check {
    double s = 0.0;               ///< from the trace and determinant formulas
    double trace_measured = 0.0;  ///< on the dominant 2-plane
    double det_measured = 0.0;
    double trace_predicted = 0.0;
    double det_predicted = 0.0;
    double s_measured = 0.0;
    int index = 0;
    bool match = false;  ///< (|s| < 1) == (index == 2)
};
Index2Check index2_criterion(const SaddleModel& model, const PeriodTwoOrbit& orbit, const GlobalMapCoeffs& coeffs);

enum class CycleMode { symmetric, general };
std::string to_string(CycleMode mode);

struct QuasiConnection {
    double t_param = 0.0;  ///< y-offset of the preimage on the partner's W^u_loc piece
    double gap = 0.0;      ///< y(curve) - y(leaf) at matched (x, z)
    Vec curve_point;
    Vec leaf_point;
};

struct TransverseWitness {
    int iterations_used = 0;
    int iteration_bound = 0;
    Vec crossing_point;  ///< on W^u(Q); its next return lies on W^s_loc(O)
    double slope = 0.0;
    double area_factor = 0.0;            ///< measured over the first return
    double predicted_area_factor = 0.0;  ///< |bc| |lambda gamma|^k
    int curve_points = 0;
};

struct ThetaDecomposition {
    double m_over_k = 0.0;
    double c_star = 0.0;            ///< ln(lambda^k gamma^m)
    double theta_predicted = 0.0;   ///< m/k - C*/(k ln|gamma|)
    double c_star_reference = 0.0;  ///< ln(+-2 y^- / (c x^+))
};

struct CycleCertificate {
    CycleMode mode = CycleMode::symmetric;
    int k = 0;
    int m = 0;
    int branch = 1;
    double s_target = 0.0;
    double mu = 0.0;   ///< mu, or mu1 in the general mode
    double mu2 = 0.0;  ///< general mode only
    bool mu_shift = false;  ///< general mode: mu2 shifted by 2 c1 lambda^k x^+
    double gamma = 0.0;
    double lambda = 0.0;
    double theta = 0.0;
    PeriodTwoOrbit orbit;
    std::vector<std::complex<double>> index_evidence;
    int index = 0;
    Index2Check index2;
    QuasiConnection quasi;
    std::optional<TransverseWitness> transverse;
    ThetaDecomposition theta_decomposition;
    double product = 0.0;            ///< lambda^k gamma^m
    double product_reference = 0.0;  ///< +-2 y^- / (c x^+)
    double joint_residual = 0.0;     ///< scaled residual of the joint system
    int newton_iterations = 0;
    Vec seed;  ///< joint-system seed (orbit unknowns, mu, gamma[, mu2])
};

/// Joint solve of closure, index relation and quasi-connection for (orbit, mu, gamma).
CycleCertificate solve_hetdim_symmetric(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m,
                                        double s_target = 0.0, int branch = 1);

/// Same with independent tangencies; coeffs2 is written in the frame (x, -y, z).
CycleCertificate solve_hetdim_general(const SaddleModel& model, const GlobalMapCoeffs& coeffs1,
                                      const GlobalMapCoeffs& coeffs2, int k, int m, double s_target = 0.0,
                                      int branch = 1);

/// Model and maps a certificate was solved at.
struct CycleSetting {
    SaddleModel model;
    GlobalMap map;      ///< the tangency the orbit uses, at mu
    GlobalMap partner;  ///< the other tangency, at mu (or mu2)
};
CycleSetting cycle_setting(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                           const std::optional<GlobalMapCoeffs>& coeffs2, const CycleCertificate& cert);

/// Intersection of the strong-stable leaf through Q02 with partner(W^u_loc).
QuasiConnection quasi_connection(const CycleSetting& setting, const PeriodTwoOrbit& orbit);

/// Orbit data (chain, DT^2, s, residuals) recomputed from the stored points and offsets.
PeriodTwoOrbit rebuild_orbit(const CycleSetting& setting, const PeriodTwoOrbit& stored);

inline constexpr double kLegTolerance = 1e-11;
inline constexpr double kClosureTolerance = 1e-10;
inline constexpr double kGapTolerance = 1e-8;
inline constexpr double kThetaTolerance = 1e-10;
inline constexpr double kMinCrossingSlope = 1e-6;
inline constexpr double kAreaTolerance = 0.15;

struct CertificateCheck {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Every residual check of a certificate, re-evaluated in `setting`. Never throws;
/// a failing evaluation shows up as a failed check with value NaN.
std::vector<CertificateCheck> certificate_checks(const CycleSetting& setting, const CycleCertificate& cert,
                                                 const std::optional<GlobalMapCoeffs>& coeffs2 = std::nullopt);

/// Grows a disk of E^u(Q01) under the first-return map until it crosses W^s(O).
TransverseWitness verify_transverse_connection(const CycleSetting& setting, const CycleCertificate& cert,
                                               double seed_radius = kTransverseSeedRadius);

}  // namespace hetdim
