#pragma once

#include "hetdim/global_map.hpp"
#include "hetdim/saddle_model.hpp"

#include <array>
#include <string>
#include <vector>

namespace hetdim {

struct ChainEval {
    Vec image;
    Mat jacobian;
    Vec dmu;  ///< derivative of the image with respect to mu
};

/// Composite global map g o T0^{s_n} o g o ... o T0^{s_1} o g built from one
/// tangency map g. An empty stay list is g itself.
struct ReturnChain {
    GlobalMap base;
    std::vector<int> stays;

    /// Evaluates at base.source() + offset (see GlobalMap::eval_offset).
    [[nodiscard]] ChainEval eval(const SaddleModel& model, const Vec& offset, double mu) const;
    /// this o T0^j o this
    [[nodiscard]] ReturnChain squared(int j) const;
};

/// Local Taylor data of a (possibly composite) tangency map at base.source() + (0, t_source, 0).
struct ChainCoefficients {
    double t_source = 0.0;
    double mu_eff = 0.0;  ///< y-component of the image of the source
    double x_plus = 0.0;
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

ChainCoefficients chain_coefficients(const SaddleModel& model, const ReturnChain& chain, double t_source, double mu,
                                     double t_scale);

enum class CaseTag { cdx_neg_d_neg, cdx_neg_d_pos, cdx_pos_d_neg, cdx_pos_d_pos };
std::string to_string(CaseTag tag);

struct TransversePoint {
    int K = 0;        ///< 0 for the primary pair, otherwise the intermediate stay
    double t = 0.0;   ///< offset of the preimage from M^- along W^u_loc
    Vec preimage;     ///< on W^u_loc
    Vec section;      ///< image on W^s_loc
    double slope = 0.0;
};

struct TangencyBranch {
    int k = 0;
    int branch = 1;
    int stage = 1;
    std::vector<int> chain_stays;  ///< stays of the tangency map this branch was forged from
    double mu_k = 0.0;
    double X = 0.0;
    double Y = 0.0;
    double t = 0.0;  ///< offset of the preimage from M^- along W^u_loc
    std::vector<double> landings;  ///< y-offsets from M^- at each pass near W^u_loc
    Vec tangency_point;  ///< M in the image of W^u_loc
    Vec preimage;        ///< M-hat on W^u_loc
    std::vector<TransversePoint> transverse_points;  ///< straddling pair when found
    bool straddle_ok = false;
    int c_sign = 0;
    double c_value = 0.0;
    CaseTag case_tag = CaseTag::cdx_neg_d_neg;
    double residual = 0.0;        ///< scaled residual of the exact double-root system
    double value = 0.0;           ///< y-component at the tangency
    double derivative = 0.0;      ///< its derivative along W^u_loc
    double second_derivative = 0.0;
    double model_residual = 0.0;  ///< truncated two-equation system at (X, Y, mu)
    std::string pairing;
};

CaseTag classify_case(const GlobalMapCoeffs& coeffs);

/// Both secondary tangencies at stay number k (branch 1 seeded from (U,V) = (1,1)).
std::array<TangencyBranch, 2> solve_secondary_tangency(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k);

/// Transverse homoclinic points of W^u_loc: the primary pair (K = 0, when mu d < 0)
/// and the quartets for every K in `stays`.
std::vector<TransversePoint> find_transverse_homoclinics(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                                         double mu, const std::vector<int>& stays);

/// dG_y/dx of G = T1 o T0^k o T1 at the tangency preimage, by central differences.
double secondary_c_coefficient(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                               const TangencyBranch& branch);

/// Predicted sign of c^i_k from the leading-order asymptotics.
int predicted_c_sign(const GlobalMapCoeffs& coeffs, int branch);

struct ForgeResult {
    TangencyBranch tangency;
    double secondary_cxy = 0.0;  ///< c x^+ y^- of the induced global map
    std::vector<std::string> diagnosis;
};

ForgeResult forge_admissible_tangency(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                      const std::vector<int>& k_schedule);

}  // namespace hetdim
