#pragma once

#include "hetdim/coeffs.hpp"
#include "hetdim/local_map.hpp"
#include "hetdim/saddle_model.hpp"

#include <optional>
#include <utility>

namespace hetdim {

inline constexpr double kDefaultDelta = 0.1;
inline constexpr int kDefaultMaxStay = 80;

/// A global map C o T1 o C for a diagonal involution C (identity for T1 itself,
/// R for the symmetric twin, the y-mirror for the second tangency of the general case).
class GlobalMap {
public:
    GlobalMap(GlobalMapCoeffs coeffs, Vec conj);

    static GlobalMap plain(const GlobalMapCoeffs& coeffs);
    /// T1~ = R o T1 o R built from the same coefficients.
    static GlobalMap symmetric_twin(const SaddleModel& model, const GlobalMapCoeffs& coeffs);
    /// R0 o T1[coeffs] o R0 with R0 = (x, -y, z).
    static GlobalMap y_mirrored(const GlobalMapCoeffs& coeffs);

    [[nodiscard]] const GlobalMapCoeffs& coeffs() const { return coeffs_; }
    [[nodiscard]] const Vec& conjugation() const { return conj_; }
    [[nodiscard]] int dim() const { return coeffs_.dim(); }

    /// Image of the tangency source M^- and its target M^+ (at mu = 0).
    [[nodiscard]] Vec source() const;
    [[nodiscard]] Vec target() const;

    [[nodiscard]] bool in_domain(const Vec& p, double delta = kDefaultDelta) const;
    /// Unchecked evaluation with exact Jacobian.
    [[nodiscard]] LocalStep eval(const Vec& p) const;
    /// Evaluation at source() + delta (+ t_fine along y) without forming the sums,
    /// so offsets far below the resolution of y^- keep full precision.
    [[nodiscard]] LocalStep eval_offset(const Vec& delta, double t_fine = 0.0) const;
    /// Checked evaluation; throws DomainError outside the domain.
    [[nodiscard]] LocalStep apply(const Vec& p, double delta = kDefaultDelta) const;

    [[nodiscard]] GlobalMap with_mu(double mu) const;

private:
    GlobalMapCoeffs coeffs_;
    Vec conj_;
};

/// Raw T1 formula and Jacobian (no domain check, no conjugation).
LocalStep t1_formula(const GlobalMapCoeffs& k, const Vec& p);
/// Same with the unstable offset y1 - y^- = t + t_fine given directly.
LocalStep t1_formula(const GlobalMapCoeffs& k, double x, double t, const Vec& z, double t_fine = 0.0);

/// Checked T1 near M^- = (0, y^-, 0).
LocalStep apply_T1(const GlobalMapCoeffs& coeffs, const SplitVector& p, double delta = kDefaultDelta);
/// Checked T1~ = R o T1 o R near (0, -y^-, 0).
LocalStep apply_T1_symmetric(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p,
                             double delta = kDefaultDelta);

struct FirstReturn {
    Vec image;
    Mat jacobian;  ///< DT1 * DT0^k
    LocalOrbit local;
    Mat global_jacobian;
};

/// T = T1 o T0^k with the itinerary enforced.
FirstReturn first_return(const SaddleModel& model, const GlobalMap& g, const Vec& p, int k,
                         double delta = kDefaultDelta);
FirstReturn first_return(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p, int k,
                         double delta = kDefaultDelta);

struct Strip {
    int k = 0;
    std::pair<double, double> x_range;
    std::pair<double, double> y_range;
    double z_box = 0.0;
};

/// Smallest k with |gamma|^-k (|y^-| + delta) < delta.
int min_stay(const SaddleModel& model, const GlobalMapCoeffs& coeffs, double delta = kDefaultDelta);

bool in_pi0(const GlobalMapCoeffs& coeffs, const Vec& p, double delta = kDefaultDelta);

/// Stay number of p in Pi0, or nullopt if no k <= k_max returns to Pi1.
std::optional<Strip> locate_strip(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p,
                                  double delta = kDefaultDelta, int k_max = kDefaultMaxStay);

}  // namespace hetdim
