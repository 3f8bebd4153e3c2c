#pragma once

#include "hetdim/abs_lorenz.hpp"
#include "hetdim/coeffs.hpp"
#include "hetdim/types.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hetdim {

struct Multipliers {
    double lambda = 0.55;
    double gamma = 2.2;
    Vec strong = Vec::Constant(1, 0.25);
    double lambda_hat = 0.4;
    double gamma_hat = 2.4;
    double lambda0 = 0.29;

    /// Throws ModelError naming the first violated inequality of the chain.
    void validate() const;
    [[nodiscard]] double theta() const;
};

enum class NonlinearityKind { linear, polynomial };

struct Nonlinearity {
    NonlinearityKind kind = NonlinearityKind::linear;
    double eps = 0.0;
};

struct LocalStep {
    Vec image;
    Mat jacobian;
};

/// Local map T0(x, y, z) = (lambda x + f1, gamma y + f2, A z + f3) near the saddle.
/// Immutable; every evaluation is a pure function of the stored data.
class SaddleModel {
public:
    SaddleModel(Multipliers mult, int dim, Nonlinearity nl, Vec symmetry_signs, bool symmetric);

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] const Multipliers& multipliers() const { return mult_; }
    [[nodiscard]] double lambda() const { return mult_.lambda; }
    [[nodiscard]] double gamma() const { return mult_.gamma; }
    [[nodiscard]] const Vec& strong() const { return mult_.strong; }
    [[nodiscard]] const Nonlinearity& nonlinearity() const { return nl_; }
    [[nodiscard]] bool is_linear() const { return nl_.kind == NonlinearityKind::linear || nl_.eps == 0.0; }
    [[nodiscard]] bool symmetric() const { return symmetric_; }
    [[nodiscard]] const Vec& symmetry_signs() const { return signs_; }
    [[nodiscard]] double box() const { return box_; }
    [[nodiscard]] bool y_flipped() const { return y_flip_; }

    /// Nonlinear part (f1, f2, f3) and its Jacobian, in the model's frame.
    [[nodiscard]] Vec nonlinear(const Vec& p) const;
    [[nodiscard]] Mat nonlinear_jacobian(const Vec& p) const;

    /// Unchecked evaluation; callers that need the box contract use apply_T0.
    [[nodiscard]] Vec map(const Vec& p) const;
    [[nodiscard]] LocalStep step(const Vec& p) const;

    /// R(x, y, z) = (x, -y, S z), regardless of whether the model is symmetric.
    [[nodiscard]] Vec reflect(const Vec& p) const;
    [[nodiscard]] Mat reflection_matrix() const;

    [[nodiscard]] bool in_box(const Vec& p) const { return max_norm(p) <= box_; }

    /// Same model with gamma replaced (theta realisation); revalidates the chain.
    [[nodiscard]] SaddleModel with_gamma(double gamma) const;
    /// Same dynamics written in the coordinates (x, -y, z).
    [[nodiscard]] SaddleModel flipped_y() const;

private:
    [[nodiscard]] Vec raw_nonlinear(const Vec& p) const;
    [[nodiscard]] Mat raw_nonlinear_jacobian(const Vec& p) const;

    Multipliers mult_;
    int dim_;
    Nonlinearity nl_;
    Vec signs_;
    bool symmetric_ = false;
    bool y_flip_ = false;
    double box_ = 1.0;
};

SaddleModel build_model(const Multipliers& mult, int dim, const Nonlinearity& nl,
                        const Vec& symmetry_signs, bool symmetric = true);

/// Image and exact Jacobian; throws DomainError outside the validity box.
LocalStep apply_T0(const SaddleModel& model, const SplitVector& p);

/// R(p); throws ContractError on a non-symmetric model.
SplitVector apply_symmetry(const SaddleModel& model, const SplitVector& p);

struct Margin {
    std::string name;
    double value = 0.0;  ///< negative means the strict inequality holds
    bool ok = false;
};

struct ConditionReport {
    bool c1_ok = false;
    bool c2_ok = false;
    bool c3_ok = false;
    std::optional<bool> c3prime_ok;
    double c4_leaf_gap = 0.0;
    double theta = 0.0;
    std::vector<Margin> margins;
};

/// Reports every standing inequality with its margin. Never throws.
ConditionReport check_conditions(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                 const std::optional<GlobalMapCoeffs>& coeffs2 = std::nullopt,
                                 const std::optional<FlowExponents>& flow = std::nullopt);

}  // namespace hetdim
