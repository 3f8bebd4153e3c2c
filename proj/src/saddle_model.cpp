#include "hetdim/saddle_model.hpp"

#include <cmath>
#include <string>

namespace hetdim {

namespace {

void chain(bool ok, const std::string& inequality) {
    if (!ok) throw ModelError("multiplier chain violated: " + inequality);
}

}  // namespace

void Multipliers::validate() const {
    chain(strong.size() >= 1, "strong block must be non-empty");
    chain(std::isfinite(lambda) && std::isfinite(gamma) && strong.allFinite() && std::isfinite(lambda_hat) &&
              std::isfinite(gamma_hat) && std::isfinite(lambda0),
          "non-finite multiplier");
    for (Eigen::Index i = 0; i + 1 < strong.size(); ++i)
        chain(std::abs(strong(i + 1)) < std::abs(strong(i)),
              "|lambda_" + std::to_string(i + 2) + "|>=|lambda_" + std::to_string(i + 1) + "|");
    const double l = std::abs(lambda);
    const double g = std::abs(gamma);
    chain(std::abs(strong(0)) < l, "|lambda_1|>=|lambda|");
    chain(l < 1.0, "|lambda|>=1");
    chain(g > 1.0, "|gamma|<=1");
    chain(l * g > 1.0, "|lambda*gamma|<=1");
    chain(std::abs(lambda_hat) < l, "|lambda_hat|>=|lambda|");
    chain(std::abs(lambda_hat) > l * l, "|lambda_hat|<=lambda^2");
    chain(std::abs(gamma_hat) > g, "|gamma_hat|<=|gamma|");
    chain(std::abs(strong(0)) < lambda0, "lambda0<=|lambda_1|");
    chain(lambda0 < l * l, "lambda0>=lambda^2");
}

double Multipliers::theta() const { return -std::log(std::abs(lambda)) / std::log(std::abs(gamma)); }

SaddleModel::SaddleModel(Multipliers mult, int dim, Nonlinearity nl, Vec symmetry_signs, bool symmetric)
    : mult_(std::move(mult)), dim_(dim), nl_(nl), signs_(std::move(symmetry_signs)), symmetric_(symmetric) {
    if (dim_ < 3) throw ModelError("dim must be at least 3");
    if (mult_.strong.size() != dim_ - 2) throw ModelError("strong block must have length dim-2");
    mult_.validate();
    if (signs_.size() != dim_ - 2) throw ModelError("symmetry_signs must have length dim-2");
    for (double s : signs_)
        if (s != 1.0 && s != -1.0) throw ModelError("symmetry_signs entries must be +1 or -1");
    if ((signs_.array() == 1.0).all()) throw ModelError("symmetry_signs must not be all +1");
    if (!std::isfinite(nl_.eps)) throw ModelError("nonlinearity eps must be finite");
}

Vec SaddleModel::raw_nonlinear(const Vec& p) const {
    Vec f = Vec::Zero(dim_);
    if (is_linear()) return f;
    Vec q = p;
    if (y_flip_) q(1) = -q(1);
    const double e = nl_.eps;
    const double x = q(0), y = q(1), z1 = q(2);
    f(0) = e * y * z1 * x;
    f(1) = e * y * y * (x + z1);
    f.tail(dim_ - 2) = e * x * y * q.tail(dim_ - 2);
    if (y_flip_) f(1) = -f(1);
    return f;
}

Mat SaddleModel::raw_nonlinear_jacobian(const Vec& p) const {
    Mat j = Mat::Zero(dim_, dim_);
    if (is_linear()) return j;
    Vec q = p;
    if (y_flip_) q(1) = -q(1);
    const double e = nl_.eps;
    const double x = q(0), y = q(1), z1 = q(2);
    j(0, 0) = e * y * z1;
    j(0, 1) = e * x * z1;
    j(0, 2) = e * x * y;
    j(1, 0) = e * y * y;
    j(1, 1) = 2.0 * e * y * (x + z1);
    j(1, 2) = e * y * y;
    const Vec z = q.tail(dim_ - 2);
    j.block(2, 0, dim_ - 2, 1) = e * y * z;
    j.block(2, 1, dim_ - 2, 1) = e * x * z;
    j.block(2, 2, dim_ - 2, dim_ - 2) = e * x * y * Mat::Identity(dim_ - 2, dim_ - 2);
    if (y_flip_) {
        // J Df(Jp) J with J = diag(1, -1, 1, ...)
        j.row(1) *= -1.0;
        j.col(1) *= -1.0;
    }
    return j;
}

Vec SaddleModel::nonlinear(const Vec& p) const {
    if (!symmetric_) return raw_nonlinear(p);
    // R-average keeps the family equivariant and preserves every vanishing identity.
    return 0.5 * (raw_nonlinear(p) + reflect(raw_nonlinear(reflect(p))));
}

Mat SaddleModel::nonlinear_jacobian(const Vec& p) const {
    if (!symmetric_) return raw_nonlinear_jacobian(p);
    const Mat r = reflection_matrix();
    return 0.5 * (raw_nonlinear_jacobian(p) + r * raw_nonlinear_jacobian(reflect(p)) * r);
}

Vec SaddleModel::map(const Vec& p) const {
    Vec out(dim_);
    out(0) = mult_.lambda * p(0);
    out(1) = mult_.gamma * p(1);
    out.tail(dim_ - 2) = mult_.strong.cwiseProduct(p.tail(dim_ - 2));
    if (!is_linear()) out += nonlinear(p);
    return out;
}

LocalStep SaddleModel::step(const Vec& p) const {
    Mat j = Mat::Zero(dim_, dim_);
    j(0, 0) = mult_.lambda;
    j(1, 1) = mult_.gamma;
    j.bottomRightCorner(dim_ - 2, dim_ - 2) = mult_.strong.asDiagonal();
    if (!is_linear()) j += nonlinear_jacobian(p);
    return {map(p), j};
}

Vec SaddleModel::reflect(const Vec& p) const {
    Vec r = p;
    r(1) = -p(1);
    r.tail(dim_ - 2) = signs_.cwiseProduct(p.tail(dim_ - 2));
    return r;
}

Mat SaddleModel::reflection_matrix() const {
    Vec diag(dim_);
    diag << 1.0, -1.0, signs_;
    return diag.asDiagonal();
}

SaddleModel SaddleModel::with_gamma(double gamma) const {
    Multipliers m = mult_;
    m.gamma = gamma;
    if (std::abs(m.gamma_hat) <= std::abs(gamma)) m.gamma_hat = std::copysign(std::abs(gamma) * 1.1, m.gamma_hat);
    SaddleModel out(m, dim_, nl_, signs_, symmetric_);
    out.y_flip_ = y_flip_;
    return out;
}

SaddleModel SaddleModel::flipped_y() const {
    SaddleModel out = *this;
    out.y_flip_ = !y_flip_;
    return out;
}

SaddleModel build_model(const Multipliers& mult, int dim, const Nonlinearity& nl, const Vec& symmetry_signs,
                        bool symmetric) {
    return {mult, dim, nl, symmetry_signs, symmetric};
}

LocalStep apply_T0(const SaddleModel& model, const SplitVector& p) {
    if (p.dim() != model.dim()) throw ContractError("apply_T0: dimension mismatch");
    const Vec v = p.flat();
    if (!v.allFinite()) throw DomainError("apply_T0: non-finite point");
    if (!model.in_box(v)) throw DomainError("apply_T0: point outside the validity box");
    return model.step(v);
}

SplitVector apply_symmetry(const SaddleModel& model, const SplitVector& p) {
    if (!model.symmetric()) throw ContractError("apply_symmetry: model is not symmetric");
    if (p.dim() != model.dim()) throw ContractError("apply_symmetry: dimension mismatch");
    return SplitVector::from_flat(model.reflect(p.flat()));
}

ConditionReport check_conditions(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                 const std::optional<GlobalMapCoeffs>& coeffs2,
                                 const std::optional<FlowExponents>& flow) {
    ConditionReport r;
    const auto& m = model.multipliers();
    const double l = std::abs(m.lambda);
    const double g = std::abs(m.gamma);
    auto add = [&r](std::string name, double value) {
        r.margins.push_back({std::move(name), value, value < 0.0});
        return value < 0.0;
    };

    bool c1 = true;
    for (Eigen::Index i = 0; i + 1 < m.strong.size(); ++i)
        c1 &= add("|lambda_" + std::to_string(i + 2) + "|<|lambda_" + std::to_string(i + 1) + "|",
                  std::abs(m.strong(i + 1)) - std::abs(m.strong(i)));
    c1 &= add("|lambda_1|<|lambda|", std::abs(m.strong(0)) - l);
    c1 &= add("|lambda|<1", l - 1.0);
    c1 &= add("1<|gamma|", 1.0 - g);
    c1 &= add("|lambda*gamma|>1", 1.0 - l * g);
    r.c1_ok = c1;

    auto c2_for = [&](const GlobalMapCoeffs& k, const std::string& tag) {
        bool ok = add("d!=0" + tag, -std::abs(k.d));
        ok &= add("x_plus!=0" + tag, -std::abs(k.x_plus));
        ok &= add("bc!=0" + tag, -std::abs(k.b * k.c));
        return ok;
    };
    r.c2_ok = c2_for(coeffs, "");
    if (coeffs2) r.c2_ok = c2_for(*coeffs2, " (second)") && r.c2_ok;

    bool c3 = add("|lambda_1|<lambda^2", std::abs(m.strong(0)) - l * l);
    c3 &= add("|lambda||gamma|^(2/3)<1", l * std::pow(g, 2.0 / 3.0) - 1.0);
    r.c3_ok = c3;

    if (flow) {
        const auto c = check_c3prime(*flow);
        add("Re(alpha_1)<2*alpha", c.strong_margin);
        add("alpha+2*beta/3<0", c.weak_margin);
        r.c3prime_ok = c.ok;
    }

    r.c4_leaf_gap = (coeffs2 && !model.symmetric()) ? std::abs(coeffs.x_plus - coeffs2->x_plus) : 0.0;
    r.theta = m.theta();
    return r;
}

}  // namespace hetdim
