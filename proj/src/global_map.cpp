#include "hetdim/global_map.hpp"

#include <cmath>
#include <string>

namespace hetdim {

GlobalMap::GlobalMap(GlobalMapCoeffs coeffs, Vec conj) : coeffs_(std::move(coeffs)), conj_(std::move(conj)) {
    coeffs_.validate(coeffs_.dim());
    if (conj_.size() != coeffs_.dim()) throw ContractError("GlobalMap: conjugation has wrong length");
}

GlobalMap GlobalMap::plain(const GlobalMapCoeffs& coeffs) { return {coeffs, Vec::Ones(coeffs.dim())}; }

GlobalMap GlobalMap::symmetric_twin(const SaddleModel& model, const GlobalMapCoeffs& coeffs) {
    if (!model.symmetric()) throw ContractError("symmetric twin requested for a non-symmetric model");
    return {coeffs, model.reflection_matrix().diagonal()};
}

GlobalMap GlobalMap::y_mirrored(const GlobalMapCoeffs& coeffs) {
    Vec c = Vec::Ones(coeffs.dim());
    c(1) = -1.0;
    return {coeffs, c};
}

Vec GlobalMap::source() const {
    Vec p = Vec::Zero(dim());
    p(1) = coeffs_.y_minus;
    return conj_.cwiseProduct(p);
}

Vec GlobalMap::target() const {
    Vec p(dim());
    p << coeffs_.x_plus, 0.0, coeffs_.z_plus;
    return conj_.cwiseProduct(p);
}

bool GlobalMap::in_domain(const Vec& p, double delta) const {
    const Vec q = conj_.cwiseProduct(p);
    return std::abs(q(0)) < delta && std::abs(q(1) - coeffs_.y_minus) < 0.5 * delta &&
           max_norm(q.tail(q.size() - 2)) < delta;
}

LocalStep t1_formula(const GlobalMapCoeffs& k, const Vec& p) {
    return t1_formula(k, p(0), p(1) - k.y_minus, p.tail(p.size() - 2));
}

LocalStep t1_formula(const GlobalMapCoeffs& k, double x, double t, const Vec& z, double t_fine) {
    const auto zd = z.size();
    const auto n = zd + 2;
    // Powers of t = t + t_fine expanded so that t_fine keeps its own precision.
    const double t2 = t * t + (2.0 * t + t_fine) * t_fine;
    const double t3 = t2 * t + t2 * t_fine;
    LocalStep s;
    s.image.resize(n);
    s.image(0) = k.x_plus + k.a * x + k.b * t + k.b * t_fine + k.alpha.row(0).dot(z);
    s.image(1) = k.mu + k.c * x + k.d * t2 + k.alpha.row(1).dot(z) + k.h.e3 * t3;
    s.image.tail(zd) = k.z_plus + k.a_t * x + k.b_t * (t + t_fine) + k.alpha3() * z;
    s.jacobian.resize(n, n);
    s.jacobian(0, 0) = k.a;
    s.jacobian(0, 1) = k.b;
    s.jacobian.block(0, 2, 1, zd) = k.alpha.row(0);
    s.jacobian(1, 0) = k.c;
    s.jacobian(1, 1) = 2.0 * k.d * (t + t_fine) + 3.0 * k.h.e3 * t2;
    s.jacobian.block(1, 2, 1, zd) = k.alpha.row(1);
    s.jacobian.block(2, 0, zd, 1) = k.a_t;
    s.jacobian.block(2, 1, zd, 1) = k.b_t;
    s.jacobian.block(2, 2, zd, zd) = k.alpha3();
    return s;
}

LocalStep GlobalMap::eval(const Vec& p) const {
    auto s = t1_formula(coeffs_, conj_.cwiseProduct(p));
    s.image = conj_.cwiseProduct(s.image);
    s.jacobian = conj_.asDiagonal() * s.jacobian * conj_.asDiagonal();
    return s;
}

LocalStep GlobalMap::eval_offset(const Vec& delta, double t_fine) const {
    const auto zd = delta.size() - 2;
    auto s = t1_formula(coeffs_, conj_(0) * delta(0), conj_(1) * delta(1), conj_.tail(zd).cwiseProduct(delta.tail(zd)),
                        conj_(1) * t_fine);
    s.image = conj_.cwiseProduct(s.image);
    s.jacobian = conj_.asDiagonal() * s.jacobian * conj_.asDiagonal();
    return s;
}

LocalStep GlobalMap::apply(const Vec& p, double delta) const {
    if (p.size() != dim()) throw ContractError("global map: dimension mismatch");
    if (!in_domain(p, delta)) throw DomainError("global map: point outside the tangency neighbourhood");
    return eval(p);
}

GlobalMap GlobalMap::with_mu(double mu) const {
    GlobalMap g = *this;
    g.coeffs_.mu = mu;
    return g;
}

LocalStep apply_T1(const GlobalMapCoeffs& coeffs, const SplitVector& p, double delta) {
    return GlobalMap::plain(coeffs).apply(p.flat(), delta);
}

LocalStep apply_T1_symmetric(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p,
                             double delta) {
    return GlobalMap::symmetric_twin(model, coeffs).apply(p.flat(), delta);
}

FirstReturn first_return(const SaddleModel& model, const GlobalMap& g, const Vec& p, int k, double delta) {
    FirstReturn r;
    try {
        r.local = iterate_local(model, p, k);
    } catch (const EscapeError& e) {
        throw ItineraryError(std::string("first return: ") + e.what(), e.step);
    }
    const Vec& q = r.local.end;
    if (!g.in_domain(q, delta)) {
        const Vec c = g.conjugation().cwiseProduct(q);
        std::string which = std::abs(c(0)) >= delta                                ? "|x|<delta"
                            : std::abs(c(1) - g.coeffs().y_minus) >= 0.5 * delta ? "|y-y^-|<delta/2"
                                                                                   : "|z|<delta";
        throw ItineraryError("first return: T0^" + std::to_string(k) + "(p) violates " + which, k);
    }
    auto s = g.eval(q);
    r.image = std::move(s.image);
    r.global_jacobian = std::move(s.jacobian);
    r.jacobian = r.global_jacobian * r.local.jacobian;
    return r;
}

FirstReturn first_return(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p, int k,
                         double delta) {
    return first_return(model, GlobalMap::plain(coeffs), p.flat(), k, delta);
}

int min_stay(const SaddleModel& model, const GlobalMapCoeffs& coeffs, double delta) {
    const double g = std::abs(model.gamma());
    int k = 0;
    while (std::pow(g, -k) * (std::abs(coeffs.y_minus) + delta) >= delta) ++k;
    return k;
}

bool in_pi0(const GlobalMapCoeffs& coeffs, const Vec& p, double delta) {
    return std::abs(p(0) - coeffs.x_plus) < delta && std::abs(p(1)) < delta && max_norm(p.tail(p.size() - 2)) < delta;
}

std::optional<Strip> locate_strip(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& p,
                                  double delta, int k_max) {
    const Vec v = p.flat();
    if (v(1) == 0.0) return std::nullopt;
    const auto g = GlobalMap::plain(coeffs);
    Vec cur = v;
    for (int k = 1; k <= k_max; ++k) {
        cur = model.map(cur);
        if (!cur.allFinite() || !model.in_box(cur)) return std::nullopt;
        if (k < min_stay(model, coeffs, delta) || !g.in_domain(cur, delta)) continue;
        Strip s;
        s.k = k;
        s.x_range = {coeffs.x_plus - delta, coeffs.x_plus + delta};
        const Vec z0 = v.tail(v.size() - 2);
        const double lo = solve_cross_form(model, v(0), coeffs.y_minus - 0.5 * delta, z0, k).y_0;
        const double hi = solve_cross_form(model, v(0), coeffs.y_minus + 0.5 * delta, z0, k).y_0;
        s.y_range = {std::min(lo, hi), std::max(lo, hi)};
        s.z_box = delta;
        return s;
    }
    return std::nullopt;
}

}  // namespace hetdim
