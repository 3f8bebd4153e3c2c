#include "hetdim/local_map.hpp"

#include <cmath>
#include <string>

namespace hetdim {

LocalOrbit iterate_local(const SaddleModel& model, const Vec& p, int k) {
    if (k < 0) throw ContractError("iterate_local: negative iteration count");
    if (p.size() != model.dim()) throw ContractError("iterate_local: dimension mismatch");
    if (!model.in_box(p)) throw EscapeError("iterate_local: start point outside the validity box", 0);
    LocalOrbit out;
    out.trajectory.reserve(static_cast<std::size_t>(k) + 1);
    out.steps.reserve(static_cast<std::size_t>(k));
    out.trajectory.push_back(p);
    out.jacobian = Mat::Identity(model.dim(), model.dim());
    Vec cur = p;
    for (int j = 1; j <= k; ++j) {
        auto s = model.step(cur);
        if (!s.image.allFinite() || !model.in_box(s.image))
            throw EscapeError("iterate_local: orbit left the validity box at step " + std::to_string(j), j);
        out.jacobian = s.jacobian * out.jacobian;
        out.steps.push_back(std::move(s.jacobian));
        cur = std::move(s.image);
        out.trajectory.push_back(cur);
    }
    out.end = cur;
    return out;
}

LocalOrbit iterate_local(const SaddleModel& model, const SplitVector& p, int k) {
    return iterate_local(model, p.flat(), k);
}

Mat cross_jacobian(const Mat& j) {
    const auto n = j.rows();
    const double jyy = j(1, 1);
    if (jyy == 0.0) throw DomainError("cross_jacobian: degenerate y-block");
    Mat c(n, n);
    for (Eigen::Index col = 0; col < n; ++col) c(1, col) = col == 1 ? 1.0 / jyy : -j(1, col) / jyy;
    for (Eigen::Index row = 0; row < n; ++row) {
        if (row == 1) continue;
        for (Eigen::Index col = 0; col < n; ++col)
            c(row, col) = col == 1 ? j(row, 1) / jyy : j(row, col) + j(row, 1) * c(1, col);
    }
    return c;
}

namespace {

CrossFormResult finish(const LocalOrbit& orb, double y0, double yk, int iterations) {
    CrossFormResult r;
    r.x_k = orb.end(0);
    r.y_0 = y0;
    r.z_k = orb.end.tail(orb.end.size() - 2);
    r.residual = std::abs(orb.end(1) - yk);
    r.iterations = iterations;
    r.jacobian = cross_jacobian(orb.jacobian);
    return r;
}

}  // namespace

CrossFormResult solve_cross_form(const SaddleModel& model, double x0, double yk, const Vec& z0, int k) {
    if (z0.size() != model.dim() - 2) throw ContractError("solve_cross_form: z0 has wrong length");
    Vec p(model.dim());
    p << x0, 0.0, z0;
    const double y_lin = yk * std::pow(model.gamma(), -k);

    if (model.is_linear()) {
        p(1) = y_lin;
        return finish(iterate_local(model, p, k), y_lin, yk, 0);
    }

    // Newton shooting on y0; the y-equation is scalar and contracts like gamma^-k.
    constexpr int max_iter = 200;
    constexpr double tol = 1e-12;
    double y0 = y_lin;
    double best = INFINITY;
    double prev = INFINITY;
    for (int it = 1; it <= max_iter; ++it) {
        p(1) = y0;
        LocalOrbit orb;
        try {
            orb = iterate_local(model, p, k);
        } catch (const EscapeError&) {
            throw ConvergenceError("solve_cross_form: shooting orbit escaped the box", best);
        }
        const double res = orb.end(1) - yk;
        best = std::abs(res);
        const double floor = 4e-16 * std::max(1.0, std::abs(yk));
        if (best <= tol && (best <= floor || best >= 0.5 * prev)) return finish(orb, y0, yk, it);
        prev = best;

        double step = res / orb.jacobian(1, 1);
        double trial = y0 - step;
        bool accepted = false;
        for (int h = 0; h < 30 && !accepted; ++h) {
            p(1) = trial;
            try {
                accepted = std::abs(iterate_local(model, p, k).end(1) - yk) < best;
            } catch (const EscapeError&) {
                accepted = false;
            }
            if (!accepted) {
                step *= 0.5;
                trial = y0 - step;
            }
        }
        if (!accepted) {
            if (best <= tol) return finish(orb, y0, yk, it);
            throw ConvergenceError("solve_cross_form: shooting stalled", best);
        }
        y0 = trial;
    }
    throw ConvergenceError("solve_cross_form: no convergence in 200 iterations", best);
}

DerivativeRatios strong_derivative_bounds(const SaddleModel& model, const SplitVector& p, int k) {
    const auto orb = iterate_local(model, p, k);
    const Mat c = cross_jacobian(orb.jacobian);
    const auto zd = model.dim() - 2;
    const double scale = std::pow(model.multipliers().lambda0, k);
    DerivativeRatios r;
    r.ratio_x = c.block(0, 2, 1, zd).norm() / scale;
    r.ratio_z = c.block(2, 2, zd, zd).operatorNorm() / scale;
    return r;
}

}  // namespace hetdim
