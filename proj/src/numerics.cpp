#include "hetdim/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace hetdim {

Mat fd_jacobian(const VectorFn& f, const Vec& x, const Vec& steps) {
    Mat j;
    Vec xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = steps(i);
        xp(i) = x(i) + h;
        const Vec fp = f(xp);
        xp(i) = x(i) - h;
        const Vec fm = f(xp);
        xp(i) = x(i);
        if (j.size() == 0) j.resize(fp.size(), x.size());
        j.col(i) = (fp - fm) / (2.0 * h);
    }
    return j;
}

namespace {

double scaled_norm(const Vec& r, const Vec& eq_scale) { return max_norm(r.cwiseQuotient(eq_scale)); }

}  // namespace

NewtonResult newton_solve(const VectorFn& raw, const Vec& x0, const NewtonOptions& opts) {
    const auto n = x0.size();
    Eigen::Index m = -1;
    // Trial points may leave the model's domain; treat that as an infinite residual.
    const VectorFn f = [&](const Vec& x) -> Vec {
        try {
            Vec r = raw(x);
            m = r.size();
            return r;
        } catch (const DomainError&) {
            return Vec::Constant(m < 0 ? 1 : m, INFINITY);
        }
    };
    const Vec vs = opts.var_scale.size() == n ? opts.var_scale : Vec::Ones(n);
    NewtonResult r;
    r.x = x0;
    r.residual = raw(r.x);
    m = r.residual.size();
    const Vec es = opts.eq_scale.size() == r.residual.size() ? opts.eq_scale : Vec::Ones(r.residual.size());
    r.scaled_residual = r.residual.allFinite() ? scaled_norm(r.residual, es) : INFINITY;

    for (r.iterations = 0; r.iterations < opts.max_iter; ++r.iterations) {
        if (r.scaled_residual <= opts.tol) break;
        const Mat j = opts.jacobian ? opts.jacobian(r.x) : fd_jacobian(f, r.x, opts.fd_rel_step * vs);
        if (!j.allFinite()) break;
        const Mat js = es.cwiseInverse().asDiagonal() * j * vs.asDiagonal();
        const Vec dxs = js.colPivHouseholderQr().solve(-r.residual.cwiseQuotient(es));
        if (!dxs.allFinite()) break;
        Vec dx = vs.cwiseProduct(dxs);

        bool accepted = false;
        for (int h = 0; h < 40; ++h) {
            const Vec xt = r.x + dx;
            const Vec ft = f(xt);
            const double nt = ft.allFinite() ? scaled_norm(ft, es) : INFINITY;
            if (nt < r.scaled_residual) {
                r.x = xt;
                r.residual = ft;
                r.scaled_residual = nt;
                accepted = true;
                break;
            }
            dx *= 0.5;
        }
        if (!accepted) break;
    }
    r.abs_residual = max_norm(r.residual);
    r.converged = r.scaled_residual <= opts.tol;
    return r;
}

NewtonResult newton_solve_or_throw(const VectorFn& f, const Vec& x0, const NewtonOptions& opts,
                                   const std::string& what) {
    auto r = newton_solve(f, x0, opts);
    if (!r.converged)
        throw ConvergenceError(what + ": Newton did not converge (scaled residual " +
                                   std::to_string(r.scaled_residual) + ")",
                               r.scaled_residual);
    return r;
}

Balanced balance(const Mat& a) {
    const auto n = a.rows();
    Balanced b{a, Vec::Ones(n)};
    // Parlett-Reinsch sweeps with radix 2, so scaling is exact.
    bool changed = true;
    for (int sweep = 0; changed && sweep < 100; ++sweep) {
        changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = 0.0;
            double r = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(b.matrix(j, i));
                r += std::abs(b.matrix(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            const double total = c + r;
            double f = 1.0;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c >= r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r < 0.95 * total) {
                changed = true;
                b.scale(i) *= f;
                b.matrix.row(i) /= f;
                b.matrix.col(i) *= f;
            }
        }
    }
    return b;
}

std::vector<std::complex<double>> spectrum(const Mat& a) {
    const Eigen::EigenSolver<Mat> es(balance(a).matrix, false);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", INFINITY);
    std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
    std::stable_sort(ev.begin(), ev.end(), [](auto l, auto r) { return std::abs(l) > std::abs(r); });
    return ev;
}

double fit_log_slope(const Vec& ks, const Vec& values) {
    const auto n = ks.size();
    Mat a(n, 2);
    a.col(0) = ks;
    a.col(1).setOnes();
    const Vec y = values.cwiseAbs().array().log().matrix();
    const Vec coef = a.colPivHouseholderQr().solve(y);
    return coef(0);
}

}  // namespace hetdim
