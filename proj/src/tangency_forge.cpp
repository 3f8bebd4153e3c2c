#include "hetdim/tangency_forge.hpp"

#include "hetdim/numerics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace hetdim {

ChainEval ReturnChain::eval(const SaddleModel& model, const Vec& offset, double mu) const {
    const GlobalMap g = base.with_mu(mu);
    const double mu_dir = g.conjugation()(1);
    auto s = g.eval_offset(offset);
    ChainEval out;
    out.image = std::move(s.image);
    out.jacobian = std::move(s.jacobian);
    out.dmu = Vec::Zero(offset.size());
    out.dmu(1) = mu_dir;
    for (int st : stays) {
        LocalOrbit orb;
        try {
            orb = iterate_local(model, out.image, st);
        } catch (const EscapeError& e) {
            throw ItineraryError(std::string("return chain: ") + e.what(), e.step);
        }
        auto s2 = g.eval(orb.end);
        out.jacobian = s2.jacobian * orb.jacobian * out.jacobian;
        out.dmu = s2.jacobian * orb.jacobian * out.dmu;
        out.dmu(1) += mu_dir;
        out.image = std::move(s2.image);
    }
    return out;
}

ReturnChain ReturnChain::squared(int j) const {
    ReturnChain c{base, stays};
    c.stays.push_back(j);
    c.stays.insert(c.stays.end(), stays.begin(), stays.end());
    return c;
}

namespace {

constexpr double kMinTransverseSlope = 1e-6;

// Offset (0, t, 0) from the source of a chain.
Vec along(int dim, double t) {
    Vec p = Vec::Zero(dim);
    p(1) = t;
    return p;
}

}  // namespace

ChainCoefficients chain_coefficients(const SaddleModel& model, const ReturnChain& chain, double t_source, double mu,
                                     double t_scale) {
    const int n = model.dim();
    const auto e = chain.eval(model, along(n, t_source), mu);
    ChainCoefficients cc;
    cc.t_source = t_source;
    cc.mu_eff = e.image(1);
    cc.x_plus = e.image(0);
    cc.a = e.jacobian(0, 0);
    cc.b = e.jacobian(0, 1);
    cc.c = e.jacobian(1, 0);
    const double h = 1e-3 * t_scale;
    const double jp = chain.eval(model, along(n, t_source + h), mu).jacobian(1, 1);
    const double jm = chain.eval(model, along(n, t_source - h), mu).jacobian(1, 1);
    cc.d = (jp - jm) / (4.0 * h);
    return cc;
}

std::string to_string(CaseTag tag) {
    switch (tag) {
        case CaseTag::cdx_neg_d_neg: return "cdx_neg,d_neg";
        case CaseTag::cdx_neg_d_pos: return "cdx_neg,d_pos";
        case CaseTag::cdx_pos_d_neg: return "cdx_pos,d_neg";
        case CaseTag::cdx_pos_d_pos: return "cdx_pos,d_pos";
    }
    return "unknown";
}

namespace {

// Internals assume y^- > 0; a negative y^- is handled by working in (x, -y, z).
struct Frame {
    SaddleModel model;
    GlobalMapCoeffs coeffs;
    bool flipped;
};

Frame working_frame(const SaddleModel& model, const GlobalMapCoeffs& coeffs) {
    coeffs.validate(model.dim());
    if (coeffs.y_minus > 0.0) return {model, coeffs, false};
    return {model.flipped_y(), flip_y(coeffs), true};
}

CaseTag tag_of(double c, double d, double x_plus) {
    const bool cdx_pos = c * d * x_plus > 0.0;
    const bool d_pos = d > 0.0;
    if (cdx_pos) return d_pos ? CaseTag::cdx_pos_d_pos : CaseTag::cdx_pos_d_neg;
    return d_pos ? CaseTag::cdx_neg_d_pos : CaseTag::cdx_neg_d_neg;
}

void unflip(Vec& p) {
    if (p.size() > 1) p(1) = -p(1);
}

void unflip(TransversePoint& tp) {
    tp.t = -tp.t;
    unflip(tp.preimage);
    unflip(tp.section);
}

void unflip(TangencyBranch& b) {
    b.mu_k = -b.mu_k;
    b.Y = -b.Y;
    b.t = -b.t;
    for (auto& l : b.landings) l = -l;
    unflip(b.tangency_point);
    unflip(b.preimage);
    for (auto& tp : b.transverse_points) unflip(tp);
    b.c_value = -b.c_value;
    b.c_sign = -b.c_sign;
    b.value = -b.value;
    b.second_derivative = -b.second_derivative;
}

struct Seed {
    double t = 0.0;
    double Y = 0.0;
    double Y_scale = 0.0;
    double mu_eff = 0.0;
};

// Leading-order double-root of the level-j return, from the scaled limit system.
Seed scaled_seed(const SaddleModel& model, const ChainCoefficients& cc, double y_source, int j, int sigma) {
    const double lk = std::pow(std::abs(model.lambda()), j);
    const double lk2 = std::pow(std::abs(model.lambda()), 0.5 * j);
    const double gk = std::pow(std::abs(model.gamma()), -j);
    const double c = cc.c, d = cc.d, b = cc.b, xp = cc.x_plus, ym = y_source;
    const double s = std::sqrt(std::abs(c * xp / d));
    double X = 0.0, Y = 0.0, mu = 0.0;
    if (c * d * xp < 0.0) {
        Y = sigma * lk2 * s;
        X = -b * b * gk / (4.0 * d * xp) * lk2 * s * sigma;
        mu = gk * (ym + Y) - d * X * X / (b * b);
    } else {
        X = sigma * b * lk2 * s;
        Y = -c * b * b * lk * gk / (4.0 * d * d * X);
        mu = -c * lk * xp - c * lk * X - d * Y * Y;
    }
    return {X / b, Y, lk2 * s, mu};
}

// Multiple-shooting evaluation of g o T0^{s_N} o ... o T0^{s_1} o g. Every pass near
// W^u_loc is pinned by a prescribed y-offset (anchor + fine, kept apart for precision)
// and the local legs go through the boundary-value form, so the offsets that later
// get multiplied by gamma^s are exact. `match` is zero on a true orbit.
struct Shot {
    Vec match;
    Vec image;
    Vec d_t;   ///< d(image)/dt at fixed mu along the true orbit
    Vec d_x;   ///< d(image)/dx
    Vec d_mu;  ///< d(image)/dmu
    Vec landing_t, landing_x, landing_mu;
};

Shot shoot(const SaddleModel& model, const GlobalMap& g, const std::vector<int>& stays, double x0, const Vec& anchor,
           const Vec& fine) {
    const int n = model.dim();
    const auto legs = static_cast<Eigen::Index>(stays.size());
    const Vec src = g.source();
    const double mu_dir = g.conjugation()(1);
    Vec p = Vec::Zero(n);
    p(0) = x0;
    p(1) = anchor(0);
    auto e = g.eval_offset(p, fine(0));
    Shot out;
    out.match.resize(legs);
    out.landing_t.resize(legs);
    out.landing_x.resize(legs);
    out.landing_mu.resize(legs);
    out.d_t = e.jacobian.col(1);
    out.d_x = e.jacobian.col(0);
    out.d_mu = Vec::Zero(n);
    out.d_mu(1) = mu_dir;
    for (Eigen::Index i = 0; i < legs; ++i) {
        const double land = anchor(i + 1) + fine(i + 1);
        const auto cf = solve_cross_form(model, e.image(0), src(1) + land, e.image.tail(n - 2),
                                         stays[static_cast<std::size_t>(i)]);
        out.match(i) = e.image(1) - cf.y_0;
        const Mat m = cross_jacobian(cf.jacobian);
        out.d_t = m * out.d_t;
        out.d_x = m * out.d_x;
        out.d_mu = m * out.d_mu;
        out.landing_t(i) = out.d_t(1);
        out.landing_x(i) = out.d_x(1);
        out.landing_mu(i) = out.d_mu(1);
        Vec q(n);
        q << cf.x_k - src(0), anchor(i + 1), cf.z_k - src.tail(n - 2);
        e = g.eval_offset(q, fine(i + 1));
        out.d_t = e.jacobian * out.d_t;
        out.d_x = e.jacobian * out.d_x;
        out.d_mu = e.jacobian * out.d_mu;
        out.d_mu(1) += mu_dir;
    }
    out.image = std::move(e.image);
    return out;
}

// Row scales from the Jacobian at the seed so every equation starts at unit weight.
Vec row_scales(const VectorFn& f, const Vec& x0, const Vec& var_scale) {
    const Mat j = fd_jacobian(f, x0, 1e-7 * var_scale) * var_scale.asDiagonal();
    Vec s(j.rows());
    for (Eigen::Index r = 0; r < j.rows(); ++r) {
        const double m = j.row(r).cwiseAbs().maxCoeff();
        s(r) = m > 0.0 && std::isfinite(m) ? m : 1.0;
    }
    return s;
}

std::vector<int> full_stays(const std::vector<int>& chain, int j) {
    std::vector<int> s = chain;
    s.push_back(j);
    s.insert(s.end(), chain.begin(), chain.end());
    return s;
}

// Anchors of a solved branch: preimage offset first, then the landings.
Vec branch_anchor(const TangencyBranch& b) {
    Vec a(static_cast<Eigen::Index>(b.landings.size()) + 1);
    a(0) = b.t;
    for (std::size_t i = 0; i < b.landings.size(); ++i) a(static_cast<Eigen::Index>(i) + 1) = b.landings[i];
    return a;
}

// dG_y/dx at the branch preimage: central difference along the fixed-mu line
// (landings moved with their x-sensitivity), checked against the chain rule.
double c_coefficient_fd(const SaddleModel& model, const GlobalMap& g, const TangencyBranch& b) {
    const auto stays = full_stays(b.chain_stays, b.k);
    const GlobalMap gm = g.with_mu(b.mu_k);
    const Vec anchor = branch_anchor(b);
    const Vec zero = Vec::Zero(anchor.size());
    const auto at = shoot(model, gm, stays, 0.0, anchor, zero);
    const double analytic = at.d_x(1);
    const double lx = at.landing_x.cwiseAbs().maxCoeff();
    const double h = 1e-3 * std::pow(std::abs(model.lambda()), 0.5 * b.k) / lx;
    Vec shift = Vec::Zero(anchor.size());
    shift.tail(shift.size() - 1) = h * at.landing_x;
    const double gp = shoot(model, gm, stays, h, anchor, shift).image(1);
    const double gn = shoot(model, gm, stays, -h, anchor, -shift).image(1);
    const double fd = (gp - gn) / (2.0 * h);
    if (std::abs(fd) < 1e-14) throw DomainError("secondary c coefficient: sign indeterminate");
    if (std::abs(fd - analytic) > 1e-4 * std::abs(analytic))
        throw ConvergenceError("secondary c coefficient: finite difference disagrees with the chain rule",
                               std::abs(fd - analytic));
    return fd;
}

// Second derivative of G along W^u_loc at fixed mu, by central differences of the slope.
double second_derivative_fd(const SaddleModel& model, const GlobalMap& gm, const std::vector<int>& stays,
                            const Vec& anchor, const Vec& fine, double h) {
    const auto at = shoot(model, gm, stays, 0.0, anchor, fine);
    Vec shift(fine.size());
    shift << h, h * at.landing_t;
    return (shoot(model, gm, stays, 0.0, anchor, fine + shift).d_t(1) -
            shoot(model, gm, stays, 0.0, anchor, fine - shift).d_t(1)) /
           (2.0 * h);
}

[[noreturn]] void diverged(int j, int branch_id, int stage, double t, double mu, double residual) {
    std::ostringstream msg;
    msg << "secondary tangency k=" << j << " branch " << branch_id;
    if (stage > 1) msg << " (stage " << stage << ")";
    msg << ": Newton diverged from seed t=" << t << " mu=" << mu << " (scaled residual " << residual << ")";
    throw ConvergenceError(msg.str(), residual);
}

// Double root of g o T0^j o g on W^u_loc. Unknowns are the preimage offset t and the
// landing offset Y; mu is eliminated through the first leg. In (t, mu) the landing
// height carries a gamma^j gain and Newton loses its basin.
TangencyBranch solve_primary_level(const SaddleModel& model, const GlobalMap& g, int j, int branch_id, double tol) {
    const int n = model.dim();
    const ReturnChain chain{g, {}};
    const auto cc = chain_coefficients(model, chain, 0.0, 0.0, 1.0);
    const double ym = g.coeffs().y_minus;
    const int sigma = branch_id == 1 ? 1 : -1;
    const Seed seed = scaled_seed(model, cc, ym, j, sigma);
    const std::vector<int> stays{j};

    double mu = seed.mu_eff;
    // Shot with mu solved from the first matching condition.
    auto at = [&](const Vec& v) {
        Vec anchor = Vec::Zero(2);
        Vec fine(2);
        fine << v(0), v(1);
        Shot s;
        for (int it = 0;; ++it) {
            s = shoot(model, g.with_mu(mu), stays, 0.0, anchor, fine);
            const double step = s.match(0) * g.conjugation()(1);
            if (it == 60 || std::abs(step) <= 1e-16 * std::abs(mu)) break;
            mu -= step;
        }
        return s;
    };
    const double lk = std::pow(std::abs(model.lambda()), j);
    auto residual = [&](const Vec& v) {
        const auto s = at(v);
        Vec r(2);
        r << s.image(1), s.d_t(1);
        return r;
    };
    NewtonOptions opts;
    opts.tol = tol;
    opts.var_scale = Vec(2);
    opts.var_scale << std::abs(seed.t), seed.Y_scale;
    opts.eq_scale = Vec(2);
    opts.eq_scale << std::abs(seed.mu_eff) + std::abs(cc.c * lk * cc.x_plus), std::abs(cc.c * lk * cc.b);
    Vec v0(2);
    v0 << seed.t, seed.Y;
    const double mu_seed = mu;
    at(v0);
    const auto sol = newton_solve(residual, v0, opts);
    if (!sol.converged) diverged(j, branch_id, 1, seed.t, mu_seed, sol.scaled_residual);

    const auto s = at(sol.x);
    TangencyBranch b;
    b.k = j;
    b.branch = branch_id;
    b.stage = 1;
    b.t = sol.x(0);
    b.landings = {sol.x(1)};
    b.mu_k = mu;
    b.preimage = g.source() + along(n, b.t);
    b.value = s.image(1);
    b.derivative = s.d_t(1);
    b.residual = sol.scaled_residual;
    Vec fine(2);
    fine << sol.x(0), sol.x(1);
    b.second_derivative =
        second_derivative_fd(model, g.with_mu(mu), stays, Vec::Zero(2), fine, 1e-4 * std::abs(sol.x(0)));

    const auto m = g.with_mu(mu).eval_offset(along(n, b.t));
    b.tangency_point = m.image;
    b.X = m.image(0) - cc.x_plus;
    b.Y = sol.x(1);
    b.case_tag = tag_of(cc.c, cc.d, cc.x_plus);

    const double gk = std::pow(std::abs(model.gamma()), -j);
    const double r1 = mu - gk * ym - gk * b.Y + cc.d / (cc.b * cc.b) * b.X * b.X;
    const double r2 = mu + cc.c * lk * cc.x_plus + cc.c * lk * b.X + cc.d * b.Y * b.Y;
    b.model_residual = std::max(std::abs(r1), std::abs(r2));
    return b;
}

// Second stage: a tangency of sec o T0^j o sec, sec = g o T0^k o g being the map
// of the stage-one tangency `first`. Unknowns (t', mu, L1, L2, L3) with t' and L2
// measured from the critical point t_c of sec at the seeded mu.
TangencyBranch solve_nested_level(const SaddleModel& model, const GlobalMap& g, const TangencyBranch& first, int j,
                                  int branch_id, double tol) {
    const int n = model.dim();
    const int k = first.k;
    const std::vector<int> inner{k};
    const double ym = g.coeffs().y_minus;

    // Taylor data of sec at the stage-one tangency.
    Vec a1(2);
    a1 << first.t, first.landings.front();
    const auto s0 = shoot(model, g.with_mu(first.mu_k), inner, 0.0, a1, Vec::Zero(2));
    ChainCoefficients cc;
    cc.t_source = first.t;
    cc.mu_eff = s0.image(1);
    cc.x_plus = s0.image(0);
    cc.a = s0.d_x(0);
    cc.b = s0.d_t(0);
    cc.c = first.c_value;
    cc.d = 0.5 * first.second_derivative;
    const int sigma = branch_id == 1 ? 1 : -1;
    const Seed seed = scaled_seed(model, cc, ym + first.t, j, sigma);
    const double mu0 = first.mu_k + (seed.mu_eff - cc.mu_eff) / s0.d_mu(1);

    // Critical point of sec at mu0.
    const double dt0 = -(mu0 - first.mu_k) * s0.landing_mu(0) / s0.landing_t(0);
    Vec a0 = Vec::Zero(2);
    a0(0) = first.t;
    auto crit = [&](const Vec& v) {
        const auto s = shoot(model, g.with_mu(mu0), inner, 0.0, a0, v);
        Vec r(2);
        r << s.match(0), s.d_t(1);
        return r;
    };
    Vec c0(2);
    c0 << dt0, first.landings.front();
    NewtonOptions copts;
    copts.var_scale = Vec(2);
    copts.var_scale << std::max(std::abs(dt0), 1e-9 * std::abs(first.t)),
        std::max(std::abs(first.landings.front()), 1e-6 * std::pow(std::abs(model.lambda()), 0.5 * k));
    copts.eq_scale = row_scales(crit, c0, copts.var_scale);
    const auto csol = newton_solve(crit, c0, copts);
    if (!csol.converged) diverged(j, branch_id, 2, first.t + dt0, mu0, csol.scaled_residual);
    const double t_c = first.t + csol.x(0);
    const double l1c = csol.x(1);
    Vec ac(2);
    ac << t_c, 0.0;
    Vec fc(2);
    fc << 0.0, l1c;
    const auto sc = shoot(model, g.with_mu(mu0), inner, 0.0, ac, fc);

    const auto stays = full_stays(inner, j);
    Vec anchor(4);
    anchor << t_c, 0.0, t_c, 0.0;
    auto unpack = [&](const Vec& v) {
        Vec fine(4);
        fine << v(0), v(2), v(3), v(4);
        return fine;
    };
    auto residual = [&](const Vec& v) {
        const auto s = shoot(model, g.with_mu(v(1)), stays, 0.0, anchor, unpack(v));
        Vec r(5);
        r << s.match, s.image(1), s.d_t(1);
        return r;
    };
    const double lt = sc.landing_t(0);
    Vec v0(5);
    v0 << seed.t, mu0, l1c + lt * seed.t, seed.Y, l1c + lt * seed.Y;
    NewtonOptions opts;
    opts.tol = tol;
    opts.var_scale = Vec(5);
    opts.var_scale << std::max(std::abs(seed.t), 1e-3 * seed.Y_scale / std::abs(lt)), std::abs(seed.mu_eff - cc.mu_eff),
        std::max(std::abs(l1c), std::abs(lt * seed.t)), seed.Y_scale, std::abs(lt) * seed.Y_scale;
    opts.eq_scale = row_scales(residual, v0, opts.var_scale);
    const auto sol = newton_solve(residual, v0, opts);
    if (!sol.converged) diverged(j, branch_id, 2, t_c + seed.t, mu0, sol.scaled_residual);

    const double mu = sol.x(1);
    const Vec fine = unpack(sol.x);
    const auto s = shoot(model, g.with_mu(mu), stays, 0.0, anchor, fine);
    TangencyBranch b;
    b.k = j;
    b.branch = branch_id;
    b.stage = 2;
    b.chain_stays = inner;
    b.t = t_c + sol.x(0);
    b.landings = {sol.x(2), t_c + sol.x(3), sol.x(4)};
    b.mu_k = mu;
    b.preimage = g.source() + along(n, b.t);
    b.value = s.image(1);
    b.derivative = s.d_t(1);
    b.residual = sol.scaled_residual;
    b.second_derivative =
        second_derivative_fd(model, g.with_mu(mu), stays, anchor, fine, 1e-4 * std::max(std::abs(sol.x(0)), 1e-300));

    Vec fm(2);
    fm << sol.x(0), sol.x(2);
    const auto m = shoot(model, g.with_mu(mu), inner, 0.0, ac, fm);
    b.tangency_point = m.image;
    const double x_c = sc.image(0);
    b.X = m.image(0) - x_c;
    b.Y = sol.x(3);
    b.case_tag = tag_of(cc.c, cc.d, cc.x_plus);

    const double lk = std::pow(std::abs(model.lambda()), j);
    const double gk = std::pow(std::abs(model.gamma()), -j);
    const double mu_eff = sc.image(1) + (mu - mu0) * sc.d_mu(1);
    const double r1 = mu_eff - gk * (ym + t_c) - gk * b.Y + cc.d / (cc.b * cc.b) * b.X * b.X;
    const double r2 = mu_eff + cc.c * lk * x_c + cc.c * lk * b.X + cc.d * b.Y * b.Y;
    b.model_residual = std::max(std::abs(r1), std::abs(r2));
    return b;
}

std::optional<TransversePoint> polish_root(const SaddleModel& model, const ReturnChain& chain, double mu, double t0,
                                           int K) {
    const int n = model.dim();
    double t = t0;
    double f = 0.0, fp = 0.0;
    try {
        for (int it = 0; it < 100; ++it) {
            const auto e = chain.eval(model, along(n, t), mu);
            f = e.image(1);
            fp = e.jacobian(1, 1);
            if (f == 0.0 || fp == 0.0) break;
            double dt = f / fp;
            for (int h = 0; h < 40; ++h) {
                const double ft = chain.eval(model, along(n, t - dt), mu).image(1);
                if (std::abs(ft) < std::abs(f)) break;
                dt *= 0.5;
            }
            t -= dt;
            if (std::abs(dt) <= 1e-15 * std::abs(t)) break;
        }
        const auto e = chain.eval(model, along(n, t), mu);
        f = e.image(1);
        fp = e.jacobian(1, 1);
        if (!(std::abs(f) <= 1e-10 * std::abs(fp * t)) || !std::isfinite(t)) return std::nullopt;
        TransversePoint tp;
        tp.K = K;
        tp.t = t;
        tp.preimage = chain.base.source() + along(n, t);
        tp.section = e.image;
        tp.slope = fp;
        return tp;
    } catch (const DomainError&) {
        return std::nullopt;
    }
}

void add_unique(std::vector<TransversePoint>& out, std::optional<TransversePoint> tp) {
    if (!tp) return;
    for (const auto& q : out)
        if (q.K == tp->K && std::abs(q.t - tp->t) <= 1e-9 * std::abs(tp->t)) return;
    out.push_back(std::move(*tp));
}

// Primary pair of `chain` plus the quartets of chain o T0^K o chain.
// Offsets are measured from the base source and seeded around t_source.
std::vector<TransversePoint> transverse_along(const SaddleModel& model, const ReturnChain& chain, double t_source,
                                              double mu, const std::vector<int>& stays, double t_limit) {
    std::vector<TransversePoint> out;
    const double y_source = chain.base.coeffs().y_minus + t_source;
    const double t_probe = chain.stays.empty() ? 1.0 : 1e-6 * std::pow(std::abs(model.gamma()), -chain.stays.front());
    const auto cc = chain_coefficients(model, chain, t_source, mu, t_probe);
    if (cc.mu_eff * cc.d < 0.0) {
        const double t = std::sqrt(-cc.mu_eff / cc.d);
        for (double s : {1.0, -1.0}) add_unique(out, polish_root(model, chain, mu, t_source + s * t, 0));
    }
    for (int K : stays) {
        const double lk = std::pow(std::abs(model.lambda()), K);
        const double gk = std::pow(std::abs(model.gamma()), -K);
        const double ysq = (-cc.mu_eff - cc.c * lk * cc.x_plus) / cc.d;
        if (ysq <= 0.0) continue;
        const auto full = chain.squared(K);
        for (double sy : {1.0, -1.0}) {
            const double tsq = (gk * (y_source + sy * std::sqrt(ysq)) - cc.mu_eff) / cc.d;
            if (tsq <= 0.0) continue;
            for (double st : {1.0, -1.0}) {
                const double t = t_source + st * std::sqrt(tsq);
                if (std::abs(t) >= t_limit) continue;
                auto tp = polish_root(model, full, mu, t, K);
                if (!tp) spdlog::debug("transverse homoclinic seed K={} t={:.3e} dropped", K, t);
                add_unique(out, std::move(tp));
            }
        }
    }
    // Near-tangent crossings are not transverse points.
    out.erase(std::remove_if(out.begin(), out.end(),
                             [&](const TransversePoint& p) {
                                 return std::abs(p.t) >= t_limit || std::abs(p.slope) <= kMinTransverseSlope;
                             }),
              out.end());
    return out;
}

// Nearest transverse preimage above and below offset t; empty when one side is missing.
std::vector<TransversePoint> straddling_pair(const std::vector<TransversePoint>& pts, double t) {
    const TransversePoint* above = nullptr;
    const TransversePoint* below = nullptr;
    for (const auto& p : pts) {
        if (p.t > t && (!above || p.t < above->t)) above = &p;
        if (p.t < t && (!below || p.t > below->t)) below = &p;
    }
    if (!above || !below) return {};
    return {*below, *above};
}

std::vector<int> stay_range(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int hi) {
    std::vector<int> ks;
    int lo = std::max(2, min_stay(model, coeffs));
    if (lo % 2) ++lo;
    for (int K = lo; K <= std::min(hi, kDefaultMaxStay); K += 2) ks.push_back(K);
    return ks;
}

}  // namespace

CaseTag classify_case(const GlobalMapCoeffs& coeffs) {
    const double s = coeffs.y_minus > 0.0 ? 1.0 : -1.0;
    return tag_of(s * coeffs.c, s * coeffs.d, coeffs.x_plus);
}

std::array<TangencyBranch, 2> solve_secondary_tangency(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k) {
    if (k % 2 != 0) throw ContractError("itinerary parity: k must be even");
    const auto f = working_frame(model, coeffs);
    if (k < min_stay(f.model, f.coeffs)) throw ContractError("secondary tangency: k below the minimal stay number");
    const auto g = GlobalMap::plain(f.coeffs);
    std::array<TangencyBranch, 2> out;
    for (int i = 1; i <= 2; ++i) {
        auto b = solve_primary_level(f.model, g, k, i, 1e-12);
        b.c_value = c_coefficient_fd(f.model, g, b);
        b.c_sign = b.c_value > 0.0 ? 1 : -1;
        if (f.flipped) unflip(b);
        out[static_cast<std::size_t>(i - 1)] = std::move(b);
    }
    return out;
}

std::vector<TransversePoint> find_transverse_homoclinics(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                                         double mu, const std::vector<int>& stays) {
    const auto f = working_frame(model, coeffs);
    const ReturnChain chain{GlobalMap::plain(f.coeffs), {}};
    auto pts = transverse_along(f.model, chain, 0.0, f.flipped ? -mu : mu, stays, 0.5 * kDefaultDelta);
    if (f.flipped)
        for (auto& p : pts) unflip(p);
    return pts;
}

double secondary_c_coefficient(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const TangencyBranch& branch) {
    const auto f = working_frame(model, coeffs);
    TangencyBranch b = branch;
    if (f.flipped) unflip(b);
    const double c = c_coefficient_fd(f.model, GlobalMap::plain(f.coeffs), b);
    return f.flipped ? -c : c;
}

int predicted_c_sign(const GlobalMapCoeffs& coeffs, int branch) {
    const double s = coeffs.y_minus > 0.0 ? 1.0 : -1.0;
    const double c = s * coeffs.c, d = s * coeffs.d, b = s * coeffs.b, xp = coeffs.x_plus;
    const double parity = branch == 1 ? -1.0 : 1.0;  // (-1)^i
    double v = 0.0;
    if (c * d * xp > 0.0)
        v = parity * c * d * (b / (d * xp));  // sign of s_k^+ at leading order
    else
        v = -parity * c * d;
    return (s * v) > 0.0 ? 1 : -1;
}

namespace {

// c x^+ y^- of the global map induced by a branch, in the working frame.
double induced_cxy(const SaddleModel& model, const GlobalMap& g, const TangencyBranch& b) {
    const auto stays = full_stays(b.chain_stays, b.k);
    const Vec anchor = branch_anchor(b);
    const auto s = shoot(model, g.with_mu(b.mu_k), stays, 0.0, anchor, Vec::Zero(anchor.size()));
    return b.c_value * s.image(0) * (g.coeffs().y_minus + b.t);
}

}  // namespace

ForgeResult forge_admissible_tangency(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                                      const std::vector<int>& k_schedule) {
    if (!std::is_sorted(k_schedule.begin(), k_schedule.end()))
        throw ContractError("forge: schedule must be ascending");
    for (int k : k_schedule)
        if (k % 2 != 0) throw ContractError("itinerary parity: k must be even");
    const auto f = working_frame(model, coeffs);
    const GlobalMap g = GlobalMap::plain(f.coeffs);
    const ReturnChain base{g, {}};
    const double t_limit = 0.5 * kDefaultDelta;
    const CaseTag tag = tag_of(f.coeffs.c, f.coeffs.d, f.coeffs.x_plus);
    ForgeResult res;

    auto finish = [&](TangencyBranch b, double cxy) {
        if (f.flipped) unflip(b);
        res.tangency = std::move(b);
        res.secondary_cxy = cxy;
        return res;
    };
    // Straddle against the persistent quartets (and, for stage two, the primary
    // pair of the intermediate tangency map).
    auto certify = [&](TangencyBranch& b, const std::vector<int>& stays) {
        auto pts = transverse_along(f.model, base, 0.0, b.mu_k, stays, t_limit);
        if (b.stage == 2) {
            const ReturnChain sec{g, b.chain_stays};
            for (auto& p : transverse_along(f.model, sec, b.landings[1], b.mu_k, {}, t_limit)) {
                p.K = -sec.stays.front();
                pts.push_back(p);
            }
        }
        b.transverse_points = straddling_pair(pts, b.t);
        b.straddle_ok = !b.transverse_points.empty();
        b.pairing = "nearest-y";
        b.c_value = c_coefficient_fd(f.model, g, b);
        b.c_sign = b.c_value > 0.0 ? 1 : -1;
        return induced_cxy(f.model, g, b);
    };

    for (int k : k_schedule) {
        std::ostringstream diag;
        diag << "k=" << k << ":";
        try {
            if (k < min_stay(f.model, f.coeffs)) throw ContractError("k below the minimal stay number");
            const auto stays = stay_range(f.model, f.coeffs, k + 8);
            for (int i = 1; i <= 2; ++i) {
                auto b = solve_primary_level(f.model, g, k, i, 1e-12);
                const double cxy = certify(b, stays);
                diag << " branch" << i << "(cxy=" << cxy << ", straddle=" << b.straddle_ok << ")";
                if (cxy > 0.0 && b.straddle_ok) return finish(b, cxy);
                if (tag != CaseTag::cdx_pos_d_pos) continue;

                // Second stage from the new tangency; the recursion stops here.
                for (int j = k; j <= k + 6; j += 2) {
                    for (int i2 = 1; i2 <= 2; ++i2) {
                        try {
                            auto b2 = solve_nested_level(f.model, g, b, j, i2, 1e-9);
                            const double cxy2 = certify(b2, stays);
                            diag << " stage2(j=" << j << ",b" << i2 << ",cxy=" << cxy2
                                 << ",straddle=" << b2.straddle_ok << ")";
                            if (cxy2 > 0.0 && b2.straddle_ok) return finish(b2, cxy2);
                        } catch (const std::exception& e) {
                            diag << " stage2(j=" << j << ",b" << i2 << ") " << e.what();
                        }
                    }
                }
            }
        } catch (const std::exception& e) {
            diag << " error: " << e.what();
        }
        res.diagnosis.push_back(diag.str());
    }
    std::string all = "forge: schedule exhausted;";
    for (const auto& d : res.diagnosis) all += " [" + d + "]";
    throw ScheduleExhaustedError(all);
}

}  // namespace hetdim
