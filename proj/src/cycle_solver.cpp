#include "hetdim/cycle_solver.hpp"

#include "hetdim/local_map.hpp"
#include "hetdim/numerics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hetdim {

std::string to_string(CycleMode mode) { return mode == CycleMode::symmetric ? "symmetric" : "general"; }

namespace {

Vec along(int dim, double t) {
    Vec p = Vec::Zero(dim);
    p(1) = t;
    return p;
}

// Orbit unknowns u = (x01, eta1, z01, eta2). Every pass near W^u_loc is pinned by
// its y-offset, so the offsets keep full precision through the global map.
struct Legs {
    Vec q01, q11, q02, q12;
    Vec closure;  ///< y-match at Q02, then T1(Q12) - Q01
    Mat dt1_first, dt1_second;
};

Legs legs(const SaddleModel& model, const GlobalMap& g, int k, int m, const Vec& u) {
    const int n = model.dim();
    const auto zd = n - 2;
    const double ym = g.source()(1);
    const double eta1 = u(1);
    const double eta2 = u(n);
    const auto cf1 = solve_cross_form(model, u(0), ym + eta1, u.segment(2, zd), k);
    Legs l;
    l.q01.resize(n);
    l.q01 << u(0), cf1.y_0, u.segment(2, zd);
    l.q11.resize(n);
    l.q11 << cf1.x_k, ym + eta1, cf1.z_k;
    Vec off(n);
    off << cf1.x_k, eta1, cf1.z_k;
    auto e1 = g.eval_offset(off);
    l.q02 = std::move(e1.image);
    l.dt1_first = std::move(e1.jacobian);
    const auto cf2 = solve_cross_form(model, l.q02(0), ym + eta2, l.q02.tail(zd), m);
    l.q12.resize(n);
    l.q12 << cf2.x_k, ym + eta2, cf2.z_k;
    off << cf2.x_k, eta2, cf2.z_k;
    auto e2 = g.eval_offset(off);
    l.dt1_second = std::move(e2.jacobian);
    l.closure.resize(n + 1);
    l.closure(0) = cf2.y_0 - l.q02(1);
    l.closure.tail(n) = e2.image - l.q01;
    return l;
}

LocalOrbit local_or_throw(const SaddleModel& model, const Vec& p, int k) {
    try {
        return iterate_local(model, p, k);
    } catch (const EscapeError& e) {
        throw ItineraryError(std::string("period-2 orbit: ") + e.what(), e.step);
    }
}

std::vector<Mat> period_chain(const SaddleModel& model, const Legs& l, int k, int m) {
    std::vector<Mat> chain = local_or_throw(model, l.q01, k).steps;
    chain.push_back(l.dt1_first);
    auto second = local_or_throw(model, l.q02, m).steps;
    chain.insert(chain.end(), second.begin(), second.end());
    chain.push_back(l.dt1_second);
    return chain;
}

double s_of(const std::vector<std::complex<double>>& pair) {
    const double tr = (pair[0] + pair[1]).real();
    const double det = (pair[0] * pair[1]).real();
    return tr / (det + 1.0);
}

double s_measured(const std::vector<Mat>& chain) { return s_of(dominant_pair(chain_product(chain))); }

PeriodTwoOrbit assemble(const SaddleModel& model, const GlobalMap& g, int k, int m, const Vec& u) {
    const Legs l = legs(model, g, k, m, u);
    const int n = model.dim();
    PeriodTwoOrbit o;
    o.q01 = SplitVector::from_flat(l.q01);
    o.q11 = SplitVector::from_flat(l.q11);
    o.q02 = SplitVector::from_flat(l.q02);
    o.q12 = SplitVector::from_flat(l.q12);
    o.k = k;
    o.m = m;
    o.eta1 = u(1);
    o.eta2 = u(n);
    o.chain = period_chain(model, l, k, m);
    o.jacobian_2 = chain_product(o.chain);
    o.s_value = s_measured(o.chain);
    // Forward-iteration oracle, independent of the boundary-value legs.
    const Vec a = local_or_throw(model, l.q01, k).end;
    const Vec b = g.eval(l.q11).image;
    const Vec c = local_or_throw(model, l.q02, m).end;
    const Vec d = g.eval(l.q12).image;
    o.leg_residual = std::max({max_norm(a - l.q11), max_norm(b - l.q02), max_norm(c - l.q12), max_norm(d - l.q01)});
    const Vec p1 = g.eval(a).image;
    const Vec p2 = g.eval(local_or_throw(model, p1, m).end).image;
    o.closure_residual = max_norm(p2 - l.q01);
    return o;
}

// Working frame with y^- > 0; every solver runs there and maps results back.
struct Frame {
    bool flipped = false;
    SaddleModel model;
    GlobalMapCoeffs c1;
    std::optional<GlobalMapCoeffs> c2;
};

Frame working_frame(const SaddleModel& model, const GlobalMapCoeffs& c1, const std::optional<GlobalMapCoeffs>& c2) {
    if (c1.y_minus == 0.0) throw ContractError("cycle solver: y^- must be nonzero");
    if (c1.y_minus > 0.0) return {false, model, c1, c2};
    std::optional<GlobalMapCoeffs> f2;
    if (c2) f2 = flip_y(*c2);
    return {true, model.flipped_y(), flip_y(c1), f2};
}

Vec flip(const Vec& p) {
    Vec q = p;
    q(1) = -q(1);
    return q;
}

SplitVector flip(const SplitVector& p) { return {p.x, -p.y, p.z}; }

Mat flip(const Mat& j) {
    Vec d = Vec::Ones(j.rows());
    d(1) = -1.0;
    return d.asDiagonal() * j * d.asDiagonal();
}

void unflip(PeriodTwoOrbit& o) {
    o.q01 = flip(o.q01);
    o.q11 = flip(o.q11);
    o.q02 = flip(o.q02);
    o.q12 = flip(o.q12);
    o.eta1 = -o.eta1;
    o.eta2 = -o.eta2;
    o.jacobian_2 = flip(o.jacobian_2);
    for (auto& j : o.chain) j = flip(j);
}

// Row scales from the Jacobian at the seed so every equation starts at unit weight.
Vec row_scales(const VectorFn& f, const Vec& x0, const Vec& var_scale) {
    const Mat j = fd_jacobian(f, x0, 1e-7 * var_scale) * var_scale.asDiagonal();
    Vec s(j.rows());
    for (Eigen::Index r = 0; r < j.rows(); ++r) {
        const double v = j.row(r).cwiseAbs().maxCoeff();
        s(r) = v > 0.0 && std::isfinite(v) ? v : 1.0;
    }
    return s;
}

// ---------------------------------------------------------------------------------
// Joint system. Unknowns: u, then mu (if free), gamma (if free), mu2 (general mode).
// Equations: closure, then s (if imposed), the quasi-connection gap, the mu2 tie.

struct Problem {
    SaddleModel model;
    GlobalMapCoeffs c1;
    std::optional<GlobalMapCoeffs> c2;
    int k = 0;
    int m = 0;
    double s_target = 0.0;
    bool free_mu = false;
    bool free_gamma = false;
    bool use_s = false;
    bool use_gap = false;
    bool shift = false;
    double mu_fixed = 0.0;
};

struct Point {
    Vec u;
    double mu = 0.0;
    double gamma = 0.0;
    double mu2 = 0.0;
};

Point unpack(const Problem& p, const Vec& v) {
    const int n = p.model.dim();
    Point pt;
    pt.u = v.head(n + 1);
    Eigen::Index i = n + 1;
    pt.mu = p.free_mu ? v(i++) : p.mu_fixed;
    pt.gamma = p.free_gamma ? v(i++) : p.model.gamma();
    pt.mu2 = p.c2 ? v(i++) : pt.mu;
    return pt;
}

Vec pack(const Problem& p, const Point& pt) {
    const int n = p.model.dim();
    Vec v(n + 1 + (p.free_mu ? 1 : 0) + (p.free_gamma ? 1 : 0) + (p.c2 ? 1 : 0));
    v.head(n + 1) = pt.u;
    Eigen::Index i = n + 1;
    if (p.free_mu) v(i++) = pt.mu;
    if (p.free_gamma) v(i++) = pt.gamma;
    if (p.c2) v(i++) = pt.mu2;
    return v;
}

SaddleModel model_at(const Problem& p, double gamma) {
    if (!p.free_gamma) return p.model;
    try {
        return p.model.with_gamma(gamma);
    } catch (const ModelError& e) {
        throw DomainError(std::string("trial gamma: ") + e.what());
    }
}

GlobalMap partner_map(const SaddleModel& model, const GlobalMapCoeffs& c1, const std::optional<GlobalMapCoeffs>& c2,
                      double mu, double mu2) {
    if (c2) {
        auto k2 = *c2;
        k2.mu = mu2;
        return GlobalMap::y_mirrored(k2);
    }
    auto k1 = c1;
    k1.mu = mu;
    return GlobalMap::symmetric_twin(model, k1);
}

double shift_term(const Problem& p, const SaddleModel& model) {
    return p.shift ? 2.0 * p.c1.c * std::pow(model.lambda(), p.k) * p.c1.x_plus : 0.0;
}

QuasiConnection quasi_at(const SaddleModel& model, const GlobalMap& g, const GlobalMap& partner, const Vec& q02,
                         double y12, double y11, int k, int m) {
    const int n = model.dim();
    const auto zd = n - 2;
    const std::vector<ReturnBlock> blocks{{m, g, y12}, {k, g, y11}};
    // Newton in the preimage offset t on the x-match; the leaf is only re-followed
    // when the curve's z moves.
    double t = 0.0;
    Vec leaf;
    Vec leaf_z;
    LocalStep c;
    for (int it = 0; it < 40; ++it) {
        c = partner.eval_offset(along(n, t));
        const Vec z = c.image.tail(zd);
        if (leaf.size() == 0 || z != leaf_z) {
            leaf = follow_leaf(model, q02, blocks, z);
            leaf_z = z;
        }
        const double slope = c.jacobian(0, 1);
        if (slope == 0.0) throw DomainError("quasi-connection: partner curve has no x-extent");
        const double dt = -(c.image(0) - leaf(0)) / slope;
        if (dt == 0.0) break;
        t += dt;
        if (std::abs(dt) <= 1e-16 * std::abs(t)) {
            c = partner.eval_offset(along(n, t));
            if (c.image.tail(zd) != leaf_z) leaf = follow_leaf(model, q02, blocks, c.image.tail(zd));
            break;
        }
    }
    QuasiConnection q;
    q.t_param = t;
    q.gap = c.image(1) - leaf(1);
    q.curve_point = c.image;
    q.leaf_point = leaf;
    return q;
}

Vec residual(const Problem& p, const Vec& v) {
    const Point pt = unpack(p, v);
    const SaddleModel model = model_at(p, pt.gamma);
    const GlobalMap g = GlobalMap::plain(p.c1).with_mu(pt.mu);
    const Legs l = legs(model, g, p.k, p.m, pt.u);
    std::vector<double> r(l.closure.begin(), l.closure.end());
    if (p.use_s) r.push_back(s_measured(period_chain(model, l, p.k, p.m)) - p.s_target);
    if (p.use_gap)
        r.push_back(quasi_at(model, g, partner_map(model, p.c1, p.c2, pt.mu, pt.mu2), l.q02, l.q12(1), l.q11(1), p.k,
                           p.m).gap);
    if (p.c2) {
        const double e1 = pt.u(1);
        r.push_back(pt.mu2 - pt.mu - (p.c1.d - p.c2->d) * e1 * e1 - shift_term(p, model));
    }
    return Eigen::Map<Vec>(r.data(), static_cast<Eigen::Index>(r.size()));
}

// Leading-order seed. eta1^2 - eta2^2 follows from the two closure equations; the
// product eta1 eta2 from the trace and determinant of the 2x2 reduction at s.
Point leading_seed(const Problem& p, double gamma, int branch) {
    const auto& c = p.c1;
    const int n = p.model.dim();
    const double lam = p.model.lambda();
    const double lk = std::pow(lam, p.k);
    const double lm = std::pow(lam, p.m);
    const double gk = std::pow(gamma, -p.k);
    const double gm = std::pow(gamma, -p.m);
    Point pt;
    pt.gamma = gamma;
    double eta1 = 0.0;
    double eta2 = 0.0;
    if (p.free_mu) {
        const double bc = c.b * c.c;
        const double det = bc * bc * std::pow(lam * gamma, p.k + p.m);
        const double prod = (p.s_target * (det + 1.0) * gm * gk - bc * (lm * gm + lk * gk)) / (4.0 * c.d * c.d);
        const double q = (gm * c.y_minus - gk * c.y_minus + c.c * c.x_plus * (lm - lk)) / c.d;
        const double big = std::sqrt(0.5 * (std::abs(q) + std::sqrt(q * q + 4.0 * prod * prod)));
        if (q >= 0.0) {
            eta1 = branch * big;
            eta2 = prod / eta1;
        } else {
            eta2 = branch * big;
            eta1 = prod / eta2;
        }
    } else {
        const double r1 = (gm * c.y_minus - p.mu_fixed - c.c * lk * c.x_plus) / c.d;
        const double r2 = (gk * c.y_minus - p.mu_fixed - c.c * lm * c.x_plus) / c.d;
        if (r1 < 0.0 || r2 < 0.0) {
            std::ostringstream msg;
            msg << "period-2 seed (k=" << p.k << ", m=" << p.m << ", mu=" << p.mu_fixed
                << "): leading-order balance has no real solution";
            throw ConvergenceError(msg.str(), INFINITY);
        }
        eta1 = branch * std::sqrt(r1);
        eta2 = branch * std::sqrt(r2);
    }
    const double x01 = c.x_plus * (1.0 + c.a * lm) + c.b * eta2;
    pt.u.resize(n + 1);
    pt.u(0) = x01;
    pt.u(1) = eta1;
    pt.u.segment(2, n - 2) = c.z_plus + c.a_t * (lm * c.x_plus) + c.b_t * eta2;
    pt.u(n) = eta2;
    pt.mu = p.free_mu ? gm * (c.y_minus + eta2) - c.c * lk * x01 - c.d * eta1 * eta1 : p.mu_fixed;
    pt.mu2 = pt.mu;
    if (p.c2) {
        const SaddleModel model = model_at(p, gamma);
        pt.mu2 = pt.mu + (c.d - p.c2->d) * eta1 * eta1 + shift_term(p, model);
    }
    return pt;
}

Vec var_scales(const Problem& p, const Point& seed) {
    const int n = p.model.dim();
    const double floor = std::pow(std::abs(p.model.lambda()), p.k + p.m);
    const double mu_floor = std::pow(std::abs(p.model.lambda()), p.k);
    Point s;
    s.u = Vec::Constant(n + 1, 1e-3);
    s.u(1) = std::max(std::abs(seed.u(1)), floor);
    s.u(n) = std::max(std::abs(seed.u(n)), floor);
    s.mu = std::max(std::abs(seed.mu), mu_floor);
    s.gamma = std::abs(seed.gamma) / (p.k + p.m);
    s.mu2 = std::max(std::abs(seed.mu2), mu_floor);
    return pack(p, s);
}

struct Solved {
    Point point;
    Vec seed;
    double residual = 0.0;
    int iterations = 0;
};

Solved run_newton(const Problem& p, const Point& seed, const std::string& what) {
    const VectorFn f = [&](const Vec& v) { return residual(p, v); };
    const Vec v0 = pack(p, seed);
    NewtonOptions opts;
    opts.max_iter = 60;
    opts.tol = 1e-12;
    opts.var_scale = var_scales(p, seed);
    Vec es;
    try {
        es = row_scales(f, v0, opts.var_scale);
    } catch (const DomainError& e) {
        throw ConvergenceError(what + ": seed outside the domain (" + e.what() + ")", INFINITY);
    }
    opts.eq_scale = es;
    const auto r = newton_solve(f, v0, opts);
    if (!r.converged) {
        std::ostringstream msg;
        msg << what << " (k=" << p.k << ", m=" << p.m << "): Newton diverged from seed eta=(" << seed.u(1) << ", "
            << seed.u(p.model.dim()) << ") mu=" << seed.mu << " gamma=" << seed.gamma << " (scaled residual "
            << r.scaled_residual << ")";
        throw ConvergenceError(msg.str(), r.scaled_residual);
    }
    spdlog::debug("{} k={} m={}: {} Newton steps, scaled residual {:.3e}", what, p.k, p.m, r.iterations,
                  r.scaled_residual);
    return {unpack(p, r.x), v0, r.scaled_residual, r.iterations};
}

void check_itinerary(int k, int m, bool require_order) {
    if (k % 2 != 0 || m % 2 != 0) throw ContractError("itinerary parity: k and m must be even");
    if (m <= 0 || (require_order && k <= m)) throw ContractError("itinerary: need k > m > 0");
}

}  // namespace

PeriodTwoOrbit solve_period2(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m, double mu,
                             int branch, const std::optional<Vec>& seed) {
    check_itinerary(k, m, false);
    const Frame fr = working_frame(model, coeffs, std::nullopt);
    Problem p{fr.model, fr.c1, std::nullopt, k, m};
    p.mu_fixed = fr.flipped ? -mu : mu;
    Point s;
    if (seed) {
        s.u = *seed;
        if (fr.flipped) {
            s.u(1) = -s.u(1);
            s.u(model.dim()) = -s.u(model.dim());
        }
        s.mu = p.mu_fixed;
        s.gamma = model.gamma();
    } else {
        s = leading_seed(p, model.gamma(), branch);
    }
    const auto r = run_newton(p, s, "period-2 orbit");
    auto o = assemble(fr.model, GlobalMap::plain(fr.c1).with_mu(p.mu_fixed), k, m, r.point.u);
    if (fr.flipped) unflip(o);
    return o;
}

TargetedOrbit solve_period2_with_s(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m,
                                   double s_target, int branch) {
    check_itinerary(k, m, false);
    const Frame fr = working_frame(model, coeffs, std::nullopt);
    Problem p{fr.model, fr.c1, std::nullopt, k, m, s_target};
    p.free_mu = true;
    p.use_s = true;
    const auto r = run_newton(p, leading_seed(p, model.gamma(), branch), "period-2 orbit at prescribed s");
    TargetedOrbit t;
    t.orbit = assemble(fr.model, GlobalMap::plain(fr.c1).with_mu(r.point.mu), k, m, r.point.u);
    t.mu = r.point.mu;
    if (fr.flipped) {
        unflip(t.orbit);
        t.mu = -t.mu;
    }
    return t;
}

int matrix_index(const Mat& jacobian) {
    int count = 0;
    for (const auto& e : spectrum(jacobian)) {
        const double r = std::abs(e);
        if (std::abs(r - 1.0) < kIndexAmbiguity)
            throw AmbiguousIndexError("orbit index: multiplier modulus " + std::to_string(r) +
                                      " too close to 1; adjust the parameters");
        if (r > 1.0) ++count;
    }
    return count;
}

int orbit_index(const PeriodTwoOrbit& orbit) { return matrix_index(orbit.jacobian_2); }

Index2Check index2_criterion(const SaddleModel& model, const PeriodTwoOrbit& orbit, const GlobalMapCoeffs& coeffs) {
    const int km = orbit.k + orbit.m;
    const double lam = model.lambda();
    const double gam = model.gamma();
    const double bc = coeffs.b * coeffs.c;
    const double d = coeffs.d;
    Index2Check c;
    c.trace_predicted = std::pow(gam, km) * 4.0 * d * d * orbit.eta1 * orbit.eta2 +
                        bc * (std::pow(lam, orbit.m) * std::pow(gam, orbit.k) +
                              std::pow(lam, orbit.k) * std::pow(gam, orbit.m));
    c.det_predicted = bc * bc * std::pow(lam * gam, km);
    c.s = c.trace_predicted / (c.det_predicted + 1.0);
    const auto pair = dominant_pair(chain_product(orbit.chain));
    c.trace_measured = (pair[0] + pair[1]).real();
    c.det_measured = (pair[0] * pair[1]).real();
    c.s_measured = s_of(pair);
    c.index = orbit_index(orbit);
    c.match = (std::abs(c.s) < 1.0) == (c.index == 2);
    return c;
}

CycleSetting cycle_setting(const SaddleModel& model, const GlobalMapCoeffs& coeffs,
                           const std::optional<GlobalMapCoeffs>& coeffs2, const CycleCertificate& cert) {
    const SaddleModel at = model.with_gamma(cert.gamma);
    auto k1 = coeffs;
    k1.mu = cert.mu;
    GlobalMap partner = cert.mode == CycleMode::general
                            ? partner_map(at, coeffs, coeffs2, cert.mu, cert.mu2)
                            : GlobalMap::symmetric_twin(at, k1);
    return {at, GlobalMap::plain(k1), std::move(partner)};
}

QuasiConnection quasi_connection(const CycleSetting& setting, const PeriodTwoOrbit& orbit) {
    return quasi_at(setting.model, setting.map, setting.partner, orbit.q02.flat(), orbit.q12.y, orbit.q11.y, orbit.k,
                    orbit.m);
}

namespace {

CycleCertificate solve_cycle(const SaddleModel& model, const GlobalMapCoeffs& coeffs1,
                             const std::optional<GlobalMapCoeffs>& coeffs2, int k, int m, double s_target,
                             int branch) {
    check_itinerary(k, m, true);
    if (!(s_target > -1.0 && s_target < 1.0)) throw ContractError("cycle solver: s_target must lie in (-1, 1)");
    const Frame fr = working_frame(model, coeffs1, coeffs2);
    const auto& c1 = fr.c1;
    const double ratio = 2.0 * c1.y_minus / (c1.c * c1.x_plus);
    Problem p{fr.model, c1, fr.c2, k, m, s_target};
    p.free_mu = true;
    p.free_gamma = true;
    p.use_s = true;
    p.use_gap = true;
    p.shift = coeffs2.has_value() && ratio < 0.0;
    const double target = p.shift ? -ratio : ratio;
    const double gamma0 =
        std::copysign(std::pow(target / std::pow(std::abs(model.lambda()), k), 1.0 / m), model.gamma());
    // Scaled phase: close the orbit at the seed gamma; the leaf through Q02 only exists near
    // a true orbit. The joint solve below then polishes (mu, gamma) with k, m fixed.
    Problem pre{fr.model.with_gamma(gamma0), c1, std::nullopt, k, m, s_target};
    pre.free_mu = true;
    pre.use_s = true;
    const auto closed = run_newton(pre, leading_seed(pre, gamma0, branch), "cycle seed orbit");
    Point seed = closed.point;
    seed.gamma = gamma0;
    seed.mu2 = seed.mu;
    if (p.c2) seed.mu2 = seed.mu + (c1.d - p.c2->d) * seed.u(1) * seed.u(1) + shift_term(p, pre.model);
    const auto solved = run_newton(p, seed, coeffs2 ? "general cycle" : "symmetric cycle");
    const Point& pt = solved.point;

    CycleCertificate cert;
    cert.mode = coeffs2 ? CycleMode::general : CycleMode::symmetric;
    cert.k = k;
    cert.m = m;
    cert.branch = branch;
    cert.s_target = s_target;
    cert.mu = pt.mu;
    cert.mu2 = coeffs2 ? pt.mu2 : pt.mu;
    cert.mu_shift = p.shift;
    cert.gamma = pt.gamma;
    cert.lambda = model.lambda();
    cert.theta = -std::log(std::abs(cert.lambda)) / std::log(std::abs(cert.gamma));
    cert.joint_residual = solved.residual;
    cert.newton_iterations = solved.iterations;
    cert.seed = solved.seed;

    const SaddleModel at = fr.model.with_gamma(pt.gamma);
    auto k1 = c1;
    k1.mu = pt.mu;
    const GlobalMap g = GlobalMap::plain(k1);
    cert.orbit = assemble(at, g, k, m, pt.u);

    const CycleSetting setting{at, g, partner_map(at, c1, fr.c2, pt.mu, pt.mu2)};
    cert.quasi = quasi_connection(setting, cert.orbit);
    cert.index_evidence = spectrum(cert.orbit.jacobian_2);
    cert.index = orbit_index(cert.orbit);
    cert.index2 = index2_criterion(at, cert.orbit, c1);

    const double lg = std::log(std::abs(pt.gamma));
    cert.theta_decomposition.m_over_k = static_cast<double>(m) / k;
    cert.theta_decomposition.c_star = k * std::log(std::abs(cert.lambda)) + m * lg;
    cert.theta_decomposition.theta_predicted =
        cert.theta_decomposition.m_over_k - cert.theta_decomposition.c_star / (k * lg);
    cert.theta_decomposition.c_star_reference = std::log(target);
    cert.product = std::exp(cert.theta_decomposition.c_star);
    cert.product_reference = target;
    cert.transverse = verify_transverse_connection(setting, cert);

    if (fr.flipped) {
        // Map everything back to the caller's coordinates.
        unflip(cert.orbit);
        cert.mu = -cert.mu;
        cert.mu2 = -cert.mu2;
        cert.quasi.gap = -cert.quasi.gap;
        cert.quasi.t_param = -cert.quasi.t_param;
        cert.quasi.curve_point = flip(cert.quasi.curve_point);
        cert.quasi.leaf_point = flip(cert.quasi.leaf_point);
        cert.transverse->crossing_point = flip(cert.transverse->crossing_point);
    }
    return cert;
}

}  // namespace

CycleCertificate solve_hetdim_symmetric(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k, int m,
                                        double s_target, int branch) {
    if (!model.symmetric()) throw ContractError("symmetric cycle solver needs a symmetric model");
    if (!(coeffs.c * coeffs.x_plus * coeffs.y_minus > 0.0))
        throw ContractError("symmetric cycle solver needs c x^+ y^- > 0");
    return solve_cycle(model, coeffs, std::nullopt, k, m, s_target, branch);
}

CycleCertificate solve_hetdim_general(const SaddleModel& model, const GlobalMapCoeffs& coeffs1,
                                      const GlobalMapCoeffs& coeffs2, int k, int m, double s_target, int branch) {
    if (coeffs1.dim() != coeffs2.dim()) throw ModelError("general cycle solver: coefficient dimensions differ");
    const double gap = std::abs(coeffs1.x_plus - coeffs2.x_plus);
    if (gap > 1e-12) {
        std::ostringstream msg;
        msg << "condition C4 violated: x^+ of the two tangencies differ by " << gap;
        throw ModelError(msg.str());
    }
    if (coeffs1.y_minus * coeffs2.y_minus <= 0.0)
        throw ModelError("general cycle solver: coeffs2 must be written in the frame (x, -y, z) (same sign of y^-)");
    return solve_cycle(model, coeffs1, coeffs2, k, m, s_target, branch);
}

// ---------------------------------------------------------------------------------
// Transverse connection: a loop around Q01 in E^u is pushed through the general
// first-return map (either tangency) until some adjacent pair of its points, with a
// common itinerary, returns on opposite sides of W^s_loc(O) = {y = 0}. The loop then
// meets the preimage of W^s_loc, a piece of W^s(O).

namespace {

struct Return {
    Vec image;
    int tag = 0;  ///< 2 * stay + map id
};

std::optional<Return> general_return(const SaddleModel& model, const GlobalMap& a, const GlobalMap& b, const Vec& p,
                                     int k_min) {
    Vec cur = p;
    for (int j = 1; j <= kDefaultMaxStay; ++j) {
        cur = model.map(cur);
        if (!cur.allFinite() || !model.in_box(cur)) return std::nullopt;
        if (j < k_min) continue;
        if (a.in_domain(cur)) return Return{a.eval(cur).image, 2 * j};
        if (b.in_domain(cur)) return Return{b.eval(cur).image, 2 * j + 1};
    }
    return std::nullopt;
}

struct Node {
    double s = 0.0;
    Vec p;
    std::vector<int> itinerary;
    std::optional<Return> next;
    bool alive = true;
};

struct Loop {
    const CycleSetting& set;
    Vec center;
    Mat basis;  ///< two columns spanning E^u at Q01
    double radius = 0.0;
    int k_min = 0;

    [[nodiscard]] Node trace(double s, int returns) const {
        Node nd;
        nd.s = s;
        nd.p = center + radius * (std::cos(s) * basis.col(0) + std::sin(s) * basis.col(1));
        for (int i = 0; i < returns && nd.alive; ++i) {
            auto r = general_return(set.model, set.map, set.partner, nd.p, k_min);
            if (!r) {
                nd.alive = false;
                break;
            }
            nd.itinerary.push_back(r->tag);
            nd.p = std::move(r->image);
        }
        if (nd.alive) nd.next = general_return(set.model, set.map, set.partner, nd.p, k_min);
        return nd;
    }
};

bool comparable(const Node& a, const Node& b) {
    return a.alive && b.alive && a.next && b.next && a.next->tag == b.next->tag && a.itinerary == b.itinerary;
}

double separation(const Vec& a, const Vec& b, double y_floor) {
    const double yscale = std::max({std::abs(a(1)), std::abs(b(1)), y_floor, 1e-300});
    const auto zd = a.size() - 2;
    return (std::abs(a(0) - b(0)) + max_norm(a.tail(zd) - b.tail(zd))) / kDefaultDelta + std::abs(a(1) - b(1)) / yscale;
}

double polygon_area(const std::vector<Vec>& pts) {
    double a = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec& p = pts[i];
        const Vec& q = pts[(i + 1) % pts.size()];
        a += p(0) * q(1) - q(0) * p(1);
    }
    return 0.5 * std::abs(a);
}

}  // namespace

TransverseWitness verify_transverse_connection(const CycleSetting& setting, const CycleCertificate& cert,
                                               double seed_radius) {
    const auto& orbit = cert.orbit;
    const SaddleModel& model = setting.model;
    const int n = model.dim();
    const Vec q01 = orbit.q01.flat();
    const auto cone = invariant_cu_subspace(orbit.chain);
    for (const auto& e : cone.eigenvalues)
        if (std::abs(e) <= 1.0) throw ContractError("transverse connection: orbit is not index-2");

    // Radius measured in the coordinates (x0, y_k, z0) of the strip, where sigma0_k has unit size.
    Mat cross = Mat::Identity(n, n);
    cross.row(1) = local_or_throw(model, q01, orbit.k).jacobian.row(1);
    const Mat w = cross * cone.subspace;
    const Eigen::HouseholderQR<Mat> qr(w);
    const Mat wq = qr.householderQ() * Mat::Identity(n, 2);
    const Mat basis = cross.partialPivLu().solve(wq);

    Loop loop{setting, q01, basis, seed_radius, min_stay(model, setting.map.coeffs())};
    constexpr int seeds = 64;
    std::vector<Node> nodes;
    for (int i = 0; i < seeds; ++i) nodes.push_back(loop.trace(2.0 * M_PI * i / seeds, 0));

    TransverseWitness wit;
    {
        std::vector<Vec> before, after;
        for (const auto& nd : nodes) {
            if (!nd.next) throw ContractError("transverse connection: seed loop leaves the strip");
            before.push_back(nd.p);
            after.push_back(nd.next->image);
        }
        wit.area_factor = polygon_area(after) / polygon_area(before);
    }
    const auto& c = setting.map.coeffs();
    wit.predicted_area_factor =
        std::abs(c.b * c.c) * std::pow(std::abs(model.lambda() * model.gamma()), orbit.k);
    if (!(wit.area_factor > 1.0))
        throw ConvergenceError("transverse connection: area growth stalls (factor " +
                                   std::to_string(wit.area_factor) + ")",
                               wit.area_factor);
    wit.iteration_bound =
        static_cast<int>(std::ceil(std::log(kDefaultDelta / seed_radius) / std::log(std::sqrt(wit.area_factor)))) + 5;

    constexpr std::size_t max_nodes = 20000;
    constexpr double refine_tol = 0.05;
    constexpr double min_gap = 1e-13;
    // The orbit itself returns to Q02; points returning to the other side of y = 0 are pivots.
    const double home = orbit.q02.y;
    const auto pivot = [home](const Node& nd) { return nd.alive && nd.next && nd.next->image(1) * home < 0.0; };
    for (int ret = 0; ret < kTransverseCap; ++ret) {
        // Refine where the next images of neighbours drift apart.
        for (int pass = 0; pass < 40 && nodes.size() < max_nodes; ++pass) {
            double y_floor = 0.0;
            for (const auto& nd : nodes)
                if (nd.next) y_floor = std::max(y_floor, 1e-7 * std::abs(nd.next->image(1)));
            std::vector<Node> out;
            bool inserted = false;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                const Node& a = nodes[i];
                const Node& b = nodes[(i + 1) % nodes.size()];
                out.push_back(a);
                if (!comparable(a, b) || a.next->image(1) * b.next->image(1) <= 0.0) continue;
                const double sb = i + 1 == nodes.size() ? b.s + 2.0 * M_PI : b.s;
                if (sb - a.s < min_gap || separation(a.next->image, b.next->image, y_floor) < refine_tol) continue;
                out.push_back(loop.trace(0.5 * (a.s + sb), ret));
                inserted = true;
            }
            nodes = std::move(out);
            if (!inserted) break;
        }
        // Straddling pairs either bisect to a crossing or get split and searched again.
        for (int round = 0; round < 200; ++round) {
            std::vector<Node> extra;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                const Node& a = nodes[i];
                const Node& b = nodes[(i + 1) % nodes.size()];
                double lo = a.s;
                double hi = i + 1 == nodes.size() ? b.s + 2.0 * M_PI : b.s;
                if (hi - lo < min_gap) continue;
                if (!comparable(a, b)) {
                    // Resolve strip boundaries next to points that return across W^s_loc.
                    if (pivot(a) || pivot(b)) extra.push_back(loop.trace(0.5 * (lo + hi), ret));
                    continue;
                }
                if (a.next->image(1) * b.next->image(1) > 0.0) continue;
                const double width = hi - lo;
                const double sign_lo = a.next->image(1);
                Node mid = a;
                bool ok = true;
                for (int it = 0; it < 80 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
                    mid = loop.trace(0.5 * (lo + hi), ret);
                    if (!comparable(mid, a)) {
                        ok = false;
                        break;
                    }
                    (mid.next->image(1) * sign_lo > 0.0 ? lo : hi) = mid.s;
                }
                if (!ok) {
                    extra.push_back(std::move(mid));
                    continue;
                }
                const double h = 1e-4 * width;
                const Node lp = loop.trace(mid.s - h, ret);
                const Node rp = loop.trace(mid.s + h, ret);
                if (!comparable(lp, a) || !comparable(rp, a)) continue;
                const Vec dv = rp.next->image - lp.next->image;
                wit.iterations_used = ret + 1;
                wit.crossing_point = mid.p;
                wit.slope = std::abs(dv(1)) / std::max(std::abs(dv(0)), max_norm(dv.tail(n - 2)));
                wit.curve_points = static_cast<int>(nodes.size());
                return wit;
            }
            if (extra.empty() || nodes.size() >= max_nodes) break;
            for (auto& e : extra) e.s = std::fmod(e.s, 2.0 * M_PI);
            nodes.insert(nodes.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
            std::sort(nodes.begin(), nodes.end(), [](const Node& x, const Node& y) { return x.s < y.s; });
        }
        bool any = false;
        for (auto& nd : nodes) {
            if (!nd.alive) continue;
            if (!nd.next) {
                nd.alive = false;
                continue;
            }
            nd.itinerary.push_back(nd.next->tag);
            nd.p = std::move(nd.next->image);
            nd.next = general_return(model, setting.map, setting.partner, nd.p, loop.k_min);
            any = true;
        }
        if (!any) throw ConvergenceError("transverse connection: the whole loop escaped", INFINITY);
    }
    throw ConvergenceError("transverse connection: inconclusive after " + std::to_string(kTransverseCap) + " returns",
                           INFINITY);
}

// ---------------------------------------------------------------------------------

PeriodTwoOrbit rebuild_orbit(const CycleSetting& setting, const PeriodTwoOrbit& stored) {
    const SaddleModel& model = setting.model;
    const GlobalMap& g = setting.map;
    PeriodTwoOrbit o = stored;
    const Vec q01 = stored.q01.flat();
    const Vec q11 = stored.q11.flat();
    const Vec q02 = stored.q02.flat();
    const Vec q12 = stored.q12.flat();
    const auto first = local_or_throw(model, q01, stored.k);
    const auto second = local_or_throw(model, q02, stored.m);
    // Offsets from M^- carry the digits that y^- + eta would round away.
    Vec off1 = q11;
    off1(1) = stored.eta1;
    Vec off2 = q12;
    off2(1) = stored.eta2;
    const auto g1 = g.eval_offset(off1);
    const auto g2 = g.eval_offset(off2);
    o.chain = first.steps;
    o.chain.push_back(g1.jacobian);
    o.chain.insert(o.chain.end(), second.steps.begin(), second.steps.end());
    o.chain.push_back(g2.jacobian);
    o.jacobian_2 = chain_product(o.chain);
    o.s_value = s_measured(o.chain);
    o.leg_residual = std::max({max_norm(first.end - q11), max_norm(g1.image - q02), max_norm(second.end - q12),
                               max_norm(g2.image - q01)});
    const Vec p1 = g.eval(first.end).image;
    const Vec p2 = g.eval(local_or_throw(model, p1, stored.m).end).image;
    o.closure_residual = max_norm(p2 - q01);
    spdlog::debug("rebuilt orbit k={} m={}: legs {:.2e} {:.2e} {:.2e} {:.2e}", stored.k, stored.m,
                  max_norm(first.end - q11), max_norm(g1.image - q02), max_norm(second.end - q12),
                  max_norm(g2.image - q01));
    return o;
}

std::vector<CertificateCheck> certificate_checks(const CycleSetting& setting, const CycleCertificate& cert,
                                                 const std::optional<GlobalMapCoeffs>& coeffs2) {
    std::vector<CertificateCheck> out;
    const auto add = [&out](std::string name, double value, double tol, bool pass) {
        out.push_back({std::move(name), value, tol, pass && !std::isnan(value)});
    };
    // Runs one check; any exception turns it into a failure with value NaN.
    const auto check = [&add](const std::string& name, double tol, const auto& body) {
        try {
            body();
        } catch (const std::exception& e) {
            spdlog::warn("certificate check {}: {}", name, e.what());
            add(name, NAN, tol, false);
        }
    };

    std::optional<PeriodTwoOrbit> orbit;
    check("leg_residual", kLegTolerance, [&] {
        orbit = rebuild_orbit(setting, cert.orbit);
        add("leg_residual", orbit->leg_residual, kLegTolerance, orbit->leg_residual <= kLegTolerance);
        add("closure_residual", orbit->closure_residual, kClosureTolerance,
            orbit->closure_residual <= kClosureTolerance);
    });
    // Without a valid rebuild the stored orbit still defines the leaf for the gap.
    const PeriodTwoOrbit& used = orbit ? *orbit : cert.orbit;
    const auto need_orbit = [&orbit] {
        if (!orbit) throw DomainError("orbit could not be rebuilt");
    };

    check("orbit_index", 2, [&] {
        need_orbit();
        const int index = matrix_index(orbit->jacobian_2);
        add("orbit_index", index, 2, index == 2);
    });
    check("saddle_index", 1, [&] {
        const int index = matrix_index(setting.model.step(Vec::Zero(setting.model.dim())).jacobian);
        add("saddle_index", index, 1, index == 1);
    });
    check("index2_criterion", 1.0, [&] {
        need_orbit();
        const auto ic = index2_criterion(setting.model, *orbit, setting.map.coeffs());
        add("index2_criterion", ic.s, 1.0, ic.match);
    });
    check("s_target", 1e-6, [&] {
        need_orbit();
        const double err = std::abs(orbit->s_value - cert.s_target);
        add("s_target", err, 1e-6, err <= 1e-6);
    });
    check("quasi_gap", kGapTolerance, [&] {
        const double gap = std::abs(quasi_connection(setting, used).gap);
        add("quasi_gap", gap, kGapTolerance, gap < kGapTolerance);
    });

    const auto& td = cert.theta_decomposition;
    const double lg = std::log(std::abs(cert.gamma));
    const double theta_err =
        std::max({std::abs(cert.theta - (td.m_over_k - td.c_star / (cert.k * lg))),
                  std::abs(td.c_star - (cert.k * std::log(std::abs(cert.lambda)) + cert.m * lg)),
                  std::abs(cert.theta + std::log(std::abs(cert.lambda)) / lg),
                  std::abs(setting.model.gamma() - cert.gamma)});
    add("theta_identity", theta_err, kThetaTolerance, theta_err <= kThetaTolerance);

    if (cert.mode == CycleMode::general) {
        check("mu_tie", 1e-9, [&] {
            if (!coeffs2) throw ContractError("general certificate without its second tangency");
            const auto& c1 = setting.map.coeffs();
            const double shift = cert.mu_shift ? 2.0 * c1.c * std::pow(cert.lambda, cert.k) * c1.x_plus : 0.0;
            const double tie = cert.mu2 - cert.mu - (c1.d - coeffs2->d) * used.eta1 * used.eta1 - shift;
            const double rel = std::abs(tie) / std::max({std::abs(cert.mu), std::abs(cert.mu2), 1e-300});
            add("mu_tie", rel, 1e-9, rel <= 1e-9);
        });
    }

    check("transverse_iterations", kTransverseCap, [&] {
        need_orbit();
        CycleCertificate probe = cert;
        probe.orbit = *orbit;
        const auto w = verify_transverse_connection(setting, probe);
        add("transverse_iterations", w.iterations_used, w.iteration_bound, w.iterations_used <= w.iteration_bound);
        add("crossing_slope", w.slope, kMinCrossingSlope, w.slope > kMinCrossingSlope);
        const double rel = std::abs(w.area_factor / w.predicted_area_factor - 1.0);
        add("area_factor", rel, kAreaTolerance, rel <= kAreaTolerance);
    });
    return out;
}

}  // namespace hetdim
