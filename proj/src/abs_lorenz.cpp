#include "hetdim/abs_lorenz.hpp"

#include "hetdim/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hetdim {

namespace {

FlowExponents classify(const Eigen::Matrix3d& jac) {
    const Eigen::EigenSolver<Eigen::Matrix3d> es(jac, false);
    std::vector<double> re;
    for (int i = 0; i < 3; ++i) {
        const double r = es.eigenvalues()(i).real();
        if (std::abs(r) < 1e-12) throw DomainError("equilibrium is not hyperbolic");
        re.push_back(r);
    }
    std::sort(re.begin(), re.end(), std::greater<>());
    if (!(re[0] > 0.0 && re[1] < 0.0)) throw DomainError("equilibrium is not a saddle with one unstable direction");
    FlowExponents e;
    e.beta = re[0];
    e.alpha = re[1];
    e.alpha_strong.assign(re.begin() + 2, re.end());
    return e;
}

}  // namespace

FlowExponents equilibrium_exponents(const LorenzParams& p) {
    Eigen::Matrix3d j;
    j << -p.sigma, p.sigma, 0.0, p.rho, -1.0, 0.0, 0.0, 0.0, -p.beta;
    return classify(j);
}

FlowExponents equilibrium_exponents(const MoriokaShimizuParams& p) {
    // x' = y, y' = x(1 - z) - lambda y, z' = -alpha z + x^2
    Eigen::Matrix3d j;
    j << 0.0, 1.0, 0.0, 1.0, -p.lambda, 0.0, 0.0, 0.0, -p.alpha;
    return classify(j);
}

C3PrimeCheck check_c3prime(const FlowExponents& e) {
    C3PrimeCheck c;
    c.strong_margin = e.alpha_strong.empty() ? -INFINITY : e.alpha_strong.front() - 2.0 * e.alpha;
    c.weak_margin = e.alpha + 2.0 * e.beta / 3.0;
    c.ok = c.strong_margin < 0.0 && c.weak_margin < 0.0;
    return c;
}

void AbsConfig::validate() const {
    if (!(A > 0.0)) throw ModelError("abs: A must be positive");
    if (!(rho > 0.5 && rho < 1.0)) throw ModelError("abs: rho must lie in (1/2, 1)");
    if (!(half_width > 0.0)) throw ModelError("abs: half_width must be positive");
    if (!(std::abs(contraction) < 1.0)) throw ModelError("abs: fiber map must contract");
    if (A * rho * std::pow(half_width, rho - 1.0) <= 1.0) throw ModelError("abs: quotient map is not expanding");
    const double umax = std::max(nu, std::abs(-nu + A * std::pow(half_width, rho)));
    if (umax >= half_width) throw ModelError("abs: quotient image is not strictly inside the domain");
    if (std::abs(contraction) * half_width + std::abs(offset) + std::abs(drift) * half_width >= half_width)
        throw ModelError("abs: fiber image is not strictly inside the domain");
}

std::optional<double> abs_quotient_step(const AbsConfig& cfg, double u) {
    if (u == 0.0) return std::nullopt;
    return std::copysign(1.0, u) * (-cfg.nu + cfg.A * std::pow(std::abs(u), cfg.rho));
}

double abs_quotient_derivative(const AbsConfig& cfg, double u) {
    return cfg.A * cfg.rho * std::pow(std::abs(u), cfg.rho - 1.0);
}

AbsOrbit simulate_poincare(const AbsConfig& cfg, double u0, double v0, int n) {
    AbsOrbit orb;
    orb.points.reserve(static_cast<std::size_t>(n) + 1);
    double u = u0, v = v0;
    for (int i = 0;; ++i) {
        const char sym = u > 0.0 ? 'R' : (u < 0.0 ? 'L' : 'O');
        orb.points.push_back({i, u, v, sym});
        if (sym == 'O') {
            orb.absorbed = true;
            break;
        }
        if (i == n) break;
        const double s = u > 0.0 ? 1.0 : -1.0;
        v = cfg.contraction * v + s * cfg.offset + cfg.drift * u;
        u = *abs_quotient_step(cfg, u);
    }
    return orb;
}

AbsBatchReport abs_trapping_batch(const AbsConfig& cfg, std::uint64_t seed, int orbits, int steps) {
    AbsBatchReport rep;
    rep.orbits = orbits;
    constexpr int grid = 2000;
    rep.min_expansion = INFINITY;
    rep.max_image = cfg.nu;  // one-sided limits at u = 0
    for (int i = 1; i <= grid; ++i) {
        const double u = cfg.half_width * i / grid;
        rep.min_expansion = std::min(rep.min_expansion, abs_quotient_derivative(cfg, u));
        rep.max_image = std::max(rep.max_image, std::abs(*abs_quotient_step(cfg, u)));
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-cfg.half_width, cfg.half_width);
    for (int o = 0; o < orbits; ++o) {
        const double u0 = dist(rng);
        const double v0 = dist(rng);
        const auto orb = simulate_poincare(cfg, u0, v0, steps);
        rep.absorbed += orb.absorbed ? 1 : 0;
        const bool escaped = std::any_of(orb.points.begin(), orb.points.end(), [&](const AbsPoint& p) {
            return std::abs(p.u) >= cfg.half_width || std::abs(p.v) >= cfg.half_width;
        });
        rep.escapes += escaped ? 1 : 0;
    }
    return rep;
}

}  // namespace hetdim
