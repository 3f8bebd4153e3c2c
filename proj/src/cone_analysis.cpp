#include "hetdim/cone_analysis.hpp"

#include "hetdim/local_map.hpp"
#include "hetdim/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace hetdim {

Mat chain_product(const std::vector<Mat>& chain) {
    if (chain.empty()) throw ContractError("empty Jacobian chain");
    Mat p = chain.front();
    for (std::size_t i = 1; i < chain.size(); ++i) p = chain[i] * p;
    return p;
}

namespace {

constexpr int kFrameIterations = 30;
constexpr double kFrameTolerance = 1e-13;

Mat orthonormal(const Mat& a) {
    Mat cols = a;
    for (Eigen::Index j = 0; j < cols.cols(); ++j) cols.col(j).normalize();
    const Eigen::HouseholderQR<Mat> qr(cols);
    return qr.householderQ() * Mat::Identity(a.rows(), a.cols());
}

struct Frame {
    Mat basis;
    int iterations = 0;
};

// Subspace power iteration seeded with the coordinate block [first, first + width).
Frame power_frame(const Mat& p, Eigen::Index first, Eigen::Index width) {
    const auto n = p.rows();
    Frame f;
    f.basis = Mat::Identity(n, n).middleCols(first, width);
    for (f.iterations = 1; f.iterations <= kFrameIterations; ++f.iterations) {
        const Mat next = orthonormal(p * f.basis);
        const double inc = (next - f.basis * (f.basis.transpose() * next)).cwiseAbs().maxCoeff();
        f.basis = next;
        if (inc < kFrameTolerance) break;
    }
    f.iterations = std::min(f.iterations, kFrameIterations);
    return f;
}

std::vector<std::complex<double>> eigenvalues_of(const Mat& m) {
    const Eigen::EigenSolver<Mat> es(m, false);
    std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
    std::stable_sort(ev.begin(), ev.end(), [](auto l, auto r) { return std::abs(l) > std::abs(r); });
    return ev;
}

// Unit directions of the z-space used to sample cone boundaries.
std::vector<Vec> z_directions(Eigen::Index zd) {
    std::vector<Vec> dirs;
    for (Eigen::Index i = 0; i < zd; ++i) {
        for (double sg : {1.0, -1.0}) dirs.push_back(sg * Vec::Unit(zd, i));
        for (Eigen::Index j = i + 1; j < zd; ++j)
            for (double sg : {1.0, -1.0}) dirs.push_back((Vec::Unit(zd, i) + sg * Vec::Unit(zd, j)) / std::sqrt(2.0));
    }
    return dirs;
}

double cu_ratio(const Vec& v) {
    const double xy = std::abs(v(0)) + std::abs(v(1));
    return xy == 0.0 ? INFINITY : v.tail(v.size() - 2).norm() / xy;
}

double s_ratio(const Vec& v) {
    const double z = v.tail(v.size() - 2).norm();
    return z == 0.0 ? INFINITY : std::max(std::abs(v(0)), std::abs(v(1))) / z;
}

constexpr int kAngles = 72;

// Largest opening of the image of {||dz|| <= K |d(x,y)|_1} under p, sampled on the boundary.
double cu_image_opening(const Mat& p, double k) {
    const auto n = p.rows();
    const auto dirs = z_directions(n - 2);
    double worst = 0.0;
    for (int a = 0; a < kAngles; ++a) {
        const double phi = 2.0 * M_PI * a / kAngles;
        Vec v = Vec::Zero(n);
        v(0) = std::cos(phi);
        v(1) = std::sin(phi);
        const double r = k * (std::abs(v(0)) + std::abs(v(1)));
        worst = std::max(worst, cu_ratio(p * v));
        for (const auto& w : dirs) {
            v.tail(n - 2) = r * w;
            worst = std::max(worst, cu_ratio(p * v));
        }
    }
    return worst;
}

// Same for {|dx|, |dy| <= K ||dz||} under p (the inverse product).
double s_image_opening(const Mat& p, double k) {
    const auto n = p.rows();
    const auto dirs = z_directions(n - 2);
    double worst = 0.0;
    for (const auto& w : dirs) {
        Vec v(n);
        v.tail(n - 2) = w;
        for (int a = 0; a < kAngles; ++a) {
            const double phi = 2.0 * M_PI * a / kAngles;
            const double c = std::cos(phi);
            const double s = std::sin(phi);
            const double m = std::max(std::abs(c), std::abs(s));
            v(0) = k * c / m;
            v(1) = k * s / m;
            worst = std::max(worst, s_ratio(p * v));
        }
        v.head(2).setZero();
        worst = std::max(worst, s_ratio(p * v));
    }
    return worst;
}

// Opening of a subspace with respect to one of the cone families.
double subspace_opening(const Mat& basis, ConeKind kind) {
    double worst = 0.0;
    if (basis.cols() == 1) return kind == ConeKind::cu ? cu_ratio(basis.col(0)) : s_ratio(basis.col(0));
    for (int a = 0; a < kAngles; ++a) {
        const double phi = M_PI * a / kAngles;
        const Vec v = std::cos(phi) * basis.col(0) + std::sin(phi) * basis.col(1);
        worst = std::max(worst, kind == ConeKind::cu ? cu_ratio(v) : s_ratio(v));
    }
    for (Eigen::Index j = 2; j < basis.cols(); ++j)
        worst = std::max(worst, kind == ConeKind::cu ? cu_ratio(basis.col(j)) : s_ratio(basis.col(j)));
    return worst;
}

// Smallest doubling of 2 * opening whose cone maps strictly inside itself.
void certify_cone(ConeWitness& w, const Mat& p, double opening) {
    double k = std::max(2.0 * opening, 0.1);
    for (; k <= kConeMax; k *= 2.0) {
        const double image = w.kind == ConeKind::cu ? cu_image_opening(p, k) : s_image_opening(p, k);
        if (image < k) {
            w.K_const = k;
            w.contraction_ratio = image / k;
            return;
        }
    }
    throw ConvergenceError(std::string(w.kind == ConeKind::cu ? "cu" : "s") +
                               " cone: no invariant opening up to K_max = 1000",
                           k);
}

}  // namespace

std::vector<std::complex<double>> dominant_pair(const Mat& product) {
    const auto bal = balance(product);
    const Mat q = power_frame(bal.matrix, 0, 2).basis;
    return eigenvalues_of(q.transpose() * bal.matrix * q);
}

ConeWitness invariant_cu_subspace(const std::vector<Mat>& chain) {
    const Mat p = chain_product(chain);
    if (p.rows() < 3 || !p.allFinite()) throw ContractError("cu subspace: degenerate product");
    // Work in balanced coordinates; return-map products mix entries of very different size.
    const auto bal = balance(p);
    const auto f = power_frame(bal.matrix, 0, 2);
    ConeWitness w;
    w.kind = ConeKind::cu;
    w.iterations = f.iterations;
    w.eigenvalues = eigenvalues_of(f.basis.transpose() * bal.matrix * f.basis);
    w.subspace = orthonormal(bal.scale.asDiagonal() * f.basis);
    certify_cone(w, p, subspace_opening(w.subspace, ConeKind::cu));
    return w;
}

ConeWitness invariant_s_subspace(const std::vector<Mat>& chain, double rate_reference) {
    if (chain.empty()) throw ContractError("empty Jacobian chain");
    const auto n = chain.front().rows();
    Mat inv = Mat::Identity(n, n);
    for (const auto& j : chain) {
        const Eigen::PartialPivLU<Mat> lu(j);
        inv = inv * lu.inverse();
    }
    if (!inv.allFinite()) throw DomainError("s subspace: chain not invertible");
    const auto bal = balance(inv);
    const auto f = power_frame(bal.matrix, 2, n - 2);
    ConeWitness w;
    w.kind = ConeKind::s;
    w.iterations = f.iterations;
    for (auto e : eigenvalues_of(f.basis.transpose() * bal.matrix * f.basis)) w.eigenvalues.push_back(1.0 / e);
    std::stable_sort(w.eigenvalues.begin(), w.eigenvalues.end(),
                     [](auto l, auto r) { return std::abs(l) > std::abs(r); });
    w.subspace = orthonormal(bal.scale.asDiagonal() * f.basis);
    w.bound_B = std::abs(w.eigenvalues.front()) / rate_reference;
    certify_cone(w, inv, subspace_opening(w.subspace, ConeKind::s));
    return w;
}

namespace {

// z-frame at the end of the blocks pulled back one step at a time. Partial-pivot LU
// keeps exact zeros of decoupled blocks, so linear leaves come out exactly flat.
Mat pulled_back_frame(const SaddleModel& model, const Vec& p, const std::vector<ReturnBlock>& blocks) {
    const int n = model.dim();
    std::vector<Mat> steps;
    Vec cur = p;
    for (const auto& b : blocks) {
        LocalOrbit orb;
        try {
            if (b.end_y) {
                const auto zd = n - 2;
                const auto cf = solve_cross_form(model, cur(0), *b.end_y, cur.tail(zd), b.stay);
                cur(1) = cf.y_0;
                orb = iterate_local(model, cur, b.stay);
                orb.end << cf.x_k, *b.end_y, cf.z_k;
            } else {
                orb = iterate_local(model, cur, b.stay);
            }
        } catch (const EscapeError& e) {
            throw ItineraryError(std::string("stable frame: ") + e.what(), e.step);
        }
        for (auto& s : orb.steps) steps.push_back(std::move(s));
        auto g = b.map.eval(orb.end);
        steps.push_back(std::move(g.jacobian));
        cur = std::move(g.image);
    }
    Mat x = Mat::Identity(n, n).rightCols(n - 2);
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        x = Eigen::PartialPivLU<Mat>(*it).solve(x);
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double m = x.col(j).cwiseAbs().maxCoeff();
            if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("stable frame: degenerate pull-back");
            x.col(j) /= m;
        }
    }
    return x;
}

// d(x, y)/dz along the leaf, 2 x (D-2).
Mat leaf_slope(const SaddleModel& model, const Vec& p, const std::vector<ReturnBlock>& blocks) {
    const Mat x = pulled_back_frame(model, p, blocks);
    const auto zd = x.rows() - 2;
    return x.topRows(2) * Eigen::PartialPivLU<Mat>(x.bottomRows(zd)).inverse();
}

}  // namespace

Mat stable_frame(const SaddleModel& model, const Vec& p, const std::vector<ReturnBlock>& blocks) {
    return orthonormal(pulled_back_frame(model, p, blocks));
}

Vec follow_leaf(const SaddleModel& model, const Vec& base, const std::vector<ReturnBlock>& blocks,
                const Vec& z_target, double step) {
    const auto zd = base.size() - 2;
    const Vec dz = z_target - base.tail(zd);
    const double len = dz.norm();
    if (len == 0.0) return base;
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    const Vec h = dz / n;
    Vec p = base;
    for (int i = 0; i < n; ++i) {
        const Vec k1 = leaf_slope(model, p, blocks) * h;
        Vec pred = p;
        pred.head(2) += k1;
        pred.tail(zd) += h;
        const Vec k2 = leaf_slope(model, pred, blocks) * h;
        p.head(2) += 0.5 * (k1 + k2);
        p.tail(zd) = base.tail(zd) + (static_cast<double>(i + 1) / n) * dz;
    }
    p.tail(zd) = z_target;
    return p;
}

SplitVector strip_center(const SaddleModel& model, const GlobalMapCoeffs& coeffs, int k) {
    const auto cf = solve_cross_form(model, coeffs.x_plus, coeffs.y_minus, coeffs.z_plus, k);
    return {coeffs.x_plus, cf.y_0, coeffs.z_plus};
}

LeafSample strong_stable_leaf(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const SplitVector& base, int k,
                              double half_width) {
    if (base.dim() != model.dim()) throw ContractError("strong_stable_leaf: dimension mismatch");
    const GlobalMap g = model.symmetric() && base.y * coeffs.y_minus < 0.0 ? GlobalMap::symmetric_twin(model, coeffs)
                                                                           : GlobalMap::plain(coeffs);
    const std::vector<ReturnBlock> blocks{{k, g, std::nullopt}};
    const Vec b = base.flat();
    constexpr int per_side = 5;
    LeafSample out;
    out.base = base;
    out.k = k;
    out.offsets.resize(2 * per_side);
    out.phi1.resize(2 * per_side);
    out.phi2.resize(2 * per_side);
    Eigen::Index idx = 0;
    for (double side : {-1.0, 1.0}) {
        Vec cur = b;
        for (int j = 1; j <= per_side; ++j) {
            const double off = side * half_width * j / per_side;
            Vec target = b.tail(b.size() - 2);
            target(0) += off;
            cur = follow_leaf(model, cur, blocks, target);
            out.offsets(idx) = off;
            out.phi1(idx) = (cur(0) - b(0)) / off;
            out.phi2(idx) = (cur(1) - b(1)) / off;
            ++idx;
        }
    }
    const auto& mu = model.multipliers();
    const double r1 = std::pow(mu.lambda0 / std::abs(mu.lambda), k);
    const double r2 = std::pow(std::abs(mu.lambda_hat) / std::abs(mu.gamma), k);
    out.c1 = out.phi1.cwiseAbs().maxCoeff() / r1;
    out.c2 = out.phi2.cwiseAbs().maxCoeff() / r2;
    return out;
}

LeafFit fit_leaf_exponents(const SaddleModel& model, const GlobalMapCoeffs& coeffs, const std::vector<int>& ks,
                           double half_width) {
    if (ks.size() < 6) throw ContractError("leaf exponent fit needs at least 6 stay numbers");
    LeafFit fit;
    const auto n = static_cast<Eigen::Index>(ks.size());
    Vec kv(n), v1(n), v2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int k = ks[static_cast<std::size_t>(i)];
        auto s = strong_stable_leaf(model, coeffs, strip_center(model, coeffs, k), k, half_width);
        kv(i) = k;
        v1(i) = s.phi1.cwiseAbs().maxCoeff();
        v2(i) = s.phi2.cwiseAbs().maxCoeff();
        fit.samples.push_back(std::move(s));
    }
    if ((v1.array() == 0.0).any() || (v2.array() == 0.0).any())
        throw DomainError("leaf exponent fit: flat leaves have no decay rate");
    fit.slope1 = fit_log_slope(kv, v1);
    fit.slope2 = fit_log_slope(kv, v2);
    for (auto& s : fit.samples) s.fit_exponents = std::make_pair(fit.slope1, fit.slope2);
    return fit;
}

}  // namespace hetdim
