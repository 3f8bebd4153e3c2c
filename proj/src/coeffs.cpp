#include "hetdim/coeffs.hpp"

#include <cmath>
#include <string>

namespace hetdim {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ModelError("global map coefficients: " + msg);
}

bool finite(const Vec& v) { return v.allFinite(); }

}  // namespace

void GlobalMapCoeffs::validate(int d_) const {
    const auto zd = static_cast<Eigen::Index>(d_ - 2);
    require(z_plus.size() == zd, "z_plus must have length dim-2");
    require(a_t.size() == zd, "a_t must have length dim-2");
    require(b_t.size() == zd, "b_t must have length dim-2");
    require(alpha.rows() == zd + 2 && alpha.cols() == zd, "alpha must be a dim x (dim-2) block");
    require(std::isfinite(mu) && std::isfinite(x_plus) && std::isfinite(y_minus) && std::isfinite(a) &&
                std::isfinite(b) && std::isfinite(c) && std::isfinite(d) && std::isfinite(h.e3),
            "non-finite scalar");
    require(finite(z_plus) && finite(a_t) && finite(b_t) && alpha.allFinite(), "non-finite entry");
    require(b != 0.0, "b == 0");
    require(c != 0.0, "c == 0");
    require(d != 0.0, "d == 0");
    require(x_plus != 0.0, "x_plus == 0");
    require(y_minus != 0.0, "y_minus == 0");
}

GlobalMapCoeffs planar_coeffs(int dim, double mu, double x_plus, double y_minus, double a, double b,
                              double c, double d) {
    const int zd = dim - 2;
    GlobalMapCoeffs k;
    k.mu = mu;
    k.x_plus = x_plus;
    k.y_minus = y_minus;
    k.z_plus = Vec::Zero(zd);
    k.a = a;
    k.b = b;
    k.c = c;
    k.d = d;
    k.a_t = Vec::Zero(zd);
    k.b_t = Vec::Zero(zd);
    k.alpha = Mat::Zero(zd + 2, zd);
    k.alpha.bottomRows(zd) = 0.5 * Mat::Identity(zd, zd);
    return k;
}

GlobalMapCoeffs flip_y(const GlobalMapCoeffs& k) {
    // y -> -y on both sides of T1: the y-row changes sign, y-inputs change sign.
    GlobalMapCoeffs f = k;
    f.mu = -k.mu;
    f.y_minus = -k.y_minus;
    f.c = -k.c;
    f.d = -k.d;
    f.b = -k.b;
    f.b_t = -k.b_t;
    f.alpha.row(1) = -k.alpha.row(1);
    f.h.e3 = k.h.e3;  // -(e3 (-t)^3) = e3 t^3
    return f;
}

GlobalMapCoeffs conjugate_z(const GlobalMapCoeffs& k, const Vec& signs) {
    GlobalMapCoeffs f = k;
    const auto s = signs.asDiagonal();
    f.z_plus = s * k.z_plus;
    f.a_t = s * k.a_t;
    f.b_t = s * k.b_t;
    f.alpha.topRows(2) = k.alpha.topRows(2) * s;
    f.alpha.bottomRows(k.alpha.rows() - 2) = s * k.alpha3() * s;
    return f;
}

}  // namespace hetdim
