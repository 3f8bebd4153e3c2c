#include "doctest.h"
#include "fixtures.hpp"

#include "hetdim/numerics.hpp"
#include "hetdim/saddle_model.hpp"

#include <cmath>
#include <random>

using namespace hetdim;
using fixtures::Vec;

namespace {

Vec pt(double x, double y, double z) { return (Vec(3) << x, y, z).finished(); }

// Polynomial family written out directly, before any symmetrisation.
Vec raw_polynomial(double eps, const Vec& p) {
    const double x = p(0), y = p(1), z = p(2);
    return pt(eps * y * z * x, eps * y * y * (x + z), eps * z * x * y);
}

}  // namespace

TEST_CASE("modulus of the default multipliers") {
    const auto model = fixtures::linear_model();
    // -ln 0.55 / ln 2.2
    CHECK(model.multipliers().theta() == doctest::Approx(0.7582363115735484).epsilon(1e-15));
    const auto report = check_conditions(model, fixtures::cycle_coeffs());
    CHECK(report.theta == doctest::Approx(-std::log(0.55) / std::log(2.2)).epsilon(1e-15));
    CHECK(report.c1_ok);
    CHECK(report.c2_ok);
    CHECK(report.c3_ok);
    CHECK(report.c4_leaf_gap == 0.0);
}

TEST_CASE("origin is a fixed point with the diagonal linear part") {
    for (const auto& model : {fixtures::linear_model(), fixtures::polynomial_model()}) {
        const auto step = apply_T0(model, SplitVector(0.0, 0.0, Vec::Zero(1)));
        CHECK(step.image.norm() == 0.0);
        Mat expected = Mat::Zero(3, 3);
        expected.diagonal() << 0.55, 2.2, 0.25;
        CHECK((step.jacobian - expected).norm() == 0.0);
    }
}

TEST_CASE("linear action on a sample point") {
    const auto step = apply_T0(fixtures::linear_model(), SplitVector(0.1, 0.2, Vec::Constant(1, 0.05)));
    CHECK(step.image(0) == doctest::Approx(0.055).epsilon(1e-15));
    CHECK(step.image(1) == doctest::Approx(0.44).epsilon(1e-15));
    CHECK(step.image(2) == doctest::Approx(0.0125).epsilon(1e-15));
}

TEST_CASE("local invariant manifolds are preserved exactly") {
    const auto model = fixtures::polynomial_model();
    const auto on_wu = apply_T0(model, SplitVector(0.0, 0.3, Vec::Zero(1)));
    CHECK(on_wu.image(0) == 0.0);
    CHECK(on_wu.image(2) == 0.0);
    const auto on_ws = apply_T0(model, SplitVector(0.3, 0.0, Vec::Constant(1, 0.1)));
    CHECK(on_ws.image(1) == 0.0);
}

TEST_CASE("non-symmetric polynomial family matches its closed form") {
    const auto m = fixtures::default_multipliers();
    const auto model = build_model(m, 3, {NonlinearityKind::polynomial, 0.05}, Vec::Constant(1, -1.0), false);
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const Vec p = fixtures::random_point(rng, 3, 1.0);
        CHECK((model.nonlinear(p) - raw_polynomial(0.05, p)).cwiseAbs().maxCoeff() < 1e-15);
    }
    CHECK(model.nonlinear(pt(0.3, 0.0, 0.1))(1) == 0.0);
    CHECK(model.nonlinear_jacobian(pt(0.3, 0.0, 0.1))(1, 1) == 0.0);
}

TEST_CASE("symmetric polynomial family is the R-average of the closed form") {
    const auto model = fixtures::polynomial_model();
    std::mt19937_64 rng(12);
    for (int i = 0; i < 100; ++i) {
        const Vec p = fixtures::random_point(rng, 3, 1.0);
        const Vec rp = model.reflect(p);
        const Vec expected = 0.5 * (raw_polynomial(0.05, p) + model.reflect(raw_polynomial(0.05, rp)));
        CHECK((model.nonlinear(p) - expected).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("nonlinear Jacobian agrees with central differences") {
    const auto model = fixtures::polynomial_model(0.05, 4);
    std::mt19937_64 rng(13);
    for (int i = 0; i < 20; ++i) {
        const Vec p = fixtures::random_point(rng, 4, 0.9);
        const Mat fd = fd_jacobian([&](const Vec& q) { return model.map(q); }, p, Vec::Constant(4, 1e-6));
        CHECK((model.step(p).jacobian - fd).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("normal-form identities on a grid, both tiers and dimensions") {
    for (int dim : {3, 4}) {
        for (const auto& model : {fixtures::linear_model(dim), fixtures::polynomial_model(0.05, dim)}) {
            double worst = 0.0;
            const int n = dim == 3 ? 10 : 6;
            Vec idx = Vec::Zero(dim);
            const auto level = [&](int i) { return -1.0 + 2.0 * i / (n - 1); };
            for (long flat = 0; flat < std::lround(std::pow(n, dim)); ++flat) {
                long r = flat;
                Vec p(dim);
                for (int c = 0; c < dim; ++c, r /= n) p(c) = level(static_cast<int>(r % n));
                const double x = p(0), y = p(1);
                const Vec z = p.tail(dim - 2);
                Vec wu = Vec::Zero(dim), ws = p, xy = Vec::Zero(dim);
                wu(1) = y;
                ws(1) = 0.0;
                xy(0) = x;
                xy(1) = y;
                const Vec f_wu = model.nonlinear(wu), f_ws = model.nonlinear(ws), f_xy = model.nonlinear(xy);
                const Mat j_wu = model.nonlinear_jacobian(wu), j_ws = model.nonlinear_jacobian(ws);
                worst = std::max({worst, std::abs(f_wu(0)), f_wu.tail(dim - 2).cwiseAbs().maxCoeff(),
                                  std::abs(f_ws(1)), std::abs(f_ws(0)), std::abs(f_wu(1)),
                                  std::abs(j_wu(0, 0)), j_wu.col(0).tail(dim - 2).cwiseAbs().maxCoeff(),
                                  std::abs(j_ws(1, 1)), f_xy.tail(dim - 2).cwiseAbs().maxCoeff(),
                                  std::abs(f_xy(0))});
                (void)z;
            }
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("symmetry: definition, involution and commutation") {
    const auto model = fixtures::polynomial_model();
    const auto r = apply_symmetry(model, SplitVector(0.1, 0.2, Vec::Constant(1, 0.3)));
    CHECK(r.x == 0.1);
    CHECK(r.y == -0.2);
    CHECK(r.z(0) == -0.3);
    std::mt19937_64 rng(14);
    for (int i = 0; i < 100; ++i) {
        const Vec p = fixtures::random_point(rng, 3, 0.4);
        CHECK((model.reflect(model.reflect(p)) - p).norm() == 0.0);
        CHECK((model.reflect(model.map(p)) - model.map(model.reflect(p))).cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto plain = build_model(fixtures::default_multipliers(), 3, {}, Vec::Constant(1, -1.0), false);
    CHECK_THROWS_AS(apply_symmetry(plain, SplitVector(0.1, 0.2, Vec::Constant(1, 0.3))), ContractError);
}

TEST_CASE("box contract") {
    CHECK_THROWS_AS(apply_T0(fixtures::linear_model(), SplitVector(0.1, 1.5, Vec::Zero(1))), DomainError);
}

TEST_CASE("multiplier chain violations are named") {
    auto m = fixtures::default_multipliers();
    m.gamma = 1.5;  // 0.55 * 1.5 < 1
    try {
        (void)build_model(m, 3, {}, Vec::Constant(1, -1.0));
        FAIL("expected ModelError");
    } catch (const ModelError& e) {
        CHECK(std::string(e.what()).find("|lambda*gamma|") != std::string::npos);
    }
    m = fixtures::default_multipliers();
    m.strong(0) = 0.6;
    CHECK_THROWS_AS((void)build_model(m, 3, {}, Vec::Constant(1, -1.0)), ModelError);
    CHECK_THROWS_AS((void)build_model(fixtures::default_multipliers(), 3, {}, Vec::Constant(1, 1.0)), ModelError);
}

TEST_CASE("C3 margins") {
    const auto ok = check_conditions(fixtures::linear_model(), fixtures::cycle_coeffs());
    CHECK(ok.c3_ok);
    auto m = fixtures::default_multipliers();
    m.lambda = 0.7;
    m.lambda_hat = 0.5;
    const auto bad = check_conditions(build_model(m, 3, {}, Vec::Constant(1, -1.0)), fixtures::cycle_coeffs());
    CHECK_FALSE(bad.c3_ok);
    bool named = false;
    for (const auto& mg : bad.margins)
        if (mg.name.find("2/3") != std::string::npos) {
            named = true;
            // 0.7 * 2.2^(2/3) - 1
            CHECK(mg.value == doctest::Approx(0.7 * std::cbrt(2.2 * 2.2) - 1.0).epsilon(1e-12));
            CHECK_FALSE(mg.ok);
        }
    CHECK(named);
}

TEST_CASE("C4 gap is the x+ distance of two tangencies") {
    auto k2 = fixtures::cycle_coeffs();
    k2.x_plus = 0.43;
    const auto plain = build_model(fixtures::default_multipliers(), 3, {}, Vec::Constant(1, -1.0), false);
    CHECK(check_conditions(plain, fixtures::cycle_coeffs(), k2).c4_leaf_gap == doctest::Approx(0.03).epsilon(1e-12));
    // a symmetric model carries one tangency up to R, so there is no gap to report
    CHECK(check_conditions(fixtures::linear_model(), fixtures::cycle_coeffs(), k2).c4_leaf_gap == 0.0);
}
