#include "doctest.h"
#include "fixtures.hpp"

#include "hetdim/local_map.hpp"
#include "hetdim/numerics.hpp"

#include <cmath>
#include <random>

using namespace hetdim;
using fixtures::Vec;

TEST_CASE("linear iteration matches the diagonal closed form") {
    const auto orb = iterate_local(fixtures::linear_model(), SplitVector(0.1, 1e-6, Vec::Constant(1, 0.05)), 4);
    CHECK(orb.end(0) == doctest::Approx(9.150625e-3).epsilon(1e-14));
    CHECK(orb.trajectory.size() == 5);
    CHECK(orb.steps.size() == 4);
}

TEST_CASE("zero stay is the identity") {
    const SplitVector p(0.1, 0.2, Vec::Constant(1, 0.05));
    const auto orb = iterate_local(fixtures::polynomial_model(), p, 0);
    CHECK((orb.end - p.flat()).norm() == 0.0);
    CHECK((orb.jacobian - Mat::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("escape reports the failing step") {
    try {
        (void)iterate_local(fixtures::linear_model(), SplitVector(0.1, 0.01, Vec::Zero(1)), 10);
        FAIL("expected EscapeError");
    } catch (const EscapeError& e) {
        // 0.01 * 2.2^j > 1 first at j = 6
        CHECK(e.step == 6);
    }
}

TEST_CASE("chained Jacobian agrees with finite differences and the step product") {
    const auto model = fixtures::polynomial_model();
    const Vec p = (Vec(3) << 0.3, 1e-3, 0.2).finished();
    const auto orb = iterate_local(model, p, 6);
    const Mat fd = fd_jacobian([&](const Vec& q) { return iterate_local(model, q, 6).end; }, p, Vec::Constant(3, 1e-7));
    CHECK(((orb.jacobian - fd).cwiseAbs().array() / (1.0 + fd.cwiseAbs().array())).maxCoeff() < 1e-6);
    Mat product = Mat::Identity(3, 3);
    for (const auto& s : orb.steps) product = s * product;
    CHECK((product - orb.jacobian).cwiseAbs().maxCoeff() < 1e-12 * orb.jacobian.cwiseAbs().maxCoeff());
}

TEST_CASE("linear cross form is exact") {
    const auto cf = solve_cross_form(fixtures::linear_model(), 0.1, 0.2, Vec::Constant(1, 0.05), 6);
    CHECK(cf.y_0 == doctest::Approx(0.2 / std::pow(2.2, 6)).epsilon(1e-14));
    CHECK(cf.y_0 == doctest::Approx(1.7639810314180537e-3).epsilon(1e-14));
    CHECK(cf.x_k == doctest::Approx(0.1 * std::pow(0.55, 6)).epsilon(1e-14));
    CHECK(cf.z_k(0) == doctest::Approx(0.05 * std::pow(0.25, 6)).epsilon(1e-14));
}

TEST_CASE("cross form round trip for k up to 30, both tiers") {
    for (const auto& model : {fixtures::linear_model(), fixtures::polynomial_model()}) {
        for (int k = 2; k <= 30; k += 2) {
            const auto cf = solve_cross_form(model, 0.4, 0.2, Vec::Constant(1, 0.03), k);
            const auto orb = iterate_local(model, SplitVector(0.4, cf.y_0, Vec::Constant(1, 0.03)), k);
            CHECK(std::abs(orb.end(1) - 0.2) < 1e-11);
            CHECK(std::abs(orb.end(0) - cf.x_k) < 1e-11);
            CHECK(std::abs(orb.end(2) - cf.z_k(0)) < 1e-11);
        }
    }
}

TEST_CASE("polynomial cross form stays within the hat-rate of the linear part") {
    const auto model = fixtures::polynomial_model();
    const int k = 10;
    const auto cf = solve_cross_form(model, 0.4, 0.2, Vec::Constant(1, 0.03), k);
    const double phi = std::abs(cf.x_k - std::pow(0.55, k) * 0.4) / std::pow(0.4, k);
    CHECK(phi < 1.0);
}

TEST_CASE("strong derivative ratios") {
    const SplitVector p(0.4, 1e-4, Vec::Constant(1, 0.03));
    const auto lin = strong_derivative_bounds(fixtures::linear_model(), p, 8);
    CHECK(lin.ratio_x == 0.0);
    CHECK(lin.ratio_z <= 1.0);
    CHECK(lin.ratio_z == doctest::Approx(std::pow(0.25 / 0.29, 8)).epsilon(1e-12));
    double worst = 0.0;
    for (int k = 4; k <= 20; k += 2) {
        const SplitVector q(0.4, 0.2 * std::pow(2.2, -k), Vec::Constant(1, 0.03));
        const auto r = strong_derivative_bounds(fixtures::polynomial_model(), q, k);
        worst = std::max({worst, r.ratio_x, r.ratio_z});
    }
    CHECK(worst < 10.0);
}
