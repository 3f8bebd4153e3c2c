#include "doctest.h"
#include "fixtures.hpp"

#include "hetdim/global_map.hpp"
#include "hetdim/numerics.hpp"

#include <cmath>
#include <random>

using namespace hetdim;
using fixtures::Vec;

TEST_CASE("tangency source maps to its target") {
    const auto k = fixtures::cycle_coeffs();
    const auto img = apply_T1(k, SplitVector(0.0, 0.2, Vec::Zero(1))).image;
    CHECK(img(0) == 0.4);
    CHECK(img(1) == 0.0);
    CHECK(img(2) == 0.03);
}

TEST_CASE("unstable manifold maps to a parabola touching the stable one") {
    const auto k = fixtures::cycle_coeffs();
    for (double t : {-0.04, -0.01, 0.003, 0.02}) {
        const auto step = apply_T1(k, SplitVector(0.0, 0.2 + t, Vec::Zero(1)));
        CHECK(step.image(1) == doctest::Approx(2.0 * t * t).epsilon(1e-12));
    }
    CHECK(apply_T1(k, SplitVector(0.0, 0.2, Vec::Zero(1))).jacobian(1, 1) == 0.0);
    // second y-derivative along W^u_loc is 2d
    const auto g = [&](double t) { return apply_T1(k, SplitVector(0.0, 0.2 + t, Vec::Zero(1))).image(1); };
    const double h = 1e-3;
    CHECK((g(h) - 2 * g(0) + g(-h)) / (h * h) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("symmetric twin is the conjugate by R") {
    const auto model = fixtures::polynomial_model();
    auto k = fixtures::cycle_coeffs();
    k.h.e3 = 0.7;
    k.mu = 1e-3;
    const auto src = apply_T1_symmetric(model, k, SplitVector(0.0, -0.2, Vec::Zero(1))).image;
    CHECK(src(0) == doctest::Approx(0.4));
    CHECK(src(1) == doctest::Approx(-1e-3));
    CHECK(src(2) == doctest::Approx(-0.03));
    std::mt19937_64 rng(21);
    for (int i = 0; i < 100; ++i) {
        Vec p = fixtures::random_point(rng, 3, 0.04);
        p(1) -= 0.2;
        const Vec twin = apply_T1_symmetric(model, k, SplitVector::from_flat(p)).image;
        const Vec conj = model.reflect(apply_T1(k, SplitVector::from_flat(model.reflect(p))).image);
        CHECK((twin - conj).cwiseAbs().maxCoeff() < 1e-12);
        const double t = p(1) + 0.2;
        if (p(0) == 0.0) CHECK(twin(1) == doctest::Approx(-1e-3 - 2.0 * t * t));
    }
    const double t = 0.01;
    const auto on_wu = apply_T1_symmetric(model, k, SplitVector(0.0, -0.2 + t, Vec::Zero(1))).image;
    // R sends the offset t to -t, so the cubic term changes sign
    CHECK(on_wu(1) == doctest::Approx(-1e-3 - 2.0 * t * t + 0.7 * t * t * t).epsilon(1e-12));
}

TEST_CASE("domain of the global map") {
    const auto k = fixtures::cycle_coeffs();
    CHECK_THROWS_AS(apply_T1(k, SplitVector(0.0, 0.3, Vec::Zero(1))), DomainError);
    CHECK_THROWS_AS(apply_T1(k, SplitVector(0.2, 0.2, Vec::Zero(1))), DomainError);
}

TEST_CASE("first return composes the closed forms in the linear tier") {
    const auto model = fixtures::linear_model();
    auto k = fixtures::cycle_coeffs();
    k.mu = 2e-4;
    const int stay = 8;
    const SplitVector p(0.41, 0.2 * std::pow(2.2, -stay) + 1e-6, Vec::Constant(1, 0.02));
    const auto fr = first_return(model, k, p, stay);
    // T1 applied by hand to (lambda^k x, gamma^k y, A^k z)
    const double x1 = std::pow(0.55, stay) * p.x;
    const double t = std::pow(2.2, stay) * p.y - 0.2;
    const double z1 = std::pow(0.25, stay) * p.z(0);
    CHECK(fr.image(0) == doctest::Approx(0.4 + 0.1 * x1 + 0.5 * t).epsilon(1e-13));
    CHECK(fr.image(1) == doctest::Approx(2e-4 + 0.5 * x1 + 2.0 * t * t).epsilon(1e-12));
    CHECK(fr.image(2) == doctest::Approx(0.03 + 0.5 * z1).epsilon(1e-13));
    const Mat fd = fd_jacobian([&](const Vec& q) { return first_return(model, k, SplitVector::from_flat(q), stay).image; },
                               p.flat(), Vec::Constant(3, 1e-9));
    CHECK(((fr.jacobian - fd).cwiseAbs().array() / (1.0 + fd.cwiseAbs().array())).maxCoeff() < 1e-6);
}

TEST_CASE("first return determinant on the (x, y) block") {
    const auto model = fixtures::linear_model();
    const auto k = fixtures::cycle_coeffs();
    for (int stay : {12, 16, 20}) {
        const SplitVector p(0.4, 0.2 * std::pow(2.2, -stay), Vec::Constant(1, 0.03));
        const auto fr = first_return(model, k, p, stay);
        const double det = fr.jacobian.topLeftCorner(2, 2).determinant();
        CHECK(det / (-0.25 * std::pow(0.55 * 2.2, stay)) == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("itinerary violations are reported") {
    const auto model = fixtures::linear_model();
    const auto k = fixtures::cycle_coeffs();
    CHECK_THROWS_AS(first_return(model, k, SplitVector(0.4, 0.2 * std::pow(2.2, -10), Vec::Constant(1, 0.03)), 12),
                    DomainError);
}

TEST_CASE("strips and stay numbers") {
    const auto model = fixtures::linear_model();
    const auto k = fixtures::cycle_coeffs();
    const int kstar = min_stay(model, k);
    // smallest k with 2.2^-k * 0.3 < 0.1
    CHECK(kstar == 2);
    for (int stay = std::max(kstar, 4); stay <= 30; ++stay) {
        const auto s = locate_strip(model, k, SplitVector(0.4, 0.2 * std::pow(2.2, -stay), Vec::Constant(1, 0.03)));
        REQUIRE(s.has_value());
        CHECK(s->k == stay);
    }
    CHECK_FALSE(locate_strip(model, k, SplitVector(0.4, 0.0, Vec::Constant(1, 0.03))).has_value());
}

TEST_CASE("strip membership is single valued and geometric") {
    const auto model = fixtures::linear_model();
    const auto k = fixtures::cycle_coeffs();
    std::vector<std::pair<double, double>> ranges;
    for (int stay = 6; stay <= 12; ++stay) {
        const auto s = locate_strip(model, k, SplitVector(0.4, 0.2 * std::pow(2.2, -stay), Vec::Constant(1, 0.03)));
        REQUIRE(s.has_value());
        ranges.push_back(s->y_range);
    }
    for (std::size_t i = 1; i < ranges.size(); ++i) {
        CHECK(ranges[i].second < ranges[i - 1].first);
        const double ratio = (ranges[i].second - ranges[i].first) / (ranges[i - 1].second - ranges[i - 1].first);
        CHECK(ratio == doctest::Approx(1.0 / 2.2).epsilon(1e-9));
    }
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) {
            const double x = 0.3 + 0.2 * i / 99.0;
            const double y = 1e-6 + 0.02 * j / 99.0;
            const auto s = locate_strip(model, k, SplitVector(x, y, Vec::Constant(1, 0.03)));
            if (!s) continue;
            int hits = 0;
            for (const auto& r : ranges) hits += (y >= r.first && y <= r.second) ? 1 : 0;
            CHECK(hits <= 1);
        }
}
