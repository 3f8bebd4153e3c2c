#include "doctest.h"
#include "fixtures.hpp"

#include "hetdim/tangency_forge.hpp"

#include <cmath>

using namespace hetdim;
using fixtures::Vec;

namespace {

// Leading-order splitting value of the secondary tangencies.
double asymptote(const GlobalMapCoeffs& k, int stay) {
    if (k.c * k.d * k.x_plus > 0.0) return -k.c * k.x_plus * std::pow(0.55, stay);
    return k.y_minus * std::pow(2.2, -stay);
}

}  // namespace

TEST_CASE("case classification") {
    CHECK(classify_case(fixtures::cycle_coeffs(0.5, 2.0)) == CaseTag::cdx_pos_d_pos);
    CHECK(classify_case(fixtures::cycle_coeffs(-0.5, 2.0)) == CaseTag::cdx_neg_d_pos);
    CHECK(classify_case(fixtures::cycle_coeffs(0.5, -2.0)) == CaseTag::cdx_neg_d_neg);
    CHECK(classify_case(fixtures::cycle_coeffs(-0.5, -2.0)) == CaseTag::cdx_pos_d_neg);
}

TEST_CASE("splitting values approach their asymptotes in both sign cases") {
    for (double c : {0.5, -0.5}) {
        const auto coeffs = fixtures::cycle_coeffs(c);
        for (const auto& model : {fixtures::linear_model(), fixtures::polynomial_model()}) {
            std::array<double, 2> previous{INFINITY, INFINITY};
            for (int k = 12; k <= 24; k += 2) {
                const auto pair = solve_secondary_tangency(model, coeffs, k);
                for (int b = 0; b < 2; ++b) {
                    const double dev = std::abs(pair[b].mu_k / asymptote(coeffs, k) - 1.0);
                    if (k == 12) CHECK(dev < 0.2);
                    CHECK(dev < previous[b]);
                    previous[b] = dev;
                    CHECK(pair[b].residual < 1e-11);
                }
            }
        }
    }
}

TEST_CASE("branch c-signs are opposite and follow the closed form") {
    for (double c : {0.5, -0.5}) {
        for (double d : {2.0, -2.0}) {
            const auto coeffs = fixtures::cycle_coeffs(c, d);
            for (int k = 12; k <= 20; k += 4) {
                const auto pair = solve_secondary_tangency(fixtures::linear_model(), coeffs, k);
                CHECK(pair[0].c_sign == -pair[1].c_sign);
                for (const auto& t : pair) {
                    CHECK(t.c_sign == predicted_c_sign(coeffs, t.branch));
                    const double fd = secondary_c_coefficient(fixtures::linear_model(), coeffs, t);
                    CHECK((fd > 0 ? 1 : -1) == t.c_sign);
                }
            }
        }
    }
}

TEST_CASE("each secondary tangency is a double root along the unstable manifold") {
    const auto coeffs = fixtures::cycle_coeffs(-0.5);
    const auto pair = solve_secondary_tangency(fixtures::polynomial_model(), coeffs, 14);
    for (const auto& t : pair) {
        CHECK(std::abs(t.value) < 1e-9);
        CHECK(std::abs(t.derivative) < 1e-9);
        CHECK(std::abs(t.second_derivative) > 1e-6);
    }
}

TEST_CASE("tangency offsets scale like the square root of the weak rate") {
    const auto coeffs = fixtures::cycle_coeffs(0.5, -2.0);
    const int k = 20;
    const auto pair = solve_secondary_tangency(fixtures::linear_model(), coeffs, k);
    // |Y| ~ lambda^{k/2} sqrt|c x+ / d| in the c d x+ < 0 case
    const double scale = std::pow(0.55, k / 2.0) * std::sqrt(std::abs(0.5 * 0.4 / 2.0));
    for (const auto& t : pair) CHECK(std::abs(t.Y) / scale == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("transverse homoclinic points") {
    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    const double mu = -1e-4;  // mu d < 0
    const auto primary = find_transverse_homoclinics(model, coeffs, mu, {});
    REQUIRE(primary.size() == 2);
    for (const auto& p : primary) {
        CHECK(std::abs(std::abs(p.section(0) - 0.4) - 0.5 * std::sqrt(-mu / 2.0)) < 1e-3);
        CHECK(std::abs(p.slope) > 1e-6);
    }
    // quartets need mu d < -c lambda^K x+ d
    const int K = 16;
    const auto quartet = find_transverse_homoclinics(model, coeffs, mu, {K});
    int count = 0;
    for (const auto& p : quartet) {
        if (p.K != K) continue;
        ++count;
        CHECK(std::abs(p.slope) > 1e-6);
    }
    CHECK(count == 4);
}

TEST_CASE("admissible tangency carries the sign property") {
    const auto model = fixtures::linear_model();
    for (double c : {0.5, -0.5}) {
        const auto coeffs = fixtures::cycle_coeffs(c, -2.0);
        try {
            const auto res = forge_admissible_tangency(model, coeffs, {12, 14, 16, 18});
            CHECK(res.secondary_cxy > 0.0);
            CHECK(res.tangency.straddle_ok);
        } catch (const ScheduleExhaustedError& e) {
            FAIL(e.what());
        }
    }
}
