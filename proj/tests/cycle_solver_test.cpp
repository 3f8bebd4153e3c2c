#include "doctest.h"
#include "fixtures.hpp"

#include "hetdim/cycle_solver.hpp"
#include "hetdim/global_map.hpp"
#include "hetdim/local_map.hpp"

#include <cmath>

using namespace hetdim;
using fixtures::Vec;

namespace {

// Independent forward oracle: raw T1 formula after stay steps of T0.
Vec forward(const SaddleModel& model, GlobalMapCoeffs k, double mu, const SplitVector& p, int stay) {
    k.mu = mu;
    const auto orb = iterate_local(model, p, stay);
    return t1_formula(k, orb.end).image;
}

const CycleCertificate& symmetric_16_12() {
    static const CycleCertificate cert = solve_hetdim_symmetric(fixtures::linear_model(), fixtures::cycle_coeffs(), 16, 12);
    return cert;
}

}  // namespace

TEST_CASE("period-two orbit closes under forward iteration") {
    const auto model = fixtures::polynomial_model();
    const auto coeffs = fixtures::cycle_coeffs();
    const int k = 16, m = 12;
    const double mu = solve_period2_with_s(model, coeffs, k, m, 0.0).mu;
    const auto orbit = solve_period2(model, coeffs, k, m, mu);
    CHECK(orbit.closure_residual < 1e-11);
    CHECK(orbit.leg_residual < 1e-11);
    CHECK((forward(model, coeffs, mu, orbit.q01, k) - orbit.q02.flat()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((forward(model, coeffs, mu, orbit.q02, m) - orbit.q01.flat()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(orbit.eta1 == doctest::Approx(orbit.q11.y - 0.2).epsilon(1e-12));
    CHECK(orbit.eta2 == doctest::Approx(orbit.q12.y - 0.2).epsilon(1e-6));
}

TEST_CASE("dominant offset follows the square-root scaling") {
    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    for (auto [k, m] : {std::pair{16, 12}, std::pair{24, 18}}) {
        const auto orbit = solve_period2_with_s(model, coeffs, k, m, 0.0).orbit;
        // c d x+ > 0: the offset after the long stay carries lambda^{m/2} sqrt(c x+ / d)
        const double scale = std::pow(0.55, m / 2.0) * std::sqrt(0.5 * 0.4 / 2.0);
        CHECK(std::abs(orbit.eta1) / scale == doctest::Approx(1.0).epsilon(0.05));
        CHECK(std::abs(orbit.eta2) < 1e-3 * std::abs(orbit.eta1));
    }
}

TEST_CASE("index of the saddle and of solved orbits") {
    Mat o = Mat::Zero(3, 3);
    o.diagonal() << 0.55, 2.2, 0.25;
    CHECK(matrix_index(o) == 1);
    Mat near = o;
    near(0, 0) = 1.0 + 1e-10;
    CHECK_THROWS_AS(matrix_index(near), AmbiguousIndexError);

    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    CHECK(orbit_index(solve_period2_with_s(model, coeffs, 18, 14, 0.0).orbit) == 2);
    for (double s : {-2.0, 2.0}) {
        const auto orbit = solve_period2_with_s(model, coeffs, 18, 14, s).orbit;
        CHECK(orbit_index(orbit) != 2);
        CHECK(index2_criterion(model, orbit, coeffs).match);
    }
}

TEST_CASE("index criterion and its trace and determinant reductions") {
    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    for (auto [k, m] : {std::pair{16, 12}, std::pair{20, 16}, std::pair{24, 18}}) {
        for (double s : {-0.9, 0.0, 0.9}) {
            const auto orbit = solve_period2_with_s(model, coeffs, k, m, s).orbit;
            const auto c = index2_criterion(model, orbit, coeffs);
            CHECK(c.match);
            CHECK(c.index == 2);
            CHECK(c.s_measured == doctest::Approx(s).epsilon(1e-8));
            // det over (lambda gamma)^{k+m} stays bounded
            CHECK(std::abs(c.det_measured) / std::pow(0.55 * 2.2, k + m) < 1.0);
            if (m >= 16) {
                CHECK(std::abs(c.det_measured / c.det_predicted - 1.0) < 0.1);
                CHECK(std::abs(c.trace_measured - c.trace_predicted) /
                          std::max(std::abs(c.trace_predicted), 1.0 + c.det_predicted) <
                      0.1);
            }
        }
    }
}

TEST_CASE("symmetric cycle certificate") {
    const auto& cert = symmetric_16_12();
    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    CHECK(cert.index == 2);
    CHECK(std::abs(cert.quasi.gap) < 1e-8);
    CHECK(cert.orbit.closure_residual < 1e-10);
    CHECK(cert.orbit.leg_residual < 1e-11);
    const auto& th = cert.theta_decomposition;
    CHECK(std::abs(cert.theta - (th.m_over_k - th.c_star / (16 * std::log(cert.gamma)))) < 1e-10);
    CHECK(cert.theta == doctest::Approx(-std::log(cert.lambda) / std::log(cert.gamma)).epsilon(1e-14));
    CHECK(cert.product == doctest::Approx(std::pow(cert.lambda, 16) * std::pow(cert.gamma, 12)).epsilon(1e-12));
    CHECK(cert.product_reference == doctest::Approx(2 * 0.2 / (0.5 * 0.4)).epsilon(1e-14));
    CHECK(std::abs(cert.product / cert.product_reference - 1.0) < 0.1);
    REQUIRE(cert.transverse.has_value());
    CHECK(cert.transverse->iterations_used <= cert.transverse->iteration_bound);
    CHECK(std::abs(cert.transverse->slope) > 1e-6);
    for (const auto& c : certificate_checks(cycle_setting(model, coeffs, std::nullopt, cert), cert)) {
        INFO(c.name);
        CHECK(c.pass);
    }
}

TEST_CASE("mirrored certificate is valid for the twin map") {
    const auto& cert = symmetric_16_12();
    const auto model = fixtures::linear_model().with_gamma(cert.gamma);
    auto coeffs = fixtures::cycle_coeffs();
    coeffs.mu = cert.mu;
    const auto r = [&](const SplitVector& p) { return SplitVector::from_flat(model.reflect(p.flat())); };
    const auto& o = cert.orbit;
    const auto leg = [&](const SplitVector& from, const SplitVector& to, int stay) {
        const auto local = iterate_local(model, r(from), stay);
        const auto img = apply_T1_symmetric(model, coeffs, local.end_point()).image;
        return (img - r(to).flat()).cwiseAbs().maxCoeff();
    };
    CHECK(leg(o.q01, o.q02, o.k) < 1e-10);
    CHECK(leg(o.q02, o.q01, o.m) < 1e-10);
}

TEST_CASE("gap opens monotonically as mu moves off the solution") {
    const auto& cert = symmetric_16_12();
    const auto model = fixtures::linear_model();
    const auto coeffs = fixtures::cycle_coeffs();
    double previous = std::abs(cert.quasi.gap);
    for (double dmu : {1e-7, 1e-6, 1e-5, 1e-4}) {
        auto moved = cert;
        moved.mu += dmu;
        const auto q = quasi_connection(cycle_setting(model, coeffs, std::nullopt, moved), cert.orbit);
        CHECK(std::abs(q.gap) > previous);
        previous = std::abs(q.gap);
    }
}

TEST_CASE("general solver reproduces the symmetric certificate for R-conjugate tangencies") {
    const auto& sym = symmetric_16_12();
    const auto coeffs = fixtures::cycle_coeffs();
    const auto gen = solve_hetdim_general(fixtures::linear_model(), coeffs, conjugate_z(coeffs, Vec::Constant(1, -1.0)),
                                          16, 12);
    CHECK(std::abs(gen.mu - gen.mu2) < 1e-9);
    CHECK(std::abs(gen.mu - sym.mu) < 1e-9 * std::abs(sym.mu));
    CHECK(std::abs(gen.theta - sym.theta) < 1e-9);
    CHECK_FALSE(gen.mu_shift);
}

TEST_CASE("general solver with distinct curvatures ties mu2 to mu1") {
    const auto coeffs = fixtures::cycle_coeffs();
    auto other = conjugate_z(coeffs, Vec::Constant(1, -1.0));
    other.d = 3.0;
    other.c = 0.7;
    const auto gen = solve_hetdim_general(fixtures::linear_model(), coeffs, other, 16, 12);
    const double eta1 = gen.orbit.eta1;
    CHECK((gen.mu2 - gen.mu) / ((2.0 - 3.0) * eta1 * eta1) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(gen.quasi.gap) < 1e-8);
}

TEST_CASE("negative-ratio case takes the mu2 shift and still closes") {
    auto c1 = fixtures::cycle_coeffs(-0.5);
    auto c2 = conjugate_z(c1, Vec::Constant(1, -1.0));
    const auto model = fixtures::linear_model();
    const auto gen = solve_hetdim_general(model, c1, c2, 16, 12);
    CHECK(gen.mu_shift);
    CHECK(gen.index == 2);
    CHECK(std::abs(gen.quasi.gap) < 1e-8);
    for (const auto& c : certificate_checks(cycle_setting(model, c1, c2, gen), gen, c2)) {
        INFO(c.name);
        CHECK(c.pass);
    }
}

TEST_CASE("contract violations") {
    const auto model = fixtures::linear_model();
    CHECK_THROWS_AS(solve_hetdim_symmetric(model, fixtures::cycle_coeffs(-0.5), 16, 12), ContractError);
    CHECK_THROWS_AS(solve_hetdim_symmetric(model, fixtures::cycle_coeffs(), 15, 12), ContractError);
    CHECK_THROWS_AS(solve_hetdim_symmetric(model, fixtures::cycle_coeffs(), 12, 16), ContractError);
    CHECK_THROWS_AS(solve_hetdim_symmetric(model, fixtures::cycle_coeffs(), 16, 12, 1.0), ContractError);
    auto shifted = fixtures::cycle_coeffs();
    shifted.x_plus = 0.41;
    try {
        (void)solve_hetdim_general(model, fixtures::cycle_coeffs(), shifted, 16, 12);
        FAIL("expected a C4 violation");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("C4") != std::string::npos);
    }
}
