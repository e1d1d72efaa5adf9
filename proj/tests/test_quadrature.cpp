#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "test_oracles.hpp"
#include "tpscatt/quadrature.hpp"

using namespace tpscatt;
using Complex = quad::Complex;
using quad::bz_integrate_1d;
using quad::bz_integrate_2d;
using quad::principal_value_split;
using quad::QuadratureConfig;

namespace {
const double kPi = oracles::kPi;

quad::IntegralResult one_1d(double E, const QuadratureConfig& cfg = {}) {
    return bz_integrate_1d([](double) { return Complex{1.0, 0.0}; }, E, cfg);
}
}  // namespace

TEST_CASE("below-band free resolvent matches the residue oracle") {
    auto r = one_1d(-3.0);
    CHECK(std::fabs(r.value.imag()) < 1e-10);
    // All-negative integrand: the sign-resolved value is -1/sqrt(5).
    CHECK(r.value.real() == doctest::Approx(-1.0 / std::sqrt(5.0)).epsilon(1e-8));
    CHECK(std::abs(r.value - oracles::g_free({-3.0, 0.0})) < 1e-8);
    CHECK(std::fabs(std::abs(r.value) - 1.0 / std::sqrt(5.0)) < 1e-8);
    CHECK(r.eta_trace.size() == 8);
    for (std::size_t i = 1; i < r.eta_trace.size(); ++i)
        CHECK(r.eta_trace[i].eta < r.eta_trace[i - 1].eta);
}

TEST_CASE("band-center local resolvent is -i/2") {
    auto r = one_1d(0.0);
    CHECK(std::abs(r.value - Complex{0.0, -0.5}) < 2e-6);
    CHECK(r.error_estimate < 1e-5);
}

TEST_CASE("in-band resolvent matches -i/sqrt(4-E^2) at generic energies") {
    for (double E : {-1.3, -0.4, 0.7, 1.6}) {
        auto r = one_1d(E);
        CHECK(std::abs(r.value - oracles::g_free({E, 0.0})) < 5e-6);
    }
}

TEST_CASE("odd integrands integrate to zero by grid symmetry") {
    for (double E : {-3.0, 0.4}) {
        auto r = bz_integrate_1d([](double q) { return Complex{std::sin(q) + std::sin(2 * q), 0.0}; },
                                 E);
        CHECK(std::abs(r.value) < 1e-12);
    }
}

TEST_CASE("site-resolved resolvent matches the residue oracle") {
    for (long site : {1L, 3L, -5L}) {
        for (double E : {-2.7, -0.8, 1.1}) {
            auto r = bz_integrate_1d(
                [site](double q) { return std::polar(1.0, q * double(site)); }, E);
            CHECK(std::abs(r.value - oracles::a_free({E, 0.0}, site)) < 1e-5);
        }
    }
}

TEST_CASE("dual-method battery: eta extrapolation vs principal-value split") {
    std::vector<std::pair<const char*, std::function<Complex(double)>>> battery = {
        {"const", [](double) { return Complex{1.0, 0.0}; }},
        {"cos", [](double q) { return Complex{std::cos(q), 0.0}; }},
        {"cos2", [](double q) { return Complex{std::cos(2 * q), 0.0}; }},
        {"smooth", [](double q) { return Complex{std::exp(0.3 * std::cos(q)), 0.0}; }},
        {"complex", [](double q) { return std::polar(1.0, q) * (2.0 + std::cos(q)); }},
    };
    for (auto& [name, f] : battery) {
        for (double E : {-3.0, -1.2, -0.4, 0.0, 0.7, 1.5, 2.7}) {
            CAPTURE(name);
            CAPTURE(E);
            auto a = bz_integrate_1d(f, E);
            auto b = principal_value_split(f, E);
            CHECK(std::abs(a.value - b.value) <
                  std::max(1e-6, 10.0 * (a.error_estimate + b.error_estimate)));
        }
    }
}

TEST_CASE("eta ladder converges monotonically toward the extrapolated value") {
    for (double E : {-2.6, -0.7, 0.9}) {
        auto r = one_1d(E);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& p : r.eta_trace) {
            double d = std::abs(p.value - r.value);
            CHECK(d < prev * 1.0001 + 1e-14);
            prev = d;
        }
    }
}

TEST_CASE("below-band results are real for real parity-even integrands") {
    auto r1 = bz_integrate_1d([](double q) { return Complex{std::cos(q) + 2.0, 0.0}; }, -2.5);
    CHECK(std::fabs(r1.value.imag()) < 1e-10);
    auto r2 = bz_integrate_2d(
        [](double q1, double q2) { return Complex{std::cos(q1) * std::cos(q2) + 1.5, 0.0}; }, -4.7);
    CHECK(std::fabs(r2.value.imag()) < 1e-10);
}

TEST_CASE("2d below-band value matches nested 1d with the residue oracle") {
    const double E = -5.0;
    auto r = bz_integrate_2d([](double, double) { return Complex{1.0, 0.0}; }, E);
    CHECK(std::fabs(r.value.imag()) < 1e-10);
    // (1/2pi) \int dq1 g(E + 2 cos q1), oracle integrand is smooth below band.
    const int n = 8192;
    Complex acc{};
    for (int j = 0; j < n; ++j) {
        double q = -kPi + (j + 0.5) * 2.0 * kPi / n;
        acc += oracles::g_free({E + 2.0 * std::cos(q), 0.0});
    }
    acc /= double(n);
    CHECK(std::abs(r.value - acc) < 1e-7);
}

TEST_CASE("2d open channel has negative imaginary part") {
    auto r = bz_integrate_2d([](double, double) { return Complex{1.0, 0.0}; }, 0.5);
    CHECK(r.value.imag() < -0.05);
}

TEST_CASE("2d odd integrand vanishes") {
    auto r = bz_integrate_2d(
        [](double q1, double q2) { return Complex{std::sin(q1) * (2.0 + std::cos(q2)), 0.0}; },
        -1.0);
    CHECK(std::abs(r.value) < 1e-10);
}

TEST_CASE("2d nesting order is immaterial for separable integrands") {
    auto f = [](double a, double b) {
        return Complex{(1.0 + 0.3 * std::cos(a)) * (1.0 + 0.1 * std::cos(2 * b)), 0.0};
    };
    auto fswap = [&](double a, double b) { return f(b, a); };
    for (double E : {-4.6, -0.9}) {
        auto r1 = bz_integrate_2d(f, E);
        auto r2 = bz_integrate_2d(fswap, E);
        CHECK(std::abs(r1.value - r2.value) <
              std::max(1e-6, 10.0 * (r1.error_estimate + r2.error_estimate)));
    }
}

TEST_CASE("principal value below band reduces to plain quadrature") {
    auto f = [](double q) { return Complex{std::exp(0.2 * std::cos(q)), 0.0}; };
    auto pv = principal_value_split(f, -3.0);
    auto reg = bz_integrate_1d(f, -3.0);
    CHECK(std::abs(pv.value - reg.value) < 1e-8);
    CHECK(pv.eta_trace.empty());
}

TEST_CASE("integrand vanishing on shell kills the delta term") {
    // E = 0 puts the shell at +-pi/2 where cos q = 0; the result is the pure
    // principal value, which for cos q/(2 cos q) is exactly 1/2.
    auto f = [](double q) { return Complex{std::cos(q), 0.0}; };
    auto pv = principal_value_split(f, 0.0);
    CHECK(std::fabs(pv.value.imag()) < 1e-10);
    CHECK(pv.value.real() == doctest::Approx(0.5).epsilon(1e-8));
    auto reg = bz_integrate_1d(f, 0.0);
    CHECK(std::abs(reg.value - pv.value) < 1e-5);
}

TEST_CASE("hopeless tolerances raise a convergence error carrying the trace") {
    QuadratureConfig cfg;
    cfg.tolerance = 1e-15;
    cfg.max_doublings = 1;
    cfg.panel_count = 64;
    auto f = [](double q) { return Complex{std::exp(2.0 * std::cos(7 * q)), 0.0}; };
    CHECK_THROWS_AS((void)bz_integrate_1d(f, 0.3, cfg), quad::ConvergenceError);
}

TEST_CASE("config validation rejects malformed ladders") {
    QuadratureConfig cfg;
    cfg.eta_sequence = {1e-2, 1e-2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.panel_count = 16;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.eta_sequence = {0.1, -0.2};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_NOTHROW(QuadratureConfig{}.validate());
}

TEST_CASE("extrapolation none returns the smallest-eta value") {
    QuadratureConfig cfg;
    cfg.extrapolation = quad::Extrapolation::none;
    cfg.eta_sequence = {0.05};
    auto r = one_1d(-3.0, cfg);
    CHECK(r.eta_trace.size() == 1);
    CHECK(r.value == r.eta_trace[0].value);
}
