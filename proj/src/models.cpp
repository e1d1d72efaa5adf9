#include "tpscatt/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tpscatt {

namespace {

constexpr double kPi = std::numbers::pi;

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite");
}

// Tail factors z with 0 < |z| < 1 correspond to normalizable states with
// energy -(z + 1/z) outside the band.
bool admissible_tail(double z) {
    return std::isfinite(z) && std::fabs(z) > 1e-14 && std::fabs(z) < 1.0 - 1e-12;
}

}  // namespace

ParallelModel::ParallelModel(double eI, double eII, double gI, double gII, double l)
    : eps_I(eI), eps_II(eII), gamma_I(gI), gamma_II(gII), lambda(l) {
    require_finite(eps_I, "eps_I");
    require_finite(eps_II, "eps_II");
    require_finite(gamma_I, "gamma_I");
    require_finite(gamma_II, "gamma_II");
    require_finite(lambda, "lambda");
    if (!(gamma_I > 0.0) || !(gamma_II > 0.0))
        throw std::invalid_argument("ParallelModel: gamma_I and gamma_II must be > 0");
    if (lambda < 0.0) throw std::invalid_argument("ParallelModel: lambda must be >= 0");
}

SideDotModel::SideDotModel(double e, double g, double u) : eps_d(e), gamma(g), U(u) {
    require_finite(eps_d, "eps_d");
    require_finite(gamma, "gamma");
    require_finite(U, "U");
    if (!(gamma > 0.0)) throw std::invalid_argument("SideDotModel: gamma must be > 0");
    if (U < 0.0) throw std::invalid_argument("SideDotModel: U must be >= 0");
}

Momentum::Momentum(double k) : k_(k) {
    if (!std::isfinite(k)) throw std::domain_error("Momentum: k must be finite");
    double a = std::fabs(k);
    if (!(a > 0.0) || !(a < kPi))
        throw std::domain_error("Momentum: |k| must lie strictly inside (0, pi)");
}

double dispersion(Momentum k) { return -2.0 * std::cos(k.value()); }

Momentum on_shell_momentum(double E) {
    if (!(std::fabs(E) < 2.0))
        throw std::domain_error("on_shell_momentum: energy outside the band (-2, 2)");
    return Momentum(std::acos(-E / 2.0));
}

long SideSite::index() const {
    if (dot_) throw std::domain_error("SideSite: the dot carries no wire index");
    return l_;
}

Amplitudes parallel_amplitudes(const ParallelModel& m, Branch b, Momentum k) {
    const double ka = k.magnitude();
    const double g2 = m.gamma(b) * m.gamma(b);
    const double s = std::sin(ka), c = std::cos(ka);
    const Complex den(2.0 * g2 * c - m.eps(b) - 2.0 * c, 2.0 * g2 * s);
    if (std::abs(den) < 1e-300)
        throw std::runtime_error("parallel_amplitudes: transmission denominator vanished");
    const Complex t = Complex(0.0, 2.0 * g2 * s) / den;
    return {t, t - 1.0};
}

Amplitudes sidedot_amplitudes(const SideDotModel& m, Momentum k) {
    const double ka = k.magnitude();
    const double s = std::sin(ka), c = std::cos(ka);
    const double a = 2.0 * (2.0 * c + m.eps_d) * s;
    const Complex den(m.gamma * m.gamma, a);
    const Complex t = Complex(0.0, a) / den;
    return {t, t - 1.0};
}

Complex parallel_wavefunction(const ParallelModel& m, Branch b, Momentum k, long l) {
    if (k.value() < 0) return parallel_wavefunction(m, b, Momentum(-k.value()), -l);
    const double ka = k.value();
    const Amplitudes a = parallel_amplitudes(m, b, k);
    if (l <= -1) return std::polar(1.0, ka * l) + a.r * std::polar(1.0, -ka * l);
    if (l == 0) return (1.0 + a.r) / m.gamma(b);
    return a.t * std::polar(1.0, ka * l);
}

Complex sidedot_wavefunction(const SideDotModel& m, Momentum k, SideSite site) {
    if (k.value() < 0) return sidedot_wavefunction(m, Momentum(-k.value()), site.mirrored());
    const double ka = k.value();
    const double s = std::sin(ka), c = std::cos(ka);
    if (site.is_dot()) {
        // gamma t_k / (eps_d + 2 cos k) with the vanishing factor cancelled, so
        // the value stays finite and continuous across E_k = eps_d.
        const Complex den(m.gamma * m.gamma, 2.0 * (2.0 * c + m.eps_d) * s);
        return Complex(0.0, 2.0 * m.gamma * s) / den;
    }
    const Amplitudes a = sidedot_amplitudes(m, k);
    const long l = site.index();
    if (l <= 0) return std::polar(1.0, ka * l) + a.r * std::polar(1.0, -ka * l);
    return a.t * std::polar(1.0, ka * l);
}

namespace {

BoundState parallel_bound_from_tail(const ParallelModel& m, Branch b, double z) {
    const double energy = -(z + 1.0 / z);
    const double g = m.gamma(b);
    // Wire amplitude 1 on z^|l| (|l| >= 1), impurity-site amplitude fixed by
    // the l = +-1 Schroedinger rows: phi(0) = 1/gamma.
    const double b0 = 1.0 / g;
    const double norm2 = 2.0 * z * z / (1.0 - z * z) + b0 * b0;
    const double n = 1.0 / std::sqrt(norm2);
    return {energy, z, n, n * b0};
}

BoundState sidedot_bound_from_tail(const SideDotModel& m, double z) {
    const double energy = -(z + 1.0 / z);
    const double d0 = m.gamma / (m.eps_d - energy);  // dot amplitude relative to wire
    const double norm2 = (1.0 + z * z) / (1.0 - z * z) + d0 * d0;
    const double n = 1.0 / std::sqrt(norm2);
    return {energy, z, n, n * d0};
}

}  // namespace

std::vector<BoundState> parallel_bound_states(const ParallelModel& m, Branch b) {
    const double g2 = m.gamma(b) * m.gamma(b);
    const double a = 1.0 - 2.0 * g2;
    const double eps = m.eps(b);
    std::vector<double> tails;
    if (std::fabs(a) < 1e-14) {
        if (std::fabs(eps) > 0.0) tails.push_back(-1.0 / eps);
    } else {
        const double disc = eps * eps - 4.0 * a;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            tails.push_back((-eps + sq) / (2.0 * a));
            tails.push_back((-eps - sq) / (2.0 * a));
        }
    }
    std::vector<BoundState> out;
    for (double z : tails)
        if (admissible_tail(z)) out.push_back(parallel_bound_from_tail(m, b, z));
    return out;
}

std::vector<BoundState> sidedot_bound_states(const SideDotModel& m) {
    // Tail equation z^4 + eps_d z^3 + gamma^2 z^2 - eps_d z - 1 = 0; real roots
    // inside the unit interval on either side are located by sign-scan bisection.
    auto p = [&](double z) {
        return (((z + m.eps_d) * z + m.gamma * m.gamma) * z - m.eps_d) * z - 1.0;
    };
    std::vector<BoundState> out;
    const int segments = 400;
    for (double lo0 : {-1.0 + 1e-12, 1e-12}) {
        const double hi0 = lo0 + 1.0 - 2e-12;
        double prev = p(lo0);
        for (int i = 1; i <= segments; ++i) {
            const double x = lo0 + (hi0 - lo0) * i / segments;
            const double cur = p(x);
            if ((prev < 0) != (cur < 0)) {
                double lo = lo0 + (hi0 - lo0) * (i - 1) / segments, hi = x;
                for (int it = 0; it < 200; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    if ((p(lo) < 0) != (p(mid) < 0))
                        hi = mid;
                    else
                        lo = mid;
                }
                const double z = 0.5 * (lo + hi);
                if (admissible_tail(z)) out.push_back(sidedot_bound_from_tail(m, z));
            }
            prev = cur;
        }
    }
    return out;
}

std::vector<double> bound_state_scan(const ParallelModel& m, Branch b) {
    std::vector<double> e;
    for (const auto& bs : parallel_bound_states(m, b)) e.push_back(bs.energy);
    return e;
}

std::vector<double> bound_state_scan(const SideDotModel& m) {
    std::vector<double> e;
    for (const auto& bs : sidedot_bound_states(m)) e.push_back(bs.energy);
    return e;
}

}  // namespace tpscatt
