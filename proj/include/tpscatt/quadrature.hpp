#pragma once

#include <complex>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tpscatt::quad {

using Complex = std::complex<double>;

enum class Extrapolation { richardson, none };

/// Controls for the regularized Brillouin-zone integrators.
///
/// Integrals of the form  lim_{eta->0+} (1/2pi) \int dq f(q) / (E + 2 cos q + i eta)
/// are evaluated on a ladder of finite eta values (periodic trapezoid rule with
/// pole-adaptive panel subdivision) and then extrapolated to eta = 0.
struct QuadratureConfig {
    std::vector<double> eta_sequence = default_eta_sequence();
    int panel_count = 256;          // base panels per period, rounded up to a power of 2
    Extrapolation extrapolation = Extrapolation::richardson;
    double tolerance = 1e-6;        // absolute target for final extrapolated values
    int max_doublings = 10;

    static std::vector<double> default_eta_sequence();  // 8 values, 1e-1 down by factor 2
    void validate() const;                              // throws std::invalid_argument
    std::size_t hash() const;                           // exact-bit hash, memo key component
};

struct EtaPoint {
    double eta;
    Complex value;
};

struct IntegralResult {
    Complex value{};
    double error_estimate = 0.0;
    std::vector<EtaPoint> eta_trace;  // strictly decreasing in eta
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<EtaPoint> trace = {})
        : std::runtime_error(what), trace_(std::move(trace)) {}
    const std::vector<EtaPoint>& trace() const { return trace_; }

private:
    std::vector<EtaPoint> trace_;
};

/// 1D regularized BZ integral with eta extrapolation.
IntegralResult bz_integrate_1d(const std::function<Complex(double)>& f, double E,
                               const QuadratureConfig& cfg = {});

/// 2D version: lim (1/2pi)^2 \iint dq1 dq2 f(q1,q2) / (E + 2cos q1 + 2cos q2 + i eta),
/// evaluated as a nested integral (inner q2 carries the pole at fixed q1).
IntegralResult bz_integrate_2d(const std::function<Complex(double, double)>& f, double E,
                               const QuadratureConfig& cfg = {});

/// Independent evaluation route: explicit principal value plus the on-shell
/// delta-shell term (Sokhotski-Plemelj). Used to cross-check eta extrapolation.
IntegralResult principal_value_split(const std::function<Complex(double)>& f, double E,
                                     const QuadratureConfig& cfg = {});

// ---------------------------------------------------------------------------
// Building blocks used by the physics layers. Integrands are "batched": one
// call fills `width` components, so families of integrals sharing the same
// pole structure (a resolvent at sites l and l+1, or a whole far-field
// window) are evaluated in a single adaptive pass.
// ---------------------------------------------------------------------------

using BatchFn = std::function<void(double q, std::span<Complex> out)>;
using BatchFn2D = std::function<void(double q1, double q2, std::span<Complex> out)>;

struct BatchResult {
    std::vector<Complex> values;
    double error_estimate = 0.0;
};

/// Plain periodic integral (1/2pi) \int_{-pi}^{pi} dq f(q) with adaptive dyadic
/// refinement. Panels within `feature_scale` of a feature momentum are
/// subdivided 8x. Set `parallel` when f is expensive (contains inner
/// integrals); node evaluations then run on worker threads with a fixed
/// reduction order, so results stay deterministic.
BatchResult periodic_integrate(const BatchFn& f, std::size_t width, const QuadratureConfig& cfg,
                               std::span<const double> features = {}, double feature_scale = 0.0,
                               bool parallel = false,
                               const std::function<double()>& noise_floor = {});

/// Resolvent-style integral (1/2pi) \int dq f(q) / (E + 2 cos q + i eta) with
/// the integrand samples cached on the dyadic grids, so evaluations at many
/// energies (the inner loop of every nested integral here) reuse them.
/// f must be pure; eval() is safe to call concurrently.
class PoleResolvent {
public:
    PoleResolvent(BatchFn f, std::size_t width);
    BatchResult eval(double E, double eta, const QuadratureConfig& cfg) const;
    std::size_t width() const { return width_; }

private:
    std::span<const Complex> grid_values(int n, std::vector<Complex>& scratch) const;

    BatchFn f_;
    std::size_t width_;
    mutable std::mutex mu_;
    mutable std::map<int, std::vector<Complex>> cache_;  // grid size -> node-major samples
};

/// One-shot wrapper around PoleResolvent for a single (E, eta).
BatchResult regularized_1d(const BatchFn& f, std::size_t width, double E, double eta,
                           const QuadratureConfig& cfg);

/// Nested evaluation of I[a*wv+b] = (1/2pi)^2 \iint u(q1)[a] v(q2)[b] /
/// (E + 2cos q1 + 2cos q2 + i eta). Covers every kernel-type integral in the
/// two lattice models; the inner resolvent over v is cached across outer nodes.
BatchResult regularized_2d_outer_product(const BatchFn& u, std::size_t wu, const BatchFn& v,
                                         std::size_t wv, double E, double eta,
                                         const QuadratureConfig& cfg);

/// General (non-separable) nested 2D integral at one fixed eta.
BatchResult regularized_2d(const BatchFn2D& f, std::size_t width, double E, double eta,
                           const QuadratureConfig& cfg);

/// Polynomial (Neville) extrapolation of an eta ladder to eta = 0.
struct Extrapolated {
    Complex value{};
    double error_estimate = 0.0;
};
Extrapolated extrapolate_eta(std::span<const EtaPoint> points);

/// Extrapolate according to cfg.extrapolation (none = take the smallest-eta point).
Extrapolated extrapolate(std::span<const EtaPoint> points, const QuadratureConfig& cfg);

/// Momenta where E + 2 cos q vanishes (empty if |E| >= 2).
std::vector<double> on_shell_momenta(double E);

/// Worker threads used by parallel outer loops (TPSCATT_THREADS, default =
/// hardware concurrency).
int worker_threads();

}  // namespace tpscatt::quad
