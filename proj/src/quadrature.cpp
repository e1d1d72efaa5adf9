#include "tpscatt/quadrature.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tpscatt::quad {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxGrid = 1 << 16;
// Above this many complex entries a dyadic grid is no longer cached.
constexpr std::size_t kCacheCapEntries = std::size_t(1) << 22;

int pow2ceil(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

double circ_dist(double a, double b) {
    double d = std::fmod(std::fabs(a - b), 2.0 * kPi);
    return std::min(d, 2.0 * kPi - d);
}

// Neumaier-compensated accumulator; keeps long sums deterministic and
// accurate independent of grid size.
struct KahanC {
    double sr = 0, si = 0, cr = 0, ci = 0;
    static void acc(double& s, double& c, double v) {
        double t = s + v;
        if (std::fabs(s) >= std::fabs(v))
            c += (s - t) + v;
        else
            c += (v - t) + s;
        s = t;
    }
    void add(Complex v) {
        acc(sr, cr, v.real());
        acc(si, ci, v.imag());
    }
    Complex get() const { return {sr + cr, si + ci}; }
};

const std::vector<double>& cos_table(int n) {
    static std::mutex mu;
    static std::map<int, std::vector<double>> tables;
    std::lock_guard lk(mu);
    auto it = tables.find(n);
    if (it != tables.end()) return it->second;
    std::vector<double> t(n);
    const double h = 2.0 * kPi / n;
    for (int j = 0; j < n; ++j) t[j] = std::cos(-kPi + j * h);
    return tables.emplace(n, std::move(t)).first->second;
}

// Momentum near which panels need extra resolution, with its length scale.
struct Feature {
    double q;
    double scale;
};

std::vector<int> marked_panels(int n, std::span<const Feature> features) {
    std::vector<int> marked;
    const double h = 2.0 * kPi / n;
    for (const auto& fe : features) {
        int span = int(std::ceil((fe.scale + 0.5 * h) / h)) + 1;
        int jc = int(std::llround((fe.q + kPi) / h));
        for (int d = -span; d <= span; ++d) {
            int j = ((jc + d) % n + n) % n;
            double qj = -kPi + j * h;
            if (circ_dist(qj, fe.q) <= fe.scale + 0.5 * h) marked.push_back(j);
        }
    }
    std::sort(marked.begin(), marked.end());
    marked.erase(std::unique(marked.begin(), marked.end()), marked.end());
    return marked;
}

// Maps raw integrand samples f(q) to the actual summand g(q); the regularized
// path multiplies by the pole factor and subtracts the cotangent terms.
using NodeOp = std::function<void(double q, std::span<const Complex> f, std::span<Complex> g)>;

// Evaluates f at a list of momenta, node-major, optionally in parallel with a
// fixed slot order so results stay deterministic.
void eval_many(const BatchFn& f, std::span<const double> qs, std::size_t width,
               std::vector<Complex>& out, bool parallel) {
    out.resize(qs.size() * width);
    const std::int64_t count = std::int64_t(qs.size());
    if (!parallel || count < 4) {
        for (std::int64_t i = 0; i < count; ++i)
            f(qs[i], std::span<Complex>(out.data() + i * width, width));
        return;
    }
    std::atomic<bool> failed{false};
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_threads())
#endif
    for (std::int64_t i = 0; i < count; ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        try {
            f(qs[i], std::span<Complex>(out.data() + i * width, width));
        } catch (...) {
            failed.store(true, std::memory_order_relaxed);
        }
    }
    if (failed) throw ConvergenceError("integrand evaluation failed inside parallel region");
}

// Geometrically graded subdivision of one panel around the features: leaves
// shrink toward each feature until they resolve its length scale. Midpoint
// positions and weights (relative to the full period measure 1/n per panel).
void graded_leaves(double lo, double hi, std::span<const Feature> features,
                   std::vector<double>& qs, std::vector<double>& ws, int depth = 0) {
    double width = hi - lo;
    double mid = 0.5 * (lo + hi);
    double dist = std::numeric_limits<double>::infinity();
    double scale = width;
    for (const auto& fe : features) {
        double d = circ_dist(mid, fe.q);
        if (d - 0.5 * width < dist) {
            dist = std::max(0.0, d - 0.5 * width);
            scale = fe.scale;
        }
    }
    bool split = width > std::max(scale / 16.0, dist / 4.0) && depth < 48;
    if (!split) {
        qs.push_back(mid);
        ws.push_back(width);
        return;
    }
    graded_leaves(lo, mid, features, qs, ws, depth + 1);
    graded_leaves(mid, hi, features, qs, ws, depth + 1);
}

// Adaptive dyadic periodic quadrature of g = op(f): running node sums are
// carried across doublings, feature panels are re-corrected at every level by
// graded local refinement.
BatchResult adaptive_periodic_core(
    const std::function<std::span<const Complex>(int, std::vector<Complex>&)>& grid_vals,
    const BatchFn& f, std::size_t width, const NodeOp& op, std::span<const Feature> features,
    int n0, const QuadratureConfig& cfg, bool parallel,
    const std::function<double()>& noise_floor = {}) {
    n0 = std::min(pow2ceil(std::max(n0, 8)), kMaxGrid);
    std::vector<KahanC> sum(width);
    std::vector<Complex> prev;
    std::vector<Complex> scratch, subvals, gbuf(width);
    const int n_max = int(std::min<long long>(kMaxGrid, (long long)n0 << cfg.max_doublings));
    double prev_diff = std::numeric_limits<double>::infinity();

    for (int n = n0; n <= n_max; n *= 2) {
        const double h = 2.0 * kPi / n;
        const auto& ct = cos_table(n);
        std::span<const Complex> vals = grid_vals(n, scratch);
        const int step = (n == n0) ? 1 : 2;
        const int start = (n == n0) ? 0 : 1;
        for (int j = start; j < n; j += step) {
            (void)ct;
            op(-kPi + j * h, vals.subspan(std::size_t(j) * width, width), gbuf);
            for (std::size_t c = 0; c < width; ++c) sum[c].add(gbuf[c]);
        }
        // Feature-panel corrections for this level.
        std::vector<KahanC> corr(width);
        auto marked = marked_panels(n, features);
        if (!marked.empty()) {
            std::vector<double> subq, subw;
            std::vector<std::size_t> panel_first(marked.size() + 1);
            for (std::size_t mi = 0; mi < marked.size(); ++mi) {
                panel_first[mi] = subq.size();
                double lo = -kPi + marked[mi] * h - 0.5 * h;
                graded_leaves(lo, lo + h, features, subq, subw);
            }
            panel_first[marked.size()] = subq.size();
            eval_many(f, subq, width, subvals, parallel);
            for (std::size_t mi = 0; mi < marked.size(); ++mi) {
                for (std::size_t s = panel_first[mi]; s < panel_first[mi + 1]; ++s) {
                    op(subq[s], std::span<const Complex>(subvals.data() + s * width, width), gbuf);
                    const double wfrac = subw[s] / h;
                    for (std::size_t c = 0; c < width; ++c) corr[c].add(gbuf[c] * wfrac);
                }
                int j = marked[mi];
                op(-kPi + j * h, vals.subspan(std::size_t(j) * width, width), gbuf);
                for (std::size_t c = 0; c < width; ++c) corr[c].add(-gbuf[c]);
            }
        }
        std::vector<Complex> cur(width);
        double scale = 0.0;
        for (std::size_t c = 0; c < width; ++c) {
            cur[c] = (sum[c].get() + corr[c].get()) / double(n);
            scale = std::max(scale, std::abs(cur[c]));
        }
        if (!prev.empty()) {
            double diff = 0.0;
            for (std::size_t c = 0; c < width; ++c) diff = std::max(diff, std::abs(cur[c] - prev[c]));
            double thr = 0.25 * cfg.tolerance * std::max(1.0, scale);
            // Values assembled from inner integrals carry their jitter; the
            // doubling difference cannot settle below that floor.
            if (noise_floor) thr = std::max(thr, 1.5 * noise_floor());
            if (diff < thr || (n == n_max && diff < 16.0 * thr && diff > 0.75 * prev_diff))
                return {std::move(cur), diff};
            prev_diff = diff;
        }
        prev = std::move(cur);
    }
    throw ConvergenceError("quadrature grid refinement did not converge (grid cap reached)");
}

NodeOp copy_op() {
    return [](double, std::span<const Complex> f, std::span<Complex> g) {
        std::copy(f.begin(), f.end(), g.begin());
    };
}

// Regularized integrand with the pole pair subtracted exactly:
//   g = f(q)/(z + 2 cos q) - rho+ cot((q-qp)/2)/2 - rho- cot((q+qp)/2)/2,
// where qp (Im qp > 0) solves z + 2 cos qp = 0 and rho+- carry f at the
// on-shell momenta. Both cot terms have known period integrals (+-i/2), so the
// subtracted parts are restored in closed form; for constant f the remainder
// vanishes identically and the quadrature is exact.
struct PoleSubtraction {
    Complex z;
    Complex qp;
    std::vector<Complex> rho_p, rho_m;
    Complex shell(std::size_t c) const { return Complex(0, 0.5) * (rho_p[c] - rho_m[c]); }
};

PoleSubtraction make_subtraction(double E, double eta, const BatchFn& f, std::size_t width) {
    PoleSubtraction s;
    s.z = Complex(E, eta);
    Complex a = std::acos(-s.z / 2.0);
    s.qp = a.imag() >= 0 ? a : -a;
    const Complex den = -2.0 * std::sin(s.qp);
    const double q0 = s.qp.real();
    std::vector<Complex> fp(width), fm(width);
    f(q0, fp);
    f(-q0, fm);
    s.rho_p.resize(width);
    s.rho_m.resize(width);
    for (std::size_t c = 0; c < width; ++c) {
        s.rho_p[c] = fp[c] / den;
        s.rho_m[c] = -fm[c] / den;
    }
    return s;
}

Complex half_cot(Complex w) { return 0.5 * std::cos(w) / std::sin(w); }

int env_panel_floor(const QuadratureConfig& cfg) { return pow2ceil(cfg.panel_count); }

std::vector<Feature> regularized_features(double E, double eta) {
    std::vector<Feature> fs;
    if (std::fabs(E) < 2.0) {
        double q0 = std::acos(-E / 2.0);
        fs.push_back({q0, 5.0 * eta});
        fs.push_back({-q0, 5.0 * eta});
    } else if (std::fabs(E) - 2.0 < 25.0 * eta) {
        double w = 5.0 * std::sqrt(std::fabs(E) - 2.0 + eta);
        fs.push_back({E < 0 ? 0.0 : kPi, w});
        if (E > 0) fs.push_back({-kPi, w});
    }
    return fs;
}

}  // namespace

std::vector<double> QuadratureConfig::default_eta_sequence() {
    std::vector<double> seq(8);
    double eta = 1e-1;
    for (auto& v : seq) {
        v = eta;
        eta /= 2.0;
    }
    return seq;
}

void QuadratureConfig::validate() const {
    if (eta_sequence.empty()) throw std::invalid_argument("quadrature: eta_sequence must be non-empty");
    double prev = std::numeric_limits<double>::infinity();
    for (double eta : eta_sequence) {
        if (!(eta > 0.0)) throw std::invalid_argument("quadrature: eta values must be positive");
        if (!(eta < prev)) throw std::invalid_argument("quadrature: eta_sequence must be strictly decreasing");
        prev = eta;
    }
    if (eta_sequence.back() < 1e-9)
        throw std::invalid_argument("quadrature: smallest eta is not resolvable by the panel budget");
    if (panel_count < 64) throw std::invalid_argument("quadrature: panel_count must be >= 64");
    if (!(tolerance > 0.0)) throw std::invalid_argument("quadrature: tolerance must be positive");
    if (max_doublings < 1 || max_doublings > 14)
        throw std::invalid_argument("quadrature: max_doublings out of range");
}

std::size_t QuadratureConfig::hash() const {
    auto mix = [](std::size_t h, std::size_t v) {
        return h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
    };
    std::size_t h = std::size_t(panel_count) * 31 + std::size_t(extrapolation);
    h = mix(h, std::size_t(max_doublings));
    h = mix(h, std::bit_cast<std::size_t>(tolerance));
    for (double eta : eta_sequence) h = mix(h, std::bit_cast<std::size_t>(eta));
    return h;
}

std::vector<double> on_shell_momenta(double E) {
    if (std::fabs(E) >= 2.0) return {};
    double q0 = std::acos(-E / 2.0);
    return {q0, -q0};
}

int worker_threads() {
    static int n = [] {
        if (const char* env = std::getenv("TPSCATT_THREADS")) {
            int v = std::atoi(env);
            if (v > 0) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? int(hc) : 1;
    }();
    return n;
}

BatchResult periodic_integrate(const BatchFn& f, std::size_t width, const QuadratureConfig& cfg,
                               std::span<const double> features, double feature_scale,
                               bool parallel, const std::function<double()>& noise_floor) {
    cfg.validate();
    std::vector<Feature> fs;
    for (double q : features) fs.push_back({q, feature_scale});
    auto grid_vals = [&, have = std::map<int, std::vector<Complex>>{}](
                         int n, std::vector<Complex>& scratch) mutable -> std::span<const Complex> {
        std::vector<Complex> store(std::size_t(n) * width);
        const double h = 2.0 * kPi / n;
        auto prev_it = have.find(n / 2);
        std::vector<double> qs;
        std::vector<int> idx;
        for (int j = 0; j < n; ++j) {
            if (prev_it != have.end() && j % 2 == 0) {
                std::copy_n(prev_it->second.begin() + std::size_t(j / 2) * width, width,
                            store.begin() + std::size_t(j) * width);
            } else {
                qs.push_back(-kPi + j * h);
                idx.push_back(j);
            }
        }
        eval_many(f, qs, width, scratch, parallel);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(scratch.begin() + i * width, width, store.begin() + std::size_t(idx[i]) * width);
        have.clear();
        auto [it, ok] = have.emplace(n, std::move(store));
        return it->second;
    };
    return adaptive_periodic_core(grid_vals, f, width, copy_op(), fs, cfg.panel_count, cfg, parallel,
                                  noise_floor);
}

PoleResolvent::PoleResolvent(BatchFn f, std::size_t width) : f_(std::move(f)), width_(width) {}

std::span<const Complex> PoleResolvent::grid_values(int n, std::vector<Complex>& scratch) const {
    {
        std::lock_guard lk(mu_);
        auto it = cache_.find(n);
        if (it != cache_.end()) return it->second;
    }
    std::vector<Complex> vals(std::size_t(n) * width_);
    const double h = 2.0 * kPi / n;
    bool copied = false;
    {
        std::lock_guard lk(mu_);
        auto half = cache_.find(n / 2);
        if (half != cache_.end()) {
            for (int j = 0; j < n; j += 2)
                std::copy_n(half->second.begin() + std::size_t(j / 2) * width_, width_,
                            vals.begin() + std::size_t(j) * width_);
            copied = true;
        }
    }
    for (int j = 0; j < n; ++j) {
        if (copied && j % 2 == 0) continue;
        f_(-kPi + j * h, std::span<Complex>(vals.data() + std::size_t(j) * width_, width_));
    }
    if (std::size_t(n) * width_ <= kCacheCapEntries) {
        std::lock_guard lk(mu_);
        auto [it, inserted] = cache_.emplace(n, std::move(vals));
        return it->second;
    }
    scratch = std::move(vals);
    return scratch;
}

BatchResult PoleResolvent::eval(double E, double eta, const QuadratureConfig& cfg) const {
    if (!(eta > 0.0)) throw std::invalid_argument("PoleResolvent: eta must be positive");
    auto grid_vals = [this](int n, std::vector<Complex>& scratch) { return grid_values(n, scratch); };
    auto fs = regularized_features(E, eta);
    const Complex z(E, eta);
    if (std::fabs(E) >= 2.0) {
        NodeOp op = [z, w = width_](double q, std::span<const Complex> f, std::span<Complex> g) {
            Complex inv = 1.0 / (z + 2.0 * std::cos(q));
            for (std::size_t c = 0; c < w; ++c) g[c] = f[c] * inv;
        };
        return adaptive_periodic_core(grid_vals, f_, width_, op, fs, env_panel_floor(cfg), cfg, false);
    }
    PoleSubtraction s = make_subtraction(E, eta, f_, width_);
    NodeOp op = [&s, w = width_](double q, std::span<const Complex> f, std::span<Complex> g) {
        Complex inv = 1.0 / (s.z + 2.0 * std::cos(q));
        Complex cp = half_cot(0.5 * (q - s.qp));
        Complex cm = half_cot(0.5 * (q + s.qp));
        for (std::size_t c = 0; c < w; ++c) g[c] = f[c] * inv - s.rho_p[c] * cp - s.rho_m[c] * cm;
    };
    BatchResult r =
        adaptive_periodic_core(grid_vals, f_, width_, op, fs, env_panel_floor(cfg), cfg, false);
    for (std::size_t c = 0; c < width_; ++c) r.values[c] += s.shell(c);
    return r;
}

BatchResult regularized_1d(const BatchFn& f, std::size_t width, double E, double eta,
                           const QuadratureConfig& cfg) {
    return PoleResolvent(f, width).eval(E, eta, cfg);
}

namespace {

std::vector<double> channel_edges(double E) {
    std::vector<double> edges;
    for (double s : {-2.0, 2.0}) {
        double c = (s - E) / 2.0;
        if (std::fabs(c) < 1.0) {
            double qe = std::acos(c);
            edges.push_back(qe);
            edges.push_back(-qe);
        }
    }
    return edges;
}

BatchResult nested_2d(const std::function<BatchResult(double q1, double eta)>& inner,
                      std::size_t width, double E, double eta, const QuadratureConfig& cfg) {
    std::atomic<double> inner_err{0.0};
    auto outer = [&](double q1, std::span<Complex> out) {
        BatchResult r = inner(q1, eta);
        double cur = inner_err.load(std::memory_order_relaxed);
        while (cur < r.error_estimate &&
               !inner_err.compare_exchange_weak(cur, r.error_estimate, std::memory_order_relaxed)) {
        }
        std::copy(r.values.begin(), r.values.end(), out.begin());
    };
    BatchResult res = periodic_integrate(outer, width, cfg, channel_edges(E), 5.0 * eta, true,
                                         [&] { return inner_err.load(); });
    res.error_estimate += inner_err.load();
    return res;
}

}  // namespace

BatchResult regularized_2d_outer_product(const BatchFn& u, std::size_t wu, const BatchFn& v,
                                         std::size_t wv, double E, double eta,
                                         const QuadratureConfig& cfg) {
    PoleResolvent inner(v, wv);
    QuadratureConfig inner_cfg = cfg;
    inner_cfg.tolerance = cfg.tolerance / 4.0;
    std::atomic<double> inner_err{0.0};
    auto outer = [&](double q1, std::span<Complex> out) {
        BatchResult r = inner.eval(E + 2.0 * std::cos(q1), eta, inner_cfg);
        double cur = inner_err.load(std::memory_order_relaxed);
        while (cur < r.error_estimate &&
               !inner_err.compare_exchange_weak(cur, r.error_estimate, std::memory_order_relaxed)) {
        }
        std::vector<Complex> ubuf(wu);
        u(q1, ubuf);
        for (std::size_t a = 0; a < wu; ++a)
            for (std::size_t b = 0; b < wv; ++b) out[a * wv + b] = ubuf[a] * r.values[b];
    };
    BatchResult res = periodic_integrate(outer, wu * wv, cfg, channel_edges(E), 5.0 * eta, true,
                                         [&] { return inner_err.load(); });
    res.error_estimate += inner_err.load();
    return res;
}

BatchResult regularized_2d(const BatchFn2D& f, std::size_t width, double E, double eta,
                           const QuadratureConfig& cfg) {
    QuadratureConfig inner_cfg = cfg;
    inner_cfg.tolerance = cfg.tolerance / 4.0;
    auto inner = [&](double q1, double et) {
        auto fi = [&f, q1](double q2, std::span<Complex> o2) { f(q1, q2, o2); };
        return regularized_1d(fi, width, E + 2.0 * std::cos(q1), et, inner_cfg);
    };
    return nested_2d(inner, width, E, eta, cfg);
}

Extrapolated extrapolate_eta(std::span<const EtaPoint> points) {
    const std::size_t n = points.size();
    if (n == 0) throw std::invalid_argument("extrapolate_eta: empty ladder");
    if (n == 1) return {points[0].value, 0.0};
    std::vector<double> x(n);
    std::vector<Complex> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = points[i].eta;
        t[i] = points[i].value;
    }
    Complex best = t[n - 1];
    double best_err = std::abs(t[n - 1] - t[n - 2]);
    for (std::size_t j = 1; j < n; ++j) {
        Complex diag_prev = t[n - 1];
        for (std::size_t i = n - 1; i >= j; --i) {
            t[i] = (x[i - j] * t[i] - x[i] * t[i - 1]) / (x[i - j] - x[i]);
            if (i == j) break;
        }
        double err = std::abs(t[n - 1] - diag_prev);
        if (err < best_err) {
            best_err = err;
            best = t[n - 1];
        }
    }
    return {best, best_err};
}

Extrapolated extrapolate(std::span<const EtaPoint> points, const QuadratureConfig& cfg) {
    if (cfg.extrapolation == Extrapolation::none) {
        const std::size_t n = points.size();
        double err = n > 1 ? std::abs(points[n - 1].value - points[n - 2].value) : 0.0;
        return {points[n - 1].value, err};
    }
    return extrapolate_eta(points);
}

IntegralResult bz_integrate_1d(const std::function<Complex(double)>& f, double E,
                               const QuadratureConfig& cfg) {
    cfg.validate();
    PoleResolvent res([&f](double q, std::span<Complex> out) { out[0] = f(q); }, 1);
    std::vector<EtaPoint> trace;
    double eta_err = 0.0;
    for (double eta : cfg.eta_sequence) {
        try {
            BatchResult r = res.eval(E, eta, cfg);
            trace.push_back({eta, r.values[0]});
            eta_err = std::max(eta_err, r.error_estimate);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(e.what(), trace);
        }
    }
    Extrapolated ex = extrapolate(trace, cfg);
    if (cfg.extrapolation == Extrapolation::richardson && ex.error_estimate > cfg.tolerance)
        throw ConvergenceError("eta extrapolation spread above tolerance", trace);
    return {ex.value, ex.error_estimate + eta_err, std::move(trace)};
}

IntegralResult bz_integrate_2d(const std::function<Complex(double, double)>& f, double E,
                               const QuadratureConfig& cfg) {
    cfg.validate();
    QuadratureConfig inner_cfg = cfg;
    inner_cfg.tolerance = cfg.tolerance / 4.0;
    std::vector<EtaPoint> trace;
    double eta_err = 0.0;
    for (double eta : cfg.eta_sequence) {
        try {
            auto inner = [&](double q1, double et) {
                auto fi = [&f, q1](double q2, std::span<Complex> o2) { o2[0] = f(q1, q2); };
                return regularized_1d(fi, 1, E + 2.0 * std::cos(q1), et, inner_cfg);
            };
            BatchResult r = nested_2d(inner, 1, E, eta, cfg);
            trace.push_back({eta, r.values[0]});
            eta_err = std::max(eta_err, r.error_estimate);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(e.what(), trace);
        }
    }
    Extrapolated ex = extrapolate(trace, cfg);
    if (cfg.extrapolation == Extrapolation::richardson && ex.error_estimate > cfg.tolerance)
        throw ConvergenceError("eta extrapolation spread above tolerance", trace);
    return {ex.value, ex.error_estimate + eta_err, std::move(trace)};
}

namespace {

// One principal-value grid pass: midpoint-offset nodes, cotangent subtraction
// at both poles. E + 2 cos q = -4 sin((q+q0)/2) sin((q-q0)/2) exactly, which
// gives cancellation-free forms near either pole.
Complex pv_grid_pass(const std::function<Complex(double)>& f, double E, double q0, Complex fp,
                     Complex fm, int n, double offset) {
    const double h = 2.0 * kPi / n;
    const double sq0 = std::sin(q0);
    const Complex rho_p = fp / (-2.0 * sq0);
    const Complex rho_m = fm / (2.0 * sq0);
    KahanC sum;
    for (int j = 0; j < n; ++j) {
        double q = -kPi + (j + offset) * h;
        double vp = 0.5 * (q - q0);  // half-distance to the + pole
        double vm = 0.5 * (q + q0);
        Complex val;
        if (std::fabs(std::sin(vp)) < 0.02) {
            Complex fq = f(q);
            Complex num = fp * 0.5 * (std::sin(q) - sq0) - (fq - fp) * sq0;
            val = num / (4.0 * sq0 * std::sin(vm) * std::sin(vp));
            val -= rho_m * 0.5 * std::cos(vm) / std::sin(vm);
        } else if (std::fabs(std::sin(vm)) < 0.02) {
            Complex fq = f(q);
            Complex num = -(fq - fm) * sq0 - fm * 0.5 * (std::sin(q) + sq0);
            val = num / (4.0 * sq0 * std::sin(vp) * std::sin(vm));
            val -= rho_p * 0.5 * std::cos(vp) / std::sin(vp);
        } else {
            val = f(q) / (E + 2.0 * std::cos(q));
            val -= rho_p * 0.5 * std::cos(vp) / std::sin(vp);
            val -= rho_m * 0.5 * std::cos(vm) / std::sin(vm);
        }
        sum.add(val);
    }
    return sum.get() / double(n);
}

}  // namespace

IntegralResult principal_value_split(const std::function<Complex(double)>& f, double E,
                                     const QuadratureConfig& cfg) {
    cfg.validate();
    if (std::fabs(E) == 2.0)
        throw std::domain_error("principal_value_split: band-edge energy has a non-simple pole");
    if (std::fabs(E) > 2.0) {
        // Pole off the contour: plain periodic quadrature of f / (E + 2 cos q).
        auto g = [&](double q, std::span<Complex> out) { out[0] = f(q) / (E + 2.0 * std::cos(q)); };
        BatchResult r = periodic_integrate(g, 1, cfg);
        return {r.values[0], r.error_estimate, {}};
    }
    const double q0 = std::acos(-E / 2.0);
    const Complex fp = f(q0), fm = f(-q0);
    const Complex shell = Complex(0.0, -1.0) * (fp + fm) / (4.0 * std::sin(q0));

    int n = pow2ceil(cfg.panel_count);
    const int n_cap = int(std::min<long long>(kMaxGrid, (long long)n << cfg.max_doublings));
    Complex prev{};
    bool have_prev = false;
    for (; n <= n_cap; n *= 2) {
        double offset = 0.5;
        // Node-collision guard: shift the grid if a node lands on a pole.
        for (int attempt = 0; attempt < 2; ++attempt) {
            const double h = 2.0 * kPi / n;
            double dmin = std::numeric_limits<double>::infinity();
            for (double pole : {q0, -q0}) {
                double frac = std::fabs(std::remainder(pole + kPi - offset * h, h));
                dmin = std::min(dmin, frac);
            }
            if (dmin > h * 1e-6) break;
            if (attempt == 1) throw ConvergenceError("principal value: node collision persists");
            offset += 1.0 / 3.0;
        }
        Complex cur = pv_grid_pass(f, E, q0, fp, fm, n, offset);
        if (have_prev && std::abs(cur - prev) < 0.25 * cfg.tolerance * std::max(1.0, std::abs(cur)))
            return {cur + shell, std::abs(cur - prev), {}};
        prev = cur;
        have_prev = true;
    }
    throw ConvergenceError("principal value quadrature did not converge");
}

}  // namespace tpscatt::quad
