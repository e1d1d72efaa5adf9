// Test-only oracles, independent of the library implementation paths they check.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracles {

using Complex = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Free-lattice resolvent by residue calculus: roots of w^2 + z w + 1 = 0 are
// e^{+-ik}; with Im z > 0 (or z off the band) exactly one lies inside the unit
// circle. g(z) = (1/2pi) \int dq 1/(z + 2cos q) = 1/(w_in - w_out).
inline void free_chain_roots(Complex z, Complex& w_in, Complex& w_out) {
    const Complex s = std::sqrt(z - 2.0) * std::sqrt(z + 2.0);
    Complex a = 0.5 * (-z + s), b = 0.5 * (-z - s);
    if (std::abs(a) <= std::abs(b)) {
        w_in = a;
        w_out = b;
    } else {
        w_in = b;
        w_out = a;
    }
}

inline Complex g_free(Complex z) {
    Complex w_in, w_out;
    free_chain_roots(z, w_in, w_out);
    return 1.0 / (w_in - w_out);
}

// (1/2pi) \int dq e^{i q x} / (z + 2cos q) for integer site offset x.
inline Complex a_free(Complex z, long x) {
    Complex w_in, w_out;
    free_chain_roots(z, w_in, w_out);
    return std::pow(w_in, double(x < 0 ? -x : x)) / (w_in - w_out);
}

// Open-chain eigenbasis (sine waves): L sites labelled 1..L.
inline double open_chain_energy(int n, int L) { return -2.0 * std::cos(n * kPi / (L + 1)); }
inline double open_chain_amp(int n, int site, int L) {
    return std::sqrt(2.0 / (L + 1)) * std::sin(n * kPi * site / double(L + 1));
}

// Sturm-sequence count of eigenvalues < x for a symmetric tridiagonal matrix.
inline int sturm_count(const std::vector<double>& diag, const std::vector<double>& off, double x) {
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < diag.size(); ++i) {
        double e2 = i == 0 ? 0.0 : off[i - 1] * off[i - 1];
        d = diag[i] - x - e2 / d;
        if (d == 0.0) d = 1e-300;
        if (d < 0.0) ++count;
    }
    return count;
}

// Eigenvalues of a symmetric tridiagonal matrix lying in (lo, hi), by bisection.
inline std::vector<double> sturm_eigen_in(const std::vector<double>& diag,
                                          const std::vector<double>& off, double lo, double hi) {
    std::vector<double> out;
    int n_lo = sturm_count(diag, off, lo);
    int n_hi = sturm_count(diag, off, hi);
    for (int m = n_lo + 1; m <= n_hi; ++m) {
        double a = lo, b = hi;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (a + b);
            if (sturm_count(diag, off, mid) >= m)
                b = mid;
            else
                a = mid;
        }
        out.push_back(0.5 * (a + b));
    }
    return out;
}

// Dense complex Gaussian elimination with partial pivoting (tiny systems only).
inline std::vector<Complex> solve_dense(std::vector<std::vector<Complex>> m,
                                        std::vector<Complex> rhs) {
    const std::size_t n = rhs.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        std::swap(m[col], m[piv]);
        std::swap(rhs[col], rhs[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            Complex f = m[r][col] / m[col][col];
            for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<Complex> x(n);
    for (std::size_t i = n; i-- > 0;) {
        Complex s = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
        x[i] = s / m[i][i];
    }
    return x;
}

}  // namespace oracles
