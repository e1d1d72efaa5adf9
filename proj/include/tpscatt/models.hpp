#pragma once

#include <complex>
#include <vector>

namespace tpscatt {

using Complex = std::complex<double>;

enum class Branch { I, II };

/// Two capacitively coupled parallel conductors: each one is an infinite
/// tight-binding chain (lead hopping fixed to 1) with an impurity site at
/// l = 0 carrying on-site energy eps and tunneling gamma to both neighbours.
/// Electrons in different conductors interact with strength lambda only when
/// both sit on their l = 0 sites.
struct ParallelModel {
    double eps_I;
    double eps_II;
    double gamma_I;
    double gamma_II;
    double lambda;

    ParallelModel(double eps_I, double eps_II, double gamma_I, double gamma_II, double lambda);

    double eps(Branch b) const { return b == Branch::I ? eps_I : eps_II; }
    double gamma(Branch b) const { return b == Branch::I ? gamma_I : gamma_II; }
    /// Conductor relabeling I <-> II.
    ParallelModel swapped() const { return {eps_II, eps_I, gamma_II, gamma_I, lambda}; }
};

/// A single spin-degenerate level side-coupled to a perfect wire, with on-site
/// Coulomb repulsion U on the dot.
struct SideDotModel {
    double eps_d;
    double gamma;
    double U;

    SideDotModel(double eps_d, double gamma, double U);
};

/// Band momentum. |k| must lie strictly inside (0, pi); the sign encodes the
/// incidence direction (k > 0 from the left, k < 0 from the right).
class Momentum {
public:
    explicit Momentum(double k);
    double value() const { return k_; }
    double magnitude() const { return k_ < 0 ? -k_ : k_; }
    int sign() const { return k_ < 0 ? -1 : 1; }

private:
    double k_;
};

struct Amplitudes {
    Complex t;
    Complex r;
};

/// E_k = -2 cos k.
double dispersion(Momentum k);

/// Inverse of the dispersion on the left-incident branch: acos(-E/2), |E| < 2.
Momentum on_shell_momentum(double E);

Amplitudes parallel_amplitudes(const ParallelModel& m, Branch b, Momentum k);
Amplitudes sidedot_amplitudes(const SideDotModel& m, Momentum k);

/// Single-particle eigenfunction of one conductor. Right-incident states
/// (k < 0) are the spatial mirror of the left-incident ones.
Complex parallel_wavefunction(const ParallelModel& m, Branch b, Momentum k, long l);

/// Site label for the side-dot model: a wire index or the dot itself.
class SideSite {
public:
    static SideSite wire(long l) { return SideSite(l, false); }
    static SideSite dot() { return SideSite(0, true); }
    bool is_dot() const { return dot_; }
    long index() const;
    SideSite mirrored() const { return dot_ ? *this : wire(-l_); }
    bool operator==(const SideSite&) const = default;

private:
    SideSite(long l, bool dot) : l_(l), dot_(dot) {}
    long l_;
    bool dot_;
};

Complex sidedot_wavefunction(const SideDotModel& m, Momentum k, SideSite site);

/// Bound state of the noninteracting single-particle Hamiltonian: energy
/// outside [-2, 2], wire tail z^|l| with |z| < 1.
struct BoundState {
    double energy;
    double z;           // tail decay factor, 0 < |z| < 1
    double wire_amp;    // normalized amplitude multiplying z^|l| on wire sites
    double center_amp;  // normalized amplitude on the impurity site (l = 0 or the dot)
};

std::vector<BoundState> parallel_bound_states(const ParallelModel& m, Branch b);
std::vector<BoundState> sidedot_bound_states(const SideDotModel& m);

/// Energies of the bound states (empty list = the band-only spectral
/// decomposition used by the scattering kernel is complete).
std::vector<double> bound_state_scan(const ParallelModel& m, Branch b);
std::vector<double> bound_state_scan(const SideDotModel& m);

}  // namespace tpscatt
