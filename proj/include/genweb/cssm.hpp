#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "genweb/marked_space.hpp"
#include "genweb/rng.hpp"
#include "genweb/stats.hpp"

namespace genweb::cssm {

/// Windowed representation of a regular continuum genealogy state: sorted
/// boundary points with gap distances d_x = r(x+, x-) > 0, mass equal to
/// Lebesgue measure on the window. The distance between two points is the
/// largest gap distance of any boundary strictly between them; boundaries
/// below `resolution` are unresolved and treated as distance zero.
struct RegularState {
    struct Boundary {
        double x = 0.0;
        double d = 0.0;  // r(x+, x-)
    };
    double window_lo = 0.0;
    double window_hi = 0.0;
    std::vector<Boundary> boundaries;  // sorted by x, all inside the window
    double resolution = 0.0;           // gaps below this may be missing
    bool rr_certified = false;         // finite gap sum certified on the window

    void validate() const;
    double point_distance(double u, double v) const;
    /// Distance from a side copy of boundary b (side +1 or -1) to point u.
    double side_distance(std::size_t b, int side, double u) const;
    double gap_sum() const;
    /// Count of boundaries with d >= threshold.
    int count_at_least(double threshold) const;
};

class InitialSpace;

/// Ancestors resolved once per landing mark; distances between them are then
/// deterministic, which keeps sampled matrices ultrametric.
class AncestorDraw {
public:
    double dist(std::size_t i, std::size_t j) const;

private:
    friend class InitialSpace;
    const InitialSpace* owner_ = nullptr;
    std::vector<int> atom_ids_;      // atomic initial spaces
    std::vector<double> resolved_;   // regular / flat: clamped landing marks
};

/// Initial condition for backward sampling: either a finite atomic space with
/// a conditional-at-mark sampler, a regular windowed state, or the flat state
/// with all initial distances zero.
class InitialSpace {
public:
    static InitialSpace flat();
    static InitialSpace from_atoms(FiniteMarkedSpace space);
    static InitialSpace from_regular(RegularState state);

    /// Resolve one ancestor per landing mark. Atomic spaces condition on an
    /// exact mark match (draw by weight) with a nearest-atom fallback counted
    /// in `fallbacks`; regular states clamp landings to the window.
    AncestorDraw resolve(const std::vector<double>& landings, rng::Stream& rng,
                         int& fallbacks) const;

    bool is_flat() const noexcept { return kind_ == Kind::Flat; }
    const std::optional<RegularState>& regular() const noexcept { return regular_; }

private:
    friend class AncestorDraw;
    enum class Kind { Flat, Atoms, Regular };
    Kind kind_ = Kind::Flat;
    std::optional<FiniteMarkedSpace> atoms_;
    std::optional<RegularState> regular_;

    int sample_atom(double u, rng::Stream& rng, int& fallbacks) const;
};

/// One backward genealogy sample: positions at time t, pairwise backward
/// coalescence times tau_hat (negative means no coalescence by time 0),
/// time-0 landing marks, and the distance matrix
///   r = 2 (t - tau_hat)             when tau_hat >= 0,
///   r = 2 t + r0(xi(u), xi(v))      otherwise.
struct CssmSample {
    double t = 0.0;
    std::vector<double> positions;
    std::vector<double> tau_hat;   // n*n, -1 marks "before time 0"
    std::vector<double> landings;  // per position
    std::vector<double> dist;      // n*n
    int nearest_fallbacks = 0;

    double r(std::size_t i, std::size_t j) const { return dist[i * positions.size() + j]; }
};

CssmSample sample_cssm(const InitialSpace& initial, double t,
                       const std::vector<double>& positions, double h,
                       std::uint64_t noise_key, rng::Stream& ancestor_rng);

struct ExtractResult {
    RegularState state;
    int count_at_lag = 0;     // boundaries whose flanking paths survive the lag
    double window_length = 0.0;
};

/// Estimate the boundary set at lag delta on a window by launching backward
/// paths from a fine grid; records gap distances from the adjacent-pair
/// coalescence lags (2t + initial distance when never coalescing).
ExtractResult extract_regular(const InitialSpace& initial, double t, double delta,
                              double window_lo, double window_hi, double grid_eta,
                              double h, std::uint64_t noise_key,
                              rng::Stream& ancestor_rng);

struct CsGridSpec {
    int gl_nodes_per_cell = 12;  // for the cell-exact g integrals
};

/// Three-term generator on a regular state: diffusion (1/2) int phi Delta g,
/// aging 2 int g sum dphi/dr, and the singular resampling sum over resolved
/// boundary side pairs. Regular monomials restrict resampling to gaps above
/// their flatness radius; plain monomials require an rr-certified state.
double eval_gen_cs(const RegularState& state, const Monomial& m,
                   const CsGridSpec& grid = {});

/// Midpoint-grid evaluation of a polynomial on a regular or flat initial
/// state (the t = 0 baseline of the generator quotient).
double polynomial_on_grid(const InitialSpace& init, const Monomial& m,
                          double grid_spacing);

struct PolyEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t replicas = 0;
};

/// Monte Carlo E[Phi(X_t)] by quadrature over a midpoint grid with one joint
/// backward coalescing realization per replica.
PolyEstimate estimate_polynomial(const InitialSpace& init, double t, const Monomial& m,
                                 double grid_spacing, double h, std::int64_t replicas,
                                 std::uint64_t seed, int workers);

}  // namespace genweb::cssm
