#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "genweb/marked_space.hpp"
#include "genweb/moran.hpp"
#include "genweb/rng.hpp"

namespace genweb::coalescent {

inline constexpr double kNeverMerged = std::numeric_limits<double>::infinity();

/// Frozen-particle sampling plan: level k releases its particles at backward
/// time T - t_k, where t_k is the forward sampling time.
struct SpaceTimeSpec {
    struct Level {
        double t_k = 0.0;
        std::vector<double> positions;
    };
    std::vector<Level> levels;  // t_k strictly increasing, last one <= horizon
    double horizon = 0.0;

    void validate() const;
    int total_particles() const;
};

/// Marked partition of {1..n} with block locations, accumulated pairwise
/// distances, and optional per-individual activation (frozen) times.
/// Block pairs at the same location merge at rate gamma; blocks migrate at
/// rate one by the reversed kernel. Distances follow
///   r_s(i,j) = 2 min(s, T_ij) - min(s, a_i) - min(s, a_j),
/// with a_i the activation time (0 when never frozen).
class CoalescentState {
public:
    static CoalescentState singletons(const std::vector<double>& positions);
    static CoalescentState frozen(const SpaceTimeSpec& spec);
    /// Brownian-migration variant with instantaneous coalescence; delegates
    /// the path dynamics to the coalescing-Brownian-motion simulator.
    static CoalescentState brownian(const std::vector<double>& starts, double horizon,
                                    double h, std::uint64_t noise_key);

    int n() const noexcept { return static_cast<int>(activation_.size()); }
    double clock() const noexcept { return clock_; }

    /// Advance the integer-geography dynamics. torus_sites = 0 means the
    /// unbounded lattice. finite_N > 0 adds the population-size correction
    /// that makes the pairing exact against an N-per-site replacement Moran
    /// model: a migrating block lands on an occupied site and merges with one
    /// of the blocks there with probability 1/N each (the migrant copy's
    /// parent may be that block's individual); 0 is the continuum dual.
    void step(double horizon, double gamma, const moran::MigrationKernel& abar,
              int torus_sites, rng::Stream& rng, int finite_N = 0);

    double rdist(int i, int j) const;
    double merge_T(int i, int j) const;
    double activation(int i) const { return activation_[static_cast<std::size_t>(i)]; }
    /// Position where individual i was injected (its forward sampling site).
    double origin(int i) const { return origin_[static_cast<std::size_t>(i)]; }
    bool active(int i) const {
        return activation_[static_cast<std::size_t>(i)] <= clock_;
    }
    int block_root(int i) const;
    double block_position(int i) const;
    int block_count() const;
    /// Indices of one representative per block, sorted by representative.
    std::vector<int> block_representatives() const;

private:
    double clock_ = 0.0;
    std::vector<double> activation_;       // a_i = T - t_i
    std::vector<double> origin_;           // injection positions
    std::vector<double> merge_;            // n*n first-coalescence times
    mutable std::vector<int> parent_;      // disjoint-set forest
    std::vector<double> root_pos_;         // position per root individual

    int find(int i) const;
    void unite(int i, int j);
};

/// Duality pairing of a finite marked space with a coalescent state: sum over
/// choices of one atom per block with the atom mark equal to the current
/// block location (unnormalized indicator sum), of weight product times
/// g(injection marks) * phi(block-lifted distances + accumulated matrix).
/// The g-factor is pinned at the particles' injection positions: the pairing
/// is conserved along the ancestral transport, so g never re-evaluates at
/// migrated block locations (the time-0 state carries no mark information
/// beyond what the conditioned sample sees through distances).
/// Blocks sharing a location draw distinct atoms, weighted so the total
/// conditional mass matches the product measure; this removes the sampling
/// diagonal that a finite population would otherwise leak into the pairing.
double duality_H(const FiniteMarkedSpace& space, const CoalescentState& k,
                 const Monomial& m, double mark_tol = 1e-9);

}  // namespace genweb::coalescent
