#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "genweb/rng.hpp"

namespace genweb::cbm {

inline constexpr double kNoMerge = std::numeric_limits<double>::infinity();

enum class NoiseMode {
    Bridge,  // independent increments per cluster + bridge hitting correction
    Web,     // increments keyed by (step, spatial cell); exact monotone coupling
};

struct SimParams {
    double h = 1e-3;
    NoiseMode mode = NoiseMode::Bridge;
    double web_cell = 0.0;     // cell width, Web mode only
    bool track_pairs = false;  // record pairwise first-merge times
};

/// System of coalescing Brownian motions from finitely many common-time
/// starting positions. Within each step every adjacent non-merged pair merges
/// with the Brownian-bridge boundary-hitting probability exp(-d0*d1/h) for
/// endpoint gaps d0, d1, and surely on a gap sign flip. Merged paths move
/// together; order among distinct clusters is preserved at every grid time.
class CoalescingSystem {
public:
    CoalescingSystem(std::vector<double> starts, bool track_pairs);

    void advance(double duration, const SimParams& p, std::uint64_t noise_key);

    double time() const noexcept { return time_; }
    std::size_t start_count() const noexcept { return n_; }
    std::size_t cluster_count() const noexcept { return pos_.size(); }

    double position_of(std::size_t start) const;
    bool same_cluster(std::size_t i, std::size_t j) const;
    /// First-merge time; kNoMerge when still separate. Requires track_pairs.
    double merge_time(std::size_t i, std::size_t j) const;
    /// Distinct occupied positions, sorted.
    std::vector<double> occupied() const;
    std::int64_t steps_taken() const noexcept { return step_; }

private:
    std::size_t n_ = 0;
    double time_ = 0.0;
    std::int64_t step_ = 0;
    std::vector<double> pos_;  // per active cluster, sorted
    std::vector<int> driver_;  // min start index per cluster (root and noise key)
    mutable std::vector<int> parent_;  // disjoint-set forest over starts
    std::vector<int> slot_of_root_;    // root start -> active slot
    std::vector<std::vector<int>> members_;  // only with track_pairs
    std::vector<double> pair_merge_;         // n x n, kNoMerge default
    bool track_pairs_ = false;

    int find(int s) const;
    void web_sort_and_merge();
};

struct CbmRun {
    std::vector<double> starts;
    double h = 0.0;
    double t_end = 0.0;
    std::vector<double> final_pos;    // per start
    std::vector<double> merge_times;  // n*n row-major, kNoMerge if none
    double mt(std::size_t i, std::size_t j) const {
        return merge_times[i * starts.size() + j];
    }
};

CbmRun simulate_cbm(const std::vector<double>& starts, double t_end, double h,
                    std::uint64_t noise_key, NoiseMode mode = NoiseMode::Bridge,
                    double web_cell = 0.0);

/// Expected number of points of the grid-limit coalescing system in [a,b] at
/// time t, started from all of R at time 0: (b-a)/sqrt(pi t).
double density_formula(double t, double a, double b);

/// Constrained two-point density: Delta * exp(-Delta^2/(4t)) / (2 sqrt(pi) t^{3/2}).
double two_point_formula(double t, double delta);

/// P(two independent Brownian motions at gap `gap` meet by time t).
double pair_merge_probability(double gap, double t);

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t replicas = 0;
    double h = 0.0;
    double eta = 0.0;
};

/// Monte Carlo E|xi_t ∩ [a,b]| for coalescing BMs started from the eta-grid
/// on [a-buffer, b+buffer].
McEstimate estimate_density(double t, double a, double b, double grid_eta, double buffer,
                            std::int64_t replicas, double h, std::uint64_t seed,
                            int workers);

/// Monte Carlo estimate of the constrained two-point density at separation
/// `delta` via four backward coalescing paths from the probe endpoints;
/// estimates P[occupied [0,p], empty (p,delta), occupied [delta,delta+p]]/p^2.
McEstimate estimate_two_point(double t, double delta, double probe_width,
                              std::int64_t replicas, double h, std::uint64_t seed,
                              int workers);

}  // namespace genweb::cbm
