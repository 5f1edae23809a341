#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genweb/rng.hpp"

namespace genweb::lattice {

/// Exact probability with power-of-two denominator from exhaustive enumeration.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d);
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
    Rational operator*(const Rational& o) const;
    Rational operator+(const Rational& o) const;
    bool operator<=(const Rational& o) const;
    bool operator==(const Rational& o) const;
    std::string str() const;
};

Rational pow(const Rational& r, int k);

struct Window {
    int x_min = 0, x_max = 0;  // inclusive
    int t_min = 0, t_max = 0;  // inclusive; arrows live on t in [t_min, t_max-1]

    bool contains(int x, int t) const noexcept {
        return x >= x_min && x <= x_max && t >= t_min && t <= t_max;
    }
};

inline bool even_parity(int x, int t) noexcept { return ((x + t) & 1) == 0; }

/// i.i.d. +-1 arrows on the even-parity points of a window. A walk at (x,t)
/// steps to (x + arrow(x,t), t+1).
class ArrowField {
public:
    ArrowField(Window w, std::uint64_t seed);              // i.i.d. uniform arrows
    ArrowField(Window w, std::uint64_t bits, bool enumerated);  // explicit configuration

    const Window& window() const noexcept { return win_; }
    int arrow(int x, int t) const;  // +1 or -1
    std::size_t even_point_count() const noexcept { return index_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }

    static std::size_t count_even_points(const Window& w);

private:
    Window win_;
    std::vector<std::pair<int, int>> index_;  // enumeration order of even points
    std::vector<std::int8_t> arrows_;
    std::uint64_t seed_ = 0;
    std::size_t flat_index(int x, int t) const;
};

struct WalkEnsemble {
    std::vector<std::pair<int, int>> starts;  // (x, t), even parity
    int t_end = 0;
    // paths[i][k] = position of walk i at time starts[i].second + k
    std::vector<std::vector<int>> paths;
    // pairwise first-merge times; t_end+1 means not merged by t_end
    std::vector<std::vector<int>> merge_time;

    int position(std::size_t walk, int t) const;
    bool merged(std::size_t i, std::size_t j) const {
        return merge_time[i][j] <= t_end;
    }
};

/// Deterministic trace of coalescing walks through an arrow field.
/// Starts must be inside the window with even parity. Asserts the
/// non-crossing invariant on every step.
WalkEnsemble run_walks(const ArrowField& field,
                       const std::vector<std::pair<int, int>>& starts, int t_end);

/// Distinct positions occupied at time t by walks started at or before t.
std::vector<int> occupied_set(const WalkEnsemble& ens, int t);

/// Monotone-increasing events of the occupation configuration at one time.
struct HitEvent {
    int t = 0;
    int lo = 0, hi = 0;  // xi_t intersects [lo, hi]
    int k = 1;           // |xi_t intersect [lo,hi]| >= k
};

struct EnumerationResult {
    std::size_t config_count = 0;
    std::vector<Rational> event_probs;
    std::vector<std::vector<Rational>> pairwise_probs;  // P(A_i and A_j)
    Rational full_intersection;
    bool product_bound_holds = false;  // P(inter A_i) <= prod P(A_i)
    std::vector<std::string> violations;
};

inline constexpr int kMaxEnumerationBits = 24;

/// Iterates every arrow configuration of the window (at most 2^24) and
/// returns exact rational probabilities of the events, all pairwise
/// intersections, and the full intersection, with the product bound checked.
EnumerationResult enumerate_exact(const Window& w,
                                  const std::vector<std::pair<int, int>>& starts,
                                  const std::vector<HitEvent>& events);

// Exhaustive inequality checks (Reimer-style); all exact, no tolerance.

struct CheckResult {
    bool holds = true;
    std::string detail;
};

/// P(all intervals hit) <= prod P(interval hit), every subset of the events.
CheckResult check_negative_correlation(const Window& w,
                                       const std::vector<std::pair<int, int>>& starts,
                                       const std::vector<HitEvent>& events);

/// Constrained decoupling: hitting events with an empty gap between the j-th
/// and (j+1)-th interval factorizes against the remaining plain hits.
CheckResult check_decoupling(const Window& w,
                             const std::vector<std::pair<int, int>>& starts,
                             const std::vector<HitEvent>& events, std::size_t j);

/// P(|xi_t ∩ B| >= k) <= P(|xi_t ∩ B| >= 1)^k for k = 1..k_max.
CheckResult check_occupation_inequality(const Window& w,
                                        const std::vector<std::pair<int, int>>& starts,
                                        int t, int b_lo, int b_hi, int k_max);

/// E[|xi_t ∩ B|^2] <= 2 E[|xi_t ∩ B|] + E[|xi_t ∩ B|]^2, exact rationals.
CheckResult check_moment_bound(const Window& w,
                               const std::vector<std::pair<int, int>>& starts, int t,
                               int b_lo, int b_hi);

}  // namespace genweb::lattice
