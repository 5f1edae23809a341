#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace genweb {

inline constexpr double kTolUltraDefault = 1e-9;  // time units

struct Atom {
    int id = 0;
    double mark = 0.0;    // spatial location on the real line
    double weight = 0.0;  // nonnegative mass
    std::optional<double> type;  // optional type label in [0,1]
};

/// Finite atomic representation of a real-marked (ultra)metric measure space:
/// atoms with marks and weights plus a full symmetric distance matrix.
/// Immutable after construction; all operations return new spaces.
class FiniteMarkedSpace {
public:
    FiniteMarkedSpace() = default;
    FiniteMarkedSpace(std::vector<Atom> atoms, std::vector<double> dist_row_major,
                      bool ultrametric_claimed = false,
                      double tol_ultra = kTolUltraDefault);

    std::size_t size() const noexcept { return atoms_.size(); }
    const Atom& atom(std::size_t i) const { return atoms_[i]; }
    const std::vector<Atom>& atoms() const noexcept { return atoms_; }
    double dist(std::size_t i, std::size_t j) const {
        return dist_[i * atoms_.size() + j];
    }
    const std::vector<double>& dist_matrix() const noexcept { return dist_; }
    bool ultrametric_claimed() const noexcept { return ultra_; }
    double tol_ultra() const noexcept { return tol_ultra_; }

    double total_weight() const noexcept;
    double weight_in_mark_interval(double lo, double hi) const noexcept;

private:
    std::vector<Atom> atoms_;
    std::vector<double> dist_;  // n x n row-major, symmetric, zero diagonal
    bool ultra_ = false;
    double tol_ultra_ = kTolUltraDefault;
};

/// Axis-aligned box declaring where a mark function may be nonzero.
struct SupportBox {
    std::vector<std::array<double, 2>> bounds;  // per coordinate [lo, hi]

    bool contains(std::span<const double> marks) const noexcept {
        for (std::size_t i = 0; i < marks.size(); ++i) {
            const auto& b = bounds[i < bounds.size() ? i : bounds.size() - 1];
            if (marks[i] < b[0] || marks[i] > b[1]) return false;
        }
        return true;
    }
    static SupportBox cube(int n, double lo, double hi) {
        SupportBox s;
        s.bounds.assign(static_cast<std::size_t>(n), {lo, hi});
        return s;
    }
};

/// Polynomial test functional of order n: samples n atoms with repetition,
/// applies phi to the n(n-1)/2 pairwise distances (lexicographic (i,j), i<j)
/// and g to the n marks. phi and g must be bounded; g vanishes outside
/// `support`. `delta_reg` marks membership in the regular class: phi is
/// constant in each coordinate on [0, delta_reg].
struct Monomial {
    int n = 1;
    std::function<double(std::span<const double>)> phi;
    std::function<double(std::span<const double>)> g;
    SupportBox support;
    std::optional<double> delta_reg;

    // Optional analytic helpers; finite differences are used when absent.
    std::function<double(int, int, std::span<const double>)> dphi;  // d phi / d r_{k,l}
    std::function<double(std::span<const double>)> laplacian_g;     // sum_i d^2 g / dx_i^2

    int pair_count() const noexcept { return n * (n - 1) / 2; }
};

/// Index of distance coordinate (i,j), i<j, in lexicographic order.
constexpr std::size_t pair_index(int i, int j, int n) noexcept {
    return static_cast<std::size_t>(i) * (2 * n - i - 1) / 2 +
           static_cast<std::size_t>(j - i - 1);
}

/// Central finite-difference step for d phi / d r when no analytic gradient
/// is supplied.
inline constexpr double kPhiFdStep = 1e-5;

double phi_partial(const Monomial& m, int k, int l, std::span<const double> r);

/// n-fold sum over ordered atom tuples (with repetition) of
/// weight product * g(marks) * phi(distances). Empty space gives 0.
double eval_monomial(const FiniteMarkedSpace& space, const Monomial& m);

/// Tent cutoff: 1 on [-k,k], linear to 0 at |v| = k+1.
double tent_cutoff(double v, int k) noexcept;

/// Weight of each atom multiplied by the tent cutoff at level k.
FiniteMarkedSpace localize(const FiniteMarkedSpace& space, int k);

/// Diffusive scaling: distances * eps^2, marks and weights * eps/sigma.
FiniteMarkedSpace scale(const FiniteMarkedSpace& space, double eps, double sigma);

struct BallLevelReport {
    double level = 0.0;  // radius at which this partition holds
    std::vector<std::vector<int>> balls;    // atom indices per ball
    std::vector<double> boundaries;         // mark positions separating adjacent balls
    std::vector<double> ball_mark_lengths;  // mark interval length per ball
    std::vector<double> ball_weights;       // total weight per ball
    bool mass_matches_length = false;       // condition (c), within tol_mass
};

struct RegularStateReport {
    bool ultrametric = false;
    std::array<int, 3> witness{-1, -1, -1};  // violating triple when not ultrametric
    std::vector<BallLevelReport> levels;     // one entry per distinct partition
};

/// Ball decomposition diagnostics for every radius in (0, delta); one report
/// per distinct partition band.
RegularStateReport check_regular_state(const FiniteMarkedSpace& space, double delta,
                                       double tol_mass = 1e-9);

struct MonomialCheck {
    bool support_ok = true;    // g vanishes outside the declared box
    bool flatness_ok = true;   // phi constant on [0, delta_reg] per coordinate
    std::string detail;
};

/// Randomized spot check of the monomial's declared invariants: samples mark
/// vectors outside the support box and, when delta_reg is present, perturbs
/// each distance coordinate within [0, delta_reg].
MonomialCheck spot_check_monomial(const Monomial& m, std::uint64_t seed,
                                  int samples = 200);

}  // namespace genweb
