#include "genweb/marked_space.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "genweb/rng.hpp"

namespace genweb {

FiniteMarkedSpace::FiniteMarkedSpace(std::vector<Atom> atoms,
                                     std::vector<double> dist_row_major,
                                     bool ultrametric_claimed, double tol_ultra)
    : atoms_(std::move(atoms)),
      dist_(std::move(dist_row_major)),
      ultra_(ultrametric_claimed),
      tol_ultra_(tol_ultra) {
    const std::size_t n = atoms_.size();
    if (dist_.size() != n * n)
        throw std::invalid_argument("distance matrix size must be n*n");
    for (std::size_t i = 0; i < n; ++i) {
        if (atoms_[i].weight < 0.0)
            throw std::invalid_argument("atom weights must be nonnegative");
        if (dist_[i * n + i] != 0.0)
            throw std::invalid_argument("distance matrix must have zero diagonal");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dist_[i * n + j] != dist_[j * n + i])
                throw std::invalid_argument("distance matrix must be symmetric");
            if (dist_[i * n + j] < 0.0)
                throw std::invalid_argument("distances must be nonnegative");
        }
    }
    if (ultra_) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k) {
                    double lhs = dist_[i * n + k];
                    double rhs = std::max(dist_[i * n + j], dist_[j * n + k]);
                    if (lhs > rhs + tol_ultra_)
                        throw std::invalid_argument(
                            "ultrametric inequality violated beyond tolerance");
                }
    }
}

double FiniteMarkedSpace::total_weight() const noexcept {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.weight;
    return s;
}

double FiniteMarkedSpace::weight_in_mark_interval(double lo, double hi) const noexcept {
    double s = 0.0;
    for (const auto& a : atoms_)
        if (a.mark >= lo && a.mark <= hi) s += a.weight;
    return s;
}

double phi_partial(const Monomial& m, int k, int l, std::span<const double> r) {
    if (m.dphi) return m.dphi(k, l, r);
    std::vector<double> ru(r.begin(), r.end());
    const std::size_t idx = pair_index(k, l, m.n);
    const double h = kPhiFdStep;
    ru[idx] = r[idx] + h;
    double up = m.phi(ru);
    ru[idx] = std::max(0.0, r[idx] - h);
    double down = m.phi(ru);
    return (up - down) / (r[idx] + h - ru[idx]);
}

namespace {

void eval_rec(const FiniteMarkedSpace& space, const Monomial& m, int slot,
              std::vector<int>& idx, std::vector<double>& marks, double wprod,
              std::vector<double>& dists, double& acc) {
    const std::size_t na = space.size();
    if (slot == m.n) {
        double gv = m.g(marks);
        if (gv == 0.0) return;
        for (int i = 0; i < m.n; ++i)
            for (int j = i + 1; j < m.n; ++j)
                dists[pair_index(i, j, m.n)] =
                    space.dist(static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]),
                               static_cast<std::size_t>(idx[static_cast<std::size_t>(j)]));
        acc += wprod * gv * m.phi(dists);
        return;
    }
    for (std::size_t a = 0; a < na; ++a) {
        double w = space.atom(a).weight;
        if (w == 0.0) continue;
        idx[static_cast<std::size_t>(slot)] = static_cast<int>(a);
        marks[static_cast<std::size_t>(slot)] = space.atom(a).mark;
        eval_rec(space, m, slot + 1, idx, marks, wprod * w, dists, acc);
    }
}

}  // namespace

double eval_monomial(const FiniteMarkedSpace& space, const Monomial& m) {
    if (m.n < 1) throw std::invalid_argument("monomial order must be >= 1");
    if (!m.phi || !m.g) throw std::invalid_argument("monomial needs phi and g");
    if (space.size() == 0) return 0.0;
    std::vector<int> idx(static_cast<std::size_t>(m.n));
    std::vector<double> marks(static_cast<std::size_t>(m.n));
    std::vector<double> dists(static_cast<std::size_t>(m.pair_count()));
    double acc = 0.0;
    eval_rec(space, m, 0, idx, marks, 1.0, dists, acc);
    return acc;
}

double tent_cutoff(double v, int k) noexcept {
    double a = std::abs(v);
    if (a <= static_cast<double>(k)) return 1.0;
    if (a >= static_cast<double>(k) + 1.0) return 0.0;
    return static_cast<double>(k) + 1.0 - a;
}

FiniteMarkedSpace localize(const FiniteMarkedSpace& space, int k) {
    if (k < 1) throw std::invalid_argument("localization level must be >= 1");
    std::vector<Atom> atoms = space.atoms();
    for (auto& a : atoms) a.weight *= tent_cutoff(a.mark, k);
    return FiniteMarkedSpace(std::move(atoms), space.dist_matrix(),
                             space.ultrametric_claimed(), space.tol_ultra());
}

FiniteMarkedSpace scale(const FiniteMarkedSpace& space, double eps, double sigma) {
    if (eps <= 0.0 || sigma <= 0.0)
        throw std::invalid_argument("scaling parameters must be positive");
    const double mass_factor = eps / sigma;
    std::vector<Atom> atoms = space.atoms();
    for (auto& a : atoms) {
        a.mark *= mass_factor;
        a.weight *= mass_factor;
    }
    std::vector<double> dist = space.dist_matrix();
    const double e2 = eps * eps;
    for (auto& d : dist) d *= e2;
    return FiniteMarkedSpace(std::move(atoms), std::move(dist),
                             space.ultrametric_claimed(), space.tol_ultra());
}

namespace {

// Partition into closed balls of radius `level`; valid because the metric is
// ultrametric, so r(i,j) <= level is an equivalence relation.
std::vector<int> ball_labels(const FiniteMarkedSpace& s, double level) {
    const std::size_t n = s.size();
    std::vector<int> label(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] >= 0) continue;
        label[i] = next;
        for (std::size_t j = i + 1; j < n; ++j)
            if (label[j] < 0 && s.dist(i, j) <= level) label[j] = next;
        ++next;
    }
    return label;
}

}  // namespace

MonomialCheck spot_check_monomial(const Monomial& m, std::uint64_t seed, int samples) {
    MonomialCheck out;
    rng::Stream rng(seed, 0, rng::Purpose::Experiment);
    const int n = m.n;
    std::vector<double> marks(static_cast<std::size_t>(n));

    for (int s = 0; s < samples && out.support_ok; ++s) {
        // a point with at least one coordinate pushed outside the box
        for (int i = 0; i < n; ++i) {
            const auto& b = m.support.bounds[std::min<std::size_t>(
                static_cast<std::size_t>(i), m.support.bounds.size() - 1)];
            marks[static_cast<std::size_t>(i)] = rng.uniform(b[0], b[1]);
        }
        int off = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const auto& b = m.support.bounds[std::min<std::size_t>(
            static_cast<std::size_t>(off), m.support.bounds.size() - 1)];
        double span = std::max(1.0, b[1] - b[0]);
        marks[static_cast<std::size_t>(off)] =
            rng.uniform() < 0.5 ? b[0] - rng.uniform(1e-6, span)
                                : b[1] + rng.uniform(1e-6, span);
        if (m.g(marks) != 0.0) {
            out.support_ok = false;
            std::ostringstream os;
            os << "g nonzero outside the support box at coordinate " << off;
            out.detail += os.str();
        }
    }

    if (m.delta_reg && n >= 2) {
        const double delta = *m.delta_reg;
        std::vector<double> r(static_cast<std::size_t>(m.pair_count()));
        for (int s = 0; s < samples && out.flatness_ok; ++s) {
            for (auto& v : r) v = rng.uniform(0.0, 4.0 * delta);
            std::size_t coord = rng.uniform_int(r.size());
            double base = r[coord];
            r[coord] = rng.uniform(0.0, delta);
            double v1 = m.phi(r);
            r[coord] = rng.uniform(0.0, delta);
            double v2 = m.phi(r);
            r[coord] = base;
            if (std::abs(v1 - v2) > 1e-12) {
                out.flatness_ok = false;
                out.detail += "phi varies inside the flat radius";
            }
        }
    }
    return out;
}

RegularStateReport check_regular_state(const FiniteMarkedSpace& space, double delta,
                                       double tol_mass) {
    RegularStateReport rep;
    const std::size_t n = space.size();

    rep.ultrametric = true;
    for (std::size_t i = 0; i < n && rep.ultrametric; ++i)
        for (std::size_t j = 0; j < n && rep.ultrametric; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                if (space.dist(i, k) >
                    std::max(space.dist(i, j), space.dist(j, k)) + space.tol_ultra()) {
                    rep.ultrametric = false;
                    rep.witness = {static_cast<int>(i), static_cast<int>(j),
                                   static_cast<int>(k)};
                    break;
                }
            }
    if (!rep.ultrametric || n == 0) return rep;

    // The partition is piecewise constant in the radius; one report per band.
    std::vector<double> crit;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = space.dist(i, j);
            if (d > 0.0 && d < delta) crit.push_back(d);
        }
    crit.push_back(0.0);
    std::sort(crit.begin(), crit.end());
    crit.erase(std::unique(crit.begin(), crit.end()), crit.end());

    for (std::size_t b = 0; b < crit.size(); ++b) {
        double level =
            (b + 1 < crit.size()) ? 0.5 * (crit[b] + crit[b + 1]) : 0.5 * (crit[b] + delta);
        if (level >= delta) level = 0.5 * (crit[b] + delta);
        auto label = ball_labels(space, level);
        int nballs = *std::max_element(label.begin(), label.end()) + 1;

        BallLevelReport lv;
        lv.level = level;
        lv.balls.assign(static_cast<std::size_t>(nballs), {});
        for (std::size_t i = 0; i < n; ++i)
            lv.balls[static_cast<std::size_t>(label[i])].push_back(static_cast<int>(i));

        // Order balls by leftmost mark, collect boundaries between adjacent balls.
        std::sort(lv.balls.begin(), lv.balls.end(), [&](const auto& a, const auto& c) {
            double ma = space.atom(static_cast<std::size_t>(a.front())).mark;
            for (int ix : a) ma = std::min(ma, space.atom(static_cast<std::size_t>(ix)).mark);
            double mc = space.atom(static_cast<std::size_t>(c.front())).mark;
            for (int ix : c) mc = std::min(mc, space.atom(static_cast<std::size_t>(ix)).mark);
            return ma < mc;
        });

        lv.mass_matches_length = true;
        double prev_hi = 0.0;
        bool have_prev = false;
        for (const auto& ball : lv.balls) {
            double lo = space.atom(static_cast<std::size_t>(ball.front())).mark;
            double hi = lo;
            double w = 0.0;
            for (int ix : ball) {
                const auto& a = space.atom(static_cast<std::size_t>(ix));
                lo = std::min(lo, a.mark);
                hi = std::max(hi, a.mark);
                w += a.weight;
            }
            lv.ball_mark_lengths.push_back(hi - lo);
            lv.ball_weights.push_back(w);
            if (std::abs((hi - lo) - w) > tol_mass) lv.mass_matches_length = false;
            if (have_prev) lv.boundaries.push_back(0.5 * (prev_hi + lo));
            prev_hi = hi;
            have_prev = true;
        }
        rep.levels.push_back(std::move(lv));
    }
    return rep;
}

}  // namespace genweb
