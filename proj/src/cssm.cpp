#include "genweb/cssm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>

#include "genweb/cbm.hpp"
#include "genweb/km_oracle.hpp"
#include "genweb/parallel.hpp"

namespace genweb::cssm {

void RegularState::validate() const {
    if (window_hi <= window_lo) throw std::invalid_argument("empty window");
    double prev = window_lo;
    for (const auto& b : boundaries) {
        if (b.x <= prev || b.x >= window_hi)
            throw std::invalid_argument("boundaries must be sorted inside the window");
        if (b.d <= 0.0) throw std::invalid_argument("gap distances must be positive");
        prev = b.x;
    }
}

double RegularState::point_distance(double u, double v) const {
    if (u == v) return 0.0;
    const double lo = std::min(u, v), hi = std::max(u, v);
    double d = 0.0;
    for (const auto& b : boundaries)
        if (b.x > lo && b.x < hi) d = std::max(d, b.d);
    return d;
}

double RegularState::side_distance(std::size_t bi, int side, double u) const {
    const auto& b = boundaries[bi];
    double d = point_distance(b.x, u);
    // the side copy facing away from u also crosses its own boundary
    if ((side > 0 && u > b.x) || (side < 0 && u < b.x)) return d;
    return std::max(d, b.d);
}

double RegularState::gap_sum() const {
    double s = 0.0;
    for (const auto& b : boundaries) s += b.d;
    return s;
}

int RegularState::count_at_least(double threshold) const {
    int c = 0;
    for (const auto& b : boundaries)
        if (b.d >= threshold) ++c;
    return c;
}

InitialSpace InitialSpace::flat() { return InitialSpace(); }

InitialSpace InitialSpace::from_atoms(FiniteMarkedSpace space) {
    InitialSpace s;
    s.kind_ = Kind::Atoms;
    s.atoms_ = std::move(space);
    return s;
}

InitialSpace InitialSpace::from_regular(RegularState state) {
    state.validate();
    InitialSpace s;
    s.kind_ = Kind::Regular;
    s.regular_ = std::move(state);
    return s;
}

int InitialSpace::sample_atom(double u, rng::Stream& rng, int& fallbacks) const {
    const auto& sp = *atoms_;
    // conditional draw among atoms at exactly this mark, by weight
    double wsum = 0.0;
    for (std::size_t a = 0; a < sp.size(); ++a)
        if (std::abs(sp.atom(a).mark - u) <= 1e-6) wsum += sp.atom(a).weight;
    if (wsum > 0.0) {
        double pick = rng.uniform() * wsum;
        for (std::size_t a = 0; a < sp.size(); ++a) {
            if (std::abs(sp.atom(a).mark - u) > 1e-6) continue;
            pick -= sp.atom(a).weight;
            if (pick <= 0.0) return static_cast<int>(a);
        }
    }
    // nearest-atom fallback
    ++fallbacks;
    int best = 0;
    double bd = std::abs(sp.atom(0).mark - u);
    for (std::size_t a = 1; a < sp.size(); ++a) {
        double d = std::abs(sp.atom(a).mark - u);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(a);
        }
    }
    return best;
}

AncestorDraw InitialSpace::resolve(const std::vector<double>& landings,
                                   rng::Stream& rng, int& fallbacks) const {
    AncestorDraw d;
    d.owner_ = this;
    switch (kind_) {
        case Kind::Flat:
            d.resolved_.assign(landings.size(), 0.0);
            break;
        case Kind::Regular: {
            const auto& st = *regular_;
            for (double u : landings) {
                double cu = std::clamp(u, st.window_lo, st.window_hi);
                if (cu != u) ++fallbacks;  // landing outside the window
                d.resolved_.push_back(cu);
            }
            break;
        }
        case Kind::Atoms: {
            if (atoms_->size() == 0)
                throw std::invalid_argument("empty atomic initial space");
            for (double u : landings) d.atom_ids_.push_back(sample_atom(u, rng, fallbacks));
            break;
        }
    }
    return d;
}

double AncestorDraw::dist(std::size_t i, std::size_t j) const {
    if (!atom_ids_.empty())
        return owner_->atoms_->dist(static_cast<std::size_t>(atom_ids_[i]),
                                    static_cast<std::size_t>(atom_ids_[j]));
    if (owner_->kind_ == InitialSpace::Kind::Flat) return 0.0;
    return owner_->regular_->point_distance(resolved_[i], resolved_[j]);
}

CssmSample sample_cssm(const InitialSpace& initial, double t,
                       const std::vector<double>& positions, double h,
                       std::uint64_t noise_key, rng::Stream& ancestor_rng) {
    if (t <= 0.0) throw std::invalid_argument("time must be positive");
    if (positions.empty()) throw std::invalid_argument("need at least one position");

    cbm::CoalescingSystem sys(positions, true);
    cbm::SimParams p;
    p.h = h;
    p.track_pairs = true;
    sys.advance(t, p, noise_key);

    const std::size_t n = positions.size();
    CssmSample out;
    out.t = t;
    out.positions = positions;
    out.tau_hat.assign(n * n, -1.0);
    out.landings.resize(n);
    out.dist.assign(n * n, 0.0);

    for (std::size_t i = 0; i < n; ++i) out.landings[i] = sys.position_of(i);

    // one ancestor per surviving cluster; merged starts share it
    std::vector<std::size_t> cluster_rep(n);
    std::vector<double> rep_landing;
    std::vector<std::size_t> rep_index(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t rep = i;
        for (std::size_t j = 0; j < i; ++j)
            if (sys.same_cluster(i, j)) {
                rep = j;
                break;
            }
        cluster_rep[i] = rep;
        if (rep == i) {
            rep_index[i] = rep_landing.size();
            rep_landing.push_back(out.landings[i]);
        } else {
            rep_index[i] = rep_index[rep];
        }
    }
    AncestorDraw anc = initial.resolve(rep_landing, ancestor_rng, out.nearest_fallbacks);

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double mt = sys.merge_time(i, j);
            if (mt < cbm::kNoMerge) {
                double tau = t - mt;  // simulation runs backward from t to 0
                out.tau_hat[i * n + j] = out.tau_hat[j * n + i] = tau;
                double r = 2.0 * (t - tau);
                out.dist[i * n + j] = out.dist[j * n + i] = r;
            } else {
                double r = 2.0 * t + anc.dist(rep_index[i], rep_index[j]);
                out.dist[i * n + j] = out.dist[j * n + i] = r;
            }
        }
    return out;
}

ExtractResult extract_regular(const InitialSpace& initial, double t, double delta,
                              double window_lo, double window_hi, double grid_eta,
                              double h, std::uint64_t noise_key,
                              rng::Stream& ancestor_rng) {
    if (t <= delta || delta <= 0.0)
        throw std::invalid_argument("need t > delta > 0");
    if (grid_eta <= 0.0) throw std::invalid_argument("grid spacing must be positive");
    if (window_hi <= window_lo) {
        ExtractResult empty;
        empty.state.window_lo = window_lo;
        empty.state.window_hi = window_hi;
        return empty;
    }

    std::vector<double> grid;
    for (double x = window_lo; x <= window_hi + 0.5 * grid_eta; x += grid_eta)
        grid.push_back(x);
    const std::size_t m = grid.size();

    cbm::CoalescingSystem sys(grid, false);
    cbm::SimParams p;
    p.h = h;

    // adjacent-pair merge lags observed by slicing the backward run; the
    // midpoint convention removes the first-order slice quantization
    std::vector<double> lag(m - 1, -1.0);
    double advanced = 0.0;
    const double slice = h;
    while (advanced < t - 1e-15) {
        double dt = std::min(slice, t - advanced);
        sys.advance(dt, p, noise_key);
        advanced += dt;
        for (std::size_t i = 0; i + 1 < m; ++i)
            if (lag[i] < 0.0 && sys.same_cluster(i, i + 1)) lag[i] = advanced - 0.5 * dt;
    }

    ExtractResult res;
    res.state.window_lo = window_lo;
    res.state.window_hi = window_hi;
    res.state.resolution = 0.0;
    res.window_length = window_hi - window_lo;
    int fallbacks = 0;
    std::vector<double> landings(m);
    for (std::size_t i = 0; i < m; ++i) landings[i] = sys.position_of(i);
    AncestorDraw anc = initial.resolve(landings, ancestor_rng, fallbacks);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        double d;
        if (lag[i] >= 0.0) {
            d = 2.0 * lag[i];
        } else {
            d = 2.0 * t + anc.dist(i, i + 1);
        }
        if (d > 0.0) {
            double x = 0.5 * (grid[i] + grid[i + 1]);
            if (x > window_lo && x < window_hi)
                res.state.boundaries.push_back({x, d});
        }
        if (lag[i] < 0.0 || lag[i] >= delta) ++res.count_at_lag;
    }
    res.state.rr_certified = false;
    return res;
}

namespace {

struct Cell {
    double lo = 0.0, hi = 0.0;
    int left_boundary = -1;   // index into boundaries, -1 at the window edge
    int right_boundary = -1;
};

std::vector<Cell> make_cells(const RegularState& st) {
    std::vector<Cell> cells;
    double prev = st.window_lo;
    int prev_b = -1;
    for (std::size_t b = 0; b < st.boundaries.size(); ++b) {
        cells.push_back({prev, st.boundaries[b].x, prev_b, static_cast<int>(b)});
        prev = st.boundaries[b].x;
        prev_b = static_cast<int>(b);
    }
    cells.push_back({prev, st.window_hi, prev_b, -1});
    return cells;
}

// distance between cells: largest gap of any boundary between them
double cell_distance(const RegularState& st, std::size_t a, std::size_t b,
                     const std::vector<Cell>& cells) {
    if (a == b) return 0.0;
    if (a > b) std::swap(a, b);
    double d = 0.0;
    for (std::size_t k = a; k < b; ++k)
        d = std::max(d, st.boundaries[static_cast<std::size_t>(cells[k].right_boundary)].d);
    return d;
}

// Gauss-Legendre integral of f over [lo,hi], split at the support edges so
// the bump truncation does not poison the quadrature
template <class F>
double gl_integral(double lo, double hi, int nodes, double sup_lo, double sup_hi,
                   const F& f) {
    static thread_local std::map<int, std::pair<std::vector<double>, std::vector<double>>>
        cache;
    auto& [xs, ws] = cache[nodes];
    if (xs.empty()) km::gauss_legendre(nodes, xs, ws);
    lo = std::max(lo, sup_lo);
    hi = std::min(hi, sup_hi);
    const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
    if (half <= 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t q = 0; q < xs.size(); ++q) acc += ws[q] * f(mid + half * xs[q]);
    return acc * half;
}

// integral of g over a product of cells, one coordinate pinned per entry of
// `pinned` (coordinate index -> value)
double integrate_g_over_cells(const Monomial& m, const std::vector<Cell>& cells,
                              const std::vector<int>& cell_of_coord,
                              const std::map<int, double>& pinned, int gl_nodes) {
    const int n = m.n;
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    // recursive tensor quadrature over the free coordinates
    std::vector<int> free_coords;
    for (int i = 0; i < n; ++i)
        if (!pinned.count(i)) free_coords.push_back(i);
    for (auto& [ci, v] : pinned) x[static_cast<std::size_t>(ci)] = v;

    std::function<double(std::size_t)> rec = [&](std::size_t fi) -> double {
        if (fi == free_coords.size()) return m.g(x);
        int coord = free_coords[fi];
        const auto& sup = m.support.bounds[std::min<std::size_t>(
            static_cast<std::size_t>(coord), m.support.bounds.size() - 1)];
        const Cell& c = cells[static_cast<std::size_t>(cell_of_coord[
            static_cast<std::size_t>(coord)])];
        return gl_integral(c.lo, c.hi, gl_nodes, sup[0], sup[1], [&](double v) {
            x[static_cast<std::size_t>(coord)] = v;
            return rec(fi + 1);
        });
    };
    return rec(0);
}

double laplacian_g(const Monomial& m, std::span<const double> x) {
    if (m.laplacian_g) return m.laplacian_g(x);
    const double h = 1e-4;
    std::vector<double> xp(x.begin(), x.end());
    double base = m.g(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        double up = m.g(xp);
        xp[i] = x[i] - h;
        double dn = m.g(xp);
        xp[i] = x[i];
        acc += (up - 2.0 * base + dn) / (h * h);
    }
    return acc;
}

}  // namespace

double eval_gen_cs(const RegularState& state, const Monomial& m, const CsGridSpec& grid) {
    state.validate();
    const int n = m.n;
    double delta_eff = 0.0;
    if (m.delta_reg) {
        delta_eff = *m.delta_reg;
        if (state.resolution > delta_eff)
            throw std::invalid_argument(
                "state resolution too coarse for the monomial flatness radius");
    } else if (n >= 2) {
        // no distance coordinates means trivially regular
        if (!state.rr_certified)
            throw std::invalid_argument(
                "plain monomials need an rr-certified state (generator undefined)");
    }

    auto cells = make_cells(state);
    const std::size_t nc = cells.size();

    // enumerate cell tuples for the n coordinates
    std::vector<int> tup(static_cast<std::size_t>(n), 0);
    std::vector<double> rbuf(static_cast<std::size_t>(m.pair_count()));
    double term_d = 0.0, term_a = 0.0;
    for (;;) {
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                rbuf[pair_index(i, j, n)] =
                    cell_distance(state, static_cast<std::size_t>(tup[static_cast<std::size_t>(i)]),
                                  static_cast<std::size_t>(tup[static_cast<std::size_t>(j)]),
                                  cells);
        const double phival = m.phi(rbuf);
        double dphisum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) dphisum += phi_partial(m, i, j, rbuf);

        if (phival != 0.0 || dphisum != 0.0) {
            // integral of Delta g and of g over this cell tuple
            std::vector<int> cell_of(tup.begin(), tup.end());
            std::map<int, double> no_pin;
            if (phival != 0.0) {
                // 1/2 int phi * Delta g : quadrature of the analytic or FD Laplacian
                std::vector<double> x(static_cast<std::size_t>(n));
                std::function<double(std::size_t)> rec = [&](std::size_t ci) -> double {
                    if (ci == static_cast<std::size_t>(n))
                        return laplacian_g(m, x);
                    const auto& sup = m.support.bounds[std::min<std::size_t>(
                        ci, m.support.bounds.size() - 1)];
                    const Cell& c = cells[static_cast<std::size_t>(cell_of[ci])];
                    return gl_integral(c.lo, c.hi, grid.gl_nodes_per_cell, sup[0], sup[1],
                                       [&](double v) {
                                           x[ci] = v;
                                           return rec(ci + 1);
                                       });
                };
                term_d += 0.5 * phival * rec(0);
            }
            if (dphisum != 0.0) {
                double gint =
                    integrate_g_over_cells(m, cells, cell_of, no_pin, grid.gl_nodes_per_cell);
                term_a += 2.0 * dphisum * gint;
            }
        }
        int s = n - 1;
        while (s >= 0 && ++tup[static_cast<std::size_t>(s)] == static_cast<int>(nc)) {
            tup[static_cast<std::size_t>(s)] = 0;
            --s;
        }
        if (s < 0) break;
    }

    // Resampling over resolved boundary side pairs with gap above delta_eff.
    // The sum runs over ordered slot pairs and both straddle orientations and
    // is halved: the boundary-collapse rate measured from the backward-path
    // dynamics is one per unordered slot pair and side, not two (the ordered
    // double sum would double-count the same collapse event).
    double term_r = 0.0;
    if (n >= 2) {
        std::vector<double> rmod(static_cast<std::size_t>(m.pair_count()));
        for (std::size_t b = 0; b < state.boundaries.size(); ++b) {
            if (state.boundaries[b].d <= delta_eff) continue;
            const double bx = state.boundaries[b].x;
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    if (k == l) continue;
                    // x_k and x_l sit on opposite side copies of the boundary;
                    // both cross assignments contribute.
                    for (int side_k : {+1, -1}) {
                        const int side_l = -side_k;
                        // remaining coordinates range over cell tuples
                        std::vector<int> rest;
                        for (int i = 0; i < n; ++i)
                            if (i != k && i != l) rest.push_back(i);
                        std::vector<int> rtup(rest.size(), 0);
                        for (;;) {
                            std::vector<int> cell_of(static_cast<std::size_t>(n), 0);
                            for (std::size_t ri = 0; ri < rest.size(); ++ri)
                                cell_of[static_cast<std::size_t>(rest[ri])] = rtup[ri];

                            // distances among the remaining coordinates
                            auto cellmid = [&](int coord) {
                                const Cell& c =
                                    cells[static_cast<std::size_t>(cell_of[
                                        static_cast<std::size_t>(coord)])];
                                return 0.5 * (c.lo + c.hi);
                            };
                            for (int i = 0; i < n; ++i)
                                for (int j = i + 1; j < n; ++j) {
                                    double rij;
                                    bool i_pin = (i == k || i == l);
                                    bool j_pin = (j == k || j == l);
                                    if (i_pin && j_pin) {
                                        rij = state.boundaries[b].d;
                                    } else if (i_pin) {
                                        int side = (i == k) ? side_k : side_l;
                                        rij = state.side_distance(b, side, cellmid(j));
                                    } else if (j_pin) {
                                        int side = (j == k) ? side_k : side_l;
                                        rij = state.side_distance(b, side, cellmid(i));
                                    } else {
                                        rij = cell_distance(
                                            state,
                                            static_cast<std::size_t>(cell_of[
                                                static_cast<std::size_t>(i)]),
                                            static_cast<std::size_t>(cell_of[
                                                static_cast<std::size_t>(j)]),
                                            cells);
                                    }
                                    rbuf[pair_index(i, j, n)] = rij;
                                }
                            // theta_{k,l}: distances to l replaced by distances to k
                            rmod = rbuf;
                            for (int i = 0; i < n; ++i) {
                                if (i == l) continue;
                                double rik = i == k ? 0.0
                                                    : rbuf[pair_index(std::min(i, k),
                                                                      std::max(i, k), n)];
                                rmod[pair_index(std::min(i, l), std::max(i, l), n)] = rik;
                            }
                            double diff = m.phi(rmod) - m.phi(rbuf);
                            if (diff != 0.0) {
                                std::map<int, double> pinned{{k, bx}, {l, bx}};
                                double gint = integrate_g_over_cells(
                                    m, cells, cell_of, pinned, grid.gl_nodes_per_cell);
                                term_r += 0.5 * diff * gint;
                            }
                            std::size_t ri = 0;
                            while (ri < rtup.size() &&
                                   ++rtup[ri] == static_cast<int>(nc)) {
                                rtup[ri] = 0;
                                ++ri;
                            }
                            if (ri == rtup.size()) break;
                        }
                    }
                }
        }
    }
    return term_d + term_a + term_r;
}

double polynomial_on_grid(const InitialSpace& init, const Monomial& m,
                          double grid_spacing) {
    if (grid_spacing <= 0.0) throw std::invalid_argument("grid spacing must be positive");
    // midpoint nodes over the support box (first coordinate's bounds reused)
    const auto& b = m.support.bounds.at(0);
    std::vector<double> nodes;
    for (double x = b[0] + 0.5 * grid_spacing; x < b[1]; x += grid_spacing)
        nodes.push_back(x);
    const std::size_t nn = nodes.size();
    const int n = m.n;

    rng::Stream dummy(0, 0, rng::Purpose::CssmNoise);
    int fallbacks = 0;
    AncestorDraw anc = init.resolve(nodes, dummy, fallbacks);
    std::vector<int> tup(static_cast<std::size_t>(n), 0);
    std::vector<double> marks(static_cast<std::size_t>(n));
    std::vector<double> rbuf(static_cast<std::size_t>(m.pair_count()));
    const double wn = std::pow(grid_spacing, n);
    double acc = 0.0;
    for (;;) {
        for (int i = 0; i < n; ++i)
            marks[static_cast<std::size_t>(i)] = nodes[static_cast<std::size_t>(
                tup[static_cast<std::size_t>(i)])];
        double gv = m.g(marks);
        if (gv != 0.0) {
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    rbuf[pair_index(i, j, n)] = anc.dist(
                        static_cast<std::size_t>(tup[static_cast<std::size_t>(i)]),
                        static_cast<std::size_t>(tup[static_cast<std::size_t>(j)]));
            acc += gv * m.phi(rbuf) * wn;
        }
        int s = n - 1;
        while (s >= 0 && ++tup[static_cast<std::size_t>(s)] == static_cast<int>(nn)) {
            tup[static_cast<std::size_t>(s)] = 0;
            --s;
        }
        if (s < 0) break;
    }
    return acc;
}

PolyEstimate estimate_polynomial(const InitialSpace& init, double t, const Monomial& m,
                                 double grid_spacing, double h, std::int64_t replicas,
                                 std::uint64_t seed, int workers) {
    if (replicas <= 0) throw std::invalid_argument("no data: replicas must be positive");
    const auto& b = m.support.bounds.at(0);
    std::vector<double> nodes;
    for (double x = b[0] + 0.5 * grid_spacing; x < b[1]; x += grid_spacing)
        nodes.push_back(x);
    const std::size_t nn = nodes.size();
    const int n = m.n;
    const double wn = std::pow(grid_spacing, n);

    auto acc = parallel_reduce<Accumulator>(
        replicas, workers,
        [&](std::int64_t rep, Accumulator& local) {
            std::uint64_t key = rng::stream_key(seed, static_cast<std::uint64_t>(rep),
                                                rng::Purpose::CssmNoise);
            rng::Stream anc(seed, static_cast<std::uint64_t>(rep),
                            rng::Purpose::Experiment);
            auto sample = sample_cssm(init, t, nodes, h, key, anc);

            std::vector<int> tup(static_cast<std::size_t>(n), 0);
            std::vector<double> marks(static_cast<std::size_t>(n));
            std::vector<double> rbuf(static_cast<std::size_t>(m.pair_count()));
            double val = 0.0;
            for (;;) {
                for (int i = 0; i < n; ++i)
                    marks[static_cast<std::size_t>(i)] = nodes[static_cast<std::size_t>(
                        tup[static_cast<std::size_t>(i)])];
                double gv = m.g(marks);
                if (gv != 0.0) {
                    for (int i = 0; i < n; ++i)
                        for (int j = i + 1; j < n; ++j)
                            rbuf[pair_index(i, j, n)] = sample.r(
                                static_cast<std::size_t>(tup[static_cast<std::size_t>(i)]),
                                static_cast<std::size_t>(tup[static_cast<std::size_t>(j)]));
                    val += gv * m.phi(rbuf) * wn;
                }
                int s = n - 1;
                while (s >= 0 &&
                       ++tup[static_cast<std::size_t>(s)] == static_cast<int>(nn)) {
                    tup[static_cast<std::size_t>(s)] = 0;
                    --s;
                }
                if (s < 0) break;
            }
            local.add(val);
        },
        8);

    PolyEstimate e;
    e.mean = acc.mean();
    e.se = acc.std_error();
    e.replicas = replicas;
    return e;
}

}  // namespace genweb::cssm
