#include "genweb/moran.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace genweb::moran {

void MigrationKernel::validate() const {
    if (support.empty()) throw std::invalid_argument("kernel support is empty");
    double s = 0.0;
    for (auto [dx, w] : support) {
        if (w < 0.0) throw std::invalid_argument("kernel weights must be nonnegative");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12)
        throw std::invalid_argument("kernel weights must sum to 1");
}

MigrationKernel MigrationKernel::reversed() const {
    MigrationKernel r;
    for (auto [dx, w] : support) r.support.emplace_back(-dx, w);
    std::sort(r.support.begin(), r.support.end());
    return r;
}

double MigrationKernel::mean() const {
    double m = 0.0;
    for (auto [dx, w] : support) m += w * dx;
    return m;
}

double MigrationKernel::sigma2() const {
    double v = 0.0;
    for (auto [dx, w] : support) v += w * dx * dx;
    return v;
}

int MigrationKernel::sample(rng::Stream& rng) const {
    double u = rng.uniform();
    double c = 0.0;
    for (auto [dx, w] : support) {
        c += w;
        if (u < c) return dx;
    }
    return support.back().first;
}

void MoranConfig::validate() const {
    if (sites < 1) throw std::invalid_argument("need at least one site");
    if (N < 1) throw std::invalid_argument("need at least one individual per site");
    if (gamma < 0.0) throw std::invalid_argument("resampling rate must be nonnegative");
    if (migration_rate < 0.0)
        throw std::invalid_argument("migration rate must be nonnegative");
    if (init_dist_cross_site < init_dist_same_site)
        throw std::invalid_argument("founder distances must be ultrametric");
    kernel.validate();
}

MoranState::MoranState(const MoranConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t total = static_cast<std::size_t>(cfg_.sites) *
                              static_cast<std::size_t>(cfg_.N);
    node_of_.resize(total);
    type_of_.assign(total, 0.0);
    arena_.reserve(total + 1024);
    for (std::size_t i = 0; i < total; ++i) {
        LineageNode n;
        n.parent = -1;
        n.birth = 0.0;
        n.founder = static_cast<std::int32_t>(i);
        arena_.push_back(n);
        node_of_[i] = static_cast<std::int32_t>(i);
    }
    if (cfg_.types_enabled) {
        if (cfg_.type_init == MoranConfig::TypeInit::SiteCoded) {
            for (std::size_t i = 0; i < total; ++i)
                type_of_[i] = static_cast<double>(i / static_cast<std::size_t>(cfg_.N)) /
                              static_cast<double>(cfg_.sites);
        } else {
            rng::Stream tr(0x7fe3u, 0, rng::Purpose::TypeInit);
            for (std::size_t i = 0; i < total; ++i) type_of_[i] = tr.uniform();
        }
    }
    const double n = static_cast<double>(cfg_.N);
    const double per_site = cfg_.migration_rate * n + cfg_.gamma * n * (n - 1.0) / 2.0;
    total_rate_ = per_site * static_cast<double>(cfg_.sites);
    migration_share_ = per_site > 0.0 ? cfg_.migration_rate * n / per_site : 0.0;
}

int MoranState::wrap_site(int site) const {
    if (cfg_.geometry == Geometry::Torus) {
        int s = site % cfg_.sites;
        return s < 0 ? s + cfg_.sites : s;
    }
    // interval with reflection
    int s = site;
    while (s < 0 || s >= cfg_.sites) {
        if (s < 0) s = -s - 1;
        if (s >= cfg_.sites) s = 2 * cfg_.sites - 1 - s;
    }
    return s;
}

std::int32_t MoranState::new_node(std::int32_t parent) {
    LineageNode n;
    n.parent = parent;
    n.birth = clock_;
    n.founder = -1;
    arena_.push_back(n);
    return static_cast<std::int32_t>(arena_.size() - 1);
}

void MoranState::step(double horizon, rng::Stream& rng) {
    if (horizon < clock_) throw std::invalid_argument("horizon before current clock");
    if (total_rate_ <= 0.0) {
        clock_ = horizon;
        return;
    }
    const auto N = static_cast<std::uint64_t>(cfg_.N);
    for (;;) {
        double dt = rng.exponential(total_rate_);
        if (clock_ + dt > horizon) {
            clock_ = horizon;
            return;
        }
        clock_ += dt;
        ++events_;
        int site = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg_.sites)));
        std::size_t base = static_cast<std::size_t>(site) * N;
        if (rng.uniform() < migration_share_) {
            // replacement migration: slot at `site` becomes a copy of a uniform
            // individual at the source site (reversed-kernel displacement)
            auto slot = static_cast<std::size_t>(rng.uniform_int(N));
            int dx = cfg_.kernel.sample(rng);     // forward displacement
            int src_site = wrap_site(site - dx);  // mass into site comes from v - dx
            auto src_slot = static_cast<std::size_t>(rng.uniform_int(N));
            std::size_t src = static_cast<std::size_t>(src_site) * N + src_slot;
            node_of_[base + slot] = new_node(node_of_[src]);
            type_of_[base + slot] = type_of_[src];
        } else {
            // resampling: unordered co-located pair, uniform parent
            auto a = static_cast<std::size_t>(rng.uniform_int(N));
            auto b = static_cast<std::size_t>(rng.uniform_int(N - 1));
            if (b >= a) ++b;
            if (rng.uniform() < 0.5) std::swap(a, b);
            // a is the parent, b is replaced by the second child
            node_of_[base + b] = new_node(node_of_[base + a]);
            type_of_[base + b] = type_of_[base + a];
        }
    }
}

int MoranState::population_at(int site) const {
    if (site < 0 || site >= cfg_.sites) throw std::out_of_range("site outside geography");
    return cfg_.N;  // structural: every event preserves per-site counts
}

double MoranState::founder_distance(std::int32_t f1, std::int32_t f2) const {
    if (f1 == f2) return cfg_.init_dist_same_site;
    int site1 = static_cast<int>(f1) / cfg_.N;
    int site2 = static_cast<int>(f2) / cfg_.N;
    return site1 == site2 ? cfg_.init_dist_same_site : cfg_.init_dist_cross_site;
}

std::optional<double> MoranState::mrca_time(int site_a, int slot_a, int site_b,
                                            int slot_b) const {
    std::size_t ia = static_cast<std::size_t>(site_a) * cfg_.N + slot_a;
    std::size_t ib = static_cast<std::size_t>(site_b) * cfg_.N + slot_b;
    std::int32_t na = node_of_[ia], nb = node_of_[ib];
    double ea = clock_, eb = clock_;
    while (na != nb) {
        const LineageNode& A = arena_[static_cast<std::size_t>(na)];
        const LineageNode& B = arena_[static_cast<std::size_t>(nb)];
        if (A.birth >= B.birth) {
            if (A.parent < 0) return std::nullopt;  // distinct roots
            ea = A.birth;
            na = A.parent;
        } else {
            if (B.parent < 0) return std::nullopt;
            eb = B.birth;
            nb = B.parent;
        }
    }
    return std::min(ea, eb);
}

double MoranState::pair_distance(int site_a, int slot_a, int site_b, int slot_b) const {
    if (site_a == site_b && slot_a == slot_b) return 0.0;
    auto tau = mrca_time(site_a, slot_a, site_b, slot_b);
    if (tau) return 2.0 * (clock_ - *tau);
    std::size_t ia = static_cast<std::size_t>(site_a) * cfg_.N + slot_a;
    std::size_t ib = static_cast<std::size_t>(site_b) * cfg_.N + slot_b;
    std::int32_t na = node_of_[ia], nb = node_of_[ib];
    while (arena_[static_cast<std::size_t>(na)].parent >= 0)
        na = arena_[static_cast<std::size_t>(na)].parent;
    while (arena_[static_cast<std::size_t>(nb)].parent >= 0)
        nb = arena_[static_cast<std::size_t>(nb)].parent;
    return 2.0 * clock_ + founder_distance(arena_[static_cast<std::size_t>(na)].founder,
                                           arena_[static_cast<std::size_t>(nb)].founder);
}

double MoranState::type_of(int site, int slot) const {
    return type_of_[static_cast<std::size_t>(site) * cfg_.N + slot];
}

FiniteMarkedSpace MoranState::sample_genealogy(int n, int win_lo, int win_hi,
                                               rng::Stream& rng) const {
    if (n < 1) throw std::invalid_argument("need at least one sampled individual");
    if (win_lo > win_hi || win_lo < 0 || win_hi >= cfg_.sites)
        throw std::invalid_argument("empty or invalid sampling window");
    const int width = win_hi - win_lo + 1;
    std::vector<std::pair<int, int>> picks;
    for (int i = 0; i < n; ++i) {
        int site = win_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width)));
        int slot = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(cfg_.N)));
        picks.emplace_back(site, slot);
    }
    std::vector<Atom> atoms;
    for (int i = 0; i < n; ++i) {
        Atom a;
        a.id = i;
        a.mark = mark_of_site(picks[static_cast<std::size_t>(i)].first);
        a.weight = 1.0 / static_cast<double>(cfg_.N);
        if (cfg_.types_enabled)
            a.type = type_of(picks[static_cast<std::size_t>(i)].first,
                             picks[static_cast<std::size_t>(i)].second);
        atoms.push_back(a);
    }
    std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = pair_distance(picks[static_cast<std::size_t>(i)].first,
                                     picks[static_cast<std::size_t>(i)].second,
                                     picks[static_cast<std::size_t>(j)].first,
                                     picks[static_cast<std::size_t>(j)].second);
            dist[static_cast<std::size_t>(i) * n + j] = d;
            dist[static_cast<std::size_t>(j) * n + i] = d;
        }
    return FiniteMarkedSpace(std::move(atoms), std::move(dist), true, 0.0);
}

FiniteMarkedSpace MoranState::population_space(const std::vector<int>& sites) const {
    std::vector<std::pair<int, int>> picks;
    for (int s : sites)
        for (int slot = 0; slot < cfg_.N; ++slot) picks.emplace_back(s, slot);
    const std::size_t n = picks.size();
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < n; ++i) {
        Atom a;
        a.id = static_cast<int>(i);
        a.mark = mark_of_site(picks[i].first);
        a.weight = 1.0 / static_cast<double>(cfg_.N);
        if (cfg_.types_enabled) a.type = type_of(picks[i].first, picks[i].second);
        atoms.push_back(a);
    }
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = pair_distance(picks[i].first, picks[i].second, picks[j].first,
                                     picks[j].second);
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    return FiniteMarkedSpace(std::move(atoms), std::move(dist), true, 0.0);
}

std::map<std::pair<int, int>, double> MoranState::project_measure(int win_lo, int win_hi,
                                                                  int bins) const {
    if (!cfg_.types_enabled) throw std::logic_error("type marks are disabled");
    if (bins < 1) throw std::invalid_argument("need at least one bin");
    std::map<std::pair<int, int>, double> out;
    for (int s = std::max(0, win_lo); s <= std::min(cfg_.sites - 1, win_hi); ++s)
        for (int slot = 0; slot < cfg_.N; ++slot) {
            int b = std::min(bins - 1, static_cast<int>(type_of(s, slot) * bins));
            out[{s, b}] += 1.0 / static_cast<double>(cfg_.N);
        }
    return out;
}

double eval_gen_fv(const FiniteMarkedSpace& space, const Monomial& m,
                   const MigrationKernel& abar, double gamma) {
    const std::size_t na = space.size();
    for (std::size_t i = 0; i < na; ++i)
        if (std::abs(space.atom(i).mark - std::round(space.atom(i).mark)) > 1e-9)
            throw std::invalid_argument("marks must lie on the integer lattice");
    if (na == 0) return 0.0;

    const int n = m.n;
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::vector<double> marks(static_cast<std::size_t>(n));
    std::vector<double> dists(static_cast<std::size_t>(m.pair_count()));
    std::vector<double> theta(static_cast<std::size_t>(m.pair_count()));
    std::vector<double> mmarks(static_cast<std::size_t>(n));

    double total = 0.0;
    for (;;) {
        double wprod = 1.0;
        for (int s = 0; s < n; ++s) {
            const Atom& a =
                space.atom(static_cast<std::size_t>(idx[static_cast<std::size_t>(s)]));
            wprod *= a.weight;
            marks[static_cast<std::size_t>(s)] = a.mark;
        }
        if (wprod != 0.0) {
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    dists[pair_index(i, j, n)] = space.dist(
                        static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]),
                        static_cast<std::size_t>(idx[static_cast<std::size_t>(j)]));
            const double gval = m.g(marks);
            const double phival = m.phi(dists);

            // aging: 2 sum_{k<l} d phi / d r_{k,l}
            if (gval != 0.0 && n > 1) {
                double aging = 0.0;
                for (int k = 0; k < n; ++k)
                    for (int l = k + 1; l < n; ++l) aging += phi_partial(m, k, l, dists);
                total += 2.0 * wprod * gval * aging;
            }

            // migration: sum_j sum_dx abar(dx) (g(.., v_j + dx, ..) - g)
            if (phival != 0.0) {
                double mig = 0.0;
                for (int j = 0; j < n; ++j) {
                    mmarks = marks;
                    for (auto [dx, wk] : abar.support) {
                        mmarks[static_cast<std::size_t>(j)] =
                            marks[static_cast<std::size_t>(j)] + dx;
                        mig += wk * (m.g(mmarks) - gval);
                    }
                    mmarks[static_cast<std::size_t>(j)] = marks[static_cast<std::size_t>(j)];
                }
                total += wprod * phival * mig;
            }

            // resampling: co-located pairs, the l-th replaced by the k-th
            if (gamma > 0.0 && gval != 0.0 && n > 1) {
                double res = 0.0;
                for (int k = 0; k < n; ++k)
                    for (int l = k + 1; l < n; ++l) {
                        if (marks[static_cast<std::size_t>(k)] !=
                            marks[static_cast<std::size_t>(l)])
                            continue;
                        theta = dists;
                        for (int i = 0; i < n; ++i) {
                            if (i == l) continue;
                            double rik =
                                i == k ? 0.0
                                       : dists[pair_index(std::min(i, k), std::max(i, k), n)];
                            theta[pair_index(std::min(i, l), std::max(i, l), n)] = rik;
                        }
                        res += m.phi(theta) - phival;
                    }
                total += kFvResamplingPrefactor * gamma * wprod * gval * res;
            }
        }
        int s = n - 1;
        while (s >= 0 && ++idx[static_cast<std::size_t>(s)] == static_cast<int>(na)) {
            idx[static_cast<std::size_t>(s)] = 0;
            --s;
        }
        if (s < 0) break;
    }
    return total;
}

}  // namespace genweb::moran
