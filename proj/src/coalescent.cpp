#include "genweb/coalescent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genweb/cbm.hpp"

namespace genweb::coalescent {

void SpaceTimeSpec::validate() const {
    if (levels.empty()) throw std::invalid_argument("need at least one level");
    double prev = -1.0;
    for (const auto& lv : levels) {
        if (lv.t_k <= prev) throw std::invalid_argument("level times must increase");
        if (lv.t_k > horizon) throw std::invalid_argument("level time beyond horizon");
        if (lv.positions.empty()) throw std::invalid_argument("level has no particles");
        prev = lv.t_k;
    }
}

int SpaceTimeSpec::total_particles() const {
    int n = 0;
    for (const auto& lv : levels) n += static_cast<int>(lv.positions.size());
    return n;
}

CoalescentState CoalescentState::singletons(const std::vector<double>& positions) {
    CoalescentState s;
    const std::size_t n = positions.size();
    s.activation_.assign(n, 0.0);
    s.origin_ = positions;
    s.merge_.assign(n * n, kNeverMerged);
    for (std::size_t i = 0; i < n; ++i) s.merge_[i * n + i] = 0.0;
    s.parent_.resize(n);
    for (std::size_t i = 0; i < n; ++i) s.parent_[i] = static_cast<int>(i);
    s.root_pos_ = positions;
    return s;
}

CoalescentState CoalescentState::frozen(const SpaceTimeSpec& spec) {
    spec.validate();
    std::vector<double> pos;
    std::vector<double> act;
    for (const auto& lv : spec.levels)
        for (double x : lv.positions) {
            pos.push_back(x);
            act.push_back(spec.horizon - lv.t_k);
        }
    CoalescentState s = singletons(pos);
    s.activation_ = std::move(act);
    const std::size_t n = s.activation_.size();
    for (std::size_t i = 0; i < n; ++i) s.merge_[i * n + i] = s.activation_[i];
    return s;
}

CoalescentState CoalescentState::brownian(const std::vector<double>& starts,
                                          double horizon, double h,
                                          std::uint64_t noise_key) {
    auto run = cbm::simulate_cbm(starts, horizon, h, noise_key);
    CoalescentState s = singletons(starts);
    const std::size_t n = starts.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double mt = run.mt(i, j);
            s.merge_[i * n + j] = mt == cbm::kNoMerge ? kNeverMerged : mt;
        }
    }
    // rebuild the forest from the merge relation
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (s.merge_[i * n + j] < kNeverMerged)
                s.unite(static_cast<int>(i), static_cast<int>(j));
    std::vector<double> rp(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        rp[static_cast<std::size_t>(s.find(static_cast<int>(i)))] = run.final_pos[i];
    s.root_pos_ = std::move(rp);
    s.clock_ = horizon;
    return s;
}

int CoalescentState::find(int i) const {
    while (parent_[static_cast<std::size_t>(i)] != i) {
        parent_[static_cast<std::size_t>(i)] =
            parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(i)])];
        i = parent_[static_cast<std::size_t>(i)];
    }
    return i;
}

void CoalescentState::unite(int i, int j) {
    int ri = find(i), rj = find(j);
    if (ri == rj) return;
    if (rj < ri) std::swap(ri, rj);
    parent_[static_cast<std::size_t>(rj)] = ri;
}

int CoalescentState::block_root(int i) const { return find(i); }

double CoalescentState::block_position(int i) const {
    return root_pos_[static_cast<std::size_t>(find(i))];
}

int CoalescentState::block_count() const {
    int c = 0;
    for (int i = 0; i < n(); ++i)
        if (find(i) == i) ++c;
    return c;
}

std::vector<int> CoalescentState::block_representatives() const {
    std::vector<int> reps;
    for (int i = 0; i < n(); ++i)
        if (find(i) == i) reps.push_back(i);
    return reps;
}

double CoalescentState::merge_T(int i, int j) const {
    return merge_[static_cast<std::size_t>(i) * activation_.size() +
                  static_cast<std::size_t>(j)];
}

double CoalescentState::rdist(int i, int j) const {
    const double s = clock_;
    const double tij = merge_T(i, j);
    return 2.0 * std::min(s, tij) - std::min(s, activation_[static_cast<std::size_t>(i)]) -
           std::min(s, activation_[static_cast<std::size_t>(j)]);
}

void CoalescentState::step(double horizon, double gamma,
                           const moran::MigrationKernel& abar, int torus_sites,
                           rng::Stream& rng, int finite_N) {
    if (horizon < clock_) throw std::invalid_argument("horizon before current clock");
    const int nn = n();

    auto wrap = [&](double x) {
        if (torus_sites <= 0) return x;
        double s = std::fmod(x, static_cast<double>(torus_sites));
        return s < 0.0 ? s + torus_sites : s;
    };

    while (clock_ < horizon) {
        std::vector<int> roots;
        for (int i = 0; i < nn; ++i)
            if (find(i) == i && active(i)) roots.push_back(i);
        std::vector<std::pair<int, int>> pairs;
        for (std::size_t a = 0; a < roots.size(); ++a)
            for (std::size_t b = a + 1; b < roots.size(); ++b)
                if (root_pos_[static_cast<std::size_t>(roots[a])] ==
                    root_pos_[static_cast<std::size_t>(roots[b])])
                    pairs.emplace_back(roots[a], roots[b]);

        double next_act = horizon;
        for (int i = 0; i < nn; ++i)
            if (activation_[static_cast<std::size_t>(i)] > clock_)
                next_act = std::min(next_act, activation_[static_cast<std::size_t>(i)]);

        const double rate = static_cast<double>(roots.size()) +
                            gamma * static_cast<double>(pairs.size());
        if (rate <= 0.0) {
            clock_ = next_act;
            continue;
        }
        double dt = rng.exponential(rate);
        if (clock_ + dt >= next_act) {
            clock_ = next_act;  // activation or horizon boundary
            continue;
        }
        clock_ += dt;
        if (rng.uniform() * rate < static_cast<double>(roots.size())) {
            int r = roots[rng.uniform_int(roots.size())];
            double dest = wrap(root_pos_[static_cast<std::size_t>(r)] + abar.sample(rng));
            root_pos_[static_cast<std::size_t>(r)] = dest;
            if (finite_N > 0) {
                // the migrant copy's parent is a uniform individual at the
                // destination; it may be one of the blocks already there
                std::vector<int> there;
                for (int o : roots)
                    if (o != r && root_pos_[static_cast<std::size_t>(o)] == dest)
                        there.push_back(o);
                if (!there.empty() &&
                    rng.uniform() * finite_N < static_cast<double>(there.size())) {
                    int j = there[rng.uniform_int(there.size())];
                    for (int i = 0; i < nn; ++i) {
                        if (find(i) != r) continue;
                        for (int q = 0; q < nn; ++q) {
                            if (find(q) != j) continue;
                            merge_[static_cast<std::size_t>(i) * nn +
                                   static_cast<std::size_t>(q)] = clock_;
                            merge_[static_cast<std::size_t>(q) * nn +
                                   static_cast<std::size_t>(i)] = clock_;
                        }
                    }
                    unite(r, j);
                    root_pos_[static_cast<std::size_t>(find(r))] = dest;
                }
            }
        } else if (!pairs.empty()) {
            auto [ra, rb] = pairs[rng.uniform_int(pairs.size())];
            for (int i = 0; i < nn; ++i) {
                if (find(i) != ra) continue;
                for (int j = 0; j < nn; ++j) {
                    if (find(j) != rb) continue;
                    merge_[static_cast<std::size_t>(i) * nn + static_cast<std::size_t>(j)] =
                        clock_;
                    merge_[static_cast<std::size_t>(j) * nn + static_cast<std::size_t>(i)] =
                        clock_;
                }
            }
            double keep = root_pos_[static_cast<std::size_t>(ra)];
            unite(ra, rb);
            root_pos_[static_cast<std::size_t>(find(ra))] = keep;
        }
    }
}

double duality_H(const FiniteMarkedSpace& space, const CoalescentState& k,
                 const Monomial& m, double mark_tol) {
    if (m.n != k.n())
        throw std::invalid_argument("monomial order must match the coalescent size");
    const int n = m.n;

    // the g-factor is pinned at the injection positions
    std::vector<double> origins(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) origins[static_cast<std::size_t>(i)] = k.origin(i);
    const double gv = m.g(origins);
    if (gv == 0.0) return 0.0;

    auto reps = k.block_representatives();
    const std::size_t nb = reps.size();

    // candidate atoms per block: exact mark match against the block location
    std::vector<std::vector<int>> cand(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double loc = k.block_position(reps[b]);
        for (std::size_t a = 0; a < space.size(); ++a)
            if (std::abs(space.atom(a).mark - loc) <= mark_tol &&
                space.atom(a).weight > 0.0)
                cand[b].push_back(static_cast<int>(a));
        if (cand[b].empty()) return 0.0;  // indicator kills every configuration
    }

    // blocks sharing a location must pick distinct atoms; the correction
    // restores the product-measure mass of the location group
    std::vector<int> group(nb, -1);
    std::vector<double> group_pos;
    for (std::size_t b = 0; b < nb; ++b) {
        double loc = k.block_position(reps[b]);
        for (std::size_t g2 = 0; g2 < group_pos.size(); ++g2)
            if (std::abs(group_pos[g2] - loc) <= mark_tol) group[b] = static_cast<int>(g2);
        if (group[b] < 0) {
            group[b] = static_cast<int>(group_pos.size());
            group_pos.push_back(loc);
        }
    }
    double correction = 1.0;
    for (std::size_t g2 = 0; g2 < group_pos.size(); ++g2) {
        std::size_t k_g = 0, first = nb;
        for (std::size_t b = 0; b < nb; ++b)
            if (group[b] == static_cast<int>(g2)) {
                ++k_g;
                if (first == nb) first = b;
            }
        if (k_g < 2) continue;
        const auto& cs = cand[first];
        if (cs.size() < k_g) return 0.0;  // not enough distinct atoms
        double mass = 0.0;
        for (int a : cs) mass += space.atom(static_cast<std::size_t>(a)).weight;
        // ordered-distinct weight sum for (near) uniform weights
        double w0 = space.atom(static_cast<std::size_t>(cs[0])).weight;
        double s_distinct = 1.0;
        for (std::size_t q = 0; q < k_g; ++q)
            s_distinct *= (static_cast<double>(cs.size()) - static_cast<double>(q)) * w0;
        correction *= std::pow(mass, static_cast<double>(k_g)) / s_distinct;
    }

    std::vector<int> block_of(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int r = k.block_root(i);
        block_of[static_cast<std::size_t>(i)] =
            static_cast<int>(std::find(reps.begin(), reps.end(), r) - reps.begin());
    }

    auto chosen_atom = [&](const std::vector<int>& choice, int block) {
        return static_cast<std::size_t>(
            cand[static_cast<std::size_t>(block)]
                [static_cast<std::size_t>(choice[static_cast<std::size_t>(block)])]);
    };
    auto distinct_ok = [&](const std::vector<int>& choice) {
        for (std::size_t a = 0; a < nb; ++a)
            for (std::size_t b = a + 1; b < nb; ++b)
                if (group[a] == group[b] &&
                    chosen_atom(choice, static_cast<int>(a)) ==
                        chosen_atom(choice, static_cast<int>(b)))
                    return false;
        return true;
    };

    std::vector<int> choice(nb, 0);
    std::vector<double> dists(static_cast<std::size_t>(m.pair_count()));
    double total = 0.0;
    for (;;) {
        if (distinct_ok(choice)) {
            double w = 1.0;
            for (std::size_t b = 0; b < nb; ++b)
                w *= space.atom(chosen_atom(choice, static_cast<int>(b))).weight;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    int bi = block_of[static_cast<std::size_t>(i)];
                    int bj = block_of[static_cast<std::size_t>(j)];
                    double rpi = bi == bj ? 0.0
                                          : space.dist(chosen_atom(choice, bi),
                                                       chosen_atom(choice, bj));
                    dists[pair_index(i, j, n)] = rpi + k.rdist(i, j);
                }
            total += w * m.phi(dists);
        }
        std::size_t b = 0;
        while (b < nb && ++choice[b] == static_cast<int>(cand[b].size())) {
            choice[b] = 0;
            ++b;
        }
        if (b == nb) break;
    }
    return gv * correction * total;
}

}  // namespace genweb::coalescent
