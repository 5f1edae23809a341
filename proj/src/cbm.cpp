#include "genweb/cbm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "genweb/parallel.hpp"
#include "genweb/stats.hpp"

namespace genweb::cbm {

CoalescingSystem::CoalescingSystem(std::vector<double> starts, bool track_pairs)
    : n_(starts.size()), track_pairs_(track_pairs) {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return starts[a] < starts[b]; });

    parent_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) parent_[i] = static_cast<int>(i);
    slot_of_root_.assign(n_, -1);
    if (track_pairs_) pair_merge_.assign(n_ * n_, kNoMerge);

    for (std::size_t k = 0; k < n_; ++k) {
        std::size_t s = order[k];
        if (!pos_.empty() && starts[s] == pos_.back()) {  // coincident starts merge at 0
            std::size_t c = pos_.size() - 1;
            if (track_pairs_) {
                for (int m : members_[c]) {
                    pair_merge_[static_cast<std::size_t>(m) * n_ + s] = 0.0;
                    pair_merge_[s * n_ + static_cast<std::size_t>(m)] = 0.0;
                }
                members_[c].push_back(static_cast<int>(s));
            }
            int root = driver_[c];
            if (static_cast<int>(s) < root) {
                parent_[static_cast<std::size_t>(root)] = static_cast<int>(s);
                driver_[c] = static_cast<int>(s);
                slot_of_root_[s] = static_cast<int>(c);
            } else {
                parent_[s] = root;
            }
        } else {
            pos_.push_back(starts[s]);
            driver_.push_back(static_cast<int>(s));
            if (track_pairs_) members_.push_back({static_cast<int>(s)});
            slot_of_root_[s] = static_cast<int>(pos_.size() - 1);
        }
    }
}

int CoalescingSystem::find(int s) const {
    while (parent_[static_cast<std::size_t>(s)] != s) {
        parent_[static_cast<std::size_t>(s)] =
            parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(s)])];
        s = parent_[static_cast<std::size_t>(s)];
    }
    return s;
}

double CoalescingSystem::position_of(std::size_t start) const {
    return pos_[static_cast<std::size_t>(slot_of_root_[static_cast<std::size_t>(
        find(static_cast<int>(start)))])];
}

bool CoalescingSystem::same_cluster(std::size_t i, std::size_t j) const {
    return find(static_cast<int>(i)) == find(static_cast<int>(j));
}

double CoalescingSystem::merge_time(std::size_t i, std::size_t j) const {
    if (!track_pairs_) throw std::logic_error("pair tracking disabled");
    if (i == j) return 0.0;
    return pair_merge_[i * n_ + j];
}

std::vector<double> CoalescingSystem::occupied() const { return pos_; }

void CoalescingSystem::web_sort_and_merge() {
    const std::size_t m = pos_.size();
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pos_[a] < pos_[b]; });

    std::vector<double> npos;
    std::vector<int> ndrv;
    std::vector<std::vector<int>> nmem;
    npos.reserve(m);
    ndrv.reserve(m);
    for (std::size_t oi = 0; oi < m; ++oi) {
        std::size_t c = order[oi];
        if (!npos.empty() && pos_[c] == npos.back()) {  // identical cell, same noise
            std::size_t w = npos.size() - 1;
            if (track_pairs_) {
                for (int a : nmem[w])
                    for (int b : members_[c]) {
                        pair_merge_[static_cast<std::size_t>(a) * n_ +
                                    static_cast<std::size_t>(b)] = time_;
                        pair_merge_[static_cast<std::size_t>(b) * n_ +
                                    static_cast<std::size_t>(a)] = time_;
                    }
                nmem[w].insert(nmem[w].end(), members_[c].begin(), members_[c].end());
            }
            int rl = ndrv[w], rr = driver_[c];
            if (rl < rr)
                parent_[static_cast<std::size_t>(rr)] = rl;
            else
                parent_[static_cast<std::size_t>(rl)] = rr;
            ndrv[w] = std::min(rl, rr);
        } else {
            npos.push_back(pos_[c]);
            ndrv.push_back(driver_[c]);
            if (track_pairs_) nmem.push_back(std::move(members_[c]));
        }
    }
    pos_ = std::move(npos);
    driver_ = std::move(ndrv);
    if (track_pairs_) members_ = std::move(nmem);
    for (std::size_t w = 0; w < pos_.size(); ++w)
        slot_of_root_[static_cast<std::size_t>(driver_[w])] = static_cast<int>(w);
}

void CoalescingSystem::advance(double duration, const SimParams& p,
                               std::uint64_t noise_key) {
    if (p.h <= 0.0) throw std::invalid_argument("step size must be positive");
    double remaining = duration;
    std::vector<double> old_pos;
    std::vector<char> alive;

    while (remaining > 1e-15 && !pos_.empty()) {
        const double dt = std::min(p.h, remaining);
        const double sdt = std::sqrt(dt);
        const auto k = static_cast<std::uint64_t>(step_);
        const std::size_t m = pos_.size();

        if (p.mode == NoiseMode::Web) {
            // Each path is an autonomous function of the (step, cell) noise
            // field: position snaps to its cell center, the increment is keyed
            // by the cell. Paths sharing a cell coincide exactly afterwards.
            const double cw = p.web_cell > 0.0 ? p.web_cell : p.h;
            for (std::size_t c = 0; c < m; ++c) {
                const double cell = std::floor(pos_[c] / cw);
                auto cell_key = static_cast<std::uint64_t>(
                    static_cast<std::int64_t>(cell) + (1LL << 40));
                pos_[c] = (cell + 0.5) * cw + sdt * rng::normal_at(noise_key, k, cell_key);
            }
            time_ += dt;
            ++step_;
            remaining -= dt;
            web_sort_and_merge();
            continue;
        }

        old_pos = pos_;
        for (std::size_t c = 0; c < m; ++c)
            pos_[c] += sdt * rng::normal_at(noise_key, k,
                                            static_cast<std::uint64_t>(driver_[c]));

        time_ += dt;
        ++step_;
        remaining -= dt;

        // merge sweep over adjacent alive pairs, repeated until stable
        alive.assign(m, 1);
        bool changed = true;
        while (changed) {
            changed = false;
            std::size_t c = 0;
            while (c < m && !alive[c]) ++c;
            while (c < m) {
                std::size_t d = c + 1;
                while (d < m && !alive[d]) ++d;
                if (d >= m) break;
                const double d1 = pos_[d] - pos_[c];
                bool merge = false;
                if (d1 <= 0.0) {
                    merge = true;
                } else {
                    const double d0 = old_pos[d] - old_pos[c];
                    const double u = rng::uniform_at(noise_key ^ 0x5bd1e995u, k,
                                                     static_cast<std::uint64_t>(driver_[d]));
                    merge = u < std::exp(-d0 * d1 / dt);
                }
                if (merge) {
                    if (d1 <= 0.0) pos_[c] = 0.5 * (pos_[c] + pos_[d]);
                    old_pos[c] = old_pos[d];  // nearest member drives the next bridge gap
                    if (track_pairs_) {
                        // midpoint convention: the within-step meeting time is
                        // unresolved, so the slice end would bias it by h/2
                        const double mt = time_ - 0.5 * dt;
                        for (int a : members_[c])
                            for (int b : members_[d]) {
                                pair_merge_[static_cast<std::size_t>(a) * n_ +
                                            static_cast<std::size_t>(b)] = mt;
                                pair_merge_[static_cast<std::size_t>(b) * n_ +
                                            static_cast<std::size_t>(a)] = mt;
                            }
                        members_[c].insert(members_[c].end(), members_[d].begin(),
                                           members_[d].end());
                        members_[d].clear();
                    }
                    int rl = driver_[c], rr = driver_[d];
                    if (rl < rr)
                        parent_[static_cast<std::size_t>(rr)] = rl;
                    else
                        parent_[static_cast<std::size_t>(rl)] = rr;
                    driver_[c] = std::min(rl, rr);
                    alive[d] = 0;
                    changed = true;
                    // re-examine the same left cluster against the next survivor
                } else {
                    c = d;
                }
            }
        }

        // one compaction pass per step
        std::size_t w = 0;
        for (std::size_t c = 0; c < m; ++c) {
            if (!alive[c]) continue;
            if (w != c) {
                pos_[w] = pos_[c];
                driver_[w] = driver_[c];
                if (track_pairs_) members_[w] = std::move(members_[c]);
            }
            slot_of_root_[static_cast<std::size_t>(driver_[w])] = static_cast<int>(w);
            ++w;
        }
        pos_.resize(w);
        driver_.resize(w);
        if (track_pairs_) members_.resize(w);
    }
}

CbmRun simulate_cbm(const std::vector<double>& starts, double t_end, double h,
                    std::uint64_t noise_key, NoiseMode mode, double web_cell) {
    if (h <= 0.0) throw std::invalid_argument("step size must be positive");
    CoalescingSystem sys(starts, true);
    SimParams p;
    p.h = h;
    p.mode = mode;
    p.web_cell = web_cell;
    p.track_pairs = true;
    sys.advance(t_end, p, noise_key);

    CbmRun run;
    run.starts = starts;
    run.h = h;
    run.t_end = t_end;
    run.final_pos.resize(starts.size());
    run.merge_times.resize(starts.size() * starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        run.final_pos[i] = sys.position_of(i);
        for (std::size_t j = 0; j < starts.size(); ++j)
            run.merge_times[i * starts.size() + j] = i == j ? 0.0 : sys.merge_time(i, j);
    }
    return run;
}

double density_formula(double t, double a, double b) {
    if (t <= 0.0) throw std::invalid_argument("time must be positive");
    if (a > b) throw std::invalid_argument("interval must satisfy a <= b");
    return (b - a) / std::sqrt(std::numbers::pi * t);
}

double two_point_formula(double t, double delta) {
    if (t <= 0.0) throw std::invalid_argument("time must be positive");
    if (delta < 0.0) throw std::invalid_argument("separation must be nonnegative");
    return delta * std::exp(-delta * delta / (4.0 * t)) /
           (2.0 * std::sqrt(std::numbers::pi) * std::pow(t, 1.5));
}

double pair_merge_probability(double gap, double t) {
    if (gap <= 0.0) return 1.0;
    return std::erfc(gap / (2.0 * std::sqrt(t)));
}

McEstimate estimate_density(double t, double a, double b, double grid_eta, double buffer,
                            std::int64_t replicas, double h, std::uint64_t seed,
                            int workers) {
    if (replicas <= 0) throw std::invalid_argument("no data: replicas must be positive");
    if (grid_eta <= 0.0) throw std::invalid_argument("grid spacing must be positive");

    std::vector<double> starts;
    for (double x = a - buffer; x <= b + buffer + 0.5 * grid_eta; x += grid_eta)
        starts.push_back(x);

    SimParams p;
    p.h = h;

    auto acc = parallel_reduce<Accumulator>(
        replicas, workers,
        [&](std::int64_t rep, Accumulator& local) {
            CoalescingSystem sys(starts, false);
            std::uint64_t key =
                rng::stream_key(seed, static_cast<std::uint64_t>(rep), rng::Purpose::CbmNoise);
            sys.advance(t, p, key);
            int count = 0;
            for (double x : sys.occupied())
                if (x >= a && x <= b) ++count;
            local.add(static_cast<double>(count));
        },
        16);

    McEstimate e;
    e.mean = acc.mean();
    e.se = acc.std_error();
    e.replicas = replicas;
    e.h = h;
    e.eta = grid_eta;
    return e;
}

namespace {

// Pattern for the constrained two-point function with four coalescing paths
// from 0, p, delta, delta+p: success means {0 != p}, {p ~ delta}, {p != delta+p}
// at the horizon. Any of {0~p}, {p~delta+p}, {delta~delta+p} kills the pattern.
int two_point_pattern(double t, double delta, double probe, double h,
                      std::uint64_t key) {
    double pos[4] = {0.0, probe, delta, delta + probe};
    double old_pos[4];
    int drv[4] = {0, 1, 2, 3};
    int cl[4] = {0, 1, 2, 3};  // start -> slot in pos/drv
    int m = 4;

    std::int64_t step = 0;
    double remaining = t;
    while (remaining > 1e-15) {
        const double dt = std::min(h, remaining);
        const double sdt = std::sqrt(dt);
        for (int c = 0; c < m; ++c) old_pos[c] = pos[c];
        for (int c = 0; c < m; ++c)
            pos[c] += sdt * rng::normal_at(key, static_cast<std::uint64_t>(step),
                                           static_cast<std::uint64_t>(drv[c]));
        const auto k = static_cast<std::uint64_t>(step);
        ++step;
        remaining -= dt;

        bool changed = true;
        while (changed) {
            changed = false;
            int c = 0;
            while (c + 1 < m) {
                const double d1 = pos[c + 1] - pos[c];
                bool merge = false;
                if (d1 <= 0.0) {
                    merge = true;
                } else {
                    const double d0 = old_pos[c + 1] - old_pos[c];
                    const double u = rng::uniform_at(key ^ 0x5bd1e995u, k,
                                                     static_cast<std::uint64_t>(drv[c + 1]));
                    merge = u < std::exp(-d0 * d1 / dt);
                }
                if (merge) {
                    if (d1 <= 0.0) pos[c] = 0.5 * (pos[c] + pos[c + 1]);
                    old_pos[c] = old_pos[c + 1];
                    drv[c] = std::min(drv[c], drv[c + 1]);
                    for (int s = 0; s < 4; ++s) {
                        if (cl[s] == c + 1) cl[s] = c;
                        if (cl[s] > c + 1) --cl[s];
                    }
                    for (int q = c + 1; q + 1 < m; ++q) {
                        pos[q] = pos[q + 1];
                        old_pos[q] = old_pos[q + 1];
                        drv[q] = drv[q + 1];
                    }
                    --m;
                    changed = true;
                } else {
                    ++c;
                }
            }
        }

        if (cl[0] == cl[1] || cl[1] == cl[3] || cl[2] == cl[3]) return 0;
    }
    return (cl[1] == cl[2] && cl[0] != cl[1] && cl[1] != cl[3]) ? 1 : 0;
}

}  // namespace

McEstimate estimate_two_point(double t, double delta, double probe_width,
                              std::int64_t replicas, double h, std::uint64_t seed,
                              int workers) {
    if (probe_width <= 0.0) throw std::invalid_argument("probe width must be positive");
    if (probe_width >= delta)
        throw std::invalid_argument("probe width must be smaller than the separation");
    if (replicas <= 0) throw std::invalid_argument("no data: replicas must be positive");

    auto acc = parallel_reduce<Accumulator>(
        replicas, workers,
        [&](std::int64_t rep, Accumulator& local) {
            std::uint64_t key =
                rng::stream_key(seed, static_cast<std::uint64_t>(rep), rng::Purpose::CbmNoise);
            local.add(static_cast<double>(two_point_pattern(t, delta, probe_width, h, key)));
        },
        4096);

    const double inv_p2 = 1.0 / (probe_width * probe_width);
    McEstimate e;
    e.mean = acc.mean() * inv_p2;
    e.se = acc.std_error() * inv_p2;
    e.replicas = replicas;
    e.h = h;
    e.eta = 0.0;
    return e;
}

}  // namespace genweb::cbm
