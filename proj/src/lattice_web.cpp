#include "genweb/lattice_web.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace genweb::lattice {

namespace {
using i128 = __int128;

std::int64_t gcd64(std::int64_t a, std::int64_t b) {
    while (b) {
        std::int64_t t = a % b;
        a = b;
        b = t;
    }
    return a < 0 ? -a : a;
}
}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw std::invalid_argument("zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = gcd64(num == 0 ? den : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
}

Rational Rational::operator*(const Rational& o) const {
    i128 n = i128(num) * o.num;
    i128 d = i128(den) * o.den;
    // reduce via cross gcds before narrowing
    std::int64_t g1 = gcd64(num, o.den);
    std::int64_t g2 = gcd64(o.num, den);
    n = i128(num / g1) * (o.num / g2);
    d = i128(den / g2) * (o.den / g1);
    if (n > i128(INT64_MAX) || d > i128(INT64_MAX))
        throw std::overflow_error("rational product overflow");
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

Rational Rational::operator+(const Rational& o) const {
    i128 n = i128(num) * o.den + i128(o.num) * den;
    i128 d = i128(den) * o.den;
    i128 a = n < 0 ? -n : n, b = d;
    while (b) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    if (a > 1) {
        n /= a;
        d /= a;
    }
    if (n > i128(INT64_MAX) || d > i128(INT64_MAX))
        throw std::overflow_error("rational sum overflow");
    return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(d));
}

bool Rational::operator<=(const Rational& o) const {
    return i128(num) * o.den <= i128(o.num) * den;
}

bool Rational::operator==(const Rational& o) const {
    return num == o.num && den == o.den;
}

std::string Rational::str() const {
    std::ostringstream os;
    os << num << "/" << den;
    return os.str();
}

Rational pow(const Rational& r, int k) {
    Rational out(1, 1);
    for (int i = 0; i < k; ++i) out = out * r;
    return out;
}

std::size_t ArrowField::count_even_points(const Window& w) {
    std::size_t c = 0;
    for (int t = w.t_min; t < w.t_max; ++t)
        for (int x = w.x_min; x <= w.x_max; ++x)
            if (even_parity(x, t)) ++c;
    return c;
}

ArrowField::ArrowField(Window w, std::uint64_t seed) : win_(w), seed_(seed) {
    for (int t = w.t_min; t < w.t_max; ++t)
        for (int x = w.x_min; x <= w.x_max; ++x)
            if (even_parity(x, t)) index_.emplace_back(x, t);
    arrows_.resize(index_.size());
    for (std::size_t i = 0; i < index_.size(); ++i) {
        auto [x, t] = index_[i];
        std::uint64_t key = rng::stream_key(seed, 0, rng::Purpose::ArrowField);
        std::uint64_t packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
                               static_cast<std::uint32_t>(t);
        arrows_[i] = (rng::at(key, packed) & 1u) ? std::int8_t{1} : std::int8_t{-1};
    }
}

ArrowField::ArrowField(Window w, std::uint64_t bits, bool) : win_(w) {
    for (int t = w.t_min; t < w.t_max; ++t)
        for (int x = w.x_min; x <= w.x_max; ++x)
            if (even_parity(x, t)) index_.emplace_back(x, t);
    if (index_.size() > 64) throw std::invalid_argument("explicit configuration too large");
    arrows_.resize(index_.size());
    for (std::size_t i = 0; i < index_.size(); ++i)
        arrows_[i] = ((bits >> i) & 1u) ? std::int8_t{1} : std::int8_t{-1};
}

std::size_t ArrowField::flat_index(int x, int t) const {
    // index_ is ordered by (t, x); binary search is unnecessary at this scale
    for (std::size_t i = 0; i < index_.size(); ++i)
        if (index_[i].first == x && index_[i].second == t) return i;
    throw std::out_of_range("point not in arrow field");
}

int ArrowField::arrow(int x, int t) const {
    if (!win_.contains(x, t) || !even_parity(x, t))
        throw std::out_of_range("arrow requested outside even-parity window");
    return arrows_[flat_index(x, t)];
}

int WalkEnsemble::position(std::size_t walk, int t) const {
    int t0 = starts[walk].second;
    if (t < t0 || t > t_end) throw std::out_of_range("time outside simulated horizon");
    return paths[walk][static_cast<std::size_t>(t - t0)];
}

WalkEnsemble run_walks(const ArrowField& field,
                       const std::vector<std::pair<int, int>>& starts, int t_end) {
    const Window& w = field.window();
    for (auto [x, t] : starts) {
        if (!even_parity(x, t))
            throw std::invalid_argument("walk start must have even parity");
        if (!w.contains(x, t) || t > t_end)
            throw std::invalid_argument("walk start outside window");
    }
    if (t_end > w.t_max) throw std::invalid_argument("horizon beyond window top");

    WalkEnsemble ens;
    ens.starts = starts;
    ens.t_end = t_end;
    const std::size_t n = starts.size();
    ens.paths.resize(n);
    ens.merge_time.assign(n, std::vector<int>(n, t_end + 1));
    for (std::size_t i = 0; i < n; ++i) {
        ens.paths[i].push_back(starts[i].first);
        ens.merge_time[i][i] = starts[i].second;
    }

    int t_lo = starts.empty() ? t_end : starts[0].second;
    for (auto [x, t] : starts) t_lo = std::min(t_lo, t);

    for (int t = t_lo; t < t_end; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            if (starts[i].second > t) continue;
            int x = ens.paths[i].back();
            ens.paths[i].push_back(x + field.arrow(x, t));
        }
        // merge bookkeeping and non-crossing assertion
        for (std::size_t i = 0; i < n; ++i) {
            if (starts[i].second > t) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (starts[j].second > t) continue;
                if (ens.merge_time[i][j] <= t) continue;
                if (ens.paths[i].back() == ens.paths[j].back()) {
                    ens.merge_time[i][j] = ens.merge_time[j][i] = t + 1;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (starts[i].second > t || starts[j].second > t) continue;
                int xi0 = ens.paths[i][static_cast<std::size_t>(
                    std::max(starts[i].second, starts[j].second) - starts[i].second)];
                int xj0 = ens.paths[j][static_cast<std::size_t>(
                    std::max(starts[i].second, starts[j].second) - starts[j].second)];
                int xi = ens.paths[i].back(), xj = ens.paths[j].back();
                if ((xi0 < xj0 && xi > xj) || (xi0 > xj0 && xi < xj))
                    throw std::logic_error("non-crossing invariant violated");
            }
    }
    return ens;
}

std::vector<int> occupied_set(const WalkEnsemble& ens, int t) {
    std::set<int> occ;
    for (std::size_t i = 0; i < ens.starts.size(); ++i)
        if (ens.starts[i].second <= t && t <= ens.t_end) occ.insert(ens.position(i, t));
    if (occ.empty() && t > ens.t_end)
        throw std::out_of_range("time outside simulated horizon");
    return {occ.begin(), occ.end()};
}

namespace {

// Allocation-free enumeration helper: bit index per even-parity point.
struct EnumGrid {
    Window w;
    int width = 0;
    std::vector<int> bit;  // -1 for odd parity

    explicit EnumGrid(const Window& win) : w(win) {
        width = w.x_max - w.x_min + 1;
        bit.assign(static_cast<std::size_t>(width) * (w.t_max - w.t_min + 1), -1);
        int next = 0;
        for (int t = w.t_min; t <= w.t_max; ++t)
            for (int x = w.x_min; x <= w.x_max; ++x)
                if (even_parity(x, t))
                    bit[static_cast<std::size_t>((t - w.t_min) * width + (x - w.x_min))] =
                        next++;
    }
    int bits() const {
        int m = -1;
        for (int b : bit) m = std::max(m, b);
        return m + 1;
    }
    int step(int x, int t, std::uint64_t cfg) const {
        int b = bit[static_cast<std::size_t>((t - w.t_min) * width + (x - w.x_min))];
        return ((cfg >> b) & 1u) ? x + 1 : x - 1;
    }
    // distinct occupied positions of the coalescing walks in [lo,hi] at t_ev
    int occupied_count(const std::vector<std::pair<int, int>>& starts, int t_ev, int lo,
                       int hi, std::uint64_t cfg) const {
        int count = 0;
        int seen[16];
        for (auto [x0, t0] : starts) {
            if (t0 > t_ev) continue;
            int x = x0;
            for (int t = t0; t < t_ev; ++t) x = step(x, t, cfg);
            if (x < lo || x > hi) continue;
            bool dup = false;
            for (int s = 0; s < count; ++s)
                if (seen[s] == x) dup = true;
            if (!dup && count < 16) seen[count++] = x;
        }
        return count;
    }
    bool event_holds(const std::vector<std::pair<int, int>>& starts, const HitEvent& ev,
                     std::uint64_t cfg) const {
        return occupied_count(starts, ev.t, ev.lo, ev.hi, cfg) >= ev.k;
    }
};

void require_enumerable(const Window& w) {
    std::size_t bits = ArrowField::count_even_points(w);
    if (bits > kMaxEnumerationBits) {
        std::ostringstream os;
        os << "window has " << bits << " arrow sites (2^" << bits
           << " configurations); cap is 2^" << kMaxEnumerationBits;
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

EnumerationResult enumerate_exact(const Window& w,
                                  const std::vector<std::pair<int, int>>& starts,
                                  const std::vector<HitEvent>& events) {
    require_enumerable(w);
    const EnumGrid grid(w);
    const std::size_t bits = ArrowField::count_even_points(w);
    const std::uint64_t total = 1ULL << bits;
    const std::size_t ne = events.size();

    std::vector<std::int64_t> hit(ne, 0);
    std::vector<std::vector<std::int64_t>> pair_hit(ne, std::vector<std::int64_t>(ne, 0));
    std::int64_t all_hit = 0;

    std::vector<char> holds(ne);
    for (std::uint64_t cfg = 0; cfg < total; ++cfg) {
        bool all = true;
        for (std::size_t e = 0; e < ne; ++e) {
            holds[e] = grid.event_holds(starts, events[e], cfg) ? 1 : 0;
            if (!holds[e]) all = false;
        }
        for (std::size_t e = 0; e < ne; ++e) {
            if (!holds[e]) continue;
            ++hit[e];
            for (std::size_t e2 = e; e2 < ne; ++e2)
                if (holds[e2]) ++pair_hit[e][e2];
        }
        if (all && ne > 0) ++all_hit;
    }

    EnumerationResult res;
    res.config_count = total;
    const auto den = static_cast<std::int64_t>(total);
    for (std::size_t e = 0; e < ne; ++e) res.event_probs.emplace_back(hit[e], den);
    res.pairwise_probs.assign(ne, std::vector<Rational>(ne));
    for (std::size_t a = 0; a < ne; ++a)
        for (std::size_t b = 0; b < ne; ++b) {
            std::int64_t c = a <= b ? pair_hit[a][b] : pair_hit[b][a];
            res.pairwise_probs[a][b] = Rational(c, den);
        }
    res.full_intersection = Rational(all_hit, den);

    Rational prod(1, 1);
    for (auto& p : res.event_probs) prod = prod * p;
    res.product_bound_holds = res.full_intersection <= prod;
    if (!res.product_bound_holds)
        res.violations.push_back("P(intersection) " + res.full_intersection.str() +
                                 " > product " + prod.str());
    for (std::size_t a = 0; a < ne; ++a)
        for (std::size_t b = a + 1; b < ne; ++b) {
            Rational pq = res.event_probs[a] * res.event_probs[b];
            if (!(res.pairwise_probs[a][b] <= pq))
                res.violations.push_back("pairwise bound violated for events " +
                                         std::to_string(a) + "," + std::to_string(b));
        }
    res.product_bound_holds = res.violations.empty();
    return res;
}

CheckResult check_negative_correlation(const Window& w,
                                       const std::vector<std::pair<int, int>>& starts,
                                       const std::vector<HitEvent>& events) {
    require_enumerable(w);
    const std::size_t ne = events.size();
    CheckResult out;
    // every nonempty subset, exact comparison
    for (std::uint32_t mask = 1; mask < (1u << ne); ++mask) {
        std::vector<HitEvent> sub;
        for (std::size_t e = 0; e < ne; ++e)
            if (mask & (1u << e)) sub.push_back(events[e]);
        auto res = enumerate_exact(w, starts, sub);
        Rational prod(1, 1);
        for (auto& p : res.event_probs) prod = prod * p;
        if (!(res.full_intersection <= prod)) {
            out.holds = false;
            out.detail += "subset mask " + std::to_string(mask) + ": P(inter)=" +
                          res.full_intersection.str() + " > " + prod.str() + "; ";
        }
    }
    return out;
}

CheckResult check_decoupling(const Window& w,
                             const std::vector<std::pair<int, int>>& starts,
                             const std::vector<HitEvent>& events, std::size_t j) {
    require_enumerable(w);
    if (j + 1 >= events.size()) throw std::invalid_argument("gap index out of range");
    const int t_ev = events[0].t;
    for (auto& e : events)
        if (e.t != t_ev) throw std::invalid_argument("events must share one time");

    const EnumGrid grid(w);
    const std::size_t bits = ArrowField::count_even_points(w);
    const std::uint64_t total = 1ULL << bits;
    const int gap_lo = events[j].hi + 1, gap_hi = events[j + 1].lo - 1;

    std::int64_t lhs_count = 0;       // all hits and empty gap
    std::int64_t mid_count = 0;       // hit j, empty gap, hit j+1
    std::vector<std::int64_t> single(events.size(), 0);

    std::vector<char> hi(events.size());
    for (std::uint64_t cfg = 0; cfg < total; ++cfg) {
        bool gap_empty = gap_lo > gap_hi ||
                         grid.occupied_count(starts, t_ev, gap_lo, gap_hi, cfg) == 0;
        bool all = gap_empty;
        for (std::size_t e = 0; e < events.size(); ++e) {
            hi[e] = grid.event_holds(starts, events[e], cfg) ? 1 : 0;
            if (!hi[e]) all = false;
            if (hi[e]) ++single[e];
        }
        if (all) ++lhs_count;
        if (hi[j] && hi[j + 1] && gap_empty) ++mid_count;
    }

    const auto den = static_cast<std::int64_t>(total);
    Rational lhs(lhs_count, den);
    Rational rhs(mid_count, den);
    for (std::size_t e = 0; e < events.size(); ++e)
        if (e != j && e != j + 1) rhs = rhs * Rational(single[e], den);

    CheckResult out;
    out.holds = lhs <= rhs;
    out.detail = "lhs=" + lhs.str() + " rhs=" + rhs.str();
    return out;
}

CheckResult check_occupation_inequality(const Window& w,
                                        const std::vector<std::pair<int, int>>& starts,
                                        int t, int b_lo, int b_hi, int k_max) {
    require_enumerable(w);
    const EnumGrid grid(w);
    const std::size_t bits = ArrowField::count_even_points(w);
    const std::uint64_t total = 1ULL << bits;

    std::vector<std::int64_t> at_least(static_cast<std::size_t>(k_max) + 1, 0);
    for (std::uint64_t cfg = 0; cfg < total; ++cfg) {
        int c = grid.occupied_count(starts, t, b_lo, b_hi, cfg);
        for (int k = 1; k <= k_max; ++k)
            if (c >= k) ++at_least[static_cast<std::size_t>(k)];
    }
    const auto den = static_cast<std::int64_t>(total);
    Rational p1(at_least[1], den);

    CheckResult out;
    for (int k = 1; k <= k_max; ++k) {
        Rational pk(at_least[static_cast<std::size_t>(k)], den);
        Rational bound = pow(p1, k);
        if (!(pk <= bound)) {
            out.holds = false;
            out.detail += "k=" + std::to_string(k) + ": " + pk.str() + " > " +
                          bound.str() + "; ";
        }
    }
    if (out.holds) out.detail = "P(>=1)=" + p1.str();
    return out;
}

CheckResult check_moment_bound(const Window& w,
                               const std::vector<std::pair<int, int>>& starts, int t,
                               int b_lo, int b_hi) {
    require_enumerable(w);
    const EnumGrid grid(w);
    const std::size_t bits = ArrowField::count_even_points(w);
    const std::uint64_t total = 1ULL << bits;

    std::int64_t sum = 0, sumsq = 0;
    for (std::uint64_t cfg = 0; cfg < total; ++cfg) {
        std::int64_t c = grid.occupied_count(starts, t, b_lo, b_hi, cfg);
        sum += c;
        sumsq += c * c;
    }
    const auto den = static_cast<std::int64_t>(total);
    Rational ex(sum, den);
    Rational ex2(sumsq, den);
    Rational bound = Rational(2, 1) * ex + ex * ex;

    CheckResult out;
    out.holds = ex2 <= bound;
    out.detail = "E[X^2]=" + ex2.str() + " bound=" + bound.str();
    return out;
}

}  // namespace genweb::lattice
