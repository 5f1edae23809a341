#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "genweb/cbm.hpp"
#include "genweb/coalescent.hpp"
#include "genweb/parallel.hpp"
#include "genweb/stats.hpp"

using namespace genweb;
using namespace genweb::coalescent;

namespace {

Monomial pair_monomial(double scale) {
    Monomial m;
    m.n = 2;
    m.phi = [scale](std::span<const double> r) { return std::exp(-r[0] / scale); };
    m.g = [](std::span<const double>) { return 1.0; };
    m.support = SupportBox::cube(2, -100.0, 100.0);
    return m;
}

}  // namespace

TEST_CASE("distance accrual: aging at rate 2 before merging, frozen after") {
    moran::MigrationKernel abar{{{-1, 0.5}, {1, 0.5}}};
    SUBCASE("never merged: r = 2s") {
        auto k = CoalescentState::singletons({0.0, 5.0});
        rng::Stream ev(3, 0, rng::Purpose::CoalescentEvents);
        k.step(0.75, 0.0, abar, 0, ev);  // gamma 0: merging impossible
        CHECK(k.rdist(0, 1) == 2.0 * 0.75);
        CHECK(k.block_count() == 2);
    }
    SUBCASE("merged pair: r freezes at 2 T and equals 2 min(s, T)") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            auto k = CoalescentState::singletons({0.0, 0.0});
            rng::Stream ev(seed, 1, rng::Purpose::CoalescentEvents);
            k.step(1.0, 50.0, abar, 0, ev);  // co-located, high merge rate
            double T = k.merge_T(0, 1);
            if (T == kNeverMerged) continue;
            CHECK(k.rdist(0, 1) == 2.0 * std::min(1.0, T));
            CHECK(k.block_count() == 1);
            // merged blocks share a location forever
            CHECK(k.block_position(0) == k.block_position(1));
        }
    }
    SUBCASE("co-frozen particles accrue nothing before activation") {
        SpaceTimeSpec spec;
        spec.horizon = 1.0;
        spec.levels.push_back({0.4, {0.0, 0.0}});  // sampled at forward time 0.4
        auto k = CoalescentState::frozen(spec);
        rng::Stream ev(5, 0, rng::Purpose::CoalescentEvents);
        k.step(0.59, 1.0, abar, 0, ev);  // still before activation at 0.6
        CHECK(k.rdist(0, 1) == 0.0);
        CHECK(k.block_count() == 2);
    }
}

TEST_CASE("frozen-particle distances follow the activation-corrected formula") {
    SpaceTimeSpec spec;
    spec.horizon = 2.0;
    spec.levels.push_back({0.5, {0.0}});   // activates backward at 1.5
    spec.levels.push_back({2.0, {4.0}});   // active from 0
    auto k = CoalescentState::frozen(spec);
    moran::MigrationKernel abar{{{-1, 0.5}, {1, 0.5}}};
    rng::Stream ev(7, 0, rng::Purpose::CoalescentEvents);
    k.step(2.0, 0.0, abar, 0, ev);  // gamma 0: never merge
    // r = 2 min(s,T) - min(s, a_0) - min(s, a_1) with T = inf, a_0 = 1.5, a_1 = 0
    CHECK(k.rdist(0, 1) == 2.0 * 2.0 - std::min(2.0, 1.5) - 0.0);
}

TEST_CASE("block count never increases and merged blocks move together") {
    moran::MigrationKernel abar{{{-1, 0.5}, {1, 0.5}}};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto k = CoalescentState::singletons({0.0, 0.0, 1.0, 2.0});
        rng::Stream ev(seed, 2, rng::Purpose::CoalescentEvents);
        int prev = k.block_count();
        for (int step = 1; step <= 8; ++step) {
            k.step(0.25 * step, 2.0, abar, 0, ev);
            int now = k.block_count();
            CHECK(now <= prev);
            prev = now;
            for (int i = 0; i < k.n(); ++i)
                for (int j = i + 1; j < k.n(); ++j)
                    if (k.block_root(i) == k.block_root(j))
                        CHECK(k.block_position(i) == k.block_position(j));
        }
    }
}

TEST_CASE("unfrozen pairwise distances are exactly ultrametric") {
    moran::MigrationKernel abar{{{-1, 0.5}, {1, 0.5}}};
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto k = CoalescentState::singletons({0.0, 0.0, 1.0, 1.0, 2.0});
        rng::Stream ev(seed, 3, rng::Purpose::CoalescentEvents);
        k.step(1.5, 3.0, abar, 0, ev);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j)
                for (int l = 0; l < 5; ++l) {
                    if (i == j || j == l || i == l) continue;
                    CHECK(k.rdist(i, l) <= std::max(k.rdist(i, j), k.rdist(j, l)));
                }
    }
}

TEST_CASE("sampling consistency: the pair marginal of a triple matches the pair law") {
    moran::MigrationKernel abar = moran::MigrationKernel::nearest_neighbor().reversed();
    const double t = 1.0, gamma = 1.0;
    Accumulator from_pair, from_triple;
    for (int rep = 0; rep < 12000; ++rep) {
        {
            auto k = CoalescentState::singletons({0.0, 1.0});
            rng::Stream ev(101, static_cast<std::uint64_t>(rep),
                           rng::Purpose::CoalescentEvents);
            k.step(t, gamma, abar, 0, ev);
            from_pair.add(k.block_root(1) == k.block_root(0) ? 1.0 : 0.0);
        }
        {
            auto k = CoalescentState::singletons({0.0, 1.0, 3.0});
            rng::Stream ev(202, static_cast<std::uint64_t>(rep),
                           rng::Purpose::CoalescentEvents);
            k.step(t, gamma, abar, 0, ev);
            from_triple.add(k.block_root(1) == k.block_root(0) ? 1.0 : 0.0);
        }
    }
    CHECK(std::abs(from_pair.mean() - from_triple.mean()) <
          3.0 * pooled_se(from_pair.std_error(), from_triple.std_error()));
}

TEST_CASE("brownian variant: instantaneous coalescence statistics") {
    SUBCASE("zero gap merges at time zero") {
        auto k = CoalescentState::brownian({0.5, 0.5}, 1.0, 0.01,
                                           rng::stream_key(1, 0, rng::Purpose::CbmNoise));
        CHECK(k.block_count() == 1);
        CHECK(k.rdist(0, 1) == 0.0);  // merge time 0: 2 min(s, 0) = 0
    }
    SUBCASE("gap-2 merge probability matches the reflection closed form") {
        Accumulator hit;
        for (int rep = 0; rep < 8000; ++rep) {
            auto k = CoalescentState::brownian(
                {0.0, 2.0}, 1.0, 0.005,
                rng::stream_key(9, static_cast<std::uint64_t>(rep),
                                rng::Purpose::CbmNoise));
            hit.add(k.block_count() == 1 ? 1.0 : 0.0);
        }
        double target = cbm::pair_merge_probability(2.0, 1.0);
        CHECK(std::abs(hit.mean() - target) < 3.0 * hit.std_error() + 0.006);
    }
    SUBCASE("three starts merge adjacent-first") {
        for (int rep = 0; rep < 50; ++rep) {
            auto k = CoalescentState::brownian(
                {0.0, 0.5, 4.0}, 0.5, 0.005,
                rng::stream_key(11, static_cast<std::uint64_t>(rep),
                                rng::Purpose::CbmNoise));
            // outer pair merged implies the middle one joined no later
            if (k.merge_T(0, 2) < kNeverMerged)
                CHECK(k.merge_T(0, 1) <= k.merge_T(0, 2));
        }
    }
}

TEST_CASE("duality pairing H") {
    // space with two unit atoms at marks 0 and 1 at genealogical distance 1.4
    std::vector<Atom> atoms{{0, 0.0, 1.0, {}}, {1, 1.0, 1.0, {}}};
    std::vector<double> dist{0.0, 1.4, 1.4, 0.0};
    FiniteMarkedSpace space(std::move(atoms), std::move(dist), true, 0.0);

    SUBCASE("trivial partition at time 0 reduces to conditioned sampling") {
        auto k = CoalescentState::singletons({0.0, 1.0});
        auto m = pair_monomial(2.0);
        // one matching atom per block, r' = 0: H = phi(1.4)
        CHECK(duality_H(space, k, m) == doctest::Approx(std::exp(-1.4 / 2.0)));
    }
    SUBCASE("accumulated coalescent distance shifts the argument") {
        auto k = CoalescentState::singletons({0.0, 1.0});
        moran::MigrationKernel abar{{{-1, 0.5}, {1, 0.5}}};
        rng::Stream ev(13, 0, rng::Purpose::CoalescentEvents);
        k.step(0.3, 0.0, abar, 0, ev);  // r' = 0.6 exactly, no merge
        REQUIRE(k.rdist(0, 1) == 0.6);
        auto m = pair_monomial(2.0);
        // blocks moved; relocate them for the test by matching marks manually:
        // only configurations whose block locations hit atom marks contribute
        double h = duality_H(space, k, m);
        bool on_atoms = true;
        for (int i = 0; i < 2; ++i) {
            double loc = k.block_position(i);
            if (loc != 0.0 && loc != 1.0) on_atoms = false;
        }
        if (on_atoms && k.block_position(0) != k.block_position(1)) {
            CHECK(h == doctest::Approx(std::exp(-(1.4 + 0.6) / 2.0)));
        } else if (!on_atoms) {
            CHECK(h == 0.0);
        }
    }
    SUBCASE("fully merged state depends on a single sampled individual") {
        auto k = CoalescentState::singletons({0.0, 0.0});
        moran::MigrationKernel abar{{{0, 1.0}}};
        rng::Stream ev(17, 0, rng::Purpose::CoalescentEvents);
        k.step(5.0, 100.0, abar, 0, ev);
        REQUIRE(k.block_count() == 1);
        double T = k.merge_T(0, 1);
        auto m = pair_monomial(2.0);
        // one block at mark 0: single candidate atom, phi(0 + 2 min(s,T))
        double expect = std::exp(-(2.0 * std::min(5.0, T)) / 2.0);
        CHECK(duality_H(space, k, m) == doctest::Approx(expect));
    }
    SUBCASE("no atom at a block location kills the pairing") {
        auto k = CoalescentState::singletons({0.0, 7.0});
        auto m = pair_monomial(2.0);
        CHECK(duality_H(space, k, m) == 0.0);
    }
    SUBCASE("order mismatch is rejected") {
        auto k = CoalescentState::singletons({0.0, 1.0, 2.0});
        auto m = pair_monomial(2.0);
        CHECK_THROWS(duality_H(space, k, m));
    }
}

TEST_CASE("space-time specification validation") {
    SpaceTimeSpec bad;
    bad.horizon = 1.0;
    bad.levels.push_back({0.5, {0.0}});
    bad.levels.push_back({0.25, {1.0}});  // not increasing
    CHECK_THROWS(bad.validate());
    SpaceTimeSpec beyond;
    beyond.horizon = 1.0;
    beyond.levels.push_back({2.0, {0.0}});
    CHECK_THROWS(beyond.validate());
}
