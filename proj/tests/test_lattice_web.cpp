#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "genweb/lattice_web.hpp"

using namespace genweb::lattice;

TEST_CASE("single walk follows its arrows") {
    Window w{-1, 4, 0, 3};
    // all arrows +1
    ArrowField f(w, ~0ULL, true);
    auto ens = run_walks(f, {{0, 0}}, 3);
    CHECK(ens.position(0, 0) == 0);
    CHECK(ens.position(0, 1) == 1);
    CHECK(ens.position(0, 2) == 2);
    CHECK(ens.position(0, 3) == 3);
}

TEST_CASE("forced meeting merges instantly and forever") {
    Window w{-2, 4, 0, 3};
    // omega(0,0) = +1, omega(2,0) = -1, everything else +1
    std::uint64_t bits = ~0ULL;
    // locate the bit for (2,0): even points at t=0 are x = -2, 0, 2, 4
    // enumeration order is (t,x) ascending: (-2,0)=bit0, (0,0)=bit1, (2,0)=bit2 ...
    bits &= ~(1ULL << 2);
    ArrowField f(w, bits, true);
    auto ens = run_walks(f, {{0, 0}, {2, 0}}, 3);
    CHECK(ens.position(0, 1) == 1);
    CHECK(ens.position(1, 1) == 1);
    CHECK(ens.merge_time[0][1] == 1);
    CHECK(ens.position(0, 3) == ens.position(1, 3));
    auto occ = occupied_set(ens, 1);
    CHECK(occ == std::vector<int>{1});
}

TEST_CASE("occupied set at the start time is the start positions") {
    Window w{-2, 4, 0, 2};
    ArrowField f(w, 123u);
    auto ens = run_walks(f, {{0, 0}, {2, 0}}, 2);
    auto occ = occupied_set(ens, 0);
    CHECK(occ == std::vector<int>{0, 2});
    // full coalescence leaves a singleton
    if (ens.merged(0, 1)) CHECK(occupied_set(ens, 2).size() == 1);
}

TEST_CASE("walk starts are validated") {
    Window w{-2, 2, 0, 2};
    ArrowField f(w, 1u);
    CHECK_THROWS(run_walks(f, {{1, 0}}, 2));   // odd parity
    CHECK_THROWS(run_walks(f, {{8, 0}}, 2));   // outside window
    CHECK_THROWS(run_walks(f, {{0, 0}}, 99));  // horizon beyond window
}

TEST_CASE("one-step enumeration reproduces the exact rationals") {
    // starts {0, 2} at time 0, one step; A = {1 in xi_1}, B = {3 in xi_1}
    Window w{0, 2, 0, 1};
    REQUIRE(ArrowField::count_even_points(w) == 2);
    std::vector<std::pair<int, int>> starts{{0, 0}, {2, 0}};
    HitEvent A{1, 1, 1, 1};
    HitEvent B{1, 3, 3, 1};
    auto res = enumerate_exact(w, starts, {A, B});
    CHECK(res.config_count == 4);
    CHECK(res.event_probs[0] == Rational(3, 4));
    CHECK(res.event_probs[1] == Rational(1, 2));
    CHECK(res.full_intersection == Rational(1, 4));
    CHECK(res.product_bound_holds);

    // single event: intersection is trivially the event itself
    auto res1 = enumerate_exact(w, starts, {A});
    CHECK(res1.full_intersection == res1.event_probs[0]);

    // merge probability across one step is 1/4
    HitEvent merged{1, 1, 1, 1};
    std::int64_t hits = 0;
    for (std::uint64_t cfg = 0; cfg < 4; ++cfg) {
        ArrowField f(w, cfg, true);
        auto ens = run_walks(f, starts, 1);
        if (ens.merged(0, 1)) ++hits;
    }
    CHECK(Rational(hits, 4) == Rational(1, 4));
}

TEST_CASE("window size cap is enforced with the configuration count") {
    Window w{-20, 20, 0, 6};
    CHECK_THROWS(enumerate_exact(w, {{0, 0}}, {}));
}

TEST_CASE("exhaustive negative correlation on a two-step window") {
    Window w{-2, 6, 0, 2};  // even points: t=0: -2,0,2,4,6; t=1: -1,1,3,5; t=2 none below t_max
    std::vector<std::pair<int, int>> starts{{0, 0}, {2, 0}, {4, 0}};
    std::vector<HitEvent> events{{2, 0, 1, 1}, {2, 2, 3, 1}, {2, 4, 6, 1}};
    auto chk = check_negative_correlation(w, starts, events);
    CHECK(chk.holds);
}

TEST_CASE("exhaustive decoupling with an empty middle interval") {
    Window w{-2, 6, 0, 2};
    std::vector<std::pair<int, int>> starts{{0, 0}, {2, 0}, {4, 0}};
    std::vector<HitEvent> events{{2, -1, 0, 1}, {2, 3, 6, 1}};
    auto chk = check_decoupling(w, starts, events, 0);
    CHECK(chk.holds);
}

TEST_CASE("exhaustive occupation inequality up to k = 3, equality at k = 1") {
    Window w{-2, 6, 0, 2};
    std::vector<std::pair<int, int>> starts{{0, 0}, {2, 0}, {4, 0}};
    auto chk = check_occupation_inequality(w, starts, 2, 0, 4, 3);
    CHECK(chk.holds);
}

TEST_CASE("exhaustive second-moment bound") {
    Window w{-2, 6, 0, 2};
    std::vector<std::pair<int, int>> starts{{0, 0}, {2, 0}, {4, 0}};
    auto chk = check_moment_bound(w, starts, 2, -1, 5);
    CHECK(chk.holds);
}

TEST_CASE("coalescence only coarsens the partition of starts") {
    Window w{-6, 10, 0, 4};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ArrowField f(w, seed);
        auto ens = run_walks(f, {{0, 0}, {2, 0}, {4, 0}}, 4);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i + 1; j < 3; ++j) {
                int mt = ens.merge_time[i][j];
                for (int t = mt; t <= 4; ++t)
                    if (mt <= 4) CHECK(ens.position(i, t) == ens.position(j, t));
            }
    }
}

TEST_CASE("rational arithmetic basics") {
    Rational a(1, 2), b(1, 3);
    CHECK((a * b) == Rational(1, 6));
    CHECK((a + b) == Rational(5, 6));
    CHECK(pow(a, 3) == Rational(1, 8));
    CHECK(b <= a);
    CHECK(Rational(2, 4) == Rational(1, 2));
}
