#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "genweb/cbm.hpp"
#include "genweb/cssm.hpp"
#include "genweb/parallel.hpp"
#include "genweb/stats.hpp"

using namespace genweb;
using namespace genweb::cssm;

namespace {

RegularState demo_state() {
    RegularState st;
    st.window_lo = -3.0;
    st.window_hi = 3.0;
    st.boundaries = {{-1.5, 0.5}, {-0.9, 0.15}, {-0.3, 0.7}, {0.2, 0.3},
                     {0.8, 0.1},  {1.4, 0.45}};
    st.resolution = 0.05;
    return st;
}

Monomial regular_pair(double delta, double s, double glo, double ghi) {
    Monomial m;
    m.n = 2;
    m.delta_reg = delta;
    m.phi = [delta, s](std::span<const double> r) {
        double e = r[0] > delta ? r[0] - delta : 0.0;
        return std::exp(-e * e / (s * s));
    };
    m.dphi = [delta, s](int, int, std::span<const double> r) {
        double e = r[0] > delta ? r[0] - delta : 0.0;
        return -2.0 * e / (s * s) * std::exp(-e * e / (s * s));
    };
    double c = 0.5 * (glo + ghi), w = 0.5 * (ghi - glo);
    m.g = [c, w](std::span<const double> v) {
        double p = 1.0;
        for (double x : v) {
            double u = (x - c) / w;
            if (u <= -1.0 || u >= 1.0) return 0.0;
            double cu = std::cos(0.5 * std::numbers::pi * u);
            p *= cu * cu * cu * cu;
        }
        return p;
    };
    m.laplacian_g = [c, w](std::span<const double> v) {
        auto b = [&](double x) {
            double u = (x - c) / w;
            if (u <= -1.0 || u >= 1.0) return 0.0;
            double cu = std::cos(0.5 * std::numbers::pi * u);
            return cu * cu * cu * cu;
        };
        auto bdd = [&](double x) {
            double u = (x - c) / w;
            if (u <= -1.0 || u >= 1.0) return 0.0;
            double a = 0.5 * std::numbers::pi / w;
            double cu = std::cos(0.5 * std::numbers::pi * u);
            double su = std::sin(0.5 * std::numbers::pi * u);
            return 4.0 * a * a * cu * cu * (3.0 * su * su - cu * cu);
        };
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            double t = bdd(v[i]);
            for (std::size_t j = 0; j < v.size(); ++j)
                if (j != i) t *= b(v[j]);
            acc += t;
        }
        return acc;
    };
    m.support = SupportBox::cube(2, glo, ghi);
    return m;
}

}  // namespace

TEST_CASE("regular state distances follow the largest-gap rule") {
    auto st = demo_state();
    st.validate();
    CHECK(st.point_distance(-2.0, 2.0) == 0.7);
    // between -0.5 and 0.0 only the boundary at -0.3 (d = 0.7) intervenes
    CHECK(st.point_distance(-0.5, 0.0) == 0.7);
    CHECK(st.point_distance(0.3, 0.7) == 0.0);    // same cell
    CHECK(st.point_distance(1.0, 1.0) == 0.0);
    // side copies: x+ faces right, x- faces left
    CHECK(st.side_distance(3, +1, 0.5) == 0.0);   // boundary 0.2 facing right
    CHECK(st.side_distance(3, -1, 0.5) == 0.3);   // crossing its own gap
    CHECK(st.side_distance(3, +1, 0.0) == 0.3);
    CHECK(st.side_distance(3, -1, 0.0) == 0.0);
    CHECK(st.gap_sum() == doctest::Approx(0.5 + 0.15 + 0.7 + 0.3 + 0.1 + 0.45));
    CHECK(st.count_at_least(0.3) == 4);
}

TEST_CASE("regular state validation") {
    RegularState bad;
    bad.window_lo = 0.0;
    bad.window_hi = 1.0;
    bad.boundaries = {{0.5, 0.2}, {0.4, 0.1}};  // unsorted
    CHECK_THROWS(bad.validate());
    RegularState neg;
    neg.window_lo = 0.0;
    neg.window_hi = 1.0;
    neg.boundaries = {{0.5, -0.2}};
    CHECK_THROWS(neg.validate());
}

TEST_CASE("backward sample distance dichotomy") {
    auto init = InitialSpace::from_regular(demo_state());
    rng::Stream anc(5, 0, rng::Purpose::Experiment);
    const double t = 1.0, h = 0.002;
    for (int rep = 0; rep < 30; ++rep) {
        auto key = rng::stream_key(19, static_cast<std::uint64_t>(rep),
                                   rng::Purpose::CssmNoise);
        auto s = sample_cssm(init, t, {-0.6, -0.5, 0.4, 1.7}, h, key, anc);
        const std::size_t n = 4;
        CHECK(s.r(0, 0) == 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                double tau = s.tau_hat[i * n + j];
                if (tau >= 0.0) {
                    CHECK(s.r(i, j) == 2.0 * (t - tau));
                    CHECK(s.landings[i] == s.landings[j]);
                } else {
                    CHECK(s.r(i, j) >= 2.0 * t);
                }
            }
        // exact ultrametricity
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k)
                    CHECK(s.r(i, k) <= std::max(s.r(i, j), s.r(j, k)));
    }
}

TEST_CASE("atomic initial spaces resolve ancestors consistently") {
    // two atoms at distinct marks; nearest-atom fallback is logged
    std::vector<Atom> atoms{{0, -1.0, 1.0, {}}, {1, 1.0, 1.0, {}}};
    std::vector<double> dist{0.0, 0.5, 0.5, 0.0};
    auto init = InitialSpace::from_atoms(
        FiniteMarkedSpace(std::move(atoms), std::move(dist), true, 0.0));
    rng::Stream anc(7, 0, rng::Purpose::Experiment);
    auto key = rng::stream_key(23, 0, rng::Purpose::CssmNoise);
    auto s = sample_cssm(init, 0.5, {-0.4, 0.6}, 0.002, key, anc);
    CHECK(s.nearest_fallbacks >= 0);  // continuous landings always fall back
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            for (std::size_t k = 0; k < 2; ++k)
                CHECK(s.r(i, k) <= std::max(s.r(i, j), s.r(j, k)));
}

TEST_CASE("boundary extraction: nested in the lag, empty window allowed") {
    auto init = InitialSpace::flat();
    rng::Stream anc(9, 0, rng::Purpose::Experiment);
    auto key = rng::stream_key(29, 1, rng::Purpose::CssmNoise);
    auto res1 = extract_regular(init, 0.5, 0.05, -1.0, 1.0, 0.02, 0.002, key, anc);
    auto res2 = extract_regular(init, 0.5, 0.10, -1.0, 1.0, 0.02, 0.002, key, anc);
    // same realization: boundaries surviving a longer lag are fewer
    CHECK(res2.count_at_lag <= res1.count_at_lag);
    CHECK(res1.state.window_lo == -1.0);

    auto empty = extract_regular(init, 0.5, 0.05, 1.0, 1.0, 0.02, 0.002, key, anc);
    CHECK(empty.state.boundaries.empty());

    CHECK_THROWS(extract_regular(init, 0.05, 0.1, -1.0, 1.0, 0.02, 0.002, key, anc));
}

TEST_CASE("continuum generator: vanishing cases") {
    auto st = demo_state();
    SUBCASE("order-1 constant phi integrates the Laplacian to zero") {
        Monomial m;
        m.n = 1;
        m.phi = [](std::span<const double>) { return 1.0; };
        m.dphi = [](int, int, std::span<const double>) { return 0.0; };
        auto pair = regular_pair(0.2, 0.8, -2.0, 2.0);
        m.g = [g2 = pair.g](std::span<const double> v) { return g2(v); };
        m.laplacian_g = pair.laplacian_g;
        m.support = SupportBox::cube(1, -2.0, 2.0);
        double v = eval_gen_cs(st, m);
        CHECK(std::abs(v) < 1e-8);
    }
    SUBCASE("gaps below the flatness radius are invisible") {
        RegularState tiny = st;
        tiny.boundaries = {{-1.0, 0.05}, {0.0, 0.12}, {1.0, 0.08}};
        tiny.resolution = 0.02;
        auto m = regular_pair(0.2, 0.8, -2.0, 2.0);
        RegularState none = st;
        none.boundaries = {};
        none.resolution = 0.02;
        CHECK(eval_gen_cs(tiny, m) ==
              doctest::Approx(eval_gen_cs(none, m)).epsilon(1e-10));
    }
    SUBCASE("plain monomials demand an rr-certified state") {
        auto m = regular_pair(0.2, 0.8, -2.0, 2.0);
        m.delta_reg.reset();
        auto st2 = demo_state();
        st2.rr_certified = false;
        CHECK_THROWS(eval_gen_cs(st2, m));
        st2.rr_certified = true;
        CHECK_NOTHROW(eval_gen_cs(st2, m));
    }
    SUBCASE("coarse resolution is rejected for fine flatness radii") {
        auto st2 = demo_state();
        st2.resolution = 0.5;
        auto m = regular_pair(0.2, 0.8, -2.0, 2.0);
        CHECK_THROWS(eval_gen_cs(st2, m));
    }
}

TEST_CASE("markov composition: two backward legs reproduce the one-shot law") {
    auto init = InitialSpace::from_regular(demo_state());
    const double t = 0.3, s_extra = 0.2, h = 0.002;
    const std::vector<double> probes{-0.4, 0.6};

    Accumulator oneshot_merge, composed_merge, oneshot_phi, composed_phi;
    auto phi = [](double r) { return std::exp(-r); };
    for (int rep = 0; rep < 6000; ++rep) {
        rng::Stream anc(31, static_cast<std::uint64_t>(rep), rng::Purpose::Experiment);
        auto key = rng::stream_key(37, static_cast<std::uint64_t>(rep),
                                   rng::Purpose::CssmNoise);
        auto one = sample_cssm(init, t + s_extra, probes, h, key, anc);
        oneshot_merge.add(one.tau_hat[1] >= 0.0 ? 1.0 : 0.0);
        oneshot_phi.add(phi(one.r(0, 1)));
    }
    for (int rep = 0; rep < 6000; ++rep) {
        rng::Stream anc(41, static_cast<std::uint64_t>(rep), rng::Purpose::Experiment);
        auto key1 = rng::stream_key(43, static_cast<std::uint64_t>(rep),
                                    rng::Purpose::CssmNoise);
        auto key2 = rng::stream_key(47, static_cast<std::uint64_t>(rep),
                                    rng::Purpose::CssmNoise);
        // leg 1: from t + s down to t (flat initial keeps lineages unresolved)
        cbm::CoalescingSystem sys(probes, true);
        cbm::SimParams p;
        p.h = h;
        p.track_pairs = true;
        sys.advance(s_extra, p, key1);
        if (sys.same_cluster(0, 1)) {
            double tau = (t + s_extra) - sys.merge_time(0, 1);
            composed_merge.add(1.0);
            composed_phi.add(phi(2.0 * ((t + s_extra) - tau)));
            continue;
        }
        std::vector<double> mids{sys.position_of(0), sys.position_of(1)};
        auto leg2 = sample_cssm(init, t, mids, h, key2, anc);
        composed_merge.add(leg2.tau_hat[1] >= 0.0 ? 1.0 : 0.0);
        composed_phi.add(phi(leg2.r(0, 1) + 2.0 * s_extra));
    }
    CHECK(std::abs(oneshot_merge.mean() - composed_merge.mean()) <
          3.0 * pooled_se(oneshot_merge.std_error(), composed_merge.std_error()) + 0.01);
    CHECK(std::abs(oneshot_phi.mean() - composed_phi.mean()) <
          3.0 * pooled_se(oneshot_phi.std_error(), composed_phi.std_error()) + 0.01);
}

TEST_CASE("stationarity onset: distant initial conditions wash out at large t") {
    auto st = demo_state();
    auto init_a = InitialSpace::from_regular(st);
    auto init_b = InitialSpace::flat();
    const double t = 30.0, h = 0.02;
    const std::vector<double> probes{-0.3, 0.4};
    Accumulator pa, pb, coalesced;
    for (int rep = 0; rep < 3000; ++rep) {
        rng::Stream anc(51, static_cast<std::uint64_t>(rep), rng::Purpose::Experiment);
        auto key = rng::stream_key(53, static_cast<std::uint64_t>(rep),
                                   rng::Purpose::CssmNoise);
        auto sa = sample_cssm(init_a, t, probes, h, key, anc);
        auto sb = sample_cssm(init_b, t, probes, h, key, anc);  // same web
        pa.add(std::exp(-sa.r(0, 1)));
        pb.add(std::exp(-sb.r(0, 1)));
        coalesced.add(sa.tau_hat[1] >= 0.0 ? 1.0 : 0.0);
    }
    CHECK(coalesced.mean() > 0.9);  // most pairs coalesce before time 0
    CHECK(std::abs(pa.mean() - pb.mean()) <
          3.0 * pooled_se(pa.std_error(), pb.std_error()) + 1e-3);
}

TEST_CASE("generator quotient approaches the formula on a regular state") {
    auto st = demo_state();
    auto init = InitialSpace::from_regular(st);
    auto m = regular_pair(0.2, 0.8, -2.0, 2.0);

    const double grid = 0.02, h = 2e-4;
    const double gen = eval_gen_cs(st, m);
    const double phi0 = polynomial_on_grid(init, m, grid);

    const double t = 0.01;
    auto est = estimate_polynomial(init, t, m, grid, h, 3000, 61, 0);
    double quot = (est.mean - phi0) / t;
    double qse = est.se / t;
    INFO("quotient ", quot, " formula ", gen, " se ", qse);
    CHECK(std::abs(quot - gen) < 0.15 * std::abs(gen) + 3.0 * qse);
}
