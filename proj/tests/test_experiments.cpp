#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "genweb/experiments.hpp"
#include "genweb/json_io.hpp"

using namespace genweb;
using namespace genweb::experiments;

namespace {

moran::MoranConfig small_moran() {
    moran::MoranConfig cfg;
    cfg.sites = 6;
    cfg.N = 12;
    cfg.gamma = 1.0;
    cfg.kernel = moran::MigrationKernel::nearest_neighbor();
    return cfg;
}

}  // namespace

TEST_CASE("monomial presets: flat radius, bump smoothness, site indicator") {
    MonomialSpec spec;
    spec.n = 2;
    spec.phi_scale = 1.0;
    spec.flat_radius = 0.3;
    spec.g_lo = -1.0;
    spec.g_hi = 1.0;
    spec.g_kind = MonomialSpec::GKind::Bump;
    auto m = spec.build();
    REQUIRE(m.delta_reg.has_value());
    std::vector<double> r{0.1};
    CHECK(m.phi(r) == 1.0);  // flat below the radius
    r[0] = 0.29;
    CHECK(m.phi(r) == 1.0);
    r[0] = 0.8;
    CHECK(m.phi(r) < 1.0);
    CHECK(m.dphi(0, 1, r) < 0.0);
    std::vector<double> edge{1.0, 0.0};
    CHECK(m.g(edge) == 0.0);
    std::vector<double> mid{0.0, 0.0};
    CHECK(m.g(mid) == doctest::Approx(1.0));
    // laplacian sanity against finite differences
    std::vector<double> probe{0.3, -0.2};
    double h = 1e-5;
    double fd = 0.0;
    for (int i = 0; i < 2; ++i) {
        auto p = probe;
        p[static_cast<std::size_t>(i)] += h;
        double up = m.g(p);
        p[static_cast<std::size_t>(i)] = probe[static_cast<std::size_t>(i)] - h;
        double dn = m.g(p);
        fd += (up - 2.0 * m.g(probe) + dn) / (h * h);
    }
    CHECK(m.laplacian_g(probe) == doctest::Approx(fd).epsilon(1e-3));
}

TEST_CASE("duality experiment at desk scale") {
    DualityConfig cfg;
    cfg.moran = small_moran();
    cfg.t = 0.6;
    cfg.replicas = 2500;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 2.0;
    cfg.monomial.g_lo = 0.0;
    cfg.monomial.g_hi = 5.0;
    cfg.monomial.g_kind = MonomialSpec::GKind::Ones;
    cfg.dual_positions = {2.0, 3.0};
    cfg.seed = 11;
    auto rep = run_duality(cfg);
    REQUIRE(!rep.records.empty());
    INFO(report_to_csv(rep));
    CHECK(rep.records[0].pass);
}

TEST_CASE("duality at t = 0 is an exact identity") {
    DualityConfig cfg;
    cfg.moran = small_moran();
    cfg.t = 1e-12;
    cfg.replicas = 50;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 2.0;
    cfg.monomial.g_lo = 0.0;
    cfg.monomial.g_hi = 5.0;
    cfg.dual_positions = {2.0, 2.0};
    cfg.seed = 13;
    auto rep = run_duality(cfg);
    CHECK(std::abs(rep.records[0].estimate - rep.records[0].target) < 1e-9);
}

TEST_CASE("migration-only duality reduces to mark statistics") {
    DualityConfig cfg;
    cfg.moran = small_moran();
    cfg.moran.gamma = 0.0;
    cfg.t = 0.8;
    cfg.replicas = 2500;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 1e9;  // phi essentially 1: pure mark statistics
    cfg.monomial.g_lo = 1.0;
    cfg.monomial.g_hi = 4.0;
    cfg.dual_positions = {2.0, 3.0};
    cfg.seed = 17;
    auto rep = run_duality(cfg);
    CHECK(rep.records[0].pass);
}

TEST_CASE("space-time duality with two levels") {
    SpaceTimeDualityConfig cfg;
    cfg.moran = small_moran();
    cfg.spec.horizon = 0.8;
    cfg.spec.levels.push_back({0.4, {2.0}});
    cfg.spec.levels.push_back({0.8, {3.0, 3.0}});
    MonomialSpec level1;
    level1.n = 1;
    level1.phi_scale = 1.0;
    level1.g_lo = 0.0;
    level1.g_hi = 5.0;
    MonomialSpec level2;
    level2.n = 2;
    level2.phi_scale = 2.0;
    level2.g_lo = 0.0;
    level2.g_hi = 5.0;
    cfg.level_monomials = {level1, level2};
    cfg.replicas = 2500;
    cfg.seed = 19;
    auto rep = run_spacetime_duality(cfg);
    INFO(report_to_csv(rep));
    CHECK(rep.records[0].pass);
}

TEST_CASE("single-level space-time duality agrees with the plain duality") {
    SpaceTimeDualityConfig cfg;
    cfg.moran = small_moran();
    cfg.spec.horizon = 0.6;
    cfg.spec.levels.push_back({0.6, {2.0, 3.0}});
    MonomialSpec level;
    level.n = 2;
    level.phi_scale = 2.0;
    level.g_lo = 0.0;
    level.g_hi = 5.0;
    cfg.level_monomials = {level};
    cfg.replicas = 2000;
    cfg.seed = 11;
    auto strep = run_spacetime_duality(cfg);

    DualityConfig dcfg;
    dcfg.moran = cfg.moran;
    dcfg.t = 0.6;
    dcfg.replicas = 2000;
    dcfg.monomial = level;
    dcfg.dual_positions = {2.0, 3.0};
    dcfg.seed = 11;
    auto drep = run_duality(dcfg);

    // same estimators modulo replica stream usage: compare within pooled SE
    double diff = std::abs(strep.records[0].estimate - drep.records[0].estimate);
    double se = pooled_se(strep.records[0].std_error, drep.records[0].std_error);
    CHECK(diff < 3.0 * se + 1e-9);
    CHECK(strep.records[0].pass);
}

TEST_CASE("correlation suite holds at desk scale") {
    CorrelationConfig cfg;
    cfg.t = 0.5;
    cfg.grid_eta = 0.05;
    cfg.span = 3.0;
    cfg.h = 0.005;
    cfg.replicas = 1500;
    cfg.seed = 23;
    auto rep = run_correlation_suite(cfg);
    INFO(report_to_csv(rep));
    for (const auto& r : rep.records) CHECK(r.pass);
}

TEST_CASE("FV generator check at desk scale") {
    FvGeneratorConfig cfg;
    cfg.moran = small_moran();
    cfg.moran.sites = 4;
    cfg.moran.N = 40;
    cfg.moran.init_dist_same_site = 1.0;
    cfg.moran.init_dist_cross_site = 1.0;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 0.8;
    cfg.monomial.flat_radius = 0.2;
    cfg.monomial.g_lo = 0.0;
    cfg.monomial.g_hi = 3.0;
    cfg.monomial.g_kind = MonomialSpec::GKind::Ones;
    cfg.t_small = {0.02, 0.01};
    cfg.replicas = 8000;
    cfg.rel_tolerance = 0.15;
    cfg.seed = 29;
    auto rep = run_generator_check_fv(cfg);
    INFO(report_to_csv(rep));
    for (const auto& r : rep.records) CHECK(r.pass);
}

TEST_CASE("CS generator check at desk scale") {
    CsGeneratorConfig cfg;
    cfg.state.window_lo = -3.0;
    cfg.state.window_hi = 3.0;
    cfg.state.boundaries = {{-1.5, 0.5}, {-0.9, 0.15}, {-0.3, 0.7}, {0.2, 0.3},
                            {0.8, 0.1},  {1.4, 0.45}};
    cfg.state.resolution = 0.05;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 0.8;
    cfg.monomial.flat_radius = 0.2;
    cfg.monomial.g_lo = -2.0;
    cfg.monomial.g_hi = 2.0;
    cfg.monomial.g_kind = MonomialSpec::GKind::Bump;
    cfg.t_small = {0.01};
    cfg.grid_spacing = 0.02;
    cfg.h = 2e-4;
    cfg.replicas = 2500;
    cfg.rel_tolerance = 0.15;
    cfg.seed = 31;
    auto rep = run_generator_check_cs(cfg);
    INFO(report_to_csv(rep));
    for (const auto& r : rep.records) CHECK(r.pass);
}

TEST_CASE("scaling trend at reduced scale") {
    ScalingConfig cfg;
    cfg.eps_list = {0.5, 0.25};
    cfg.t = 0.4;
    cfg.gamma = 0.8;
    cfg.N = 10;
    cfg.monomial.n = 2;
    cfg.monomial.phi_scale = 1.0;
    cfg.monomial.g_lo = -1.0;
    cfg.monomial.g_hi = 1.0;
    cfg.monomial.g_kind = MonomialSpec::GKind::Bump;
    cfg.moran_replicas = 400;
    cfg.cssm_replicas = 1500;
    cfg.tuple_samples = 800;
    cfg.seed = 37;
    auto rep = run_scaling(cfg);
    INFO(report_to_csv(rep));
    for (const auto& r : rep.records) CHECK(r.pass);
}

TEST_CASE("reports serialize deterministically") {
    CorrelationConfig cfg;
    cfg.replicas = 200;
    cfg.grid_eta = 0.1;
    cfg.span = 2.0;
    cfg.h = 0.01;
    cfg.seed = 41;
    auto r1 = run_correlation_suite(cfg);
    auto r2 = run_correlation_suite(cfg);
    CHECK(report_to_json(r1) == report_to_json(r2));
    CHECK(report_to_csv(r1) == report_to_csv(r2));
    // worker count must not affect the bytes
    cfg.workers = 1;
    auto r3 = run_correlation_suite(cfg);
    cfg.workers = 2;
    auto r4 = run_correlation_suite(cfg);
    CHECK(report_to_json(r3) == report_to_json(r4));
}

TEST_CASE("serialization round trips") {
    std::vector<Atom> atoms{{0, 0.5, 1.0, 0.25}, {1, 1.5, 2.0, {}}};
    std::vector<double> dist{0.0, 3.0, 3.0, 0.0};
    FiniteMarkedSpace s(std::move(atoms), std::move(dist));
    auto text = io::space_to_json(s);
    auto back = io::space_from_json(text);
    CHECK(back.size() == 2);
    CHECK(back.dist(0, 1) == 3.0);
    CHECK(back.atom(0).type.has_value());

    cssm::RegularState st;
    st.window_lo = -2.0;
    st.window_hi = 2.0;
    st.boundaries = {{0.0, 0.5}};
    st.resolution = 0.01;
    auto rt = io::regular_state_from_json(io::regular_state_to_json(st));
    CHECK(rt.boundaries.size() == 1);
    CHECK(rt.boundaries[0].d == 0.5);

    auto mc = io::moran_config_from_json(
        R"({"sites": 8, "N": 20, "gamma": 0.5, "kernel": [{"dx": -1, "w": 0.5}, {"dx": 1, "w": 0.5}]})");
    CHECK(mc.sites == 8);
    CHECK(mc.kernel.support.size() == 2);

    auto k = coalescent::CoalescentState::singletons({0.0, 2.0});
    auto text2 = io::coalescent_to_json(k);
    CHECK(text2.find("\"blocks\"") != std::string::npos);
    CHECK(text2.find("\"rdist\"") != std::string::npos);
}
