#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genweb/coalescent.hpp"
#include "genweb/cssm.hpp"
#include "genweb/marked_space.hpp"
#include "genweb/moran.hpp"
#include "genweb/stats.hpp"

namespace genweb::experiments {

/// Named monomial families used by the experiment drivers. phi is smooth and
/// bounded; `flat_radius` > 0 selects the regular class (phi constant on
/// [0, flat_radius] in every distance coordinate).
struct MonomialSpec {
    int n = 2;
    double phi_scale = 2.0;     // phi = exp(-sum r_ij / phi_scale)
    double flat_radius = 0.0;   // *m.delta_reg when > 0
    double g_lo = 0.0, g_hi = 0.0;  // support box per coordinate
    enum class GKind { Ones, Bump, SiteIndicator } g_kind = GKind::Ones;
    std::vector<double> g_sites;  // SiteIndicator: allowed marks per coordinate

    Monomial build() const;
};

struct DualityConfig {
    moran::MoranConfig moran;
    double t = 1.0;
    std::int64_t replicas = 10000;
    MonomialSpec monomial;
    std::vector<double> dual_positions;  // block start locations, size n
    std::uint64_t seed = 1;
    int workers = 0;
};

/// Forward expectation E[H(X_t, K_0)] against backward E[H(X_0, K_t)],
/// gated at 3 pooled standard errors.
ExperimentReport run_duality(const DualityConfig& cfg);

struct SpaceTimeDualityConfig {
    moran::MoranConfig moran;
    coalescent::SpaceTimeSpec spec;           // levels with forward times and positions
    std::vector<MonomialSpec> level_monomials;  // one per level
    std::int64_t replicas = 10000;
    std::uint64_t seed = 1;
    int workers = 0;
};

ExperimentReport run_spacetime_duality(const SpaceTimeDualityConfig& cfg);

struct ScalingConfig {
    std::vector<double> eps_list{0.4, 0.2, 0.1};
    double t = 0.5;
    double gamma = 1.0;
    moran::MigrationKernel kernel = moran::MigrationKernel::nearest_neighbor();
    int N = 20;
    MonomialSpec monomial;        // order-2 family on the scaled window
    std::int64_t moran_replicas = 800;
    std::int64_t cssm_replicas = 4000;
    std::int64_t tuple_samples = 2000;  // pair subsample per replica
    double cssm_grid = 0.05;
    double cssm_h = 0.002;
    std::uint64_t seed = 1;
    int workers = 0;
};

/// Diffusively rescaled Moran expectations against the continuum target;
/// the discrepancy must decrease along the eps list up to 1 SE overlap.
ExperimentReport run_scaling(const ScalingConfig& cfg);

struct CorrelationConfig {
    double t = 0.5;
    double grid_eta = 0.02;
    double span = 4.0;   // paths start on [-span, span]
    double h = 0.002;
    std::int64_t replicas = 4000;
    std::uint64_t seed = 1;
    int workers = 0;
};

/// Monte Carlo negative correlation, decoupling, occupation (k <= 4) and
/// second-moment inequalities on coalescing-path point sets, one-sided with
/// 3 SE slack, plus the exact lattice counterparts as a regression anchor.
ExperimentReport run_correlation_suite(const CorrelationConfig& cfg);

struct FvGeneratorConfig {
    moran::MoranConfig moran;
    MonomialSpec monomial;
    std::vector<double> t_small{0.02, 0.01, 0.005};
    std::int64_t replicas = 30000;
    double rel_tolerance = 0.10;
    std::uint64_t seed = 1;
    int workers = 0;
};

ExperimentReport run_generator_check_fv(const FvGeneratorConfig& cfg);

struct CsGeneratorConfig {
    cssm::RegularState state;
    MonomialSpec monomial;       // must carry flat_radius > 0
    std::vector<double> t_small{0.02, 0.01};
    double grid_spacing = 0.02;
    double h = 2e-4;
    std::int64_t replicas = 4000;
    double rel_tolerance = 0.10;
    std::uint64_t seed = 1;
    int workers = 0;
};

ExperimentReport run_generator_check_cs(const CsGeneratorConfig& cfg);

std::string report_to_json(const ExperimentReport& rep, bool canonical = true);
std::string report_to_csv(const ExperimentReport& rep);

}  // namespace genweb::experiments
