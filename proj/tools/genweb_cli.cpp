// Command-line front end: seeded experiment execution and result emission.
//
// Subcommands map onto the library drivers; flags override config-file
// values. Stochastic subcommands require --seed and --replicas. Identical
// (argv, config, seed) produce byte-identical primary output; wall time is
// reported on stderr only.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "genweb/cbm.hpp"
#include "genweb/experiments.hpp"
#include "genweb/json_io.hpp"
#include "genweb/km_oracle.hpp"
#include "genweb/lattice_web.hpp"
#include "genweb/moran.hpp"
#include "genweb/parallel.hpp"

using namespace genweb;

namespace {

struct CommonOpts {
    std::optional<std::uint64_t> seed;
    std::int64_t replicas = -1;
    std::string output;
    std::string format = "json";
    int workers = 0;
    std::string config_path;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool stochastic) {
    if (stochastic) {
        cmd->add_option("--seed", o.seed, "64-bit stream seed (required)");
        cmd->add_option("--replicas", o.replicas, "Monte Carlo replica count (required)");
    }
    cmd->add_option("--out", o.output, "output file path (default: stdout)");
    cmd->add_option("--format", o.format, "json|csv")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--workers", o.workers,
                    "worker threads (default: GENWEB_WORKERS or logical cores)");
    cmd->add_option("--config", o.config_path, "JSON parameter file");
}

int require_stochastic(const CommonOpts& o) {
    if (!o.seed.has_value()) {
        std::cerr << "error: --seed is required for stochastic subcommands\n";
        return 2;
    }
    if (o.replicas <= 0) {
        std::cerr << "error: --replicas must be a positive count\n";
        return 2;
    }
    return 0;
}

nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
}

int emit_report(const ExperimentReport& rep, const CommonOpts& o, double wall_s) {
    std::string text = o.format == "csv" ? experiments::report_to_csv(rep)
                                         : experiments::report_to_json(rep);
    emit(text, o.output);
    std::cerr << rep.name << ": " << (rep.all_pass() ? "all checks passed" : "FAILURES")
              << " (" << wall_s << " s)\n";
    return rep.all_pass() ? 0 : 1;
}

moran::MoranConfig moran_from(const nlohmann::json& j) {
    if (j.is_null() || j.empty()) return moran::MoranConfig{};
    return io::moran_config_from_json(j.dump());
}

experiments::MonomialSpec monomial_from(const nlohmann::json& j,
                                        experiments::MonomialSpec base) {
    if (j.is_null()) return base;
    if (j.contains("n")) base.n = j.at("n").get<int>();
    if (j.contains("phi_scale")) base.phi_scale = j.at("phi_scale").get<double>();
    if (j.contains("flat_radius")) base.flat_radius = j.at("flat_radius").get<double>();
    if (j.contains("g_lo")) base.g_lo = j.at("g_lo").get<double>();
    if (j.contains("g_hi")) base.g_hi = j.at("g_hi").get<double>();
    if (j.contains("g_kind")) {
        auto k = j.at("g_kind").get<std::string>();
        base.g_kind = k == "bump" ? experiments::MonomialSpec::GKind::Bump
                                  : experiments::MonomialSpec::GKind::Ones;
    }
    return base;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"genweb: genealogies of spatially interacting populations and "
                 "their continuum limit"};
    app.require_subcommand(1);

    CommonOpts density_o, twopoint_o, km_o, duality_o, stdual_o, scaling_o, gen_o,
        corr_o, enum_o, sample_o;

    // density
    auto* cmd_density = app.add_subcommand("density",
                                           "occupied-point density of coalescing paths");
    double d_t = 1.0, d_a = 0.0, d_b = 1.0, d_eta = 0.005, d_buffer = 6.0, d_h = 0.005;
    bool d_analytic = false;
    cmd_density->add_option("--t", d_t, "time");
    cmd_density->add_option("--a", d_a, "window left end");
    cmd_density->add_option("--b", d_b, "window right end");
    cmd_density->add_option("--eta", d_eta, "start grid spacing");
    cmd_density->add_option("--buffer", d_buffer, "start buffer beyond the window");
    cmd_density->add_option("--step", d_h, "time step");
    cmd_density->add_flag("--analytic", d_analytic, "print the closed form only");
    add_common(cmd_density, density_o, true);

    // two-point
    auto* cmd_twopoint = app.add_subcommand("two-point",
                                            "constrained two-point density estimate");
    double tp_t = 1.0, tp_delta = 1.0, tp_probe = 0.02, tp_h = 0.005;
    bool tp_analytic = false;
    cmd_twopoint->add_option("--t", tp_t, "time");
    cmd_twopoint->add_option("--delta", tp_delta, "separation");
    cmd_twopoint->add_option("--probe", tp_probe, "probe interval width");
    cmd_twopoint->add_option("--step", tp_h, "time step");
    cmd_twopoint->add_flag("--analytic", tp_analytic, "print the closed form only");
    add_common(cmd_twopoint, twopoint_o, true);

    // km
    auto* cmd_km = app.add_subcommand("km", "non-intersection probability oracle");
    std::vector<double> km_starts{0.0, 1.0};
    double km_t = 1.0, km_two_delta = -1.0, km_two_probe = 0.01;
    cmd_km->add_option("--starts", km_starts, "ordered starting positions (n <= 4)");
    cmd_km->add_option("--t", km_t, "time");
    cmd_km->add_option("--two-point-delta", km_two_delta,
                       "evaluate the finite-probe two-point difference instead");
    cmd_km->add_option("--probe", km_two_probe, "probe width for --two-point-delta");
    add_common(cmd_km, km_o, false);

    // duality
    auto* cmd_duality = app.add_subcommand("duality", "forward/backward pairing check");
    double du_t = 1.0;
    std::vector<double> du_positions;
    cmd_duality->add_option("--t", du_t, "horizon");
    cmd_duality->add_option("--positions", du_positions, "dual block start sites");
    add_common(cmd_duality, duality_o, true);

    // spacetime-duality
    auto* cmd_stdual = app.add_subcommand("spacetime-duality",
                                          "multi-level frozen-particle pairing check");
    add_common(cmd_stdual, stdual_o, true);

    // scaling
    auto* cmd_scaling = app.add_subcommand("scaling",
                                           "diffusive rescaling trend experiment");
    add_common(cmd_scaling, scaling_o, true);

    // generator-check
    auto* cmd_gen = app.add_subcommand("generator-check", "finite-difference generator test");
    std::string gen_target = "fv";
    cmd_gen->add_option("--target", gen_target, "fv|cs")->check(CLI::IsMember({"fv", "cs"}));
    add_common(cmd_gen, gen_o, true);

    // correlations
    auto* cmd_corr = app.add_subcommand("correlations",
                                        "negative-correlation inequality suite");
    double co_t = 0.5;
    cmd_corr->add_option("--t", co_t, "time");
    add_common(cmd_corr, corr_o, true);

    // enumerate
    auto* cmd_enum = app.add_subcommand("enumerate",
                                        "exact lattice enumeration with rationals");
    int en_xmin = 0, en_xmax = 2, en_tmin = 0, en_tmax = 1;
    std::vector<int> en_starts{0, 2};
    cmd_enum->add_option("--x-min", en_xmin, "window left");
    cmd_enum->add_option("--x-max", en_xmax, "window right");
    cmd_enum->add_option("--t-min", en_tmin, "window bottom");
    cmd_enum->add_option("--t-max", en_tmax, "window top");
    cmd_enum->add_option("--starts", en_starts, "walk starts at the bottom row");
    add_common(cmd_enum, enum_o, false);

    // sample-genealogy
    auto* cmd_sample = app.add_subcommand("sample-genealogy",
                                          "simulate and export a sampled genealogy");
    double sg_t = 1.0;
    int sg_n = 4;
    cmd_sample->add_option("--t", sg_t, "simulation horizon");
    cmd_sample->add_option("--n", sg_n, "sample size");
    add_common(cmd_sample, sample_o, true);

    CLI11_PARSE(app, argc, argv);
    auto t0 = std::chrono::steady_clock::now();
    auto wall = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    try {
        if (cmd_density->parsed()) {
            if (d_analytic) {
                std::ostringstream os;
                os.precision(12);
                os << cbm::density_formula(d_t, d_a, d_b);
                emit(os.str(), density_o.output);
                return 0;
            }
            if (int rc = require_stochastic(density_o)) return rc;
            auto est = cbm::estimate_density(d_t, d_a, d_b, d_eta, d_buffer,
                                             density_o.replicas, d_h, *density_o.seed,
                                             density_o.workers);
            std::ostringstream os;
            os.precision(12);
            os << "t,interval,estimate,stderr,replicas,h,eta\n"
               << d_t << ",[" << d_a << ";" << d_b << "]," << est.mean << "," << est.se
               << "," << est.replicas << "," << est.h << "," << est.eta << "\n";
            emit(os.str(), density_o.output);
            std::cerr << "density done (" << wall() << " s)\n";
            return 0;
        }
        if (cmd_twopoint->parsed()) {
            if (tp_analytic) {
                std::ostringstream os;
                os.precision(12);
                os << cbm::two_point_formula(tp_t, tp_delta);
                emit(os.str(), twopoint_o.output);
                return 0;
            }
            if (int rc = require_stochastic(twopoint_o)) return rc;
            auto est = cbm::estimate_two_point(tp_t, tp_delta, tp_probe,
                                               twopoint_o.replicas, tp_h,
                                               *twopoint_o.seed, twopoint_o.workers);
            std::ostringstream os;
            os.precision(12);
            os << "t,delta,estimate,stderr,replicas,h,eta\n"
               << tp_t << "," << tp_delta << "," << est.mean << "," << est.se << ","
               << est.replicas << "," << est.h << "," << est.eta << "\n";
            emit(os.str(), twopoint_o.output);
            std::cerr << "two-point done (" << wall() << " s)\n";
            return 0;
        }
        if (cmd_km->parsed()) {
            std::ostringstream os;
            os.precision(12);
            if (km_two_delta >= 0.0) {
                auto r = km::two_point_exact(km_t, km_two_delta, km_two_probe);
                os << "value," << r.value << "\nvalue_over_probe_sq,"
                   << r.value / (km_two_probe * km_two_probe) << "\nconverged,"
                   << (r.converged ? 1 : 0) << "\nnodes," << r.nodes << "\n";
            } else {
                km::KmQuery q;
                q.starts = km_starts;
                q.t = km_t;
                auto r = km::non_intersection_prob(q);
                os << "value," << r.value << "\nconverged," << (r.converged ? 1 : 0)
                   << "\nnodes," << r.nodes << "\nclamped," << (r.clamped ? 1 : 0) << "\n";
            }
            emit(os.str(), km_o.output);
            return 0;
        }
        if (cmd_duality->parsed()) {
            if (int rc = require_stochastic(duality_o)) return rc;
            auto j = load_config(duality_o.config_path);
            experiments::DualityConfig cfg;
            cfg.moran = moran_from(j.value("moran", nlohmann::json()));
            cfg.monomial.n = 2;
            cfg.monomial.phi_scale = 2.0;
            cfg.monomial.g_lo = 0.0;
            cfg.monomial.g_hi = static_cast<double>(cfg.moran.sites - 1);
            cfg.monomial =
                monomial_from(j.value("monomial", nlohmann::json()), cfg.monomial);
            cfg.t = j.value("t", du_t);
            cfg.replicas = duality_o.replicas;
            cfg.seed = *duality_o.seed;
            cfg.workers = duality_o.workers;
            if (!du_positions.empty())
                cfg.dual_positions = du_positions;
            else if (j.contains("positions"))
                cfg.dual_positions = j.at("positions").get<std::vector<double>>();
            else
                cfg.dual_positions = {2.0, 3.0};
            return emit_report(experiments::run_duality(cfg), duality_o, wall());
        }
        if (cmd_stdual->parsed()) {
            if (int rc = require_stochastic(stdual_o)) return rc;
            auto j = load_config(stdual_o.config_path);
            experiments::SpaceTimeDualityConfig cfg;
            cfg.moran = moran_from(j.value("moran", nlohmann::json()));
            cfg.replicas = stdual_o.replicas;
            cfg.seed = *stdual_o.seed;
            cfg.workers = stdual_o.workers;
            if (j.contains("levels")) {
                double horizon = 0.0;
                for (const auto& lv : j.at("levels")) {
                    coalescent::SpaceTimeSpec::Level level;
                    level.t_k = lv.at("t").get<double>();
                    level.positions = lv.at("positions").get<std::vector<double>>();
                    horizon = std::max(horizon, level.t_k);
                    cfg.spec.levels.push_back(level);
                    experiments::MonomialSpec ms;
                    ms.n = static_cast<int>(level.positions.size());
                    ms.phi_scale = 2.0;
                    ms.g_lo = 0.0;
                    ms.g_hi = static_cast<double>(cfg.moran.sites - 1);
                    cfg.level_monomials.push_back(
                        monomial_from(lv.value("monomial", nlohmann::json()), ms));
                }
                cfg.spec.horizon = horizon;
            } else {
                cfg.spec.horizon = 1.0;
                cfg.spec.levels.push_back({0.5, {2.0}});
                cfg.spec.levels.push_back({1.0, {3.0, 3.0}});
                experiments::MonomialSpec m1;
                m1.n = 1;
                m1.g_lo = 0.0;
                m1.g_hi = static_cast<double>(cfg.moran.sites - 1);
                experiments::MonomialSpec m2 = m1;
                m2.n = 2;
                m2.phi_scale = 2.0;
                cfg.level_monomials = {m1, m2};
            }
            return emit_report(experiments::run_spacetime_duality(cfg), stdual_o, wall());
        }
        if (cmd_scaling->parsed()) {
            if (int rc = require_stochastic(scaling_o)) return rc;
            auto j = load_config(scaling_o.config_path);
            experiments::ScalingConfig cfg;
            if (j.contains("eps")) cfg.eps_list = j.at("eps").get<std::vector<double>>();
            cfg.t = j.value("t", 0.5);
            cfg.gamma = j.value("gamma", 1.0);
            cfg.N = j.value("N", 20);
            cfg.monomial.n = 2;
            cfg.monomial.phi_scale = j.value("phi_scale", 1.0);
            cfg.monomial.g_lo = j.value("g_lo", -1.0);
            cfg.monomial.g_hi = j.value("g_hi", 1.0);
            cfg.monomial.g_kind = experiments::MonomialSpec::GKind::Bump;
            cfg.moran_replicas = scaling_o.replicas;
            cfg.cssm_replicas = j.value("cssm_replicas", 4 * scaling_o.replicas);
            cfg.seed = *scaling_o.seed;
            cfg.workers = scaling_o.workers;
            return emit_report(experiments::run_scaling(cfg), scaling_o, wall());
        }
        if (cmd_gen->parsed()) {
            if (int rc = require_stochastic(gen_o)) return rc;
            auto j = load_config(gen_o.config_path);
            if (gen_target == "fv") {
                experiments::FvGeneratorConfig cfg;
                cfg.moran = moran_from(j.value("moran", nlohmann::json()));
                if (cfg.moran.init_dist_same_site == 0.0) {
                    cfg.moran.init_dist_same_site = 1.0;
                    cfg.moran.init_dist_cross_site = 1.0;
                }
                cfg.monomial.n = 2;
                cfg.monomial.phi_scale = 0.8;
                cfg.monomial.flat_radius = 0.2;
                cfg.monomial.g_lo = 0.0;
                cfg.monomial.g_hi = 2.0;
                cfg.monomial =
                    monomial_from(j.value("monomial", nlohmann::json()), cfg.monomial);
                if (j.contains("t_small"))
                    cfg.t_small = j.at("t_small").get<std::vector<double>>();
                cfg.replicas = gen_o.replicas;
                cfg.seed = *gen_o.seed;
                cfg.workers = gen_o.workers;
                return emit_report(experiments::run_generator_check_fv(cfg), gen_o, wall());
            }
            experiments::CsGeneratorConfig cfg;
            if (j.contains("state"))
                cfg.state = io::regular_state_from_json(j.at("state").dump());
            else {
                cfg.state.window_lo = -3.0;
                cfg.state.window_hi = 3.0;
                cfg.state.boundaries = {{-1.5, 0.5}, {-0.9, 0.15}, {-0.3, 0.7},
                                        {0.2, 0.3},  {0.8, 0.1},  {1.4, 0.45}};
                cfg.state.resolution = 0.05;
            }
            cfg.monomial.n = 2;
            cfg.monomial.phi_scale = 0.8;
            cfg.monomial.flat_radius = 0.2;
            cfg.monomial.g_lo = -2.0;
            cfg.monomial.g_hi = 2.0;
            cfg.monomial.g_kind = experiments::MonomialSpec::GKind::Bump;
            cfg.monomial =
                monomial_from(j.value("monomial", nlohmann::json()), cfg.monomial);
            if (j.contains("t_small"))
                cfg.t_small = j.at("t_small").get<std::vector<double>>();
            cfg.replicas = gen_o.replicas;
            cfg.seed = *gen_o.seed;
            cfg.workers = gen_o.workers;
            return emit_report(experiments::run_generator_check_cs(cfg), gen_o, wall());
        }
        if (cmd_corr->parsed()) {
            if (int rc = require_stochastic(corr_o)) return rc;
            experiments::CorrelationConfig cfg;
            cfg.t = co_t;
            cfg.replicas = corr_o.replicas;
            cfg.seed = *corr_o.seed;
            cfg.workers = corr_o.workers;
            return emit_report(experiments::run_correlation_suite(cfg), corr_o, wall());
        }
        if (cmd_enum->parsed()) {
            lattice::Window w{en_xmin, en_xmax, en_tmin, en_tmax};
            std::vector<std::pair<int, int>> starts;
            for (int x : en_starts) starts.emplace_back(x, en_tmin);
            std::vector<lattice::HitEvent> events;
            auto j = load_config(enum_o.config_path);
            if (j.contains("events")) {
                for (const auto& e : j.at("events"))
                    events.push_back({e.at("t").get<int>(), e.at("lo").get<int>(),
                                      e.at("hi").get<int>(), e.value("k", 1)});
            } else {
                events.push_back({en_tmax, 1, 1, 1});
                events.push_back({en_tmax, 3, 3, 1});
            }
            auto res = lattice::enumerate_exact(w, starts, events);
            emit(io::enumeration_to_json(res), enum_o.output);
            return res.product_bound_holds ? 0 : 1;
        }
        if (cmd_sample->parsed()) {
            if (int rc = require_stochastic(sample_o)) return rc;
            auto j = load_config(sample_o.config_path);
            auto cfg = moran_from(j.value("moran", nlohmann::json()));
            moran::MoranState st(cfg);
            rng::Stream ev(*sample_o.seed, 0, rng::Purpose::MoranEvents);
            rng::Stream sr(*sample_o.seed, 0, rng::Purpose::MoranSample);
            st.step(sg_t, ev);
            auto space = st.sample_genealogy(sg_n, 0, cfg.sites - 1, sr);
            emit(io::space_to_json(space), sample_o.output);
            return 0;
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 2;
}
