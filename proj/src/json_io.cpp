#include "genweb/json_io.hpp"

#include <stdexcept>

#include "json.hpp"

namespace genweb::io {

using nlohmann::ordered_json;

std::string space_to_json(const FiniteMarkedSpace& s) {
    ordered_json j;
    auto atoms = ordered_json::array();
    for (const auto& a : s.atoms()) {
        ordered_json ja;
        ja["id"] = a.id;
        ja["mark"] = a.mark;
        ja["weight"] = a.weight;
        if (a.type) ja["type"] = *a.type;
        atoms.push_back(ja);
    }
    j["atoms"] = atoms;
    auto rows = ordered_json::array();
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
        auto row = ordered_json::array();
        for (std::size_t k = 0; k < n; ++k) row.push_back(s.dist(i, k));
        rows.push_back(row);
    }
    j["dist"] = rows;
    return j.dump(2);
}

FiniteMarkedSpace space_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    std::vector<Atom> atoms;
    for (const auto& ja : j.at("atoms")) {
        Atom a;
        a.id = ja.at("id").get<int>();
        a.mark = ja.at("mark").get<double>();
        a.weight = ja.at("weight").get<double>();
        if (ja.contains("type")) a.type = ja.at("type").get<double>();
        atoms.push_back(a);
    }
    const std::size_t n = atoms.size();
    std::vector<double> dist;
    dist.reserve(n * n);
    for (const auto& row : j.at("dist"))
        for (const auto& v : row) dist.push_back(v.get<double>());
    if (dist.size() != n * n)
        throw std::invalid_argument("dist must be a full n x n matrix");
    return FiniteMarkedSpace(std::move(atoms), std::move(dist));
}

std::string coalescent_to_json(const coalescent::CoalescentState& k) {
    ordered_json j;
    j["clock"] = k.clock();
    auto blocks = ordered_json::array();
    for (int rep : k.block_representatives()) {
        ordered_json b;
        auto members = ordered_json::array();
        for (int i = 0; i < k.n(); ++i)
            if (k.block_root(i) == rep) members.push_back(i);
        b["members"] = members;
        b["location"] = k.block_position(rep);
        blocks.push_back(b);
    }
    j["blocks"] = blocks;
    auto rows = ordered_json::array();
    for (int i = 0; i < k.n(); ++i) {
        auto row = ordered_json::array();
        for (int l = 0; l < k.n(); ++l) row.push_back(i == l ? 0.0 : k.rdist(i, l));
        rows.push_back(row);
    }
    j["rdist"] = rows;
    return j.dump(2);
}

std::string regular_state_to_json(const cssm::RegularState& st) {
    ordered_json j;
    j["window"] = {st.window_lo, st.window_hi};
    auto bs = ordered_json::array();
    for (const auto& b : st.boundaries) {
        ordered_json jb;
        jb["x"] = b.x;
        jb["d"] = b.d;
        bs.push_back(jb);
    }
    j["boundaries"] = bs;
    j["resolution"] = st.resolution;
    j["rr_certified"] = st.rr_certified;
    return j.dump(2);
}

cssm::RegularState regular_state_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    cssm::RegularState st;
    st.window_lo = j.at("window").at(0).get<double>();
    st.window_hi = j.at("window").at(1).get<double>();
    for (const auto& jb : j.at("boundaries"))
        st.boundaries.push_back({jb.at("x").get<double>(), jb.at("d").get<double>()});
    if (j.contains("resolution")) st.resolution = j.at("resolution").get<double>();
    if (j.contains("rr_certified")) st.rr_certified = j.at("rr_certified").get<bool>();
    st.validate();
    return st;
}

std::string enumeration_to_json(const lattice::EnumerationResult& res) {
    ordered_json j;
    j["configurations"] = res.config_count;
    auto rat = [](const lattice::Rational& r) {
        ordered_json q;
        q["num"] = r.num;
        q["den"] = r.den;
        return q;
    };
    auto evs = ordered_json::array();
    for (const auto& p : res.event_probs) evs.push_back(rat(p));
    j["event_probs"] = evs;
    auto pw = ordered_json::array();
    for (const auto& row : res.pairwise_probs) {
        auto r = ordered_json::array();
        for (const auto& p : row) r.push_back(rat(p));
        pw.push_back(r);
    }
    j["pairwise_probs"] = pw;
    j["full_intersection"] = rat(res.full_intersection);
    j["product_bound_holds"] = res.product_bound_holds;
    j["violations"] = res.violations;
    return j.dump(2);
}

moran::MoranConfig moran_config_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    moran::MoranConfig cfg;
    cfg.sites = j.at("sites").get<int>();
    cfg.N = j.at("N").get<int>();
    cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("kernel")) {
        cfg.kernel.support.clear();
        for (const auto& e : j.at("kernel"))
            cfg.kernel.support.emplace_back(e.at("dx").get<int>(), e.at("w").get<double>());
    }
    if (j.contains("geometry"))
        cfg.geometry = j.at("geometry").get<std::string>() == "interval"
                           ? moran::Geometry::Interval
                           : moran::Geometry::Torus;
    if (j.contains("init_dist_same_site"))
        cfg.init_dist_same_site = j.at("init_dist_same_site").get<double>();
    if (j.contains("init_dist_cross_site"))
        cfg.init_dist_cross_site = j.at("init_dist_cross_site").get<double>();
    if (j.contains("types_enabled")) cfg.types_enabled = j.at("types_enabled").get<bool>();
    cfg.validate();
    return cfg;
}

}  // namespace genweb::io
