#pragma once

#include <string>

#include "genweb/coalescent.hpp"
#include "genweb/cssm.hpp"
#include "genweb/lattice_web.hpp"
#include "genweb/marked_space.hpp"
#include "genweb/moran.hpp"

namespace genweb::io {

std::string space_to_json(const FiniteMarkedSpace& s);
FiniteMarkedSpace space_from_json(const std::string& text);

std::string coalescent_to_json(const coalescent::CoalescentState& k);

std::string regular_state_to_json(const cssm::RegularState& st);
cssm::RegularState regular_state_from_json(const std::string& text);

std::string enumeration_to_json(const lattice::EnumerationResult& res);

moran::MoranConfig moran_config_from_json(const std::string& text);

}  // namespace genweb::io
