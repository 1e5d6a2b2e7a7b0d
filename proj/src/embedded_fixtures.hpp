#pragma once

#include <map>
#include <string>

namespace arena::detail {

/// Map fixtures compiled in from data/maps, keyed by file stem.
const std::map<std::string, std::string>& embedded_map_fixtures();

}  // namespace arena::detail
