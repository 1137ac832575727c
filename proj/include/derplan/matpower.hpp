#pragma once

#include <string>

#include "derplan/network.hpp"

namespace derplan {

/// Parses a MATPOWER-style case file (the matrix subset: baseMVA, bus, gen,
/// branch, gencost with polynomial costs). Anything outside that subset is
/// rejected with an UnsupportedError; malformed input raises SyntaxError with
/// line/column; model inconsistencies raise SemanticError.
NetworkCase parse_matpower_case(const std::string& text);

/// Re-emits a case in the same format at full precision, so that
/// parse(emit(c)) == c.
std::string emit_matpower_case(const NetworkCase& net);

}  // namespace derplan
