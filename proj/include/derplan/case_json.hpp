#pragma once

#include <string>

#include "derplan/network.hpp"

namespace derplan {

/// Canonical JSON case schema (see docs/case_schema.md).
/// load(save(c)) == c field-for-field; violations raise SchemaError with the
/// JSON-pointer path of the offending element.
NetworkCase load_case_json(const std::string& text);
std::string save_case_json(const NetworkCase& net);

}  // namespace derplan
