#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dhsplan::detail {

struct SchemaViolation {
  std::string path; // JSON pointer of the offending instance location
  std::string message;
  bool missing_required = false;
};

// Validates against the subset of JSON Schema the network schema uses:
// type, enum, const, required, properties, additionalProperties, items,
// minItems, minLength, minimum, exclusiveMinimum, oneOf.
std::vector<SchemaViolation> validate_schema(const nlohmann::json &schema,
                                             const nlohmann::json &instance);

} // namespace dhsplan::detail
