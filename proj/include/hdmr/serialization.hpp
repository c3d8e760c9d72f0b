#pragma once

#include <json.hpp>

#include "hdmr/model.hpp"

namespace hdmr {

inline constexpr int kModelSchemaVersion = 1;

nlohmann::json basis_to_json(const BasisConfig& b);
BasisConfig basis_from_json(const nlohmann::json& j);

/// Model body without the schema envelope; used for nesting inside other
/// documents.
nlohmann::json model_to_json(const HdmrModel& m);
HdmrModel model_from_json(const nlohmann::json& j);

/// Parses a document and checks its schema version. Throws
/// MalformedDocumentError or SchemaVersionError.
nlohmann::json parse_document(std::string_view document);

}  // namespace hdmr
