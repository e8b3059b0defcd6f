#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sefc/schema.hpp"

namespace sefc {

/**
 * One row of an adapter config before expansion. Rows that repeat per axis
 * carry `{t}` in the raw name (replaced by the source token) and `{a}` in the
 * canonical name (replaced by the 0-based axis), e.g. voraus joint tokens
 * "1".."6" map to axes 0..5.
 */
struct SignalPattern {
  std::string raw;
  std::string canonical;
  SignalRole role = SignalRole::Context;
  std::string unit;
  std::string notes;
  std::optional<int> axis;          // single-row form
  std::vector<std::string> tokens;  // repeat form
  std::vector<int> axes;            // repeat form, same length as tokens
};

/// Mechanical expansion of a patterned row into concrete signal specs.
std::vector<SignalSpec> expand_signal_pattern(const SignalPattern& pattern);

/// Parses an adapter config document. Throws InvalidConfig on malformed input.
AdapterSpec adapter_from_json(const nlohmann::json& doc);
AdapterSpec load_adapter_file(const std::filesystem::path& path);

/// Writes the expanded form (one record per signal, no patterns).
nlohmann::json adapter_to_json(const AdapterSpec& spec);

/// Ids of the adapters compiled into the library, sorted.
std::vector<std::string> builtin_adapter_ids();

/// Throws UnknownAdapter for an unrecognised id.
AdapterSpec builtin_adapter(std::string_view source_id);

}  // namespace sefc
