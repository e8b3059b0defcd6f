#pragma once

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "sefc/nn/model.hpp"

namespace sefc::nn {

struct Checkpoint {
  std::unique_ptr<Model> model;
  nlohmann::json extra;  // caller-defined payload (standardizer, configs, seed)
};

/// Header path for a checkpoint stem: `<stem>.json`; parameters live in `<stem>.params.csv`.
std::filesystem::path checkpoint_header_path(const std::filesystem::path& stem);
std::filesystem::path checkpoint_params_path(const std::filesystem::path& stem);

/// Writes the JSON header (dims, parameter count, breakdown, extra) and one
/// 17-significant-digit parameter per CSV row. Errors: Io.
void save_checkpoint(const std::filesystem::path& stem, const Model& model, const nlohmann::json& extra);

/// Errors: Io, InvalidConfig (bad header), ShapeMismatch (parameter count differs).
Checkpoint load_checkpoint(const std::filesystem::path& stem);

}  // namespace sefc::nn
