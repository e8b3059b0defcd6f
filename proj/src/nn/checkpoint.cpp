#include "sefc/nn/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sefc/errors.hpp"
#include "sefc/ingest.hpp"

namespace sefc::nn {

using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

}  // namespace

std::filesystem::path checkpoint_header_path(const std::filesystem::path& stem) { return with_suffix(stem, ".json"); }

std::filesystem::path checkpoint_params_path(const std::filesystem::path& stem) {
  return with_suffix(stem, ".params.csv");
}

void save_checkpoint(const std::filesystem::path& stem, const Model& model, const json& extra) {
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  json breakdown = json::array();
  for (const auto& [name, count] : model.parameter_breakdown()) breakdown.push_back({{"name", name}, {"count", count}});
  const json header = {{"format_version", kCheckpointVersion},
                       {"dims", model.dims()},
                       {"parameter_count", model.parameter_count()},
                       {"parameter_breakdown", breakdown},
                       {"parameters_file", checkpoint_params_path(stem).filename().string()},
                       {"extra", extra}};
  {
    std::ofstream out(checkpoint_header_path(stem), std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + checkpoint_header_path(stem).string());
    out << header.dump(2) << '\n';
  }
  std::string csv = "value\n";
  const auto& p = model.parameters();
  for (Index i = 0; i < p.size(); ++i) {
    csv += format_real(p(i));
    csv += '\n';
  }
  std::ofstream out(checkpoint_params_path(stem), std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + checkpoint_params_path(stem).string());
  out << csv;
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream hin(checkpoint_header_path(stem));
  if (!hin) throw Error(ErrorCode::Io, "cannot open " + checkpoint_header_path(stem).string());
  json header;
  try {
    hin >> header;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  try {
    ck.model = make_model(header.at("dims"));
    ck.extra = header.value("extra", json::object());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("checkpoint header: ") + e.what());
  }

  std::ifstream pin(checkpoint_params_path(stem), std::ios::binary);
  if (!pin) throw Error(ErrorCode::Io, "cannot open " + checkpoint_params_path(stem).string());
  std::string line;
  std::getline(pin, line);  // header row
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(ck.model->parameter_count()));
  while (std::getline(pin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      throw Error(ErrorCode::InvalidConfig, "bad parameter value '" + line + "'");
    }
    values.push_back(v);
  }
  if (static_cast<Index>(values.size()) != ck.model->parameter_count()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint has " + std::to_string(values.size()) + " parameters, model needs " +
                                              std::to_string(ck.model->parameter_count()));
  }
  ck.model->parameters() = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
  return ck;
}

}  // namespace sefc::nn
