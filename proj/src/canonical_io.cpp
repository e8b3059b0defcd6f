#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "sefc/errors.hpp"
#include "sefc/ingest.hpp"
#include "sefc/raw_table.hpp"

namespace sefc {

namespace {

using nlohmann::json;

constexpr int kCanonicalFormatVersion = 1;
constexpr std::string_view kSidecarSuffix = ".episode.json";

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string(), path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string(), path.string());
}

double parse_cell(std::string_view cell, const std::filesystem::path& path, std::size_t line) {
  if (cell == "nan" || cell == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw Error(ErrorCode::SchemaViolation,
                path.filename().string() + " line " + std::to_string(line) + ": non-numeric cell '" +
                    std::string(cell) + "'",
                std::to_string(line));
  }
  return v;
}

json sidecar_json(const Episode& ep) {
  json channels = json::array();
  for (const auto& d : ep.descriptors) {
    channels.push_back({{"canonical_name", d.canonical_name},
                        {"role", std::string(to_string(d.role))},
                        {"unit", d.unit},
                        {"axis", d.axis ? json(*d.axis) : json(nullptr)}});
  }
  json runs = json::array();
  for (const auto& [label, count] : encode_phase_runs(ep.phase)) runs.push_back({label, count});
  return {{"format_version", kCanonicalFormatVersion},
          {"episode_id", ep.episode_id},
          {"source_id", ep.source_id},
          {"embodiment", ep.embodiment},
          {"task", std::string(to_string(ep.task))},
          {"rate_hz", ep.rate_hz},
          {"steps", ep.steps()},
          {"fault", ep.fault ? json(*ep.fault) : json(nullptr)},
          {"healthy", ep.healthy},
          {"phase_runs", runs},
          {"channels", channels}};
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

std::vector<std::pair<std::string, std::size_t>> encode_phase_runs(const std::vector<std::string>& phase) {
  std::vector<std::pair<std::string, std::size_t>> runs;
  for (const auto& label : phase) {
    if (!runs.empty() && runs.back().first == label) {
      ++runs.back().second;
    } else {
      runs.emplace_back(label, 1);
    }
  }
  return runs;
}

std::vector<std::string> decode_phase_runs(const std::vector<std::pair<std::string, std::size_t>>& runs) {
  std::vector<std::string> phase;
  for (const auto& [label, count] : runs) phase.insert(phase.end(), count, label);
  return phase;
}

CanonicalPaths canonical_paths(const std::filesystem::path& dir, const std::string& episode_id) {
  return {dir / (episode_id + ".csv"), dir / (episode_id + std::string(kSidecarSuffix))};
}

CanonicalPaths write_canonical(const Episode& ep, const std::filesystem::path& dir) {
  validate_episode(ep);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message(), dir.string());
  const auto paths = canonical_paths(dir, ep.episode_id);

  std::string csv = "t_s";
  for (const auto& d : ep.descriptors) csv += "," + d.canonical_name;
  csv += '\n';
  for (std::size_t r = 0; r < ep.steps(); ++r) {
    csv += format_real(ep.t[r]);
    for (Eigen::Index c = 0; c < ep.channels.cols(); ++c) {
      csv += ',';
      csv += format_real(ep.channels(static_cast<Eigen::Index>(r), c));
    }
    csv += '\n';
  }
  spill(paths.data, csv);
  spill(paths.sidecar, sidecar_json(ep).dump(2) + "\n");
  return paths;
}

Episode read_canonical(const CanonicalPaths& paths) {
  json side;
  try {
    side = json::parse(slurp(paths.sidecar));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, paths.sidecar.filename().string() + ": " + e.what(),
                paths.sidecar.string());
  }

  Episode ep;
  try {
    ep.episode_id = side.at("episode_id").get<std::string>();
    ep.source_id = side.at("source_id").get<std::string>();
    ep.embodiment = side.at("embodiment").get<std::string>();
    auto task = parse_task(side.at("task").get<std::string>());
    if (!task) throw Error(ErrorCode::SchemaViolation, "unknown task", "task");
    ep.task = *task;
    ep.rate_hz = side.at("rate_hz").get<double>();
    if (!side.at("fault").is_null()) ep.fault = side.at("fault").get<std::string>();
    ep.healthy = side.at("healthy").get<bool>();
    std::vector<std::pair<std::string, std::size_t>> runs;
    for (const auto& run : side.at("phase_runs")) runs.emplace_back(run.at(0).get<std::string>(), run.at(1).get<std::size_t>());
    ep.phase = decode_phase_runs(runs);
    for (const auto& ch : side.at("channels")) {
      ChannelDescriptor d;
      d.canonical_name = ch.at("canonical_name").get<std::string>();
      auto role = parse_role(ch.at("role").get<std::string>());
      if (!role) throw Error(ErrorCode::SchemaViolation, "unknown role for " + d.canonical_name, d.canonical_name);
      d.role = *role;
      d.unit = ch.at("unit").get<std::string>();
      if (!ch.at("axis").is_null()) d.axis = ch.at("axis").get<int>();
      ep.descriptors.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, paths.sidecar.filename().string() + ": " + e.what(),
                paths.sidecar.string());
  }

  const std::string text = slurp(paths.data);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  const std::size_t expected_cols = ep.descriptors.size() + 1;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_csv_record(line, ',');
    if (fields.size() != expected_cols) {
      throw Error(ErrorCode::SchemaViolation,
                  paths.data.filename().string() + " line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size() - 1) + " value columns, sidecar lists " +
                      std::to_string(ep.descriptors.size()),
                  paths.data.string());
    }
    if (line_no == 1) {
      if (fields[0] != "t_s") throw Error(ErrorCode::SchemaViolation, "first column must be t_s", paths.data.string());
      for (std::size_t c = 0; c < ep.descriptors.size(); ++c) {
        if (fields[c + 1] != ep.descriptors[c].canonical_name) {
          throw Error(ErrorCode::SchemaViolation,
                      "column " + std::to_string(c + 1) + " is '" + fields[c + 1] + "', sidecar says '" +
                          ep.descriptors[c].canonical_name + "'",
                      fields[c + 1]);
        }
      }
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_cell(f, paths.data, line_no));
    rows.push_back(std::move(row));
  }

  ep.t.resize(rows.size());
  ep.channels.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ep.descriptors.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ep.t[r] = rows[r][0];
    for (std::size_t c = 0; c < ep.descriptors.size(); ++c) {
      ep.channels(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c + 1];
    }
  }
  validate_episode(ep);
  return ep;
}

Episode read_canonical(const std::filesystem::path& dir, const std::string& episode_id) {
  return read_canonical(canonical_paths(dir, episode_id));
}

std::vector<Episode> read_canonical_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir.string(), dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > kSidecarSuffix.size() && name.ends_with(kSidecarSuffix)) {
      ids.push_back(name.substr(0, name.size() - kSidecarSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Episode> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(read_canonical(dir, id));
  return out;
}

}  // namespace sefc
