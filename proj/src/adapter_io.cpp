#include "sefc/adapters.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sefc/errors.hpp"

namespace sefc {

namespace detail {
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_adapters();
}

namespace {

using nlohmann::json;

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, where + ": " + what, where);
}

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) config_error(where, std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    config_error(where, std::string("field '") + key + "': " + e.what());
  }
}

SignalPattern pattern_from_json(const json& row, const std::string& where) {
  SignalPattern p;
  p.raw = get_field<std::string>(row, "raw", where);
  p.canonical = get_field<std::string>(row, "canonical", where);
  auto role_text = get_field<std::string>(row, "role", where);
  auto role = parse_role(role_text);
  if (!role) config_error(where, "unknown role '" + role_text + "'");
  p.role = *role;
  p.unit = row.value("unit", std::string{});
  p.notes = row.value("notes", std::string{});
  if (row.contains("axis") && !row.at("axis").is_null()) p.axis = row.at("axis").get<int>();
  if (row.contains("repeat")) {
    const auto& rep = row.at("repeat");
    p.axes = get_field<std::vector<int>>(rep, "axes", where);
    if (rep.contains("tokens")) {
      p.tokens = rep.at("tokens").get<std::vector<std::string>>();
    } else {
      int offset = rep.value("token_offset", 0);
      for (int a : p.axes) p.tokens.push_back(std::to_string(a + offset));
    }
    if (p.tokens.size() != p.axes.size()) config_error(where, "repeat tokens and axes differ in length");
  }
  return p;
}

}  // namespace

std::vector<SignalSpec> expand_signal_pattern(const SignalPattern& pattern) {
  if (pattern.tokens.empty()) {
    return {SignalSpec{pattern.raw, pattern.canonical, pattern.role, pattern.unit, pattern.axis, pattern.notes}};
  }
  std::vector<SignalSpec> out;
  out.reserve(pattern.tokens.size());
  for (std::size_t i = 0; i < pattern.tokens.size(); ++i) {
    const std::string axis_text = std::to_string(pattern.axes[i]);
    out.push_back(SignalSpec{replace_all(pattern.raw, "{t}", pattern.tokens[i]),
                             replace_all(pattern.canonical, "{a}", axis_text), pattern.role, pattern.unit,
                             pattern.axes[i], pattern.notes});
  }
  return out;
}

AdapterSpec adapter_from_json(const json& doc) {
  AdapterSpec spec;
  spec.format_version = doc.value("format_version", 1);
  spec.source_id = get_field<std::string>(doc, "source_id", "adapter");
  const std::string where = "adapter '" + spec.source_id + "'";
  spec.embodiment = get_field<std::string>(doc, "embodiment", where);
  auto task_text = get_field<std::string>(doc, "task", where);
  auto task = parse_task(task_text);
  if (!task) config_error(where, "unknown task '" + task_text + "'");
  spec.task = *task;
  spec.native_rate_hz = get_field<double>(doc, "native_rate_hz", where);
  spec.absent_channels = doc.value("absent_channels", std::vector<std::string>{});
  if (!doc.contains("signals") || !doc.at("signals").is_array()) config_error(where, "'signals' must be an array");
  std::size_t row_index = 0;
  for (const auto& row : doc.at("signals")) {
    auto expanded = expand_signal_pattern(pattern_from_json(row, where + " signal row " + std::to_string(row_index++)));
    spec.signals.insert(spec.signals.end(), expanded.begin(), expanded.end());
  }
  return spec;
}

AdapterSpec load_adapter_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open adapter file " + path.string(), path.string());
  try {
    return adapter_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what(), path.string());
  }
}

json adapter_to_json(const AdapterSpec& spec) {
  json doc;
  doc["format_version"] = spec.format_version;
  doc["source_id"] = spec.source_id;
  doc["embodiment"] = spec.embodiment;
  doc["task"] = std::string(to_string(spec.task));
  doc["native_rate_hz"] = spec.native_rate_hz;
  doc["absent_channels"] = spec.absent_channels;
  json rows = json::array();
  for (const auto& s : spec.signals) {
    json row{{"raw", s.raw_name},
             {"canonical", s.canonical_name},
             {"role", std::string(to_string(s.role))},
             {"unit", s.unit}};
    if (s.axis) row["axis"] = *s.axis;
    if (!s.notes.empty()) row["notes"] = s.notes;
    rows.push_back(std::move(row));
  }
  doc["signals"] = std::move(rows);
  return doc;
}

std::vector<std::string> builtin_adapter_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, text] : detail::embedded_adapters()) ids.emplace_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

AdapterSpec builtin_adapter(std::string_view source_id) {
  for (const auto& [id, text] : detail::embedded_adapters()) {
    if (id == source_id) return adapter_from_json(json::parse(text));
  }
  throw Error(ErrorCode::UnknownAdapter, "no built-in adapter '" + std::string(source_id) + "'",
              std::string(source_id));
}

}  // namespace sefc
