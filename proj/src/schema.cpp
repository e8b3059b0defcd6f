#include "sefc/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "sefc/errors.hpp"
#include "sefc/raw_table.hpp"

namespace sefc {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

bool is_snake_case(std::string_view name) {
  if (name.empty() || !std::islower(static_cast<unsigned char>(name.front()))) return false;
  if (name.back() == '_') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
           c == '_';
  });
}

}  // namespace

std::string_view to_string(SignalRole role) {
  switch (role) {
    case SignalRole::Setpoint: return "Setpoint";
    case SignalRole::Effort: return "Effort";
    case SignalRole::Feedback: return "Feedback";
    case SignalRole::Context: return "Context";
    case SignalRole::Metadata: return "Metadata";
    case SignalRole::Auxiliary: return "Auxiliary";
    case SignalRole::RawLabel: return "RawLabel";
  }
  return "Context";
}

std::optional<SignalRole> parse_role(std::string_view text) {
  for (SignalRole r : kAllRoles) {
    if (iequals(text, to_string(r))) return r;
  }
  return std::nullopt;
}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::PickAndPlace: return "pick_and_place";
    case Task::Screwdriving: return "screwdriving";
    case Task::PegInHole: return "peg_in_hole";
    case Task::Machining: return "machining";
  }
  return "pick_and_place";
}

std::optional<Task> parse_task(std::string_view text) {
  for (Task t : {Task::PickAndPlace, Task::Screwdriving, Task::PegInHole, Task::Machining}) {
    if (text == to_string(t)) return t;
  }
  return std::nullopt;
}

const SignalSpec* AdapterSpec::find_canonical(std::string_view canonical_name) const {
  auto it = std::find_if(signals.begin(), signals.end(),
                         [&](const SignalSpec& s) { return s.canonical_name == canonical_name; });
  return it == signals.end() ? nullptr : &*it;
}

const SignalSpec* AdapterSpec::find_raw(std::string_view raw_name) const {
  auto it = std::find_if(signals.begin(), signals.end(),
                         [&](const SignalSpec& s) { return s.raw_name == raw_name; });
  return it == signals.end() ? nullptr : &*it;
}

ChannelDescriptor descriptor_of(const SignalSpec& spec) {
  return {spec.canonical_name, spec.role, spec.unit, spec.axis};
}

std::string_view name_stem(std::string_view canonical_name) {
  auto pos = canonical_name.find_last_of('_');
  if (pos == std::string_view::npos || pos + 1 == canonical_name.size()) return canonical_name;
  auto suffix = canonical_name.substr(pos + 1);
  bool digits = std::all_of(suffix.begin(), suffix.end(),
                            [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  return digits ? canonical_name.substr(0, pos) : canonical_name;
}

std::optional<std::size_t> Episode::find_channel(std::string_view canonical_name) const {
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    if (descriptors[i].canonical_name == canonical_name) return i;
  }
  return std::nullopt;
}

std::size_t Episode::require_channel(std::string_view canonical_name) const {
  auto idx = find_channel(canonical_name);
  if (!idx) {
    throw Error(ErrorCode::MissingChannel,
                "episode '" + episode_id + "' has no channel '" + std::string(canonical_name) + "'",
                std::string(canonical_name));
  }
  return *idx;
}

bool Episode::operator==(const Episode& o) const {
  return episode_id == o.episode_id && source_id == o.source_id && embodiment == o.embodiment &&
         task == o.task && rate_hz == o.rate_hz && t == o.t && channels.rows() == o.channels.rows() &&
         channels.cols() == o.channels.cols() &&
         // NaN-aware bitwise comparison
         std::equal(channels.data(), channels.data() + channels.size(), o.channels.data(),
                    [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }) &&
         descriptors == o.descriptors && phase == o.phase && fault == o.fault && healthy == o.healthy;
}

void validate_episode(const Episode& ep, double spacing_tolerance_s) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::SchemaViolation, "episode '" + ep.episode_id + "': " + what, ep.episode_id);
  };
  const std::size_t steps = ep.t.size();
  if (ep.episode_id.empty()) fail("episode_id must not be empty");
  if (steps < 2) fail("needs at least 2 timesteps");
  if (ep.descriptors.empty()) fail("needs at least 1 channel");
  if (!(ep.rate_hz > 0.0) || !std::isfinite(ep.rate_hz)) fail("rate_hz must be positive");
  if (static_cast<std::size_t>(ep.channels.rows()) != steps) fail("channel row count differs from t");
  if (static_cast<std::size_t>(ep.channels.cols()) != ep.descriptors.size())
    fail("descriptor count differs from channel count");
  if (ep.phase.size() != steps) fail("phase label count differs from t");
  if (ep.healthy == ep.fault.has_value()) fail("healthy must be true exactly when fault is absent");
  const double dt = 1.0 / ep.rate_hz;
  for (std::size_t i = 0; i + 1 < steps; ++i) {
    double step = ep.t[i + 1] - ep.t[i];
    if (!(step > 0.0)) fail("timestamps must be strictly increasing");
    if (std::abs(step - dt) > spacing_tolerance_s) fail("timestamps are not uniformly spaced at 1/rate_hz");
  }
  std::unordered_set<std::string> seen;
  for (const auto& d : ep.descriptors) {
    if (!seen.insert(d.canonical_name).second) fail("duplicate channel '" + d.canonical_name + "'");
  }
}

std::vector<double> uniform_time_grid(std::size_t steps, double rate_hz, double t0) {
  std::vector<double> t(steps);
  for (std::size_t i = 0; i < steps; ++i) t[i] = t0 + static_cast<double>(i) / rate_hz;
  return t;
}

ValidationReport validate_adapter(const AdapterSpec& spec) {
  using Kind = ValidationFinding::Kind;
  ValidationReport report;
  if (!(spec.native_rate_hz > 0.0)) {
    report.push_back({Kind::NonPositiveRate, spec.source_id, "native_rate_hz must be positive"});
  }
  std::unordered_map<std::string, int> raw_count;
  std::unordered_map<std::string, int> canonical_count;
  for (const auto& s : spec.signals) {
    if (s.raw_name.empty()) {
      report.push_back({Kind::MissingRawName, s.canonical_name, "raw_name is empty"});
    } else if (++raw_count[s.raw_name] == 2) {
      report.push_back({Kind::DuplicateRawName, s.raw_name, "raw name mapped more than once"});
    }
    if (++canonical_count[s.canonical_name] == 2) {
      report.push_back({Kind::DuplicateCanonicalName, s.canonical_name, "canonical name used more than once"});
    }
    if (!is_snake_case(s.canonical_name)) {
      report.push_back({Kind::MalformedCanonicalName, s.canonical_name, "canonical name is not lowercase snake case"});
    }
    if (s.axis) {
      const std::string suffix = "_" + std::to_string(*s.axis);
      bool ok = *s.axis >= 0 && s.canonical_name.size() > suffix.size() &&
                s.canonical_name.ends_with(suffix);
      if (!ok) {
        report.push_back({Kind::MalformedAxisSuffix, s.canonical_name,
                          "per-axis signal must end in '" + suffix + "'"});
      }
    }
    if (s.unit.empty()) {
      report.push_back({Kind::MissingUnit, s.canonical_name, "unit is empty"});
    }
  }
  for (const auto& absent : spec.absent_channels) {
    if (canonical_count.contains(absent)) {
      report.push_back({Kind::AbsentChannelMapped, absent, "channel listed as absent is also mapped"});
    }
  }
  return report;
}

Episode apply_adapter(const RawTable& table, const AdapterSpec& spec, const EpisodeMeta& meta) {
  const std::size_t steps = table.rows();
  std::vector<std::pair<const SignalSpec*, const RawColumn*>> mapped;
  mapped.reserve(spec.signals.size());
  for (const auto& s : spec.signals) {
    const RawColumn* col = table.find(s.raw_name);
    if (!col) {
      if (meta.allow_missing.contains(s.raw_name)) continue;
      throw Error(ErrorCode::MissingRawColumn, "raw column '" + s.raw_name + "' is not in the table",
                  s.raw_name);
    }
    mapped.emplace_back(&s, col);
  }

  Episode ep;
  ep.episode_id = meta.episode_id;
  ep.source_id = spec.source_id;
  ep.embodiment = meta.embodiment.value_or(spec.embodiment);
  ep.task = meta.task.value_or(spec.task);
  ep.rate_hz = spec.native_rate_hz;
  ep.t = uniform_time_grid(steps, spec.native_rate_hz, meta.t0);
  ep.fault = meta.fault;
  ep.healthy = !meta.fault.has_value();
  ep.channels.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(mapped.size()));
  ep.descriptors.reserve(mapped.size());

  for (std::size_t c = 0; c < mapped.size(); ++c) {
    const auto& [s, col] = mapped[c];
    const bool physical = s->role == SignalRole::Setpoint || s->role == SignalRole::Effort ||
                          s->role == SignalRole::Feedback;
    std::map<std::string, double, std::less<>> codes;
    for (std::size_t r = 0; r < steps; ++r) {
      double v = col->values[r];
      if (col->state[r] == CellState::Text) {
        if (physical) {
          throw Error(ErrorCode::NonNumericColumn,
                      "column '" + s->raw_name + "' holds non-numeric value '" + col->text[r] +
                          "' at row " + std::to_string(r + 1),
                      s->raw_name);
        }
        auto [it, inserted] = codes.try_emplace(col->text[r], static_cast<double>(codes.size()));
        v = it->second;
      }
      ep.channels(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    ep.descriptors.push_back(descriptor_of(*s));
  }

  ep.phase.assign(steps, "unknown");
  if (!meta.phase_column.empty()) {
    if (const RawColumn* pc = table.find(meta.phase_column)) {
      for (std::size_t r = 0; r < steps; ++r) {
        if (pc->state[r] == CellState::Text) {
          ep.phase[r] = pc->text[r];
        } else if (pc->state[r] == CellState::Value) {
          double v = pc->values[r];
          ep.phase[r] = (v == std::floor(v)) ? std::to_string(static_cast<long long>(v)) : std::to_string(v);
        }
      }
    }
  }
  return ep;
}

Selection select_signals(const Episode& ep, SignalRole role, std::span<const std::string> stems) {
  struct Key {
    std::size_t group;
    int axis;
    std::size_t index;
  };
  std::vector<Key> keys;
  for (std::size_t i = 0; i < ep.descriptors.size(); ++i) {
    const auto& d = ep.descriptors[i];
    if (d.role != role) continue;
    if (stems.empty()) {
      keys.push_back({0, 0, i});
      continue;
    }
    auto stem = name_stem(d.canonical_name);
    auto it = std::find(stems.begin(), stems.end(), stem);
    if (it == stems.end()) continue;
    keys.push_back({static_cast<std::size_t>(it - stems.begin()), d.axis.value_or(-1), i});
  }
  std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.axis != b.axis) return a.axis < b.axis;
    return a.index < b.index;
  });

  Selection sel;
  sel.values.resize(ep.channels.rows(), static_cast<Eigen::Index>(keys.size()));
  for (std::size_t k = 0; k < keys.size(); ++k) {
    sel.values.col(static_cast<Eigen::Index>(k)) = ep.channels.col(static_cast<Eigen::Index>(keys[k].index));
    sel.descriptors.push_back(ep.descriptors[keys[k].index]);
    sel.indices.push_back(keys[k].index);
  }
  return sel;
}

std::vector<std::size_t> require_channels(const Episode& ep, std::span<const std::string> canonical_names) {
  std::vector<std::size_t> out;
  out.reserve(canonical_names.size());
  for (const auto& name : canonical_names) out.push_back(ep.require_channel(name));
  return out;
}

std::vector<std::string> axis_names(std::string_view stem, int count) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(std::string(stem) + "_" + std::to_string(i));
  return out;
}

}  // namespace sefc
