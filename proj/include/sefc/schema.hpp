#pragma once

/**
 * S-E-F-C signal taxonomy: roles, adapter specifications, the Episode
 * container and role-based selection.
 *
 * Canonical names are lowercase snake case. Per-axis signals end in
 * `_<axis>` with 0-based axes, so the "stem" of `setpoint_pos_3` is
 * `setpoint_pos`.
 */

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace sefc {

class RawTable;

enum class SignalRole { Setpoint, Effort, Feedback, Context, Metadata, Auxiliary, RawLabel };

inline constexpr std::array<SignalRole, 7> kAllRoles = {
    SignalRole::Setpoint, SignalRole::Effort,    SignalRole::Feedback, SignalRole::Context,
    SignalRole::Metadata, SignalRole::Auxiliary, SignalRole::RawLabel};

std::string_view to_string(SignalRole role);
std::optional<SignalRole> parse_role(std::string_view text);

/// Setpoint, Effort, Feedback and Context feed models; the rest are carried only.
constexpr bool is_modeling_role(SignalRole role) {
  return role == SignalRole::Setpoint || role == SignalRole::Effort ||
         role == SignalRole::Feedback || role == SignalRole::Context;
}

enum class Task { PickAndPlace, Screwdriving, PegInHole, Machining };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view text);

struct SignalSpec {
  std::string raw_name;
  std::string canonical_name;
  SignalRole role = SignalRole::Context;
  std::string unit;
  std::optional<int> axis;
  std::string notes;
};

struct AdapterSpec {
  int format_version = 1;
  std::string source_id;
  std::string embodiment;
  Task task = Task::PickAndPlace;
  double native_rate_hz = 100.0;
  std::vector<SignalSpec> signals;
  std::vector<std::string> absent_channels;

  const SignalSpec* find_canonical(std::string_view canonical_name) const;
  const SignalSpec* find_raw(std::string_view raw_name) const;
};

struct ChannelDescriptor {
  std::string canonical_name;
  SignalRole role = SignalRole::Context;
  std::string unit;
  std::optional<int> axis;

  bool operator==(const ChannelDescriptor&) const = default;
};

ChannelDescriptor descriptor_of(const SignalSpec& spec);

/// Name with a trailing `_<digits>` removed; names without one are their own stem.
std::string_view name_stem(std::string_view canonical_name);

/// Uniformly sampled multichannel recording of one task execution.
struct Episode {
  std::string episode_id;
  std::string source_id;
  std::string embodiment;
  Task task = Task::PickAndPlace;
  double rate_hz = 100.0;
  std::vector<double> t;
  Eigen::MatrixXd channels;  // T x C
  std::vector<ChannelDescriptor> descriptors;
  std::vector<std::string> phase;
  std::optional<std::string> fault;
  bool healthy = true;

  std::size_t steps() const { return t.size(); }
  std::size_t channel_count() const { return descriptors.size(); }
  std::optional<std::size_t> find_channel(std::string_view canonical_name) const;
  /// Column index of `canonical_name`; throws MissingChannel when absent.
  std::size_t require_channel(std::string_view canonical_name) const;

  bool operator==(const Episode&) const;
};

/// Throws SchemaViolation on any broken Episode invariant.
void validate_episode(const Episode& ep, double spacing_tolerance_s = 1e-9);

/// Uniform grid t0 + i / rate_hz, i = 0..steps-1.
std::vector<double> uniform_time_grid(std::size_t steps, double rate_hz, double t0 = 0.0);

struct ValidationFinding {
  enum class Kind {
    DuplicateRawName,
    DuplicateCanonicalName,
    MalformedCanonicalName,
    MalformedAxisSuffix,
    MissingUnit,
    MissingRawName,
    AbsentChannelMapped,
    NonPositiveRate,
  };
  Kind kind;
  std::string subject;
  std::string message;
};

using ValidationReport = std::vector<ValidationFinding>;

/// Lists every problem in `spec`; an empty report means the spec is valid.
ValidationReport validate_adapter(const AdapterSpec& spec);

struct EpisodeMeta {
  std::string episode_id;
  std::optional<std::string> embodiment;  // defaults to the adapter's
  std::optional<Task> task;               // defaults to the adapter's
  std::optional<std::string> fault;
  double t0 = 0.0;
  /// Raw column carrying phase labels; rows are labelled `unknown` when absent.
  std::string phase_column;
  std::set<std::string> allow_missing;
};

/**
 * Maps raw columns to canonical channels in adapter order. Mapped columns
 * listed in `meta.allow_missing` that are absent from the table are skipped.
 * Text cells in non-physical roles are coded as integers in order of first
 * appearance; Setpoint/Effort/Feedback columns must be numeric.
 */
Episode apply_adapter(const RawTable& table, const AdapterSpec& spec, const EpisodeMeta& meta);

struct Selection {
  Eigen::MatrixXd values;  // T x k
  std::vector<ChannelDescriptor> descriptors;
  std::vector<std::size_t> indices;  // column indices into the episode
};

/// Channels with `role`. With stems given, keeps channels whose stem is listed
/// and orders them by (stem position, axis); otherwise keeps episode order.
Selection select_signals(const Episode& ep, SignalRole role,
                         std::span<const std::string> stems = {});

/// Column indices for an ordered list of canonical names; throws MissingChannel.
std::vector<std::size_t> require_channels(const Episode& ep,
                                          std::span<const std::string> canonical_names);

/// `stem_0 .. stem_{count-1}`.
std::vector<std::string> axis_names(std::string_view stem, int count);

}  // namespace sefc
