#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sefc/schema.hpp"

namespace sefc {

/// Default dropout tolerance: at most 0.1% of a channel's samples may be missing.
inline constexpr double kDefaultMaxMissingFraction = 0.001;

/**
 * Linear interpolation of every channel onto the uniform grid
 * t0 + k / target_hz covering [t0, t_end]. Phase labels follow the nearest
 * source sample at or before each new timestamp. The grid never extends past
 * t_end; t_end itself is a grid point whenever the duration is a whole
 * number of target periods.
 *
 * Errors: DegenerateEpisode (T < 2), InvalidConfig (target_hz <= 0).
 */
Episode resample(const Episode& ep, double target_hz);

/**
 * Fills NaN samples: interior runs by linear interpolation between the
 * nearest valid neighbours, leading/trailing runs with the nearest valid
 * value. Errors: ExcessiveMissing when any channel's missing fraction exceeds
 * `max_missing_fraction` (or the channel has no valid sample at all).
 */
Episode fill_gaps(const Episode& ep, double max_missing_fraction = kDefaultMaxMissingFraction);

/// Paths of the two files making up one canonical episode.
struct CanonicalPaths {
  std::filesystem::path data;     // <id>.csv
  std::filesystem::path sidecar;  // <id>.episode.json
};

CanonicalPaths canonical_paths(const std::filesystem::path& dir, const std::string& episode_id);

/// Writes `<dir>/<id>.csv` (t_s + channels, 17 significant digits) and `<dir>/<id>.episode.json`.
CanonicalPaths write_canonical(const Episode& ep, const std::filesystem::path& dir);

/// Reads and validates one canonical episode. Errors: Io, SchemaViolation.
Episode read_canonical(const CanonicalPaths& paths);
Episode read_canonical(const std::filesystem::path& dir, const std::string& episode_id);

/// Loads every `*.episode.json` sidecar in `dir`, sorted by episode id.
std::vector<Episode> read_canonical_dir(const std::filesystem::path& dir);

/// Run-length encoding of phase labels, in order.
std::vector<std::pair<std::string, std::size_t>> encode_phase_runs(const std::vector<std::string>& phase);
std::vector<std::string> decode_phase_runs(const std::vector<std::pair<std::string, std::size_t>>& runs);

/// 17-significant-digit text form used by every CSV the toolkit writes.
std::string format_real(double value);

struct EpisodePair {
  Episode real;
  Episode sim;
  std::string pair_key;
};

struct PairingResult {
  std::vector<EpisodePair> pairs;      // ordered by key
  std::vector<std::string> real_only;  // sorted keys
  std::vector<std::string> sim_only;   // sorted keys
};

using PairKeyFn = std::function<std::string(const Episode&)>;

/// Episode id with a leading `real_`/`sim_` and trailing `_real`/`_sim` removed.
std::string default_pair_key(const Episode& ep);

/**
 * One pair per key present in both sets. Errors: DuplicateKey when a key
 * repeats within one set (subject "real:<key>" or "sim:<key>").
 */
PairingResult pair_episodes(const std::vector<Episode>& real_set, const std::vector<Episode>& sim_set,
                            const PairKeyFn& key_fn = default_pair_key);

}  // namespace sefc
