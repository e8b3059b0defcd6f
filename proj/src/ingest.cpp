#include "sefc/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sefc/errors.hpp"

namespace sefc {

Episode resample(const Episode& ep, double target_hz) {
  const std::size_t steps = ep.steps();
  if (steps < 2) {
    throw Error(ErrorCode::DegenerateEpisode, "episode '" + ep.episode_id + "' has fewer than 2 samples",
                ep.episode_id);
  }
  if (!(target_hz > 0.0) || !std::isfinite(target_hz)) {
    throw Error(ErrorCode::InvalidConfig, "target rate must be positive", "target_hz");
  }
  const double t0 = ep.t.front();
  const double t_end = ep.t.back();
  const double duration = t_end - t0;
  const auto out_steps = static_cast<std::size_t>(std::floor(duration * target_hz + 1e-6)) + 1;

  Episode out;
  out.episode_id = ep.episode_id;
  out.source_id = ep.source_id;
  out.embodiment = ep.embodiment;
  out.task = ep.task;
  out.rate_hz = target_hz;
  out.descriptors = ep.descriptors;
  out.fault = ep.fault;
  out.healthy = ep.healthy;
  out.t = uniform_time_grid(out_steps, target_hz, t0);
  out.channels.resize(static_cast<Eigen::Index>(out_steps), ep.channels.cols());
  out.phase.resize(out_steps);

  const double src_rate = ep.rate_hz;
  for (std::size_t k = 0; k < out_steps; ++k) {
    const double t = std::min(out.t[k], t_end);
    const double pos = (t - t0) * src_rate;
    auto left = static_cast<std::size_t>(std::clamp(std::floor(pos), 0.0, static_cast<double>(steps - 2)));
    const double span = ep.t[left + 1] - ep.t[left];
    const double frac = std::clamp((t - ep.t[left]) / span, 0.0, 1.0);
    const auto row = static_cast<Eigen::Index>(k);
    const auto l = static_cast<Eigen::Index>(left);
    if (frac == 0.0) {
      out.channels.row(row) = ep.channels.row(l);
    } else if (frac == 1.0) {
      out.channels.row(row) = ep.channels.row(l + 1);
    } else {
      out.channels.row(row) = (1.0 - frac) * ep.channels.row(l) + frac * ep.channels.row(l + 1);
    }
    // Zero-order hold for categorical labels; the tolerance keeps coincident samples on their own label.
    auto hold = static_cast<std::size_t>(std::clamp(std::floor(pos + 1e-6), 0.0, static_cast<double>(steps - 1)));
    out.phase[k] = ep.phase[hold];
  }
  return out;
}

Episode fill_gaps(const Episode& ep, double max_missing_fraction) {
  Episode out = ep;
  const Eigen::Index steps = ep.channels.rows();
  for (Eigen::Index c = 0; c < ep.channels.cols(); ++c) {
    auto col = out.channels.col(c);
    Eigen::Index missing = 0;
    for (Eigen::Index r = 0; r < steps; ++r) missing += std::isnan(col(r)) ? 1 : 0;
    if (missing == 0) continue;
    const double fraction = static_cast<double>(missing) / static_cast<double>(steps);
    const std::string& name = ep.descriptors[static_cast<std::size_t>(c)].canonical_name;
    if (fraction > max_missing_fraction || missing == steps) {
      std::ostringstream msg;
      msg << "channel '" << name << "' is " << fraction * 100.0 << "% missing (limit "
          << max_missing_fraction * 100.0 << "%)";
      throw Error(ErrorCode::ExcessiveMissing, msg.str(), name);
    }
    Eigen::Index prev_valid = -1;
    for (Eigen::Index r = 0; r < steps; ++r) {
      if (std::isnan(col(r))) continue;
      if (prev_valid < 0) {
        for (Eigen::Index k = 0; k < r; ++k) col(k) = col(r);
      } else if (r - prev_valid > 1) {
        const double y0 = col(prev_valid);
        const double y1 = col(r);
        const double x0 = ep.t[static_cast<std::size_t>(prev_valid)];
        const double x1 = ep.t[static_cast<std::size_t>(r)];
        for (Eigen::Index k = prev_valid + 1; k < r; ++k) {
          const double w = (ep.t[static_cast<std::size_t>(k)] - x0) / (x1 - x0);
          col(k) = y0 + w * (y1 - y0);
        }
      }
      prev_valid = r;
    }
    for (Eigen::Index k = prev_valid + 1; k < steps; ++k) col(k) = col(prev_valid);
  }
  return out;
}

std::string default_pair_key(const Episode& ep) {
  std::string_view id = ep.episode_id;
  for (std::string_view prefix : {"real_", "sim_"}) {
    if (id.starts_with(prefix)) {
      id.remove_prefix(prefix.size());
      break;
    }
  }
  for (std::string_view suffix : {"_real", "_sim"}) {
    if (id.ends_with(suffix)) {
      id.remove_suffix(suffix.size());
      break;
    }
  }
  return std::string(id);
}

PairingResult pair_episodes(const std::vector<Episode>& real_set, const std::vector<Episode>& sim_set,
                            const PairKeyFn& key_fn) {
  auto index = [&](const std::vector<Episode>& set, const char* which) {
    std::map<std::string, const Episode*> out;
    for (const auto& ep : set) {
      auto key = key_fn(ep);
      if (!out.emplace(key, &ep).second) {
        throw Error(ErrorCode::DuplicateKey, std::string("key '") + key + "' appears twice in the " + which + " set",
                    std::string(which) + ":" + key);
      }
    }
    return out;
  };
  const auto real_by_key = index(real_set, "real");
  const auto sim_by_key = index(sim_set, "sim");

  PairingResult result;
  for (const auto& [key, real] : real_by_key) {
    auto it = sim_by_key.find(key);
    if (it == sim_by_key.end()) {
      result.real_only.push_back(key);
      continue;
    }
    if (real->task != it->second->task) {
      throw Error(ErrorCode::SchemaViolation, "pair '" + key + "' mixes tasks", key);
    }
    result.pairs.push_back({*real, *it->second, key});
  }
  for (const auto& [key, sim] : sim_by_key) {
    if (!real_by_key.contains(key)) result.sim_only.push_back(key);
  }
  return result;
}

}  // namespace sefc
