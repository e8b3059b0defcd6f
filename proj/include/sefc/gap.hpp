#pragma once

/**
 * Phase-aware sim-to-real gap metrics over paired episodes.
 *
 * Within every phase the two sides share, each side's samples are placed on
 * normalized time u = i/(n − 1) and the sim side is linearly interpolated
 * onto the real side's grid. Metrics pool all aligned samples.
 */

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sefc/ingest.hpp"
#include "sefc/schema.hpp"

namespace sefc {

struct AlignedPair {
  std::string pair_key;
  std::vector<std::string> phases;   // aligned, in real-side order
  std::vector<std::string> skipped;  // present on one side only
  Eigen::MatrixXd real;              // N x C_real, rows of the aligned phases
  Eigen::MatrixXd sim;               // N x C_sim, interpolated onto the real grid
  std::vector<ChannelDescriptor> real_channels;
  std::vector<ChannelDescriptor> sim_channels;

  Eigen::Index samples() const { return real.rows(); }
};

/// Errors: NoCommonPhases.
AlignedPair phase_align(const EpisodePair& pair);

enum class OrientationKind { Rotvec, Quaternion };

/// Canonical channel names one side contributes to each metric.
struct GapChannels {
  std::vector<std::string> joints;    // rad
  std::vector<std::string> tcp_pos;   // m, x y z
  OrientationKind orientation = OrientationKind::Rotvec;
  std::vector<std::string> orientation_channels;  // rx ry rz, or w x y z
  std::vector<std::string> effort;
};

/// `rtde` (UR lab recordings) and `isaac` (simulated UR5). Errors: UnknownAdapter.
GapChannels gap_preset(const std::string& name);

/// Rotation vector of a unit quaternion (w, x, y, z), taking the w ≥ 0 hemisphere.
Eigen::Vector3d quat_to_rotvec(double w, double x, double y, double z);

/**
 * Exact Wasserstein-1 between two empirical distributions via the quantile
 * integral ∫₀¹ |F_a⁻¹(u) − F_b⁻¹(u)| du. Breakpoints are compared as integers,
 * so the result is symmetric to the last bit. Errors: EmptyInput, NumericalInstability (NaN).
 */
double wasserstein1(std::vector<double> a, std::vector<double> b);

inline constexpr std::array<const char*, 5> kGapMetricNames{
    "joint_rmse_deg", "tcp_pos_rmse_mm", "ee_l2_rms_mm", "tcp_rotvec_rmse_mrad", "w1_effort_mean"};

struct GapMetrics {
  std::string pair_key;
  /// Indexed like kGapMetricNames; absent when the channels are missing on either side.
  std::array<std::optional<double>, 5> values;
  std::array<std::string, 5> absent_reason;
  /// Some rotvec component spans more than π on either side.
  bool rotvec_wrap_flag = false;
};

GapMetrics pair_metrics(const AlignedPair& aligned, const GapChannels& real, const GapChannels& sim);

struct GapStat {
  std::string metric;
  std::size_t n = 0;  // pairs with the metric present
  double mean = 0.0;
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
};

struct GapSummary {
  std::vector<GapStat> rows;  // one per metric, in kGapMetricNames order
  std::size_t n_pairs = 0;
};

/// Errors: EmptyInput.
GapSummary batch_summary(const std::vector<GapMetrics>& pairs);

/// `pair_key,metric,value`; absent metrics leave the value empty.
std::string gap_pairs_csv(const std::vector<GapMetrics>& pairs);
/// `metric,mean,median,p10,p90`.
std::string gap_summary_csv(const GapSummary& summary);
nlohmann::json gap_summary_json(const GapSummary& summary);

}  // namespace sefc
