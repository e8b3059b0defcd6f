#pragma once

/**
 * Domain-randomized pick-and-place episodes from a declared plant model.
 *
 * Plant: each joint tracks its setpoint as a critically damped second-order
 * system integrated with explicit Euler at sim_dt,
 *   q̈ = ω²(q_sp − q) − 2ω q̇ − (ω²/k)·g·(m_plant − m_ff)·cos q,
 * and reports effort = k·(q_sp − q) + g·m_ff·cos q. The last plant term is
 * zero whenever the controller's feedforward mass matches the carried mass.
 * TCP channels come from a planar 2-link surrogate over joints 0–1 with
 * height driven by joint 2. Friction and cube size are logged as context only.
 */

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sefc/schema.hpp"

namespace sefc {

inline constexpr int kJoints = 6;
inline constexpr int kPhaseCount = 10;
using JointVector = std::array<double, kJoints>;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct PlantModel {
  JointVector gravity{0.0, 8.0, 3.85, 0.9, 0.2, 0.05};  // g_i, Nm per kg
  JointVector k_track{150.0, 150.0, 80.0, 30.0, 30.0, 20.0};
  JointVector omega{18.0, 18.0, 20.0, 25.0, 25.0, 25.0};  // rad/s
  double v_max = 2.5;                                    // rad/s
  double a_max = 20.0;                                   // rad/s²
  double link1_m = 0.425;
  double link2_m = 0.392;
  double z_scale_m = 0.5;  // TCP z = z_scale · sin(q2)
  double gripper_closed_rad = 0.8;
  double gripper_v_max = 5.0;   // rad/s
  double gripper_a_max = 50.0;  // rad/s²
};

struct RandomizationConfig {
  Range mass_kg{0.10, 0.30};
  double mass_cap_kg = 0.80;
  Range friction{0.30, 0.50};
  double gripper_pad_friction = 1.2;
  Range kp_grip{5000.0, 12000.0};
  double sigma_base = 0.002;
  double sigma_pos_rad = 0.002;
  double sigma_vel_radps = 0.02;
  double sigma_effort = 0.1;
  double sigma_obj_xy_m = 0.002;
  double sigma_obj_z_m = 0.001;
  double spawn_box_x_m = 0.08;
  double spawn_box_y_m = 0.08;
  double sim_dt_s = 1.0 / 60.0;
  std::array<Range, 3> cube_dims_m{Range{0.04, 0.06}, Range{0.04, 0.06}, Range{0.04, 0.06}};
  PlantModel plant;
};

/// Throws InvalidConfig naming the first broken field.
void validate_config(const RandomizationConfig& config);

enum class FaultType {
  AdditionalAxisPayload,
  UnexpectedPayloadWeight,
  GripperReleaseMidMotion,
  GripperActivationFailure,
  InvalidGrippingPosition,
  CollisionFoamSpike,
  UnstablePlatform,
  PayloadWeightMisconfiguration,
};

inline constexpr std::array<FaultType, 8> kInjectableFaults = {
    FaultType::AdditionalAxisPayload,    FaultType::UnexpectedPayloadWeight,
    FaultType::GripperReleaseMidMotion,  FaultType::GripperActivationFailure,
    FaultType::InvalidGrippingPosition,  FaultType::CollisionFoamSpike,
    FaultType::UnstablePlatform,         FaultType::PayloadWeightMisconfiguration};

std::string_view to_string(FaultType type);
/// Errors: UnsupportedFault for catalog entries outside the injectable subset
/// and for unknown names.
FaultType parse_fault_type(std::string_view text);

struct FaultCatalogEntry {
  std::string_view id;
  std::string_view name;
  bool pick_and_place;
  bool screwing;
  bool peg_in_hole;
  bool injectable;
};

/// All 27 laboratory fault types.
const std::vector<FaultCatalogEntry>& fault_catalog();

/**
 * Magnitudes left at 0 (and an absent onset) take the per-type default:
 *   additional_axis_payload        1.5 kg on `joint` (default 2)
 *   unexpected_payload_weight      0.6 kg carried and configured
 *   gripper_release_mid_motion     onset mid-transfer
 *   gripper_activation_failure     -
 *   invalid_gripping_position      0.3 s attachment delay
 *   collision_foam_spike           peak 0.3 Nm, 0.2 s half-sine on joints 1–3, onset mid-transfer
 *   unstable_platform              0.005 rad at `frequency_hz` (default 3 Hz) on feedback positions
 *   payload_weight_misconfiguration 0.8 kg configured during carry
 */
struct FaultDirective {
  FaultType type = FaultType::AdditionalAxisPayload;
  double magnitude = 0.0;
  std::optional<std::size_t> onset_step;
  int joint = 2;
  double duration_s = 0.0;
  double frequency_hz = 0.0;
};

struct EpisodeParams {
  std::uint64_t seed = 0;
  std::string episode_id;
  std::size_t episode_index = 0;
  double mass_kg = 0.0;
  double friction = 0.0;
  double gripper_pad_friction = 0.0;
  double kp_grip = 0.0;
  std::array<double, 3> cube_dims_m{};
  std::array<double, 2> spawn_offset_m{};
  std::optional<FaultDirective> fault;
  RandomizationConfig config;
};

/// Deterministic in `seed`; the fault directive does not influence any draw.
EpisodeParams sample_params(std::uint64_t seed, const RandomizationConfig& config,
                            std::optional<FaultDirective> fault = std::nullopt);

struct PhaseSpec {
  std::string name;
  double duration_s = 0.0;
  JointVector target{};
  double gripper_target = 0.0;
  std::size_t steps = 0;
  std::size_t start = 0;
};

struct PhasePlan {
  std::vector<PhaseSpec> phases;  // exactly kPhaseCount
  Eigen::MatrixXd pos;            // T x 6
  Eigen::MatrixXd vel;
  Eigen::MatrixXd acc;
  Eigen::VectorXd gripper_pos;
  Eigen::VectorXd gripper_vel;
  Eigen::VectorXd gripper_acc;
  std::vector<std::string> phase_labels;
  JointVector start{};

  std::size_t steps() const { return phase_labels.size(); }
  /// Index into `phases`; throws InvalidConfig for unknown names.
  std::size_t phase_index(std::string_view name) const;
};

/// The fixed phase sequence, `approach` through `return`.
const std::array<std::string_view, kPhaseCount>& phase_names();

/// Nominal phase durations (s) and joint waypoints before spawn offset.
std::vector<PhaseSpec> nominal_phases();
JointVector home_pose();

/// Rest-to-rest discrete trapezoid: `steps` accelerations of +A, 0, −A so
/// that explicit-Euler integration moves exactly `displacement`.
struct TrapezoidProfile {
  std::vector<double> pos;  // relative to the start, length steps
  std::vector<double> vel;
  std::vector<double> acc;
  std::size_t ramp_steps = 0;
  double accel = 0.0;
};

/// Errors: InfeasibleProfile when no ramp length respects both caps.
TrapezoidProfile trapezoid_profile(double displacement, std::size_t steps, double dt, double v_max,
                                   double a_max);

std::array<double, 2> planar_fk(const PlantModel& plant, double q0, double q1);
/// Elbow branch follows the sign of `q1_hint`. Errors: InvalidConfig when unreachable.
std::array<double, 2> planar_ik(const PlantModel& plant, double x, double y, double q1_hint);

/// Waypoints with the pick side moved by spawn_offset through planar IK.
/// Errors: InfeasibleProfile.
PhasePlan plan_trajectory(const EpisodeParams& params);

/// Noiseless healthy episode. Errors: NumericalInstability.
Episode simulate_plant(const EpisodeParams& params, const PhasePlan& plan);

/**
 * Re-simulates `ep` under params.fault and labels it. Without a directive the
 * input is returned unchanged. Errors: UnsupportedFault, InvalidConfig for an
 * onset past the episode end.
 */
Episode inject_fault(const Episode& ep, const EpisodeParams& params);

/// Per-channel Gaussian noise; every channel draws from its own stream
/// seeded by (params.seed, column), so twins share draws.
Episode add_sensor_noise(const Episode& ep, const EpisodeParams& params);

/// sample → plan → simulate → fault → noise.
Episode generate_episode(const EpisodeParams& params);

struct GenerationConfig {
  std::size_t n_healthy = 0;
  std::map<std::string, std::size_t> fault_mix;  // fault id -> count
  std::uint64_t seed0 = 0;
  RandomizationConfig randomization;
  std::string id_prefix = "ep";
};

struct Corpus {
  std::vector<Episode> primaries;  // healthy first, then faults in fault-id order
  std::vector<Episode> twins;      // one per faulty primary, id "<primary>_twin"
};

/// Primary i uses seed seed0 + i; a twin reuses its primary's seed without the fault.
Corpus generate_corpus(const GenerationConfig& config);

GenerationConfig generation_config_from_json(const nlohmann::json& doc);
nlohmann::json generation_config_to_json(const GenerationConfig& config);
/// Errors: Io, InvalidConfig.
GenerationConfig load_generation_config(const std::filesystem::path& path);

/// Column layout of generated episodes: the Isaac adapter's canonical channels in adapter order.
const std::vector<ChannelDescriptor>& synth_descriptors();

}  // namespace sefc
