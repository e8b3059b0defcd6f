#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "sefc/errors.hpp"
#include "sefc/synthgen.hpp"

namespace sefc {

namespace {

constexpr std::size_t kAbovePick = 1;
constexpr std::size_t kDescendPick = 2;
constexpr std::size_t kGrasp = 3;
constexpr std::size_t kLift = 4;
constexpr std::size_t kTransfer = 5;
constexpr std::size_t kRelease = 8;
constexpr double kStandardGravity = 9.81;
constexpr double kMaxAbsPosition = 8.0 * std::numbers::pi;
constexpr double kMaxAbsVelocity = 100.0;

/// Per-step terms a fault may change; a healthy run leaves the defaults.
struct Drive {
  std::vector<double> m_plant;  // carried mass
  std::vector<double> m_ff;     // controller feedforward mass
  std::vector<bool> attached;
  std::vector<double> gripper_target;
  JointVector static_payload{};  // kg on each joint, both plant and controller
};

std::size_t column(const std::vector<ChannelDescriptor>& d, std::string_view name) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].canonical_name == name) return i;
  }
  throw Error(ErrorCode::MissingChannel, "generator layout lacks " + std::string(name), std::string(name));
}

class Columns {
 public:
  explicit Columns(Eigen::MatrixXd& m) : m_(m), d_(synth_descriptors()) {}
  void set(std::string_view name, std::size_t row, double value) {
    auto it = cache_.find(std::string(name));
    std::size_t c = 0;
    if (it == cache_.end()) {
      c = column(d_, name);
      cache_.emplace(std::string(name), c);
    } else {
      c = it->second;
    }
    m_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = value;
  }
  void set_axis(std::string_view stem, int axis, std::size_t row, double value) {
    set(std::string(stem) + "_" + std::to_string(axis), row, value);
  }

 private:
  Eigen::MatrixXd& m_;
  const std::vector<ChannelDescriptor>& d_;
  std::unordered_map<std::string, std::size_t> cache_;
};

std::array<double, 4> yaw_quaternion(double yaw) {
  // Roll π, pitch 0, yaw ψ (tool pointing down): w, x, y, z.
  return {0.0, std::cos(yaw / 2.0), std::sin(yaw / 2.0), 0.0};
}

std::size_t steps_for(double duration_s, double dt) {
  return static_cast<std::size_t>(std::llround(duration_s / dt));
}

FaultDirective with_defaults(FaultDirective f, const PhasePlan& plan) {
  const auto& transfer = plan.phases[kTransfer];
  const std::size_t mid_transfer = transfer.start + transfer.steps / 2;
  switch (f.type) {
    case FaultType::AdditionalAxisPayload:
      if (f.magnitude == 0.0) f.magnitude = 1.5;
      break;
    case FaultType::UnexpectedPayloadWeight:
      if (f.magnitude == 0.0) f.magnitude = 0.6;
      break;
    case FaultType::GripperReleaseMidMotion:
      if (!f.onset_step) f.onset_step = mid_transfer;
      break;
    case FaultType::GripperActivationFailure:
      break;
    case FaultType::InvalidGrippingPosition:
      if (f.duration_s == 0.0) f.duration_s = 0.3;
      break;
    case FaultType::CollisionFoamSpike:
      if (f.magnitude == 0.0) f.magnitude = 0.3;
      if (f.duration_s == 0.0) f.duration_s = 0.2;
      if (!f.onset_step) f.onset_step = mid_transfer;
      break;
    case FaultType::UnstablePlatform:
      if (f.magnitude == 0.0) f.magnitude = 0.005;
      if (f.frequency_hz == 0.0) f.frequency_hz = 3.0;
      if (!f.onset_step) f.onset_step = 0;
      break;
    case FaultType::PayloadWeightMisconfiguration:
      if (f.magnitude == 0.0) f.magnitude = 0.8;
      break;
  }
  if (f.magnitude < 0.0 || f.duration_s < 0.0 || f.frequency_hz < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "fault magnitudes must be positive", std::string(to_string(f.type)));
  }
  if (f.onset_step && *f.onset_step >= plan.steps()) {
    throw Error(ErrorCode::InvalidConfig, "fault onset step lies past the episode end", std::string(to_string(f.type)));
  }
  if (f.joint < 0 || f.joint >= kJoints) {
    throw Error(ErrorCode::InvalidConfig, "fault joint out of range", std::string(to_string(f.type)));
  }
  return f;
}

Drive healthy_drive(const EpisodeParams& params, const PhasePlan& plan) {
  const std::size_t steps = plan.steps();
  Drive d;
  d.m_plant.assign(steps, 0.0);
  d.m_ff.assign(steps, 0.0);
  d.attached.assign(steps, false);
  d.gripper_target.resize(steps);
  const std::size_t carry_begin = plan.phases[kLift].start;
  const std::size_t carry_end = plan.phases[kRelease].start;
  for (std::size_t i = 0; i < steps; ++i) {
    d.gripper_target[i] = plan.gripper_pos(static_cast<Eigen::Index>(i));
    if (i >= carry_begin && i < carry_end) {
      d.m_plant[i] = params.mass_kg;
      d.m_ff[i] = params.mass_kg;
      d.attached[i] = true;
    }
  }
  return d;
}

void apply_to_drive(const FaultDirective& f, const PhasePlan& plan, double dt, Drive& d) {
  const std::size_t steps = plan.steps();
  const std::size_t carry_begin = plan.phases[kLift].start;
  const std::size_t carry_end = plan.phases[kRelease].start;
  switch (f.type) {
    case FaultType::AdditionalAxisPayload:
      d.static_payload[static_cast<std::size_t>(f.joint)] = f.magnitude;
      break;
    case FaultType::UnexpectedPayloadWeight:
      for (std::size_t i = carry_begin; i < carry_end; ++i) {
        d.m_plant[i] = f.magnitude;
        d.m_ff[i] = f.magnitude;
      }
      break;
    case FaultType::GripperReleaseMidMotion:
      for (std::size_t i = *f.onset_step; i < steps; ++i) {
        d.m_plant[i] = 0.0;
        d.attached[i] = false;
        d.gripper_target[i] = 0.0;
      }
      break;
    case FaultType::GripperActivationFailure:
      std::fill(d.m_plant.begin(), d.m_plant.end(), 0.0);
      std::fill(d.attached.begin(), d.attached.end(), false);
      std::fill(d.gripper_target.begin(), d.gripper_target.end(), 0.0);
      break;
    case FaultType::InvalidGrippingPosition: {
      const std::size_t delay = steps_for(f.duration_s, dt);
      const std::size_t grasp_begin = plan.phases[kGrasp].start;
      for (std::size_t i = grasp_begin; i < carry_end; ++i) {
        const std::size_t src = i >= grasp_begin + delay ? i - delay : grasp_begin - 1;
        d.gripper_target[i] = plan.gripper_pos(static_cast<Eigen::Index>(src));
      }
      for (std::size_t i = carry_begin; i < std::min(carry_begin + delay, carry_end); ++i) {
        d.m_plant[i] = 0.0;
        d.attached[i] = false;
      }
      break;
    }
    case FaultType::PayloadWeightMisconfiguration:
      for (std::size_t i = carry_begin; i < carry_end; ++i) d.m_ff[i] = f.magnitude;
      break;
    case FaultType::CollisionFoamSpike:
    case FaultType::UnstablePlatform:
      break;
  }
}

Episode run_plant(const EpisodeParams& params, const PhasePlan& plan, const std::optional<FaultDirective>& fault) {
  const auto& cfg = params.config;
  const auto& plant = cfg.plant;
  const double dt = cfg.sim_dt_s;
  const std::size_t steps = plan.steps();

  Drive drive = healthy_drive(params, plan);
  std::optional<FaultDirective> f;
  if (fault) {
    f = with_defaults(*fault, plan);
    apply_to_drive(*f, plan, dt, drive);
  }

  Episode ep;
  ep.episode_id = params.episode_id;
  ep.source_id = "synthgen";
  ep.embodiment = "ur5";
  ep.task = Task::PickAndPlace;
  ep.rate_hz = 1.0 / dt;
  ep.t = uniform_time_grid(steps, ep.rate_hz);
  ep.descriptors = synth_descriptors();
  ep.phase = plan.phase_labels;
  ep.channels = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(ep.descriptors.size()));
  Columns out(ep.channels);

  JointVector q = plan.start;
  JointVector qd{};
  double grip = 0.0;
  double grip_d = 0.0;
  const double grip_omega = std::sqrt(params.kp_grip) / 4.0;
  const double h = params.cube_dims_m[2];

  const auto pick_xy = planar_fk(plant, plan.phases[kGrasp].target[0], plan.phases[kGrasp].target[1]);
  std::array<double, 3> cube{pick_xy[0], pick_xy[1], h / 2.0};
  std::array<double, 3> prev_cube = cube;
  std::array<double, 3> prev_linvel{};

  for (std::size_t i = 0; i < steps; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    JointVector qdd{};
    for (int j = 0; j < kJoints; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double sp = plan.pos(r, j);
      const double w2 = plant.omega[ju] * plant.omega[ju];
      const double cosq = std::cos(q[ju]);
      const double load = plant.gravity[ju] * (drive.m_plant[i] - drive.m_ff[i]) * cosq;
      qdd[ju] = w2 * (sp - q[ju]) - 2.0 * plant.omega[ju] * qd[ju] - (w2 / plant.k_track[ju]) * load;
      double effort = plant.k_track[ju] * (sp - q[ju]) + plant.gravity[ju] * drive.m_ff[i] * cosq;
      if (drive.static_payload[ju] != 0.0) effort += drive.static_payload[ju] * plant.gravity[ju] * cosq;

      out.set_axis("setpoint_pos", j, i, sp);
      out.set_axis("setpoint_vel", j, i, plan.vel(r, j));
      out.set_axis("setpoint_acc", j, i, plan.acc(r, j));
      out.set_axis("feedback_pos", j, i, q[ju]);
      out.set_axis("feedback_vel", j, i, qd[ju]);
      out.set_axis("feedback_acc", j, i, qdd[ju]);
      out.set_axis("effort_motor_torque", j, i, effort);
      out.set_axis("ctx_pos_error", j, i, sp - q[ju]);
    }

    // TCP surrogate, commanded and measured.
    const auto sp_xy = planar_fk(plant, plan.pos(r, 0), plan.pos(r, 1));
    const double sp_z = plant.z_scale_m * std::sin(plan.pos(r, 2));
    const auto sp_quat = yaw_quaternion(plan.pos(r, 0) + plan.pos(r, 1) + plan.pos(r, 5));
    const auto xy = planar_fk(plant, q[0], q[1]);
    const double z = plant.z_scale_m * std::sin(q[2]);
    const double yaw = q[0] + q[1] + q[5];
    const auto quat = yaw_quaternion(yaw);
    const double s0 = std::sin(q[0]);
    const double c0 = std::cos(q[0]);
    const double s01 = std::sin(q[0] + q[1]);
    const double c01 = std::cos(q[0] + q[1]);
    const std::array<double, 3> linvel{-plant.link1_m * s0 * qd[0] - plant.link2_m * s01 * (qd[0] + qd[1]),
                                       plant.link1_m * c0 * qd[0] + plant.link2_m * c01 * (qd[0] + qd[1]),
                                       plant.z_scale_m * std::cos(q[2]) * qd[2]};
    const double yaw_rate = qd[0] + qd[1] + qd[5];
    const double yaw_acc = qdd[0] + qdd[1] + qdd[5];
    const std::array<double, 3> ee{xy[0], xy[1], z};
    for (int a = 0; a < 3; ++a) {
      const auto au = static_cast<std::size_t>(a);
      out.set_axis("setpoint_pos_cartesian", a, i, a == 0 ? sp_xy[0] : a == 1 ? sp_xy[1] : sp_z);
      out.set_axis("feedback_pos_cartesian", a, i, ee[au]);
      out.set_axis("feedback_euler_cartesian", a, i, a == 0 ? std::numbers::pi : a == 1 ? 0.0 : yaw);
      out.set_axis("feedback_vel_cartesian", a, i, linvel[au]);
      out.set_axis("feedback_acc_cartesian", a, i, i == 0 ? 0.0 : (linvel[au] - prev_linvel[au]) / dt);
    }
    out.set_axis("feedback_vel_cartesian", 3, i, 0.0);
    out.set_axis("feedback_vel_cartesian", 4, i, 0.0);
    out.set_axis("feedback_vel_cartesian", 5, i, yaw_rate);
    out.set_axis("feedback_acc_cartesian", 3, i, 0.0);
    out.set_axis("feedback_acc_cartesian", 4, i, 0.0);
    out.set_axis("feedback_acc_cartesian", 5, i, yaw_acc);
    for (int a = 0; a < 4; ++a) {
      out.set_axis("setpoint_quat_cartesian", a, i, sp_quat[static_cast<std::size_t>(a)]);
      out.set_axis("feedback_quat_cartesian", a, i, quat[static_cast<std::size_t>(a)]);
    }
    prev_linvel = linvel;

    // Gripper and object.
    const double grip_dd = grip_omega * grip_omega * (drive.gripper_target[i] - grip) - 2.0 * grip_omega * grip_d;
    out.set("setpoint_gripper_pos", i, plan.gripper_pos(r));
    out.set("feedback_gripper_pos", i, grip);
    out.set("ctx_gripper_attached", i, drive.attached[i] ? 1.0 : 0.0);
    if (drive.attached[i]) {
      cube = {ee[0], ee[1], ee[2] - h / 2.0};
    } else {
      cube[2] = h / 2.0;
    }
    const double load_n = drive.attached[i] ? drive.m_plant[i] * kStandardGravity : 0.0;
    for (int a = 0; a < 3; ++a) {
      const auto au = static_cast<std::size_t>(a);
      out.set_axis("ctx_cube_pos", a, i, cube[au]);
      out.set_axis("ctx_cube_vel", a, i, i == 0 ? 0.0 : (cube[au] - prev_cube[au]) / dt);
      out.set_axis("ctx_cube_vel", a + 3, i, 0.0);
      out.set_axis("ctx_ee_cube_offset", a, i, cube[au] - ee[au]);
      out.set_axis("effort_contact_force", a, i, a == 2 ? load_n : 0.0);
      out.set_axis("effort_contact_torque", a, i, 0.0);
    }
    out.set("effort_contact_force_mag", i, load_n);
    out.set("effort_contact_torque_mag", i, 0.0);
    out.set_axis("ctx_cube_quat", 0, i, 1.0);
    for (int a = 1; a < 4; ++a) out.set_axis("ctx_cube_quat", a, i, 0.0);
    prev_cube = cube;

    std::size_t pidx = 0;
    while (pidx + 1 < plan.phases.size() && i >= plan.phases[pidx + 1].start) ++pidx;
    out.set("ctx_state_machine", i, static_cast<double>(pidx));
    out.set("ctx_phase", i, static_cast<double>(pidx));
    out.set("meta_episode", i, static_cast<double>(params.episode_index));
    out.set("meta_step", i, static_cast<double>(i));
    out.set("meta_time", i, ep.t[i]);
    out.set("ctx_cube_mass", i, params.mass_kg);
    out.set("ctx_cube_friction", i, params.friction);
    out.set("ctx_cube_width", i, params.cube_dims_m[0]);
    out.set("ctx_cube_depth", i, params.cube_dims_m[1]);
    out.set("ctx_cube_height", i, params.cube_dims_m[2]);

    for (int j = 0; j < kJoints; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      const double q_next = q[ju] + qd[ju] * dt;
      const double qd_next = qd[ju] + qdd[ju] * dt;
      if (!std::isfinite(q_next) || !std::isfinite(qd_next) || std::abs(q_next) > kMaxAbsPosition ||
          std::abs(qd_next) > kMaxAbsVelocity) {
        throw Error(ErrorCode::NumericalInstability,
                    "joint " + std::to_string(j) + " left the sanity bounds at step " + std::to_string(i),
                    "feedback_pos_" + std::to_string(j));
      }
      q[ju] = q_next;
      qd[ju] = qd_next;
    }
    const double grip_next = grip + grip_d * dt;
    grip_d += grip_dd * dt;
    grip = grip_next;
  }

  if (f && f->type == FaultType::CollisionFoamSpike) {
    const std::size_t width = std::max<std::size_t>(steps_for(f->duration_s, dt), 1);
    for (std::size_t k = 0; k < width && *f->onset_step + k < steps; ++k) {
      const double pulse = f->magnitude * std::sin(std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(width));
      for (int j = 1; j <= 3; ++j) {
        const auto c = static_cast<Eigen::Index>(column(ep.descriptors, "effort_motor_torque_" + std::to_string(j)));
        ep.channels(static_cast<Eigen::Index>(*f->onset_step + k), c) += pulse;
      }
    }
  }
  if (f && f->type == FaultType::UnstablePlatform) {
    for (int j = 0; j < kJoints; ++j) {
      const auto c = static_cast<Eigen::Index>(column(ep.descriptors, "feedback_pos_" + std::to_string(j)));
      for (std::size_t i = *f->onset_step; i < steps; ++i) {
        ep.channels(static_cast<Eigen::Index>(i), c) +=
            f->magnitude * std::sin(2.0 * std::numbers::pi * f->frequency_hz * (ep.t[i] - ep.t[*f->onset_step]));
      }
    }
  }
  if (f) {
    ep.fault = std::string(to_string(f->type));
    ep.healthy = false;
  }
  return ep;
}

}  // namespace

const std::array<std::string_view, kPhaseCount>& phase_names() {
  static const std::array<std::string_view, kPhaseCount> names = {
      "approach", "above_pick", "descend_pick", "grasp",   "lift",
      "transfer", "above_place", "descend_place", "release", "return"};
  return names;
}

JointVector home_pose() { return {0.0, 1.3, 0.5, -1.2, -1.57, 0.0}; }

std::vector<PhaseSpec> nominal_phases() {
  const JointVector approach{0.3, 1.25, 0.45, -1.1, -1.57, 0.15};
  const JointVector above_pick{0.6, 1.2, 0.4, -1.0, -1.57, 0.3};
  JointVector at_pick = above_pick;
  at_pick[2] = 0.1;
  const JointVector transfer{-0.5, 1.25, 0.45, -1.1, -1.57, -0.25};
  const JointVector above_place{-0.7, 1.2, 0.4, -1.0, -1.57, -0.35};
  JointVector at_place = above_place;
  at_place[2] = 0.1;
  const double closed = PlantModel{}.gripper_closed_rad;
  const auto& n = phase_names();
  return {
      {std::string(n[0]), 1.0, approach, 0.0},    {std::string(n[1]), 0.8, above_pick, 0.0},
      {std::string(n[2]), 0.6, at_pick, 0.0},     {std::string(n[3]), 0.4, at_pick, closed},
      {std::string(n[4]), 0.6, above_pick, closed}, {std::string(n[5]), 1.2, transfer, closed},
      {std::string(n[6]), 0.8, above_place, closed}, {std::string(n[7]), 0.6, at_place, closed},
      {std::string(n[8]), 0.4, at_place, 0.0},    {std::string(n[9]), 1.2, home_pose(), 0.0},
  };
}

std::size_t PhasePlan::phase_index(std::string_view name) const {
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (phases[i].name == name) return i;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown phase '" + std::string(name) + "'", std::string(name));
}

TrapezoidProfile trapezoid_profile(double displacement, std::size_t steps, double dt, double v_max, double a_max) {
  TrapezoidProfile p;
  p.pos.assign(steps, 0.0);
  p.vel.assign(steps, 0.0);
  p.acc.assign(steps, 0.0);
  if (displacement == 0.0) return p;
  auto infeasible = [&] {
    return Error(ErrorCode::InfeasibleProfile,
                 "cannot move " + std::to_string(displacement) + " rad in " + std::to_string(steps) +
                     " steps within the velocity/acceleration caps");
  };
  if (steps < 2) throw infeasible();
  for (std::size_t ramp = 1; 2 * ramp <= steps; ++ramp) {
    // Velocity before step i is A·dt·min(i, ramp, steps − i); S sums those multipliers.
    double s = 0.0;
    for (std::size_t i = 0; i < steps; ++i) s += static_cast<double>(std::min({i, ramp, steps - i}));
    const double accel = displacement / (dt * dt * s);
    if (std::abs(accel) > a_max * (1.0 + 1e-12)) continue;
    if (std::abs(accel) * dt * static_cast<double>(ramp) > v_max * (1.0 + 1e-12)) throw infeasible();
    p.ramp_steps = ramp;
    p.accel = accel;
    for (std::size_t i = 0; i < steps; ++i) {
      p.acc[i] = i < ramp ? accel : (i >= steps - ramp ? -accel : 0.0);
      if (i + 1 < steps) {
        p.vel[i + 1] = p.vel[i] + p.acc[i] * dt;
        p.pos[i + 1] = p.pos[i] + p.vel[i] * dt;
      }
    }
    return p;
  }
  throw infeasible();
}

std::array<double, 2> planar_fk(const PlantModel& plant, double q0, double q1) {
  return {plant.link1_m * std::cos(q0) + plant.link2_m * std::cos(q0 + q1),
          plant.link1_m * std::sin(q0) + plant.link2_m * std::sin(q0 + q1)};
}

std::array<double, 2> planar_ik(const PlantModel& plant, double x, double y, double q1_hint) {
  const double l1 = plant.link1_m;
  const double l2 = plant.link2_m;
  const double c1 = (x * x + y * y - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  if (c1 < -1.0 || c1 > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "target (" + std::to_string(x) + ", " + std::to_string(y) + ") is out of reach");
  }
  const double q1 = std::copysign(std::acos(c1), q1_hint);
  const double q0 = std::atan2(y, x) - std::atan2(l2 * std::sin(q1), l1 + l2 * std::cos(q1));
  return {q0, q1};
}

PhasePlan plan_trajectory(const EpisodeParams& params) {
  const auto& cfg = params.config;
  const auto& plant = cfg.plant;
  const double dt = cfg.sim_dt_s;
  PhasePlan plan;
  plan.phases = nominal_phases();
  plan.start = home_pose();

  // The cube spawns at the nominal pick point plus the offset; every pick-side waypoint follows it.
  const auto& nominal = plan.phases[kGrasp].target;
  const auto xy = planar_fk(plant, nominal[0], nominal[1]);
  const auto shifted = planar_ik(plant, xy[0] + params.spawn_offset_m[0], xy[1] + params.spawn_offset_m[1], nominal[1]);
  for (std::size_t p : {kAbovePick, kDescendPick, kGrasp, kLift}) {
    plan.phases[p].target[0] = shifted[0];
    plan.phases[p].target[1] = shifted[1];
  }
  for (auto& ph : plan.phases) ph.gripper_target = ph.gripper_target > 0.0 ? plant.gripper_closed_rad : 0.0;

  std::size_t total = 0;
  for (auto& ph : plan.phases) {
    ph.steps = steps_for(ph.duration_s, dt);
    if (ph.steps == 0) throw Error(ErrorCode::InfeasibleProfile, "phase '" + ph.name + "' is shorter than one step", ph.name);
    ph.start = total;
    total += ph.steps;
  }
  const auto rows = static_cast<Eigen::Index>(total);
  plan.pos.resize(rows, kJoints);
  plan.vel.resize(rows, kJoints);
  plan.acc.resize(rows, kJoints);
  plan.gripper_pos.resize(rows);
  plan.gripper_vel.resize(rows);
  plan.gripper_acc.resize(rows);
  plan.phase_labels.reserve(total);

  JointVector current = plan.start;
  double gripper = 0.0;
  for (const auto& ph : plan.phases) {
    for (int j = 0; j < kJoints; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      TrapezoidProfile prof;
      try {
        prof = trapezoid_profile(ph.target[ju] - current[ju], ph.steps, dt, plant.v_max, plant.a_max);
      } catch (const Error& e) {
        throw Error(e.code(), "phase '" + ph.name + "', joint " + std::to_string(j) + ": " + e.detail(), ph.name);
      }
      for (std::size_t i = 0; i < ph.steps; ++i) {
        const auto r = static_cast<Eigen::Index>(ph.start + i);
        plan.pos(r, j) = current[ju] + prof.pos[i];
        plan.vel(r, j) = prof.vel[i];
        plan.acc(r, j) = prof.acc[i];
      }
      current[ju] += prof.pos.back() + prof.vel.back() * dt;
    }
    TrapezoidProfile g = trapezoid_profile(ph.gripper_target - gripper, ph.steps, dt, plant.gripper_v_max, plant.gripper_a_max);
    for (std::size_t i = 0; i < ph.steps; ++i) {
      const auto r = static_cast<Eigen::Index>(ph.start + i);
      plan.gripper_pos(r) = gripper + g.pos[i];
      plan.gripper_vel(r) = g.vel[i];
      plan.gripper_acc(r) = g.acc[i];
      plan.phase_labels.push_back(ph.name);
    }
    gripper += g.pos.back() + g.vel.back() * dt;
  }
  return plan;
}

Episode simulate_plant(const EpisodeParams& params, const PhasePlan& plan) {
  validate_config(params.config);
  return run_plant(params, plan, std::nullopt);
}

Episode inject_fault(const Episode& ep, const EpisodeParams& params) {
  if (!params.fault) return ep;
  const PhasePlan plan = plan_trajectory(params);
  Episode out = run_plant(params, plan, params.fault);
  out.episode_id = ep.episode_id;
  return out;
}

Episode add_sensor_noise(const Episode& ep, const EpisodeParams& params) {
  const auto& cfg = params.config;
  Episode out = ep;
  const auto lo = static_cast<std::uint32_t>(params.seed & 0xffffffffu);
  const auto hi = static_cast<std::uint32_t>(params.seed >> 32);
  for (std::size_t c = 0; c < out.descriptors.size(); ++c) {
    const auto& name = out.descriptors[c].canonical_name;
    const auto stem = name_stem(name);
    double sigma = 0.0;
    if (stem == "feedback_pos") {
      sigma = cfg.sigma_pos_rad;
    } else if (stem == "feedback_vel") {
      sigma = cfg.sigma_vel_radps;
    } else if (stem == "effort_motor_torque") {
      sigma = cfg.sigma_effort;
    } else if (name == "ctx_cube_pos_0" || name == "ctx_cube_pos_1") {
      sigma = cfg.sigma_obj_xy_m;
    } else if (name == "ctx_cube_pos_2") {
      sigma = cfg.sigma_obj_z_m;
    } else if (name == "feedback_gripper_pos") {
      sigma = cfg.sigma_base;
    }
    if (sigma == 0.0) continue;
    std::seed_seq seq{lo, hi, static_cast<std::uint32_t>(c), 0x5EFCu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, sigma);
    auto col = out.channels.col(static_cast<Eigen::Index>(c));
    for (Eigen::Index r = 0; r < col.size(); ++r) col(r) += noise(rng);
  }
  return out;
}

}  // namespace sefc
