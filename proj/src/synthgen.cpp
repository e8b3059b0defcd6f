#include "sefc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "sefc/adapters.hpp"
#include "sefc/errors.hpp"

namespace sefc {

namespace {

using nlohmann::json;

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, Range r) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

void check_range(const Range& r, const char* field) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw Error(ErrorCode::InvalidConfig, std::string(field) + " must satisfy lo <= hi", field);
  }
}

void check_nonneg(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidConfig, std::string(field) + " must be >= 0", field);
}

Range range_from(const json& j, Range fallback) {
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  if (j.is_object()) return {j.value("lo", fallback.lo), j.value("hi", fallback.hi)};
  throw Error(ErrorCode::InvalidConfig, "range must be [lo, hi] or {lo, hi}");
}

json range_to(Range r) { return json::array({r.lo, r.hi}); }

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_range_if(const json& obj, const char* key, Range& out) {
  if (obj.contains(key)) out = range_from(obj.at(key), out);
}

void read_joints_if(const json& obj, const char* key, JointVector& out) {
  if (!obj.contains(key)) return;
  const auto& arr = obj.at(key);
  if (!arr.is_array() || arr.size() != kJoints) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + " needs " + std::to_string(kJoints) + " values", key);
  }
  for (int i = 0; i < kJoints; ++i) out[static_cast<std::size_t>(i)] = arr[static_cast<std::size_t>(i)].get<double>();
}

RandomizationConfig randomization_from_json(const json& j) {
  RandomizationConfig c;
  read_range_if(j, "mass_kg", c.mass_kg);
  read_if(j, "mass_cap_kg", c.mass_cap_kg);
  read_range_if(j, "friction", c.friction);
  read_if(j, "gripper_pad_friction", c.gripper_pad_friction);
  read_range_if(j, "kp_grip", c.kp_grip);
  read_if(j, "sigma_base", c.sigma_base);
  read_if(j, "sigma_pos_rad", c.sigma_pos_rad);
  read_if(j, "sigma_vel_radps", c.sigma_vel_radps);
  read_if(j, "sigma_effort", c.sigma_effort);
  read_if(j, "sigma_obj_xy_m", c.sigma_obj_xy_m);
  read_if(j, "sigma_obj_z_m", c.sigma_obj_z_m);
  if (j.contains("spawn_box_m")) {
    const auto& box = j.at("spawn_box_m");
    c.spawn_box_x_m = box.at(0).get<double>();
    c.spawn_box_y_m = box.at(1).get<double>();
  }
  read_if(j, "sim_dt_s", c.sim_dt_s);
  if (j.contains("cube_dims_m")) {
    const auto& dims = j.at("cube_dims_m");
    if (!dims.is_array() || dims.size() != 3) throw Error(ErrorCode::InvalidConfig, "cube_dims_m needs 3 ranges", "cube_dims_m");
    for (std::size_t i = 0; i < 3; ++i) c.cube_dims_m[i] = range_from(dims[i], c.cube_dims_m[i]);
  }
  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    read_joints_if(p, "gravity", c.plant.gravity);
    read_joints_if(p, "k_track", c.plant.k_track);
    read_joints_if(p, "omega", c.plant.omega);
    read_if(p, "v_max", c.plant.v_max);
    read_if(p, "a_max", c.plant.a_max);
  }
  return c;
}

json randomization_to_json(const RandomizationConfig& c) {
  json dims = json::array();
  for (const auto& r : c.cube_dims_m) dims.push_back(range_to(r));
  return {{"mass_kg", range_to(c.mass_kg)},
          {"mass_cap_kg", c.mass_cap_kg},
          {"friction", range_to(c.friction)},
          {"gripper_pad_friction", c.gripper_pad_friction},
          {"kp_grip", range_to(c.kp_grip)},
          {"sigma_base", c.sigma_base},
          {"sigma_pos_rad", c.sigma_pos_rad},
          {"sigma_vel_radps", c.sigma_vel_radps},
          {"sigma_effort", c.sigma_effort},
          {"sigma_obj_xy_m", c.sigma_obj_xy_m},
          {"sigma_obj_z_m", c.sigma_obj_z_m},
          {"spawn_box_m", json::array({c.spawn_box_x_m, c.spawn_box_y_m})},
          {"sim_dt_s", c.sim_dt_s},
          {"cube_dims_m", dims},
          {"plant",
           {{"gravity", c.plant.gravity},
            {"k_track", c.plant.k_track},
            {"omega", c.plant.omega},
            {"v_max", c.plant.v_max},
            {"a_max", c.plant.a_max}}}};
}

}  // namespace

void validate_config(const RandomizationConfig& c) {
  check_range(c.mass_kg, "mass_kg");
  check_range(c.friction, "friction");
  check_range(c.kp_grip, "kp_grip");
  for (const auto& r : c.cube_dims_m) check_range(r, "cube_dims_m");
  if (c.mass_kg.lo < 0.0) throw Error(ErrorCode::InvalidConfig, "mass_kg must be >= 0", "mass_kg");
  if (c.mass_kg.hi > c.mass_cap_kg) throw Error(ErrorCode::InvalidConfig, "mass_kg exceeds mass_cap_kg", "mass_kg");
  if (!(c.kp_grip.lo > 0.0)) throw Error(ErrorCode::InvalidConfig, "kp_grip must be positive", "kp_grip");
  check_nonneg(c.sigma_base, "sigma_base");
  check_nonneg(c.sigma_pos_rad, "sigma_pos_rad");
  check_nonneg(c.sigma_vel_radps, "sigma_vel_radps");
  check_nonneg(c.sigma_effort, "sigma_effort");
  check_nonneg(c.sigma_obj_xy_m, "sigma_obj_xy_m");
  check_nonneg(c.sigma_obj_z_m, "sigma_obj_z_m");
  check_nonneg(c.spawn_box_x_m, "spawn_box_m");
  check_nonneg(c.spawn_box_y_m, "spawn_box_m");
  if (!(c.sim_dt_s > 0.0) || !std::isfinite(c.sim_dt_s)) {
    throw Error(ErrorCode::InvalidConfig, "sim_dt_s must be positive", "sim_dt_s");
  }
  for (int i = 0; i < kJoints; ++i) {
    const auto j = static_cast<std::size_t>(i);
    if (!(c.plant.k_track[j] > 0.0)) throw Error(ErrorCode::InvalidConfig, "k_track must be positive", "plant.k_track");
    // Explicit Euler keeps the repeated eigenvalue 1 − ω·dt inside (0, 1) only for ω·dt < 1.
    if (!(c.plant.omega[j] > 0.0) || c.plant.omega[j] * c.sim_dt_s >= 1.0) {
      throw Error(ErrorCode::InvalidConfig, "omega must satisfy 0 < omega * sim_dt_s < 1", "plant.omega");
    }
  }
  if (std::sqrt(c.kp_grip.hi) / 4.0 * c.sim_dt_s >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "kp_grip too stiff for sim_dt_s", "kp_grip");
  }
  if (!(c.plant.v_max > 0.0) || !(c.plant.a_max > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "velocity and acceleration caps must be positive", "plant");
  }
}

std::string_view to_string(FaultType type) {
  switch (type) {
    case FaultType::AdditionalAxisPayload: return "additional_axis_payload";
    case FaultType::UnexpectedPayloadWeight: return "unexpected_payload_weight";
    case FaultType::GripperReleaseMidMotion: return "gripper_release_mid_motion";
    case FaultType::GripperActivationFailure: return "gripper_activation_failure";
    case FaultType::InvalidGrippingPosition: return "invalid_gripping_position";
    case FaultType::CollisionFoamSpike: return "collision_foam_spike";
    case FaultType::UnstablePlatform: return "unstable_platform";
    case FaultType::PayloadWeightMisconfiguration: return "payload_weight_misconfiguration";
  }
  return "unknown";
}

FaultType parse_fault_type(std::string_view text) {
  for (auto type : kInjectableFaults) {
    if (to_string(type) == text) return type;
  }
  for (const auto& entry : fault_catalog()) {
    if (entry.id == text) {
      throw Error(ErrorCode::UnsupportedFault,
                  "fault '" + std::string(text) + "' has no signal-level model in the generator", std::string(text));
    }
  }
  throw Error(ErrorCode::UnsupportedFault, "unknown fault '" + std::string(text) + "'", std::string(text));
}

const std::vector<FaultCatalogEntry>& fault_catalog() {
  static const std::vector<FaultCatalogEntry> catalog = {
      {"damaged_screw_thread", "Damaged screw thread", false, true, false, false},
      {"missing_screw", "Missing screw", false, true, false, false},
      {"damaged_plate_thread", "Damaged plate thread", false, true, false, false},
      {"loosening_phase", "Loosening phase", false, true, false, false},
      {"gripper_activation_failure", "Gripper activation failure", true, false, false, true},
      {"gripper_release_mid_motion", "Gripper release during motion", true, false, false, true},
      {"additional_axis_payload", "Additional axis payload", true, true, false, true},
      {"collision_foam_spike", "Collision with foam object", true, true, true, true},
      {"unexpected_payload_weight", "Unexpected payload weight", true, false, false, true},
      {"invalid_gripping_position", "Invalid gripping position", true, false, false, true},
      {"unstable_platform", "Unstable mounting platform", true, false, false, true},
      {"joint_position_limit_violation", "Joint position limit violation", true, false, false, false},
      {"tcp_frame_misconfiguration", "TCP frame misconfiguration", true, true, true, false},
      {"payload_weight_misconfiguration", "Payload weight misconfiguration", true, true, false, true},
      {"external_arm_disturbance", "External arm disturbance", true, true, true, false},
      {"mild_payload_cog_misconfiguration", "Mild payload CoG misconfig.", true, true, true, false},
      {"collision_hanging_cable", "Collision with hanging cable", true, true, true, false},
      {"collision_cardboard", "Collision with cardboard", true, true, true, false},
      {"collision_rigid_object", "Collision with rigid object", true, true, true, false},
      {"peg_insertion_misalignment", "Peg insertion misalignment", false, false, true, false},
      {"hole_obstruction", "Hole obstruction", false, false, true, false},
      {"incorrect_insertion_depth", "Incorrect insertion depth", false, false, true, false},
      {"peg_surface_contamination", "Peg surface contamination", false, false, true, false},
      {"fixture_displacement", "Fixture displacement", false, false, true, false},
      {"self_collision", "Self-collision", true, false, false, false},
      {"missing_box", "Missing box", true, false, false, false},
      {"missing_peg", "Missing peg", false, false, true, false},
  };
  return catalog;
}

EpisodeParams sample_params(std::uint64_t seed, const RandomizationConfig& config, std::optional<FaultDirective> fault) {
  validate_config(config);
  std::mt19937_64 rng(seed);
  EpisodeParams p;
  p.seed = seed;
  p.config = config;
  p.fault = std::move(fault);
  p.mass_kg = draw(rng, config.mass_kg);
  p.friction = draw(rng, config.friction);
  p.gripper_pad_friction = config.gripper_pad_friction;
  p.kp_grip = draw(rng, config.kp_grip);
  for (std::size_t i = 0; i < 3; ++i) p.cube_dims_m[i] = draw(rng, config.cube_dims_m[i]);
  p.spawn_offset_m[0] = config.spawn_box_x_m * (uniform01(rng) - 0.5);
  p.spawn_offset_m[1] = config.spawn_box_y_m * (uniform01(rng) - 0.5);
  p.episode_id = "seed_" + std::to_string(seed);
  return p;
}

Episode generate_episode(const EpisodeParams& params) {
  const PhasePlan plan = plan_trajectory(params);
  Episode ep = simulate_plant(params, plan);
  ep = inject_fault(ep, params);
  return add_sensor_noise(ep, params);
}

Corpus generate_corpus(const GenerationConfig& config) {
  validate_config(config.randomization);
  std::vector<std::pair<std::optional<FaultDirective>, std::string>> jobs;
  for (std::size_t i = 0; i < config.n_healthy; ++i) jobs.emplace_back(std::nullopt, "");
  for (const auto& [name, count] : config.fault_mix) {
    FaultDirective d;
    d.type = parse_fault_type(name);
    for (std::size_t i = 0; i < count; ++i) jobs.emplace_back(d, name);
  }

  Corpus corpus;
  const int width = 5;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    std::string index = std::to_string(i);
    if (index.size() < width) index.insert(0, width - index.size(), '0');
    EpisodeParams params = sample_params(config.seed0 + i, config.randomization, jobs[i].first);
    params.episode_index = i;
    params.episode_id = config.id_prefix + "_" + index;
    corpus.primaries.push_back(generate_episode(params));
    if (params.fault) {
      EpisodeParams twin = params;
      twin.fault.reset();
      twin.episode_id = params.episode_id + "_twin";
      corpus.twins.push_back(generate_episode(twin));
    }
  }
  return corpus;
}

GenerationConfig generation_config_from_json(const json& doc) {
  try {
    GenerationConfig g;
    read_if(doc, "n_healthy", g.n_healthy);
    read_if(doc, "seed0", g.seed0);
    read_if(doc, "id_prefix", g.id_prefix);
    if (doc.contains("fault_mix")) {
      for (const auto& [name, count] : doc.at("fault_mix").items()) {
        parse_fault_type(name);
        g.fault_mix[name] = count.get<std::size_t>();
      }
    }
    if (doc.contains("randomization")) g.randomization = randomization_from_json(doc.at("randomization"));
    validate_config(g.randomization);
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generation config: ") + e.what());
  }
}

json generation_config_to_json(const GenerationConfig& g) {
  json mix = json::object();
  for (const auto& [name, count] : g.fault_mix) mix[name] = count;
  return {{"n_healthy", g.n_healthy},
          {"seed0", g.seed0},
          {"id_prefix", g.id_prefix},
          {"fault_mix", mix},
          {"randomization", randomization_to_json(g.randomization)}};
}

GenerationConfig load_generation_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string(), path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.filename().string() + ": " + e.what(), path.string());
  }
  return generation_config_from_json(doc);
}

const std::vector<ChannelDescriptor>& synth_descriptors() {
  static const std::vector<ChannelDescriptor> descriptors = [] {
    std::vector<ChannelDescriptor> out;
    for (const auto& s : builtin_adapter("isaac_ur5").signals) out.push_back(descriptor_of(s));
    return out;
  }();
  return descriptors;
}

}  // namespace sefc
