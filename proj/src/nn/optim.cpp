#include <cmath>
#include <numbers>

#include "sefc/errors.hpp"
#include "sefc/nn/train.hpp"

namespace sefc::nn {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "adamw"; }

std::string_view to_string(Schedule schedule) { return schedule == Schedule::Cosine ? "cosine" : "constant"; }

void validate(const TrainConfig& c) {
  auto fail = [](const char* field, const char* why) {
    throw Error(ErrorCode::InvalidConfig, std::string(field) + " " + why, field);
  };
  if (!(c.lr0 > 0.0) || !std::isfinite(c.lr0)) fail("lr0", "must be positive");
  if (c.weight_decay < 0.0) fail("weight_decay", "must be >= 0");
  if (c.batch_size == 0) fail("batch_size", "must be positive");
  if (c.max_epochs == 0) fail("max_epochs", "must be positive");
  if (c.patience > c.max_epochs) fail("patience", "must not exceed max_epochs");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("beta", "must lie in [0, 1)");
}

TrainConfig train_config_from_json(const json& doc, TrainConfig c) {
  try {
    if (doc.contains("optimizer")) {
      const auto name = doc.at("optimizer").get<std::string>();
      if (name == "adam") {
        c.optimizer = OptimizerKind::Adam;
      } else if (name == "adamw") {
        c.optimizer = OptimizerKind::AdamW;
      } else {
        throw Error(ErrorCode::InvalidConfig, "optimizer must be adam or adamw", "optimizer");
      }
    }
    if (doc.contains("schedule")) {
      const auto name = doc.at("schedule").get<std::string>();
      if (name == "cosine") {
        c.schedule = Schedule::Cosine;
      } else if (name == "constant") {
        c.schedule = Schedule::Constant;
      } else {
        throw Error(ErrorCode::InvalidConfig, "schedule must be cosine or constant", "schedule");
      }
    }
    c.lr0 = doc.value("lr0", c.lr0);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.max_epochs = doc.value("max_epochs", c.max_epochs);
    c.patience = doc.value("patience", c.patience);
    c.seed = doc.value("seed", c.seed);
    c.beta1 = doc.value("beta1", c.beta1);
    c.beta2 = doc.value("beta2", c.beta2);
    c.epsilon = doc.value("epsilon", c.epsilon);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"optimizer", std::string(to_string(c.optimizer))},
          {"lr0", c.lr0},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"schedule", std::string(to_string(c.schedule))},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

double learning_rate(const TrainConfig& c, std::size_t epoch) {
  if (c.schedule == Schedule::Constant) return c.lr0;
  const double e = static_cast<double>(std::min(epoch, c.max_epochs));
  return c.lr0 * (1.0 + std::cos(std::numbers::pi * e / static_cast<double>(c.max_epochs))) / 2.0;
}

AdamState make_adam_state(Index parameter_count) {
  return {VectorXd::Zero(parameter_count), VectorXd::Zero(parameter_count), 0};
}

void optimizer_step(AdamState& s, VectorXd& params, const VectorXd& grad, const TrainConfig& c, double lr) {
  if (grad.size() != params.size() || s.m.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient, state and parameter sizes differ");
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.t));
  if (c.optimizer == OptimizerKind::AdamW) {
    if (c.weight_decay != 0.0) params *= (1.0 - lr * c.weight_decay);
    s.m = c.beta1 * s.m + (1.0 - c.beta1) * grad;
    s.v = c.beta2 * s.v + (1.0 - c.beta2) * grad.cwiseAbs2();
  } else {
    const VectorXd g = c.weight_decay != 0.0 ? VectorXd(grad + c.weight_decay * params) : grad;
    s.m = c.beta1 * s.m + (1.0 - c.beta1) * g;
    s.v = c.beta2 * s.v + (1.0 - c.beta2) * g.cwiseAbs2();
  }
  params.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace sefc::nn
