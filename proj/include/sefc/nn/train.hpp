#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sefc/nn/model.hpp"

namespace sefc::nn {

enum class OptimizerKind { Adam, AdamW };
enum class Schedule { Cosine, Constant };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(Schedule schedule);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr0 = 5e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 4096;
  std::size_t max_epochs = 500;
  std::size_t patience = 30;
  Schedule schedule = Schedule::Cosine;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Throws InvalidConfig unless lr0 > 0, batch_size > 0, max_epochs > 0 and patience <= max_epochs.
void validate(const TrainConfig& config);

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig defaults = {});
nlohmann::json train_config_to_json(const TrainConfig& config);

/// Cosine: lr0·(1 + cos(π·epoch/max_epochs))/2; constant: lr0.
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct AdamState {
  VectorXd m;
  VectorXd v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(Index parameter_count);

/// One bias-corrected Adam step. Adam adds weight_decay·θ to the gradient;
/// AdamW first scales θ by (1 − lr·weight_decay).
void optimizer_step(AdamState& state, VectorXd& params, const VectorXd& grad, const TrainConfig& config, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

/**
 * Mini-batch training with a fresh shuffle per epoch drawn from config.seed.
 * Stops once the validation loss has not improved for `patience` epochs or at
 * max_epochs, then restores the best-validation parameters.
 * Errors: EmptyDataset, ShapeMismatch, NumericalInstability.
 */
TrainResult train(Model& model, const MatrixXd& x_train, const MatrixXd& y_train, const MatrixXd& x_val,
                  const MatrixXd& y_val, const TrainConfig& config);

}  // namespace sefc::nn
