#pragma once

/**
 * Setpoint → effort anomaly scoring. A regressor trained on healthy episodes
 * predicts effort from commanded motion; an episode's score is its mean
 * absolute effort residual in standardized units.
 */

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sefc/nn/model.hpp"
#include "sefc/nn/train.hpp"
#include "sefc/schema.hpp"
#include "sefc/stats.hpp"

namespace sefc {

/// setpoint_pos_0..5, setpoint_vel_0..5, setpoint_acc_0..5.
std::vector<std::string> anomaly_input_channels();
/// effort_motor_torque_0..5.
std::vector<std::string> anomaly_output_channels();

struct RegressionSet {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

/// Timesteps pooled across episodes (every `stride`-th row). Errors: MissingChannel.
RegressionSet build_regression_set(const std::vector<Episode>& episodes, const std::vector<std::string>& inputs,
                                   const std::vector<std::string>& outputs, std::size_t stride = 1);

/// Per-column affine map to zero mean, unit standard deviation. Constant
/// columns keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& data);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& doc);
};

struct AnomalyModel {
  std::unique_ptr<nn::Model> net;
  Standardizer x_scaler;
  Standardizer y_scaler;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct AnomalyTrainOptions {
  std::vector<Eigen::Index> widths{18, 512, 256, 128, 6};
  nn::TrainConfig train;
  double val_fraction = 0.2;  // of episodes, held out for early stopping
  std::size_t stride = 1;
  std::uint64_t init_seed = 0;
};

struct AnomalyTraining {
  AnomalyModel model;
  nn::TrainResult result;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

/**
 * Healthy-only training; scalers are fitted on the training split.
 * Errors: HealthyOnlyViolation (any faulty episode), EmptyDataset (fewer
 * than 2 episodes), MissingChannel.
 */
AnomalyTraining train_anomaly_model(const std::vector<Episode>& healthy, const AnomalyTrainOptions& options);

void save_anomaly_model(const std::filesystem::path& stem, const AnomalyModel& model, const nlohmann::json& extra = {});
AnomalyModel load_anomaly_model(const std::filesystem::path& stem);

struct ScoredEpisode {
  std::string episode_id;
  std::string label;  // "healthy" or the fault type
  double score = 0.0;

  bool anomalous() const { return label != "healthy"; }
};

/// Errors: MissingChannel.
ScoredEpisode score_episode(const AnomalyModel& model, const Episode& ep);

/// Mann–Whitney form with mid-ranks: P(anomalous > healthy) + ½·P(tie).
/// Errors: DegenerateLabels unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<bool>& anomalous);
double auroc(const std::vector<ScoredEpisode>& scored);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
};

/// Percentile bootstrap of the pooled AUROC, resampling each label stratum
/// with replacement. Errors: DegenerateLabels.
ConfidenceInterval bootstrap_ci(const std::vector<ScoredEpisode>& scored, std::size_t n_resamples = 1000,
                                double level = 0.95, std::uint64_t seed = 0);

struct CategoryRow {
  std::string category;
  std::size_t n = 0;
  std::optional<double> auroc;  // absent when the category has no episodes
};

struct AnomalyReport {
  std::vector<CategoryRow> rows;
  std::size_t n_healthy = 0;
  double mean_auroc = 0.0;    // unweighted over present categories
  double pooled_auroc = 0.0;  // all anomalies against all healthy
  ConfidenceInterval mean_ci;
};

/// One row per requested category, each scored against the shared healthy
/// pool. The CI bootstraps the category mean with every label resampled
/// separately. Errors: DegenerateLabels when no healthy or no anomalous episode exists.
AnomalyReport per_category_report(const std::vector<ScoredEpisode>& scored, const std::vector<std::string>& categories,
                                  std::size_t n_resamples = 1000, double level = 0.95, std::uint64_t seed = 0);

/// `category,n,auroc` rows followed by `mean` and `pooled` rows.
std::string anomaly_report_csv(const AnomalyReport& report);
std::string scores_csv(const std::vector<ScoredEpisode>& scored);
nlohmann::json anomaly_report_json(const AnomalyReport& report);

}  // namespace sefc
