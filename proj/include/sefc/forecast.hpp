#pragma once

/**
 * Forward-dynamics forecasting. Predicted joint accelerations from a context
 * window drive explicit-Euler rollouts, which are scored by horizon error
 * and survival steps. Also hosts the mean-centred transfer metric.
 *
 * Window features per step, in order: feedback pos, vel, acc, then setpoint
 * pos, vel, acc (6 joints each). Feedback acceleration is the backward
 * difference of feedback velocity, so a window ending at t never sees v_{t+1}.
 * The regression target for that window is (v_{t+1} − v_t)/dt.
 */

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sefc/anomaly.hpp"
#include "sefc/nn/model.hpp"
#include "sefc/nn/train.hpp"
#include "sefc/schema.hpp"

namespace sefc {

inline constexpr Eigen::Index kForecastJoints = 6;
inline constexpr Eigen::Index kWindowSteps = 10;
inline constexpr Eigen::Index kFrameFeatures = 36;
inline constexpr Eigen::Index kWindowInputs = kWindowSteps * kFrameFeatures;

/// T x 6 joint-space series extracted from one episode.
struct ForecastData {
  std::string episode_id;
  double dt = 0.01;
  Eigen::MatrixXd fb_pos, fb_vel, fb_acc;
  Eigen::MatrixXd sp_pos, sp_vel, sp_acc;

  Eigen::Index steps() const { return fb_pos.rows(); }
  /// Forward-difference acceleration (v_{t+1} − v_t)/dt; valid for t < T − 1.
  Eigen::VectorXd target_accel(Eigen::Index t) const;
};

/// Errors: MissingChannel, DegenerateEpisode (fewer than two steps).
ForecastData forecast_data(const Episode& ep);

/// One 36-feature frame at step t.
Eigen::RowVectorXd frame_at(const ForecastData& d, Eigen::Index t);
/// Step-major flattening of frames t − 9 .. t. Errors: HorizonOverrun.
Eigen::RowVectorXd window_at(const ForecastData& d, Eigen::Index t_end);

/// Where a window came from; lets reference predictors look up the truth.
struct WindowRef {
  const ForecastData* data = nullptr;
  Eigen::Index t_end = 0;
};

struct WindowSet {
  Eigen::MatrixXd x;  // N x 360
  Eigen::MatrixXd y;  // N x 6 target accelerations
  std::vector<WindowRef> refs;
};

/// Every `stride`-th window end in [9, T − 2] of every episode.
WindowSet build_window_set(const std::vector<ForecastData>& data, std::size_t stride = 1);

enum class PredictorKind { Linear, FlatMlp, Tcn, TcnTransformer, KinematicZero, Oracle };

std::string_view to_string(PredictorKind kind);
/// Errors: InvalidConfig.
PredictorKind parse_predictor_kind(std::string_view text);
bool is_learned(PredictorKind kind);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictorKind kind() const = 0;
  /// N x 360 windows to N x 6 accelerations. Errors: ShapeMismatch.
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& windows, const std::vector<WindowRef>& refs) const = 0;
};

/// Always zero acceleration.
class KinematicZero final : public Predictor {
 public:
  PredictorKind kind() const override { return PredictorKind::KinematicZero; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& windows, const std::vector<WindowRef>& refs) const override;
};

/// Returns the recorded forward-difference acceleration at each window end.
class OracleAccel final : public Predictor {
 public:
  PredictorKind kind() const override { return PredictorKind::Oracle; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& windows, const std::vector<WindowRef>& refs) const override;
};

/// Network plus per-frame-feature input scaling and per-joint target scaling.
class LearnedPredictor final : public Predictor {
 public:
  LearnedPredictor(PredictorKind kind, std::unique_ptr<nn::Model> net, Standardizer frame_scaler, Standardizer target_scaler);

  PredictorKind kind() const override { return kind_; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& windows, const std::vector<WindowRef>& refs) const override;

  const nn::Model& net() const { return *net_; }
  nn::Model& net() { return *net_; }
  const Standardizer& frame_scaler() const { return frame_scaler_; }
  const Standardizer& target_scaler() const { return target_scaler_; }
  /// Applies the frame scaler to every step of every window.
  Eigen::MatrixXd scale_windows(const Eigen::MatrixXd& windows) const;

 private:
  PredictorKind kind_;
  std::unique_ptr<nn::Model> net_;
  Standardizer frame_scaler_;
  Standardizer target_scaler_;
};

/// Untrained network for a learned kind (linear 360→6, flat MLP 360-128-64-6,
/// TCN, TCN-Transformer). Errors: InvalidConfig for reference kinds.
std::unique_ptr<nn::Model> make_forecast_network(PredictorKind kind);

struct ForecastTraining {
  std::unique_ptr<LearnedPredictor> predictor;
  nn::TrainResult result;
};

/// Errors: InvalidConfig, EmptyDataset.
ForecastTraining train_forecaster(PredictorKind kind, const std::vector<ForecastData>& train,
                                  const std::vector<ForecastData>& val, const nn::TrainConfig& config,
                                  std::size_t stride = 1, std::uint64_t init_seed = 0);

void save_forecaster(const std::filesystem::path& stem, const LearnedPredictor& predictor, const nlohmann::json& extra = {});
std::unique_ptr<LearnedPredictor> load_forecaster(const std::filesystem::path& stem);

struct RolloutResult {
  std::string episode_id;
  Eigen::Index start = 0;  // first predicted step
  Eigen::MatrixXd pos, vel, acc;                      // H x 6 predicted
  Eigen::MatrixXd true_pos, true_vel, true_acc;       // H x 6 recorded
  double threshold = 0.01;
  /// Per joint, the first horizon index with |pos error| > threshold; H when none.
  std::vector<Eigen::Index> first_violation;

  Eigen::Index horizon() const { return pos.rows(); }
  /// Mean over joints of min(first_violation, h).
  double survival_steps(Eigen::Index h) const;
  double survival_steps() const { return survival_steps(horizon()); }
};

/**
 * Closed-loop rollout of steps start .. start + H − 1. The initial state is
 * the recorded (q, v) at start − 1; each step predicts a from the current
 * window, then v' = v + a·dt and q' = q + v·dt. Predicted pos, vel and the
 * implied backward-difference acc replace the feedback features of later
 * frames; setpoint features are replayed from the recording.
 * Errors: HorizonOverrun (start < 10 or start + H > T).
 */
RolloutResult euler_rollout(const Predictor& model, const ForecastData& data, Eigen::Index start, Eigen::Index horizon,
                            double threshold = 0.01);

/// Rollouts that share a horizon, advanced together so learned models see one batch per step.
std::vector<RolloutResult> euler_rollouts(const Predictor& model, const std::vector<const ForecastData*>& data,
                                          const std::vector<Eigen::Index>& starts, Eigen::Index horizon,
                                          double threshold = 0.01);

/// Rollout starts for an episode: `count` evenly spaced values in [10, T − H].
std::vector<Eigen::Index> rollout_starts(Eigen::Index steps, Eigen::Index horizon, std::size_t count);

struct HorizonRow {
  std::string model;
  Eigen::Index horizon = 0;
  double mse_scaled = 0.0;  // ×1e4, rad²
  double mse_std = 0.0;
  double mae_scaled = 0.0;  // ×1e2, rad
  double mae_std = 0.0;
  double survival_steps = 0.0;
  std::size_t n_rollouts = 0;
};

/// Position-error metrics over the first h steps of each rollout; mean and
/// sample std over rollouts (std 0 for a single rollout). Survival is the
/// joint mean over rollouts and joints.
HorizonRow horizon_metrics(const std::vector<RolloutResult>& results, Eigen::Index h, const std::string& model = {});

/// `model,H,mse_scaled,mse_std,mae_scaled,mae_std,survival_steps`.
std::string horizon_csv(const std::vector<HorizonRow>& rows);

/// Mean |(pred − colmean pred) − (truth − colmean truth)|. Errors: ShapeMismatch, EmptyInput.
double mc_mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

struct PredTruth {
  Eigen::MatrixXd pred;
  Eigen::MatrixXd truth;
};

/// Maps a target episode to aligned predictions and recorded values.
using TransferFn = std::function<PredTruth(const Episode&)>;

struct TransferRow {
  std::string model;
  double mc_mae = 0.0;
  double ci_halfwidth = 0.0;  // 1.96·std/√n
  double raw_mae = 0.0;
  std::size_t n_episodes = 0;
  std::vector<double> per_episode;
};

/// Zero-shot evaluation: per-episode MC-MAE, then mean and normal 95% half-width.
/// Errors: EmptyInput, MissingChannel.
TransferRow transfer_eval(const std::string& model, const TransferFn& fn, const std::vector<Episode>& target);

/// Effort channels predicted by a setpoint→effort regressor, in physical units.
TransferFn effort_transfer(const AnomalyModel& model);
/// Constant-zero prediction of the named channels.
TransferFn zero_transfer(std::vector<std::string> channels);
/// One-step acceleration predictions on recorded windows against the forward difference.
TransferFn accel_transfer(const Predictor& model);

/// `model,mc_mae,ci_halfwidth,raw_mae,n_episodes`.
std::string transfer_csv(const std::vector<TransferRow>& rows);

}  // namespace sefc
