#include "sefc/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "sefc/errors.hpp"
#include "sefc/ingest.hpp"
#include "sefc/nn/checkpoint.hpp"

namespace sefc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

MatrixXd columns(const Episode& ep, const std::string& stem) {
  const auto names = axis_names(stem, static_cast<int>(kForecastJoints));
  const auto idx = require_channels(ep, names);
  MatrixXd out(static_cast<Index>(ep.steps()), kForecastJoints);
  for (Index j = 0; j < kForecastJoints; ++j) out.col(j) = ep.channels.col(static_cast<Index>(idx[static_cast<std::size_t>(j)]));
  return out;
}

MatrixXd backward_difference(const MatrixXd& v, double dt) {
  MatrixXd a = MatrixXd::Zero(v.rows(), v.cols());
  for (Index t = 1; t < v.rows(); ++t) a.row(t) = (v.row(t) - v.row(t - 1)) / dt;
  return a;
}

void check_windows(const MatrixXd& windows, const std::vector<WindowRef>& refs) {
  if (windows.cols() != kWindowInputs) {
    throw Error(ErrorCode::ShapeMismatch, "windows must have " + std::to_string(kWindowInputs) + " columns");
  }
  if (!refs.empty() && static_cast<Index>(refs.size()) != windows.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "window refs and rows differ in count");
  }
}

}  // namespace

VectorXd ForecastData::target_accel(Index t) const {
  if (t < 0 || t + 1 >= steps()) throw Error(ErrorCode::HorizonOverrun, "no next step for target acceleration", episode_id);
  return ((fb_vel.row(t + 1) - fb_vel.row(t)) / dt).transpose();
}

ForecastData forecast_data(const Episode& ep) {
  if (ep.steps() < 2) throw Error(ErrorCode::DegenerateEpisode, "forecasting needs at least two steps", ep.episode_id);
  if (!(ep.rate_hz > 0.0)) throw Error(ErrorCode::DegenerateEpisode, "episode rate must be positive", ep.episode_id);
  ForecastData d;
  d.episode_id = ep.episode_id;
  d.dt = 1.0 / ep.rate_hz;
  d.fb_pos = columns(ep, "feedback_pos");
  d.fb_vel = columns(ep, "feedback_vel");
  d.fb_acc = backward_difference(d.fb_vel, d.dt);
  d.sp_pos = columns(ep, "setpoint_pos");
  d.sp_vel = columns(ep, "setpoint_vel");
  d.sp_acc = columns(ep, "setpoint_acc");
  return d;
}

RowVectorXd frame_at(const ForecastData& d, Index t) {
  RowVectorXd f(kFrameFeatures);
  f << d.fb_pos.row(t), d.fb_vel.row(t), d.fb_acc.row(t), d.sp_pos.row(t), d.sp_vel.row(t), d.sp_acc.row(t);
  return f;
}

RowVectorXd window_at(const ForecastData& d, Index t_end) {
  if (t_end < kWindowSteps - 1 || t_end >= d.steps()) {
    throw Error(ErrorCode::HorizonOverrun, "window end " + std::to_string(t_end) + " out of range", d.episode_id);
  }
  RowVectorXd w(kWindowInputs);
  for (Index k = 0; k < kWindowSteps; ++k) {
    w.segment(k * kFrameFeatures, kFrameFeatures) = frame_at(d, t_end - kWindowSteps + 1 + k);
  }
  return w;
}

WindowSet build_window_set(const std::vector<ForecastData>& data, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidConfig, "stride must be positive", "stride");
  WindowSet set;
  for (const auto& d : data) {
    for (Index t = kWindowSteps - 1; t + 1 < d.steps(); t += static_cast<Index>(stride)) set.refs.push_back({&d, t});
  }
  const auto n = static_cast<Index>(set.refs.size());
  set.x.resize(n, kWindowInputs);
  set.y.resize(n, kForecastJoints);
  for (Index i = 0; i < n; ++i) {
    const auto& r = set.refs[static_cast<std::size_t>(i)];
    set.x.row(i) = window_at(*r.data, r.t_end);
    set.y.row(i) = r.data->target_accel(r.t_end).transpose();
  }
  return set;
}

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Linear: return "linear";
    case PredictorKind::FlatMlp: return "flat_mlp";
    case PredictorKind::Tcn: return "tcn";
    case PredictorKind::TcnTransformer: return "tcn_transformer";
    case PredictorKind::KinematicZero: return "kinematic_zero";
    case PredictorKind::Oracle: return "oracle";
  }
  return "unknown";
}

PredictorKind parse_predictor_kind(std::string_view text) {
  for (auto k : {PredictorKind::Linear, PredictorKind::FlatMlp, PredictorKind::Tcn, PredictorKind::TcnTransformer,
                 PredictorKind::KinematicZero, PredictorKind::Oracle}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown forecast model '" + std::string(text) + "'", "model");
}

bool is_learned(PredictorKind kind) { return kind != PredictorKind::KinematicZero && kind != PredictorKind::Oracle; }

MatrixXd KinematicZero::predict(const MatrixXd& windows, const std::vector<WindowRef>& refs) const {
  check_windows(windows, refs);
  return MatrixXd::Zero(windows.rows(), kForecastJoints);
}

MatrixXd OracleAccel::predict(const MatrixXd& windows, const std::vector<WindowRef>& refs) const {
  check_windows(windows, refs);
  if (static_cast<Index>(refs.size()) != windows.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "oracle needs a source reference for every window");
  }
  MatrixXd out(windows.rows(), kForecastJoints);
  for (Index i = 0; i < windows.rows(); ++i) {
    const auto& r = refs[static_cast<std::size_t>(i)];
    out.row(i) = r.data->target_accel(r.t_end).transpose();
  }
  return out;
}

LearnedPredictor::LearnedPredictor(PredictorKind kind, std::unique_ptr<nn::Model> net, Standardizer frame_scaler,
                                   Standardizer target_scaler)
    : kind_(kind), net_(std::move(net)), frame_scaler_(std::move(frame_scaler)), target_scaler_(std::move(target_scaler)) {
  if (!is_learned(kind_)) throw Error(ErrorCode::InvalidConfig, "reference kinds have no network", "model");
  if (!net_ || net_->input_dim() != kWindowInputs || net_->output_dim() != kForecastJoints) {
    throw Error(ErrorCode::ShapeMismatch, "forecast network must map 360 inputs to 6 outputs");
  }
  if (frame_scaler_.mean.size() != kFrameFeatures || target_scaler_.mean.size() != kForecastJoints) {
    throw Error(ErrorCode::ShapeMismatch, "forecast scalers have the wrong width");
  }
}

MatrixXd LearnedPredictor::scale_windows(const MatrixXd& windows) const {
  MatrixXd out(windows.rows(), windows.cols());
  for (Index k = 0; k < kWindowSteps; ++k) {
    out.middleCols(k * kFrameFeatures, kFrameFeatures) =
        frame_scaler_.apply(windows.middleCols(k * kFrameFeatures, kFrameFeatures));
  }
  return out;
}

MatrixXd LearnedPredictor::predict(const MatrixXd& windows, const std::vector<WindowRef>& refs) const {
  check_windows(windows, refs);
  const MatrixXd z = net_->forward(scale_windows(windows));
  return (z.array().rowwise() * target_scaler_.scale.transpose().array()).rowwise() +
         target_scaler_.mean.transpose().array();
}

std::unique_ptr<nn::Model> make_forecast_network(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::Linear: return std::make_unique<nn::DenseNet>(std::vector<Index>{kWindowInputs, kForecastJoints});
    case PredictorKind::FlatMlp:
      return std::make_unique<nn::DenseNet>(std::vector<Index>{kWindowInputs, 128, 64, kForecastJoints});
    case PredictorKind::Tcn: return std::make_unique<nn::SeqNet>(nn::SeqNet::tcn_only({}));
    case PredictorKind::TcnTransformer: return std::make_unique<nn::SeqNet>(nn::TcnDims{}, nn::EncoderDims{});
    default: break;
  }
  throw Error(ErrorCode::InvalidConfig, std::string(to_string(kind)) + " has no network", "model");
}

ForecastTraining train_forecaster(PredictorKind kind, const std::vector<ForecastData>& train,
                                  const std::vector<ForecastData>& val, const nn::TrainConfig& config,
                                  std::size_t stride, std::uint64_t init_seed) {
  auto net = make_forecast_network(kind);
  const auto train_set = build_window_set(train, stride);
  const auto val_set = build_window_set(val, stride);
  if (train_set.x.rows() == 0 || val_set.x.rows() == 0) {
    throw Error(ErrorCode::EmptyDataset, "no forecast windows in the training or validation split");
  }
  // Frames are scaled with statistics of every frame in the training episodes.
  Index frames = 0;
  for (const auto& d : train) frames += d.steps();
  MatrixXd all_frames(frames, kFrameFeatures);
  Index at = 0;
  for (const auto& d : train) {
    for (Index t = 0; t < d.steps(); ++t) all_frames.row(at++) = frame_at(d, t);
  }
  auto frame_scaler = Standardizer::fit(all_frames);
  auto target_scaler = Standardizer::fit(train_set.y);
  net->initialize(init_seed);

  ForecastTraining out;
  out.predictor = std::make_unique<LearnedPredictor>(kind, std::move(net), frame_scaler, target_scaler);
  auto& p = *out.predictor;
  out.result = nn::train(p.net(), p.scale_windows(train_set.x), target_scaler.apply(train_set.y),
                         p.scale_windows(val_set.x), target_scaler.apply(val_set.y), config);
  return out;
}

void save_forecaster(const std::filesystem::path& stem, const LearnedPredictor& predictor, const json& extra) {
  const json payload = {{"kind", std::string(to_string(predictor.kind()))},
                        {"frame_scaler", predictor.frame_scaler().to_json()},
                        {"target_scaler", predictor.target_scaler().to_json()},
                        {"run", extra}};
  nn::save_checkpoint(stem, predictor.net(), payload);
}

std::unique_ptr<LearnedPredictor> load_forecaster(const std::filesystem::path& stem) {
  auto ck = nn::load_checkpoint(stem);
  try {
    const auto kind = parse_predictor_kind(ck.extra.at("kind").get<std::string>());
    return std::make_unique<LearnedPredictor>(kind, std::move(ck.model),
                                              Standardizer::from_json(ck.extra.at("frame_scaler")),
                                              Standardizer::from_json(ck.extra.at("target_scaler")));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("forecast checkpoint: ") + e.what());
  }
}

double RolloutResult::survival_steps(Index h) const {
  if (first_violation.empty()) return 0.0;
  double s = 0.0;
  for (Index v : first_violation) s += static_cast<double>(std::min(v, h));
  return s / static_cast<double>(first_violation.size());
}

RolloutResult euler_rollout(const Predictor& model, const ForecastData& data, Index start, Index horizon,
                            double threshold) {
  return std::move(euler_rollouts(model, {&data}, {start}, horizon, threshold).front());
}

std::vector<RolloutResult> euler_rollouts(const Predictor& model, const std::vector<const ForecastData*>& data,
                                          const std::vector<Index>& starts, Index horizon, double threshold) {
  if (data.size() != starts.size()) throw Error(ErrorCode::ShapeMismatch, "one start per rollout is required");
  if (horizon <= 0) throw Error(ErrorCode::HorizonOverrun, "horizon must be positive");
  const auto n = data.size();
  for (std::size_t r = 0; r < n; ++r) {
    if (starts[r] < kWindowSteps || starts[r] + horizon > data[r]->steps()) {
      throw Error(ErrorCode::HorizonOverrun,
                  "rollout [" + std::to_string(starts[r]) + ", " + std::to_string(starts[r] + horizon) +
                      ") does not fit " + std::to_string(data[r]->steps()) + " steps",
                  data[r]->episode_id);
    }
  }

  // Each rollout keeps its own 10-frame history; the last frame is step t.
  std::vector<MatrixXd> hist(n);
  std::vector<RowVectorXd> q(n), v(n);
  std::vector<RolloutResult> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& d = *data[r];
    const Index t0 = starts[r] - 1;
    hist[r].resize(kWindowSteps, kFrameFeatures);
    for (Index k = 0; k < kWindowSteps; ++k) hist[r].row(k) = frame_at(d, t0 - kWindowSteps + 1 + k);
    q[r] = d.fb_pos.row(t0);
    v[r] = d.fb_vel.row(t0);
    auto& res = out[r];
    res.episode_id = d.episode_id;
    res.start = starts[r];
    res.threshold = threshold;
    res.pos.resize(horizon, kForecastJoints);
    res.vel.resize(horizon, kForecastJoints);
    res.acc.resize(horizon, kForecastJoints);
    res.true_pos = d.fb_pos.middleRows(starts[r], horizon);
    res.true_vel = d.fb_vel.middleRows(starts[r], horizon);
    res.true_acc = d.fb_acc.middleRows(starts[r], horizon);
  }

  MatrixXd windows(static_cast<Index>(n), kWindowInputs);
  std::vector<WindowRef> refs(n);
  for (Index k = 0; k < horizon; ++k) {
    for (std::size_t r = 0; r < n; ++r) {
      for (Index f = 0; f < kWindowSteps; ++f) {
        windows.block(static_cast<Index>(r), f * kFrameFeatures, 1, kFrameFeatures) = hist[r].row(f);
      }
      refs[r] = {data[r], starts[r] - 1 + k};
    }
    const MatrixXd a = model.predict(windows, refs);
    if (!a.allFinite()) throw Error(ErrorCode::NumericalInstability, "non-finite predicted acceleration");
    for (std::size_t r = 0; r < n; ++r) {
      const auto& d = *data[r];
      const Index t = starts[r] + k;  // step being predicted
      const RowVectorXd ar = a.row(static_cast<Index>(r));
      const RowVectorXd q_next = q[r] + v[r] * d.dt;
      const RowVectorXd v_next = v[r] + ar * d.dt;
      q[r] = q_next;
      v[r] = v_next;
      out[r].pos.row(k) = q_next;
      out[r].vel.row(k) = v_next;
      out[r].acc.row(k) = ar;

      RowVectorXd frame(kFrameFeatures);
      frame << q_next, v_next, ar, d.sp_pos.row(t), d.sp_vel.row(t), d.sp_acc.row(t);
      hist[r].topRows(kWindowSteps - 1) = hist[r].bottomRows(kWindowSteps - 1).eval();
      hist[r].row(kWindowSteps - 1) = frame;
    }
  }

  for (auto& res : out) {
    res.first_violation.assign(static_cast<std::size_t>(kForecastJoints), horizon);
    for (Index j = 0; j < kForecastJoints; ++j) {
      for (Index k = 0; k < horizon; ++k) {
        if (std::abs(res.pos(k, j) - res.true_pos(k, j)) > threshold) {
          res.first_violation[static_cast<std::size_t>(j)] = k;
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Index> rollout_starts(Index steps, Index horizon, std::size_t count) {
  const Index lo = kWindowSteps;
  const Index hi = steps - horizon;
  if (count == 0 || hi < lo) return {};
  if (count == 1) return {lo};
  std::vector<Index> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Index s = lo + static_cast<Index>((static_cast<double>(hi - lo) * static_cast<double>(i)) /
                                            static_cast<double>(count - 1));
    if (out.empty() || s != out.back()) out.push_back(s);
  }
  return out;
}

HorizonRow horizon_metrics(const std::vector<RolloutResult>& results, Index h, const std::string& model) {
  HorizonRow row;
  row.model = model;
  row.horizon = h;
  row.n_rollouts = results.size();
  if (results.empty()) return row;
  std::vector<double> mses, maes;
  double survival = 0.0;
  for (const auto& r : results) {
    if (h <= 0 || h > r.horizon()) {
      throw Error(ErrorCode::HorizonOverrun, "metric horizon exceeds rollout length", r.episode_id);
    }
    const MatrixXd err = r.pos.topRows(h) - r.true_pos.topRows(h);
    mses.push_back(err.array().square().mean());
    maes.push_back(err.array().abs().mean());
    survival += r.survival_steps(h);
  }
  const double mse = mean_of(mses);
  const double mae = mean_of(maes);
  row.mse_scaled = mse * 1e4;
  row.mse_std = sample_std(mses, mse) * 1e4;
  row.mae_scaled = mae * 1e2;
  row.mae_std = sample_std(maes, mae) * 1e2;
  row.survival_steps = survival / static_cast<double>(results.size());
  return row;
}

std::string horizon_csv(const std::vector<HorizonRow>& rows) {
  std::string out = "model,H,mse_scaled,mse_std,mae_scaled,mae_std,survival_steps\n";
  for (const auto& r : rows) {
    out += r.model + ',' + std::to_string(r.horizon) + ',' + format_real(r.mse_scaled) + ',' + format_real(r.mse_std) +
           ',' + format_real(r.mae_scaled) + ',' + format_real(r.mae_std) + ',' + format_real(r.survival_steps) + '\n';
  }
  return out;
}

double mc_mae(const MatrixXd& pred, const MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "prediction and truth shapes differ");
  }
  if (pred.size() == 0) throw Error(ErrorCode::EmptyInput, "mc_mae of an empty series");
  // Centre the residual: (p − p̄) − (y − ȳ) = (p − y) − mean(p − y) per column.
  const MatrixXd diff = pred - truth;
  const Eigen::RowVectorXd mu = diff.colwise().mean();
  return (diff.rowwise() - mu).cwiseAbs().mean();
}

TransferRow transfer_eval(const std::string& model, const TransferFn& fn, const std::vector<Episode>& target) {
  if (target.empty()) throw Error(ErrorCode::EmptyInput, "no target episodes");
  TransferRow row;
  row.model = model;
  std::vector<double> raw;
  for (const auto& ep : target) {
    const auto pt = fn(ep);
    row.per_episode.push_back(mc_mae(pt.pred, pt.truth));
    raw.push_back((pt.pred - pt.truth).cwiseAbs().mean());
  }
  row.n_episodes = target.size();
  row.mc_mae = mean_of(row.per_episode);
  row.raw_mae = mean_of(raw);
  row.ci_halfwidth = 1.96 * sample_std(row.per_episode, row.mc_mae) / std::sqrt(static_cast<double>(row.n_episodes));
  return row;
}

TransferFn effort_transfer(const AnomalyModel& model) {
  return [&model](const Episode& ep) {
    const auto set = build_regression_set({ep}, model.inputs, model.outputs, 1);
    const MatrixXd z = model.net->forward(model.x_scaler.apply(set.x));
    MatrixXd pred = (z.array().rowwise() * model.y_scaler.scale.transpose().array()).rowwise() +
                    model.y_scaler.mean.transpose().array();
    return PredTruth{std::move(pred), set.y};
  };
}

TransferFn zero_transfer(std::vector<std::string> channels) {
  return [channels = std::move(channels)](const Episode& ep) {
    const auto idx = require_channels(ep, channels);
    MatrixXd truth(static_cast<Index>(ep.steps()), static_cast<Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) truth.col(static_cast<Index>(c)) = ep.channels.col(static_cast<Index>(idx[c]));
    return PredTruth{MatrixXd::Zero(truth.rows(), truth.cols()), std::move(truth)};
  };
}

TransferFn accel_transfer(const Predictor& model) {
  return [&model](const Episode& ep) {
    const auto d = forecast_data(ep);
    const auto set = build_window_set({d}, 1);
    if (set.x.rows() == 0) throw Error(ErrorCode::DegenerateEpisode, "episode shorter than one window", ep.episode_id);
    return PredTruth{model.predict(set.x, set.refs), set.y};
  };
}

std::string transfer_csv(const std::vector<TransferRow>& rows) {
  std::string out = "model,mc_mae,ci_halfwidth,raw_mae,n_episodes\n";
  for (const auto& r : rows) {
    out += r.model + ',' + format_real(r.mc_mae) + ',' + format_real(r.ci_halfwidth) + ',' + format_real(r.raw_mae) +
           ',' + std::to_string(r.n_episodes) + '\n';
  }
  return out;
}

}  // namespace sefc
