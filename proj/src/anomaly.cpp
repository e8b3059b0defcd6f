#include "sefc/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "sefc/errors.hpp"
#include "sefc/ingest.hpp"
#include "sefc/nn/checkpoint.hpp"

namespace sefc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

constexpr const char* kHealthy = "healthy";

std::string label_of(const Episode& ep) { return ep.healthy ? kHealthy : ep.fault.value_or("faulty"); }

MatrixXd gather(const Episode& ep, const std::vector<std::size_t>& cols, std::size_t stride) {
  const auto steps = static_cast<Index>(ep.steps());
  const Index rows = steps == 0 ? 0 : (steps - 1) / static_cast<Index>(stride) + 1;
  MatrixXd out(rows, static_cast<Index>(cols.size()));
  for (Index r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out(r, static_cast<Index>(c)) = ep.channels(r * static_cast<Index>(stride), static_cast<Index>(cols[c]));
    }
  }
  return out;
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

ConfidenceInterval interval_from(std::vector<double> stats, double level) {
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - level) / 2.0;
  return {percentile_sorted(stats, tail), percentile_sorted(stats, 1.0 - tail), level};
}

void check_bootstrap_args(std::size_t n_resamples, double level) {
  if (n_resamples == 0) throw Error(ErrorCode::InvalidConfig, "n_resamples must be positive", "n_resamples");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidConfig, "level must lie in (0, 1)", "level");
}

/// Draws |stratum| indices with replacement from each stratum.
std::vector<std::vector<double>> resample(const std::vector<std::vector<double>>& strata, std::mt19937_64& rng) {
  std::vector<std::vector<double>> out(strata.size());
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto n = strata[s].size();
    out[s].resize(n);
    for (std::size_t i = 0; i < n; ++i) out[s][i] = strata[s][static_cast<std::size_t>(rng() % n)];
  }
  return out;
}

double auroc_split(const std::vector<double>& healthy, const std::vector<double>& anomalous) {
  std::vector<double> scores = healthy;
  scores.insert(scores.end(), anomalous.begin(), anomalous.end());
  std::vector<bool> labels(healthy.size(), false);
  labels.resize(scores.size(), true);
  return auroc(scores, labels);
}

}  // namespace

std::vector<std::string> anomaly_input_channels() {
  std::vector<std::string> names;
  for (const char* stem : {"setpoint_pos", "setpoint_vel", "setpoint_acc"}) {
    const auto axes = axis_names(stem, 6);
    names.insert(names.end(), axes.begin(), axes.end());
  }
  return names;
}

std::vector<std::string> anomaly_output_channels() { return axis_names("effort_motor_torque", 6); }

RegressionSet build_regression_set(const std::vector<Episode>& episodes, const std::vector<std::string>& inputs,
                                   const std::vector<std::string>& outputs, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidConfig, "stride must be positive", "stride");
  std::vector<MatrixXd> xs, ys;
  Index rows = 0;
  for (const auto& ep : episodes) {
    xs.push_back(gather(ep, require_channels(ep, inputs), stride));
    ys.push_back(gather(ep, require_channels(ep, outputs), stride));
    rows += xs.back().rows();
  }
  RegressionSet set{MatrixXd(rows, static_cast<Index>(inputs.size())), MatrixXd(rows, static_cast<Index>(outputs.size()))};
  Index at = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    set.x.middleRows(at, xs[i].rows()) = xs[i];
    set.y.middleRows(at, ys[i].rows()) = ys[i];
    at += xs[i].rows();
  }
  return set;
}

Standardizer Standardizer::fit(const MatrixXd& data) {
  if (data.rows() == 0) throw Error(ErrorCode::EmptyDataset, "cannot fit a standardizer on zero rows");
  Standardizer s;
  s.mean = data.colwise().mean().transpose();
  s.scale.resize(data.cols());
  for (Index c = 0; c < data.cols(); ++c) {
    const double var = (data.col(c).array() - s.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

MatrixXd Standardizer::apply(const MatrixXd& data) const {
  if (data.cols() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "standardizer width differs from data");
  return (data.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

json Standardizer::to_json() const { return {{"mean", to_std(mean)}, {"scale", to_std(scale)}}; }

Standardizer Standardizer::from_json(const json& doc) {
  Standardizer s;
  try {
    s.mean = from_std(doc.at("mean").get<std::vector<double>>());
    s.scale = from_std(doc.at("scale").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("standardizer: ") + e.what());
  }
  if (s.mean.size() != s.scale.size()) throw Error(ErrorCode::ShapeMismatch, "standardizer mean/scale sizes differ");
  return s;
}

AnomalyTraining train_anomaly_model(const std::vector<Episode>& healthy, const AnomalyTrainOptions& options) {
  for (const auto& ep : healthy) {
    if (!ep.healthy) {
      throw Error(ErrorCode::HealthyOnlyViolation, "anomaly training accepts healthy episodes only", ep.episode_id);
    }
  }
  if (healthy.size() < 2) throw Error(ErrorCode::EmptyDataset, "need at least 2 healthy episodes");
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "val_fraction must lie in (0, 1)", "val_fraction");
  }

  // Episode-level split so validation rows never share an episode with training rows.
  std::vector<std::size_t> order(healthy.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.train.seed ^ 0x5A11u);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  auto n_val = static_cast<std::size_t>(std::ceil(options.val_fraction * static_cast<double>(healthy.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, healthy.size() - 1);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  AnomalyTraining out;
  std::vector<Episode> train_eps, val_eps;
  for (auto i : train_idx) {
    train_eps.push_back(healthy[i]);
    out.train_ids.push_back(healthy[i].episode_id);
  }
  for (auto i : val_idx) {
    val_eps.push_back(healthy[i]);
    out.val_ids.push_back(healthy[i].episode_id);
  }

  auto& model = out.model;
  model.inputs = anomaly_input_channels();
  model.outputs = anomaly_output_channels();
  if (options.widths.size() < 2 || options.widths.front() != static_cast<Index>(model.inputs.size()) ||
      options.widths.back() != static_cast<Index>(model.outputs.size())) {
    throw Error(ErrorCode::InvalidConfig, "widths must start at 18 and end at 6", "widths");
  }
  const auto train_set = build_regression_set(train_eps, model.inputs, model.outputs, options.stride);
  const auto val_set = build_regression_set(val_eps, model.inputs, model.outputs, options.stride);
  model.x_scaler = Standardizer::fit(train_set.x);
  model.y_scaler = Standardizer::fit(train_set.y);

  model.net = std::make_unique<nn::DenseNet>(options.widths);
  model.net->initialize(options.init_seed);
  out.result = nn::train(*model.net, model.x_scaler.apply(train_set.x), model.y_scaler.apply(train_set.y),
                         model.x_scaler.apply(val_set.x), model.y_scaler.apply(val_set.y), options.train);
  return out;
}

void save_anomaly_model(const std::filesystem::path& stem, const AnomalyModel& model, const json& extra) {
  if (!model.net) throw Error(ErrorCode::InvalidConfig, "model is not trained");
  const json payload = {{"kind", "anomaly"},
                        {"inputs", model.inputs},
                        {"outputs", model.outputs},
                        {"x_scaler", model.x_scaler.to_json()},
                        {"y_scaler", model.y_scaler.to_json()},
                        {"run", extra}};
  nn::save_checkpoint(stem, *model.net, payload);
}

AnomalyModel load_anomaly_model(const std::filesystem::path& stem) {
  auto ck = nn::load_checkpoint(stem);
  AnomalyModel model;
  try {
    model.inputs = ck.extra.at("inputs").get<std::vector<std::string>>();
    model.outputs = ck.extra.at("outputs").get<std::vector<std::string>>();
    model.x_scaler = Standardizer::from_json(ck.extra.at("x_scaler"));
    model.y_scaler = Standardizer::from_json(ck.extra.at("y_scaler"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("anomaly checkpoint: ") + e.what());
  }
  if (static_cast<Index>(model.inputs.size()) != ck.model->input_dim() ||
      static_cast<Index>(model.outputs.size()) != ck.model->output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, "checkpoint channel lists do not match the network");
  }
  model.net = std::move(ck.model);
  return model;
}

ScoredEpisode score_episode(const AnomalyModel& model, const Episode& ep) {
  if (!model.net) throw Error(ErrorCode::InvalidConfig, "model is not trained");
  const auto set = build_regression_set({ep}, model.inputs, model.outputs, 1);
  if (set.x.rows() == 0) throw Error(ErrorCode::EmptyDataset, "episode has no steps", ep.episode_id);
  const MatrixXd pred = model.net->forward(model.x_scaler.apply(set.x));
  const double score = (pred - model.y_scaler.apply(set.y)).cwiseAbs().mean();
  if (!std::isfinite(score)) throw Error(ErrorCode::NumericalInstability, "non-finite score", ep.episode_id);
  return {ep.episode_id, label_of(ep), score};
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& anomalous) {
  if (scores.size() != anomalous.size()) throw Error(ErrorCode::ShapeMismatch, "scores and labels differ in length");
  const auto n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(anomalous.begin(), anomalous.end(), true));
  const auto n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::DegenerateLabels, "AUROC needs both classes");
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorCode::NumericalInstability, "NaN score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are 1-based; a tie block [i, j) shares the mid-rank (i + j + 1) / 2.
  // Twice the rank keeps every quantity integral.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const auto twice_mid = static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (anomalous[order[k]]) twice_rank_sum += twice_mid;
    }
    i = j;
  }
  const double pos = static_cast<double>(n_pos);
  const double twice_u = twice_rank_sum - pos * (pos + 1.0);
  return (twice_u / 2.0) / (pos * static_cast<double>(n_neg));
}

double auroc(const std::vector<ScoredEpisode>& scored) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& s : scored) {
    scores.push_back(s.score);
    labels.push_back(s.anomalous());
  }
  return auroc(scores, labels);
}

ConfidenceInterval bootstrap_ci(const std::vector<ScoredEpisode>& scored, std::size_t n_resamples, double level,
                                std::uint64_t seed) {
  check_bootstrap_args(n_resamples, level);
  std::vector<std::vector<double>> strata(2);
  for (const auto& s : scored) strata[s.anomalous() ? 1 : 0].push_back(s.score);
  if (strata[0].empty() || strata[1].empty()) throw Error(ErrorCode::DegenerateLabels, "bootstrap needs both classes");

  std::mt19937_64 rng(seed);
  std::vector<double> stats;
  stats.reserve(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    const auto draw = resample(strata, rng);
    stats.push_back(auroc_split(draw[0], draw[1]));
  }
  return interval_from(std::move(stats), level);
}

AnomalyReport per_category_report(const std::vector<ScoredEpisode>& scored, const std::vector<std::string>& categories,
                                  std::size_t n_resamples, double level, std::uint64_t seed) {
  check_bootstrap_args(n_resamples, level);
  std::vector<double> healthy;
  std::map<std::string, std::vector<double>> by_label;
  std::vector<double> all_anomalous;
  for (const auto& s : scored) {
    if (s.anomalous()) {
      by_label[s.label].push_back(s.score);
      all_anomalous.push_back(s.score);
    } else {
      healthy.push_back(s.score);
    }
  }
  if (healthy.empty() || all_anomalous.empty()) {
    throw Error(ErrorCode::DegenerateLabels, "report needs healthy and anomalous episodes");
  }

  AnomalyReport report;
  report.n_healthy = healthy.size();
  std::vector<std::vector<double>> present;  // anomalous scores of categories with a row value
  double sum = 0.0;
  for (const auto& category : categories) {
    CategoryRow row{category, 0, std::nullopt};
    if (auto it = by_label.find(category); it != by_label.end()) {
      row.n = it->second.size();
      row.auroc = auroc_split(healthy, it->second);
      sum += *row.auroc;
      present.push_back(it->second);
    }
    report.rows.push_back(std::move(row));
  }
  report.pooled_auroc = auroc_split(healthy, all_anomalous);
  if (present.empty()) {
    report.mean_auroc = report.pooled_auroc;
    report.mean_ci = bootstrap_ci(scored, n_resamples, level, seed);
    return report;
  }
  report.mean_auroc = sum / static_cast<double>(present.size());

  std::vector<std::vector<double>> strata{healthy};
  strata.insert(strata.end(), present.begin(), present.end());
  std::mt19937_64 rng(seed);
  std::vector<double> stats;
  stats.reserve(n_resamples);
  for (std::size_t r = 0; r < n_resamples; ++r) {
    const auto draw = resample(strata, rng);
    double s = 0.0;
    for (std::size_t c = 1; c < draw.size(); ++c) s += auroc_split(draw[0], draw[c]);
    stats.push_back(s / static_cast<double>(draw.size() - 1));
  }
  report.mean_ci = interval_from(std::move(stats), level);
  return report;
}

std::string anomaly_report_csv(const AnomalyReport& report) {
  std::string out = "category,n,auroc\n";
  std::size_t n_anomalous = 0;
  for (const auto& row : report.rows) {
    out += row.category + ',' + std::to_string(row.n) + ',' + (row.auroc ? format_real(*row.auroc) : "") + '\n';
    n_anomalous += row.n;
  }
  out += "mean," + std::to_string(n_anomalous) + ',' + format_real(report.mean_auroc) + '\n';
  out += "pooled," + std::to_string(n_anomalous) + ',' + format_real(report.pooled_auroc) + '\n';
  return out;
}

std::string scores_csv(const std::vector<ScoredEpisode>& scored) {
  std::string out = "episode_id,label,score\n";
  for (const auto& s : scored) out += s.episode_id + ',' + s.label + ',' + format_real(s.score) + '\n';
  return out;
}

json anomaly_report_json(const AnomalyReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"category", row.category},
                    {"n", row.n},
                    {"auroc", row.auroc ? json(*row.auroc) : json(nullptr)},
                    {"absent", !row.auroc.has_value()}});
  }
  return {{"rows", rows},
          {"n_healthy", report.n_healthy},
          {"mean_auroc", report.mean_auroc},
          {"pooled_auroc", report.pooled_auroc},
          {"ci", {{"lo", report.mean_ci.lo}, {"hi", report.mean_ci.hi}, {"level", report.mean_ci.level}}}};
}

}  // namespace sefc
