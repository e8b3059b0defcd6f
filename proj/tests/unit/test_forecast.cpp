#include <cmath>
#include <random>

#include "doctest.h"
#include "sefc/errors.hpp"
#include "sefc/forecast.hpp"
#include "sefc/synthgen.hpp"
#include "support.hpp"

using namespace sefc;
using namespace sefc::testing;
using Eigen::Index;
using Eigen::MatrixXd;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::Io;
}

Episode noiseless_episode(std::uint64_t seed) {
  RandomizationConfig c;
  c.sim_dt_s = 0.01;
  c.sigma_base = 0.0;
  c.sigma_pos_rad = 0.0;
  c.sigma_vel_radps = 0.0;
  c.sigma_effort = 0.0;
  return generate_episode(sample_params(seed, c));
}

MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

TEST_CASE("window layout and targets") {
  const ForecastData d = forecast_data(noiseless_episode(1));
  CHECK(d.dt == doctest::Approx(0.01).epsilon(1e-15));
  for (Index t = 1; t < d.steps(); ++t) {
    CHECK(d.fb_acc.row(t) == (d.fb_vel.row(t) - d.fb_vel.row(t - 1)) / d.dt);
  }
  CHECK(d.fb_acc.row(0).isZero(0.0));
  CHECK(d.target_accel(20).transpose() == (d.fb_vel.row(21) - d.fb_vel.row(20)) / d.dt);

  const auto w = window_at(d, 30);
  REQUIRE(w.size() == kWindowInputs);
  for (Index k = 0; k < kWindowSteps; ++k) {
    CHECK(w.segment(k * kFrameFeatures, kFrameFeatures) == frame_at(d, 21 + k));
  }
  const auto f = frame_at(d, 30);
  CHECK(f.segment(0, 6) == d.fb_pos.row(30));
  CHECK(f.segment(18, 6) == d.sp_pos.row(30));
  CHECK(f.segment(30, 6) == d.sp_acc.row(30));
  CHECK(code_of([&] { window_at(d, 8); }) == ErrorCode::HorizonOverrun);
  CHECK(code_of([&] { window_at(d, d.steps()); }) == ErrorCode::HorizonOverrun);

  const auto set = build_window_set({d}, 1);
  CHECK(set.x.rows() == d.steps() - 10);
  CHECK(set.x.row(0) == window_at(d, 9));
  CHECK(set.y.row(0) == d.target_accel(9).transpose());
  CHECK(set.refs.back().t_end == d.steps() - 2);
  CHECK(build_window_set({d}, 4).x.rows() == (d.steps() - 10 + 3) / 4);
}

TEST_CASE("forecast data requires the joint channels") {
  Episode ep = noiseless_episode(2);
  for (auto& c : ep.descriptors) {
    if (c.canonical_name == "feedback_vel_4") c.canonical_name = "feedback_vel_x";
  }
  CHECK(code_of([&] { forecast_data(ep); }) == ErrorCode::MissingChannel);
}

TEST_CASE("kinematic-zero rollout follows the constant-velocity closed form") {
  const ForecastData d = forecast_data(noiseless_episode(3));
  const KinematicZero model;
  for (Index start : {Index{10}, Index{57}, d.steps() - 200}) {
    const auto r = euler_rollout(model, d, start, 200);
    const Eigen::RowVectorXd q0 = d.fb_pos.row(start - 1);
    const Eigen::RowVectorXd v0 = d.fb_vel.row(start - 1);
    double worst = 0.0;
    for (Index k = 0; k < 200; ++k) {
      const Eigen::RowVectorXd q = q0 + static_cast<double>(k + 1) * d.dt * v0;
      worst = std::max(worst, (r.pos.row(k) - q).cwiseAbs().maxCoeff());
      worst = std::max(worst, (r.vel.row(k) - v0).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-12);
    CHECK(r.acc.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.true_pos == d.fb_pos.middleRows(start, 200));
  }
}

TEST_CASE("oracle rollout survives the full horizon on a noiseless episode") {
  const ForecastData d = forecast_data(noiseless_episode(4));
  const OracleAccel model;
  const auto starts = rollout_starts(d.steps(), 200, 5);
  std::vector<const ForecastData*> ptrs(starts.size(), &d);
  const auto results = euler_rollouts(model, ptrs, starts, 200);
  for (const auto& r : results) {
    CHECK(r.survival_steps() == 200.0);
    CHECK((r.pos - r.true_pos).cwiseAbs().maxCoeff() <= 1e-9);
  }
  const auto row = horizon_metrics(results, 200, "oracle");
  CHECK(row.survival_steps == 200.0);
  CHECK(row.n_rollouts == starts.size());
}

TEST_CASE("survival counts the first threshold crossing per joint") {
  const ForecastData d = forecast_data(noiseless_episode(5));
  const KinematicZero model;
  const auto r = euler_rollout(model, d, 40, 150, 0.01);
  double expected = 0.0;
  for (Index j = 0; j < 6; ++j) {
    Index first = 150;
    for (Index k = 0; k < 150; ++k) {
      if (std::abs(r.pos(k, j) - r.true_pos(k, j)) > 0.01) {
        first = k;
        break;
      }
    }
    CHECK(r.first_violation[static_cast<std::size_t>(j)] == first);
    expected += static_cast<double>(first);
  }
  CHECK(r.survival_steps() == expected / 6.0);
  double previous = 0.0;
  for (Index h = 1; h <= 150; ++h) {
    const double s = r.survival_steps(h);
    CHECK(s >= previous);
    CHECK(s <= static_cast<double>(h));
    previous = s;
  }
  // A longer rollout from the same start agrees on the shared prefix.
  const auto longer = euler_rollout(model, d, 40, 200, 0.01);
  CHECK(longer.pos.topRows(150) == r.pos);
  CHECK(longer.survival_steps(150) == r.survival_steps());
}

TEST_CASE("rollout bounds and starts") {
  const ForecastData d = forecast_data(noiseless_episode(6));
  const KinematicZero model;
  CHECK(code_of([&] { euler_rollout(model, d, 9, 20); }) == ErrorCode::HorizonOverrun);
  CHECK(code_of([&] { euler_rollout(model, d, d.steps() - 19, 20); }) == ErrorCode::HorizonOverrun);
  CHECK_NOTHROW(euler_rollout(model, d, d.steps() - 20, 20));

  CHECK(rollout_starts(100, 20, 3) == std::vector<Index>{10, 45, 80});
  CHECK(rollout_starts(100, 20, 1) == std::vector<Index>{10});
  CHECK(rollout_starts(25, 20, 4).empty());
  CHECK(rollout_starts(31, 20, 5) == std::vector<Index>{10, 11});
  for (Index s : rollout_starts(457, 200, 7)) {
    CHECK(s >= 10);
    CHECK(s <= 257);
  }
}

TEST_CASE("horizon metrics") {
  const ForecastData d = forecast_data(noiseless_episode(7));
  const KinematicZero model;
  const auto a = euler_rollout(model, d, 20, 50);
  const auto b = euler_rollout(model, d, 90, 50);
  const auto single = horizon_metrics({a}, 30, "kz");
  const MatrixXd ea = a.pos.topRows(30) - a.true_pos.topRows(30);
  CHECK(single.mse_scaled == doctest::Approx(1e4 * ea.array().square().mean()).epsilon(1e-14));
  CHECK(single.mae_scaled == doctest::Approx(1e2 * ea.array().abs().mean()).epsilon(1e-14));
  CHECK(single.mse_std == 0.0);
  CHECK(single.survival_steps == a.survival_steps(30));

  const auto pair = horizon_metrics({a, b}, 30, "kz");
  const MatrixXd eb = b.pos.topRows(30) - b.true_pos.topRows(30);
  const double ma = ea.array().abs().mean();
  const double mb = eb.array().abs().mean();
  CHECK(pair.mae_scaled == doctest::Approx(1e2 * (ma + mb) / 2.0).epsilon(1e-14));
  CHECK(pair.mae_std == doctest::Approx(1e2 * std::abs(ma - mb) / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(code_of([&] { horizon_metrics({a}, 51); }) == ErrorCode::HorizonOverrun);

  const std::string csv = horizon_csv({single});
  CHECK(csv.rfind("model,H,mse_scaled,mse_std,mae_scaled,mae_std,survival_steps\nkz,30,", 0) == 0);
}

TEST_CASE("mc_mae hand example and invariances") {
  MatrixXd truth(3, 1);
  truth << 1.0, 2.0, 3.0;
  CHECK(mc_mae(2.0 * truth, truth) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(mc_mae(truth.array() + 17.5, truth) == 0.0);

  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index rows = 2 + static_cast<Index>(rng() % 40);
    const Index cols = 1 + static_cast<Index>(rng() % 6);
    const MatrixXd p = random_matrix(rows, cols, rng);
    const MatrixXd y = random_matrix(rows, cols, rng);
    Eigen::RowVectorXd cp(cols), cy(cols);
    for (Index c = 0; c < cols; ++c) {
      cp(c) = shift(rng);
      cy(c) = shift(rng);
    }
    const double base = mc_mae(p, y);
    CHECK(std::abs(mc_mae(p.rowwise() + cp, y.rowwise() + cy) - base) <= 1e-12);
    CHECK(mc_mae(y.rowwise() + cp, y) <= 1e-12);
    CHECK(mc_mae(p, y) == mc_mae(y, p));
  }
  CHECK(code_of([] { mc_mae(MatrixXd(2, 1), MatrixXd(3, 1)); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([] { mc_mae(MatrixXd(0, 1), MatrixXd(0, 1)); }) == ErrorCode::EmptyInput);
}

TEST_CASE("transfer evaluation with a zero predictor") {
  std::vector<Episode> target = {noiseless_episode(8), noiseless_episode(9), noiseless_episode(10)};
  const std::vector<std::string> channels = {"effort_motor_torque_1", "effort_motor_torque_2"};
  const auto row = transfer_eval("zero", zero_transfer(channels), target);
  REQUIRE(row.per_episode.size() == 3);
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    MatrixXd y(static_cast<Index>(target[i].steps()), 2);
    y.col(0) = target[i].channels.col(static_cast<Index>(*target[i].find_channel("effort_motor_torque_1")));
    y.col(1) = target[i].channels.col(static_cast<Index>(*target[i].find_channel("effort_motor_torque_2")));
    const double expected = (y.rowwise() - y.colwise().mean()).cwiseAbs().mean();
    CHECK(row.per_episode[i] == doctest::Approx(expected).epsilon(1e-14));
    sum += row.per_episode[i];
  }
  const double mean = sum / 3.0;
  CHECK(row.mc_mae == doctest::Approx(mean).epsilon(1e-14));
  double ss = 0.0;
  for (double v : row.per_episode) ss += (v - mean) * (v - mean);
  CHECK(row.ci_halfwidth == doctest::Approx(1.96 * std::sqrt(ss / 2.0) / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(row.n_episodes == 3);

  CHECK(code_of([&] { transfer_eval("zero", zero_transfer(channels), {}); }) == ErrorCode::EmptyInput);
  CHECK(code_of([&] { transfer_eval("zero", zero_transfer({"effort_missing_0"}), target); }) ==
        ErrorCode::MissingChannel);
  CHECK(transfer_csv({row}).rfind("model,mc_mae,ci_halfwidth,raw_mae,n_episodes\nzero,", 0) == 0);
}

TEST_CASE("predictor kinds and network sizes") {
  for (auto k : {PredictorKind::Linear, PredictorKind::FlatMlp, PredictorKind::Tcn, PredictorKind::TcnTransformer,
                 PredictorKind::KinematicZero, PredictorKind::Oracle}) {
    CHECK(parse_predictor_kind(to_string(k)) == k);
  }
  CHECK(code_of([] { parse_predictor_kind("lstm"); }) == ErrorCode::InvalidConfig);
  CHECK(is_learned(PredictorKind::Tcn));
  CHECK_FALSE(is_learned(PredictorKind::Oracle));
  CHECK(make_forecast_network(PredictorKind::Linear)->parameter_count() == 2166);
  CHECK(make_forecast_network(PredictorKind::FlatMlp)->parameter_count() == 54854);
  CHECK(make_forecast_network(PredictorKind::Tcn)->parameter_count() == 32070);
  CHECK(make_forecast_network(PredictorKind::TcnTransformer)->parameter_count() == 99142);
  CHECK(code_of([] { make_forecast_network(PredictorKind::Oracle); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("learned forecaster trains deterministically and round-trips") {
  std::vector<ForecastData> train = {forecast_data(noiseless_episode(11)), forecast_data(noiseless_episode(12))};
  std::vector<ForecastData> val = {forecast_data(noiseless_episode(13))};
  nn::TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.patience = 15;
  cfg.batch_size = 128;
  cfg.lr0 = 3e-3;
  const auto t1 = train_forecaster(PredictorKind::Linear, train, val, cfg, 2, 5);
  const auto t2 = train_forecaster(PredictorKind::Linear, train, val, cfg, 2, 5);
  CHECK(t1.predictor->net().parameters() == t2.predictor->net().parameters());
  CHECK(t1.result.best_val_loss < t1.result.history.front().val_loss);

  const auto set = build_window_set(val, 7);
  const MatrixXd pred = t1.predictor->predict(set.x, set.refs);
  CHECK(pred.rows() == set.x.rows());
  CHECK(pred.cols() == 6);

  TempDir dir("forecast_ckpt");
  save_forecaster(dir / "linear", *t1.predictor);
  const auto back = load_forecaster(dir / "linear");
  CHECK(back->kind() == PredictorKind::Linear);
  CHECK(back->predict(set.x, set.refs) == pred);
  CHECK(code_of([&] { t1.predictor->predict(MatrixXd::Zero(2, 7), {}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { train_forecaster(PredictorKind::Oracle, train, val, cfg); }) == ErrorCode::InvalidConfig);
}
