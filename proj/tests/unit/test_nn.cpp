#include <cmath>
#include <random>

#include "doctest.h"
#include "sefc/errors.hpp"
#include "sefc/nn/checkpoint.hpp"
#include "sefc/nn/model.hpp"
#include "sefc/nn/train.hpp"
#include "support.hpp"

using namespace sefc;
using namespace sefc::nn;
using namespace sefc::testing;

namespace {

MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Index affine_count(Index in, Index out) { return in * out + out; }
Index conv_count(Index in, Index out, Index kernel) { return in * out * kernel + out; }
Index norm_count(Index dim) { return 2 * dim; }

Index tcn_count(const TcnDims& t) {
  Index n = 0;
  Index in = t.features;
  for (std::size_t i = 0; i < t.dilations.size(); ++i) {
    n += conv_count(in, t.hidden, t.kernel);
    in = t.hidden;
  }
  return n + affine_count(t.hidden, t.outputs);
}

Index seqnet_count(const TcnDims& t, const EncoderDims& e) {
  const Index h = t.hidden;
  const Index block = 2 * norm_count(h) + 4 * affine_count(h, h) + affine_count(h, e.feedforward) +
                      affine_count(e.feedforward, h);
  return tcn_count(t) + e.blocks * block + (e.blocks > 0 ? norm_count(h) : 0);
}

TcnDims small_tcn() {
  TcnDims t;
  t.features = 5;
  t.steps = 6;
  t.hidden = 8;
  t.kernel = 3;
  t.dilations = {1, 2};
  t.outputs = 3;
  return t;
}

EncoderDims small_encoder() {
  EncoderDims e;
  e.blocks = 2;
  e.heads = 2;
  e.feedforward = 12;
  return e;
}

}  // namespace

TEST_CASE("parameter counts follow the layer shapes") {
  const std::vector<Index> widths{18, 512, 256, 128, 6};
  const Index expected = affine_count(18, 512) + affine_count(512, 256) + affine_count(256, 128) + affine_count(128, 6);
  CHECK(expected == 174726);
  CHECK(dense_parameter_count(widths) == expected);
  CHECK(DenseNet(widths).parameter_count() == expected);
  CHECK(DenseNet({360, 128, 64, 6}).parameter_count() == 54854);
  CHECK(DenseNet({360, 6}).parameter_count() == 2166);

  const TcnDims t;
  CHECK(SeqNet::tcn_only(t).parameter_count() == tcn_count(t));
  CHECK(tcn_count(t) == 32070);
  const EncoderDims e;
  CHECK(SeqNet(t, e).parameter_count() == seqnet_count(t, e));
  CHECK(seqnet_count(t, e) == 99142);

  const SeqNet s(t, e);
  Index sum = 0;
  for (const auto& [name, n] : s.parameter_breakdown()) sum += n;
  CHECK(sum == s.parameter_count());
}

TEST_CASE("invalid model dims") {
  CHECK_THROWS_AS(DenseNet({4}), Error);
  TcnDims t = small_tcn();
  EncoderDims e = small_encoder();
  e.heads = 3;  // 8 is not divisible by 3
  CHECK_THROWS_AS(SeqNet(t, e), Error);
  CHECK_THROWS_AS(make_model({{"kind", "resnet"}}), Error);
}

TEST_CASE("loss is the mean squared error of the forward pass") {
  DenseNet net({4, 7, 3});
  net.initialize(1);
  const MatrixXd x = random_matrix(9, 4, 2);
  const MatrixXd y = random_matrix(9, 3, 3);
  const double oracle = (net.forward(x) - y).array().square().mean();
  CHECK(std::abs(net.loss(x, y) - oracle) <= 1e-14);
  VectorXd g;
  CHECK(std::abs(net.loss_and_gradient(x, y, g) - oracle) <= 1e-14);
  CHECK(g.size() == net.parameter_count());
  CHECK_THROWS_AS(net.forward(random_matrix(2, 5, 1)), Error);
}

TEST_CASE("dense network gradients match central differences") {
  DenseNet net({6, 16, 12, 4});
  net.initialize(7);
  const MatrixXd x = random_matrix(20, 6, 8);
  const MatrixXd y = random_matrix(20, 4, 9);
  GradCheckOptions o;
  o.probes = 150;
  const auto r = gradient_check(net, x, y, o);
  CHECK(r.probes_used == 150);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("tcn gradients match central differences") {
  SeqNet net = SeqNet::tcn_only(small_tcn());
  net.initialize(3);
  const MatrixXd x = random_matrix(5, net.input_dim(), 4);
  const MatrixXd y = random_matrix(5, net.output_dim(), 5);
  const auto r = gradient_check(net, x, y);
  CHECK(r.probes_used == 200);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("tcn-transformer gradients match central differences") {
  SeqNet net(small_tcn(), small_encoder());
  net.initialize(11);
  const MatrixXd x = random_matrix(4, net.input_dim(), 12);
  const MatrixXd y = random_matrix(4, net.output_dim(), 13);
  GradCheckOptions o;
  o.probes = 300;
  const auto r = gradient_check(net, x, y, o);
  CHECK(r.probes_used == 300);
  CHECK(r.max_relative_error < 5e-5);
}

TEST_CASE("sequence model is causal and predicts from the last frame") {
  SeqNet net(small_tcn(), small_encoder());
  net.initialize(21);
  const auto& t = net.tcn_dims();
  MatrixXd frames = random_matrix(t.steps, t.features, 22);
  const MatrixXd before = net.forward_sequence(frames);
  frames.row(t.steps - 1).setConstant(5.0);
  const MatrixXd after = net.forward_sequence(frames);
  CHECK((before.topRows(t.steps - 1) - after.topRows(t.steps - 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((before.row(t.steps - 1) - after.row(t.steps - 1)).cwiseAbs().maxCoeff() > 0.0);

  // Step-major flattening of the frames is one input row.
  MatrixXd row(1, net.input_dim());
  for (Index s = 0; s < t.steps; ++s) row.block(0, s * t.features, 1, t.features) = frames.row(s);
  CHECK((net.forward(row) - after.row(t.steps - 1)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("initialization is deterministic and Glorot-bounded") {
  DenseNet a({10, 20, 5});
  DenseNet b({10, 20, 5});
  a.initialize(4);
  b.initialize(4);
  CHECK(a.parameters() == b.parameters());
  b.initialize(5);
  CHECK(a.parameters() != b.parameters());
  const double bound = std::sqrt(6.0 / 30.0);
  CHECK(a.parameters().head(200).cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("adam step matches the closed form") {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.weight_decay = 0.0;
  VectorXd theta(3);
  theta << 1.0, -2.0, 0.5;
  VectorXd g(3);
  g << 0.3, -0.1, 2.0;
  AdamState s = make_adam_state(3);
  const double lr = 0.01;
  VectorXd p = theta;
  // With a constant gradient the bias-corrected moments are g and g², so each step is −lr·g/(|g| + ε).
  for (int step = 1; step <= 3; ++step) {
    optimizer_step(s, p, g, cfg, lr);
    for (Index i = 0; i < 3; ++i) {
      const double expect = theta(i) - step * lr * g(i) / (std::abs(g(i)) + cfg.epsilon);
      CHECK(std::abs(p(i) - expect) <= 1e-14);
    }
  }
  CHECK(s.t == 3);

  // Two different gradients: explicit moment recursion.
  VectorXd g2(3);
  g2 << -0.5, 0.2, 1.0;
  AdamState s2 = make_adam_state(3);
  VectorXd q = theta;
  optimizer_step(s2, q, g, cfg, lr);
  optimizer_step(s2, q, g2, cfg, lr);
  for (Index i = 0; i < 3; ++i) {
    const double m = cfg.beta1 * (1 - cfg.beta1) * g(i) + (1 - cfg.beta1) * g2(i);
    const double v = cfg.beta2 * (1 - cfg.beta2) * g(i) * g(i) + (1 - cfg.beta2) * g2(i) * g2(i);
    const double mh = m / (1 - cfg.beta1 * cfg.beta1);
    const double vh = v / (1 - cfg.beta2 * cfg.beta2);
    const double first = theta(i) - lr * g(i) / (std::abs(g(i)) + cfg.epsilon);
    CHECK(std::abs(q(i) - (first - lr * mh / (std::sqrt(vh) + cfg.epsilon))) <= 1e-14);
  }
}

TEST_CASE("weight decay: coupled for Adam, decoupled for AdamW") {
  VectorXd theta(2);
  theta << 2.0, -1.0;
  VectorXd g(2);
  g << 0.5, 0.25;
  const double lr = 0.1;

  TrainConfig adam;
  adam.optimizer = OptimizerKind::Adam;
  adam.weight_decay = 0.1;
  VectorXd p = theta;
  AdamState s = make_adam_state(2);
  optimizer_step(s, p, g, adam, lr);
  for (Index i = 0; i < 2; ++i) {
    const double ge = g(i) + 0.1 * theta(i);
    CHECK(std::abs(p(i) - (theta(i) - lr * ge / (std::abs(ge) + adam.epsilon))) <= 1e-14);
  }

  TrainConfig adamw = adam;
  adamw.optimizer = OptimizerKind::AdamW;
  VectorXd w = theta;
  AdamState sw = make_adam_state(2);
  optimizer_step(sw, w, g, adamw, lr);
  for (Index i = 0; i < 2; ++i) {
    const double shrunk = theta(i) * (1.0 - lr * 0.1);
    CHECK(std::abs(w(i) - (shrunk - lr * g(i) / (std::abs(g(i)) + adamw.epsilon))) <= 1e-14);
  }
}

TEST_CASE("cosine schedule") {
  TrainConfig c;
  c.lr0 = 1e-3;
  c.max_epochs = 100;
  CHECK(learning_rate(c, 0) == 1e-3);
  CHECK(std::abs(learning_rate(c, 50) - 5e-4) <= 1e-18);
  CHECK(std::abs(learning_rate(c, 100)) <= 1e-18);
  CHECK(learning_rate(c, 25) > learning_rate(c, 26));
  c.schedule = Schedule::Constant;
  CHECK(learning_rate(c, 77) == 1e-3);
}

TEST_CASE("train config validation and json") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = c;
  bad.patience = c.max_epochs + 1;
  CHECK_THROWS_AS(validate(bad), Error);
  c.optimizer = OptimizerKind::AdamW;
  c.batch_size = 17;
  c.seed = 5;
  const auto back = train_config_from_json(train_config_to_json(c));
  CHECK(back.optimizer == OptimizerKind::AdamW);
  CHECK(back.batch_size == 17);
  CHECK(back.seed == 5);
  CHECK(back.lr0 == c.lr0);
}

TEST_CASE("training fits a linear map, restores the best epoch and is deterministic") {
  const MatrixXd x = random_matrix(256, 3, 30);
  MatrixXd w(3, 2);
  w << 1.0, -0.5, 2.0, 0.25, -1.5, 1.0;
  const MatrixXd y = x * w;
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.patience = 60;
  cfg.weight_decay = 0.0;
  cfg.seed = 3;

  auto run = [&] {
    DenseNet net({3, 2});
    net.initialize(1);
    const auto result = train(net, x.topRows(200), y.topRows(200), x.bottomRows(56), y.bottomRows(56), cfg);
    return std::make_pair(net.parameters(), result);
  };
  const auto [p1, r1] = run();
  const auto [p2, r2] = run();
  CHECK(p1 == p2);
  REQUIRE(r1.history.size() == 60);
  CHECK(r1.history.front().train_loss > r1.history.back().train_loss);
  CHECK(r1.best_val_loss < 1e-4);
  double best = r1.history.front().val_loss;
  for (const auto& h : r1.history) best = std::min(best, h.val_loss);
  CHECK(r1.best_val_loss == best);
  DenseNet check({3, 2});
  check.parameters() = p1;
  CHECK(std::abs(check.loss(x.bottomRows(56), y.bottomRows(56)) - r1.best_val_loss) <= 1e-12);
}

TEST_CASE("early stopping honours patience") {
  const MatrixXd x = random_matrix(64, 2, 40);
  const MatrixXd y = random_matrix(64, 1, 41);  // pure noise: validation stops improving quickly
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.batch_size = 16;
  cfg.max_epochs = 200;
  cfg.patience = 5;
  DenseNet net({2, 16, 1});
  net.initialize(2);
  const auto r = train(net, x.topRows(48), y.topRows(48), x.bottomRows(16), y.bottomRows(16), cfg);
  CHECK(r.history.size() < 200);
  CHECK(r.history.size() == r.best_epoch + cfg.patience + 1);
}

TEST_CASE("training input errors") {
  DenseNet net({2, 1});
  net.initialize(0);
  TrainConfig cfg;
  CHECK_THROWS_AS(train(net, MatrixXd(0, 2), MatrixXd(0, 1), MatrixXd(0, 2), MatrixXd(0, 1), cfg), Error);
  CHECK_THROWS_AS(train(net, MatrixXd::Zero(4, 3), MatrixXd::Zero(4, 1), MatrixXd::Zero(2, 3), MatrixXd::Zero(2, 1), cfg),
                  Error);
}

TEST_CASE("checkpoint round trip is exact") {
  TempDir dir("nn_ckpt");
  SeqNet net(small_tcn(), small_encoder());
  net.initialize(9);
  const nlohmann::json extra = {{"note", "x"}, {"scale", 2.5}};
  save_checkpoint(dir / "model", net, extra);
  const auto ck = load_checkpoint(dir / "model");
  CHECK(ck.model->kind() == "seqnet");
  CHECK(ck.model->parameters() == net.parameters());
  CHECK(ck.model->dims() == net.dims());
  CHECK(ck.extra == extra);
  const MatrixXd x = random_matrix(3, net.input_dim(), 10);
  CHECK(ck.model->forward(x) == net.forward(x));

  DenseNet dense({3, 4, 2});
  dense.initialize(1);
  save_checkpoint(dir / "dense", dense, {});
  auto text = read_text(checkpoint_params_path(dir / "dense"));
  write_text(checkpoint_params_path(dir / "dense"), text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  try {
    load_checkpoint(dir / "dense");
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "absent"), Error);
}
