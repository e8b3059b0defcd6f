#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sefc/errors.hpp"
#include "sefc/nn/train.hpp"

namespace sefc::nn {

namespace {

MatrixXd gather_rows(const MatrixXd& m, const std::vector<Index>& order, std::size_t begin, std::size_t end) {
  MatrixXd out(static_cast<Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = m.row(order[i]);
  return out;
}

void shuffle(std::vector<Index>& order, std::mt19937_64& rng) {
  // Fisher–Yates with an explicit index draw so the permutation does not depend on the standard library.
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

TrainResult train(Model& model, const MatrixXd& x_train, const MatrixXd& y_train, const MatrixXd& x_val,
                  const MatrixXd& y_val, const TrainConfig& config) {
  validate(config);
  if (x_train.rows() == 0 || x_val.rows() == 0) {
    throw Error(ErrorCode::EmptyDataset, x_train.rows() == 0 ? "training set is empty" : "validation set is empty");
  }
  if (y_train.rows() != x_train.rows() || y_val.rows() != x_val.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "inputs and targets have different row counts");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(x_train.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  AdamState state = make_adam_state(model.parameter_count());
  VectorXd grad;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  VectorXd best = model.parameters();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    shuffle(order, rng);
    double weighted = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const MatrixXd xb = gather_rows(x_train, order, begin, end);
      const MatrixXd yb = gather_rows(y_train, order, begin, end);
      const double batch_loss = model.loss_and_gradient(xb, yb, grad);
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::NumericalInstability, "training loss diverged in epoch " + std::to_string(epoch));
      }
      weighted += batch_loss * static_cast<double>(end - begin);
      optimizer_step(state, model.parameters(), grad, config, lr);
    }
    const double val_loss = model.loss(x_val, y_val);
    result.history.push_back({epoch, lr, weighted / static_cast<double>(order.size()), val_loss});
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = model.parameters();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= config.patience) break;
  }
  model.parameters() = best;
  return result;
}

}  // namespace sefc::nn
