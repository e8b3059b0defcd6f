#pragma once

/**
 * Differentiable regressors over a flat 64-bit parameter vector.
 *
 * Every model maps an N x input_dim batch to N x output_dim. Sequence models
 * read each input row as `steps` consecutive frames of `features` values
 * (step-major) and predict from the last frame.
 */

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace sefc::nn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual Index input_dim() const = 0;
  virtual Index output_dim() const = 0;

  Index parameter_count() const { return params_.size(); }
  VectorXd& parameters() { return params_; }
  const VectorXd& parameters() const { return params_; }

  /// Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases, unit norm gains.
  virtual void initialize(std::uint64_t seed) = 0;

  /// Errors: ShapeMismatch.
  virtual MatrixXd forward(const MatrixXd& x) const = 0;

  /// Mean squared error over all rows and outputs; `grad` receives dLoss/dθ.
  /// Errors: ShapeMismatch.
  virtual double loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd& grad) const = 0;

  /// On/off state of every ReLU for this batch; identical patterns mean the
  /// loss is smooth between the two parameter vectors.
  virtual std::vector<bool> activation_pattern(const MatrixXd& x) const = 0;

  /// Architecture description, sufficient for make_model.
  virtual nlohmann::json dims() const = 0;

  /// Named parameter groups and their sizes, in storage order.
  virtual std::vector<std::pair<std::string, Index>> parameter_breakdown() const = 0;

  double loss(const MatrixXd& x, const MatrixXd& y) const;

 protected:
  void check_batch(const MatrixXd& x) const;
  void check_targets(const MatrixXd& x, const MatrixXd& y) const;

  VectorXd params_;
};

/// Fully connected ReLU network; no activation after the last layer.
class DenseNet final : public Model {
 public:
  explicit DenseNet(std::vector<Index> widths);

  std::string kind() const override { return "dense"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<DenseNet>(*this); }
  Index input_dim() const override { return widths_.front(); }
  Index output_dim() const override { return widths_.back(); }
  void initialize(std::uint64_t seed) override;
  MatrixXd forward(const MatrixXd& x) const override;
  double loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd& grad) const override;
  std::vector<bool> activation_pattern(const MatrixXd& x) const override;
  nlohmann::json dims() const override;
  std::vector<std::pair<std::string, Index>> parameter_breakdown() const override;

  const std::vector<Index>& widths() const { return widths_; }

 private:
  std::vector<Index> widths_;
};

struct TcnDims {
  Index features = 36;
  Index steps = 10;
  Index hidden = 64;
  Index kernel = 3;
  std::vector<Index> dilations{1, 2, 4};
  Index outputs = 6;
};

struct EncoderDims {
  Index blocks = 2;
  Index heads = 4;
  Index feedforward = 128;
  double norm_eps = 1e-5;
};

/**
 * Dilated causal convolutions (ReLU after each) followed by an optional stack
 * of pre-norm causal self-attention blocks, a final layer norm when blocks are
 * present, and a per-step linear head. With zero blocks this is the plain TCN
 * baseline; with the default encoder it is the TCN-Transformer.
 */
class SeqNet final : public Model {
 public:
  SeqNet(TcnDims tcn, EncoderDims encoder);
  static SeqNet tcn_only(TcnDims tcn);

  std::string kind() const override { return encoder_.blocks == 0 ? "tcn" : "seqnet"; }
  std::unique_ptr<Model> clone() const override { return std::make_unique<SeqNet>(*this); }
  Index input_dim() const override { return tcn_.steps * tcn_.features; }
  Index output_dim() const override { return tcn_.outputs; }
  void initialize(std::uint64_t seed) override;
  MatrixXd forward(const MatrixXd& x) const override;
  double loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd& grad) const override;
  std::vector<bool> activation_pattern(const MatrixXd& x) const override;
  nlohmann::json dims() const override;
  std::vector<std::pair<std::string, Index>> parameter_breakdown() const override;

  /// steps x features in, steps x outputs out; row t depends on rows <= t only.
  MatrixXd forward_sequence(const MatrixXd& frames) const;

  const TcnDims& tcn_dims() const { return tcn_; }
  const EncoderDims& encoder_dims() const { return encoder_; }

  /// Parameter offsets; opaque outside the implementation.
  struct Layout;

 private:
  TcnDims tcn_;
  EncoderDims encoder_;
  std::shared_ptr<const Layout> layout_;
};

/// Builds an uninitialised model from `Model::dims()` output.
/// Errors: InvalidConfig.
std::unique_ptr<Model> make_model(const nlohmann::json& dims);

/// Parameter count of a dense network with the given widths.
Index dense_parameter_count(const std::vector<Index>& widths);

struct GradCheckOptions {
  std::size_t probes = 200;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
  /// Denominator floor: relative error is |a − n| / max(|a|, |n|, floor, noise floor).
  double floor = 1e-6;
  /// The noise floor is noise_multiple·u·max(1, |loss|)/epsilon with u the unit roundoff.
  /// Central differences cannot resolve gradients below it; attention key biases,
  /// for one, have an exactly zero gradient.
  double noise_multiple = 1e5;
  /// Redraws allowed for probes that straddle a ReLU kink, per probe.
  std::size_t max_redraws = 50;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t probes_used = 0;
  std::size_t probes_rejected = 0;
};

/// Central differences on randomly chosen parameters. A probe is rejected
/// when θ ± ε changes any ReLU on/off state.
GradCheckResult gradient_check(const Model& model, const MatrixXd& x, const MatrixXd& y,
                               const GradCheckOptions& options = {});

}  // namespace sefc::nn
