#pragma once

// Building blocks shared by the models. Weights are column-major views into
// the flat parameter vector; gradients use the same offsets.

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace sefc::nn::detail {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMat = Eigen::Map<const MatrixXd>;
using Mat = Eigen::Map<MatrixXd>;
using ConstVec = Eigen::Map<const VectorXd>;
using Vec = Eigen::Map<VectorXd>;

inline ConstMat cmat(const VectorXd& p, Index off, Index rows, Index cols) { return {p.data() + off, rows, cols}; }
inline Mat mat(VectorXd& p, Index off, Index rows, Index cols) { return {p.data() + off, rows, cols}; }
inline ConstVec cvec(const VectorXd& p, Index off, Index n) { return {p.data() + off, n}; }
inline Vec vec(VectorXd& p, Index off, Index n) { return {p.data() + off, n}; }

/// Offsets of one affine map y = W x + b with W stored out x in.
struct Affine {
  Index w = 0;
  Index b = 0;
  Index in = 0;
  Index out = 0;
};

struct Norm {
  Index gain = 0;
  Index bias = 0;
  Index dim = 0;
};

/// Dilated causal 1-D convolution: y_t = b + Σ_k W_k x_{t − k·dilation}.
struct Conv {
  Index w = 0;  // kernel blocks of out x in
  Index b = 0;
  Index in = 0;
  Index out = 0;
  Index kernel = 0;
  Index dilation = 1;
};

/// Hands out consecutive parameter ranges.
class LayoutBuilder {
 public:
  Affine affine(Index in, Index out);
  Norm norm(Index dim);
  Conv conv(Index in, Index out, Index kernel, Index dilation);
  Index size() const { return next_; }

 private:
  Index next_ = 0;
};

/// Per-sequence intermediates of a layer norm.
struct NormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

/// Glorot-uniform fill of W, zero bias.
void init_affine(VectorXd& p, const Affine& a, std::mt19937_64& rng);
void init_conv(VectorXd& p, const Conv& c, std::mt19937_64& rng);
void init_norm(VectorXd& p, const Norm& n);

MatrixXd affine_forward(const VectorXd& p, const Affine& a, const MatrixXd& x);
/// Accumulates dW, db into `g`; returns dx.
MatrixXd affine_backward(const VectorXd& p, const Affine& a, const MatrixXd& x, const MatrixXd& dy, VectorXd& g);

MatrixXd conv_forward(const VectorXd& p, const Conv& c, const MatrixXd& x);
MatrixXd conv_backward(const VectorXd& p, const Conv& c, const MatrixXd& x, const MatrixXd& dy, VectorXd& g);

MatrixXd norm_forward(const VectorXd& p, const Norm& n, const MatrixXd& x, double eps, NormCache* cache);
MatrixXd norm_backward(const VectorXd& p, const Norm& n, const NormCache& cache, const MatrixXd& dy, VectorXd& g);

/// Row-wise softmax with entries above the diagonal masked out.
MatrixXd causal_softmax(const MatrixXd& scores);

double uniform01(std::mt19937_64& rng);

}  // namespace sefc::nn::detail
