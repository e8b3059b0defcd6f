#include "layers.hpp"

#include <cmath>

namespace sefc::nn::detail {

Affine LayoutBuilder::affine(Index in, Index out) {
  Affine a{next_, next_ + in * out, in, out};
  next_ += in * out + out;
  return a;
}

Norm LayoutBuilder::norm(Index dim) {
  Norm n{next_, next_ + dim, dim};
  next_ += 2 * dim;
  return n;
}

Conv LayoutBuilder::conv(Index in, Index out, Index kernel, Index dilation) {
  Conv c{next_, next_ + kernel * in * out, in, out, kernel, dilation};
  next_ += kernel * in * out + out;
  return c;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

namespace {

void glorot(VectorXd& p, Index off, Index count, Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index i = 0; i < count; ++i) p(off + i) = limit * (2.0 * uniform01(rng) - 1.0);
}

}  // namespace

void init_affine(VectorXd& p, const Affine& a, std::mt19937_64& rng) {
  glorot(p, a.w, a.in * a.out, a.in, a.out, rng);
  vec(p, a.b, a.out).setZero();
}

void init_conv(VectorXd& p, const Conv& c, std::mt19937_64& rng) {
  glorot(p, c.w, c.kernel * c.in * c.out, c.kernel * c.in, c.kernel * c.out, rng);
  vec(p, c.b, c.out).setZero();
}

void init_norm(VectorXd& p, const Norm& n) {
  vec(p, n.gain, n.dim).setOnes();
  vec(p, n.bias, n.dim).setZero();
}

MatrixXd affine_forward(const VectorXd& p, const Affine& a, const MatrixXd& x) {
  MatrixXd y = x * cmat(p, a.w, a.out, a.in).transpose();
  y.rowwise() += cvec(p, a.b, a.out).transpose();
  return y;
}

MatrixXd affine_backward(const VectorXd& p, const Affine& a, const MatrixXd& x, const MatrixXd& dy, VectorXd& g) {
  mat(g, a.w, a.out, a.in).noalias() += dy.transpose() * x;
  vec(g, a.b, a.out) += dy.colwise().sum().transpose();
  return dy * cmat(p, a.w, a.out, a.in);
}

MatrixXd conv_forward(const VectorXd& p, const Conv& c, const MatrixXd& x) {
  const Index steps = x.rows();
  MatrixXd y(steps, c.out);
  y.rowwise() = cvec(p, c.b, c.out).transpose();
  for (Index k = 0; k < c.kernel; ++k) {
    const Index shift = k * c.dilation;
    if (shift >= steps) break;
    y.bottomRows(steps - shift).noalias() +=
        x.topRows(steps - shift) * cmat(p, c.w + k * c.in * c.out, c.out, c.in).transpose();
  }
  return y;
}

MatrixXd conv_backward(const VectorXd& p, const Conv& c, const MatrixXd& x, const MatrixXd& dy, VectorXd& g) {
  const Index steps = x.rows();
  MatrixXd dx = MatrixXd::Zero(steps, c.in);
  vec(g, c.b, c.out) += dy.colwise().sum().transpose();
  for (Index k = 0; k < c.kernel; ++k) {
    const Index shift = k * c.dilation;
    if (shift >= steps) break;
    const Index off = c.w + k * c.in * c.out;
    mat(g, off, c.out, c.in).noalias() += dy.bottomRows(steps - shift).transpose() * x.topRows(steps - shift);
    dx.topRows(steps - shift).noalias() += dy.bottomRows(steps - shift) * cmat(p, off, c.out, c.in);
  }
  return dx;
}

MatrixXd norm_forward(const VectorXd& p, const Norm& n, const MatrixXd& x, double eps, NormCache* cache) {
  const Index rows = x.rows();
  const double d = static_cast<double>(n.dim);
  MatrixXd xhat(rows, n.dim);
  VectorXd inv(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).sum() / d;
    const double var = (x.row(r).array() - mu).square().sum() / d;
    inv(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv(r);
  }
  MatrixXd y = xhat.array().rowwise() * cvec(p, n.gain, n.dim).transpose().array();
  y.rowwise() += cvec(p, n.bias, n.dim).transpose();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

MatrixXd norm_backward(const VectorXd& p, const Norm& n, const NormCache& cache, const MatrixXd& dy, VectorXd& g) {
  vec(g, n.gain, n.dim) += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
  vec(g, n.bias, n.dim) += dy.colwise().sum().transpose();
  const MatrixXd dxhat = dy.array().rowwise() * cvec(p, n.gain, n.dim).transpose().array();
  const double d = static_cast<double>(n.dim);
  MatrixXd dx(dy.rows(), n.dim);
  for (Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / d;
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx);
  }
  return dx;
}

MatrixXd causal_softmax(const MatrixXd& scores) {
  const Index steps = scores.rows();
  MatrixXd out = MatrixXd::Zero(steps, scores.cols());
  for (Index i = 0; i < steps; ++i) {
    const Index visible = std::min(i + 1, scores.cols());
    const double top = scores.row(i).head(visible).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j < visible; ++j) {
      out(i, j) = std::exp(scores(i, j) - top);
      total += out(i, j);
    }
    out.row(i).head(visible) /= total;
  }
  return out;
}

}  // namespace sefc::nn::detail
