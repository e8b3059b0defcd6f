#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "layers.hpp"
#include "sefc/errors.hpp"
#include "sefc/nn/model.hpp"

namespace sefc::nn {

using namespace detail;
using nlohmann::json;

namespace {

std::string shape(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }

MatrixXd relu(const MatrixXd& z) { return z.cwiseMax(0.0); }

MatrixXd relu_backward(const MatrixXd& z, const MatrixXd& dy) {
  return (z.array() > 0.0).select(dy, MatrixXd::Zero(dy.rows(), dy.cols()));
}

void append_pattern(const MatrixXd& z, std::vector<bool>& out) {
  for (Index i = 0; i < z.size(); ++i) out.push_back(z.data()[i] > 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

double Model::loss(const MatrixXd& x, const MatrixXd& y) const {
  check_targets(x, y);
  const MatrixXd diff = forward(x) - y;
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

void Model::check_batch(const MatrixXd& x) const {
  if (x.cols() != input_dim()) {
    throw Error(ErrorCode::ShapeMismatch,
                kind() + " expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(x.cols()));
  }
}

void Model::check_targets(const MatrixXd& x, const MatrixXd& y) const {
  check_batch(x);
  if (y.rows() != x.rows() || y.cols() != output_dim()) {
    throw Error(ErrorCode::ShapeMismatch, kind() + " targets must be " + shape(x.rows(), output_dim()) + ", got " +
                                              shape(y.rows(), y.cols()));
  }
}

Index dense_parameter_count(const std::vector<Index>& widths) {
  Index total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) total += widths[l] * widths[l + 1] + widths[l + 1];
  return total;
}

// ---------------------------------------------------------------------------
// DenseNet

namespace {

std::vector<Affine> dense_layout(const std::vector<Index>& widths) {
  LayoutBuilder b;
  std::vector<Affine> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) layers.push_back(b.affine(widths[l], widths[l + 1]));
  return layers;
}

}  // namespace

DenseNet::DenseNet(std::vector<Index> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2 || std::any_of(widths_.begin(), widths_.end(), [](Index w) { return w <= 0; })) {
    throw Error(ErrorCode::InvalidConfig, "dense widths need at least input and output, all positive");
  }
  params_ = VectorXd::Zero(dense_parameter_count(widths_));
}

void DenseNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& a : dense_layout(widths_)) init_affine(params_, a, rng);
}

MatrixXd DenseNet::forward(const MatrixXd& x) const {
  check_batch(x);
  const auto layers = dense_layout(widths_);
  MatrixXd h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = affine_forward(params_, layers[l], h);
    if (l + 1 < layers.size()) h = relu(h);
  }
  return h;
}

double DenseNet::loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd& grad) const {
  check_targets(x, y);
  const auto layers = dense_layout(widths_);
  std::vector<MatrixXd> inputs;  // input to each layer
  std::vector<MatrixXd> pre;     // pre-activation of each layer
  MatrixXd h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    inputs.push_back(h);
    pre.push_back(affine_forward(params_, layers[l], h));
    h = l + 1 < layers.size() ? relu(pre.back()) : pre.back();
  }
  const MatrixXd diff = h - y;
  const double scale = 1.0 / static_cast<double>(diff.size());
  grad = VectorXd::Zero(params_.size());
  MatrixXd d = 2.0 * scale * diff;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) d = relu_backward(pre[l], d);
    d = affine_backward(params_, layers[l], inputs[l], d, grad);
  }
  return diff.squaredNorm() * scale;
}

std::vector<bool> DenseNet::activation_pattern(const MatrixXd& x) const {
  check_batch(x);
  const auto layers = dense_layout(widths_);
  std::vector<bool> out;
  MatrixXd h = x;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = affine_forward(params_, layers[l], h);
    append_pattern(h, out);
    h = relu(h);
  }
  return out;
}

json DenseNet::dims() const { return {{"kind", "dense"}, {"widths", widths_}}; }

std::vector<std::pair<std::string, Index>> DenseNet::parameter_breakdown() const {
  std::vector<std::pair<std::string, Index>> out;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    out.emplace_back("dense" + std::to_string(l) + ".weight", widths_[l] * widths_[l + 1]);
    out.emplace_back("dense" + std::to_string(l) + ".bias", widths_[l + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SeqNet

struct SeqNet::Layout {
  std::vector<Conv> convs;
  struct Block {
    Norm ln1;
    Affine q, k, v, o;
    Norm ln2;
    Affine ff1, ff2;
  };
  std::vector<Block> blocks;
  Norm final_norm;
  Affine head;
  Index size = 0;
};

namespace {

struct BlockCache {
  MatrixXd h_in;
  NormCache ln1;
  MatrixXd a;
  MatrixXd q, k, v;
  std::vector<MatrixXd> probs;  // per head
  MatrixXd concat;
  MatrixXd h_mid;
  NormCache ln2;
  MatrixXd b;
  MatrixXd f_pre;
  MatrixXd f_act;
};

struct SeqCache {
  std::vector<MatrixXd> conv_in;
  std::vector<MatrixXd> conv_pre;
  std::vector<BlockCache> blocks;
  MatrixXd pre_final;
  NormCache final_norm;
  MatrixXd head_in;
};

}  // namespace

SeqNet::SeqNet(TcnDims tcn, EncoderDims encoder) : tcn_(std::move(tcn)), encoder_(encoder) {
  if (tcn_.features <= 0 || tcn_.steps <= 0 || tcn_.hidden <= 0 || tcn_.kernel <= 0 || tcn_.outputs <= 0 ||
      tcn_.dilations.empty()) {
    throw Error(ErrorCode::InvalidConfig, "sequence model dims must be positive");
  }
  if (encoder_.blocks < 0 || (encoder_.blocks > 0 && (encoder_.heads <= 0 || tcn_.hidden % encoder_.heads != 0))) {
    throw Error(ErrorCode::InvalidConfig, "hidden width must be divisible by the head count");
  }
  auto layout = std::make_shared<Layout>();
  LayoutBuilder b;
  Index in = tcn_.features;
  for (Index d : tcn_.dilations) {
    layout->convs.push_back(b.conv(in, tcn_.hidden, tcn_.kernel, d));
    in = tcn_.hidden;
  }
  const Index h = tcn_.hidden;
  for (Index i = 0; i < encoder_.blocks; ++i) {
    Layout::Block blk;
    blk.ln1 = b.norm(h);
    blk.q = b.affine(h, h);
    blk.k = b.affine(h, h);
    blk.v = b.affine(h, h);
    blk.o = b.affine(h, h);
    blk.ln2 = b.norm(h);
    blk.ff1 = b.affine(h, encoder_.feedforward);
    blk.ff2 = b.affine(encoder_.feedforward, h);
    layout->blocks.push_back(blk);
  }
  if (encoder_.blocks > 0) layout->final_norm = b.norm(h);
  layout->head = b.affine(h, tcn_.outputs);
  layout->size = b.size();
  layout_ = std::move(layout);
  params_ = VectorXd::Zero(layout_->size);
}

SeqNet SeqNet::tcn_only(TcnDims tcn) {
  EncoderDims none;
  none.blocks = 0;
  return SeqNet(std::move(tcn), none);
}

void SeqNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& c : layout_->convs) init_conv(params_, c, rng);
  for (const auto& blk : layout_->blocks) {
    init_norm(params_, blk.ln1);
    init_affine(params_, blk.q, rng);
    init_affine(params_, blk.k, rng);
    init_affine(params_, blk.v, rng);
    init_affine(params_, blk.o, rng);
    init_norm(params_, blk.ln2);
    init_affine(params_, blk.ff1, rng);
    init_affine(params_, blk.ff2, rng);
  }
  if (encoder_.blocks > 0) init_norm(params_, layout_->final_norm);
  init_affine(params_, layout_->head, rng);
}

namespace {

/// Encoder trunk for one sequence; returns the head input (steps x hidden).
MatrixXd seq_trunk(const VectorXd& p, const SeqNet::Layout& L, const EncoderDims& enc, const MatrixXd& frames,
                   SeqCache* cache) {
  MatrixXd h = frames;
  for (const auto& c : L.convs) {
    MatrixXd pre = conv_forward(p, c, h);
    if (cache) {
      cache->conv_in.push_back(h);
      cache->conv_pre.push_back(pre);
    }
    h = relu(pre);
  }
  const Index steps = h.rows();
  const Index width = h.cols();
  for (const auto& blk : L.blocks) {
    BlockCache bc;
    bc.h_in = h;
    MatrixXd a = norm_forward(p, blk.ln1, h, enc.norm_eps, &bc.ln1);
    MatrixXd q = affine_forward(p, blk.q, a);
    MatrixXd k = affine_forward(p, blk.k, a);
    MatrixXd v = affine_forward(p, blk.v, a);
    const Index dh = width / enc.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    MatrixXd concat(steps, width);
    for (Index hd = 0; hd < enc.heads; ++hd) {
      MatrixXd scores = scale * q.middleCols(hd * dh, dh) * k.middleCols(hd * dh, dh).transpose();
      MatrixXd probs = causal_softmax(scores);
      concat.middleCols(hd * dh, dh) = probs * v.middleCols(hd * dh, dh);
      if (cache) bc.probs.push_back(std::move(probs));
    }
    MatrixXd h_mid = h + affine_forward(p, blk.o, concat);
    MatrixXd b = norm_forward(p, blk.ln2, h_mid, enc.norm_eps, &bc.ln2);
    MatrixXd f_pre = affine_forward(p, blk.ff1, b);
    MatrixXd f_act = relu(f_pre);
    h = h_mid + affine_forward(p, blk.ff2, f_act);
    if (cache) {
      bc.a = std::move(a);
      bc.q = std::move(q);
      bc.k = std::move(k);
      bc.v = std::move(v);
      bc.concat = std::move(concat);
      bc.h_mid = std::move(h_mid);
      bc.b = std::move(b);
      bc.f_pre = std::move(f_pre);
      bc.f_act = std::move(f_act);
      cache->blocks.push_back(std::move(bc));
    }
  }
  if (!L.blocks.empty()) {
    if (cache) cache->pre_final = h;
    h = norm_forward(p, L.final_norm, h, enc.norm_eps, cache ? &cache->final_norm : nullptr);
  }
  if (cache) cache->head_in = h;
  return h;
}

void seq_trunk_backward(const VectorXd& p, const SeqNet::Layout& L, const EncoderDims& enc, const SeqCache& cache,
                        MatrixXd dh, VectorXd& g) {
  if (!L.blocks.empty()) dh = norm_backward(p, L.final_norm, cache.final_norm, dh, g);
  for (std::size_t bi = L.blocks.size(); bi-- > 0;) {
    const auto& blk = L.blocks[bi];
    const auto& bc = cache.blocks[bi];
    // h_out = h_mid + ff2(relu(ff1(ln2(h_mid))))
    MatrixXd d_fact = affine_backward(p, blk.ff2, bc.f_act, dh, g);
    MatrixXd d_fpre = relu_backward(bc.f_pre, d_fact);
    MatrixXd d_b = affine_backward(p, blk.ff1, bc.b, d_fpre, g);
    MatrixXd d_mid = dh + norm_backward(p, blk.ln2, bc.ln2, d_b, g);
    // h_mid = h_in + o(attn(ln1(h_in)))
    MatrixXd d_concat = affine_backward(p, blk.o, bc.concat, d_mid, g);
    const Index width = bc.q.cols();
    const Index dh_head = width / enc.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_head));
    MatrixXd dq = MatrixXd::Zero(bc.q.rows(), width);
    MatrixXd dk = MatrixXd::Zero(bc.k.rows(), width);
    MatrixXd dv = MatrixXd::Zero(bc.v.rows(), width);
    for (Index hd = 0; hd < enc.heads; ++hd) {
      const MatrixXd& probs = bc.probs[static_cast<std::size_t>(hd)];
      const auto d_out = d_concat.middleCols(hd * dh_head, dh_head);
      MatrixXd d_probs = d_out * bc.v.middleCols(hd * dh_head, dh_head).transpose();
      dv.middleCols(hd * dh_head, dh_head) = probs.transpose() * d_out;
      // Softmax Jacobian; masked entries have zero probability and drop out.
      Eigen::VectorXd row_dot = (d_probs.array() * probs.array()).rowwise().sum();
      MatrixXd d_scores = probs.array() * (d_probs.colwise() - row_dot).array();
      dq.middleCols(hd * dh_head, dh_head) = scale * d_scores * bc.k.middleCols(hd * dh_head, dh_head);
      dk.middleCols(hd * dh_head, dh_head) = scale * d_scores.transpose() * bc.q.middleCols(hd * dh_head, dh_head);
    }
    MatrixXd d_a = affine_backward(p, blk.q, bc.a, dq, g);
    d_a += affine_backward(p, blk.k, bc.a, dk, g);
    d_a += affine_backward(p, blk.v, bc.a, dv, g);
    dh = d_mid + norm_backward(p, blk.ln1, bc.ln1, d_a, g);
  }
  for (std::size_t ci = L.convs.size(); ci-- > 0;) {
    dh = relu_backward(cache.conv_pre[ci], dh);
    dh = conv_backward(p, L.convs[ci], cache.conv_in[ci], dh, g);
  }
}

MatrixXd frames_of(const MatrixXd& x, Index row, const TcnDims& t) {
  // Row-major steps x features view of one flattened window.
  MatrixXd frames(t.steps, t.features);
  for (Index s = 0; s < t.steps; ++s) frames.row(s) = x.row(row).segment(s * t.features, t.features);
  return frames;
}

}  // namespace

MatrixXd SeqNet::forward_sequence(const MatrixXd& frames) const {
  if (frames.cols() != tcn_.features) {
    throw Error(ErrorCode::ShapeMismatch,
                kind() + " expects " + std::to_string(tcn_.features) + " features per step, got " + std::to_string(frames.cols()));
  }
  const MatrixXd h = seq_trunk(params_, *layout_, encoder_, frames, nullptr);
  return affine_forward(params_, layout_->head, h);
}

MatrixXd SeqNet::forward(const MatrixXd& x) const {
  check_batch(x);
  MatrixXd out(x.rows(), tcn_.outputs);
  for (Index n = 0; n < x.rows(); ++n) {
    const MatrixXd h = seq_trunk(params_, *layout_, encoder_, frames_of(x, n, tcn_), nullptr);
    out.row(n) = affine_forward(params_, layout_->head, h.bottomRows(1));
  }
  return out;
}

double SeqNet::loss_and_gradient(const MatrixXd& x, const MatrixXd& y, VectorXd& grad) const {
  check_targets(x, y);
  grad = VectorXd::Zero(params_.size());
  const double scale = 1.0 / static_cast<double>(y.size());
  double total = 0.0;
  for (Index n = 0; n < x.rows(); ++n) {
    SeqCache cache;
    const MatrixXd h = seq_trunk(params_, *layout_, encoder_, frames_of(x, n, tcn_), &cache);
    const MatrixXd last = h.bottomRows(1);
    const MatrixXd pred = affine_forward(params_, layout_->head, last);
    const MatrixXd diff = pred - y.row(n);
    total += diff.squaredNorm();
    MatrixXd d_last = affine_backward(params_, layout_->head, last, 2.0 * scale * diff, grad);
    MatrixXd dh = MatrixXd::Zero(h.rows(), h.cols());
    dh.bottomRows(1) = d_last;
    seq_trunk_backward(params_, *layout_, encoder_, cache, std::move(dh), grad);
  }
  return total * scale;
}

std::vector<bool> SeqNet::activation_pattern(const MatrixXd& x) const {
  check_batch(x);
  std::vector<bool> out;
  for (Index n = 0; n < x.rows(); ++n) {
    SeqCache cache;
    seq_trunk(params_, *layout_, encoder_, frames_of(x, n, tcn_), &cache);
    for (const auto& pre : cache.conv_pre) append_pattern(pre, out);
    for (const auto& bc : cache.blocks) append_pattern(bc.f_pre, out);
  }
  return out;
}

json SeqNet::dims() const {
  return {{"kind", kind()},
          {"features", tcn_.features},
          {"steps", tcn_.steps},
          {"hidden", tcn_.hidden},
          {"kernel", tcn_.kernel},
          {"dilations", tcn_.dilations},
          {"outputs", tcn_.outputs},
          {"blocks", encoder_.blocks},
          {"heads", encoder_.heads},
          {"feedforward", encoder_.feedforward},
          {"norm_eps", encoder_.norm_eps}};
}

std::vector<std::pair<std::string, Index>> SeqNet::parameter_breakdown() const {
  std::vector<std::pair<std::string, Index>> out;
  for (std::size_t i = 0; i < layout_->convs.size(); ++i) {
    const auto& c = layout_->convs[i];
    out.emplace_back("conv" + std::to_string(i), c.kernel * c.in * c.out + c.out);
  }
  const Index h = tcn_.hidden;
  for (std::size_t i = 0; i < layout_->blocks.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    out.emplace_back(pre + "norm1", 2 * h);
    out.emplace_back(pre + "attention_qkv", 3 * (h * h + h));
    out.emplace_back(pre + "attention_out", h * h + h);
    out.emplace_back(pre + "norm2", 2 * h);
    out.emplace_back(pre + "feedforward", 2 * h * encoder_.feedforward + encoder_.feedforward + h);
  }
  if (encoder_.blocks > 0) out.emplace_back("final_norm", 2 * h);
  out.emplace_back("head", h * tcn_.outputs + tcn_.outputs);
  return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(const json& dims) {
  try {
    const std::string kind = dims.at("kind").get<std::string>();
    if (kind == "dense") return std::make_unique<DenseNet>(dims.at("widths").get<std::vector<Index>>());
    if (kind == "tcn" || kind == "seqnet") {
      TcnDims t;
      t.features = dims.value("features", t.features);
      t.steps = dims.value("steps", t.steps);
      t.hidden = dims.value("hidden", t.hidden);
      t.kernel = dims.value("kernel", t.kernel);
      t.dilations = dims.value("dilations", t.dilations);
      t.outputs = dims.value("outputs", t.outputs);
      EncoderDims e;
      e.blocks = dims.value("blocks", kind == "tcn" ? Index{0} : e.blocks);
      e.heads = dims.value("heads", e.heads);
      e.feedforward = dims.value("feedforward", e.feedforward);
      e.norm_eps = dims.value("norm_eps", e.norm_eps);
      return std::make_unique<SeqNet>(t, e);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + kind + "'", "kind");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("model dims: ") + e.what());
  }
}

GradCheckResult gradient_check(const Model& model, const MatrixXd& x, const MatrixXd& y,
                               const GradCheckOptions& options) {
  VectorXd analytic;
  const double base_loss = model.loss_and_gradient(x, y, analytic);
  const double noise_floor = options.noise_multiple * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::abs(base_loss)) / options.epsilon;
  auto probe_model = model.clone();
  VectorXd& theta = probe_model->parameters();
  const std::vector<bool> base_pattern = model.activation_pattern(x);
  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  const auto count = static_cast<std::uint64_t>(theta.size());
  for (std::size_t probe = 0; probe < options.probes; ++probe) {
    for (std::size_t attempt = 0; attempt <= options.max_redraws; ++attempt) {
      const auto idx = static_cast<Index>(rng() % count);
      const double saved = theta(idx);
      theta(idx) = saved + options.epsilon;
      const bool plus_ok = probe_model->activation_pattern(x) == base_pattern;
      const double loss_plus = probe_model->loss(x, y);
      theta(idx) = saved - options.epsilon;
      const bool minus_ok = probe_model->activation_pattern(x) == base_pattern;
      const double loss_minus = probe_model->loss(x, y);
      theta(idx) = saved;
      if (!plus_ok || !minus_ok) {
        ++result.probes_rejected;
        continue;
      }
      const double numeric = (loss_plus - loss_minus) / (2.0 * options.epsilon);
      const double a = analytic(idx);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor, noise_floor});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.probes_used;
      break;
    }
  }
  return result;
}

}  // namespace sefc::nn
