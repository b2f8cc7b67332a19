#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/io.hpp"
#include "echelon/rng.hpp"

namespace echelon {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Act { relu, tanh_fn, identity };

struct DenseLayer {
  Mat weight;  // in x out
  Vec bias;    // out
  Act act = Act::identity;
};

struct DenseNet {
  std::vector<DenseLayer> layers;

  int input_dim() const { return static_cast<int>(layers.front().weight.rows()); }
  int output_dim() const { return static_cast<int>(layers.back().weight.cols()); }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }
};

inline Mat xavier_uniform(int rows, int cols, Rng& rng, double gain = 1.0) {
  const double limit =
      gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat w(rows, cols);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
  return w;
}

// dims = {in, h1, ..., out}; hidden layers use `hidden`, last layer `output`.
// The final layer's weights can be scaled down (common for policy heads).
inline DenseNet make_mlp(const std::vector<int>& dims, Act hidden, Act output,
                         Rng& rng, double last_layer_scale = 1.0) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need >= 2 dims");
  DenseNet net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    DenseLayer layer;
    layer.weight = xavier_uniform(dims[i], dims[i + 1], rng,
                                  last ? last_layer_scale : 1.0);
    layer.bias = Vec::Zero(dims[i + 1]);
    layer.act = last ? output : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace detail {

inline void apply_activation(Act act, Mat& z) {
  switch (act) {
    case Act::relu:
      z = z.cwiseMax(0.0);
      break;
    case Act::tanh_fn:
      z = z.array().tanh().matrix();
      break;
    case Act::identity:
      break;
  }
}

// dZ = dY (.) act'(Z), using pre-activation z and activated value y
inline Mat activation_backward(Act act, const Mat& z, const Mat& y,
                               const Mat& dy) {
  switch (act) {
    case Act::relu:
      return (z.array() > 0.0).select(dy.array(), 0.0).matrix();
    case Act::tanh_fn:
      return (dy.array() * (1.0 - y.array().square())).matrix();
    case Act::identity:
      return dy;
  }
  return dy;
}

}  // namespace detail

// Records the per-layer inputs and pre-activations needed for backward.
struct Tape {
  std::vector<Mat> inputs;  // X per layer, batch x in
  std::vector<Mat> pre;     // Z per layer, batch x out
  std::vector<Mat> post;    // activated output per layer
};

// Batched forward: X is batch x input_dim, one sample per row.
inline Mat forward(const DenseNet& net, const Mat& x, Tape* tape = nullptr) {
  if (x.cols() != net.input_dim())
    throw std::invalid_argument("forward: input dim mismatch");
  if (!x.allFinite())
    throw std::invalid_argument("forward: non-finite input");
  Mat h = x;
  for (const auto& layer : net.layers) {
    Mat z = h * layer.weight;
    z.rowwise() += layer.bias.transpose();
    if (tape) {
      tape->inputs.push_back(h);
      tape->pre.push_back(z);
    }
    detail::apply_activation(layer.act, z);
    if (tape) tape->post.push_back(z);
    h = std::move(z);
  }
  return h;
}

inline Vec forward_vec(const DenseNet& net, const Vec& x, Tape* tape = nullptr) {
  const Mat y = forward(net, x.transpose(), tape);
  return y.row(0).transpose();
}

struct Grads {
  std::vector<Mat> weight;
  std::vector<Vec> bias;

  static Grads zeros_like(const DenseNet& net) {
    Grads g;
    for (const auto& l : net.layers) {
      g.weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      g.bias.push_back(Vec::Zero(l.bias.size()));
    }
    return g;
  }
  bool all_finite() const {
    for (const auto& w : weight)
      if (!w.allFinite()) return false;
    for (const auto& b : bias)
      if (!b.allFinite()) return false;
    return true;
  }
};

// Reverse pass; dY is batch x output_dim. Accumulates into `grads` and
// returns the gradient w.r.t. the input batch.
inline Mat backward(const DenseNet& net, const Tape& tape, const Mat& dy,
                    Grads& grads) {
  if (tape.inputs.size() != net.layers.size())
    throw std::invalid_argument("backward: tape does not match net");
  if (dy.rows() != tape.pre.back().rows() ||
      dy.cols() != tape.pre.back().cols())
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  Mat delta = dy;
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const auto ul = static_cast<std::size_t>(li);
    const auto& layer = net.layers[ul];
    delta = detail::activation_backward(layer.act, tape.pre[ul],
                                        tape.post[ul], delta);
    grads.weight[ul].noalias() += tape.inputs[ul].transpose() * delta;
    grads.bias[ul].noalias() += delta.colwise().sum().transpose();
    if (li > 0) delta = (delta * layer.weight.transpose()).eval();
  }
  return delta * net.layers.front().weight.transpose();
}

// --- Adam with decoupled weight decay ---

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

namespace detail {

inline void adam_update(Eigen::Ref<Mat> param, const Mat& grad, Mat& m, Mat& v,
                        long t, const AdamConfig& cfg, double decay) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param.array() -= cfg.lr * (m.array() / bc1) /
                   ((v.array() / bc2).sqrt() + cfg.eps);
  if (decay > 0.0) param.array() -= cfg.lr * decay * param.array();
}

}  // namespace detail

struct AdamState {
  std::vector<Mat> m_weight, v_weight;
  std::vector<Mat> m_bias, v_bias;
  long t = 0;
  AdamConfig cfg;

  static AdamState init(const DenseNet& net, const AdamConfig& cfg = {}) {
    AdamState s;
    s.cfg = cfg;
    for (const auto& l : net.layers) {
      s.m_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      s.v_weight.push_back(Mat::Zero(l.weight.rows(), l.weight.cols()));
      s.m_bias.push_back(Mat::Zero(l.bias.size(), 1));
      s.v_bias.push_back(Mat::Zero(l.bias.size(), 1));
    }
    return s;
  }
};

// One optimizer step. Non-finite gradients reject the update and return
// false; parameters and moments are left untouched. Weight decay applies to
// weight matrices only.
inline bool adam_step(DenseNet& net, const Grads& grads, AdamState& state) {
  if (!grads.all_finite()) return false;
  state.t += 1;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    detail::adam_update(net.layers[i].weight, grads.weight[i],
                        state.m_weight[i], state.v_weight[i], state.t,
                        state.cfg, state.cfg.weight_decay);
    Mat bias_mat = net.layers[i].bias;
    detail::adam_update(bias_mat, Mat(grads.bias[i]), state.m_bias[i],
                        state.v_bias[i], state.t, state.cfg, 0.0);
    net.layers[i].bias = bias_mat.col(0);
  }
  return true;
}

// Adam over a single flat vector (used for the learned log-std).
struct AdamVecState {
  Mat m, v;
  long t = 0;
  AdamConfig cfg;

  static AdamVecState init(const Vec& p, const AdamConfig& cfg = {}) {
    AdamVecState s;
    s.cfg = cfg;
    s.m = Mat::Zero(p.size(), 1);
    s.v = Mat::Zero(p.size(), 1);
    return s;
  }
};

inline bool adam_step_vec(Vec& param, const Vec& grad, AdamVecState& state,
                          double decay = 0.0) {
  if (!grad.allFinite()) return false;
  state.t += 1;
  Mat p = param;
  detail::adam_update(p, Mat(grad), state.m, state.v, state.t, state.cfg,
                      decay);
  param = p.col(0);
  return true;
}

// --- Diagonal Gaussian head ---

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 1.0;
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

inline Vec clamp_log_std(const Vec& log_std) {
  return log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

inline double gaussian_log_prob(const Vec& mean, const Vec& log_std,
                                const Vec& action) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double ls = log_std(k);
    const double z = (action(k) - mean(k)) * std::exp(-ls);
    lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
  }
  return lp;
}

inline double gaussian_entropy(const Vec& log_std) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < log_std.size(); ++k)
    h += 0.5 * (kLog2Pi + 1.0) + log_std(k);
  return h;
}

inline std::pair<double, double> gaussian_logprob_entropy(const Vec& mean,
                                                          const Vec& log_std,
                                                          const Vec& action) {
  return {gaussian_log_prob(mean, log_std, action),
          gaussian_entropy(log_std)};
}

// d log p / d mean and d log p / d log_std at a fixed action
inline void gaussian_log_prob_grad(const Vec& mean, const Vec& log_std,
                                   const Vec& action, Vec& d_mean,
                                   Vec& d_log_std) {
  d_mean.resize(mean.size());
  d_log_std.resize(mean.size());
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double inv_var = std::exp(-2.0 * log_std(k));
    const double diff = action(k) - mean(k);
    d_mean(k) = diff * inv_var;
    d_log_std(k) = diff * diff * inv_var - 1.0;
  }
}

// KL(old || new) between diagonal Gaussians
inline double gaussian_kl(const Vec& mu_old, const Vec& ls_old,
                          const Vec& mu_new, const Vec& ls_new) {
  double kl = 0.0;
  for (Eigen::Index k = 0; k < mu_old.size(); ++k) {
    const double var_old = std::exp(2.0 * ls_old(k));
    const double var_new = std::exp(2.0 * ls_new(k));
    const double diff = mu_new(k) - mu_old(k);
    kl += ls_new(k) - ls_old(k) +
          0.5 * (var_old + diff * diff) / var_new - 0.5;
  }
  return kl;
}

// gradients of KL(old || new) w.r.t. the new mean and log-std
inline void gaussian_kl_grad(const Vec& mu_old, const Vec& ls_old,
                             const Vec& mu_new, const Vec& ls_new, Vec& d_mu,
                             Vec& d_ls) {
  d_mu.resize(mu_old.size());
  d_ls.resize(mu_old.size());
  for (Eigen::Index k = 0; k < mu_old.size(); ++k) {
    const double var_old = std::exp(2.0 * ls_old(k));
    const double var_new = std::exp(2.0 * ls_new(k));
    const double diff = mu_new(k) - mu_old(k);
    d_mu(k) = diff / var_new;
    d_ls(k) = 1.0 - (var_old + diff * diff) / var_new;
  }
}

// --- checkpoint helpers ---

inline void put_dense_net(CheckpointWriter& w, const std::string& prefix,
                          const DenseNet& net) {
  w.put_scalar(prefix + ".layers", static_cast<double>(net.layers.size()));
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    w.put(base + ".W", net.layers[i].weight);
    w.put(base + ".b", net.layers[i].bias);
    w.put_scalar(base + ".act", static_cast<double>(net.layers[i].act));
  }
}

inline DenseNet get_dense_net(const CheckpointReader& r,
                              const std::string& prefix) {
  DenseNet net;
  const auto n = static_cast<std::size_t>(r.scalar(prefix + ".layers"));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    DenseLayer layer;
    layer.weight = r.mat(base + ".W");
    layer.bias = r.vec(base + ".b");
    layer.act = static_cast<Act>(static_cast<int>(r.scalar(base + ".act")));
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline void put_adam(CheckpointWriter& w, const std::string& prefix,
                     const AdamState& s) {
  w.put_scalar(prefix + ".t", static_cast<double>(s.t));
  for (std::size_t i = 0; i < s.m_weight.size(); ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    w.put(base + ".mW", s.m_weight[i]);
    w.put(base + ".vW", s.v_weight[i]);
    w.put(base + ".mb", s.m_bias[i]);
    w.put(base + ".vb", s.v_bias[i]);
  }
}

inline void get_adam(const CheckpointReader& r, const std::string& prefix,
                     AdamState& s) {
  s.t = static_cast<long>(r.scalar(prefix + ".t"));
  for (std::size_t i = 0; i < s.m_weight.size(); ++i) {
    const std::string base = prefix + ".l" + std::to_string(i);
    s.m_weight[i] = r.mat(base + ".mW");
    s.v_weight[i] = r.mat(base + ".vW");
    s.m_bias[i] = r.mat(base + ".mb");
    s.v_bias[i] = r.mat(base + ".vb");
  }
}

}  // namespace echelon
