#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "echelon/nn.hpp"

namespace echelon {

// A_hat = D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I. Input
// must be square, symmetric, 0/1 with zero diagonal.
inline Mat normalize_adjacency(const Mat& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("normalize_adjacency: matrix not square");
  if (!a.isApprox(a.transpose()))
    throw std::invalid_argument("normalize_adjacency: matrix not symmetric");
  if (a.diagonal().cwiseAbs().maxCoeff() != 0.0)
    throw std::invalid_argument("normalize_adjacency: nonzero diagonal");
  const Mat with_self = a + Mat::Identity(a.rows(), a.cols());
  Vec inv_sqrt_deg = with_self.rowwise().sum();
  for (Eigen::Index i = 0; i < inv_sqrt_deg.size(); ++i)
    inv_sqrt_deg(i) = 1.0 / std::sqrt(inv_sqrt_deg(i));
  return inv_sqrt_deg.asDiagonal() * with_self * inv_sqrt_deg.asDiagonal();
}

// Three bias-free convolution layers, each H <- relu(A_hat H W).
struct GcnStack {
  Mat w1, w2, w3;
  Mat a_hat;

  int input_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w3.cols()); }
  int node_count() const { return static_cast<int>(a_hat.rows()); }
};

inline GcnStack make_gcn(int feature_dim, int hidden, int output,
                         const Mat& a_hat, Rng& rng) {
  GcnStack stack;
  stack.w1 = xavier_uniform(feature_dim, hidden, rng);
  stack.w2 = xavier_uniform(hidden, hidden, rng);
  stack.w3 = xavier_uniform(hidden, output, rng);
  stack.a_hat = a_hat;
  return stack;
}

struct GcnTape {
  Mat ax;   // A_hat X
  Mat z1, h1;
  Mat ah1;  // A_hat H1
  Mat z2, h2;
  Mat ah2;  // A_hat H2
  Mat z3;
};

inline Mat gcn_forward(const GcnStack& stack, const Mat& x,
                       GcnTape* tape = nullptr) {
  if (x.cols() != stack.w1.rows())
    throw std::invalid_argument("gcn_forward: feature dim mismatch");
  if (x.rows() != stack.a_hat.rows())
    throw std::invalid_argument("gcn_forward: node count mismatch");
  const Mat ax = stack.a_hat * x;
  const Mat z1 = ax * stack.w1;
  const Mat h1 = z1.cwiseMax(0.0);
  const Mat ah1 = stack.a_hat * h1;
  const Mat z2 = ah1 * stack.w2;
  const Mat h2 = z2.cwiseMax(0.0);
  const Mat ah2 = stack.a_hat * h2;
  const Mat z3 = ah2 * stack.w3;
  Mat h3 = z3.cwiseMax(0.0);
  if (tape) *tape = GcnTape{ax, z1, h1, ah1, z2, h2, ah2, z3};
  return h3;
}

struct GcnGrads {
  Mat w1, w2, w3;

  static GcnGrads zeros_like(const GcnStack& s) {
    return {Mat::Zero(s.w1.rows(), s.w1.cols()),
            Mat::Zero(s.w2.rows(), s.w2.cols()),
            Mat::Zero(s.w3.rows(), s.w3.cols())};
  }
};

// Accumulates weight gradients, returns gradient w.r.t. the node features.
inline Mat gcn_backward(const GcnStack& stack, const GcnTape& tape,
                        const Mat& dh3, GcnGrads& grads) {
  const Mat dz3 = (tape.z3.array() > 0.0).select(dh3.array(), 0.0).matrix();
  grads.w3.noalias() += tape.ah2.transpose() * dz3;
  const Mat dh2 = stack.a_hat.transpose() * (dz3 * stack.w3.transpose());
  const Mat dz2 = (tape.z2.array() > 0.0).select(dh2.array(), 0.0).matrix();
  grads.w2.noalias() += tape.ah1.transpose() * dz2;
  const Mat dh1 = stack.a_hat.transpose() * (dz2 * stack.w2.transpose());
  const Mat dz1 = (tape.z1.array() > 0.0).select(dh1.array(), 0.0).matrix();
  grads.w1.noalias() += tape.ax.transpose() * dz1;
  return stack.a_hat.transpose() * (dz1 * stack.w1.transpose());
}

// Column-wise mean over nodes: N x W -> W.
inline Vec global_mean_pool(const Mat& h) {
  if (h.rows() == 0)
    throw std::invalid_argument("global_mean_pool: empty input");
  return h.colwise().mean().transpose();
}

// Backward of the mean pool: spread the pooled gradient evenly over rows.
inline Mat global_mean_pool_backward(const Vec& d_pooled, Eigen::Index rows) {
  Mat dh(rows, d_pooled.size());
  dh.rowwise() = (d_pooled / static_cast<double>(rows)).transpose();
  return dh;
}

struct GcnAdamState {
  Mat m1, v1, m2, v2, m3, v3;
  long t = 0;
  AdamConfig cfg;

  static GcnAdamState init(const GcnStack& s, const AdamConfig& cfg = {}) {
    GcnAdamState st;
    st.cfg = cfg;
    st.m1 = Mat::Zero(s.w1.rows(), s.w1.cols());
    st.v1 = st.m1;
    st.m2 = Mat::Zero(s.w2.rows(), s.w2.cols());
    st.v2 = st.m2;
    st.m3 = Mat::Zero(s.w3.rows(), s.w3.cols());
    st.v3 = st.m3;
    return st;
  }
};

inline bool adam_step_gcn(GcnStack& stack, const GcnGrads& grads,
                          GcnAdamState& state) {
  if (!grads.w1.allFinite() || !grads.w2.allFinite() || !grads.w3.allFinite())
    return false;
  state.t += 1;
  detail::adam_update(stack.w1, grads.w1, state.m1, state.v1, state.t,
                      state.cfg, state.cfg.weight_decay);
  detail::adam_update(stack.w2, grads.w2, state.m2, state.v2, state.t,
                      state.cfg, state.cfg.weight_decay);
  detail::adam_update(stack.w3, grads.w3, state.m3, state.v3, state.t,
                      state.cfg, state.cfg.weight_decay);
  return true;
}

inline void put_gcn(CheckpointWriter& w, const std::string& prefix,
                    const GcnStack& s) {
  w.put(prefix + ".W1", s.w1);
  w.put(prefix + ".W2", s.w2);
  w.put(prefix + ".W3", s.w3);
  w.put(prefix + ".Ahat", s.a_hat);
}

inline GcnStack get_gcn(const CheckpointReader& r, const std::string& prefix) {
  GcnStack s;
  s.w1 = r.mat(prefix + ".W1");
  s.w2 = r.mat(prefix + ".W2");
  s.w3 = r.mat(prefix + ".W3");
  s.a_hat = r.mat(prefix + ".Ahat");
  return s;
}

inline void put_gcn_adam(CheckpointWriter& w, const std::string& prefix,
                         const GcnAdamState& s) {
  w.put_scalar(prefix + ".t", static_cast<double>(s.t));
  w.put(prefix + ".m1", s.m1);
  w.put(prefix + ".v1", s.v1);
  w.put(prefix + ".m2", s.m2);
  w.put(prefix + ".v2", s.v2);
  w.put(prefix + ".m3", s.m3);
  w.put(prefix + ".v3", s.v3);
}

inline void get_gcn_adam(const CheckpointReader& r, const std::string& prefix,
                         GcnAdamState& s) {
  s.t = static_cast<long>(r.scalar(prefix + ".t"));
  s.m1 = r.mat(prefix + ".m1");
  s.v1 = r.mat(prefix + ".v1");
  s.m2 = r.mat(prefix + ".m2");
  s.v2 = r.mat(prefix + ".v2");
  s.m3 = r.mat(prefix + ".m3");
  s.v3 = r.mat(prefix + ".v3");
}

}  // namespace echelon
