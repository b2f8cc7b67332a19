#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "echelon/nn.hpp"
#include "echelon/supply_net.hpp"

namespace echelon {

// Per-agent actor: an MLP producing a tanh-bounded 2-dim mean over the raw
// (s, S) pair, plus a learned state-independent log-std.
struct Actor {
  DenseNet net;      // obs -> 2, hidden relu, output tanh
  Vec log_std;       // 2, clamped to [kLogStdMin, kLogStdMax] on use
};

inline Actor make_actor(int obs_dim, Rng& rng, double log_std_init = -0.5) {
  Actor actor;
  actor.net = make_mlp({obs_dim, 128, 128, 128, 2}, Act::relu, Act::tanh_fn,
                       rng, 0.01);
  actor.log_std = Vec::Constant(2, log_std_init);
  return actor;
}

struct ActionBounds {
  double s_min = 0.0, s_max = 0.0;
  double S_min = 0.0, S_max = 0.0;
};

inline ActionBounds default_bounds(const NodeParams& node) {
  const double vmax = static_cast<double>(node.max_inventory);
  return ActionBounds{0.0, vmax, 0.0, vmax};
}

struct RawAction {
  Eigen::Vector2d a;  // clipped to [-1, 1]^2
  double log_prob;    // of the unclipped sample
};

// Sample the raw action from the actor's Gaussian at one observation. The
// log-probability is taken before clipping.
inline RawAction act(const Actor& actor, const Vec& obs_norm, Rng& rng) {
  const Vec mean = forward_vec(actor.net, obs_norm);
  if (!mean.allFinite())
    throw std::runtime_error("act: non-finite policy output");
  const Vec log_std = clamp_log_std(actor.log_std);
  Vec sample(2);
  for (Eigen::Index k = 0; k < 2; ++k)
    sample(k) = mean(k) + std::exp(log_std(k)) * rng.normal();
  RawAction out;
  out.log_prob = gaussian_log_prob(mean, log_std, sample);
  out.a = sample.cwiseMax(-1.0).cwiseMin(1.0);
  return out;
}

// Min-max scaling of a raw value in [-1, 1] onto [lo, hi].
inline double scale(double x_raw, double lo, double hi) {
  if (lo >= hi) throw std::invalid_argument("scale: lo must be < hi");
  return (x_raw + 1.0) / 2.0 * (hi - lo) + lo;
}

// Replenishment order from the scaled (s, S) pair: order up to S when
// on-hand inventory is at or below the reorder point s.
inline long long order_from_ss(double s_scaled, double cap_s_scaled,
                               long long on_hand, long long max_order) {
  if (!std::isfinite(s_scaled) || !std::isfinite(cap_s_scaled))
    throw std::invalid_argument("order_from_ss: non-finite inputs");
  if (static_cast<double>(on_hand) > s_scaled) return 0;
  const long long order =
      std::llround(cap_s_scaled - static_cast<double>(on_hand));
  return std::clamp(order, 0LL, max_order);
}

// Scaled (s, S) pair and the resulting order for one agent.
struct SsDecision {
  double s = 0.0;
  double S = 0.0;
  long long order = 0;
};

inline SsDecision decide_order(const Eigen::Vector2d& raw_action,
                               const ActionBounds& bounds, long long on_hand,
                               long long max_order) {
  SsDecision d;
  d.s = scale(raw_action(0), bounds.s_min, bounds.s_max);
  d.S = scale(raw_action(1), bounds.S_min, bounds.S_max);
  d.order = order_from_ss(d.s, d.S, on_hand, max_order);
  return d;
}

inline void put_actor(CheckpointWriter& w, const std::string& prefix,
                      const Actor& a) {
  put_dense_net(w, prefix + ".net", a.net);
  w.put(prefix + ".log_std", a.log_std);
}

inline Actor get_actor(const CheckpointReader& r, const std::string& prefix) {
  Actor a;
  a.net = get_dense_net(r, prefix + ".net");
  a.log_std = r.vec(prefix + ".log_std");
  return a;
}

}  // namespace echelon
