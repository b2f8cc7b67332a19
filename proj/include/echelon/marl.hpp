#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/env.hpp"
#include "echelon/gcn.hpp"
#include "echelon/nn.hpp"
#include "echelon/policy.hpp"

namespace echelon {

enum class Variant { ippo, mappo, gmappo, pgcn_mappo, regpgcn_mappo };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::ippo: return "ippo";
    case Variant::mappo: return "mappo";
    case Variant::gmappo: return "gmappo";
    case Variant::pgcn_mappo: return "pgcn";
    case Variant::regpgcn_mappo: return "regpgcn";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "ippo") return Variant::ippo;
  if (s == "mappo") return Variant::mappo;
  if (s == "gmappo") return Variant::gmappo;
  if (s == "pgcn") return Variant::pgcn_mappo;
  if (s == "regpgcn") return Variant::regpgcn_mappo;
  throw std::invalid_argument("unknown algorithm variant: " + s);
}

inline bool variant_uses_gcn(Variant v) {
  return v == Variant::gmappo || v == Variant::pgcn_mappo ||
         v == Variant::regpgcn_mappo;
}
inline bool variant_pools(Variant v) {
  return v == Variant::pgcn_mappo || v == Variant::regpgcn_mappo;
}

struct AlgoConfig {
  Variant variant = Variant::regpgcn_mappo;
  double clip_eps = 0.3;
  double gae_lambda = 1.0;
  double gamma = 0.99;
  double kl_beta_init = 0.2;
  double kl_target = 0.01;
  int rollout_steps = 4000;  // env steps collected per iteration
  int minibatch = 32;
  int iterations = 60;
  double noise_std = 0.0;    // sigma_n, value noise during training
  double entropy_coef = 0.0;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double reward_scale = 1000.0;  // training-side scaling; metrics stay raw
  int gcn_hidden = 64;
  int gcn_out = 32;          // W3'
  double log_std_init = -0.5;

  AdamConfig adam() const {
    AdamConfig a;
    a.lr = lr;
    a.weight_decay = weight_decay;
    return a;
  }
};

// --- Generalized advantage estimation (one episode / segment) ---

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

inline GaeResult gae(const std::vector<double>& rewards,
                     const std::vector<double>& values, double bootstrap,
                     double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("gae: rewards/values length mismatch");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double running = 0.0;
  for (std::size_t idx = n; idx-- > 0;) {
    const double next_value = (idx + 1 < n) ? values[idx + 1] : bootstrap;
    const double delta = rewards[idx] + gamma * next_value - values[idx];
    running = delta + gamma * lambda * running;
    out.advantages[idx] = running;
    out.returns[idx] = running + values[idx];
  }
  return out;
}

// --- PPO clipped surrogate ---

inline double ppo_policy_loss(const std::vector<double>& logp_new,
                              const std::vector<double>& logp_old,
                              const std::vector<double>& advantages,
                              double clip_eps) {
  if (logp_new.size() != logp_old.size() ||
      logp_new.size() != advantages.size())
    throw std::invalid_argument("ppo_policy_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < logp_new.size(); ++i) {
    const double ratio = std::exp(logp_new[i] - logp_old[i]);
    if (!std::isfinite(ratio))
      throw std::runtime_error("ppo_policy_loss: non-finite ratio");
    const double clipped =
        std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    loss += -std::min(ratio * advantages[i], clipped * advantages[i]);
  }
  return loss / static_cast<double>(logp_new.size());
}

// Per-sample d(loss)/d(logp_new) for the mean-reduced surrogate. Exactly
// zero whenever the clipped branch is active.
inline std::vector<double> ppo_policy_loss_grad(
    const std::vector<double>& logp_new, const std::vector<double>& logp_old,
    const std::vector<double>& advantages, double clip_eps) {
  const std::size_t n = logp_new.size();
  std::vector<double> grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ratio = std::exp(logp_new[i] - logp_old[i]);
    if (!std::isfinite(ratio))
      throw std::runtime_error("ppo_policy_loss_grad: non-finite ratio");
    const double clipped =
        std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double a = advantages[i];
    if (ratio * a <= clipped * a) {
      // unclipped branch selected by the min
      grad[i] = -ratio * a / static_cast<double>(n);
    } else {
      grad[i] = 0.0;
    }
  }
  return grad;
}

// Doubling/halving rule for the adaptive KL penalty coefficient.
inline double kl_update(double beta, double observed_kl, double target) {
  if (observed_kl > 1.5 * target) return beta * 2.0;
  if (observed_kl < target / 1.5) return beta / 2.0;
  return beta;
}

// Additive Gaussian value noise; training-side only, no-op at sigma = 0 (the
// rng is untouched so noise-free runs stay bit-identical).
inline void inject_value_noise(std::vector<double>& values, double sigma,
                               Rng& rng) {
  if (sigma < 0.0)
    throw std::invalid_argument("inject_value_noise: negative sigma");
  if (sigma == 0.0) return;
  for (double& v : values) v += sigma * rng.normal();
}

// --- Trainer ---

struct Trainer {
  SupplyNetwork net;
  AlgoConfig cfg;
  std::uint64_t run_seed = 0;
  long iteration = 0;
  double beta = 0.2;

  int obs_dim = 0;
  std::vector<Actor> actors;
  std::vector<AdamState> actor_adam;
  std::vector<AdamVecState> log_std_adam;
  std::vector<DenseNet> critics;  // one per agent for ippo, else one
  std::vector<AdamState> critic_adam;
  GcnStack gcn;
  GcnAdamState gcn_adam;
  std::vector<ActionBounds> bounds;

  int critic_input_dim() const {
    switch (cfg.variant) {
      case Variant::ippo: return obs_dim;
      case Variant::mappo: return net.size() * obs_dim;
      case Variant::gmappo: return net.size() * cfg.gcn_out;
      case Variant::pgcn_mappo:
      case Variant::regpgcn_mappo: return cfg.gcn_out;
    }
    return 0;
  }
};

inline Trainer make_trainer(const SupplyNetwork& net, const AlgoConfig& cfg,
                            std::uint64_t seed) {
  Trainer tr;
  tr.net = net;
  tr.cfg = cfg;
  // only the regularized variant injects value noise
  if (cfg.variant != Variant::regpgcn_mappo) tr.cfg.noise_std = 0.0;
  tr.run_seed = seed;
  tr.beta = cfg.kl_beta_init;
  tr.obs_dim = 3 + 2 * net.history;
  const int n = net.size();
  for (int a = 0; a < n; ++a) {
    Rng rng(mix_seed(seed, 0xAC70ULL, static_cast<std::uint64_t>(a)));
    tr.actors.push_back(make_actor(tr.obs_dim, rng, cfg.log_std_init));
    tr.actor_adam.push_back(AdamState::init(tr.actors.back().net, cfg.adam()));
    AdamConfig no_decay = cfg.adam();
    no_decay.weight_decay = 0.0;
    tr.log_std_adam.push_back(
        AdamVecState::init(tr.actors.back().log_std, no_decay));
    tr.bounds.push_back(default_bounds(net.nodes[static_cast<std::size_t>(a)]));
  }
  if (variant_uses_gcn(cfg.variant)) {
    Rng rng(mix_seed(seed, 0x6C17ULL));
    tr.gcn = make_gcn(tr.obs_dim, cfg.gcn_hidden, cfg.gcn_out,
                      normalize_adjacency(adjacency(net).symmetric), rng);
    tr.gcn_adam = GcnAdamState::init(tr.gcn, cfg.adam());
  }
  const int n_critics = cfg.variant == Variant::ippo ? n : 1;
  for (int c = 0; c < n_critics; ++c) {
    Rng rng(mix_seed(seed, 0xC717ULL, static_cast<std::uint64_t>(c)));
    tr.critics.push_back(make_mlp({tr.critic_input_dim(), 256, 256, 256, 1},
                                  Act::relu, Act::identity, rng));
    tr.critic_adam.push_back(AdamState::init(tr.critics.back(), cfg.adam()));
  }
  return tr;
}

namespace detail {

// Flatten an N x D matrix row-by-row (node-major), matching global_state.
inline Vec flatten_rows(const Mat& m) {
  Vec out(m.rows() * m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    out.segment(i * m.cols(), m.cols()) = m.row(i).transpose();
  return out;
}

}  // namespace detail

// Shared-critic input for one state given the normalized node features.
inline Vec critic_input(const Trainer& tr, const Mat& feats,
                        GcnTape* tape = nullptr) {
  switch (tr.cfg.variant) {
    case Variant::ippo:
      throw std::logic_error("critic_input: ippo critics take local obs");
    case Variant::mappo:
      return detail::flatten_rows(feats);
    case Variant::gmappo:
      return detail::flatten_rows(gcn_forward(tr.gcn, feats, tape));
    case Variant::pgcn_mappo:
    case Variant::regpgcn_mappo:
      return global_mean_pool(gcn_forward(tr.gcn, feats, tape));
  }
  throw std::logic_error("critic_input: unreachable");
}

// Per-agent value estimates at one state. Shared-critic variants broadcast
// one scalar to every agent.
inline Vec critic_value(const Trainer& tr,
                        const std::vector<Eigen::VectorXd>& obs_norm) {
  const int n = tr.net.size();
  Vec values(n);
  if (tr.cfg.variant == Variant::ippo) {
    for (int a = 0; a < n; ++a)
      values(a) = forward_vec(tr.critics[static_cast<std::size_t>(a)],
                              obs_norm[static_cast<std::size_t>(a)])(0);
    return values;
  }
  Mat feats(n, obs_norm.front().size());
  for (int a = 0; a < n; ++a)
    feats.row(a) = obs_norm[static_cast<std::size_t>(a)].transpose();
  const Vec input = critic_input(tr, feats);
  const double v = forward_vec(tr.critics.front(), input)(0);
  values.setConstant(v);
  return values;
}

// --- Rollout storage ---

struct RolloutBatch {
  int n_envs = 0;
  int horizon = 0;
  int n_agents = 0;
  int obs_dim = 0;
  // state index = env * horizon + t
  std::vector<Mat> feats;              // per state: N x obs_dim, normalized
  std::vector<Mat> obs;                // per agent: S x obs_dim
  std::vector<Mat> actions;            // per agent: S x 2 (clipped)
  std::vector<std::vector<double>> logp;  // per agent: S
  std::vector<Mat> mu_old;             // per agent: S x 2
  std::vector<Vec> log_std_old;        // per agent: 2 (state-independent)
  std::vector<double> reward_raw;      // S, shared team reward
  Mat values;                          // S x n_agents (training scale)
  Mat advantages;                      // S x n_agents
  Mat returns;                         // S x n_agents
  std::vector<double> episode_profit;  // per env, raw currency

  int total_steps() const { return n_envs * horizon; }
};

inline RolloutBatch collect_rollout(Trainer& tr) {
  const int n = tr.net.size();
  const int horizon = tr.net.horizon;
  if (tr.cfg.rollout_steps % horizon != 0)
    throw std::invalid_argument(
        "rollout_steps must be a multiple of the horizon");
  const int n_envs = tr.cfg.rollout_steps / horizon;
  const int steps = n_envs * horizon;

  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.horizon = horizon;
  batch.n_agents = n;
  batch.obs_dim = tr.obs_dim;
  batch.feats.assign(static_cast<std::size_t>(steps), Mat());
  batch.obs.assign(static_cast<std::size_t>(n), Mat(steps, tr.obs_dim));
  batch.actions.assign(static_cast<std::size_t>(n), Mat(steps, 2));
  batch.logp.assign(static_cast<std::size_t>(n),
                    std::vector<double>(static_cast<std::size_t>(steps)));
  batch.mu_old.assign(static_cast<std::size_t>(n), Mat(steps, 2));
  batch.reward_raw.assign(static_cast<std::size_t>(steps), 0.0);
  batch.episode_profit.assign(static_cast<std::size_t>(n_envs), 0.0);
  for (int a = 0; a < n; ++a)
    batch.log_std_old.push_back(
        clamp_log_std(tr.actors[static_cast<std::size_t>(a)].log_std));

  // one env and one action stream per agent; all derived from the run seed
  // and iteration so that checkpoint resume reproduces the same run
  const auto iter = static_cast<std::uint64_t>(tr.iteration);
  std::vector<EnvState> envs;
  envs.reserve(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e)
    envs.push_back(reset(
        tr.net, mix_seed(tr.run_seed, 0xE5EEDULL, iter,
                         static_cast<std::uint64_t>(e))));
  std::vector<Rng> act_rngs;
  for (int a = 0; a < n; ++a)
    act_rngs.emplace_back(mix_seed(tr.run_seed, 0x5A3ULL, iter,
                                   static_cast<std::uint64_t>(a)));

  // current normalized features per env
  std::vector<Mat> current(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e) {
    const auto all = observe_all(envs[static_cast<std::size_t>(e)], tr.net);
    Mat feats(n, tr.obs_dim);
    for (int a = 0; a < n; ++a)
      feats.row(a) =
          normalize_observation(tr.net, a, all[static_cast<std::size_t>(a)])
              .transpose();
    current[static_cast<std::size_t>(e)] = std::move(feats);
  }

  std::vector<long long> orders(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < horizon; ++t) {
    for (int e = 0; e < n_envs; ++e)
      batch.feats[static_cast<std::size_t>(e * horizon + t)] =
          current[static_cast<std::size_t>(e)];
    // sample joint actions, one batched forward per agent
    for (int a = 0; a < n; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      Mat x(n_envs, tr.obs_dim);
      for (int e = 0; e < n_envs; ++e)
        x.row(e) = current[static_cast<std::size_t>(e)].row(a);
      const Mat mean = forward(tr.actors[ua].net, x);
      if (!mean.allFinite())
        throw std::runtime_error("rollout: non-finite policy output");
      const Vec ls = batch.log_std_old[ua];
      for (int e = 0; e < n_envs; ++e) {
        const int row = e * horizon + t;
        Vec mu = mean.row(e).transpose();
        Vec sample(2);
        for (int k = 0; k < 2; ++k)
          sample(k) = mu(k) + std::exp(ls(k)) * act_rngs[ua].normal();
        batch.logp[ua][static_cast<std::size_t>(row)] =
            gaussian_log_prob(mu, ls, sample);
        batch.mu_old[ua].row(row) = mu.transpose();
        batch.actions[ua].row(row) =
            sample.cwiseMax(-1.0).cwiseMin(1.0).transpose();
        batch.obs[ua].row(row) = x.row(e);
      }
    }
    // step every environment
    for (int e = 0; e < n_envs; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const int row = e * horizon + t;
      for (int a = 0; a < n; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        const Eigen::Vector2d raw =
            batch.actions[ua].row(row).transpose();
        orders[ua] = decide_order(raw, tr.bounds[ua],
                                  envs[ue].on_hand[ua],
                                  tr.net.nodes[ua].max_order)
                         .order;
      }
      const StepResult res = step(envs[ue], tr.net, orders);
      batch.reward_raw[static_cast<std::size_t>(row)] = res.team_reward;
      batch.episode_profit[ue] += res.team_reward;
      Mat feats(n, tr.obs_dim);
      for (int a = 0; a < n; ++a)
        feats.row(a) = normalize_observation(
                           tr.net, a,
                           res.observations[static_cast<std::size_t>(a)])
                           .transpose();
      current[ue] = std::move(feats);
    }
  }

  // value estimates for every recorded state, then optional value noise
  const int steps_total = batch.total_steps();
  batch.values = Mat(steps_total, n);
  if (tr.cfg.variant == Variant::ippo) {
    for (int a = 0; a < n; ++a)
      batch.values.col(a) =
          forward(tr.critics[static_cast<std::size_t>(a)],
                  batch.obs[static_cast<std::size_t>(a)])
              .col(0);
  } else {
    Mat inputs(steps_total, tr.critic_input_dim());
    for (int s = 0; s < steps_total; ++s)
      inputs.row(s) =
          critic_input(tr, batch.feats[static_cast<std::size_t>(s)])
              .transpose();
    const Mat v = forward(tr.critics.front(), inputs);
    std::vector<double> vals(static_cast<std::size_t>(steps_total));
    for (int s = 0; s < steps_total; ++s)
      vals[static_cast<std::size_t>(s)] = v(s, 0);
    Rng noise_rng(mix_seed(tr.run_seed, 0x9015EULL, iter));
    inject_value_noise(vals, tr.cfg.noise_std, noise_rng);
    for (int s = 0; s < steps_total; ++s)
      batch.values(s, 0) = vals[static_cast<std::size_t>(s)];
    for (int a = 1; a < n; ++a) batch.values.col(a) = batch.values.col(0);
  }

  // GAE per episode; the horizon end is terminal, so the bootstrap is zero
  batch.advantages = Mat(steps_total, n);
  batch.returns = Mat(steps_total, n);
  const double scale = tr.cfg.reward_scale > 0 ? tr.cfg.reward_scale : 1.0;
  for (int a = 0; a < n; ++a) {
    if (tr.cfg.variant != Variant::ippo && a > 0) {
      // shared reward and shared value stream: identical advantages
      batch.advantages.col(a) = batch.advantages.col(0);
      batch.returns.col(a) = batch.returns.col(0);
      continue;
    }
    for (int e = 0; e < n_envs; ++e) {
      std::vector<double> rewards(static_cast<std::size_t>(horizon));
      std::vector<double> values(static_cast<std::size_t>(horizon));
      for (int t = 0; t < horizon; ++t) {
        const int row = e * horizon + t;
        rewards[static_cast<std::size_t>(t)] =
            batch.reward_raw[static_cast<std::size_t>(row)] / scale;
        values[static_cast<std::size_t>(t)] = batch.values(row, a);
      }
      const GaeResult g =
          gae(rewards, values, 0.0, tr.cfg.gamma, tr.cfg.gae_lambda);
      for (int t = 0; t < horizon; ++t) {
        const int row = e * horizon + t;
        batch.advantages(row, a) = g.advantages[static_cast<std::size_t>(t)];
        batch.returns(row, a) = g.returns[static_cast<std::size_t>(t)];
      }
    }
  }
  return batch;
}

struct IterationMetrics {
  long iteration = 0;
  double mean_episode_profit = 0.0;
  double mean_entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_kl = 0.0;
  double beta = 0.0;
  double seconds = 0.0;
};

namespace detail {

inline std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

struct ActorUpdateStats {
  double policy_loss = 0.0;
  double kl = 0.0;
  int minibatches = 0;
};

// One optimization pass over the batch for a single agent's actor.
inline ActorUpdateStats update_actor(Trainer& tr, int agent,
                                     const RolloutBatch& batch) {
  const auto ua = static_cast<std::size_t>(agent);
  Actor& actor = tr.actors[ua];
  const int steps = batch.total_steps();
  const int mb_size = tr.cfg.minibatch;
  Rng shuffle_rng(mix_seed(tr.run_seed, 0x50FFULL,
                           static_cast<std::uint64_t>(tr.iteration),
                           static_cast<std::uint64_t>(agent)));
  const std::vector<int> order = shuffled_indices(steps, shuffle_rng);

  ActorUpdateStats stats;
  for (int start = 0; start + mb_size <= steps; start += mb_size) {
    const int b = mb_size;
    Mat x(b, batch.obs_dim);
    for (int i = 0; i < b; ++i)
      x.row(i) = batch.obs[ua].row(order[static_cast<std::size_t>(start + i)]);

    Tape tape;
    const Mat mu_new = forward(actor.net, x, &tape);
    const Vec ls_new = clamp_log_std(actor.log_std);

    // per-minibatch advantage normalization
    std::vector<double> adv(static_cast<std::size_t>(b));
    double mean = 0.0;
    for (int i = 0; i < b; ++i) {
      adv[static_cast<std::size_t>(i)] =
          batch.advantages(order[static_cast<std::size_t>(start + i)], agent);
      mean += adv[static_cast<std::size_t>(i)];
    }
    mean /= b;
    double var = 0.0;
    for (double& v : adv) {
      v -= mean;
      var += v * v;
    }
    const double stdev = std::sqrt(var / b) + 1e-8;
    for (double& v : adv) v /= stdev;

    std::vector<double> logp_new(static_cast<std::size_t>(b));
    std::vector<double> logp_old(static_cast<std::size_t>(b));
    double kl_sum = 0.0;
    for (int i = 0; i < b; ++i) {
      const int row = order[static_cast<std::size_t>(start + i)];
      const Vec mu = mu_new.row(i).transpose();
      const Vec a_taken = batch.actions[ua].row(row).transpose();
      logp_new[static_cast<std::size_t>(i)] =
          gaussian_log_prob(mu, ls_new, a_taken);
      logp_old[static_cast<std::size_t>(i)] =
          batch.logp[ua][static_cast<std::size_t>(row)];
      kl_sum += gaussian_kl(batch.mu_old[ua].row(row).transpose(),
                            batch.log_std_old[ua], mu, ls_new);
    }
    const double kl_mean = kl_sum / b;
    const std::vector<double> dlogp =
        ppo_policy_loss_grad(logp_new, logp_old, adv, tr.cfg.clip_eps);
    stats.policy_loss +=
        ppo_policy_loss(logp_new, logp_old, adv, tr.cfg.clip_eps);
    stats.kl += kl_mean;
    stats.minibatches += 1;

    // chain into the mean head and the shared log-std
    Mat d_mu = Mat::Zero(b, 2);
    Vec d_ls = Vec::Zero(2);
    for (int i = 0; i < b; ++i) {
      const int row = order[static_cast<std::size_t>(start + i)];
      const Vec mu = mu_new.row(i).transpose();
      const Vec a_taken = batch.actions[ua].row(row).transpose();
      Vec dlp_dmu, dlp_dls;
      gaussian_log_prob_grad(mu, ls_new, a_taken, dlp_dmu, dlp_dls);
      Vec dkl_dmu, dkl_dls;
      gaussian_kl_grad(batch.mu_old[ua].row(row).transpose(),
                       batch.log_std_old[ua], mu, ls_new, dkl_dmu, dkl_dls);
      const double g = dlogp[static_cast<std::size_t>(i)];
      d_mu.row(i) =
          (g * dlp_dmu + (tr.beta / b) * dkl_dmu).transpose();
      d_ls += g * dlp_dls + (tr.beta / b) * dkl_dls;
      // entropy bonus (coefficient 0 by default): dH/d log_std = 1
      d_ls.array() -= tr.cfg.entropy_coef / b;
    }
    Grads grads = Grads::zeros_like(actor.net);
    backward(actor.net, tape, d_mu, grads);
    adam_step(actor.net, grads, tr.actor_adam[ua]);
    // clamp is a pass-through only inside the active range
    for (int k = 0; k < 2; ++k)
      if (actor.log_std(k) <= kLogStdMin || actor.log_std(k) >= kLogStdMax)
        d_ls(k) = 0.0;
    adam_step_vec(actor.log_std, d_ls, tr.log_std_adam[ua]);
    actor.log_std = clamp_log_std(actor.log_std);
  }
  return stats;
}

// One optimization pass for the critic (and GCN front end when present).
inline double update_critic(Trainer& tr, const RolloutBatch& batch) {
  const int steps = batch.total_steps();
  const int mb_size = tr.cfg.minibatch;
  double loss_sum = 0.0;
  int loss_count = 0;

  if (tr.cfg.variant == Variant::ippo) {
    for (int a = 0; a < tr.net.size(); ++a) {
      const auto ua = static_cast<std::size_t>(a);
      Rng shuffle_rng(mix_seed(tr.run_seed, 0xC5FFULL,
                               static_cast<std::uint64_t>(tr.iteration),
                               static_cast<std::uint64_t>(a)));
      const std::vector<int> order = shuffled_indices(steps, shuffle_rng);
      for (int start = 0; start + mb_size <= steps; start += mb_size) {
        Mat x(mb_size, batch.obs_dim);
        Vec target(mb_size);
        for (int i = 0; i < mb_size; ++i) {
          const int row = order[static_cast<std::size_t>(start + i)];
          x.row(i) = batch.obs[ua].row(row);
          target(i) = batch.returns(row, a);
        }
        Tape tape;
        const Mat v = forward(tr.critics[ua], x, &tape);
        const Vec err = v.col(0) - target;
        loss_sum += 0.5 * err.squaredNorm() / mb_size;
        loss_count += 1;
        Mat dv = err / static_cast<double>(mb_size);
        Grads grads = Grads::zeros_like(tr.critics[ua]);
        backward(tr.critics[ua], tape, dv, grads);
        adam_step(tr.critics[ua], grads, tr.critic_adam[ua]);
      }
    }
    return loss_count ? loss_sum / loss_count : 0.0;
  }

  DenseNet& critic = tr.critics.front();
  const bool with_gcn = variant_uses_gcn(tr.cfg.variant);
  const bool pooled = variant_pools(tr.cfg.variant);
  Rng shuffle_rng(mix_seed(tr.run_seed, 0xC5FFULL,
                           static_cast<std::uint64_t>(tr.iteration)));
  const std::vector<int> order = shuffled_indices(steps, shuffle_rng);
  const int n = tr.net.size();
  for (int start = 0; start + mb_size <= steps; start += mb_size) {
    Mat x(mb_size, tr.critic_input_dim());
    Vec target(mb_size);
    std::vector<GcnTape> gcn_tapes(static_cast<std::size_t>(mb_size));
    for (int i = 0; i < mb_size; ++i) {
      const int row = order[static_cast<std::size_t>(start + i)];
      const Mat& feats = batch.feats[static_cast<std::size_t>(row)];
      x.row(i) = critic_input(tr, feats,
                              with_gcn ? &gcn_tapes[static_cast<std::size_t>(i)]
                                       : nullptr)
                     .transpose();
      target(i) = batch.returns(row, 0);
    }
    Tape tape;
    const Mat v = forward(critic, x, &tape);
    const Vec err = v.col(0) - target;
    loss_sum += 0.5 * err.squaredNorm() / mb_size;
    loss_count += 1;
    Mat dv = err / static_cast<double>(mb_size);
    Grads grads = Grads::zeros_like(critic);
    const Mat dx = backward(critic, tape, dv, grads);
    adam_step(critic, grads, tr.critic_adam.front());
    if (with_gcn) {
      GcnGrads ggrads = GcnGrads::zeros_like(tr.gcn);
      for (int i = 0; i < mb_size; ++i) {
        Mat dh3;
        if (pooled) {
          dh3 = global_mean_pool_backward(dx.row(i).transpose(), n);
        } else {
          dh3 = Mat(n, tr.cfg.gcn_out);
          for (int node = 0; node < n; ++node)
            dh3.row(node) = dx.row(i).segment(node * tr.cfg.gcn_out,
                                              tr.cfg.gcn_out);
        }
        gcn_backward(tr.gcn, gcn_tapes[static_cast<std::size_t>(i)], dh3,
                     ggrads);
      }
      adam_step_gcn(tr.gcn, ggrads, tr.gcn_adam);
    }
  }
  return loss_count ? loss_sum / loss_count : 0.0;
}

}  // namespace detail

// One full training iteration: collect a batch, compute advantages, run one
// minibatch pass over actors and critic, adapt the KL coefficient.
inline IterationMetrics train_iteration(Trainer& tr) {
  const auto t0 = std::chrono::steady_clock::now();
  IterationMetrics m;
  m.iteration = tr.iteration + 1;
  m.beta = tr.beta;

  RolloutBatch batch = collect_rollout(tr);

  double policy_loss = 0.0, kl = 0.0;
  int stat_count = 0;
  for (int a = 0; a < tr.net.size(); ++a) {
    const detail::ActorUpdateStats s = detail::update_actor(tr, a, batch);
    if (s.minibatches > 0) {
      policy_loss += s.policy_loss / s.minibatches;
      kl += s.kl / s.minibatches;
      stat_count += 1;
    }
  }
  m.policy_loss = stat_count ? policy_loss / stat_count : 0.0;
  m.mean_kl = stat_count ? kl / stat_count : 0.0;
  m.value_loss = detail::update_critic(tr, batch);

  tr.beta = kl_update(tr.beta, m.mean_kl, tr.cfg.kl_target);

  m.mean_episode_profit =
      std::accumulate(batch.episode_profit.begin(), batch.episode_profit.end(),
                      0.0) /
      static_cast<double>(batch.episode_profit.size());
  double entropy = 0.0;
  for (const Actor& a : tr.actors)
    entropy += gaussian_entropy(clamp_log_std(a.log_std));
  m.mean_entropy = entropy / static_cast<double>(tr.actors.size());
  if (!std::isfinite(m.policy_loss) || !std::isfinite(m.value_loss))
    throw std::runtime_error("train_iteration: non-finite loss at iteration " +
                             std::to_string(m.iteration));

  tr.iteration += 1;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
  return m;
}

// --- Evaluation ---

struct TraceRow {
  int t = 0;
  int node = 0;
  long long on_hand = 0;
  long long backlog = 0;
  long long arrived = 0;
  long long shipped = 0;
  long long order = 0;
  double revenue = 0.0;
  double order_cost = 0.0;
  double holding_cost = 0.0;
  double backlog_cost = 0.0;
  long long lost = 0;
};

struct EpisodeTrace {
  std::vector<TraceRow> rows;
  double profit = 0.0;
};

struct EvalStats {
  double profit_mean = 0.0;
  double profit_std = 0.0;
  double backlog_median = 0.0;
  double inventory_median = 0.0;
  std::vector<double> episode_profits;
  std::vector<double> episode_backlog;    // per-episode mean total backlog
  std::vector<double> episode_inventory;  // per-episode mean total on-hand
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

// Runs one episode with a caller-supplied order rule; used by both the
// policy evaluation and the static baseline.
template <typename OrderFn>
double run_episode(const SupplyNetwork& net, std::uint64_t seed,
                   OrderFn&& order_fn, int horizon,
                   EpisodeTrace* trace = nullptr, double* mean_backlog = nullptr,
                   double* mean_inventory = nullptr) {
  EnvState state = reset(net, seed);
  double profit = 0.0;
  double backlog_acc = 0.0, inv_acc = 0.0;
  for (int t = 0; t < horizon; ++t) {
    const std::vector<long long> orders = order_fn(state);
    const StepResult res = step(state, net, orders);
    profit += res.team_reward;
    long long total_b = 0, total_v = 0;
    for (int i = 0; i < net.size(); ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const long long node_b = std::accumulate(
          state.backlog[ui].begin(), state.backlog[ui].end(), 0LL);
      total_b += node_b;
      total_v += state.on_hand[ui];
      if (trace) {
        const NodeLedger& ledger = res.info[ui];
        trace->rows.push_back(TraceRow{t, i, state.on_hand[ui], node_b,
                                       ledger.arrived, ledger.shipped,
                                       ledger.order, ledger.revenue,
                                       ledger.order_cost, ledger.holding_cost,
                                       ledger.backlog_cost, ledger.lost});
      }
    }
    backlog_acc += static_cast<double>(total_b);
    inv_acc += static_cast<double>(total_v);
  }
  if (trace) trace->profit = profit;
  if (mean_backlog) *mean_backlog = backlog_acc / horizon;
  if (mean_inventory) *mean_inventory = inv_acc / horizon;
  return profit;
}

// Deterministic evaluation: actions are the tanh-bounded means, no sampling
// and no value noise regardless of sigma_n.
inline EvalStats evaluate(const Trainer& tr, int episodes, int horizon,
                          std::uint64_t eval_seed,
                          std::vector<EpisodeTrace>* traces = nullptr) {
  EvalStats stats;
  for (int ep = 0; ep < episodes; ++ep) {
    auto order_fn = [&](const EnvState& state) {
      std::vector<long long> orders(static_cast<std::size_t>(tr.net.size()));
      for (int a = 0; a < tr.net.size(); ++a) {
        const auto ua = static_cast<std::size_t>(a);
        const Vec obs = observe(state, tr.net, a, tr.net.history);
        const Vec mean = forward_vec(
            tr.actors[ua].net, normalize_observation(tr.net, a, obs));
        orders[ua] = decide_order(Eigen::Vector2d(mean(0), mean(1)),
                                  tr.bounds[ua], state.on_hand[ua],
                                  tr.net.nodes[ua].max_order)
                         .order;
      }
      return orders;
    };
    EpisodeTrace trace;
    double mean_b = 0.0, mean_v = 0.0;
    const double profit = run_episode(
        tr.net, mix_seed(eval_seed, 0xE7A1ULL, static_cast<std::uint64_t>(ep)),
        order_fn, horizon, traces ? &trace : nullptr, &mean_b, &mean_v);
    if (traces) traces->push_back(std::move(trace));
    stats.episode_profits.push_back(profit);
    stats.episode_backlog.push_back(mean_b);
    stats.episode_inventory.push_back(mean_v);
  }
  const double n = static_cast<double>(episodes);
  stats.profit_mean = std::accumulate(stats.episode_profits.begin(),
                                      stats.episode_profits.end(), 0.0) /
                      n;
  double var = 0.0;
  for (double p : stats.episode_profits) {
    const double d = p - stats.profit_mean;
    var += d * d;
  }
  stats.profit_std = episodes > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  stats.backlog_median = median(stats.episode_backlog);
  stats.inventory_median = median(stats.episode_inventory);
  return stats;
}

// --- Checkpointing ---

inline void save_trainer(const Trainer& tr, const std::string& path) {
  CheckpointWriter w;
  w.put_scalar("meta.variant", static_cast<double>(tr.cfg.variant));
  w.put_scalar("meta.nodes", static_cast<double>(tr.net.size()));
  w.put_scalar("meta.obs_dim", static_cast<double>(tr.obs_dim));
  w.put_scalar("meta.iteration", static_cast<double>(tr.iteration));
  w.put_scalar("meta.beta", tr.beta);
  w.put_scalar("meta.run_seed", static_cast<double>(tr.run_seed));
  w.put_scalar("meta.gcn_out", static_cast<double>(tr.cfg.gcn_out));
  for (std::size_t a = 0; a < tr.actors.size(); ++a) {
    const std::string p = "actor" + std::to_string(a);
    put_actor(w, p, tr.actors[a]);
    put_adam(w, p + ".adam", tr.actor_adam[a]);
    w.put(p + ".ls.m", tr.log_std_adam[a].m);
    w.put(p + ".ls.v", tr.log_std_adam[a].v);
    w.put_scalar(p + ".ls.t", static_cast<double>(tr.log_std_adam[a].t));
  }
  for (std::size_t c = 0; c < tr.critics.size(); ++c) {
    const std::string p = "critic" + std::to_string(c);
    put_dense_net(w, p, tr.critics[c]);
    put_adam(w, p + ".adam", tr.critic_adam[c]);
  }
  if (variant_uses_gcn(tr.cfg.variant)) {
    put_gcn(w, "gcn", tr.gcn);
    put_gcn_adam(w, "gcn.adam", tr.gcn_adam);
  }
  w.save(path);
}

inline Trainer load_trainer(const std::string& path, const SupplyNetwork& net,
                            const AlgoConfig& cfg) {
  CheckpointReader r(path);
  const auto variant = static_cast<Variant>(
      static_cast<int>(r.scalar("meta.variant")));
  if (variant != cfg.variant)
    throw std::runtime_error("checkpoint variant mismatch");
  if (static_cast<int>(r.scalar("meta.nodes")) != net.size())
    throw std::runtime_error("checkpoint/network mismatch: node count");
  if (static_cast<int>(r.scalar("meta.obs_dim")) != 3 + 2 * net.history)
    throw std::runtime_error("checkpoint/network mismatch: observation size");
  Trainer tr = make_trainer(net, cfg, static_cast<std::uint64_t>(
                                          r.scalar("meta.run_seed")));
  tr.iteration = static_cast<long>(r.scalar("meta.iteration"));
  tr.beta = r.scalar("meta.beta");
  for (std::size_t a = 0; a < tr.actors.size(); ++a) {
    const std::string p = "actor" + std::to_string(a);
    tr.actors[a] = get_actor(r, p);
    get_adam(r, p + ".adam", tr.actor_adam[a]);
    tr.log_std_adam[a].m = r.mat(p + ".ls.m");
    tr.log_std_adam[a].v = r.mat(p + ".ls.v");
    tr.log_std_adam[a].t = static_cast<long>(r.scalar(p + ".ls.t"));
  }
  for (std::size_t c = 0; c < tr.critics.size(); ++c) {
    const std::string p = "critic" + std::to_string(c);
    tr.critics[c] = get_dense_net(r, p);
    get_adam(r, p + ".adam", tr.critic_adam[c]);
  }
  if (variant_uses_gcn(cfg.variant)) {
    tr.gcn = get_gcn(r, "gcn");
    get_gcn_adam(r, "gcn.adam", tr.gcn_adam);
  }
  return tr;
}

}  // namespace echelon
