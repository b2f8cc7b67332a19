#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "echelon/marl.hpp"

using namespace echelon;

namespace {

const std::string kConfigDir = ECHELON_CONFIG_DIR;

SupplyNetwork net6() { return load_network_file(kConfigDir + "/net6.txt"); }

// direct double-summation transcription of the GAE sum
GaeResult gae_bruteforce(const std::vector<double>& rewards,
                         const std::vector<double>& values, double bootstrap,
                         double gamma, double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? values[t + 1] : bootstrap;
    delta[t] = rewards[t] + gamma * next - values[t];
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    for (std::size_t l = 0; t + l < n; ++l)
      acc += std::pow(gamma * lambda, static_cast<double>(l)) * delta[t + l];
    out.advantages[t] = acc;
    out.returns[t] = acc + values[t];
  }
  return out;
}

AlgoConfig tiny_config(Variant variant) {
  AlgoConfig cfg;
  cfg.variant = variant;
  cfg.rollout_steps = 200;  // 4 episodes of horizon 50
  cfg.iterations = 2;
  return cfg;
}

bool metrics_equal(const IterationMetrics& a, const IterationMetrics& b) {
  return a.iteration == b.iteration &&
         a.mean_episode_profit == b.mean_episode_profit &&
         a.mean_entropy == b.mean_entropy && a.policy_loss == b.policy_loss &&
         a.value_loss == b.value_loss && a.mean_kl == b.mean_kl &&
         a.beta == b.beta;
}

bool actors_equal(const Trainer& a, const Trainer& b) {
  for (std::size_t i = 0; i < a.actors.size(); ++i) {
    if (a.actors[i].log_std != b.actors[i].log_std) return false;
    for (std::size_t l = 0; l < a.actors[i].net.layers.size(); ++l) {
      if (a.actors[i].net.layers[l].weight !=
          b.actors[i].net.layers[l].weight)
        return false;
      if (a.actors[i].net.layers[l].bias != b.actors[i].net.layers[l].bias)
        return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("gae with lambda 0 collapses to one-step TD errors") {
  const std::vector<double> r = {1.0, -2.0, 0.5};
  const std::vector<double> v = {0.3, 0.1, -0.2};
  const GaeResult g = gae(r, v, 0.7, 0.9, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    const double next = t + 1 < 3 ? v[t + 1] : 0.7;
    REQUIRE(std::abs(g.advantages[t] - (r[t] + 0.9 * next - v[t])) < 1e-15);
  }
}

TEST_CASE("gae with lambda 1, gamma 1 and zero values gives reward suffixes") {
  const std::vector<double> r = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> v(4, 0.0);
  const GaeResult g = gae(r, v, 0.0, 1.0, 1.0);
  REQUIRE(g.advantages[0] == 10.0);
  REQUIRE(g.advantages[1] == 9.0);
  REQUIRE(g.advantages[2] == 7.0);
  REQUIRE(g.advantages[3] == 4.0);
}

TEST_CASE("gae matches the direct double summation") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10;
    std::vector<double> r(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      v[i] = rng.normal();
    }
    const double bootstrap = rng.normal();
    const double gamma = rng.uniform();
    const double lambda = rng.uniform();
    const GaeResult fast = gae(r, v, bootstrap, gamma, lambda);
    const GaeResult slow = gae_bruteforce(r, v, bootstrap, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      REQUIRE(std::abs(fast.advantages[t] - slow.advantages[t]) < 1e-12);
      REQUIRE(std::abs(fast.returns[t] - slow.returns[t]) < 1e-12);
    }
  }
}

TEST_CASE("gae rejects mismatched lengths") {
  REQUIRE_THROWS_AS(gae({1.0}, {1.0, 2.0}, 0.0, 0.9, 0.9),
                    std::invalid_argument);
}

TEST_CASE("ppo loss at unchanged policy is minus the mean advantage") {
  const std::vector<double> logp = {-1.0, -2.0, -0.5};
  const std::vector<double> adv = {1.0, -3.0, 0.5};
  const double loss = ppo_policy_loss(logp, logp, adv, 0.3);
  REQUIRE(std::abs(loss - (-(1.0 - 3.0 + 0.5) / 3.0)) < 1e-15);
}

TEST_CASE("ppo loss matches a literal two-branch evaluation") {
  Rng rng(6);
  const double eps = 0.3;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 32;
    std::vector<double> lp_new(n), lp_old(n), adv(n);
    for (std::size_t i = 0; i < n; ++i) {
      lp_new[i] = -1.0 + 0.5 * rng.normal();
      lp_old[i] = -1.0 + 0.5 * rng.normal();
      adv[i] = rng.normal();
    }
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double rho = std::exp(lp_new[i] - lp_old[i]);
      const double a = rho * adv[i];
      const double b =
          std::min(std::max(rho, 1.0 - eps), 1.0 + eps) * adv[i];
      expected += -(a < b ? a : b);
    }
    expected /= static_cast<double>(n);
    REQUIRE(std::abs(ppo_policy_loss(lp_new, lp_old, adv, eps) - expected) <
            1e-12);
  }
}

TEST_CASE("clipped side has exactly zero gradient, unclipped side nonzero") {
  const double eps = 0.3;
  // rho = 1 + 2 eps with positive advantage: clipped
  {
    const std::vector<double> lp_new = {std::log(1.0 + 2 * eps)};
    const std::vector<double> lp_old = {0.0};
    const auto g = ppo_policy_loss_grad(lp_new, lp_old, {1.0}, eps);
    REQUIRE(g[0] == 0.0);
  }
  // rho = 1 + 2 eps with negative advantage: unclipped
  {
    const std::vector<double> lp_new = {std::log(1.0 + 2 * eps)};
    const std::vector<double> lp_old = {0.0};
    const auto g = ppo_policy_loss_grad(lp_new, lp_old, {-1.0}, eps);
    REQUIRE(g[0] != 0.0);
  }
  // rho = 1 - 2 eps with negative advantage: clipped
  {
    const std::vector<double> lp_new = {std::log(1.0 - 2 * eps)};
    const std::vector<double> lp_old = {0.0};
    const auto g = ppo_policy_loss_grad(lp_new, lp_old, {-1.0}, eps);
    REQUIRE(g[0] == 0.0);
  }
  // rho = 1 - 2 eps with positive advantage: unclipped
  {
    const std::vector<double> lp_new = {std::log(1.0 - 2 * eps)};
    const std::vector<double> lp_old = {0.0};
    const auto g = ppo_policy_loss_grad(lp_new, lp_old, {1.0}, eps);
    REQUIRE(g[0] != 0.0);
  }
}

TEST_CASE("adaptive kl coefficient doubles, halves or holds") {
  REQUIRE(kl_update(0.2, 0.01, 0.01) == 0.2);
  REQUIRE(kl_update(0.2, 0.02, 0.01) == 0.4);
  REQUIRE(kl_update(0.2, 0.01 / 3.0, 0.01) == 0.1);
}

TEST_CASE("value noise is a no-op at sigma zero and has the right spread") {
  std::vector<double> values(100000, 1.0);
  Rng rng(9);
  inject_value_noise(values, 0.0, rng);
  for (double v : values) REQUIRE(v == 1.0);
  // sigma 0 must not consume the stream
  Rng fresh(9);
  REQUIRE(rng.next_u64() == fresh.next_u64());

  inject_value_noise(values, 0.5, rng);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / values.size());
  REQUIRE(std::abs(stddev - 0.5) < 0.01);
  REQUIRE(std::abs(mean - 1.0) < 0.01);
  REQUIRE_THROWS_AS(inject_value_noise(values, -0.1, rng),
                    std::invalid_argument);
}

TEST_CASE("critic input widths follow the variant") {
  const SupplyNetwork net = net6();
  REQUIRE(make_trainer(net, tiny_config(Variant::ippo), 0).critic_input_dim() ==
          9);
  REQUIRE(
      make_trainer(net, tiny_config(Variant::mappo), 0).critic_input_dim() ==
      54);
  REQUIRE(
      make_trainer(net, tiny_config(Variant::gmappo), 0).critic_input_dim() ==
      6 * 32);
  REQUIRE(make_trainer(net, tiny_config(Variant::pgcn_mappo), 0)
              .critic_input_dim() == 32);
  for (const auto& file : {"net12.txt", "net18.txt", "net24.txt"}) {
    const SupplyNetwork other =
        load_network_file(kConfigDir + "/" + std::string(file));
    REQUIRE(make_trainer(other, tiny_config(Variant::regpgcn_mappo), 0)
                .critic_input_dim() == 32);
  }
}

TEST_CASE("pooled critic broadcasts one value to every agent") {
  const SupplyNetwork net = net6();
  Trainer tr = make_trainer(net, tiny_config(Variant::pgcn_mappo), 3);
  EnvState state = reset(net, 3);
  std::vector<Vec> obs_norm;
  for (int i = 0; i < 6; ++i)
    obs_norm.push_back(
        normalize_observation(net, i, observe(state, net, i, net.history)));
  const Vec values = critic_value(tr, obs_norm);
  for (int a = 1; a < 6; ++a) REQUIRE(values(a) == values(0));

  Trainer ippo = make_trainer(net, tiny_config(Variant::ippo), 3);
  const Vec vi = critic_value(ippo, obs_norm);
  bool any_differ = false;
  for (int a = 1; a < 6; ++a)
    if (vi(a) != vi(0)) any_differ = true;
  REQUIRE(any_differ);
}

TEST_CASE("shared-critic rollouts give identical advantages to all agents") {
  const SupplyNetwork net = net6();
  Trainer tr = make_trainer(net, tiny_config(Variant::mappo), 4);
  const RolloutBatch batch = collect_rollout(tr);
  for (int a = 1; a < 6; ++a) {
    REQUIRE(batch.advantages.col(a) == batch.advantages.col(0));
    REQUIRE(batch.returns.col(a) == batch.returns.col(0));
  }
  // and the reward stream is shared by construction
  REQUIRE(batch.values.col(1) == batch.values.col(0));
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const SupplyNetwork net = net6();
  AlgoConfig cfg = tiny_config(Variant::pgcn_mappo);
  cfg.lr = 0.0;
  Trainer tr = make_trainer(net, cfg, 5);
  const Trainer before = tr;
  const IterationMetrics m = train_iteration(tr);
  REQUIRE(actors_equal(tr, before));
  REQUIRE(m.iteration == 1);
  REQUIRE(std::isfinite(m.mean_episode_profit));
  REQUIRE(std::isfinite(m.policy_loss));
}

TEST_CASE("training iterations are deterministic given the seed") {
  const SupplyNetwork net = net6();
  Trainer a = make_trainer(net, tiny_config(Variant::regpgcn_mappo), 6);
  Trainer b = make_trainer(net, tiny_config(Variant::regpgcn_mappo), 6);
  a.cfg.noise_std = 0.5;
  b.cfg.noise_std = 0.5;
  for (int i = 0; i < 2; ++i) {
    const IterationMetrics ma = train_iteration(a);
    const IterationMetrics mb = train_iteration(b);
    REQUIRE(metrics_equal(ma, mb));
  }
  REQUIRE(actors_equal(a, b));
}

TEST_CASE("entropy metric equals the closed form of the current heads") {
  const SupplyNetwork net = net6();
  Trainer tr = make_trainer(net, tiny_config(Variant::mappo), 7);
  const IterationMetrics m = train_iteration(tr);
  double expected = 0.0;
  for (const Actor& a : tr.actors)
    expected += gaussian_entropy(clamp_log_std(a.log_std));
  expected /= static_cast<double>(tr.actors.size());
  REQUIRE(m.mean_entropy == expected);
}

TEST_CASE("reg variant with zero noise is bit-identical to the pooled one") {
  const SupplyNetwork net = net6();
  AlgoConfig reg = tiny_config(Variant::regpgcn_mappo);
  reg.noise_std = 0.0;
  AlgoConfig plain = tiny_config(Variant::pgcn_mappo);
  Trainer a = make_trainer(net, reg, 8);
  Trainer b = make_trainer(net, plain, 8);
  for (int i = 0; i < 2; ++i)
    REQUIRE(metrics_equal(train_iteration(a), train_iteration(b)));
  REQUIRE(actors_equal(a, b));
}

TEST_CASE("noise with positive sigma changes the run") {
  const SupplyNetwork net = net6();
  AlgoConfig reg = tiny_config(Variant::regpgcn_mappo);
  reg.noise_std = 0.5;
  Trainer a = make_trainer(net, reg, 8);
  Trainer b = make_trainer(net, tiny_config(Variant::pgcn_mappo), 8);
  train_iteration(a);
  train_iteration(b);
  REQUIRE(!actors_equal(a, b));
}

TEST_CASE("evaluation is deterministic and ignores the noise setting") {
  const SupplyNetwork net = net6();
  AlgoConfig reg = tiny_config(Variant::regpgcn_mappo);
  reg.noise_std = 2.0;
  const Trainer noisy = make_trainer(net, reg, 9);
  const Trainer plain = make_trainer(net, tiny_config(Variant::pgcn_mappo), 9);
  const EvalStats sa = evaluate(noisy, 5, 50, 1234);
  const EvalStats sb = evaluate(plain, 5, 50, 1234);
  REQUIRE(sa.profit_mean == sb.profit_mean);
  REQUIRE(sa.episode_profits == sb.episode_profits);
}

TEST_CASE("zero-price network can never profit") {
  const SupplyNetwork net = load_network(
      "lambda_d 3\nlambda_l 1\nhorizon 20\nhistory 3\n"
      "node 0 0.5 0.0 100 100 50 0 0.5 2.5 1\n"
      "node 1 0.5 0.0 100 100 50 0 0.5 2.5 -\n");
  AlgoConfig cfg = tiny_config(Variant::mappo);
  cfg.rollout_steps = 100;  // 5 episodes of horizon 20
  const Trainer tr = make_trainer(net, cfg, 10);
  const EvalStats stats = evaluate(tr, 5, 20, 99);
  REQUIRE(stats.profit_mean <= 0.0);
}

TEST_CASE("evaluation statistics recompute from the exported traces") {
  const SupplyNetwork net = net6();
  const Trainer tr = make_trainer(net, tiny_config(Variant::pgcn_mappo), 11);
  std::vector<EpisodeTrace> traces;
  const EvalStats stats = evaluate(tr, 5, 50, 777, &traces);
  REQUIRE(traces.size() == 5);
  for (std::size_t ep = 0; ep < 5; ++ep) {
    double profit = 0.0;
    for (const TraceRow& row : traces[ep].rows)
      profit +=
          row.revenue - row.order_cost - row.holding_cost - row.backlog_cost;
    REQUIRE(std::abs(profit - stats.episode_profits[ep]) < 1e-9);
    REQUIRE(traces[ep].rows.size() == 50 * 6);
  }
}

TEST_CASE("checkpoint resume continues the identical trajectory") {
  const SupplyNetwork net = net6();
  const AlgoConfig cfg = tiny_config(Variant::regpgcn_mappo);

  Trainer continuous = make_trainer(net, cfg, 12);
  const IterationMetrics c1 = train_iteration(continuous);
  const IterationMetrics c2 = train_iteration(continuous);

  Trainer first = make_trainer(net, cfg, 12);
  const IterationMetrics f1 = train_iteration(first);
  REQUIRE(metrics_equal(c1, f1));
  const std::string path = "/tmp/echelon_marl_ckpt_test.bin";
  save_trainer(first, path);

  Trainer resumed = load_trainer(path, net, cfg);
  REQUIRE(resumed.iteration == 1);
  const IterationMetrics r2 = train_iteration(resumed);
  REQUIRE(metrics_equal(c2, r2));
  REQUIRE(actors_equal(continuous, resumed));
}

TEST_CASE("checkpoint rejects a mismatched network or variant") {
  const SupplyNetwork net = net6();
  const AlgoConfig cfg = tiny_config(Variant::mappo);
  Trainer tr = make_trainer(net, cfg, 13);
  const std::string path = "/tmp/echelon_marl_ckpt_mismatch.bin";
  save_trainer(tr, path);

  const SupplyNetwork other = load_network_file(kConfigDir + "/net12.txt");
  REQUIRE_THROWS_AS(load_trainer(path, other, cfg), std::runtime_error);
  AlgoConfig wrong = cfg;
  wrong.variant = Variant::ippo;
  REQUIRE_THROWS_AS(load_trainer(path, net, wrong), std::runtime_error);
}
