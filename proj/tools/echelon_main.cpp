// Command-line front end: train, evaluate, tune the static baseline, run the
// value-noise sweep, the demand-shift robustness check, and the per-variant
// timing comparison.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "echelon/harness.hpp"

namespace {

void add_common(CLI::App* cmd, echelon::ExperimentSpec& spec,
                std::string& algo_name) {
  cmd->add_option("--net", spec.net_file, "network config file")->required();
  cmd->add_option("--algo", algo_name,
                  "algorithm: ippo|mappo|gmappo|pgcn|regpgcn");
  cmd->add_option("--seed", spec.seeds, "training seeds (repeatable)");
  cmd->add_option("--iters", spec.iterations, "training iterations");
  cmd->add_option("--noise-std", spec.noise_std,
                  "value-noise sigma (regpgcn only)");
  cmd->add_option("--lambda-d", spec.lambda_d_override,
                  "override expected demand per step");
  cmd->add_option("--lambda-l", spec.lambda_l_override,
                  "override expected lead time");
  cmd->add_option("--history", spec.history_override,
                  "override observation history length M");
  cmd->add_option("--horizon", spec.horizon_override,
                  "override episode horizon");
  cmd->add_option("--eval-episodes", spec.eval_episodes,
                  "evaluation episodes");
  cmd->add_option("--eval-seed", spec.eval_seed, "evaluation seed");
  cmd->add_option("--rollout", spec.rollout_steps,
                  "env steps collected per training iteration");
  cmd->add_option("--out", spec.out_dir, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-echelon inventory control laboratory"};
  app.require_subcommand(1);

  echelon::ExperimentSpec spec;
  std::string algo_name = "regpgcn";
  std::string checkpoint;
  bool resume = false;

  CLI::App* train = app.add_subcommand("train", "train a policy");
  add_common(train, spec, algo_name);
  train->add_flag("--resume", resume, "continue from existing checkpoints");

  CLI::App* eval =
      app.add_subcommand("eval", "evaluate a checkpoint or static policy");
  add_common(eval, spec, algo_name);
  std::string static_policy_file;
  eval->add_option("--ckpt", checkpoint, "checkpoint file");
  eval->add_option("--static", static_policy_file,
                   "tuned (s,S) policy file from the baseline command");

  CLI::App* baseline =
      app.add_subcommand("baseline", "tune the static (s,S) heuristic");
  add_common(baseline, spec, algo_name);
  baseline->add_option("--starts", spec.baseline_starts, "multi-start count");
  baseline->add_option("--budget", spec.baseline_budget,
                       "objective evaluation budget");

  CLI::App* sweep = app.add_subcommand(
      "noise-sweep", "train regpgcn across value-noise levels");
  add_common(sweep, spec, algo_name);
  std::vector<double> sigmas = {0.0, 0.1, 0.2, 0.5, 1.0, 2.0};
  sweep->add_option("--sigmas", sigmas, "noise levels to sweep");

  CLI::App* shift = app.add_subcommand(
      "demand-shift", "evaluate a checkpoint under shifted demand");
  add_common(shift, spec, algo_name);
  shift->add_option("--ckpt", checkpoint, "checkpoint file")->required();
  std::vector<double> lambdas = {3, 4, 5, 6, 7};
  shift->add_option("--lambdas", lambdas, "demand rates to test");

  CLI::App* timing =
      app.add_subcommand("timing", "per-iteration training time comparison");
  add_common(timing, spec, algo_name);
  std::vector<std::string> timing_nets;
  timing->add_option("--nets", timing_nets,
                     "network files (defaults to --net only)");
  std::vector<std::string> timing_algos = {"ippo", "mappo", "gmappo", "pgcn",
                                           "regpgcn"};
  timing->add_option("--algos", timing_algos, "variants to time");
  int timing_iters = 12;
  timing->add_option("--timing-iters", timing_iters,
                     "iterations per (variant, net) cell");

  CLI::App* probe = app.add_subcommand(
      "probe", "print the (s,S) pair a checkpointed actor induces");
  probe->add_option("--net", spec.net_file, "network config file")->required();
  probe->add_option("--algo", algo_name, "algorithm variant");
  probe->add_option("--ckpt", checkpoint, "checkpoint file")->required();
  int probe_agent = 0;
  probe->add_option("--agent", probe_agent, "agent index")->required();
  std::vector<double> probe_obs;
  probe
      ->add_option("--obs", probe_obs,
                   "raw observation [v b p d^-1.. o^-1..], length 3+2M")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    spec.algo = echelon::parse_variant(algo_name);

    if (train->parsed()) {
      const auto runs = echelon::cmd_train(spec, resume);
      for (const auto& run : runs)
        std::printf("seed %llu: profit %.1f entropy %.3f (%zu iterations)\n",
                    static_cast<unsigned long long>(run.seed),
                    run.metrics.back().mean_episode_profit,
                    run.metrics.back().mean_entropy, run.metrics.size());
      std::printf("wrote %s/train_seed*.csv and checkpoints\n",
                  spec.out_dir.c_str());
    } else if (eval->parsed()) {
      if (checkpoint.empty() == static_policy_file.empty())
        throw std::invalid_argument("eval needs exactly one of --ckpt/--static");
      const auto stats =
          checkpoint.empty()
              ? echelon::cmd_eval_static(spec, static_policy_file)
              : echelon::cmd_eval(spec, checkpoint);
      std::printf("profit %.1f +- %.1f | backlog median %.1f | "
                  "inventory median %.1f\n",
                  stats.profit_mean, stats.profit_std, stats.backlog_median,
                  stats.inventory_median);
    } else if (baseline->parsed()) {
      const auto out = echelon::cmd_baseline(spec);
      std::printf("tuned static policy: tuning profit %.1f, eval profit "
                  "%.1f +- %.1f (%ld evaluations%s)\n",
                  out.opt.profit, out.eval.profit_mean, out.eval.profit_std,
                  out.opt.evaluations, out.opt.truncated ? ", truncated" : "");
      std::printf("wrote %s/ss_policy.txt\n", spec.out_dir.c_str());
    } else if (sweep->parsed()) {
      const auto rows = echelon::cmd_noise_sweep(spec, sigmas);
      for (const auto& r : rows)
        std::printf("sigma %.2f seed %llu: profit %.1f +- %.1f\n", r.sigma,
                    static_cast<unsigned long long>(r.seed), r.profit_mean,
                    r.profit_std);
    } else if (shift->parsed()) {
      const auto rows = echelon::cmd_demand_shift(spec, checkpoint, lambdas);
      for (const auto& r : rows)
        std::printf("lambda_d %.1f: profit %.1f backlog %.1f inventory %.1f\n",
                    r.lambda_d, r.profit_mean, r.backlog_median,
                    r.inventory_median);
    } else if (timing->parsed()) {
      if (timing_nets.empty()) timing_nets = {spec.net_file};
      std::vector<echelon::Variant> variants;
      for (const auto& name : timing_algos)
        variants.push_back(echelon::parse_variant(name));
      const auto rows =
          echelon::cmd_timing(spec, timing_nets, variants, timing_iters);
      for (const auto& r : rows)
        std::printf("%s on %s (%d nodes): %.3f +- %.3f s/iter "
                    "(%d kept, %d outliers)\n",
                    r.variant.c_str(), r.net.c_str(), r.nodes, r.mean_seconds,
                    r.std_seconds, r.iterations, r.outliers_removed);
    } else if (probe->parsed()) {
      const auto net = echelon::load_spec_network(spec);
      const auto tr = echelon::load_trainer(checkpoint, net,
                                            echelon::algo_config_for(spec));
      const int expected = 3 + 2 * net.history;
      if (static_cast<int>(probe_obs.size()) != expected)
        throw std::invalid_argument("--obs needs " + std::to_string(expected) +
                                    " values");
      Eigen::VectorXd obs(expected);
      for (int i = 0; i < expected; ++i) obs(i) = probe_obs[static_cast<std::size_t>(i)];
      const auto ua = static_cast<std::size_t>(probe_agent);
      const Eigen::VectorXd mean = echelon::forward_vec(
          tr.actors.at(ua).net,
          echelon::normalize_observation(net, probe_agent, obs));
      const auto decision = echelon::decide_order(
          Eigen::Vector2d(mean(0), mean(1)), tr.bounds.at(ua),
          static_cast<long long>(obs(0)),
          net.nodes.at(ua).max_order);
      std::printf("agent %d: s = %.2f, S = %.2f -> order %lld at v = %.0f\n",
                  probe_agent, decision.s, decision.S,
                  static_cast<long long>(decision.order), obs(0));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
