#pragma once

#include <cmath>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "echelon/baseline.hpp"
#include "echelon/io.hpp"
#include "echelon/marl.hpp"
#include "echelon/svg.hpp"
#include "echelon/threading.hpp"

namespace echelon {

struct ExperimentSpec {
  std::string net_file;
  Variant algo = Variant::regpgcn_mappo;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  int iterations = 60;
  double noise_std = 0.5;
  double lambda_d_override = -1.0;
  double lambda_l_override = -1.0;
  int history_override = -1;
  int horizon_override = -1;
  std::string out_dir = "runs";
  int rollout_steps = 4000;
  int eval_episodes = 20;
  int eval_horizon = 50;
  std::uint64_t eval_seed = 9000;
  int baseline_starts = 20;
  long baseline_budget = 5000;
  int workers = -1;  // <=0: ECHELON_WORKERS or hardware concurrency
};

inline SupplyNetwork load_spec_network(const ExperimentSpec& spec) {
  if (spec.net_file.empty())
    throw std::invalid_argument("no network file given");
  SupplyNetwork net = load_network_file(spec.net_file);
  if (spec.lambda_d_override >= 0) net.demand_rate = spec.lambda_d_override;
  if (spec.lambda_l_override >= 0) net.lead_rate = spec.lambda_l_override;
  if (spec.history_override > 0) net.history = spec.history_override;
  if (spec.horizon_override > 0) net.horizon = spec.horizon_override;
  return net;
}

inline AlgoConfig algo_config_for(const ExperimentSpec& spec) {
  AlgoConfig cfg;
  cfg.variant = spec.algo;
  cfg.iterations = spec.iterations;
  cfg.rollout_steps = spec.rollout_steps;
  cfg.noise_std =
      spec.algo == Variant::regpgcn_mappo ? spec.noise_std : 0.0;
  return cfg;
}

inline const std::vector<std::string>& training_csv_header() {
  static const std::vector<std::string> h = {
      "iteration",       "mean_episode_profit", "mean_entropy",
      "policy_loss",     "value_loss",          "mean_kl",
      "beta",            "seconds"};
  return h;
}

inline void append_metrics_row(CsvWriter& csv, const IterationMetrics& m) {
  csv.row(m.iteration, m.mean_episode_profit, m.mean_entropy, m.policy_loss,
          m.value_loss, m.mean_kl, m.beta, m.seconds);
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<IterationMetrics> metrics;
  Trainer trainer;  // final state
};

// Train one seed to completion (or resume from a checkpoint file).
inline SeedRun run_training(const SupplyNetwork& net, const AlgoConfig& cfg,
                            std::uint64_t seed,
                            const std::string& resume_from = "") {
  SeedRun run;
  run.seed = seed;
  run.trainer = resume_from.empty() ? make_trainer(net, cfg, seed)
                                    : load_trainer(resume_from, net, cfg);
  while (run.trainer.iteration < cfg.iterations)
    run.metrics.push_back(train_iteration(run.trainer));
  return run;
}

// train: one training CSV, entropy curve and checkpoint per seed.
inline std::vector<SeedRun> cmd_train(const ExperimentSpec& spec,
                                      bool resume = false) {
  const SupplyNetwork net = load_spec_network(spec);
  const AlgoConfig cfg = algo_config_for(spec);
  ensure_dir(spec.out_dir);

  std::vector<SeedRun> runs(spec.seeds.size());
  parallel_tasks(
      static_cast<int>(spec.seeds.size()),
      [&](int i) {
        const std::uint64_t seed = spec.seeds[static_cast<std::size_t>(i)];
        const std::string ckpt = spec.out_dir + "/ckpt_seed" +
                                 std::to_string(seed) + ".bin";
        const std::string resume_from =
            resume && std::filesystem::exists(ckpt) ? ckpt : "";
        runs[static_cast<std::size_t>(i)] =
            run_training(net, cfg, seed, resume_from);
      },
      spec.workers);

  std::vector<Series> profit_series, entropy_series;
  for (const SeedRun& run : runs) {
    const std::string tag = std::to_string(run.seed);
    CsvWriter csv(spec.out_dir + "/train_seed" + tag + ".csv",
                  training_csv_header());
    Series profit{"seed " + tag, {}, {}}, entropy{"seed " + tag, {}, {}};
    for (const IterationMetrics& m : run.metrics) {
      append_metrics_row(csv, m);
      profit.x.push_back(static_cast<double>(m.iteration));
      profit.y.push_back(m.mean_episode_profit);
      entropy.x.push_back(static_cast<double>(m.iteration));
      entropy.y.push_back(m.mean_entropy);
    }
    profit_series.push_back(std::move(profit));
    entropy_series.push_back(std::move(entropy));
    save_trainer(run.trainer, spec.out_dir + "/ckpt_seed" + tag + ".bin");
  }
  write_line_chart(spec.out_dir + "/training_profit.svg",
                   std::string("training profit, ") + variant_name(spec.algo),
                   "iteration", "mean episode profit", profit_series);
  write_line_chart(spec.out_dir + "/training_entropy.svg",
                   std::string("policy entropy, ") + variant_name(spec.algo),
                   "iteration", "mean policy entropy", entropy_series);
  return runs;
}

inline void write_trace_csv(const std::string& path,
                            const EpisodeTrace& trace) {
  CsvWriter csv(path, {"t", "node", "on_hand", "backlog", "arrived", "shipped",
                       "order", "revenue", "order_cost", "holding_cost",
                       "backlog_cost", "lost"});
  for (const TraceRow& r : trace.rows)
    csv.row(r.t, r.node, r.on_hand, r.backlog, r.arrived, r.shipped, r.order,
            r.revenue, r.order_cost, r.holding_cost, r.backlog_cost, r.lost);
}

// eval: per-episode rows plus one summary row; writes one trace CSV per
// episode for oracle diffing.
inline EvalStats cmd_eval(const ExperimentSpec& spec,
                          const std::string& checkpoint) {
  const SupplyNetwork net = load_spec_network(spec);
  const AlgoConfig cfg = algo_config_for(spec);
  const Trainer tr = load_trainer(checkpoint, net, cfg);
  ensure_dir(spec.out_dir);

  std::vector<EpisodeTrace> traces;
  const EvalStats stats =
      evaluate(tr, spec.eval_episodes, spec.eval_horizon, spec.eval_seed,
               &traces);
  for (std::size_t ep = 0; ep < traces.size(); ++ep)
    write_trace_csv(spec.out_dir + "/trace_ep" + std::to_string(ep) + ".csv",
                    traces[ep]);
  CsvWriter csv(spec.out_dir + "/eval.csv",
                {"episode", "profit", "mean_backlog", "mean_inventory"});
  for (std::size_t ep = 0; ep < stats.episode_profits.size(); ++ep)
    csv.row(ep, stats.episode_profits[ep], stats.episode_backlog[ep],
            stats.episode_inventory[ep]);
  CsvWriter summary(spec.out_dir + "/eval_summary.csv",
                    {"profit_mean", "profit_std", "backlog_median",
                     "inventory_median"});
  summary.row(stats.profit_mean, stats.profit_std, stats.backlog_median,
              stats.inventory_median);
  return stats;
}

// baseline: tune the static (s,S) policy, save it, report tuned profit on
// the shared evaluation seed set.
struct BaselineOutcome {
  OptimizeResult opt;
  EvalStats eval;
};

inline EvalStats eval_static(const StaticPolicy& policy,
                             const SupplyNetwork& net, int episodes,
                             int horizon, std::uint64_t eval_seed,
                             std::vector<EpisodeTrace>* traces = nullptr) {
  EvalStats stats;
  auto order_fn = [&](const EnvState& state) {
    std::vector<long long> orders(static_cast<std::size_t>(net.size()));
    for (int i = 0; i < net.size(); ++i) {
      const auto ui = static_cast<std::size_t>(i);
      orders[ui] = order_from_ss(
          static_cast<double>(policy.ss[ui].first),
          static_cast<double>(policy.ss[ui].second), state.on_hand[ui],
          net.nodes[ui].max_order);
    }
    return orders;
  };
  for (int ep = 0; ep < episodes; ++ep) {
    EpisodeTrace trace;
    double mean_b = 0.0, mean_v = 0.0;
    const double profit = run_episode(
        net, mix_seed(eval_seed, 0xE7A1ULL, static_cast<std::uint64_t>(ep)),
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

// eval of a tuned static policy file; same outputs as cmd_eval, enabling
// head-to-head tables against checkpoints on the same evaluation seeds.
inline EvalStats cmd_eval_static(const ExperimentSpec& spec,
                                 const std::string& policy_file) {
  const SupplyNetwork net = load_spec_network(spec);
  const StaticPolicy policy = load_static_policy(policy_file);
  validate_static(policy, net);
  ensure_dir(spec.out_dir);
  std::vector<EpisodeTrace> traces;
  const EvalStats stats =
      eval_static(policy, net, spec.eval_episodes, spec.eval_horizon,
                  spec.eval_seed, &traces);
  for (std::size_t ep = 0; ep < traces.size(); ++ep)
    write_trace_csv(spec.out_dir + "/trace_ep" + std::to_string(ep) + ".csv",
                    traces[ep]);
  CsvWriter csv(spec.out_dir + "/eval.csv",
                {"episode", "profit", "mean_backlog", "mean_inventory"});
  for (std::size_t ep = 0; ep < stats.episode_profits.size(); ++ep)
    csv.row(ep, stats.episode_profits[ep], stats.episode_backlog[ep],
            stats.episode_inventory[ep]);
  CsvWriter summary(spec.out_dir + "/eval_summary.csv",
                    {"profit_mean", "profit_std", "backlog_median",
                     "inventory_median"});
  summary.row(stats.profit_mean, stats.profit_std, stats.backlog_median,
              stats.inventory_median);
  return stats;
}

inline BaselineOutcome cmd_baseline(const ExperimentSpec& spec) {
  const SupplyNetwork net = load_spec_network(spec);
  ensure_dir(spec.out_dir);
  BaselineOutcome out;
  out.opt = optimize_static(net, spec.baseline_starts, spec.baseline_budget,
                            spec.seeds.empty() ? 0 : spec.seeds.front());
  save_static_policy(out.opt.best, spec.out_dir + "/ss_policy.txt");
  out.eval = eval_static(out.opt.best, net, spec.eval_episodes,
                         spec.eval_horizon, spec.eval_seed);
  CsvWriter csv(spec.out_dir + "/baseline.csv",
                {"evaluations", "truncated", "tuning_profit", "eval_profit_mean",
                 "eval_profit_std", "backlog_median", "inventory_median"});
  csv.row(out.opt.evaluations, out.opt.truncated ? 1 : 0, out.opt.profit,
          out.eval.profit_mean, out.eval.profit_std, out.eval.backlog_median,
          out.eval.inventory_median);
  return out;
}

// noise-sweep: train the regularized variant at each sigma, evaluate, and
// emit one row per (sigma, seed).
struct SweepRow {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double profit_mean = 0.0;
  double profit_std = 0.0;
  double final_entropy = 0.0;
  double mean_iter_seconds = 0.0;
};

inline std::vector<SweepRow> cmd_noise_sweep(
    const ExperimentSpec& spec,
    const std::vector<double>& sigmas = {0.0, 0.1, 0.2, 0.5, 1.0, 2.0}) {
  const SupplyNetwork net = load_spec_network(spec);
  ensure_dir(spec.out_dir);

  struct Job {
    double sigma;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double sigma : sigmas)
    for (std::uint64_t seed : spec.seeds) jobs.push_back({sigma, seed});

  std::vector<SweepRow> rows(jobs.size());
  std::vector<std::vector<IterationMetrics>> all_metrics(jobs.size());
  parallel_tasks(
      static_cast<int>(jobs.size()),
      [&](int j) {
        const Job& job = jobs[static_cast<std::size_t>(j)];
        AlgoConfig cfg = algo_config_for(spec);
        cfg.variant = Variant::regpgcn_mappo;
        cfg.noise_std = job.sigma;
        SeedRun run = run_training(net, cfg, job.seed);
        const EvalStats stats = evaluate(run.trainer, spec.eval_episodes,
                                         spec.eval_horizon, spec.eval_seed);
        SweepRow row;
        row.sigma = job.sigma;
        row.seed = job.seed;
        row.profit_mean = stats.profit_mean;
        row.profit_std = stats.profit_std;
        row.final_entropy = run.metrics.back().mean_entropy;
        double seconds = 0.0;
        for (const auto& m : run.metrics) seconds += m.seconds;
        row.mean_iter_seconds = seconds / run.metrics.size();
        rows[static_cast<std::size_t>(j)] = row;
        all_metrics[static_cast<std::size_t>(j)] = std::move(run.metrics);
      },
      spec.workers);

  CsvWriter csv(spec.out_dir + "/sweep.csv",
                {"sigma", "seed", "profit_mean", "profit_std", "final_entropy",
                 "mean_iter_seconds"});
  for (const SweepRow& r : rows)
    csv.row(r.sigma, r.seed, r.profit_mean, r.profit_std, r.final_entropy,
            r.mean_iter_seconds);

  std::vector<Series> entropy_series;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    std::ostringstream label;
    label << "sigma=" << jobs[j].sigma << " seed=" << jobs[j].seed;
    Series s{label.str(), {}, {}};
    for (const auto& m : all_metrics[j]) {
      s.x.push_back(static_cast<double>(m.iteration));
      s.y.push_back(m.mean_entropy);
    }
    entropy_series.push_back(std::move(s));
    CsvWriter curve(spec.out_dir + "/entropy_sigma" +
                        CsvWriter::to_cell(jobs[j].sigma) + "_seed" +
                        std::to_string(jobs[j].seed) + ".csv",
                    training_csv_header());
    for (const auto& m : all_metrics[j]) append_metrics_row(curve, m);
  }
  write_line_chart(spec.out_dir + "/sweep_entropy.svg",
                   "entropy during training across noise levels", "iteration",
                   "mean policy entropy", entropy_series);
  std::vector<std::string> labels;
  std::vector<double> values;
  for (double sigma : sigmas) {
    double mean = 0.0;
    int count = 0;
    for (const SweepRow& r : rows)
      if (r.sigma == sigma) {
        mean += r.profit_mean;
        ++count;
      }
    labels.push_back(CsvWriter::to_cell(sigma));
    values.push_back(count ? mean / count : 0.0);
  }
  write_bar_chart(spec.out_dir + "/sweep_profit.svg",
                  "evaluation profit vs value-noise sigma", "profit", labels,
                  values);
  return rows;
}

// demand-shift: evaluate a trained checkpoint under shifted demand rates and
// compare empirical demand frequencies with the Poisson PMF.
struct ShiftRow {
  double lambda_d = 0.0;
  double profit_mean = 0.0;
  double profit_std = 0.0;
  double backlog_median = 0.0;
  double inventory_median = 0.0;
};

inline double poisson_pmf(double lambda, long long k) {
  double log_p = -lambda + static_cast<double>(k) * std::log(lambda);
  for (long long j = 2; j <= k; ++j) log_p -= std::log(static_cast<double>(j));
  return std::exp(log_p);
}

inline std::vector<ShiftRow> cmd_demand_shift(
    const ExperimentSpec& spec, const std::string& checkpoint,
    const std::vector<double>& lambdas = {3, 4, 5, 6, 7},
    int histogram_draws = 10000) {
  ensure_dir(spec.out_dir);
  std::vector<ShiftRow> rows;
  for (double lambda : lambdas) {
    ExperimentSpec shifted = spec;
    shifted.lambda_d_override = lambda;
    const SupplyNetwork net = load_spec_network(shifted);
    const Trainer tr = load_trainer(checkpoint, net, algo_config_for(spec));
    const EvalStats stats =
        evaluate(tr, spec.eval_episodes, spec.eval_horizon, spec.eval_seed);
    rows.push_back(ShiftRow{lambda, stats.profit_mean, stats.profit_std,
                            stats.backlog_median, stats.inventory_median});
  }
  CsvWriter csv(spec.out_dir + "/demand_shift.csv",
                {"lambda_d", "profit_mean", "profit_std", "backlog_median",
                 "inventory_median"});
  for (const ShiftRow& r : rows)
    csv.row(r.lambda_d, r.profit_mean, r.profit_std, r.backlog_median,
            r.inventory_median);

  CsvWriter hist(spec.out_dir + "/demand_hist.csv",
                 {"lambda_d", "k", "empirical", "pmf"});
  for (double lambda : lambdas) {
    Rng rng(mix_seed(spec.eval_seed, 0xA157ULL));
    std::vector<long long> counts;
    for (int i = 0; i < histogram_draws; ++i) {
      const long long k = rng.poisson(lambda);
      if (static_cast<std::size_t>(k) >= counts.size())
        counts.resize(static_cast<std::size_t>(k) + 1, 0);
      counts[static_cast<std::size_t>(k)] += 1;
    }
    for (std::size_t k = 0; k < counts.size(); ++k)
      hist.row(lambda, k,
               static_cast<double>(counts[k]) / histogram_draws,
               poisson_pmf(lambda, static_cast<long long>(k)));
  }

  std::vector<Series> series(2);
  series[0].label = "profit";
  series[1].label = "backlog (median)";
  for (const ShiftRow& r : rows) {
    series[0].x.push_back(r.lambda_d);
    series[0].y.push_back(r.profit_mean);
    series[1].x.push_back(r.lambda_d);
    series[1].y.push_back(r.backlog_median);
  }
  write_line_chart(spec.out_dir + "/demand_shift.svg",
                   "robustness to demand shift", "lambda_d", "value", series);
  return rows;
}

// timing: mean per-iteration seconds per (variant, network), outliers more
// than two standard deviations above the mean removed first.
struct TimingRow {
  std::string variant;
  std::string net;
  int nodes = 0;
  int iterations = 0;
  int outliers_removed = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
};

inline TimingRow summarize_timing(const std::string& variant,
                                  const std::string& net_name, int nodes,
                                  std::vector<double> seconds) {
  TimingRow row;
  row.variant = variant;
  row.net = net_name;
  row.nodes = nodes;
  const double mean0 =
      std::accumulate(seconds.begin(), seconds.end(), 0.0) / seconds.size();
  double var0 = 0.0;
  for (double s : seconds) var0 += (s - mean0) * (s - mean0);
  const double sd0 = std::sqrt(var0 / seconds.size());
  std::vector<double> kept;
  for (double s : seconds)
    if (s <= mean0 + 2.0 * sd0) kept.push_back(s);
  row.outliers_removed = static_cast<int>(seconds.size() - kept.size());
  row.iterations = static_cast<int>(kept.size());
  const double mean =
      std::accumulate(kept.begin(), kept.end(), 0.0) / kept.size();
  double var = 0.0;
  for (double s : kept) var += (s - mean) * (s - mean);
  row.mean_seconds = mean;
  row.std_seconds = std::sqrt(var / kept.size());
  return row;
}

inline std::vector<TimingRow> cmd_timing(
    const ExperimentSpec& spec, const std::vector<std::string>& net_files,
    const std::vector<Variant>& variants, int iterations_per_cell = 12) {
  ensure_dir(spec.out_dir);
  std::vector<TimingRow> rows;
  for (const std::string& net_file : net_files) {
    ExperimentSpec cell_spec = spec;
    cell_spec.net_file = net_file;
    const SupplyNetwork net = load_spec_network(cell_spec);
    for (Variant v : variants) {
      AlgoConfig cfg = algo_config_for(spec);
      cfg.variant = v;
      cfg.noise_std = v == Variant::regpgcn_mappo ? spec.noise_std : 0.0;
      cfg.iterations = iterations_per_cell;
      Trainer tr = make_trainer(net, cfg,
                                spec.seeds.empty() ? 0 : spec.seeds.front());
      std::vector<double> seconds;
      for (int it = 0; it < iterations_per_cell; ++it)
        seconds.push_back(train_iteration(tr).seconds);
      rows.push_back(summarize_timing(
          variant_name(v),
          std::filesystem::path(net_file).stem().string(), net.size(),
          seconds));
    }
  }
  CsvWriter csv(spec.out_dir + "/timing.csv",
                {"variant", "net", "nodes", "iterations_kept",
                 "outliers_removed", "mean_seconds", "std_seconds"});
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const TimingRow& r : rows) {
    csv.row(r.variant, r.net, r.nodes, r.iterations, r.outliers_removed,
            r.mean_seconds, r.std_seconds);
    labels.push_back(r.variant + "/" + std::to_string(r.nodes));
    values.push_back(r.mean_seconds);
  }
  write_bar_chart(spec.out_dir + "/timing.svg",
                  "mean training seconds per iteration", "seconds", labels,
                  values);
  return rows;
}

}  // namespace echelon
