#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/marl.hpp"
#include "echelon/policy.hpp"

namespace echelon {

// Constant per-node (s, S) pairs; 0 <= s <= S <= V_max.
struct StaticPolicy {
  std::vector<std::pair<long long, long long>> ss;

  std::vector<long long> flat() const {
    std::vector<long long> out;
    for (const auto& [s, cap] : ss) {
      out.push_back(s);
      out.push_back(cap);
    }
    return out;
  }
};

inline void validate_static(const StaticPolicy& policy,
                            const SupplyNetwork& net) {
  if (static_cast<int>(policy.ss.size()) != net.size())
    throw std::invalid_argument("static policy size mismatch");
  for (int i = 0; i < net.size(); ++i) {
    const auto& [s, cap] = policy.ss[static_cast<std::size_t>(i)];
    if (s < 0 || s > cap ||
        cap > net.nodes[static_cast<std::size_t>(i)].max_inventory)
      throw std::invalid_argument("infeasible (s,S) at node " +
                                  std::to_string(i));
  }
}

// Mean cumulative profit of a static policy over a fixed seed set. The seed
// set depends only on (seed, episode), so candidate evaluations share common
// random numbers.
inline double simulate_static(const StaticPolicy& policy,
                              const SupplyNetwork& net, int episodes,
                              int horizon, std::uint64_t seed,
                              std::vector<EpisodeTrace>* traces = nullptr) {
  validate_static(policy, net);
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
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    EpisodeTrace trace;
    total += run_episode(
        net, mix_seed(seed, 0xBA5EULL, static_cast<std::uint64_t>(ep)),
        order_fn, horizon, traces ? &trace : nullptr);
    if (traces) traces->push_back(std::move(trace));
  }
  return total / static_cast<double>(episodes);
}

struct OptimizeResult {
  StaticPolicy best;
  double profit = 0.0;
  long evaluations = 0;
  bool truncated = false;  // budget ran out mid-search
  // objective value after each accepted move, per start; non-decreasing
  // within a start by the acceptance rule
  std::vector<std::vector<double>> accepted_objectives;
};

// Multi-start coordinate descent with shrinking integer steps on the
// common-random-number objective.
inline OptimizeResult optimize_static(const SupplyNetwork& net, int n_starts,
                                      long budget, std::uint64_t seed,
                                      int episodes = 5, int horizon = -1) {
  if (budget < n_starts)
    throw std::invalid_argument("optimize_static: need >= 1 evaluation per start");
  if (horizon < 0) horizon = net.horizon;
  const int n = net.size();
  constexpr std::array<long long, 5> kSteps = {16, 8, 4, 2, 1};

  Rng start_rng(mix_seed(seed, 0x57A2ULL));
  const std::uint64_t crn_seed = mix_seed(seed, 0xC21ULL);

  OptimizeResult result;
  long used = 0;
  auto objective = [&](const StaticPolicy& p) {
    ++used;
    return simulate_static(p, net, episodes, horizon, crn_seed);
  };

  bool have_best = false;
  for (int start = 0; start < n_starts && used < budget; ++start) {
    StaticPolicy p;
    for (int i = 0; i < n; ++i) {
      const long long vmax =
          net.nodes[static_cast<std::size_t>(i)].max_inventory;
      const long long cap = start_rng.uniform_int(0, vmax);
      const long long s = start_rng.uniform_int(0, cap);
      p.ss.push_back({s, cap});
    }
    double best_local = objective(p);
    result.accepted_objectives.emplace_back();
    result.accepted_objectives.back().push_back(best_local);

    for (long long step_size : kSteps) {
      bool improved = true;
      while (improved && used < budget) {
        improved = false;
        for (int coord = 0; coord < 2 * n && used < budget; ++coord) {
          const int node = coord / 2;
          const bool is_reorder = coord % 2 == 0;
          const long long vmax =
              net.nodes[static_cast<std::size_t>(node)].max_inventory;
          for (int sign : {+1, -1}) {
            if (used >= budget) break;
            StaticPolicy cand = p;
            auto& [s, cap] = cand.ss[static_cast<std::size_t>(node)];
            if (is_reorder)
              s = std::clamp(s + sign * step_size, 0LL, cap);
            else {
              cap = std::clamp(cap + sign * step_size, 0LL, vmax);
              s = std::min(s, cap);
            }
            if (cand.ss[static_cast<std::size_t>(node)] ==
                p.ss[static_cast<std::size_t>(node)])
              continue;
            const double val = objective(cand);
            if (val > best_local) {
              best_local = val;
              result.accepted_objectives.back().push_back(val);
              p = cand;
              improved = true;
              break;  // re-evaluate this coordinate from the new point
            }
          }
        }
      }
    }
    if (!have_best || best_local > result.profit ||
        (best_local == result.profit && p.flat() < result.best.flat())) {
      have_best = true;
      result.profit = best_local;
      result.best = p;
    }
  }
  result.evaluations = used;
  result.truncated = used >= budget;
  return result;
}

inline void save_static_policy(const StaticPolicy& policy,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file: " + path);
  out << "# node s S\n";
  for (std::size_t i = 0; i < policy.ss.size(); ++i)
    out << i << ' ' << policy.ss[i].first << ' ' << policy.ss[i].second
        << '\n';
}

inline StaticPolicy load_static_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read policy file: " + path);
  StaticPolicy policy;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long long node, s, cap;
    if (ls >> node >> s >> cap) {
      if (node != static_cast<long long>(policy.ss.size()))
        throw std::runtime_error("policy file rows out of order");
      policy.ss.push_back({s, cap});
    }
  }
  return policy;
}

}  // namespace echelon
