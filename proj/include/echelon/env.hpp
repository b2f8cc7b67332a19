#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "echelon/rng.hpp"
#include "echelon/supply_net.hpp"

namespace echelon {

// Goods in transit: qty units headed to dest, arriving at period arrive_at.
struct Shipment {
  int dest = 0;
  long long qty = 0;
  int arrive_at = 0;
};

// Per-node accounting for one period; the team reward is the recombination
// of these entries.
struct NodeLedger {
  double revenue = 0.0;       // P * shipped
  double order_cost = 0.0;    // C * order
  double holding_cost = 0.0;  // V * end-of-period on-hand
  double backlog_cost = 0.0;  // B * end-of-period backlog
  long long arrived = 0;      // q
  long long demand = 0;       // total demand faced this period
  long long shipped = 0;      // g, to downstream nodes and customers
  long long order = 0;        // o_r actually executed (post clip)
  long long lost = 0;         // overflow discarded at the inventory cap
};

struct StepResult {
  std::vector<Eigen::VectorXd> observations;  // raw units, per agent
  double team_reward = 0.0;
  bool done = false;
  std::vector<NodeLedger> info;
};

// Full simulator state. Single-threaded by contract; run one instance per
// rollout worker. Demand and lead-time draws come from separate streams so
// that demand sequences are common random numbers across policies.
struct EnvState {
  int t = 0;
  bool done = false;
  std::vector<long long> on_hand;                  // v, per node
  std::vector<std::vector<long long>> backlog;     // per node, per sink
  std::vector<Shipment> pipeline;
  std::vector<std::deque<long long>> demand_hist;  // most recent first
  std::vector<std::deque<long long>> order_hist;
  Rng demand_rng;
  Rng lead_rng;
};

namespace detail {

// Sinks of node i: its downstream nodes, or the customer for retail nodes.
// Retail nodes have exactly one sink.
inline std::size_t sink_count(const SupplyNetwork& net, int i) {
  const auto& down = net.nodes[static_cast<std::size_t>(i)].downstream;
  return down.empty() ? 1 : down.size();
}

inline long long draw_count(Rng& rng, double rate, StochasticMode mode) {
  if (mode == StochasticMode::fixed) return std::llround(rate);
  return rng.poisson(rate);
}

// Split `avail` units across sinks proportionally to each sink's entitlement
// (backlog + demand), integer result by largest remainder, ties to the
// earlier sink. Exact integer arithmetic; entitlements are never exceeded.
inline std::vector<long long> allocate(long long avail,
                                       const std::vector<long long>& want) {
  const std::size_t k = want.size();
  std::vector<long long> give(k, 0);
  const long long total = std::accumulate(want.begin(), want.end(), 0LL);
  if (total <= avail) return want;
  if (avail <= 0) return give;
  std::vector<long long> rem(k, 0);
  long long assigned = 0;
  for (std::size_t j = 0; j < k; ++j) {
    give[j] = avail * want[j] / total;
    rem[j] = avail * want[j] % total;
    assigned += give[j];
  }
  long long leftover = avail - assigned;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t j = 0; j < k && leftover > 0; ++j) {
    const std::size_t idx = order[j];
    if (give[idx] < want[idx]) {
      ++give[idx];
      --leftover;
    }
  }
  return give;
}

}  // namespace detail

inline long long pipeline_inventory(const EnvState& state,
                                    const SupplyNetwork& net, int i) {
  long long p = 0;
  for (const auto& s : state.pipeline)
    if (s.dest == i) p += s.qty;
  // orders still backlogged at upstream nodes count as pipeline
  for (int u : net.upstreams[static_cast<std::size_t>(i)]) {
    const auto& down = net.nodes[static_cast<std::size_t>(u)].downstream;
    const auto slot = static_cast<std::size_t>(
        std::find(down.begin(), down.end(), i) - down.begin());
    p += state.backlog[static_cast<std::size_t>(u)][slot];
  }
  return p;
}

// Observation o_i = [v, total backlog, pipeline, d^{-1..-M}, o_r^{-1..-M}],
// raw units, histories most recent first.
inline Eigen::VectorXd observe(const EnvState& state, const SupplyNetwork& net,
                               int i, int history_len) {
  const auto ui = static_cast<std::size_t>(i);
  const int m = history_len;
  Eigen::VectorXd obs(3 + 2 * m);
  obs(0) = static_cast<double>(state.on_hand[ui]);
  obs(1) = static_cast<double>(std::accumulate(
      state.backlog[ui].begin(), state.backlog[ui].end(), 0LL));
  obs(2) = static_cast<double>(pipeline_inventory(state, net, i));
  for (int k = 0; k < m; ++k) {
    obs(3 + k) = static_cast<double>(state.demand_hist[ui][static_cast<std::size_t>(k)]);
    obs(3 + m + k) =
        static_cast<double>(state.order_hist[ui][static_cast<std::size_t>(k)]);
  }
  return obs;
}

inline std::vector<Eigen::VectorXd> observe_all(const EnvState& state,
                                                const SupplyNetwork& net) {
  std::vector<Eigen::VectorXd> obs;
  obs.reserve(static_cast<std::size_t>(net.size()));
  for (int i = 0; i < net.size(); ++i)
    obs.push_back(observe(state, net, i, net.history));
  return obs;
}

// Inventory-like entries are scaled by the node's V_max, demand-like entries
// by 2 * lambda_d, before feeding the networks. The ledger keeps raw values.
inline Eigen::VectorXd normalize_observation(const SupplyNetwork& net, int i,
                                             const Eigen::VectorXd& obs) {
  const auto& node = net.nodes[static_cast<std::size_t>(i)];
  const double inv_scale =
      node.max_inventory > 0 ? static_cast<double>(node.max_inventory) : 1.0;
  const double dem_scale = std::max(1.0, 2.0 * net.demand_rate);
  Eigen::VectorXd out(obs.size());
  for (Eigen::Index k = 0; k < obs.size(); ++k)
    out(k) = k < 3 ? obs(k) / inv_scale : obs(k) / dem_scale;
  return out;
}

// Concatenation of per-agent observations in node order.
inline Eigen::VectorXd global_state(const std::vector<Eigen::VectorXd>& obs) {
  Eigen::Index total = 0;
  for (const auto& o : obs) total += o.size();
  Eigen::VectorXd s(total);
  Eigen::Index at = 0;
  for (const auto& o : obs) {
    s.segment(at, o.size()) = o;
    at += o.size();
  }
  return s;
}

inline EnvState reset(const SupplyNetwork& net, std::uint64_t seed) {
  EnvState state;
  const auto n = static_cast<std::size_t>(net.size());
  state.on_hand.resize(n);
  state.backlog.resize(n);
  state.demand_hist.resize(n);
  state.order_hist.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    state.on_hand[i] = net.nodes[i].initial_inventory;
    state.backlog[i].assign(detail::sink_count(net, static_cast<int>(i)), 0);
    state.demand_hist[i].assign(static_cast<std::size_t>(net.history), 0);
    state.order_hist[i].assign(static_cast<std::size_t>(net.history), 0);
  }
  state.demand_rng = Rng(mix_seed(seed, 0xD117ULL));
  state.lead_rng = Rng(mix_seed(seed, 0x1EADULL));
  return state;
}

// Advance one period under the joint order action. Within the period:
//   (1) arrivals   (2) demand realization   (3) shipping (and order
//   placement into the pipeline)   (4) inventory/backlog ledger
//   (5) capacity cap   (6) team reward.
inline StepResult step(EnvState& state, const SupplyNetwork& net,
                       const std::vector<long long>& joint_orders) {
  if (state.done) throw std::logic_error("step() called after horizon end");
  const int n = net.size();
  if (static_cast<int>(joint_orders.size()) != n)
    throw std::invalid_argument("joint_orders size mismatch");

  StepResult result;
  result.info.assign(static_cast<std::size_t>(n), NodeLedger{});

  // clip orders to [0, O_r,max]
  std::vector<long long> orders(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& node = net.nodes[static_cast<std::size_t>(i)];
    orders[static_cast<std::size_t>(i)] =
        std::clamp(joint_orders[static_cast<std::size_t>(i)], 0LL,
                   node.max_order);
    result.info[static_cast<std::size_t>(i)].order =
        orders[static_cast<std::size_t>(i)];
  }

  // (1) arrivals
  std::vector<long long> arrived(static_cast<std::size_t>(n), 0);
  {
    std::vector<Shipment> remaining;
    remaining.reserve(state.pipeline.size());
    for (const auto& s : state.pipeline) {
      if (s.arrive_at == state.t)
        arrived[static_cast<std::size_t>(s.dest)] += s.qty;
      else
        remaining.push_back(s);
    }
    state.pipeline.swap(remaining);
  }
  for (int i = 0; i < n; ++i)
    result.info[static_cast<std::size_t>(i)].arrived =
        arrived[static_cast<std::size_t>(i)];

  // (2) demand: retail nodes draw customer demand in node order; internal
  // demand on edge (i, d) equals d's replenishment order.
  std::vector<std::vector<long long>> demand(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& node = net.nodes[static_cast<std::size_t>(i)];
    auto& dem = demand[static_cast<std::size_t>(i)];
    if (node.is_retail()) {
      dem.assign(1, detail::draw_count(state.demand_rng, net.demand_rate,
                                       net.demand_mode));
    } else {
      dem.resize(node.downstream.size());
      for (std::size_t k = 0; k < node.downstream.size(); ++k)
        dem[k] = orders[static_cast<std::size_t>(node.downstream[k])];
    }
    result.info[static_cast<std::size_t>(i)].demand =
        std::accumulate(dem.begin(), dem.end(), 0LL);
  }

  // (3) shipping: per sink at most backlog + demand, in total at most
  // on-hand + arrivals; proportional allocation with largest remainder.
  // Root nodes then place their own order with the infinite source.
  std::vector<long long> shipped_total(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& node = net.nodes[ui];
    const std::size_t sinks = detail::sink_count(net, i);
    std::vector<long long> want(sinks);
    for (std::size_t k = 0; k < sinks; ++k)
      want[k] = state.backlog[ui][k] + demand[ui][k];
    const long long avail = state.on_hand[ui] + arrived[ui];
    const std::vector<long long> give = detail::allocate(avail, want);
    for (std::size_t k = 0; k < sinks; ++k) {
      shipped_total[ui] += give[k];
      if (!node.is_retail() && give[k] > 0) {
        const long long tau = std::max<long long>(
            1, detail::draw_count(state.lead_rng, net.lead_rate,
                                  net.lead_mode));
        state.pipeline.push_back(Shipment{node.downstream[k], give[k],
                                          state.t + static_cast<int>(tau)});
      }
      // ledger update (4): backlog on this edge per start-of-period value
      state.backlog[ui][k] += demand[ui][k] - give[k];
    }
    if (net.is_root(i) && orders[ui] > 0) {
      const long long tau = std::max<long long>(
          1,
          detail::draw_count(state.lead_rng, net.lead_rate, net.lead_mode));
      state.pipeline.push_back(
          Shipment{i, orders[ui], state.t + static_cast<int>(tau)});
    }
  }

  // (4) on-hand ledger, (5) capacity cap, (6) reward
  double team_reward = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& node = net.nodes[ui];
    auto& ledger = result.info[ui];
    long long v = state.on_hand[ui] - shipped_total[ui] + arrived[ui];
    if (v > node.max_inventory) {
      ledger.lost = v - node.max_inventory;
      v = node.max_inventory;
    }
    state.on_hand[ui] = v;
    ledger.shipped = shipped_total[ui];
    const long long total_backlog = std::accumulate(
        state.backlog[ui].begin(), state.backlog[ui].end(), 0LL);
    ledger.revenue = node.price * static_cast<double>(ledger.shipped);
    ledger.order_cost = node.order_cost * static_cast<double>(orders[ui]);
    ledger.holding_cost = node.stock_cost * static_cast<double>(v);
    ledger.backlog_cost =
        node.backlog_cost * static_cast<double>(total_backlog);
    team_reward += ledger.revenue - ledger.order_cost - ledger.holding_cost -
                   ledger.backlog_cost;

    state.demand_hist[ui].push_front(ledger.demand);
    state.demand_hist[ui].pop_back();
    state.order_hist[ui].push_front(orders[ui]);
    state.order_hist[ui].pop_back();
  }

  state.t += 1;
  state.done = state.t >= net.horizon;
  result.team_reward = team_reward;
  result.done = state.done;
  result.observations = observe_all(state, net);
  return result;
}

}  // namespace echelon
