#pragma once

// Straight-line reference stepper used as the oracle for the production
// simulator. Written as a literal transcription of the period dynamics:
//   v[t]   = v0 - g + q                 (inventory ledger)
//   b[t]   = b0 - g + d    per edge     (backlog ledger)
//   g      <= b0 + d       per edge
//   sum g  <= v0 + q       per node
//   q[t]   = g_upstream[t - tau]        (pipeline arrivals)
//   q_root = own order placed tau ago   (infinite source)
//   retail demand ~ Poisson(lambda_d); order cost, holding cost, backlog
//   cost and revenue recombine into the shared team reward.
// Shortage allocation: proportional to per-edge entitlement, integer by
// largest remainder, ties to the lower sink index. Draw discipline matches
// the production contract: retail demand in node order from the demand
// stream, one lead draw per positive internal shipment in (node, sink)
// order, then the root's own order.

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <vector>

#include "echelon/rng.hpp"
#include "echelon/supply_net.hpp"

namespace refsim {

struct RefState {
  int t = 0;
  std::vector<long long> v;
  // backlog keyed by (node, sink); sink -1 is the retail customer
  std::map<std::pair<int, int>, long long> b;
  // in-flight: (dest, qty, arrival period)
  std::vector<std::array<long long, 3>> pipe;
  echelon::Rng demand_rng{0};
  echelon::Rng lead_rng{0};
};

inline std::vector<int> sinks_of(const echelon::SupplyNetwork& net, int i) {
  const auto& down = net.nodes[static_cast<std::size_t>(i)].downstream;
  if (down.empty()) return {-1};
  return down;
}

inline RefState ref_reset(const echelon::SupplyNetwork& net,
                          std::uint64_t seed) {
  RefState st;
  st.v.resize(static_cast<std::size_t>(net.size()));
  for (int i = 0; i < net.size(); ++i) {
    st.v[static_cast<std::size_t>(i)] =
        net.nodes[static_cast<std::size_t>(i)].initial_inventory;
    for (int s : sinks_of(net, i)) st.b[{i, s}] = 0;
  }
  st.demand_rng = echelon::Rng(echelon::mix_seed(seed, 0xD117ULL));
  st.lead_rng = echelon::Rng(echelon::mix_seed(seed, 0x1EADULL));
  return st;
}

inline long long ref_draw(echelon::Rng& rng, double rate,
                          echelon::StochasticMode mode) {
  if (mode == echelon::StochasticMode::fixed)
    return static_cast<long long>(rate + 0.5);
  return rng.poisson(rate);
}

// Advances one period; returns the team reward.
inline double ref_step(RefState& st, const echelon::SupplyNetwork& net,
                       std::vector<long long> orders) {
  const int n = net.size();
  for (int i = 0; i < n; ++i)
    orders[static_cast<std::size_t>(i)] = std::min(
        std::max(orders[static_cast<std::size_t>(i)], 0LL),
        net.nodes[static_cast<std::size_t>(i)].max_order);

  // arrivals: q^i[t] = sum of shipments landing now
  std::vector<long long> q(static_cast<std::size_t>(n), 0);
  {
    std::vector<std::array<long long, 3>> keep;
    for (const auto& sh : st.pipe) {
      if (sh[2] == st.t)
        q[static_cast<std::size_t>(sh[0])] += sh[1];
      else
        keep.push_back(sh);
    }
    st.pipe = keep;
  }

  // demand per edge: customer draw at retail, downstream order elsewhere
  std::map<std::pair<int, int>, long long> d;
  for (int i = 0; i < n; ++i) {
    if (net.nodes[static_cast<std::size_t>(i)].is_retail()) {
      d[{i, -1}] = ref_draw(st.demand_rng, net.demand_rate, net.demand_mode);
    } else {
      for (int down : net.nodes[static_cast<std::size_t>(i)].downstream)
        d[{i, down}] = orders[static_cast<std::size_t>(down)];
    }
  }

  // shipping under the two sales constraints, then both ledgers
  std::vector<long long> g_total(static_cast<std::size_t>(n), 0);
  std::vector<long long> v_next(static_cast<std::size_t>(n), 0);
  double reward = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const std::vector<int> sinks = sinks_of(net, i);
    const long long avail = st.v[ui] + q[ui];

    std::vector<long long> entitlement;
    for (int s : sinks) entitlement.push_back(st.b[{i, s}] + d[{i, s}]);
    const long long wanted =
        std::accumulate(entitlement.begin(), entitlement.end(), 0LL);

    std::vector<long long> g(sinks.size(), 0);
    if (wanted <= avail) {
      g = entitlement;
    } else if (avail > 0) {
      std::vector<std::pair<long long, std::size_t>> remainders;
      long long handed = 0;
      for (std::size_t k = 0; k < sinks.size(); ++k) {
        g[k] = avail * entitlement[k] / wanted;
        handed += g[k];
        remainders.push_back({avail * entitlement[k] % wanted, k});
      }
      std::sort(remainders.begin(), remainders.end(),
                [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second < b.second;
                });
      long long spare = avail - handed;
      for (const auto& [rem, k] : remainders) {
        if (spare <= 0) break;
        if (g[k] < entitlement[k]) {
          g[k] += 1;
          spare -= 1;
        }
      }
    }

    for (std::size_t k = 0; k < sinks.size(); ++k) {
      g_total[ui] += g[k];
      if (sinks[k] >= 0 && g[k] > 0) {
        const long long tau = std::max<long long>(
            1, ref_draw(st.lead_rng, net.lead_rate, net.lead_mode));
        st.pipe.push_back({sinks[k], g[k], st.t + tau});
      }
      st.b[{i, sinks[k]}] = st.b[{i, sinks[k]}] - g[k] + d[{i, sinks[k]}];
    }
    if (net.is_root(i) && orders[ui] > 0) {
      const long long tau = std::max<long long>(
          1, ref_draw(st.lead_rng, net.lead_rate, net.lead_mode));
      st.pipe.push_back({i, orders[ui], st.t + tau});
    }

    long long v_new = st.v[ui] - g_total[ui] + q[ui];
    if (v_new > net.nodes[ui].max_inventory)
      v_new = net.nodes[ui].max_inventory;
    v_next[ui] = v_new;

    long long b_total = 0;
    for (int s : sinks) b_total += st.b[{i, s}];
    reward += net.nodes[ui].price * static_cast<double>(g_total[ui]) -
              net.nodes[ui].order_cost *
                  static_cast<double>(orders[ui]) -
              net.nodes[ui].stock_cost * static_cast<double>(v_new) -
              net.nodes[ui].backlog_cost * static_cast<double>(b_total);
  }
  st.v = v_next;
  st.t += 1;
  return reward;
}

}  // namespace refsim
