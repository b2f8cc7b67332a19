#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/io.hpp"

namespace echelon {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DanglingIndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CycleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NegativeCostError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NodeParams {
  int id = 0;
  double order_cost = 0.0;    // C, currency per unit ordered
  double price = 0.0;         // P, currency per unit shipped
  long long max_inventory = 0;      // V_max
  long long max_order = 0;          // O_r,max
  long long initial_inventory = 0;
  long long target_inventory = 0;   // stored, unused by the dynamics
  double stock_cost = 0.0;    // V, currency per unit-step held
  double backlog_cost = 0.0;  // B, currency per unit-step backlogged
  std::vector<int> downstream;

  bool is_retail() const { return downstream.empty(); }
};

// Demand / lead-time draw mode. "fixed" replaces the Poisson draw with the
// rate itself (rounded), used by deterministic toy scenarios.
enum class StochasticMode { poisson, fixed };

struct SupplyNetwork {
  std::vector<NodeParams> nodes;
  double demand_rate = 5.0;  // lambda_d
  double lead_rate = 2.0;    // lambda_l
  int horizon = 50;
  int history = 3;           // M
  StochasticMode demand_mode = StochasticMode::poisson;
  StochasticMode lead_mode = StochasticMode::poisson;

  // derived on load
  std::vector<int> retail_set;                 // nodes with empty downstream
  std::vector<std::vector<int>> upstreams;     // inverse adjacency

  int size() const { return static_cast<int>(nodes.size()); }
  bool is_root(int i) const { return upstreams[static_cast<std::size_t>(i)].empty(); }
};

struct AdjacencyMatrix {
  Eigen::MatrixXd directed;   // directed[i][j] = 1 iff j in downstream(i)
  Eigen::MatrixXd symmetric;  // directed OR its transpose, zero diagonal
};

namespace detail {

inline void check_acyclic(const std::vector<NodeParams>& nodes) {
  const int n = static_cast<int>(nodes.size());
  // colors: 0 unvisited, 1 on stack, 2 done
  std::vector<int> color(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<int, std::size_t>> stack;
  for (int start = 0; start < n; ++start) {
    if (color[static_cast<std::size_t>(start)] != 0) continue;
    stack.push_back({start, 0});
    color[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
      auto& [u, edge] = stack.back();
      const auto& down = nodes[static_cast<std::size_t>(u)].downstream;
      if (edge < down.size()) {
        const int v = down[edge++];
        if (color[static_cast<std::size_t>(v)] == 1)
          throw CycleError("cycle detected through node " + std::to_string(v));
        if (color[static_cast<std::size_t>(v)] == 0) {
          color[static_cast<std::size_t>(v)] = 1;
          stack.push_back({v, 0});
        }
      } else {
        color[static_cast<std::size_t>(u)] = 2;
        stack.pop_back();
      }
    }
  }
}

inline void finalize(SupplyNetwork& net) {
  const int n = net.size();
  for (auto& node : net.nodes) {
    if (node.order_cost < 0 || node.price < 0 || node.stock_cost < 0 ||
        node.backlog_cost < 0)
      throw NegativeCostError("negative cost or price at node " +
                              std::to_string(node.id));
    for (int d : node.downstream) {
      if (d < 0 || d >= n)
        throw DanglingIndexError("node " + std::to_string(node.id) +
                                 " lists unknown downstream node " +
                                 std::to_string(d));
      if (d == node.id)
        throw CycleError("self-loop at node " + std::to_string(node.id));
    }
    std::sort(node.downstream.begin(), node.downstream.end());
    node.downstream.erase(
        std::unique(node.downstream.begin(), node.downstream.end()),
        node.downstream.end());
    if (node.max_inventory < 0 || node.max_order < 0)
      throw ValidationError("negative capacity at node " +
                            std::to_string(node.id));
    if (node.initial_inventory < 0 ||
        node.initial_inventory > node.max_inventory)
      throw ValidationError("initial inventory outside [0, max] at node " +
                            std::to_string(node.id));
  }
  check_acyclic(net.nodes);
  if (net.demand_rate < 0 || net.lead_rate < 0)
    throw ValidationError("negative demand or lead rate");
  if (net.horizon < 1 || net.history < 1)
    throw ValidationError("horizon and history must be positive");

  net.retail_set.clear();
  net.upstreams.assign(static_cast<std::size_t>(n), {});
  for (const auto& node : net.nodes) {
    if (node.is_retail()) net.retail_set.push_back(node.id);
    for (int d : node.downstream)
      net.upstreams[static_cast<std::size_t>(d)].push_back(node.id);
  }
  for (auto& ups : net.upstreams) std::sort(ups.begin(), ups.end());
}

inline StochasticMode parse_mode(const std::string& v, int line_no) {
  if (v == "poisson") return StochasticMode::poisson;
  if (v == "fixed") return StochasticMode::fixed;
  throw ParseError("line " + std::to_string(line_no) +
                   ": unknown mode '" + v + "'");
}

}  // namespace detail

// Parse a network config. Format, one directive per line ('#' comments):
//   lambda_d <rate>      expected customer demand per step
//   lambda_l <rate>      expected lead time in steps
//   horizon <steps>
//   history <M>
//   demand_mode poisson|fixed
//   lead_mode poisson|fixed
//   node <id> <order_cost> <price> <max_inv> <max_order> <init_inv>
//        <target_inv> <stock_cost> <backlog_cost> <downstream: a,b,... or ->
// Node ids must appear in order 0..N-1.
inline SupplyNetwork load_network(const std::string& text) {
  SupplyNetwork net;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError("line " + std::to_string(line_no) + ": " + why);
    };
    if (key == "lambda_d") {
      if (!(ls >> net.demand_rate)) throw fail("expected a rate");
    } else if (key == "lambda_l") {
      if (!(ls >> net.lead_rate)) throw fail("expected a rate");
    } else if (key == "horizon") {
      if (!(ls >> net.horizon)) throw fail("expected a step count");
    } else if (key == "history") {
      if (!(ls >> net.history)) throw fail("expected a history length");
    } else if (key == "demand_mode") {
      std::string v;
      if (!(ls >> v)) throw fail("expected poisson|fixed");
      net.demand_mode = detail::parse_mode(v, line_no);
    } else if (key == "lead_mode") {
      std::string v;
      if (!(ls >> v)) throw fail("expected poisson|fixed");
      net.lead_mode = detail::parse_mode(v, line_no);
    } else if (key == "node") {
      NodeParams node;
      std::string down;
      if (!(ls >> node.id >> node.order_cost >> node.price >>
            node.max_inventory >> node.max_order >> node.initial_inventory >>
            node.target_inventory >> node.stock_cost >> node.backlog_cost >>
            down))
        throw fail("expected 10 node columns");
      if (node.id != static_cast<int>(net.nodes.size()))
        throw fail("node ids must be consecutive from 0 in file order");
      if (down != "-" && down != "none") {
        std::istringstream ds(down);
        std::string tok;
        while (std::getline(ds, tok, ',')) {
          try {
            std::size_t used = 0;
            const int d = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            node.downstream.push_back(d);
          } catch (const std::logic_error&) {
            throw fail("bad downstream list '" + down + "'");
          }
        }
        if (node.downstream.empty())
          throw fail("bad downstream list '" + down + "'");
      }
      net.nodes.push_back(std::move(node));
    } else {
      throw fail("unknown directive '" + key + "'");
    }
  }
  if (net.nodes.empty()) throw ParseError("no nodes defined");
  detail::finalize(net);
  return net;
}

inline SupplyNetwork load_network_file(const std::string& path) {
  return load_network(read_text_file(path));
}

inline std::string serialize_network(const SupplyNetwork& net) {
  std::ostringstream out;
  out.precision(17);
  out << "lambda_d " << net.demand_rate << "\n";
  out << "lambda_l " << net.lead_rate << "\n";
  out << "horizon " << net.horizon << "\n";
  out << "history " << net.history << "\n";
  out << "demand_mode "
      << (net.demand_mode == StochasticMode::fixed ? "fixed" : "poisson")
      << "\n";
  out << "lead_mode "
      << (net.lead_mode == StochasticMode::fixed ? "fixed" : "poisson")
      << "\n";
  for (const auto& node : net.nodes) {
    out << "node " << node.id << ' ' << node.order_cost << ' ' << node.price
        << ' ' << node.max_inventory << ' ' << node.max_order << ' '
        << node.initial_inventory << ' ' << node.target_inventory << ' '
        << node.stock_cost << ' ' << node.backlog_cost << ' ';
    if (node.downstream.empty()) {
      out << '-';
    } else {
      for (std::size_t k = 0; k < node.downstream.size(); ++k) {
        if (k) out << ',';
        out << node.downstream[k];
      }
    }
    out << "\n";
  }
  return out.str();
}

inline AdjacencyMatrix adjacency(const SupplyNetwork& net) {
  const int n = net.size();
  AdjacencyMatrix adj;
  adj.directed = Eigen::MatrixXd::Zero(n, n);
  for (const auto& node : net.nodes)
    for (int d : node.downstream) adj.directed(node.id, d) = 1.0;
  adj.symmetric = adj.directed.cwiseMax(adj.directed.transpose());
  return adj;
}

}  // namespace echelon
