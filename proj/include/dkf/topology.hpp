#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dkf/errors.hpp"
#include "dkf/linalg.hpp"

namespace dkf {

/// Directed sensor network with row-stochastic weights. adjacency(i, j) > 0
/// means node i receives from node j; the diagonal is always positive
/// (every node listens to itself).
struct NetworkTopology {
  int size = 0;
  Matrix adjacency;
  std::vector<std::vector<int>> neighbors;  // per node, sorted, includes self

  /// Build from an explicit weight matrix, validating row-stochasticity.
  static NetworkTopology from_weights(const Matrix& weights) {
    require_square(weights, "NetworkTopology");
    const int n = static_cast<int>(weights.rows());
    if (n == 0) throw DimensionError("NetworkTopology: empty network");
    NetworkTopology topo;
    topo.size = n;
    topo.adjacency = weights;
    topo.neighbors.resize(n);
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        const double w = weights(i, j);
        if (w < 0.0) {
          throw ContractError("NetworkTopology: negative weight at (" +
                              std::to_string(i) + "," + std::to_string(j) + ")");
        }
        if (w > 0.0) topo.neighbors[i].push_back(j);
        row_sum += w;
      }
      if (weights(i, i) <= 0.0) {
        throw ContractError("NetworkTopology: zero self-weight at node " + std::to_string(i));
      }
      if (std::abs(row_sum - 1.0) > 1e-12) {
        throw ContractError("NetworkTopology: row " + std::to_string(i) +
                            " sums to " + std::to_string(row_sum));
      }
    }
    return topo;
  }

  double weight(int i, int j) const { return adjacency(i, j); }

  /// Row of weights restricted to node i's neighbor list (same order).
  Vector neighbor_weights(int i) const {
    const auto& nb = neighbors[i];
    Vector w(static_cast<long>(nb.size()));
    for (std::size_t t = 0; t < nb.size(); ++t) w(static_cast<long>(t)) = adjacency(i, nb[t]);
    return w;
  }
};

/// Equal weights over each node's neighbor set (self-loop always included):
/// a_ij = 1/|N_i| for j in N_i, 0 otherwise. Edges are (receiver, sender).
inline NetworkTopology uniform_weights(const std::vector<std::pair<int, int>>& edges, int n) {
  if (n <= 0) throw DimensionError("uniform_weights: network size must be positive");
  std::vector<std::vector<bool>> in_set(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i) in_set[i][i] = true;
  for (const auto& [recv, send] : edges) {
    if (recv < 0 || recv >= n || send < 0 || send >= n) {
      throw DimensionError("uniform_weights: edge (" + std::to_string(recv) + "," +
                           std::to_string(send) + ") out of range");
    }
    in_set[recv][send] = true;
  }
  Matrix weights = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < n; ++j) count += in_set[i][j] ? 1 : 0;
    for (int j = 0; j < n; ++j)
      if (in_set[i][j]) weights(i, j) = 1.0 / count;
  }
  return NetworkTopology::from_weights(weights);
}

namespace detail {

// Iterative Tarjan; returns the number of strongly connected components.
inline int count_sccs(const std::vector<std::vector<int>>& graph) {
  const int n = static_cast<int>(graph.size());
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  int next_index = 0;
  int sccs = 0;

  struct Frame {
    int v;
    std::size_t child;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> call_stack{{root, 0}};
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call_stack.empty()) {
      Frame& frame = call_stack.back();
      const int v = frame.v;
      if (frame.child < graph[v].size()) {
        const int w = graph[v][frame.child++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call_stack.push_back({w, 0});
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
      } else {
        if (low[v] == index[v]) {
          ++sccs;
          while (true) {
            const int w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            if (w == v) break;
          }
        }
        call_stack.pop_back();
        if (!call_stack.empty()) {
          const int parent = call_stack.back().v;
          low[parent] = std::min(low[parent], low[v]);
        }
      }
    }
  }
  return sccs;
}

}  // namespace detail

/// True iff every ordered pair of nodes is joined by a directed path.
/// Edges follow information flow: i -> j when a_ij > 0 (i hears j).
inline bool is_strongly_connected(const NetworkTopology& topo) {
  return detail::count_sccs(topo.neighbors) == 1;
}

/// True iff every entry of adjacency^s is strictly positive.
inline bool check_primitivity(const NetworkTopology& topo, int s) {
  if (s < 1) throw DimensionError("check_primitivity: power must be >= 1");
  Matrix power = topo.adjacency;
  for (int i = 1; i < s; ++i) power = power * topo.adjacency;
  return (power.array() > 0.0).all();
}

}  // namespace dkf
