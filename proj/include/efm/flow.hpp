#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "efm/common.hpp"

namespace efm::flow {

using Capacity = std::int64_t;

struct Arc {
  int from = 0;
  int to = 0;
  Capacity capacity = 0;
  Ticks cost = 0;
};

/// Directed network with integer capacities and integer tick costs.
struct FlowNetwork {
  int node_count = 0;
  int source = 0;
  int sink = 0;
  std::vector<Arc> arcs;

  int add_node() { return node_count++; }

  int add_arc(int from, int to, Capacity capacity, Ticks cost = 0) {
    arcs.push_back({from, to, capacity, cost});
    return static_cast<int>(arcs.size()) - 1;
  }

  void validate() const {
    if (source == sink) throw DataError("flow network source equals sink");
    if (source < 0 || source >= node_count || sink < 0 || sink >= node_count)
      throw DataError("flow network terminal out of range");
    for (const auto& a : arcs) {
      if (a.from < 0 || a.from >= node_count || a.to < 0 || a.to >= node_count)
        throw DataError("arc endpoint out of range");
      if (a.from == a.to) throw DataError("self-loop arc");
      if (a.capacity < 0) throw DataError("negative capacity");
    }
  }
};

struct FlowResult {
  std::vector<Capacity> flow_per_arc;
  Capacity total_flow = 0;
  Ticks total_cost = 0;
};

struct MinCut {
  std::vector<int> source_side;  // sorted node ids, contains the source
  Capacity value = 0;
};

namespace detail {

// Paired residual edges: 2i is arc i forward, 2i+1 its reverse.
class Residual {
 public:
  explicit Residual(const FlowNetwork& net) : n_(net.node_count), to_(2 * net.arcs.size()), cap_(2 * net.arcs.size()), cost_(2 * net.arcs.size()), start_(n_ + 1, 0), order_(2 * net.arcs.size()) {
    for (std::size_t i = 0; i < net.arcs.size(); ++i) {
      const Arc& a = net.arcs[i];
      to_[2 * i] = a.to;
      to_[2 * i + 1] = a.from;
      cap_[2 * i] = a.capacity;
      cap_[2 * i + 1] = 0;
      cost_[2 * i] = a.cost;
      cost_[2 * i + 1] = -a.cost;
      ++start_[a.from + 1];
      ++start_[a.to + 1];
    }
    for (int v = 0; v < n_; ++v) start_[v + 1] += start_[v];
    std::vector<int> fill(start_.begin(), start_.end() - 1);
    // Edges leave each node in arc insertion order.
    for (std::size_t i = 0; i < net.arcs.size(); ++i) {
      order_[fill[net.arcs[i].from]++] = static_cast<int>(2 * i);
      order_[fill[net.arcs[i].to]++] = static_cast<int>(2 * i + 1);
    }
  }

  int nodes() const { return n_; }
  int begin(int v) const { return start_[v]; }
  int end(int v) const { return start_[v + 1]; }
  int edge_at(int slot) const { return order_[slot]; }
  int tail(int e) const { return to_[e ^ 1]; }
  int head(int e) const { return to_[e]; }
  Capacity residual(int e) const { return cap_[e]; }
  Ticks cost(int e) const { return cost_[e]; }
  void push(int e, Capacity amount) {
    cap_[e] -= amount;
    cap_[e ^ 1] += amount;
  }
  Capacity flow_on_arc(std::size_t arc) const { return cap_[2 * arc + 1]; }

 private:
  int n_;
  std::vector<int> to_;
  std::vector<Capacity> cap_;
  std::vector<Ticks> cost_;
  std::vector<int> start_;
  std::vector<int> order_;
};

}  // namespace detail

/// Successive shortest augmenting paths with Dijkstra on reduced costs.
/// Requires nonnegative arc costs. Deterministic for a fixed arc order.
inline FlowResult solve_min_cost_max_flow(const FlowNetwork& net) {
  net.validate();
  for (const auto& a : net.arcs)
    if (a.cost < 0) throw DataError("min-cost flow expects nonnegative arc costs");

  detail::Residual g(net);
  const int n = net.node_count;
  constexpr Ticks kInf = std::numeric_limits<Ticks>::max() / 4;
  std::vector<Ticks> potential(n, 0), dist(n);
  std::vector<int> via(n);
  std::vector<char> done(n);
  using Item = std::pair<Ticks, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;

  FlowResult result;
  while (true) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    std::fill(via.begin(), via.end(), -1);
    dist[net.source] = 0;
    heap.push({0, net.source});
    while (!heap.empty()) {
      const auto [d, v] = heap.top();
      heap.pop();
      if (done[v]) continue;
      done[v] = 1;
      if (v == net.sink) break;
      for (int slot = g.begin(v); slot < g.end(v); ++slot) {
        const int e = g.edge_at(slot);
        if (g.residual(e) <= 0) continue;
        const int w = g.head(e);
        if (done[w]) continue;
        const Ticks nd = d + g.cost(e) + potential[v] - potential[w];
        if (nd < dist[w]) {
          dist[w] = nd;
          via[w] = e;
          heap.push({nd, w});
        }
      }
    }
    while (!heap.empty()) heap.pop();
    if (!done[net.sink]) break;

    // Capping unsettled labels at the sink distance keeps reduced costs >= 0.
    const Ticks cap_dist = dist[net.sink];
    for (int v = 0; v < n; ++v) potential[v] += done[v] ? dist[v] : cap_dist;

    Capacity bottleneck = std::numeric_limits<Capacity>::max();
    for (int v = net.sink; v != net.source; v = g.tail(via[v])) bottleneck = std::min(bottleneck, g.residual(via[v]));
    for (int v = net.sink; v != net.source; v = g.tail(via[v])) {
      g.push(via[v], bottleneck);
      result.total_cost += bottleneck * g.cost(via[v]);
    }
    result.total_flow += bottleneck;
  }

  result.flow_per_arc.resize(net.arcs.size());
  for (std::size_t i = 0; i < net.arcs.size(); ++i) result.flow_per_arc[i] = g.flow_on_arc(i);
  return result;
}

/// Dinic max-flow; the source side is everything reachable in the final residual graph.
inline MinCut min_cut(const FlowNetwork& net) {
  net.validate();
  detail::Residual g(net);
  const int n = net.node_count;
  std::vector<int> level(n), it(n);

  auto bfs = [&] {
    std::fill(level.begin(), level.end(), -1);
    std::queue<int> q;
    level[net.source] = 0;
    q.push(net.source);
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      for (int slot = g.begin(v); slot < g.end(v); ++slot) {
        const int e = g.edge_at(slot);
        if (g.residual(e) > 0 && level[g.head(e)] < 0) {
          level[g.head(e)] = level[v] + 1;
          q.push(g.head(e));
        }
      }
    }
    return level[net.sink] >= 0;
  };

  std::function<Capacity(int, Capacity)> dfs = [&](int v, Capacity limit) -> Capacity {
    if (v == net.sink) return limit;
    for (int& slot = it[v]; slot < g.end(v); ++slot) {
      const int e = g.edge_at(slot);
      const int w = g.head(e);
      if (g.residual(e) <= 0 || level[w] != level[v] + 1) continue;
      const Capacity pushed = dfs(w, std::min(limit, g.residual(e)));
      if (pushed > 0) {
        g.push(e, pushed);
        return pushed;
      }
    }
    return 0;
  };

  MinCut cut;
  while (bfs()) {
    for (int v = 0; v < n; ++v) it[v] = g.begin(v);
    while (const Capacity f = dfs(net.source, std::numeric_limits<Capacity>::max())) cut.value += f;
  }
  for (int v = 0; v < n; ++v)
    if (level[v] >= 0) cut.source_side.push_back(v);
  return cut;
}

}  // namespace efm::flow
