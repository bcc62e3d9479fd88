#include "causalflow/graph.hpp"

#include <algorithm>
#include <string>

#include "causalflow/error.hpp"
#include "causalflow/rng.hpp"

namespace causalflow {

Dag::Dag(int d, std::vector<Edge> edges) : d_(d), edges_(std::move(edges)) {
  if (d < 1) throw InvalidArgument("Dag: vertex count must be >= 1");
  std::sort(edges_.begin(), edges_.end());
  parents_.assign(static_cast<std::size_t>(d), {});
  children_.assign(static_cast<std::size_t>(d), {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [i, j] = edges_[e];
    check_vertex(i);
    check_vertex(j);
    if (i == j) throw InvalidArgument("Dag: self-loop at vertex " + std::to_string(i));
    if (i > j) {
      throw InvalidArgument("Dag: edge (" + std::to_string(i) + "," + std::to_string(j) +
                            ") is not sorted");
    }
    if (e > 0 && edges_[e - 1] == edges_[e]) {
      throw InvalidArgument("Dag: duplicate edge (" + std::to_string(i) + "," +
                            std::to_string(j) + ")");
    }
    parents_[static_cast<std::size_t>(j - 1)].push_back(i);
    children_[static_cast<std::size_t>(i - 1)].push_back(j);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
}

Dag Dag::chain(int d) {
  std::vector<Edge> edges;
  for (int i = 1; i < d; ++i) edges.emplace_back(i, i + 1);
  return Dag(d, std::move(edges));
}

Dag Dag::complete(int d) {
  std::vector<Edge> edges;
  for (int i = 1; i <= d; ++i)
    for (int j = i + 1; j <= d; ++j) edges.emplace_back(i, j);
  return Dag(d, std::move(edges));
}

void Dag::check_vertex(int v) const {
  if (v < 1 || v > d_) {
    throw InvalidArgument("Dag: vertex " + std::to_string(v) + " outside 1.." +
                          std::to_string(d_));
  }
}

std::span<const int> Dag::parents(int v) const {
  check_vertex(v);
  return parents_[static_cast<std::size_t>(v - 1)];
}

std::span<const int> Dag::children(int v) const {
  check_vertex(v);
  return children_[static_cast<std::size_t>(v - 1)];
}

bool Dag::has_edge(int from, int to) const {
  return std::binary_search(edges_.begin(), edges_.end(), Edge{from, to});
}

std::vector<int> Dag::parents_of(std::span<const int> set) const {
  std::vector<char> in_set(static_cast<std::size_t>(d_) + 1, 0);
  for (int v : set) {
    check_vertex(v);
    in_set[static_cast<std::size_t>(v)] = 1;
  }
  std::vector<char> mark(in_set.size(), 0);
  for (int v : set)
    for (int p : parents(v))
      if (!in_set[static_cast<std::size_t>(p)]) mark[static_cast<std::size_t>(p)] = 1;
  std::vector<int> out;
  for (int v = 1; v <= d_; ++v)
    if (mark[static_cast<std::size_t>(v)]) out.push_back(v);
  return out;
}

std::vector<int> Dag::ancestors(int v) const {
  std::vector<char> mark(static_cast<std::size_t>(d_) + 1, 0);
  std::vector<int> stack(parents(v).begin(), parents(v).end());
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (mark[static_cast<std::size_t>(u)]) continue;
    mark[static_cast<std::size_t>(u)] = 1;
    for (int p : parents(u)) stack.push_back(p);
  }
  std::vector<int> out;
  for (int u = 1; u <= d_; ++u)
    if (mark[static_cast<std::size_t>(u)]) out.push_back(u);
  return out;
}

TargetSet::TargetSet(std::vector<int> indices, int d) : indices_(std::move(indices)), d_(d) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
  if (indices_.empty()) throw InvalidArgument("TargetSet: must be nonempty");
  if (indices_.front() < 1 || indices_.back() > d) {
    throw InvalidArgument("TargetSet: index outside 1.." + std::to_string(d));
  }
}

bool TargetSet::contains(int v) const {
  return std::binary_search(indices_.begin(), indices_.end(), v);
}

std::vector<int> TargetSet::complement() const {
  std::vector<int> out;
  for (int v = 1; v <= d_; ++v)
    if (!contains(v)) out.push_back(v);
  return out;
}

Dag sample_sorted_erdos_renyi(int d, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InvalidArgument("sample_sorted_erdos_renyi: p must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<Edge> edges;
  for (int i = 1; i <= d; ++i)
    for (int j = i + 1; j <= d; ++j)
      if (rng.bernoulli(p)) edges.emplace_back(i, j);
  return Dag(d, std::move(edges));
}

namespace {

// Quotient graph: block 0 is the target set, block v (v >= 1) is {v} for
// v outside T. Returns adjacency lists indexed by block id in [0, d].
std::vector<std::vector<int>> quotient_graph(const Dag& dag, const TargetSet& targets) {
  const int d = dag.size();
  auto block = [&](int v) { return targets.contains(v) ? 0 : v; };
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(d) + 1);
  for (const auto& [i, j] : dag.edges()) {
    const int a = block(i);
    const int b = block(j);
    if (a != b) adj[static_cast<std::size_t>(a)].push_back(b);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

}  // namespace

std::vector<int> quotient_cycle_witness(const Dag& dag, const TargetSet& targets) {
  if (targets.dimension() != dag.size()) {
    throw InvalidArgument("check_quotient_dag: target set dimension mismatch");
  }
  const auto adj = quotient_graph(dag, targets);
  const std::size_t n = adj.size();
  // Iterative DFS with colors; on a back edge, unwind the parent chain.
  std::vector<int> color(n, 0), parent(n, -1);
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != 0) continue;
    if (root != 0 && targets.contains(static_cast<int>(root))) continue;
    std::vector<std::pair<int, std::size_t>> stack{{static_cast<int>(root), 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [u, next] = stack.back();
      const auto& out = adj[static_cast<std::size_t>(u)];
      if (next < out.size()) {
        const int w = out[next++];
        if (color[static_cast<std::size_t>(w)] == 1) {
          std::vector<int> cycle{w};
          for (int x = u; x != w; x = parent[static_cast<std::size_t>(x)]) cycle.push_back(x);
          cycle.push_back(w);
          std::reverse(cycle.begin(), cycle.end());
          return cycle;
        }
        if (color[static_cast<std::size_t>(w)] == 0) {
          color[static_cast<std::size_t>(w)] = 1;
          parent[static_cast<std::size_t>(w)] = u;
          stack.emplace_back(w, 0);
        }
      } else {
        color[static_cast<std::size_t>(u)] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

bool check_quotient_dag(const Dag& dag, const TargetSet& targets) {
  return quotient_cycle_witness(dag, targets).empty();
}

bool parent_of_parent_free(const Dag& dag, const TargetSet& targets) {
  for (int j : targets.indices())
    for (int m : dag.parents(j)) {
      if (targets.contains(m)) continue;
      for (int i : dag.parents(m))
        if (targets.contains(i)) return false;
    }
  return true;
}

nlohmann::json to_json(const Dag& dag) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : dag.edges()) edges.push_back({i, j});
  return {{"d", dag.size()}, {"edges", edges}};
}

Dag dag_from_json(const nlohmann::json& j) {
  try {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (e.size() != 2) throw InvalidArgument("dag json: edge must have two entries");
      edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    return Dag(j.at("d").get<int>(), std::move(edges));
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidArgument(std::string("dag json: ") + ex.what());
  }
}

}  // namespace causalflow
