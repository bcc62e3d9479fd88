#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

namespace causalflow {

// An edge (from, to) with from < to. Vertices are 1-based.
using Edge = std::pair<int, int>;

// Sorted DAG on vertices 1..d: every edge points from a lower to a higher
// index, so 1..d is a topological order. Immutable after construction.
class Dag {
 public:
  Dag() = default;
  // Throws InvalidArgument on out-of-range vertices, self-loops, backward
  // edges or duplicates.
  Dag(int d, std::vector<Edge> edges);

  static Dag empty(int d) { return Dag(d, {}); }
  static Dag chain(int d);
  static Dag complete(int d);

  int size() const { return d_; }
  // Lexicographically sorted.
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const int> parents(int v) const;
  std::span<const int> children(int v) const;
  bool has_edge(int from, int to) const;
  bool is_root(int v) const { return parents(v).empty(); }

  // PA(A): vertices outside A with a child in A, sorted.
  std::vector<int> parents_of(std::span<const int> set) const;
  std::vector<int> ancestors(int v) const;

  bool operator==(const Dag& other) const {
    return d_ == other.d_ && edges_ == other.edges_;
  }

 private:
  void check_vertex(int v) const;

  int d_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<int>> children_;
};

// Nonempty sorted subset of 1..d.
class TargetSet {
 public:
  TargetSet() = default;
  TargetSet(std::vector<int> indices, int d);

  const std::vector<int>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool contains(int v) const;
  // V \ T in increasing order.
  std::vector<int> complement() const;
  int dimension() const { return d_; }

 private:
  std::vector<int> indices_;
  int d_ = 0;
};

// Sorted Erdos-Renyi graph: each pair i < j kept independently with
// probability p.
Dag sample_sorted_erdos_renyi(int d, double p, std::uint64_t seed);

// True iff the quotient of `dag` by {T} u {{i} : i not in T} is acyclic.
bool check_quotient_dag(const Dag& dag, const TargetSet& targets);

// A directed cycle in the quotient graph, as a sequence of blocks where the
// target block is reported as 0 and singleton blocks by their vertex. Empty
// when the quotient is acyclic.
std::vector<int> quotient_cycle_witness(const Dag& dag, const TargetSet& targets);

// No i, j in T such that i is a parent of a parent of j (the intermediate
// vertex outside T). Necessary for an acyclic quotient, not sufficient:
// 1->2->3->4 with T={1,4} passes here but its quotient has a cycle.
bool parent_of_parent_free(const Dag& dag, const TargetSet& targets);

nlohmann::json to_json(const Dag& dag);
Dag dag_from_json(const nlohmann::json& j);

}  // namespace causalflow
