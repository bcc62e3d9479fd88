#include "causalflow/transport.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "causalflow/error.hpp"

namespace causalflow {

namespace {

constexpr double kMassTol = 1e-9;
constexpr double kCostTol = 1e-12;
constexpr double kPositive = 1e-15;

void check_problem(std::span<const double> a, std::span<const double> b, const Eigen::MatrixXd& cost) {
  if (a.empty() || b.empty()) throw InvalidArgument("optimal_transport: empty marginal");
  if (cost.rows() != static_cast<Eigen::Index>(a.size()) ||
      cost.cols() != static_cast<Eigen::Index>(b.size())) {
    throw InvalidArgument("optimal_transport: cost shape does not match marginals");
  }
  for (double w : a)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("optimal_transport: bad source weight");
  for (double w : b)
    if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("optimal_transport: bad target weight");
  const double sa = std::accumulate(a.begin(), a.end(), 0.0);
  const double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (std::abs(sa - sb) > kMassTol * std::max(1.0, sa)) {
    throw InvalidArgument("optimal_transport: marginals have different mass");
  }
  if (!cost.allFinite()) throw InvalidArgument("optimal_transport: non-finite cost");
}

// Row-major indices of cells with positive mass.
std::vector<int> support_of(const Eigen::MatrixXd& p) {
  std::vector<int> s;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (p(i, j) > kPositive) s.push_back(static_cast<int>(i * p.cols() + j));
  return s;
}

}  // namespace

TransportPlan transport_enumerate(std::span<const double> a, std::span<const double> b,
                                  const Eigen::MatrixXd& cost) {
  check_problem(a, b, cost);
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(b.size());
  if (m * n > 20) throw InvalidArgument("transport_enumerate: problem too large to enumerate");
  const int basis = m + n - 1;
  const int cells = m * n;

  TransportPlan best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<int> best_support;
  Eigen::MatrixXd p(m, n);
  std::vector<double> r(static_cast<std::size_t>(m)), s(static_cast<std::size_t>(n));
  std::vector<int> row_deg(static_cast<std::size_t>(m)), col_deg(static_cast<std::size_t>(n));
  for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
    if (std::popcount(mask) != basis) continue;
    // Peel leaves of the bipartite cell graph; succeeds iff the cells form a
    // spanning tree, which then fixes the basic solution.
    std::copy(a.begin(), a.end(), r.begin());
    std::copy(b.begin(), b.end(), s.begin());
    std::fill(row_deg.begin(), row_deg.end(), 0);
    std::fill(col_deg.begin(), col_deg.end(), 0);
    for (int c = 0; c < cells; ++c) {
      if (mask >> c & 1u) {
        ++row_deg[static_cast<std::size_t>(c / n)];
        ++col_deg[static_cast<std::size_t>(c % n)];
      }
    }
    p.setZero();
    std::uint32_t left = mask;
    bool ok = true;
    while (left != 0 && ok) {
      bool progressed = false;
      for (int c = 0; c < cells && !progressed; ++c) {
        if (!(left >> c & 1u)) continue;
        const auto i = static_cast<std::size_t>(c / n);
        const auto j = static_cast<std::size_t>(c % n);
        double x;
        if (row_deg[i] == 1) {
          x = r[i];
        } else if (col_deg[j] == 1) {
          x = s[j];
        } else {
          continue;
        }
        p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
        r[i] -= x;
        s[j] -= x;
        --row_deg[i];
        --col_deg[j];
        left &= ~(1u << c);
        progressed = true;
      }
      ok = progressed;
    }
    if (!ok) continue;
    if ((p.array() < -kMassTol).any()) continue;
    bool balanced = true;
    for (double v : r) balanced = balanced && std::abs(v) <= kMassTol;
    for (double v : s) balanced = balanced && std::abs(v) <= kMassTol;
    if (!balanced) continue;
    p = p.cwiseMax(0.0);
    const double c = (p.array() * cost.array()).sum();
    if (c < best.cost - kCostTol) {
      best.cost = c;
      best.plan = p;
      best_support = support_of(p);
    } else if (c <= best.cost + kCostTol) {
      auto sup = support_of(p);
      if (sup < best_support) {
        best.cost = std::min(best.cost, c);
        best.plan = p;
        best_support = std::move(sup);
      }
    }
  }
  if (!std::isfinite(best.cost)) throw EvaluationError("transport_enumerate: no feasible basis", 0);
  return best;
}

TransportPlan transport_simplex(std::span<const double> a, std::span<const double> b,
                                const Eigen::MatrixXd& cost) {
  check_problem(a, b, cost);
  const int m = static_cast<int>(a.size());
  const int n = static_cast<int>(b.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, n);
  std::vector<std::vector<bool>> basic(static_cast<std::size_t>(m), std::vector<bool>(static_cast<std::size_t>(n), false));

  // Northwest corner start with exactly m + n - 1 basic cells.
  {
    std::vector<double> r(a.begin(), a.end()), s(b.begin(), b.end());
    int i = 0, j = 0;
    while (true) {
      const double v = std::min(r[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)]);
      x(i, j) = v;
      basic[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
      r[static_cast<std::size_t>(i)] -= v;
      s[static_cast<std::size_t>(j)] -= v;
      if (i == m - 1 && j == n - 1) break;
      if (j == n - 1 || (i < m - 1 && r[static_cast<std::size_t>(i)] <= s[static_cast<std::size_t>(j)])) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Tree nodes: rows 0..m-1, columns m..m+n-1.
  const int nodes = m + n;
  std::vector<double> pot(static_cast<std::size_t>(nodes));
  std::vector<int> parent(static_cast<std::size_t>(nodes));
  std::vector<int> order;
  const int max_iter = 100000;
  for (int iter = 0; iter < max_iter; ++iter) {
    // Potentials u_i + v_j = c_ij on basic cells, by BFS from row 0.
    std::fill(parent.begin(), parent.end(), -2);
    parent[0] = -1;
    pot[0] = 0.0;
    order.assign(1, 0);
    for (std::size_t q = 0; q < order.size(); ++q) {
      const int u = order[q];
      if (u < m) {
        for (int j = 0; j < n; ++j) {
          if (basic[static_cast<std::size_t>(u)][static_cast<std::size_t>(j)] && parent[static_cast<std::size_t>(m + j)] == -2) {
            parent[static_cast<std::size_t>(m + j)] = u;
            pot[static_cast<std::size_t>(m + j)] = cost(u, j) - pot[static_cast<std::size_t>(u)];
            order.push_back(m + j);
          }
        }
      } else {
        const int j = u - m;
        for (int i = 0; i < m; ++i) {
          if (basic[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] && parent[static_cast<std::size_t>(i)] == -2) {
            parent[static_cast<std::size_t>(i)] = u;
            pot[static_cast<std::size_t>(i)] = cost(i, j) - pot[static_cast<std::size_t>(u)];
            order.push_back(i);
          }
        }
      }
    }
    if (static_cast<int>(order.size()) != nodes) {
      throw EvaluationError("transport_simplex: basis is not a spanning tree", static_cast<std::size_t>(iter));
    }
    // Bland: first cell with negative reduced cost enters.
    int ei = -1, ej = -1;
    for (int i = 0; i < m && ei < 0; ++i) {
      for (int j = 0; j < n; ++j) {
        if (basic[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) continue;
        const double scale = 1.0 + std::abs(cost(i, j));
        if (cost(i, j) - pot[static_cast<std::size_t>(i)] - pot[static_cast<std::size_t>(m + j)] < -kCostTol * scale) {
          ei = i;
          ej = j;
          break;
        }
      }
    }
    if (ei < 0) {
      TransportPlan out;
      out.plan = x.cwiseMax(0.0);
      out.cost = (out.plan.array() * cost.array()).sum();
      return out;
    }
    // Path in the tree from column ej to row ei (through their common
    // ancestor) closes the cycle with the entering cell.
    auto path_to_root = [&](int v) {
      std::vector<int> p;
      for (; v != -1; v = parent[static_cast<std::size_t>(v)]) p.push_back(v);
      return p;
    };
    auto pa = path_to_root(m + ej);
    auto pb = path_to_root(ei);
    while (pa.size() > 1 && pb.size() > 1 && pa[pa.size() - 2] == pb[pb.size() - 2]) {
      pa.pop_back();
      pb.pop_back();
    }
    std::vector<int> walk(pa.begin(), pa.end());  // column ej ... ancestor
    for (auto it = pb.rbegin() + 1; it != pb.rend(); ++it) walk.push_back(*it);  // ... row ei
    // Cells along the walk alternate -, +, -, ... starting next to the entering cell.
    std::vector<std::pair<int, int>> cycle;
    for (std::size_t k = 0; k + 1 < walk.size(); ++k) {
      const int u = walk[k], v = walk[k + 1];
      cycle.emplace_back(u < m ? u : v, (u < m ? v : u) - m);
    }
    double theta = std::numeric_limits<double>::infinity();
    int leave = -1;
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const auto [i, j] = cycle[k];
      const double v = x(i, j);
      const int idx = i * n + j;
      if (v < theta - kPositive || (v <= theta + kPositive && idx < leave)) {
        theta = std::min(theta, v);
        leave = idx;
      }
    }
    x(ei, ej) += theta;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const auto [i, j] = cycle[k];
      x(i, j) += (k % 2 == 0) ? -theta : theta;
    }
    basic[static_cast<std::size_t>(ei)][static_cast<std::size_t>(ej)] = true;
    basic[static_cast<std::size_t>(leave / n)][static_cast<std::size_t>(leave % n)] = false;
    x(leave / n, leave % n) = 0.0;
  }
  throw EvaluationError("transport_simplex: iteration limit reached", static_cast<std::size_t>(max_iter));
}

TransportPlan optimal_transport(std::span<const double> a, std::span<const double> b,
                                const Eigen::MatrixXd& cost) {
  if (a.size() <= 4 && b.size() <= 4) return transport_enumerate(a, b, cost);
  return transport_simplex(a, b, cost);
}

}  // namespace causalflow
