// Shared helpers for the test binaries: random tensors, finite differences,
// small temporal graphs and an exhaustive modularity oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "herln/community.hpp"
#include "herln/graph_store.hpp"
#include "herln/ops.hpp"
#include "herln/parameters.hpp"

namespace fixtures {

using namespace herln;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares backward() against central differences on `coords` random
/// coordinates of every parameter (all of them when the tensor is smaller).
inline GradCheckResult grad_check(ParameterStore& params, const std::function<Var()>& loss_fn,
                                  std::size_t coords, double step, std::uint64_t seed) {
  params.zero_grad();
  backward(loss_fn());
  std::mt19937_64 rng(seed);
  GradCheckResult res;
  for (const auto& name : params.names()) {
    Var& p = params.get(name);
    const Tensor grad = p.grad();
    std::vector<std::size_t> idx(p.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    if (idx.size() > coords) idx.resize(coords);
    for (std::size_t i : idx) {
      const double orig = p.value()[i];
      p.mutable_value()[i] = orig + step;
      const double up = loss_fn().value()[0];
      p.mutable_value()[i] = orig - step;
      const double down = loss_fn().value()[0];
      p.mutable_value()[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double err = rel_err(grad[i], numeric);
      ++res.checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = name + "[" + std::to_string(i) + "] analytic=" + std::to_string(grad[i]) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  params.zero_grad();
  return res;
}

inline TemporalGraph make_graph(std::vector<Quadruple> facts, std::size_t entities, std::size_t relations,
                                std::size_t timestamps) {
  return TemporalGraph(std::move(facts), entities, relations, timestamps);
}

/// 5 entities, 3 relations, 4 timestamps, 20 facts; the object is a
/// deterministic function of (subject, relation) so the data is learnable.
inline DatasetBundle memorization_bundle() {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index s = 0; s < 5; ++s)
    for (Index r = 0; r < 3; ++r) pairs.emplace_back(s, r);
  std::vector<Quadruple> facts;
  for (Index i = 0; i < 20; ++i) {
    const auto [s, r] = pairs[i % pairs.size()];
    facts.push_back({s, r, (s + r + 1) % 5, i / 5});
  }
  DatasetBundle b;
  b.name = "memorize";
  b.train = make_graph(facts, 5, 3, 4);
  b.valid = make_graph({}, 5, 3, 4);
  b.test = make_graph({}, 5, 3, 4);
  return b;
}

/// Six entities, two relations, timestamps 0..5 split 4/1/1.
inline DatasetBundle toy_bundle() {
  std::vector<Quadruple> train = {
      {0, 0, 1, 0}, {1, 1, 2, 0}, {2, 0, 3, 1}, {3, 1, 4, 1}, {4, 0, 5, 2},
      {5, 1, 0, 2}, {0, 0, 2, 3}, {1, 1, 3, 3}, {2, 0, 4, 3},
  };
  std::vector<Quadruple> valid = {{0, 0, 1, 4}, {3, 1, 5, 4}};
  std::vector<Quadruple> test = {{1, 1, 2, 5}, {4, 0, 0, 5}, {2, 0, 3, 5}};
  DatasetBundle b;
  b.name = "toy";
  b.train = make_graph(train, 6, 2, 6);
  b.valid = make_graph(valid, 6, 2, 6);
  b.test = make_graph(test, 6, 2, 6);
  return b;
}

/// Two triangles {0,1,2} and {3,4,5} joined by the edge 2-3, one layer.
inline LayeredGraph two_triangles() {
  LayeredGraph lg(6, 1);
  for (auto [i, j] : {std::pair{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}, {2, 3}})
    lg.add_edge(static_cast<Index>(i), static_cast<Index>(j), 0);
  lg.finalize();
  return lg;
}

/// Literal modularity: sum over layers and communities of
/// in_c / (2m) - (tot_c / (2m))^2 with m the total weight of all layers.
inline double naive_modularity(std::size_t n, std::size_t layers,
                               const std::vector<std::tuple<Index, Index, Index, double>>& edges,
                               const std::vector<Index>& comm) {
  double m = 0.0;
  for (const auto& e : edges) m += std::get<3>(e);
  if (m == 0.0) return 0.0;
  std::size_t k = 0;
  for (Index c : comm) k = std::max<std::size_t>(k, c + 1);
  double q = 0.0;
  for (std::size_t r = 0; r < layers; ++r) {
    std::vector<double> in(k, 0.0), tot(k, 0.0);
    for (const auto& [i, j, layer, w] : edges) {
      if (layer != r) continue;
      tot[comm[i]] += w;
      tot[comm[j]] += w;
      if (comm[i] == comm[j]) in[comm[i]] += 2.0 * w;
    }
    for (std::size_t c = 0; c < k; ++c) q += in[c] / (2.0 * m) - (tot[c] / (2.0 * m)) * (tot[c] / (2.0 * m));
  }
  (void)n;
  return q;
}

/// Calls fn on every set partition of {0..n-1} as restricted-growth strings.
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<Index>&)>& fn) {
  std::vector<Index> a(n, 0);
  std::function<void(std::size_t, Index)> rec = [&](std::size_t i, Index max_used) {
    if (i == n) {
      fn(a);
      return;
    }
    for (Index c = 0; c <= max_used + 1; ++c) {
      if (i == 0 && c > 0) break;
      a[i] = c;
      rec(i + 1, std::max(max_used, c));
    }
  };
  if (n == 0) {
    fn(a);
    return;
  }
  a[0] = 0;
  rec(1, 0);
}

struct RandomLayered {
  std::size_t nodes = 0;
  std::size_t layers = 0;
  std::vector<std::tuple<Index, Index, Index, double>> edges;

  LayeredGraph build() const {
    LayeredGraph lg(nodes, layers);
    for (const auto& [i, j, r, w] : edges) lg.add_edge(i, j, r, w);
    lg.finalize();
    return lg;
  }
};

/// Random multigraph with <= max_nodes nodes and <= max_layers layers, unit
/// edge weights (repeated pairs accumulate).
inline RandomLayered random_layered(std::mt19937_64& rng, std::size_t max_nodes, std::size_t max_layers) {
  RandomLayered g;
  g.nodes = std::uniform_int_distribution<std::size_t>(2, max_nodes)(rng);
  g.layers = std::uniform_int_distribution<std::size_t>(1, max_layers)(rng);
  const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 2 * g.nodes)(rng);
  std::uniform_int_distribution<Index> node(0, static_cast<Index>(g.nodes - 1));
  std::uniform_int_distribution<Index> layer(0, static_cast<Index>(g.layers - 1));
  for (std::size_t e = 0; e < m; ++e) {
    const Index i = node(rng), j = node(rng);
    if (i == j) continue;
    g.edges.emplace_back(i, j, layer(rng), 1.0);
  }
  if (g.edges.empty()) g.edges.emplace_back(0, 1, 0, 1.0);
  return g;
}

}  // namespace fixtures
