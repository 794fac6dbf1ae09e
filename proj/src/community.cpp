#include "herln/community.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace herln {

LayeredGraph::LayeredGraph(std::size_t num_nodes, std::size_t num_layers)
    : arcs_(num_nodes), degrees_(num_nodes), layer_weight_(num_layers, 0.0) {}

void LayeredGraph::add_edge(Index i, Index j, Index layer, double w) {
  if (i == j) {
    add_arc(i, i, layer, 2.0 * w);
  } else {
    add_arc(i, j, layer, w);
    add_arc(j, i, layer, w);
  }
}

void LayeredGraph::add_arc(Index i, Index j, Index layer, double a) {
  if (i >= arcs_.size() || j >= arcs_.size() || layer >= layer_weight_.size())
    throw std::out_of_range("layered graph: node or layer out of range");
  arcs_[i].push_back({j, layer, a});
}

void LayeredGraph::finalize() {
  std::fill(layer_weight_.begin(), layer_weight_.end(), 0.0);
  for (std::size_t i = 0; i < arcs_.size(); ++i) {
    auto& list = arcs_[i];
    std::sort(list.begin(), list.end(), [](const Arc& a, const Arc& b) {
      return a.layer != b.layer ? a.layer < b.layer : a.to < b.to;
    });
    std::vector<Arc> merged;
    for (const Arc& a : list) {
      if (!merged.empty() && merged.back().layer == a.layer && merged.back().to == a.to)
        merged.back().weight += a.weight;
      else
        merged.push_back(a);
    }
    list = std::move(merged);
    auto& deg = degrees_[i];
    deg.clear();
    for (const Arc& a : list) {
      if (!deg.empty() && deg.back().first == a.layer) deg.back().second += a.weight;
      else deg.emplace_back(a.layer, a.weight);
      layer_weight_[a.layer] += a.weight;
    }
  }
  total_weight_ = 0.0;
  for (double& m : layer_weight_) {
    m /= 2.0;
    total_weight_ += m;
  }
}

double LayeredGraph::weight(Index i, Index j, Index layer) const {
  for (const Arc& a : arcs_.at(i))
    if (a.to == j && a.layer == layer) return a.weight;
  return 0.0;
}

void CommunityAssignment::normalize() {
  std::vector<Index> remap;
  std::vector<bool> seen;
  Index next = 0;
  for (Index& c : community_of) {
    if (c >= remap.size()) {
      remap.resize(c + 1);
      seen.resize(c + 1, false);
    }
    if (!seen[c]) {
      seen[c] = true;
      remap[c] = next++;
    }
    c = remap[c];
  }
  num_communities = next;
}

LayeredGraph build_layered_graph(const TemporalGraph& g) {
  LayeredGraph lg(g.num_entities(), g.num_relations_raw());
  for (const auto& q : g.quadruples()) {
    if (q.relation >= g.num_relations_raw()) continue;
    lg.add_edge(q.subject, q.object, q.relation, 1.0);
  }
  lg.finalize();
  return lg;
}

double modularity_normalizer(const LayeredGraph& lg, Index /*layer*/) { return lg.total_weight(); }

namespace {

/// Gain of inserting an isolated node into a community, summed over layers:
///   (1 / 2M) * (k_in - tot * k_i / M)
/// with k_in the node's adjacency to the community counted in both
/// directions and tot the community's summed degree without the node.
double insertion_gain(double k_in_both, double tot, double k_i, double norm) {
  if (norm <= 0.0) return 0.0;
  return (k_in_both - tot * k_i / norm) / (2.0 * norm);
}

void check_assignment(const LayeredGraph& lg, const CommunityAssignment& asg) {
  if (asg.size() != lg.num_nodes())
    throw std::invalid_argument("assignment covers " + std::to_string(asg.size()) + " of " +
                                std::to_string(lg.num_nodes()) + " nodes");
}

}  // namespace

double modularity(const LayeredGraph& lg, const CommunityAssignment& asg) {
  check_assignment(lg, asg);
  const std::size_t k = asg.num_communities, layers = lg.num_layers();
  std::vector<double> inner(layers * k, 0.0), tot(layers * k, 0.0);
  for (Index i = 0; i < lg.num_nodes(); ++i) {
    const Index ci = asg.community_of[i];
    for (const auto& a : lg.arcs(i)) {
      tot[a.layer * k + ci] += a.weight;
      if (asg.community_of[a.to] == ci) inner[a.layer * k + ci] += a.weight;
    }
  }
  double q = 0.0;
  for (Index r = 0; r < layers; ++r) {
    const double two_m = 2.0 * modularity_normalizer(lg, r);
    if (two_m <= 0.0) continue;
    for (std::size_t c = 0; c < k; ++c) {
      const double e = inner[r * k + c] / two_m;
      const double a = tot[r * k + c] / two_m;
      q += e - a * a;
    }
  }
  return q;
}

double delta_modularity(const LayeredGraph& lg, const CommunityAssignment& asg, Index node,
                        Index target) {
  check_assignment(lg, asg);
  if (node >= lg.num_nodes()) throw std::out_of_range("delta_modularity: unknown node");
  if (target > asg.num_communities) throw std::invalid_argument("delta_modularity: unknown community id");
  const Index current = asg.community_of[node];
  if (target == current) return 0.0;

  auto gain = [&](Index c) {
    double total = 0.0;
    for (auto [layer, k_i] : lg.degrees(node)) {
      double k_in = 0.0;
      for (const auto& a : lg.arcs(node))
        if (a.layer == layer && a.to != node && asg.community_of[a.to] == c) k_in += a.weight;
      double tot = 0.0;
      for (Index j = 0; j < lg.num_nodes(); ++j) {
        if (j == node || asg.community_of[j] != c) continue;
        for (auto [l, k] : lg.degrees(j))
          if (l == layer) tot += k;
      }
      total += insertion_gain(2.0 * k_in, tot, k_i, modularity_normalizer(lg, layer));
    }
    return total;
  };
  return gain(target) - gain(current);
}

namespace {

constexpr double kMinGain = 1e-12;

/// Local-moving phase on one level. Returns the level's community of every
/// node (not yet contiguous) and whether anything moved.
bool move_nodes(const LayeredGraph& g, std::vector<Index>& comm, std::mt19937_64& rng) {
  const std::size_t n = g.num_nodes(), layers = g.num_layers();
  comm.resize(n);
  for (Index i = 0; i < n; ++i) comm[i] = i;
  std::vector<double> tot(layers * n, 0.0);
  for (Index i = 0; i < n; ++i)
    for (auto [r, k] : g.degrees(i)) tot[r * n + i] += k;

  std::vector<double> link(n, 0.0);
  std::vector<Index> touched;
  std::vector<bool> is_touched(n, false);
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  // Community sizes and unused ids; a node may also leave for an empty community.
  std::vector<std::size_t> members(n, 1);
  std::set<Index> free_ids;

  bool any_move = false;
  for (;;) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::size_t moves = 0;
    for (Index node : order) {
      if (g.degrees(node).empty()) continue;
      const Index home = comm[node];
      touched.clear();
      for (const auto& a : g.arcs(node)) {
        if (a.to == node) continue;
        const Index c = comm[a.to];
        if (!is_touched[c]) {
          is_touched[c] = true;
          touched.push_back(c);
        }
        const double norm = modularity_normalizer(g, a.layer);
        link[c] += 2.0 * a.weight / (2.0 * norm);
      }
      for (auto [r, k] : g.degrees(node)) tot[r * n + home] -= k;
      if (members[home] > 1 && !free_ids.empty()) {
        const Index empty = *free_ids.begin();
        is_touched[empty] = true;
        touched.push_back(empty);
      }

      auto gain = [&](Index c) {
        double v = link[c];
        for (auto [r, k] : g.degrees(node)) {
          const double norm = modularity_normalizer(g, r);
          v -= tot[r * n + c] * k / (2.0 * norm * norm);
        }
        return v;
      };
      std::sort(touched.begin(), touched.end());
      Index best = home;
      double best_gain = gain(home);
      for (Index c : touched) {
        if (c == home) continue;
        const double v = gain(c);
        if (v > best_gain + kMinGain) {
          best = c;
          best_gain = v;
        }
      }
      for (auto [r, k] : g.degrees(node)) tot[r * n + best] += k;
      if (best != home) {
        comm[node] = best;
        if (--members[home] == 0) free_ids.insert(home);
        if (members[best]++ == 0) free_ids.erase(best);
        ++moves;
      }
      for (Index c : touched) {
        link[c] = 0.0;
        is_touched[c] = false;
      }
    }
    if (moves == 0) break;
    any_move = true;
  }
  return any_move;
}

LayeredGraph aggregate(const LayeredGraph& g, const std::vector<Index>& comm, std::size_t k) {
  LayeredGraph out(k, g.num_layers());
  for (Index i = 0; i < g.num_nodes(); ++i)
    for (const auto& a : g.arcs(i)) out.add_arc(comm[i], comm[a.to], a.layer, a.weight);
  out.finalize();
  return out;
}

}  // namespace

namespace {

CommunityAssignment louvain_once(const LayeredGraph& lg, std::uint64_t seed, LouvainTrace* trace) {
  std::mt19937_64 rng(seed);
  CommunityAssignment result;
  result.community_of.resize(lg.num_nodes());
  for (Index i = 0; i < lg.num_nodes(); ++i) result.community_of[i] = i;
  result.num_communities = lg.num_nodes();
  if (trace) trace->level_modularity.push_back(modularity(lg, result));

  LayeredGraph level = lg;
  for (;;) {
    std::vector<Index> comm;
    if (!move_nodes(level, comm, rng)) break;
    CommunityAssignment lvl{std::move(comm), 0};
    lvl.normalize();
    for (Index& c : result.community_of) c = lvl.community_of[c];
    result.num_communities = lvl.num_communities;
    if (trace) trace->level_modularity.push_back(modularity(lg, result));
    level = aggregate(level, lvl.community_of, lvl.num_communities);
  }
  result.normalize();
  return result;
}

}  // namespace

CommunityAssignment detect_communities(const LayeredGraph& lg, std::uint64_t seed, LouvainTrace* trace,
                                       std::size_t restarts) {
  if (restarts == 0) throw std::invalid_argument("detect_communities: restarts must be positive");
  std::mt19937_64 seeds(seed);
  CommunityAssignment best;
  double best_q = 0.0;
  for (std::size_t run = 0; run < restarts; ++run) {
    LouvainTrace run_trace;
    CommunityAssignment asg = louvain_once(lg, seeds(), trace ? &run_trace : nullptr);
    const double q = modularity(lg, asg);
    if (run == 0 || q > best_q + 1e-12) {
      best = std::move(asg);
      best_q = q;
      if (trace) *trace = std::move(run_trace);
    }
  }
  return best;
}

int community_indicator(const CommunityAssignment& asg, Index i, Index j) {
  if (i >= asg.size() || j >= asg.size()) throw std::out_of_range("community_indicator: unknown node id");
  return asg.community_of[i] == asg.community_of[j] ? 1 : 0;
}

void save_partition(const std::filesystem::path& path, const CommunityAssignment& asg, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write partition file " + path.string());
  out << "#K=" << asg.num_communities << " seed=" << seed << '\n';
  for (std::size_t i = 0; i < asg.size(); ++i) out << i << '\t' << asg.community_of[i] << '\n';
  if (!out) throw std::runtime_error("failed writing partition file " + path.string());
}

CommunityAssignment load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open partition file " + path.string());
  std::string header;
  std::getline(in, header);
  if (header.rfind("#K=", 0) != 0) throw std::runtime_error("partition file lacks #K header");
  const std::size_t k = std::stoul(header.substr(3));
  CommunityAssignment asg;
  std::size_t node = 0;
  Index comm = 0;
  while (in >> node >> comm) {
    if (node != asg.community_of.size()) throw std::runtime_error("partition file is not in node order");
    asg.community_of.push_back(comm);
  }
  asg.normalize();
  if (asg.num_communities != k) throw std::runtime_error("partition file header disagrees with its body");
  return asg;
}

}  // namespace herln
