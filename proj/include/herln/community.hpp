#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "herln/graph_store.hpp"

namespace herln {

/// Undirected weighted multigraph with one layer per relation. Adjacency
/// follows the symmetric convention A[i][j] == A[j][i]; a self-loop of weight
/// w is stored once as A[i][i] = 2w so that degrees count it twice.
class LayeredGraph {
 public:
  struct Arc {
    Index to;
    Index layer;
    double weight;
  };

  LayeredGraph() = default;
  LayeredGraph(std::size_t num_nodes, std::size_t num_layers);

  /// Adds an undirected edge of weight w to `layer`, merging with parallels.
  void add_edge(Index i, Index j, Index layer, double w = 1.0);
  /// Adds `a` to the single entry A[i][j]; callers keep the matrix symmetric.
  /// Used for aggregated graphs where self-loops already hold internal weight.
  void add_arc(Index i, Index j, Index layer, double a);
  /// Sorts and merges arcs; call once after the last add.
  void finalize();

  std::size_t num_nodes() const noexcept { return arcs_.size(); }
  std::size_t num_layers() const noexcept { return layer_weight_.size(); }
  std::span<const Arc> arcs(Index node) const noexcept { return arcs_[node]; }
  /// (layer, k_{i,layer}) for every layer in which the node has weight.
  std::span<const std::pair<Index, double>> degrees(Index node) const noexcept {
    return degrees_[node];
  }
  double layer_weight(Index layer) const noexcept { return layer_weight_[layer]; }
  double total_weight() const noexcept { return total_weight_; }
  double weight(Index i, Index j, Index layer) const;

 private:
  std::vector<std::vector<Arc>> arcs_;
  std::vector<std::vector<std::pair<Index, double>>> degrees_;
  std::vector<double> layer_weight_;  // m_r
  double total_weight_ = 0.0;         // m, summed over layers
};

/// Node -> community map with contiguous community ids 0..K-1.
struct CommunityAssignment {
  std::vector<Index> community_of;
  std::size_t num_communities = 0;

  std::size_t size() const noexcept { return community_of.size(); }
  /// Renumbers ids to 0..K-1 in order of first appearance by node id.
  void normalize();
};

/// One layer per raw relation over the time-collapsed, undirected graph.
/// Inverse relations (ids >= num_relations_raw) are ignored.
LayeredGraph build_layered_graph(const TemporalGraph& g);

/// Normalizer shared by every layer's modularity term. The global total edge
/// weight is used; returning lg.layer_weight(layer) instead gives the
/// per-layer variant.
double modularity_normalizer(const LayeredGraph& lg, Index layer);

/// Summed per-relation modularity.
double modularity(const LayeredGraph& lg, const CommunityAssignment& asg);

/// Q(after moving `node` into `target`) - Q(before), evaluated with the
/// closed-form insertion gain. `target` may be an unused id <= K (empty community).
double delta_modularity(const LayeredGraph& lg, const CommunityAssignment& asg, Index node,
                        Index target);

struct LouvainTrace {
  std::vector<double> level_modularity;  // Q after each aggregation level
};

inline constexpr std::size_t kLouvainRestarts = 8;

/// Multi-layer Louvain: local moving with shuffled visiting order, then
/// aggregation, repeated until a level makes no move. Runs `restarts` times
/// with visiting orders drawn from `seed` and keeps the highest modularity
/// (the trace describes that run).
CommunityAssignment detect_communities(const LayeredGraph& lg, std::uint64_t seed,
                                       LouvainTrace* trace = nullptr,
                                       std::size_t restarts = kLouvainRestarts);

/// 1 iff i and j share a community.
int community_indicator(const CommunityAssignment& asg, Index i, Index j);

/// Partition cache: header `#K=<K> seed=<seed>` then `entity<TAB>community`.
void save_partition(const std::filesystem::path& path, const CommunityAssignment& asg,
                    std::uint64_t seed);
CommunityAssignment load_partition(const std::filesystem::path& path);

}  // namespace herln
