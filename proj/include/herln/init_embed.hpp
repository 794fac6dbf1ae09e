#pragma once

#include <memory>
#include <random>

#include "herln/community.hpp"
#include "herln/graph_store.hpp"
#include "herln/ops.hpp"
#include "herln/parameters.hpp"

namespace herln {

inline constexpr const char* kEntityInit = "entity.init";
inline constexpr const char* kRelationEmbedding = "relation.embedding";
inline constexpr const char* kInitMessage = "init.message";
inline constexpr const char* kInitSelf = "init.self";

struct InitEmbedConfig {
  Activation activation = Activation::Relu;
  /// Divide messages by the number of same-community neighbours instead of
  /// all neighbours.
  bool intra_community_normalizer = false;
};

/// Registers entity.init [N, d], relation.embedding [R, d], init.message and
/// init.self [d, d].
void register_embedding_params(ParameterStore& store, std::size_t num_entities,
                               std::size_t num_relations, std::size_t dim, std::mt19937_64& rng);

/// Row i holds (j, 1/|N_i|) for every neighbour j of i sharing i's community,
/// where N_i is the time-collapsed, undirected neighbourhood (self excluded).
std::shared_ptr<const SparseRows> community_message_matrix(const TemporalGraph& g,
                                                           const CommunityAssignment& asg,
                                                           bool intra_community_normalizer = false);

/// H_C = act(A (H_init W) + H_init W_0), the community-restricted graph
/// convolution with A from community_message_matrix.
Var init_embeddings(std::shared_ptr<const SparseRows> messages, const Var& h_init,
                    const Var& w_message, const Var& w_self, Activation activation);

Var init_embeddings(const TemporalGraph& g, const CommunityAssignment& asg,
                    const ParameterStore& params, const InitEmbedConfig& cfg = {});

}  // namespace herln
