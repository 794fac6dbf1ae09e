#include "herln/init_embed.hpp"

#include <algorithm>

namespace herln {

void register_embedding_params(ParameterStore& store, std::size_t num_entities,
                               std::size_t num_relations, std::size_t dim, std::mt19937_64& rng) {
  store.add(kEntityInit, xavier_uniform({num_entities, dim}, num_entities, dim, rng));
  store.add(kRelationEmbedding, xavier_uniform({num_relations, dim}, num_relations, dim, rng));
  store.add(kInitMessage, xavier_uniform({dim, dim}, dim, dim, rng));
  store.add(kInitSelf, xavier_uniform({dim, dim}, dim, dim, rng));
}

std::shared_ptr<const SparseRows> community_message_matrix(const TemporalGraph& g,
                                                           const CommunityAssignment& asg,
                                                           bool intra_community_normalizer) {
  const std::size_t n = g.num_entities();
  if (asg.size() != n) throw std::invalid_argument("community assignment does not cover every entity");
  std::vector<std::vector<Index>> neighbours(n);
  for (const auto& q : g.quadruples()) {
    if (q.subject == q.object) continue;
    neighbours[q.subject].push_back(q.object);
    neighbours[q.object].push_back(q.subject);
  }
  auto matrix = std::make_shared<SparseRows>();
  matrix->cols = n;
  matrix->rows.resize(n);
  for (Index i = 0; i < n; ++i) {
    auto& nb = neighbours[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    std::vector<Index> same;
    for (Index j : nb)
      if (asg.community_of[j] == asg.community_of[i]) same.push_back(j);
    if (same.empty()) continue;
    const double coeff = 1.0 / static_cast<double>(intra_community_normalizer ? same.size() : nb.size());
    for (Index j : same) matrix->rows[i].emplace_back(j, coeff);
  }
  return matrix;
}

Var init_embeddings(std::shared_ptr<const SparseRows> messages, const Var& h_init,
                    const Var& w_message, const Var& w_self, Activation activation) {
  if (w_message.rows() != h_init.cols() || w_self.rows() != h_init.cols() ||
      w_message.cols() != w_self.cols()) {
    throw NumericError("init_embeddings: weights " + shape_string(w_message.shape()) + " / " +
                       shape_string(w_self.shape()) + " do not match embeddings " +
                       shape_string(h_init.shape()));
  }
  Var neighbour = spmm(std::move(messages), matmul(h_init, w_message));
  Var self = matmul(h_init, w_self);
  return activate(add(neighbour, self), activation);
}

Var init_embeddings(const TemporalGraph& g, const CommunityAssignment& asg,
                    const ParameterStore& params, const InitEmbedConfig& cfg) {
  return init_embeddings(community_message_matrix(g, asg, cfg.intra_community_normalizer),
                         params.get(kEntityInit), params.get(kInitMessage), params.get(kInitSelf),
                         cfg.activation);
}

}  // namespace herln
