#include "herln/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace herln {

std::string layer_param(std::size_t layer, const std::string& what) {
  return "hrgcn." + std::to_string(layer) + "." + what;
}

void register_encoder_params(ParameterStore& store, std::size_t num_relations, std::size_t dim,
                             const EncoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.bases == 0) throw std::invalid_argument("encoder needs at least one basis matrix");
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    store.add(layer_param(l, "self"), xavier_uniform({dim, dim}, dim, dim, rng));
    for (std::size_t b = 0; b < cfg.bases; ++b)
      store.add(layer_param(l, "basis." + std::to_string(b)), xavier_uniform({dim, dim}, dim, dim, rng));
    store.add(layer_param(l, "coeff"), xavier_uniform({num_relations, cfg.bases}, num_relations, cfg.bases, rng));
  }
  store.add(kDecayParam, Tensor::scalar(0.0));
}

void register_gate_params(ParameterStore& store, std::size_t dim, std::mt19937_64& rng) {
  store.add("gate.graph.weight", xavier_uniform({dim, dim}, dim, dim, rng));
  store.add("gate.graph.bias", Tensor({dim}));
  store.add("gate.weight", xavier_uniform({dim, 1}, dim, 1, rng));
  store.add("gate.bias", Tensor({1}));
}

std::vector<double> decay_weights(std::span<const double> dts, double delta) {
  if (dts.empty()) throw std::invalid_argument("decay_weights: node has no in-edges");
  std::vector<Index> group(dts.size(), 0);
  Var out = normalized_decay(Var::constant(Tensor::scalar(delta)), dts, group, 1);
  return {out.value().values().begin(), out.value().values().end()};
}

EdgeIndex index_history(const HistoryGraph& hg, std::size_t num_entities) {
  EdgeIndex idx;
  idx.num_nodes = num_entities;
  const std::size_t e = hg.edges.size();
  idx.src.reserve(e);
  idx.rel.reserve(e);
  idx.dst.reserve(e);
  idx.dt.reserve(e);
  std::vector<std::size_t> count(num_entities, 0);
  for (const auto& q : hg.edges) {
    if (q.time >= hg.reference_time) throw std::logic_error("history edge is not strictly in the past");
    if (q.subject >= num_entities || q.object >= num_entities)
      throw std::out_of_range("history edge references unknown entity");
    idx.src.push_back(q.subject);
    idx.rel.push_back(q.relation);
    idx.dst.push_back(q.object);
    idx.dt.push_back(static_cast<double>(hg.reference_time - q.time));
    ++count[q.object];
  }
  idx.fan_in.reserve(e);
  for (Index d : idx.dst) idx.fan_in.push_back(1.0 / static_cast<double>(count[d]));
  return idx;
}

Var message_weights(const EdgeIndex& edges, const ParameterStore& params, const EncoderConfig& cfg) {
  if (edges.size() == 0) return {};
  Var kernel;
  if (cfg.decay == DecayMode::Uniform) {
    // Every in-edge of o gets 1/|F_o|, the same value the exponential kernel
    // produces when delta is zero.
    kernel = Var::constant(Tensor({edges.size()}, edges.fan_in));
  } else {
    Var delta = cfg.fixed_decay ? Var::constant(Tensor::scalar(*cfg.fixed_decay))
                                : softplus(params.get(kDecayParam));
    kernel = normalized_decay(delta, edges.dt, edges.dst, edges.num_nodes);
  }
  if (!cfg.fan_in_normalizer) return kernel;
  return mul_const(kernel, edges.fan_in);
}

LayerParams layer_params(const ParameterStore& params, std::size_t layer, std::size_t bases) {
  LayerParams p;
  p.self = params.get(layer_param(layer, "self"));
  for (std::size_t b = 0; b < bases; ++b) p.bases.push_back(params.get(layer_param(layer, "basis." + std::to_string(b))));
  p.coeff = params.get(layer_param(layer, "coeff"));
  return p;
}

Var hrgcn_layer(const EdgeIndex& edges, const Var& h, const Var& relations, const LayerParams& p,
                const Var& weights) {
  if (h.rows() != edges.num_nodes)
    throw NumericError("hrgcn_layer: embedding rows " + std::to_string(h.rows()) + " != " +
                       std::to_string(edges.num_nodes) + " entities");
  for (Index r : edges.rel)
    if (r >= p.coeff.rows())
      throw std::out_of_range("hrgcn_layer: relation " + std::to_string(r) + " has no transform");
  Var self = matmul(h, p.self);
  if (edges.size() == 0) return relu(self);

  Var inputs = add(gather_rows(h, edges.src), gather_rows(relations, edges.rel));
  std::vector<Var> projected;
  projected.reserve(p.bases.size());
  for (const Var& basis : p.bases) projected.push_back(matmul(inputs, basis));
  Var messages = basis_mix(projected, gather_rows(p.coeff, edges.rel));
  Var aggregated = scatter_add_rows(mul_rows(messages, weights), edges.dst, edges.num_nodes);
  return relu(add(self, aggregated));
}

Var encode(const HistoryGraph& hg, const Var& h_init, const Var& relations,
           const ParameterStore& params, const EncoderConfig& cfg, bool training,
           std::mt19937_64& rng) {
  const EdgeIndex edges = index_history(hg, h_init.rows());
  const Var weights = message_weights(edges, params, cfg);
  Var h = h_init;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    if (l > 0) h = dropout(h, cfg.dropout, training, rng);
    h = hrgcn_layer(edges, h, relations, layer_params(params, l, cfg.bases), weights);
  }
  return h;
}

GateOutput gated_merge(const Var& encoded, const Var& initial, const ParameterStore& params,
                       const GateConfig& cfg) {
  if (encoded.shape() != initial.shape())
    throw NumericError("gated_merge: shapes differ " + shape_string(encoded.shape()) + " vs " +
                       shape_string(initial.shape()));
  Var gamma;
  if (cfg.forced) {
    gamma = Var::constant(Tensor::scalar(*cfg.forced));
  } else {
    Var graph = sigmoid(add_row(matmul(mean_rows(encoded), params.get("gate.graph.weight")),
                                params.get("gate.graph.bias")));
    const Var& w_gate = params.get("gate.weight");
    if (cfg.mode == GateMode::Scalar) {
      gamma = sigmoid(add_row(matmul(graph, w_gate), params.get("gate.bias")));
    } else {
      // (H_T[i] * h_g) W_gate == H_T[i] (h_g^T * W_gate)
      Var scaled = mul(reshape(graph, {graph.cols(), 1}), w_gate);
      gamma = sigmoid(add_row(matmul(encoded, scaled), params.get("gate.bias")));
    }
  }
  Var merged = add(mul_rows(encoded, gamma), mul_rows(initial, affine(gamma, -1.0, 1.0)));
  return {merged, gamma};
}

}  // namespace herln
