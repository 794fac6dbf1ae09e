#include "herln/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace herln {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoConvTransE: return "noConvTransE";
    case Ablation::NoFiLM: return "noFiLM";
    case Ablation::NoHRGCN: return "noHRGCN";
    case Ablation::NoCommunity: return "noCommunity";
  }
  return "none";
}

Ablation parse_ablation(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Ablation a : {Ablation::None, Ablation::NoConvTransE, Ablation::NoFiLM, Ablation::NoHRGCN,
                     Ablation::NoCommunity}) {
    std::string name = to_string(a);
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (name == lower) return a;
  }
  throw std::invalid_argument("unknown ablation '" + std::string(text) +
                              "' (expected none, noConvTransE, noFiLM, noHRGCN, noCommunity)");
}

EncoderConfig ModelConfig::encoder_config() const {
  EncoderConfig e;
  e.layers = layers;
  e.bases = bases;
  e.dropout = dropout;
  e.decay = ablation == Ablation::NoHRGCN ? DecayMode::Uniform : DecayMode::Hawkes;
  e.fixed_decay = fixed_decay;
  e.fan_in_normalizer = fan_in_normalizer;
  return e;
}

DecoderConfig ModelConfig::decoder_config() const {
  DecoderConfig d;
  d.channels = channels;
  d.dropout = dropout;
  d.mlp = ablation == Ablation::NoConvTransE;
  d.film = ablation != Ablation::NoFiLM && !d.mlp;
  d.modulate_projection = modulate_projection;
  return d;
}

InitEmbedConfig ModelConfig::init_config() const {
  InitEmbedConfig c;
  c.intra_community_normalizer = intra_community_normalizer;
  return c;
}

HerlnModel::HerlnModel(const ModelConfig& cfg, const TemporalGraph& train_graph,
                       CommunityAssignment communities, std::uint64_t seed)
    : cfg_(cfg),
      encoder_(cfg.encoder_config()),
      decoder_(cfg.decoder_config()),
      init_(cfg.init_config()),
      num_entities_(train_graph.num_entities()),
      num_relations_(train_graph.num_relations()),
      communities_(std::move(communities)),
      rng_(seed) {
  if (!train_graph.inverse_augmented())
    throw std::invalid_argument("HerlnModel expects an inverse-augmented training graph");
  if (cfg.dim == 0) throw std::invalid_argument("embedding dimension must be positive");
  gate_.mode = cfg.gate;

  register_embedding_params(params_, num_entities_, num_relations_, cfg.dim, rng_);
  register_encoder_params(params_, num_relations_, cfg.dim, encoder_, rng_);
  register_gate_params(params_, cfg.dim, rng_);
  register_decoder_params(params_, kEntityDecoder, cfg.dim, decoder_, rng_);
  if (cfg.relation_task) register_decoder_params(params_, kRelationDecoder, cfg.dim, decoder_, rng_);

  if (cfg.ablation != Ablation::NoCommunity)
    messages_ = community_message_matrix(train_graph, communities_, init_.intra_community_normalizer);
}

ModelState HerlnModel::forward(const HistoryGraph& history, bool training) {
  ModelState s;
  const Var& h_init = params_.get(kEntityInit);
  if (messages_) {
    s.initial = init_embeddings(messages_, h_init, params_.get(kInitMessage), params_.get(kInitSelf),
                                init_.activation);
  } else {
    s.initial = h_init;
  }
  s.relations = params_.get(kRelationEmbedding);
  s.encoded = encode(history, s.initial, s.relations, params_, encoder_, training, rng_);
  GateOutput g = gated_merge(s.encoded, s.initial, params_, gate_);
  s.merged = g.merged;
  s.gamma = g.gamma;
  return s;
}

Var HerlnModel::entity_logits(const ModelState& state, std::span<const Quadruple> queries, bool training) {
  std::vector<Index> subj, rel;
  subj.reserve(queries.size());
  rel.reserve(queries.size());
  for (const auto& q : queries) {
    subj.push_back(q.subject);
    rel.push_back(q.relation);
  }
  return decode(gather_rows(state.merged, subj), gather_rows(state.relations, rel), state.merged,
                params_, kEntityDecoder, decoder_, training, rng_);
}

Var HerlnModel::relation_logits(const ModelState& state, std::span<const Quadruple> queries, bool training) {
  if (!cfg_.relation_task) throw std::logic_error("relation decoder is disabled in this model");
  std::vector<Index> subj, obj;
  subj.reserve(queries.size());
  obj.reserve(queries.size());
  for (const auto& q : queries) {
    subj.push_back(q.subject);
    obj.push_back(q.object);
  }
  return decode(gather_rows(state.merged, subj), gather_rows(state.merged, obj), state.relations,
                params_, kRelationDecoder, decoder_, training, rng_);
}

}  // namespace herln
