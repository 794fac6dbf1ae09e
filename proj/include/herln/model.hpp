#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "herln/community.hpp"
#include "herln/decoder.hpp"
#include "herln/encoder.hpp"
#include "herln/graph_store.hpp"
#include "herln/init_embed.hpp"
#include "herln/parameters.hpp"

namespace herln {

enum class Ablation {
  None,
  NoConvTransE,  // decoder replaced by one fully connected layer
  NoFiLM,        // un-modulated ConvTransE
  NoHRGCN,       // uniform message weights, no temporal decay
  NoCommunity,   // H_C := H_init
};

std::string to_string(Ablation a);
/// Accepts "none", "noConvTransE", "noFiLM", "noHRGCN", "noCommunity"
/// (case-insensitive). Throws std::invalid_argument otherwise.
Ablation parse_ablation(std::string_view text);

struct ModelConfig {
  std::size_t dim = 200;
  std::size_t layers = 2;
  std::size_t bases = 2;
  std::size_t channels = 50;
  double dropout = 0.2;
  Ablation ablation = Ablation::None;
  GateMode gate = GateMode::Scalar;
  bool fan_in_normalizer = true;
  bool intra_community_normalizer = false;
  bool modulate_projection = false;
  std::optional<double> fixed_decay;
  /// Train and evaluate the relation decoder as well.
  bool relation_task = true;

  EncoderConfig encoder_config() const;
  DecoderConfig decoder_config() const;
  InitEmbedConfig init_config() const;
};

inline constexpr const char* kEntityDecoder = "decoder.entity";
inline constexpr const char* kRelationDecoder = "decoder.relation";

/// Embedding matrices of one forward pass at a reference time.
struct ModelState {
  Var initial;    // H_C
  Var encoded;    // H_T
  Var merged;     // H
  Var gamma;      // gate value(s)
  Var relations;  // R, all augmented relations
};

/// Full pipeline: community-aware initialization, temporal encoder, gate,
/// and conditional decoders for entity and relation queries.
class HerlnModel {
 public:
  /// `train_graph` must be inverse-augmented; its time-collapsed structure
  /// defines the neighbourhoods of the initialization layer.
  HerlnModel(const ModelConfig& cfg, const TemporalGraph& train_graph, CommunityAssignment communities,
             std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }
  std::mt19937_64& rng() noexcept { return rng_; }
  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations() const noexcept { return num_relations_; }
  const CommunityAssignment& communities() const noexcept { return communities_; }

  /// Test hook: pin the gate to a constant (nullopt restores the learned gate).
  void force_gate(std::optional<double> gamma) { gate_.forced = gamma; }

  ModelState forward(const HistoryGraph& history, bool training);

  /// [B, numEntities] intensities for queries (s, r, ?).
  Var entity_logits(const ModelState& state, std::span<const Quadruple> queries, bool training);
  /// [B, numRelations] intensities for queries (s, ?, o).
  Var relation_logits(const ModelState& state, std::span<const Quadruple> queries, bool training);

 private:
  ModelConfig cfg_;
  EncoderConfig encoder_;
  DecoderConfig decoder_;
  GateConfig gate_;
  InitEmbedConfig init_;
  std::size_t num_entities_;
  std::size_t num_relations_;
  CommunityAssignment communities_;
  std::shared_ptr<const SparseRows> messages_;
  ParameterStore params_;
  std::mt19937_64 rng_;
};

}  // namespace herln
