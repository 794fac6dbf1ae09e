#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "herln/graph_store.hpp"
#include "herln/ops.hpp"
#include "herln/parameters.hpp"

namespace herln {

enum class DecayMode {
  Hawkes,   // exp(-delta * dt) normalized over each node's history
  Uniform,  // plain RGCN: every historical message weighted equally
};

enum class GateMode {
  Scalar,     // one gate for the whole graph
  PerEntity,  // one gate per entity row
};

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t bases = 2;
  double dropout = 0.2;
  DecayMode decay = DecayMode::Hawkes;
  /// Use this decay rate instead of the learned softplus(hrgcn.decay).
  std::optional<double> fixed_decay;
  /// Multiply each message by 1/|F_o| on top of the normalized kernel.
  bool fan_in_normalizer = true;
};

struct GateConfig {
  GateMode mode = GateMode::Scalar;
  /// Test hook: bypass the learned gate with a constant.
  std::optional<double> forced;
};

std::string layer_param(std::size_t layer, const std::string& what);
inline constexpr const char* kDecayParam = "hrgcn.decay";

void register_encoder_params(ParameterStore& store, std::size_t num_relations, std::size_t dim,
                             const EncoderConfig& cfg, std::mt19937_64& rng);
void register_gate_params(ParameterStore& store, std::size_t dim, std::mt19937_64& rng);

/// Plain-number kernel: kappa(dt) / sum kappa over one node's in-edges.
std::vector<double> decay_weights(std::span<const double> dts, double delta);

/// Edge arrays of a history graph in the layout the layers consume.
struct EdgeIndex {
  std::vector<Index> src;
  std::vector<Index> rel;
  std::vector<Index> dst;
  std::vector<double> dt;         // reference time - edge time
  std::vector<double> fan_in;     // 1 / |F_dst| per edge
  std::size_t num_nodes = 0;

  std::size_t size() const noexcept { return src.size(); }
};
EdgeIndex index_history(const HistoryGraph& hg, std::size_t num_entities);

/// Per-edge message weights kappa~(t - t') (times 1/|F_o| when enabled).
/// Returns an invalid Var for an empty history.
Var message_weights(const EdgeIndex& edges, const ParameterStore& params, const EncoderConfig& cfg);

/// Weights of one HRGCN layer.
struct LayerParams {
  Var self;                // W_1 [d, d]
  std::vector<Var> bases;  // V_b [d, d]
  Var coeff;               // [R, B]; W_r = sum_b coeff[r, b] V_b
};
LayerParams layer_params(const ParameterStore& params, std::size_t layer, std::size_t bases);

/// h_o' = relu(h_o W_1 + sum_{in-edges} w_e (h_s + h_r) W_r). `weights` may be
/// invalid when there are no edges (self-update only).
Var hrgcn_layer(const EdgeIndex& edges, const Var& h, const Var& relations, const LayerParams& p,
                const Var& weights);

/// Stacked HRGCN layers with dropout between them during training.
Var encode(const HistoryGraph& hg, const Var& h_init, const Var& relations,
           const ParameterStore& params, const EncoderConfig& cfg, bool training,
           std::mt19937_64& rng);

struct GateOutput {
  Var merged;  // H^t
  Var gamma;   // [1] or [N, 1]
};

/// h_g = sigmoid(mean(H_T) W_graph + b_graph); gamma = sigmoid(h_g W_gate + b_gate)
/// (per entity: sigmoid((H_T[i] * h_g) W_gate + b_gate)); H = gamma H_T + (1 - gamma) H_C.
GateOutput gated_merge(const Var& encoded, const Var& initial, const ParameterStore& params,
                       const GateConfig& cfg);

}  // namespace herln
