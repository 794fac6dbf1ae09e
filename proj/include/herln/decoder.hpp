#pragma once

#include <random>
#include <string>

#include "herln/ops.hpp"
#include "herln/parameters.hpp"

namespace herln {

struct DecoderConfig {
  std::size_t channels = 50;
  double dropout = 0.2;
  bool film = true;
  /// Replace the convolutional decoder by one fully connected layer.
  bool mlp = false;
  /// Let FiLM modulate the projection as well as the convolution.
  bool modulate_projection = false;
};

/// Width of the FiLM-modulated parameter slice:
/// kernels (channels*2*3) + kernel bias (channels) [+ projection + its bias].
std::size_t modulated_width(std::size_t dim, const DecoderConfig& cfg);

/// Registers `<prefix>.kernels` [C,2,3], `.kernel_bias` [C], `.projection`
/// [C*d, d], `.projection_bias` [d], the hyper-network `<prefix>.film.*`, and
/// `<prefix>.mlp.*` when cfg.mlp. Hyper-network weights start at zero so the
/// initial modulation is the identity.
void register_decoder_params(ParameterStore& store, const std::string& prefix, std::size_t dim,
                             const DecoderConfig& cfg, std::mt19937_64& rng);

/// ConvTransE parameters, either shared (one row) or per query (B rows).
struct DecoderTheta {
  Var kernels;          // [1 or B, C*6]
  Var kernel_bias;      // [1 or B, C]
  Var projection;       // [C*d, d] shared, or [B, C*d*d] per query
  Var projection_bias;  // [1, d] shared, or [B, d] per query
  bool per_query_projection = false;
};

DecoderTheta base_theta(const ParameterStore& params, const std::string& prefix, std::size_t channels);

struct FilmFactors {
  Var alpha;  // [B, P]
  Var beta;   // [B, P]
};

/// alpha = tanh(ctx W_alpha + b_alpha), beta = tanh(ctx W_beta + b_beta) for
/// ctx = [B, 2d] query context rows.
FilmFactors film_factors(const Var& context, const ParameterStore& params, const std::string& prefix);

/// theta^q = (alpha + 1) * theta + beta on the modulated slice; the rest of
/// theta is shared unchanged.
DecoderTheta adjust_params(const DecoderTheta& theta, const FilmFactors& factors,
                           bool modulate_projection);

/// Stacks (first[b], second[b]), convolves with theta, projects, applies ReLU
/// and dropout, and scores every candidate row by inner product: [B, K].
Var conv_transe_scores(const Var& first, const Var& second, const DecoderTheta& theta,
                       const Var& candidates, std::size_t channels, double dropout_rate,
                       bool training, std::mt19937_64& rng);

/// relu([first | second] W + b) dotted with every candidate row.
Var mlp_scores(const Var& first, const Var& second, const ParameterStore& params,
               const std::string& prefix, const Var& candidates, double dropout_rate,
               bool training, std::mt19937_64& rng);

/// Full decoder: FiLM-conditioned ConvTransE, plain ConvTransE, or the MLP
/// variant depending on cfg. `first`/`second` are [B, d] query rows.
Var decode(const Var& first, const Var& second, const Var& candidates, const ParameterStore& params,
           const std::string& prefix, const DecoderConfig& cfg, bool training, std::mt19937_64& rng);

}  // namespace herln
