#include "herln/decoder.hpp"

namespace herln {

std::size_t modulated_width(std::size_t dim, const DecoderConfig& cfg) {
  std::size_t width = cfg.channels * 6 + cfg.channels;
  if (cfg.modulate_projection) width += cfg.channels * dim * dim + dim;
  return width;
}

void register_decoder_params(ParameterStore& store, const std::string& prefix, std::size_t dim,
                             const DecoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.mlp) {
    store.add(prefix + ".mlp.weight", xavier_uniform({2 * dim, dim}, 2 * dim, dim, rng));
    store.add(prefix + ".mlp.bias", Tensor({dim}));
    return;
  }
  const std::size_t c = cfg.channels;
  store.add(prefix + ".kernels", xavier_uniform({c, 2, 3}, 6, c, rng));
  store.add(prefix + ".kernel_bias", Tensor({c}));
  store.add(prefix + ".projection", xavier_uniform({c * dim, dim}, c * dim, dim, rng));
  store.add(prefix + ".projection_bias", Tensor({dim}));
  if (cfg.film) {
    const std::size_t p = modulated_width(dim, cfg);
    store.add(prefix + ".film.alpha.weight", Tensor({2 * dim, p}));
    store.add(prefix + ".film.alpha.bias", Tensor({p}));
    store.add(prefix + ".film.beta.weight", Tensor({2 * dim, p}));
    store.add(prefix + ".film.beta.bias", Tensor({p}));
  }
}

DecoderTheta base_theta(const ParameterStore& params, const std::string& prefix, std::size_t channels) {
  DecoderTheta t;
  t.kernels = reshape(params.get(prefix + ".kernels"), {1, channels * 6});
  t.kernel_bias = reshape(params.get(prefix + ".kernel_bias"), {1, channels});
  t.projection = params.get(prefix + ".projection");
  const Var& pb = params.get(prefix + ".projection_bias");
  t.projection_bias = reshape(pb, {1, pb.size()});
  return t;
}

FilmFactors film_factors(const Var& context, const ParameterStore& params, const std::string& prefix) {
  const std::string base = prefix + ".film.";
  Var alpha = tanh(add_row(matmul(context, params.get(base + "alpha.weight")), params.get(base + "alpha.bias")));
  Var beta = tanh(add_row(matmul(context, params.get(base + "beta.weight")), params.get(base + "beta.bias")));
  return {alpha, beta};
}

DecoderTheta adjust_params(const DecoderTheta& theta, const FilmFactors& factors, bool modulate_projection) {
  const std::size_t k = theta.kernels.cols(), c = theta.kernel_bias.cols();
  Var flat = concat_cols(theta.kernels, theta.kernel_bias);
  if (modulate_projection) {
    flat = concat_cols(flat, reshape(theta.projection, {1, theta.projection.size()}));
    flat = concat_cols(flat, theta.projection_bias);
  }
  Var modulated = film_modulate(flat, factors.alpha, factors.beta);
  DecoderTheta q;
  q.kernels = slice_cols(modulated, 0, k);
  q.kernel_bias = slice_cols(modulated, k, k + c);
  if (modulate_projection) {
    const std::size_t proj = theta.projection.size();
    q.projection = slice_cols(modulated, k + c, k + c + proj);
    q.projection_bias = slice_cols(modulated, k + c + proj, modulated.cols());
    q.per_query_projection = true;
  } else {
    q.projection = theta.projection;
    q.projection_bias = theta.projection_bias;
  }
  return q;
}

Var conv_transe_scores(const Var& first, const Var& second, const DecoderTheta& theta,
                       const Var& candidates, std::size_t channels, double dropout_rate,
                       bool training, std::mt19937_64& rng) {
  Var features = conv1d_transe(first, second, theta.kernels, theta.kernel_bias, channels);
  Var hidden;
  if (theta.per_query_projection) {
    const std::size_t out = theta.projection_bias.cols();
    hidden = add(batched_vecmat(features, theta.projection, out), theta.projection_bias);
  } else {
    hidden = add_row(matmul(features, theta.projection), theta.projection_bias);
  }
  hidden = dropout(relu(hidden), dropout_rate, training, rng);
  return matmul_nt(hidden, candidates);
}

Var mlp_scores(const Var& first, const Var& second, const ParameterStore& params,
               const std::string& prefix, const Var& candidates, double dropout_rate,
               bool training, std::mt19937_64& rng) {
  Var hidden = relu(add_row(matmul(concat_cols(first, second), params.get(prefix + ".mlp.weight")),
                            params.get(prefix + ".mlp.bias")));
  hidden = dropout(hidden, dropout_rate, training, rng);
  return matmul_nt(hidden, candidates);
}

Var decode(const Var& first, const Var& second, const Var& candidates, const ParameterStore& params,
           const std::string& prefix, const DecoderConfig& cfg, bool training, std::mt19937_64& rng) {
  if (cfg.mlp) return mlp_scores(first, second, params, prefix, candidates, cfg.dropout, training, rng);
  DecoderTheta theta = base_theta(params, prefix, cfg.channels);
  if (cfg.film) {
    FilmFactors f = film_factors(concat_cols(first, second), params, prefix);
    theta = adjust_params(theta, f, cfg.modulate_projection);
  }
  return conv_transe_scores(first, second, theta, candidates, cfg.channels, cfg.dropout, training, rng);
}

}  // namespace herln
