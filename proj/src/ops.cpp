#include "herln/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace herln {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void require(bool ok, const std::string& what) {
  if (!ok) throw NumericError(what);
}

ConstMap view(const Tensor& t) {
  return ConstMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
MutMap view(Tensor& t) {
  return MutMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

std::string dims(const Var& v) { return shape_string(v.shape()); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dimensions differ " + dims(a) + " x " + dims(b));
  Tensor out({a.rows(), b.cols()});
  view(out).noalias() = view(a.value()) * view(b.value());
  return make_node("matmul", std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) view(pa.grad).noalias() += view(n.grad) * view(pb.value).transpose();
    if (pb.requires_grad) view(pb.grad).noalias() += view(pa.value).transpose() * view(n.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(),
          "matmul_nt: inner dimensions differ " + dims(a) + " x " + dims(b) + "^T");
  Tensor out({a.rows(), b.rows()});
  view(out).noalias() = view(a.value()) * view(b.value()).transpose();
  return make_node("matmul_nt", std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) view(pa.grad).noalias() += view(n.grad) * view(pb.value);
    if (pb.requires_grad) view(pb.grad).noalias() += view(n.grad).transpose() * view(pa.value);
  });
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, BwdA da, BwdB db) {
  require(a.size() == b.size(), std::string(op) + ": size mismatch " + dims(a) + " vs " + dims(b));
  Tensor out(a.shape());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_node(op, std::move(out), {a, b}, [da, db](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += da(n.grad[i], pa.value[i], pb.value[i]);
      if (pb.requires_grad) pb.grad[i] += db(n.grad[i], pa.value[i], pb.value[i]);
    }
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var add_row(const Var& a, const Var& bias) {
  const std::size_t m = a.rows(), k = a.cols();
  require(bias.size() == k, "add_row: bias " + dims(bias) + " vs rows of " + dims(a));
  Tensor out(a.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = a.value()(i, j) + bias.value()[j];
  return make_node("add_row", std::move(out), {a, bias}, [m, k](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) pb.grad[j] += n.grad(i, j);
  });
}

Var mul_rows(const Var& x, const Var& g) {
  const std::size_t m = x.rows(), k = x.cols();
  require(g.size() == 1 || g.size() == m,
          "mul_rows: factor " + dims(g) + " does not broadcast over " + dims(x));
  const bool shared = g.size() == 1 && m != 1;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double f = g.value()[shared ? 0 : i];
    for (std::size_t j = 0; j < k; ++j) out(i, j) = f * x.value()(i, j);
  }
  return make_node("mul_rows", std::move(out), {x, g}, [m, k, shared](Node& n) {
    Node& px = parent(n, 0);
    Node& pg = parent(n, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t gi = shared ? 0 : i;
      const double f = pg.value[gi];
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (px.requires_grad) px.grad(i, j) += f * n.grad(i, j);
        acc += px.value(i, j) * n.grad(i, j);
      }
      if (pg.requires_grad) pg.grad[gi] += acc;
    }
  });
}

Var mul_const(const Var& x, std::span<const double> c) {
  require(c.size() == x.size(), "mul_const: size mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * c[i];
  std::vector<double> coeff(c.begin(), c.end());
  return make_node("mul_const", std::move(out), {x}, [coeff = std::move(coeff)](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < coeff.size(); ++i) px.grad[i] += coeff[i] * n.grad[i];
  });
}

Var affine(const Var& x, double s, double c) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * x.value()[i] + c;
  return make_node("affine", std::move(out), {x}, [s](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += s * n.grad[i];
  });
}

Var activate(const Var& x, Activation kind) {
  if (kind == Activation::Identity) return x;
  Tensor out(x.shape());
  const auto& xv = x.value();
  const char* name = "relu";
  switch (kind) {
    case Activation::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      break;
    case Activation::Sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      break;
    case Activation::Tanh:
      name = "tanh";
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
      break;
    case Activation::Identity:
      break;
  }
  return make_node(name, std::move(out), {x}, [kind](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double y = n.value[i];
      double d = 0.0;
      switch (kind) {
        case Activation::Relu: d = px.value[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::Sigmoid: d = y * (1.0 - y); break;
        case Activation::Tanh: d = 1.0 - y * y; break;
        case Activation::Identity: d = 1.0; break;
      }
      px.grad[i] += d * n.grad[i];
    }
  });
}

Var softplus(const Var& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.value()[i];
    out[i] = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return make_node("softplus", std::move(out), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      px.grad[i] += n.grad[i] / (1.0 + std::exp(-px.value[i]));
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_node("reshape", std::move(out), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) px.grad[i] += n.grad[i];
  });
}

Var gather_rows(const Var& x, std::span<const Index> idx) {
  const std::size_t k = x.cols();
  for (Index i : idx)
    require(i < x.rows(), "gather_rows: index " + std::to_string(i) + " out of " + dims(x));
  Tensor out({idx.size(), k});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = x.value().row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<Index> rows(idx.begin(), idx.end());
  return make_node("gather_rows", std::move(out), {x}, [rows = std::move(rows), k](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < k; ++j) px.grad(rows[r], j) += n.grad(r, j);
  });
}

Var scatter_add_rows(const Var& x, std::span<const Index> dst, std::size_t num_rows) {
  require(dst.size() == x.rows(), "scatter_add_rows: one destination per row required");
  const std::size_t k = x.cols();
  Tensor out({num_rows, k});
  for (std::size_t r = 0; r < dst.size(); ++r) {
    require(dst[r] < num_rows, "scatter_add_rows: destination out of range");
    for (std::size_t j = 0; j < k; ++j) out(dst[r], j) += x.value()(r, j);
  }
  std::vector<Index> rows(dst.begin(), dst.end());
  return make_node("scatter_add_rows", std::move(out), {x}, [rows = std::move(rows), k](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t j = 0; j < k; ++j) px.grad(r, j) += n.grad(rows[r], j);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols: row counts differ");
  const std::size_t m = a.rows(), ka = a.cols(), kb = b.cols();
  Tensor out({m, ka + kb});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ka; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < kb; ++j) out(i, ka + j) = b.value()(i, j);
  }
  return make_node("concat_cols", std::move(out), {a, b}, [m, ka, kb](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    for (std::size_t i = 0; i < m; ++i) {
      if (pa.requires_grad)
        for (std::size_t j = 0; j < ka; ++j) pa.grad(i, j) += n.grad(i, j);
      if (pb.requires_grad)
        for (std::size_t j = 0; j < kb; ++j) pb.grad(i, j) += n.grad(i, ka + j);
    }
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= x.cols(), "slice_cols: range out of bounds");
  const std::size_t m = x.rows(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = x.value()(i, begin + j);
  return make_node("slice_cols", std::move(out), {x}, [m, w, begin](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) px.grad(i, begin + j) += n.grad(i, j);
  });
}

Var mean_rows(const Var& x) {
  const std::size_t m = x.rows(), k = x.cols();
  require(m > 0, "mean_rows: empty input");
  Tensor out({1, k});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += x.value()(i, j);
  for (std::size_t j = 0; j < k; ++j) out[j] /= static_cast<double>(m);
  return make_node("mean_rows", std::move(out), {x}, [m, k](Node& n) {
    Node& px = parent(n, 0);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) px.grad(i, j) += n.grad[j] * inv;
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return make_node("sum", Tensor::scalar(total), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += n.grad[0];
  });
}

Var spmm(std::shared_ptr<const SparseRows> sparse, const Var& x) {
  const SparseRows& a = *sparse;
  require(a.cols == x.rows(), "spmm: sparse columns differ from dense rows");
  const std::size_t k = x.cols();
  Tensor out({a.rows.size(), k});
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    auto dst = out.row(r);
    for (auto [c, w] : a.rows[r]) {
      auto src = x.value().row(c);
      for (std::size_t j = 0; j < k; ++j) dst[j] += w * src[j];
    }
  }
  return make_node("spmm", std::move(out), {x}, [sparse = std::move(sparse), k](Node& n) {
    const SparseRows& a = *sparse;
    Node& px = parent(n, 0);
    for (std::size_t r = 0; r < a.rows.size(); ++r) {
      auto g = n.grad.row(r);
      for (auto [c, w] : a.rows[r]) {
        auto dst = px.grad.row(c);
        for (std::size_t j = 0; j < k; ++j) dst[j] += w * g[j];
      }
    }
  });
}

Var basis_mix(const std::vector<Var>& ys, const Var& coef) {
  require(!ys.empty(), "basis_mix: no bases");
  const std::size_t e = ys.front().rows(), k = ys.front().cols(), nb = ys.size();
  require(coef.rows() == e && coef.cols() == nb, "basis_mix: coefficients " + dims(coef) +
                                                     " do not match " + std::to_string(nb) +
                                                     " bases of " + dims(ys.front()));
  for (const auto& y : ys) require(y.rows() == e && y.cols() == k, "basis_mix: basis shapes differ");
  Tensor out({e, k});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < e; ++i) {
      const double c = coef.value()(i, b);
      for (std::size_t j = 0; j < k; ++j) out(i, j) += c * ys[b].value()(i, j);
    }
  std::vector<Var> parents(ys);
  parents.push_back(coef);
  return make_node("basis_mix", std::move(out), std::move(parents), [e, k, nb](Node& n) {
    Node& pc = parent(n, nb);
    for (std::size_t b = 0; b < nb; ++b) {
      Node& py = parent(n, b);
      for (std::size_t i = 0; i < e; ++i) {
        const double c = pc.value(i, b);
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          if (py.requires_grad) py.grad(i, j) += c * n.grad(i, j);
          acc += py.value(i, j) * n.grad(i, j);
        }
        if (pc.requires_grad) pc.grad(i, b) += acc;
      }
    }
  });
}

Var normalized_decay(const Var& delta, std::span<const double> dt, std::span<const Index> group,
                     std::size_t num_groups) {
  require(delta.size() == 1, "normalized_decay: delta must be a scalar");
  require(dt.size() == group.size(), "normalized_decay: one group per edge required");
  require(!dt.empty(), "normalized_decay: empty edge list");
  const double d = delta.value()[0];
  std::vector<double> peak(num_groups, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < dt.size(); ++e) {
    require(group[e] < num_groups, "normalized_decay: group out of range");
    peak[group[e]] = std::max(peak[group[e]], -d * dt[e]);
  }
  Tensor out({dt.size()});
  std::vector<double> total(num_groups, 0.0);
  for (std::size_t e = 0; e < dt.size(); ++e) {
    out[e] = std::exp(-d * dt[e] - peak[group[e]]);
    total[group[e]] += out[e];
  }
  for (std::size_t e = 0; e < dt.size(); ++e) out[e] /= total[group[e]];

  std::vector<double> times(dt.begin(), dt.end());
  std::vector<Index> groups(group.begin(), group.end());
  return make_node("normalized_decay", std::move(out), {delta},
                   [times = std::move(times), groups = std::move(groups), num_groups](Node& n) {
                     // d w_e / d delta = w_e * (mean_dt(group) - dt_e), weighted by w.
                     std::vector<double> mean_dt(num_groups, 0.0);
                     for (std::size_t e = 0; e < times.size(); ++e)
                       mean_dt[groups[e]] += n.value[e] * times[e];
                     double acc = 0.0;
                     for (std::size_t e = 0; e < times.size(); ++e)
                       acc += n.grad[e] * n.value[e] * (mean_dt[groups[e]] - times[e]);
                     parent(n, 0).grad[0] += acc;
                   });
}

Var conv1d_transe(const Var& a, const Var& c, const Var& kernels, const Var& bias,
                  std::size_t channels) {
  const std::size_t batch = a.rows(), d = a.cols();
  require(d >= 1, "conv1d_transe: width must be at least 1");
  require(c.rows() == batch && c.cols() == d, "conv1d_transe: stacked rows differ " + dims(a) +
                                                  " vs " + dims(c));
  const std::size_t span = channels * 6;
  require(kernels.cols() == span && (kernels.rows() == 1 || kernels.rows() == batch),
          "conv1d_transe: kernels " + dims(kernels) + " for " + std::to_string(channels) +
              " channels");
  require(bias.cols() == channels && (bias.rows() == 1 || bias.rows() == batch),
          "conv1d_transe: bias " + dims(bias));
  const bool shared_k = kernels.rows() == 1;
  const bool shared_b = bias.rows() == 1;

  Tensor out({batch, channels * d});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* in[2] = {a.value().row(b).data(), c.value().row(b).data()};
    const double* k = kernels.value().row(shared_k ? 0 : b).data();
    const double* bs = bias.value().row(shared_b ? 0 : b).data();
    double* o = out.row(b).data();
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = bs[ch];
        for (std::size_t u = 0; u < 2; ++u)
          for (std::size_t v = 0; v < 3; ++v) {
            const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(j + v) - 1;
            if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(d)) continue;
            acc += k[ch * 6 + u * 3 + v] * in[u][pos];
          }
        o[ch * d + j] = acc;
      }
    }
  }
  return make_node(
      "conv1d_transe", std::move(out), {a, c, kernels, bias},
      [batch, d, channels, shared_k, shared_b](Node& n) {
        Node* in[2] = {&parent(n, 0), &parent(n, 1)};
        Node& pk = parent(n, 2);
        Node& pbias = parent(n, 3);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* g = n.grad.row(b).data();
          const std::size_t kr = shared_k ? 0 : b;
          const std::size_t br = shared_b ? 0 : b;
          for (std::size_t ch = 0; ch < channels; ++ch) {
            for (std::size_t j = 0; j < d; ++j) {
              const double gv = g[ch * d + j];
              if (pbias.requires_grad) pbias.grad(br, ch) += gv;
              for (std::size_t u = 0; u < 2; ++u)
                for (std::size_t v = 0; v < 3; ++v) {
                  const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(j + v) - 1;
                  if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(d)) continue;
                  const std::size_t ki = ch * 6 + u * 3 + v;
                  if (pk.requires_grad) pk.grad(kr, ki) += gv * in[u]->value(b, pos);
                  if (in[u]->requires_grad) in[u]->grad(b, pos) += gv * pk.value(kr, ki);
                }
            }
          }
        }
      });
}

Var film_modulate(const Var& theta, const Var& alpha, const Var& beta) {
  const std::size_t batch = alpha.rows(), p = theta.size();
  require(alpha.cols() == p && beta.rows() == batch && beta.cols() == p,
          "film_modulate: factors " + dims(alpha) + ", " + dims(beta) + " vs parameters " +
              dims(theta));
  Tensor out({batch, p});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < p; ++j)
      out(b, j) = (alpha.value()(b, j) + 1.0) * theta.value()[j] + beta.value()(b, j);
  return make_node("film_modulate", std::move(out), {theta, alpha, beta}, [batch, p](Node& n) {
    Node& pt = parent(n, 0);
    Node& pa = parent(n, 1);
    Node& pb = parent(n, 2);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < p; ++j) {
        const double g = n.grad(b, j);
        if (pt.requires_grad) pt.grad[j] += g * (pa.value(b, j) + 1.0);
        if (pa.requires_grad) pa.grad(b, j) += g * pt.value[j];
        if (pb.requires_grad) pb.grad(b, j) += g;
      }
  });
}

Var batched_vecmat(const Var& x, const Var& w, std::size_t n_out) {
  const std::size_t batch = x.rows(), k = x.cols();
  require(w.rows() == batch && w.cols() == k * n_out,
          "batched_vecmat: weights " + dims(w) + " vs input " + dims(x));
  Tensor out({batch, n_out});
  for (std::size_t b = 0; b < batch; ++b) {
    Eigen::Map<const Eigen::RowVectorXd> xv(x.value().row(b).data(), static_cast<Eigen::Index>(k));
    ConstMap wm(w.value().row(b).data(), static_cast<Eigen::Index>(k),
                static_cast<Eigen::Index>(n_out));
    Eigen::Map<Eigen::RowVectorXd>(out.row(b).data(), static_cast<Eigen::Index>(n_out)).noalias() =
        xv * wm;
  }
  return make_node("batched_vecmat", std::move(out), {x, w}, [batch, k, n_out](Node& n) {
    Node& px = parent(n, 0);
    Node& pw = parent(n, 1);
    for (std::size_t b = 0; b < batch; ++b) {
      Eigen::Map<const Eigen::RowVectorXd> g(n.grad.row(b).data(), static_cast<Eigen::Index>(n_out));
      ConstMap wm(pw.value.row(b).data(), static_cast<Eigen::Index>(k),
                  static_cast<Eigen::Index>(n_out));
      if (px.requires_grad)
        Eigen::Map<Eigen::RowVectorXd>(px.grad.row(b).data(), static_cast<Eigen::Index>(k)) +=
            g * wm.transpose();
      if (pw.requires_grad) {
        Eigen::Map<const Eigen::VectorXd> xv(px.value.row(b).data(), static_cast<Eigen::Index>(k));
        MutMap(pw.grad.row(b).data(), static_cast<Eigen::Index>(k),
               static_cast<Eigen::Index>(n_out)) += xv * g;
      }
    }
  });
}

Var dropout(const Var& x, double rate, bool training, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = keep(rng) ? scale : 0.0;
  return mul_const(x, mask);
}

Var dropout(const Var& x, double rate, bool training, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dropout(x, rate, training, rng);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double peak = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) total += (v = std::exp(v - peak));
  for (double& v : p) v /= total;
  return p;
}

Var softmax_cross_entropy(const Var& logits, std::span<const Index> targets) {
  const std::size_t batch = logits.rows(), k = logits.cols();
  require(targets.size() == batch, "softmax_cross_entropy: one target per row required");
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    require(targets[b] < k, "softmax_cross_entropy: target " + std::to_string(targets[b]) +
                                " out of range for " + std::to_string(k) + " classes");
    auto row = logits.value().row(b);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - peak);
    loss += peak + std::log(total) - row[targets[b]];
  }
  std::vector<Index> truth(targets.begin(), targets.end());
  return make_node("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                   [truth = std::move(truth), batch](Node& n) {
                     Node& pl = parent(n, 0);
                     const double g = n.grad[0];
                     for (std::size_t b = 0; b < batch; ++b) {
                       auto p = softmax(pl.value.row(b));
                       auto dst = pl.grad.row(b);
                       for (std::size_t j = 0; j < p.size(); ++j) dst[j] += g * p[j];
                       dst[truth[b]] -= g;
                     }
                   });
}

}  // namespace herln
