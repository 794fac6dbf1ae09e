#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "herln/ops.hpp"
#include "herln/parameters.hpp"

using namespace herln;
using fixtures::random_tensor;

namespace {

Var leaf(Tensor t) { return Var::leaf(std::move(t)); }

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor out({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

// out[c][j] = bias[c] + sum_u sum_v kernels[c][u][v+1] * stacked[u][j+v]
std::vector<double> naive_conv(const std::vector<double>& row0, const std::vector<double>& row1,
                               const std::vector<double>& kernels, const std::vector<double>& bias,
                               std::size_t channels) {
  const std::size_t d = row0.size();
  std::vector<double> out(channels * d, 0.0);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < d; ++j) {
      double s = bias[c];
      for (int u = 0; u < 2; ++u)
        for (int v = -1; v <= 1; ++v) {
          const long pos = static_cast<long>(j) + v;
          if (pos < 0 || pos >= static_cast<long>(d)) continue;
          const double x = u == 0 ? row0[pos] : row1[pos];
          s += kernels[c * 6 + u * 3 + (v + 1)] * x;
        }
      out[c * d + j] = s;
    }
  return out;
}

// Gradient check of `op` through a random linear read-out of its output.
void check_op_gradient(const std::vector<Tensor>& inputs, const std::function<Var(const std::vector<Var>&)>& op,
                       std::uint64_t seed = 11) {
  ParameterStore store;
  std::vector<Var> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(store.add("x" + std::to_string(i), inputs[i]));
  std::mt19937_64 rng(seed);
  const Tensor probe_shape = op(vars).value();
  const Var probe = Var::constant(random_tensor(probe_shape.shape(), rng));
  auto loss = [&] { return sum(mul(op(vars), probe)); };
  const auto res = fixtures::grad_check(store, loss, 1000, 1e-3, seed);
  INFO(res.worst);
  CHECK(res.checked > 0);
  CHECK(res.max_rel_err < 1e-3);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), NumericError);
  Tensor bad({2}, std::vector<double>{1.0, std::nan("")});
  CHECK_THROWS_AS(bad.check_finite("probe"), NumericError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    std::mt19937_64 rng(1);
    Tensor a = random_tensor({2, 4}, rng);
    Var out = matmul(Var::constant(Tensor({2, 2}, std::vector<double>{1, 0, 0, 1})), Var::constant(a));
    CHECK(out.value() == a);
  }
  SUBCASE("hand example") {
    Var out = matmul(Var::constant(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4})),
                     Var::constant(Tensor({2, 1}, std::vector<double>{0, 1})));
    CHECK(out.value() == Tensor({2, 1}, std::vector<double>{2, 4}));
  }
  SUBCASE("naive oracle") {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
    Tensor ref = naive_matmul(a, b);
    Tensor got = matmul(Var::constant(a), Var::constant(b)).value();
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    Tensor bt({3, 7});
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 3; ++j) bt(j, i) = b(i, j);
    Tensor got_nt = matmul_nt(Var::constant(a), Var::constant(bt)).value();
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(got_nt[i] - ref[i]) < 1e-6);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(matmul(Var::constant(Tensor({2, 3})), Var::constant(Tensor({2, 3}))), NumericError);
  }
}

TEST_CASE("conv1d_transe") {
  const std::size_t d = 4;
  SUBCASE("zero kernels give zero output") {
    Var a = Var::constant(Tensor({1, d}, std::vector<double>{1, 2, 3, 4}));
    Var out = conv1d_transe(a, a, Var::constant(Tensor({1, 6 * 3})), Var::constant(Tensor({1, 3})), 3);
    for (double v : out.value().values()) CHECK(v == 0.0);
  }
  SUBCASE("delta kernel copies the first row") {
    Tensor k({1, 6});
    k[0 * 3 + 1] = 1.0;  // row u=0, offset v=0
    Var a = Var::constant(Tensor({1, d}, std::vector<double>{1, 2, 3, 4}));
    Var c = Var::constant(Tensor({1, d}, std::vector<double>{9, 9, 9, 9}));
    Var out = conv1d_transe(a, c, Var::constant(k), Var::constant(Tensor({1, 1})), 1);
    CHECK(out.value() == Tensor({1, d}, std::vector<double>{1, 2, 3, 4}));
  }
  SUBCASE("direct summation oracle, shared and per-row kernels") {
    std::mt19937_64 rng(3);
    const std::size_t b = 3, ch = 5, width = 7;
    Tensor a = random_tensor({b, width}, rng), c = random_tensor({b, width}, rng);
    Tensor k1 = random_tensor({1, ch * 6}, rng), b1 = random_tensor({1, ch}, rng);
    Tensor kb = random_tensor({b, ch * 6}, rng), bb = random_tensor({b, ch}, rng);
    Tensor shared = conv1d_transe(Var::constant(a), Var::constant(c), Var::constant(k1), Var::constant(b1), ch).value();
    Tensor per = conv1d_transe(Var::constant(a), Var::constant(c), Var::constant(kb), Var::constant(bb), ch).value();
    for (std::size_t r = 0; r < b; ++r) {
      std::vector<double> r0(a.row(r).begin(), a.row(r).end()), r1(c.row(r).begin(), c.row(r).end());
      auto ref = naive_conv(r0, r1, {k1.values().begin(), k1.values().end()}, {b1.values().begin(), b1.values().end()}, ch);
      auto ref_b = naive_conv(r0, r1, {kb.row(r).begin(), kb.row(r).end()}, {bb.row(r).begin(), bb.row(r).end()}, ch);
      for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(std::abs(shared(r, i) - ref[i]) < 1e-6);
        CHECK(std::abs(per(r, i) - ref_b[i]) < 1e-6);
      }
    }
  }
}

TEST_CASE("activations") {
  Var z = Var::constant(Tensor({3}, std::vector<double>{0.0, -2.0, 2.0}));
  CHECK(sigmoid(z).value()[0] == 0.5);
  CHECK(tanh(z).value()[0] == 0.0);
  CHECK(relu(z).value()[1] == 0.0);
  CHECK(relu(z).value()[2] == 2.0);
  CHECK(softplus(z).value()[0] == doctest::Approx(std::log(2.0)));

  std::mt19937_64 rng(4);
  for (Activation kind : {Activation::Sigmoid, Activation::Tanh, Activation::Relu}) {
    ParameterStore store;
    Var x = store.add("x", random_tensor({20}, rng));
    // Central differences relative error 1e-4 for the smooth ones.
    auto res = fixtures::grad_check(store, [&] { return sum(activate(x, kind)); }, 20, 1e-3, 5);
    INFO(res.worst);
    CHECK(res.max_rel_err < (kind == Activation::Relu ? 1e-3 : 1e-4));
  }
}

TEST_CASE("softmax and cross-entropy") {
  SUBCASE("uniform logits give ln K") {
    for (std::size_t k : {1u, 2u, 5u, 100u}) {
      Var logits = Var::constant(Tensor({1, k}, 0.3));
      const Index target = 0;
      CHECK(softmax_cross_entropy(logits, std::span(&target, 1)).value()[0] ==
            doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
  }
  SUBCASE("dominant logit gives near-zero loss") {
    Var logits = Var::constant(Tensor({1, 3}, std::vector<double>{60.0, -5.0, 1.0}));
    const Index target = 0;
    CHECK(softmax_cross_entropy(logits, std::span(&target, 1)).value()[0] < 1e-20);
  }
  SUBCASE("explicit exponent oracle and probability vector") {
    std::mt19937_64 rng(6);
    Tensor l = random_tensor({4, 9}, rng, -3, 3);
    std::vector<Index> targets = {0, 8, 3, 3};
    double ref = 0.0;
    for (std::size_t b = 0; b < 4; ++b) {
      double z = 0.0;
      for (std::size_t j = 0; j < 9; ++j) z += std::exp(l(b, j));
      ref += -std::log(std::exp(l(b, targets[b])) / z);
      const auto p = softmax(l.row(b));
      double total = 0.0;
      for (double v : p) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
    CHECK(std::abs(softmax_cross_entropy(Var::constant(l), targets).value()[0] - ref) < 1e-6);
  }
  SUBCASE("target out of range throws") {
    const Index target = 3;
    CHECK_THROWS(softmax_cross_entropy(Var::constant(Tensor({1, 3})), std::span(&target, 1)));
  }
}

TEST_CASE("backward") {
  std::mt19937_64 rng(7);
  SUBCASE("sum gives ones") {
    Var w = Var::leaf(random_tensor({3, 2}, rng));
    backward(sum(w));
    for (double g : w.grad().values()) CHECK(g == 1.0);
  }
  SUBCASE("half squared norm gives the weights") {
    Var w = Var::leaf(random_tensor({4}, rng));
    backward(affine(sum(mul(w, w)), 0.5, 0.0));
    for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == doctest::Approx(w.value()[i]));
  }
  SUBCASE("unreachable parameter keeps a zero gradient") {
    ParameterStore store;
    Var used = store.add("used", random_tensor({3}, rng));
    Var unused = store.add("unused", random_tensor({3}, rng));
    backward(sum(used));
    CHECK(unused.grad().shape() == unused.shape());
    for (double g : unused.grad().values()) CHECK(g == 0.0);
    CHECK(used.grad().shape() == used.shape());
  }
  SUBCASE("gradients accumulate across uses") {
    Var w = Var::leaf(Tensor({2}, std::vector<double>{1.0, 2.0}));
    backward(sum(add(w, w)));
    CHECK(w.grad()[0] == 2.0);
  }
  SUBCASE("second backward from the same root throws") {
    Var w = Var::leaf(random_tensor({2}, rng));
    Var root = sum(w);
    backward(root);
    CHECK_THROWS(backward(root));
  }
  SUBCASE("non-scalar root throws") {
    Var w = Var::leaf(random_tensor({2}, rng));
    CHECK_THROWS(backward(w));
  }
}

TEST_CASE("non-finite values abort with the producing operation") {
  Var x = Var::constant(Tensor({1}, 10.0));
  try {
    affine(x, 1e308, 0.0);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("affine") != std::string::npos);
  }
}

TEST_CASE("gradients of every operator match central differences") {
  std::mt19937_64 rng(8);
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  check_op_gradient({r({3, 4}), r({4, 2})}, [](auto& v) { return matmul(v[0], v[1]); });
  check_op_gradient({r({3, 4}), r({5, 4})}, [](auto& v) { return matmul_nt(v[0], v[1]); });
  check_op_gradient({r({2, 3}), r({2, 3})}, [](auto& v) { return add(v[0], v[1]); });
  check_op_gradient({r({2, 3}), r({2, 3})}, [](auto& v) { return sub(v[0], v[1]); });
  check_op_gradient({r({2, 3}), r({2, 3})}, [](auto& v) { return mul(v[0], v[1]); });
  check_op_gradient({r({3, 4}), r({4})}, [](auto& v) { return add_row(v[0], v[1]); });
  check_op_gradient({r({3, 4}), r({3, 1})}, [](auto& v) { return mul_rows(v[0], v[1]); });
  check_op_gradient({r({3, 4}), r({1})}, [](auto& v) { return mul_rows(v[0], v[1]); });
  const std::vector<double> consts = {0.5, -1.0, 2.0, 0.25, 3.0, -0.5};
  check_op_gradient({r({2, 3})}, [&](auto& v) { return mul_const(v[0], consts); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return affine(v[0], -1.5, 0.7); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return softplus(v[0]); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return sigmoid(v[0]); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return tanh(v[0]); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return relu(v[0]); });
  check_op_gradient({r({2, 3})}, [](auto& v) { return reshape(v[0], {3, 2}); });
  const std::vector<Index> idx = {2, 0, 2, 1};
  check_op_gradient({r({3, 2})}, [&](auto& v) { return gather_rows(v[0], idx); });
  check_op_gradient({r({4, 2})}, [&](auto& v) { return scatter_add_rows(v[0], idx, 5); });
  check_op_gradient({r({3, 2}), r({3, 4})}, [](auto& v) { return concat_cols(v[0], v[1]); });
  check_op_gradient({r({3, 5})}, [](auto& v) { return slice_cols(v[0], 1, 4); });
  check_op_gradient({r({4, 3})}, [](auto& v) { return mean_rows(v[0]); });
  check_op_gradient({r({4, 3})}, [](auto& v) { return sum(v[0]); });
  auto sparse = std::make_shared<SparseRows>();
  sparse->cols = 3;
  sparse->rows = {{{0, 0.5}, {2, 0.5}}, {}, {{1, 1.0}}, {{0, 0.25}}};
  check_op_gradient({r({3, 2})}, [&](auto& v) { return spmm(sparse, v[0]); });
  check_op_gradient({r({4, 3}), r({4, 3}), r({4, 2})},
                    [](auto& v) { return basis_mix({v[0], v[1]}, v[2]); });
  const std::vector<double> dt = {1, 2, 3, 1, 2};
  const std::vector<Index> group = {0, 0, 0, 2, 2};
  check_op_gradient({Tensor::scalar(0.7)}, [&](auto& v) { return normalized_decay(v[0], dt, group, 3); });
  const std::size_t ch = 3, d = 5;
  check_op_gradient({r({2, d}), r({2, d}), r({1, ch * 6}), r({1, ch})},
                    [&](auto& v) { return conv1d_transe(v[0], v[1], v[2], v[3], ch); });
  check_op_gradient({r({2, d}), r({2, d}), r({2, ch * 6}), r({2, ch})},
                    [&](auto& v) { return conv1d_transe(v[0], v[1], v[2], v[3], ch); });
  check_op_gradient({r({1, 6}), r({3, 6}), r({3, 6})}, [](auto& v) { return film_modulate(v[0], v[1], v[2]); });
  check_op_gradient({r({2, 3}), r({2, 12})}, [](auto& v) { return batched_vecmat(v[0], v[1], 4); });
  const std::vector<Index> targets = {1, 0, 3};
  check_op_gradient({r({3, 4})}, [&](auto& v) { return softmax_cross_entropy(v[0], targets); });
  check_op_gradient({r({4, 5})}, [](auto& v) { return dropout(v[0], 0.3, true, std::uint64_t{99}); });
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(9);
  Var x = Var::constant(random_tensor({10, 10}, rng));
  CHECK(dropout(x, 0.0, true, rng).value() == x.value());
  CHECK(dropout(x, 0.5, false, rng).value() == x.value());
  CHECK_THROWS(dropout(x, 1.0, true, rng));
  CHECK_THROWS(dropout(x, -0.1, true, rng));

  Var ones = Var::constant(Tensor({100000}, 1.0));
  for (double rate : {0.2, 0.5}) {
    Tensor out = dropout(ones, rate, true, rng).value();
    std::size_t zeros = 0;
    for (double v : out.values()) {
      if (v == 0.0) ++zeros;
      else CHECK(v == doctest::Approx(1.0 / (1.0 - rate)));
    }
    CHECK(std::abs(static_cast<double>(zeros) / 1e5 - rate) < 0.01);
  }
  CHECK(dropout(x, 0.3, true, std::uint64_t{5}).value() == dropout(x, 0.3, true, std::uint64_t{5}).value());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterStore store;
    Var w = store.add("w", Tensor({3}, std::vector<double>{1, -2, 3}));
    const Tensor before = w.value();
    store.adam_step({});
    CHECK(w.value() == before);
  }
  SUBCASE("one step on w^2 descends") {
    ParameterStore store;
    Var w = store.add("w", Tensor::scalar(1.0));
    backward(sum(mul(w, w)));
    AdamConfig cfg;
    cfg.lr = 0.1;
    store.adam_step(cfg);
    CHECK(w.value()[0] < 1.0);
    CHECK(w.grad()[0] == 0.0);  // zeroed after the step
  }
  SUBCASE("bias-corrected first step has magnitude lr") {
    ParameterStore store;
    Var w = store.add("w", Tensor::scalar(2.0));
    backward(affine(sum(w), 3.0, 0.0));
    AdamConfig cfg;
    cfg.lr = 0.01;
    store.adam_step(cfg);
    CHECK(w.value()[0] == doctest::Approx(2.0 - 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("convex quadratic converges") {
    ParameterStore store;
    Var w = store.add("w", Tensor({3}, std::vector<double>{3.0, -2.0, 1.0}));
    const std::vector<double> scale = {1.0, 2.0, 0.5};
    const Var target = Var::constant(Tensor({3}, std::vector<double>{0.5, 0.25, -1.0}));
    AdamConfig cfg;
    cfg.lr = 0.05;
    double grad_norm = 0.0;
    for (int step = 0; step < 200; ++step) {
      const Var diff = sub(w, target);
      backward(sum(mul_const(mul(diff, diff), scale)));
      grad_norm = 0.0;
      for (double g : w.grad().values()) grad_norm += g * g;
      grad_norm = std::sqrt(grad_norm);
      store.adam_step(cfg);
    }
    CHECK(grad_norm < 1e-3);
  }
  SUBCASE("non-positive learning rate throws") {
    ParameterStore store;
    AdamConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS(store.adam_step(cfg));
  }
}

TEST_CASE("fixed seed gives bit-identical forward and backward") {
  auto run = [] {
    std::mt19937_64 rng(21);
    ParameterStore store;
    Var w = store.add("w", xavier_uniform({6, 4}, 6, 4, rng));
    Var x = Var::constant(random_tensor({5, 6}, rng));
    Var h = dropout(relu(matmul(x, w)), 0.3, true, rng);
    const std::vector<Index> t = {0, 1, 2, 3, 0};
    Var loss = softmax_cross_entropy(h, t);
    backward(loss);
    return std::pair{loss.value(), w.grad()};
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("parameter store") {
  std::mt19937_64 rng(10);
  ParameterStore store;
  store.add("a", random_tensor({2, 3}, rng));
  CHECK_THROWS(store.add("a", Tensor({1})));
  CHECK_THROWS(store.get("missing"));
  CHECK(store.get("a").grad().shape() == store.get("a").shape());
  ParameterStore copy = store.snapshot();
  copy.get("a").mutable_value()[0] += 1.0;
  CHECK(copy.get("a").value()[0] != store.get("a").value()[0]);
  store.assign_values(copy);
  CHECK(copy.get("a").value() == store.get("a").value());
}

TEST_CASE("checkpoints") {
  std::mt19937_64 rng(12);
  ParameterStore store;
  store.add("embedding", random_tensor({4, 3}, rng));
  store.add("bias", random_tensor({3}, rng));
  store.add("scalar", Tensor::scalar(0.125));
  const auto bytes = serialize_checkpoint(store);

  SUBCASE("round trip") {
    ParameterStore back = deserialize_checkpoint(bytes);
    CHECK(back.names() == store.names());
    for (const auto& name : store.names()) {
      const Tensor& a = store.get(name).value();
      const Tensor& b = back.get(name).value();
      REQUIRE(a.shape() == b.shape());
      for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(b[i] == static_cast<double>(static_cast<float>(a[i])));
    }
    CHECK(serialize_checkpoint(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "herln_numerics_test.ckpt";
    save_checkpoint(path, store);
    ParameterStore from_disk = load_checkpoint(path);
    CHECK(serialize_checkpoint(from_disk) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    auto bad = bytes;
    bad[bad.size() - 12] ^= 0x40;
    try {
      deserialize_checkpoint(bad);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  SUBCASE("truncated, wrong magic, wrong version, trailing bytes") {
    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK_THROWS_AS(deserialize_checkpoint(truncated), CheckpointError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic), CheckpointError);
    auto version = bytes;
    version[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    try {
      deserialize_checkpoint(version);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(deserialize_checkpoint(trailing), CheckpointError);
  }
  SUBCASE("restore requires identical parameter names") {
    ParameterStore target;
    target.add("embedding", Tensor({4, 3}));
    target.add("bias", Tensor({3}));
    CHECK_THROWS_AS(restore_parameters(target, deserialize_checkpoint(bytes)), CheckpointError);
    target.add("scalar", Tensor::scalar(0.0));
    restore_parameters(target, deserialize_checkpoint(bytes));
    CHECK(target.get("scalar").value()[0] == 0.125);
    ParameterStore wrong_shape;
    wrong_shape.add("embedding", Tensor({3, 4}));
    wrong_shape.add("bias", Tensor({3}));
    wrong_shape.add("scalar", Tensor::scalar(0.0));
    CHECK_THROWS_AS(restore_parameters(wrong_shape, deserialize_checkpoint(bytes)), CheckpointError);
  }
}
