#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "dtx/checkpoint.hpp"
#include "dtx/nn.hpp"
#include "dtx/rand.hpp"

using namespace dtx;
using namespace dtx::nn;

namespace {

Array random_array(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  Array a(std::move(shape));
  for (auto& x : a.v) x = scale * (uniform01(rng) * 2.0 - 1.0);
  return a;
}

double fd_check(const std::function<Tensor()>& loss, const std::vector<Tensor>& leaves,
                std::mt19937_64& rng, int coords = 40) {
  return finite_difference_check(loss, leaves, coords, 1e-5, rng).max_rel_error;
}

}  // namespace

TEST_CASE("gemm kernels agree with naive loops") {
  std::mt19937_64 rng(1);
  Array a = random_array({3, 5}, rng), b = random_array({5, 4}, rng);
  Array c({3, 4});
  gemm_nn(a, b, &c, false);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 5; ++k) acc += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  Array bt = random_array({4, 5}, rng);
  Array c2({3, 4});
  gemm_nt(a, bt, &c2, false);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 5; ++k) acc += a.at(i, k) * bt.at(j, k);
      CHECK(c2.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
  Array at = random_array({5, 3}, rng);
  Array c3({3, 4});
  gemm_tn(at, b, &c3, false);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      double acc = 0;
      for (int k = 0; k < 5; ++k) acc += at.at(k, i) * b.at(k, j);
      CHECK(c3.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(2);
  Tensor x = Tensor::constant(random_array({6, 9}, rng, 5.0));
  Tensor y = softmax_rows(x);
  for (int i = 0; i < 6; ++i) {
    double s = 0;
    for (int j = 0; j < 9; ++j) s += y.value().at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("cross entropy vanishes at a huge correct-class margin") {
  Array logits({1, 4});
  logits.v = {200.0, -10.0, -10.0, -10.0};
  Tensor t = Tensor::constant(logits);
  CHECK(cross_entropy_with_logits(t, {0}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("every primitive matches central finite differences") {
  std::mt19937_64 rng(3);

  auto leafy = [&](std::vector<int> shape, double s = 1.0) {
    return Tensor::leaf(random_array(std::move(shape), rng, s), true);
  };

  {
    Tensor a = leafy({4, 6}), b = leafy({6, 3});
    CHECK(fd_check([&] { return sum(matmul(a, b)); }, {a, b}, rng) < 1e-6);
  }
  {
    Tensor a = leafy({4, 6}), b = leafy({5, 6});
    CHECK(fd_check([&] { return sum(matmul_nt(a, b)); }, {a, b}, rng) < 1e-6);
  }
  {
    Tensor x = leafy({4, 6}), w = leafy({3, 6}), b = leafy({3});
    CHECK(fd_check([&] { return sum(tanh_op(linear(x, w, b))); }, {x, w, b}, rng) < 1e-6);
  }
  {
    Tensor a = leafy({5, 4}), b = leafy({5, 4});
    CHECK(fd_check([&] { return sum(mul(add(a, b), b)); }, {a, b}, rng) < 1e-6);
  }
  {
    Tensor m = leafy({5, 4}), v = leafy({4});
    CHECK(fd_check([&] { return sum(exp_op(scale(add_rowvec(m, v), 0.3))); }, {m, v}, rng) <
          1e-6);
  }
  {
    Tensor a = leafy({3, 7}, 2.0);
    // Weighted softmax output so the gradient is not identically zero.
    Tensor w = Tensor::constant(random_array({3, 7}, rng));
    CHECK(fd_check([&] { return sum(mul(softmax_rows(a), w)); }, {a}, rng) < 1e-6);
  }
  {
    Tensor x = leafy({4, 8}), g = leafy({8}), b = leafy({8});
    Tensor w = Tensor::constant(random_array({4, 8}, rng));
    CHECK(fd_check([&] { return sum(mul(layer_norm(x, g, b), w)); }, {x, g, b}, rng) < 1e-6);
  }
  {
    Tensor table = leafy({9, 5});
    std::vector<int> ids = {3, 1, 3, 8, 0};
    Tensor w = Tensor::constant(random_array({5, 5}, rng));
    CHECK(fd_check([&] { return sum(mul(embedding_lookup(table, ids), w)); }, {table}, rng) <
          1e-6);
  }
  {
    Tensor logits = leafy({6, 9}, 2.0);
    std::vector<int> targets = {0, 3, 8, 2, 2, 5};
    CHECK(fd_check([&] { return cross_entropy_with_logits(logits, targets); }, {logits}, rng) <
          1e-6);
  }
  {
    Tensor a = leafy({2, 5}), b = leafy({3, 5});
    Tensor w = Tensor::constant(random_array({5, 5}, rng));
    CHECK(fd_check([&] { return sum(mul(concat_rows(a, b), w)); }, {a, b}, rng) < 1e-6);
  }
  {
    Tensor a = leafy({6, 8});
    Tensor w = Tensor::constant(random_array({2, 3}, rng));
    CHECK(fd_check([&] { return sum(mul(slice_cols(slice_rows(a, 1, 3), 4, 7), w)); }, {a},
                   rng) < 1e-6);
  }
  {
    Tensor a = leafy({4, 4});
    CHECK(fd_check([&] { return sum(gelu(a)); }, {a}, rng) < 1e-6);
  }
  {
    Tensor a = leafy({4, 4});
    Array pos = random_array({4, 4}, rng);
    for (auto& x : pos.v) x = std::abs(x) + 0.5;
    Tensor p = Tensor::leaf(pos, true);
    CHECK(fd_check([&] { return sum(mul(log_op(p), a)); }, {p, a}, rng) < 1e-6);
  }
  {
    Tensor q = leafy({6, 3}), p = leafy({7, 3});
    // Gradients flow through q only; p acts as a constant sample set.
    CHECK(fd_check([&] { return mmd_ustat(q, p, 3.0); }, {q}, rng) < 1e-6);
  }
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::leaf(random_array({3, 3}, rng), true);
  Tensor loss = sum(x);
  backward(loss);
  for (double g : x.grad().v) CHECK(g == 1.0);

  // Product rule on scalars.
  Tensor a = Tensor::leaf(Array::scalar(3.0), true);
  Tensor b = Tensor::leaf(Array::scalar(-2.0), true);
  Tensor prod = mul(a, b);
  backward(prod);
  CHECK(a.grad().v[0] == -2.0);
  CHECK(b.grad().v[0] == 3.0);

  // Errors.
  CHECK_THROWS_AS(backward(prod), DoubleBackward);
  Tensor vec = Tensor::leaf(random_array({2, 2}, rng), true);
  CHECK_THROWS_AS(backward(add(vec, vec)), NonScalarLoss);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  std::mt19937_64 rng(6);
  Tensor x = Tensor::leaf(random_array({4}, rng), true);
  backward(sum(scale(x, 2.0)));
  backward(sum(scale(x, 3.0)));
  for (double g : x.grad().v) CHECK(g == doctest::Approx(5.0));
  x.zero_grad();
  backward(sum(x));
  for (double g : x.grad().v) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("no-grad guard suppresses recording") {
  std::mt19937_64 rng(7);
  Tensor x = Tensor::leaf(random_array({3}, rng), true);
  NoGradGuard guard;
  Tensor y = sum(x);
  CHECK(!y.requires_grad());
}

TEST_CASE("shape errors are rejected") {
  std::mt19937_64 rng(8);
  Tensor a = Tensor::leaf(random_array({2, 3}, rng), true);
  Tensor b = Tensor::leaf(random_array({2, 3}, rng), true);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(slice_rows(a, 1, 1), ShapeError);
  Tensor v = Tensor::leaf(random_array({7}, rng), true);
  CHECK_THROWS_AS(add_rowvec(a, v), ShapeError);
}

TEST_CASE("adamw update rule") {
  // Zero gradient, zero decay: parameters unchanged.
  {
    ParamStore store;
    Tensor w = store.create("w", Array::scalar(1.25));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(&store, cfg);
    w.grad();  // allocate zero grad
    opt.step();
    CHECK(w.value().v[0] == 1.25);
  }
  // One step on f(w) = w^2/2 from w=1 decreases |w|, and the first
  // bias-corrected step equals lr * g / (sqrt(vhat) + eps) exactly.
  {
    ParamStore store;
    Tensor w = store.create("w", Array::scalar(1.0));
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(&store, cfg);
    Tensor loss = scale(mul(w, w), 0.5);
    backward(loss);
    CHECK(w.grad().v[0] == doctest::Approx(1.0));
    opt.step();
    const double expected = 1.0 - 0.1 * 1.0 / (1.0 + cfg.eps);
    CHECK(w.value().v[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(w.value().v[0]) < 1.0);
    // Gradient were zeroed by the step.
    CHECK(w.grad().v[0] == 0.0);
  }
  // Decoupled decay shrinks weights even with zero gradient.
  {
    ParamStore store;
    Tensor w = store.create("w", Array::scalar(2.0));
    AdamWConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.weight_decay = 0.5;
    AdamW opt(&store, cfg);
    w.grad();
    opt.step();
    CHECK(w.value().v[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }
}

TEST_CASE("mmd value properties") {
  std::mt19937_64 rng(9);
  Array a = random_array({16, 4}, rng);
  Tensor q = Tensor::constant(a);
  Tensor p = Tensor::constant(a);
  // Identical sample sets: the U-statistic cross term cancels the diagonal-free
  // self terms up to the missing diagonal, leaving a small negative bias.
  const double self = mmd_ustat(q, p, 4.0).item();
  CHECK(std::abs(self) < 0.2);
  // Symmetry.
  Array b = random_array({12, 4}, rng);
  Tensor pb = Tensor::constant(b);
  CHECK(mmd_ustat(q, pb, 4.0).item() ==
        doctest::Approx(mmd_ustat(pb, q, 4.0).item()).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip is bit exact") {
  namespace fsys = std::filesystem;
  std::mt19937_64 rng(10);
  NamedArrays arrays;
  arrays.emplace_back("alpha", random_array({7, 3}, rng));
  arrays.emplace_back("beta", random_array({11}, rng));
  arrays.emplace_back("gamma/delta", random_array({2, 2}, rng));

  const std::string p1 = (fsys::temp_directory_path() / "dtx_ckpt_a.bin").string();
  const std::string p2 = (fsys::temp_directory_path() / "dtx_ckpt_b.bin").string();
  save_checkpoint(p1, arrays);
  NamedArrays loaded = load_checkpoint(p1);
  REQUIRE(loaded.size() == arrays.size());
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    CHECK(loaded[i].first == arrays[i].first);
    CHECK(loaded[i].second.shape == arrays[i].second.shape);
    REQUIRE(loaded[i].second.size() == arrays[i].second.size());
    CHECK(std::memcmp(loaded[i].second.v.data(), arrays[i].second.v.data(),
                      arrays[i].second.size() * sizeof(double)) == 0);
  }
  // Saving the loaded copy reproduces the file byte for byte.
  save_checkpoint(p2, loaded);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(s1.substr(0, 5) == "CTXT1");
  fsys::remove(p1);
  fsys::remove(p2);

  CHECK_THROWS(load_checkpoint("/nonexistent/path.bin"));
}

TEST_CASE("param store rejects duplicates and reports sizes") {
  ParamStore store;
  store.create("a", Array({2, 3}));
  store.create("b", Array({4}));
  CHECK_THROWS(store.create("a", Array({1})));
  CHECK(store.total_parameters() == 10);
  CHECK(store.get("b").value().size() == 4);
  CHECK_THROWS(store.get("missing"));
}
