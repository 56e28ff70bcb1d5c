#include <cmath>
#include <cstring>

#include "doctest.h"
#include "srnet/graph.hpp"
#include "srnet/layers.hpp"
#include "srnet/regularizers.hpp"
#include "srnet/rng.hpp"
#include "test_util.hpp"

using namespace srnet;
using testutil::max_grad_fd_error;
using testutil::random_tensor;
using testutil::rel_err;

TEST_CASE("evaluate: single add node") {
  Graph g;
  Var a = g.input("a", Tensor({2}, {1, 2}));
  Var b = g.input("b", Tensor({2}, {3, 4}));
  Var s = add(a, b);
  g.mark_output("sum", s);
  CHECK(s.value()[0] == 4);
  CHECK(s.value()[1] == 6);

  auto out = g.evaluate({{"a", Tensor({2}, {10, 20})}, {"b", Tensor({2}, {1, 1})}});
  CHECK(out.at("sum")[0] == 11);
  CHECK(out.at("sum")[1] == 21);
}

TEST_CASE("evaluate: matmul of all-ones (2x3)(3x1)") {
  Graph g;
  Var a = g.input("a", Tensor({2, 3}, {1, 1, 1, 1, 1, 1}));
  Var b = g.input("b", Tensor({3, 1}, {1, 1, 1}));
  Var m = matmul(a, b);
  CHECK(m.value().shape() == std::vector<std::size_t>{2, 1});
  CHECK(m.value()[0] == 3);
  CHECK(m.value()[1] == 3);
}

TEST_CASE("evaluate: relu(softmax(x)) chain on [0,0]") {
  Graph g;
  Var x = g.input("x", Tensor({2}, {0, 0}));
  Var y = relu(softmax(x));
  CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y.value()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("evaluate errors: shape mismatch names the input, non-finite rejected") {
  Graph g;
  g.input("a", Tensor({2}, {1, 2}));
  CHECK_THROWS_WITH_AS(g.bind("a", Tensor({3}, {1, 2, 3})),
                       doctest::Contains("input 'a'"), std::invalid_argument);
  Tensor bad({2}, {1, 2});
  bad[0] = std::nan("");
  CHECK_THROWS_AS(g.bind("a", bad), std::runtime_error);
  CHECK_THROWS_AS(g.bind("nope", Tensor({1}, {0})), std::invalid_argument);
}

TEST_CASE("add/mul shape mismatch is an error") {
  Graph g;
  Var a = g.input("a", Tensor({2}, {1, 2}));
  Var b = g.input("b", Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, b), std::invalid_argument);
}

TEST_CASE("gradients: linear loss sum(w*x)") {
  Graph g;
  Parameter w("w", Tensor({2}, {1, 2}));
  Var wl = g.parameter(w);
  Var x = g.input("x", Tensor({2}, {3, 4}));
  Var loss = sum_all(mul(wl, x));
  auto grads = g.gradients(loss);
  CHECK(grads.at("w")[0] == 3);
  CHECK(grads.at("w")[1] == 4);
}

TEST_CASE("gradients: quadratic (w-1)^2 at w=3") {
  Graph g;
  Parameter w("w", Tensor({1}, {3}));
  Var wl = g.parameter(w);
  Var t = add(wl, g.constant(Tensor({1}, {-1})));
  Var loss = mul(t, t);
  auto grads = g.gradients(loss);
  CHECK(grads.at("w")[0] == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("gradients: RFAV entropy of a random D=8 vector vs finite differences") {
  Rng rng(42);
  Parameter a("a", random_tensor({8}, rng, -2.0, 2.0));
  Graph g;
  Var loss = rfav_entropy_sum(g.parameter(a));
  CHECK(max_grad_fd_error(g, loss, {&a}, 1e-5) < 1e-6);
}

TEST_CASE("gradients: loss must be scalar; cycles impossible by construction") {
  Graph g;
  Parameter w("w", Tensor({2}, {1, 2}));
  Var wl = g.parameter(w);
  CHECK_THROWS_AS(g.backward(wl), std::invalid_argument);
}

TEST_CASE("finite differences: f = p^2 at p = 2") {
  Parameter p("p", Tensor({1}, {2}));
  auto fd = finite_diff_gradient([&] { return p.value[0] * p.value[0]; }, {&p}, 1e-5);
  CHECK(std::fabs(fd.at("p")[0] - 4.0) < 1e-8);
}

TEST_CASE("finite differences: f = sum(p) gives all ones") {
  Parameter p("p", Tensor({4}, {0.3, -1.2, 5.0, 2.5}));
  auto fd = finite_diff_gradient(
      [&] {
        double s = 0;
        for (double v : p.value.values()) s += v;
        return s;
      },
      {&p}, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(fd.at("p")[i] - 1.0) < 1e-9);
}

TEST_CASE("finite differences: bad step and non-finite f are errors") {
  Parameter p("p", Tensor({1}, {1}));
  CHECK_THROWS_AS(finite_diff_gradient([] { return 0.0; }, {&p}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(
      finite_diff_gradient([] { return std::numeric_limits<double>::quiet_NaN(); }, {&p}, 1e-5),
      std::runtime_error);
}

TEST_CASE("evaluate is deterministic: identical graphs give bit-identical values") {
  for (int seed = 0; seed < 5; ++seed) {
    auto build = [seed](Tensor& out) {
      Rng rng(seed + 1000);
      Parameter w("w", random_tensor({3, 4, 3, 3}, rng));
      Parameter b("b", random_tensor({3}, rng));
      Graph g;
      Var x = g.input("x", random_tensor({2, 4, 6, 6}, rng));
      Var y = relu(conv2d(x, g.parameter(w), g.parameter(b), 1, 1));
      out = y.value();
    };
    Tensor a, b;
    build(a);
    build(b);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("backward of a sum of losses equals the sum of backwards") {
  Rng rng(7);
  Parameter w("w", random_tensor({4, 3}, rng));
  Parameter b("b", random_tensor({4}, rng));
  Graph g;
  Var x = g.input("x", random_tensor({2, 3}, rng));
  Var h = dense(x, g.parameter(w), g.parameter(b));
  Var l1 = sum_all(mul(h, h));
  Var l2 = scale(rfav_entropy_sum(h), 0.7);
  Var combined = add(l1, l2);

  auto grads_combined = g.gradients(combined);
  w.zero_grad();
  b.zero_grad();
  g.backward(l1);
  g.backward(l2);  // accumulates
  for (Parameter* p : {&w, &b})
    for (std::size_t i = 0; i < p->value.size(); ++i)
      CHECK(rel_err(grads_combined.at(p->name)[i], p->grad[i]) < 1e-12);
}

// Per-operation gradient checks against the central-difference oracle,
// component-wise relative error < 1e-4 with denominator max(|a|,|b|,1e-8).
namespace {

void check_op_gradient(int seed, int op_index, double tol = 1e-4) {
  Rng rng(static_cast<std::uint64_t>(seed) * 131 + static_cast<std::uint64_t>(op_index));
  switch (op_index) {
    case 0: {  // add + mul + scale chain
      Parameter a("a", random_tensor({3, 3}, rng));
      Parameter b("b", random_tensor({3, 3}, rng));
      Graph g;
      Var s = add(g.parameter(a), scale(mul(g.parameter(b), g.parameter(b)), 0.5));
      Var loss = sum_all(mul(s, s));
      CHECK(max_grad_fd_error(g, loss, {&a, &b}) < tol);
      break;
    }
    case 1: {  // matmul
      Parameter a("a", random_tensor({2, 4}, rng));
      Parameter b("b", random_tensor({4, 3}, rng));
      Graph g;
      Var loss = sum_all(mul(matmul(g.parameter(a), g.parameter(b)),
                             g.constant(random_tensor({2, 3}, rng))));
      CHECK(max_grad_fd_error(g, loss, {&a, &b}) < tol);
      break;
    }
    case 2: {  // reshape + log_safe on positive values
      Parameter a("a", random_tensor({6}, rng, 0.2, 2.0));
      Graph g;
      Var loss = sum_all(log_safe(reshape(g.parameter(a), {2, 3})));
      CHECK(max_grad_fd_error(g, loss, {&a}) < tol);
      break;
    }
    case 3: {  // relu away from the kink
      Tensor t({8});
      for (std::size_t i = 0; i < 8; ++i) {
        const double mag = rng.uniform(0.05, 1.0);
        t[i] = rng.uniform() < 0.5 ? -mag : mag;
      }
      Parameter a("a", t);
      Graph g;
      Var loss = sum_all(mul(relu(g.parameter(a)), g.constant(random_tensor({8}, rng))));
      CHECK(max_grad_fd_error(g, loss, {&a}) < tol);
      break;
    }
    case 4: {  // softmax
      Parameter a("a", random_tensor({3, 5}, rng, -2.0, 2.0));
      Graph g;
      Var loss = sum_all(mul(softmax(g.parameter(a)), g.constant(random_tensor({3, 5}, rng))));
      CHECK(max_grad_fd_error(g, loss, {&a}) < tol);
      break;
    }
    case 5: {  // conv2d
      Parameter w("w", random_tensor({3, 2, 3, 3}, rng));
      Parameter b("b", random_tensor({3}, rng));
      Parameter x("x", random_tensor({2, 2, 5, 5}, rng));
      Graph g;
      Var y = conv2d(g.parameter(x), g.parameter(w), g.parameter(b), 1, 1);
      Var loss = sum_all(mul(y, g.constant(random_tensor(y.value().shape(), rng))));
      CHECK(max_grad_fd_error(g, loss, {&w, &b, &x}) < tol);
      break;
    }
    case 6: {  // maxpool with separated window values
      Tensor t({2, 4, 4});
      bool ok = false;
      while (!ok) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        ok = true;
        for (std::size_t c = 0; c < 2 && ok; ++c)
          for (std::size_t a = 0; a < 2 && ok; ++a)
            for (std::size_t bb = 0; bb < 2 && ok; ++bb) {
              double v[4] = {t(c, 2 * a, 2 * bb), t(c, 2 * a, 2 * bb + 1),
                             t(c, 2 * a + 1, 2 * bb), t(c, 2 * a + 1, 2 * bb + 1)};
              for (int i = 0; i < 4; ++i)
                for (int j = i + 1; j < 4; ++j)
                  if (std::fabs(v[i] - v[j]) < 1e-3) ok = false;
            }
      }
      Parameter x("x", t);
      Graph g;
      Var y = maxpool2x2(g.parameter(x));
      Var loss = sum_all(mul(y, g.constant(random_tensor(y.value().shape(), rng))));
      CHECK(max_grad_fd_error(g, loss, {&x}) < tol);
      break;
    }
    case 7: {  // dense
      Parameter w("w", random_tensor({4, 6}, rng));
      Parameter b("b", random_tensor({4}, rng));
      Parameter x("x", random_tensor({3, 6}, rng));
      Graph g;
      Var y = dense(g.parameter(x), g.parameter(w), g.parameter(b));
      Var loss = sum_all(mul(y, g.constant(random_tensor(y.value().shape(), rng))));
      CHECK(max_grad_fd_error(g, loss, {&w, &b, &x}) < tol);
      break;
    }
    case 8: {  // batchnorm, training mode
      Parameter gm("gamma", random_tensor({3}, rng, 0.5, 1.5));
      Parameter bt("beta", random_tensor({3}, rng));
      Parameter x("x", random_tensor({4, 3, 2, 2}, rng));
      BatchNormLayer layer;
      layer.gamma = Parameter("g2", Tensor({3}));
      layer.running_mean = Tensor({3});
      layer.running_var = Tensor({3});
      layer.running_var.fill(1.0);
      Graph g;
      Var y = batchnorm(g.parameter(x), g.parameter(gm), g.parameter(bt), layer, true);
      Var loss = sum_all(mul(y, g.constant(random_tensor(y.value().shape(), rng))));
      CHECK(max_grad_fd_error(g, loss, {&gm, &bt, &x}) < tol);
      break;
    }
    case 9: {  // cross-entropy
      Parameter z("z", random_tensor({4, 5}, rng, -2.0, 2.0));
      std::vector<int> labels{0, 3, 2, 4};
      Graph g;
      Var loss = cross_entropy(g.parameter(z), labels);
      CHECK(max_grad_fd_error(g, loss, {&z}) < tol);
      break;
    }
    case 10: {  // rfav entropy sum over a conv-shaped batch
      Parameter a("a", random_tensor({2, 4, 3, 3}, rng, -1.5, 1.5));
      Graph g;
      Var loss = rfav_entropy_sum(g.parameter(a));
      CHECK(max_grad_fd_error(g, loss, {&a}) < tol);
      break;
    }
    case 11: {  // filter correlation sum, signed and absolute
      Tensor t({4, 6});
      double min_c = 0.0;
      do {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
        const PearsonResult pr = pearson_filter_correlation(t);
        min_c = 2.0;
        for (std::size_t r = 1; r < 4; ++r)
          for (std::size_t c = 0; c < r; ++c)
            min_c = std::min(min_c, std::fabs(pr.matrix(r, c)));
      } while (min_c < 2e-2);
      Parameter w("w", t);
      {
        Graph g;
        Var loss = filter_correlation_sum(g.parameter(w), false);
        CHECK(max_grad_fd_error(g, loss, {&w}) < tol);
      }
      {
        Graph g;
        Var loss = filter_correlation_sum(g.parameter(w), true);
        CHECK(max_grad_fd_error(g, loss, {&w}) < tol);
      }
      break;
    }
  }
}

}  // namespace

TEST_CASE("every operation passes the finite-difference check across 120 seeds") {
  int seeds_used = 0;
  for (int op = 0; op < 12; ++op)
    for (int seed = 0; seed < 10; ++seed) {
      check_op_gradient(seed, op);
      ++seeds_used;
    }
  CHECK(seeds_used >= 100);
}

TEST_CASE("fused entropy matches the primitive-composed route") {
  Rng rng(99);
  Parameter a("a", random_tensor({6}, rng, -2.0, 2.0));
  Graph g;
  Var leaf = g.parameter(a);
  Var fused = rfav_entropy_sum(leaf);
  Var p = softmax(leaf);
  Var composed = scale(sum_all(mul(p, log_safe(p))), -1.0);
  CHECK(rel_err(fused.value().item(), composed.value().item()) < 1e-12);

  auto gf = g.gradients(fused);
  auto gc = g.gradients(composed);
  for (std::size_t i = 0; i < 6; ++i) CHECK(rel_err(gf.at("a")[i], gc.at("a")[i]) < 1e-10);
}
