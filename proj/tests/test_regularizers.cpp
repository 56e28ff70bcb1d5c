#include <cmath>

#include "doctest.h"
#include "srnet/graph.hpp"
#include "srnet/layers.hpp"
#include "srnet/regularizers.hpp"
#include "srnet/rng.hpp"
#include "srnet/sparsity.hpp"
#include "test_util.hpp"

using namespace srnet;
using testutil::max_grad_fd_error;
using testutil::random_tensor;
using testutil::rel_err;

namespace {

// Scalar transcription of the correlation coefficient with the shared mean
// filter, one pair at a time.
double pearson_scalar(const Tensor& w, std::size_t d, std::size_t e) {
  const std::size_t rows = w.dim(0), m = w.size() / rows;
  std::vector<double> mean(m, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < m; ++c) mean[c] += w[r * m + c];
  for (std::size_t c = 0; c < m; ++c) mean[c] /= static_cast<double>(rows);
  double dot = 0, nd = 0, ne = 0;
  for (std::size_t c = 0; c < m; ++c) {
    const double xd = w[d * m + c] - mean[c];
    const double xe = w[e * m + c] - mean[c];
    dot += xd * xe;
    nd += xd * xd;
    ne += xe * xe;
  }
  return dot / std::sqrt(nd * ne);
}

}  // namespace

TEST_CASE("named profiles") {
  RegProfile none = regularization_profile("none");
  CHECK(none.is_noop());
  CHECK(none.lambda_for("conv3") == 0.0);

  RegProfile sr1 = regularization_profile("sr1");
  for (const char* l : {"conv1", "conv2", "conv3", "conv4", "fc1"})
    CHECK(sr1.lambda_for(l) == 0.001);
  CHECK(sr1.lambda_for("fc2") == 0.0);
  CHECK(sr1.kappa_for("conv1") == 0.0);

  RegProfile sr2 = regularization_profile("sr2");
  CHECK(sr2.lambda_for("conv1") == 0.0);
  CHECK(sr2.lambda_for("conv2") == 0.0);
  CHECK(sr2.lambda_for("conv3") == 0.001);
  CHECK(sr2.lambda_for("conv4") == 0.001);
  CHECK(sr2.lambda_for("fc1") == 0.001);
  CHECK(sr2.kappa_for("conv1") == 0.0);

  RegProfile sr3 = regularization_profile("sr3");
  CHECK(sr3.lambda_for("conv3") == 0.001);
  CHECK(sr3.lambda_for("conv4") == 0.001);
  CHECK(sr3.lambda_for("fc1") == 0.001);
  CHECK(sr3.kappa_for("conv1") == 1.0);
  CHECK(sr3.kappa_for("conv2") == 0.0);

  CHECK_THROWS_AS(regularization_profile("sr9"), std::invalid_argument);
}

TEST_CASE("sparsity penalty: zero weights produce no node") {
  Graph g;
  Var x = g.input("x", Tensor({1, 4, 2, 1}));
  auto pen = sparsity_penalty({{"conv1", x}}, regularization_profile("none"));
  CHECK_FALSE(pen.has_value());
}

TEST_CASE("sparsity penalty: two uniform fields, D=4, lambda=0.001") {
  Graph g;
  Tensor act({1, 4, 2, 1});
  act.fill(1.25);  // uniform across channels -> entropy ln 4 per field
  Var x = g.input("x", act);
  RegProfile p;
  p.lambda["conv1"] = 0.001;
  auto pen = sparsity_penalty({{"conv1", x}}, p);
  REQUIRE(pen.has_value());
  CHECK(pen->value().item() ==
        doctest::Approx(-0.001 * 2.0 * std::log(4.0)).epsilon(1e-13));
  CHECK(pen->value().item() == doctest::Approx(-0.0027726).epsilon(1e-4));
}

TEST_CASE("sparsity penalty is batch-averaged") {
  Rng rng(3);
  Tensor one = random_tensor({1, 3, 2, 2}, rng);
  Tensor dup({2, 3, 2, 2});
  for (std::size_t i = 0; i < one.size(); ++i) {
    dup[i] = one[i];
    dup[one.size() + i] = one[i];
  }
  RegProfile p;
  p.lambda["l"] = 0.5;
  Graph g1, g2;
  auto p1 = sparsity_penalty({{"l", g1.input("x", one)}}, p);
  auto p2 = sparsity_penalty({{"l", g2.input("x", dup)}}, p);
  CHECK(rel_err(p1->value().item(), p2->value().item()) < 1e-13);
}

TEST_CASE("sparsity penalty: D < 2 with positive weight is an error; L_s <= 0") {
  Graph g;
  Var bad = g.input("bad", Tensor({2, 1, 2, 2}));
  RegProfile p;
  p.lambda["l"] = 0.001;
  CHECK_THROWS_AS(sparsity_penalty({{"l", bad}}, p), std::invalid_argument);

  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Graph g2;
    Var x = g2.input("x", random_tensor({2, 5, 2, 2}, rng, -3.0, 3.0));
    RegProfile pr;
    pr.lambda["l"] = rng.uniform(0.0, 2.0);
    auto pen = sparsity_penalty({{"l", x}}, pr);
    if (pen) CHECK(pen->value().item() <= 0.0);
  }
}

TEST_CASE("sparsity penalty gradient w.r.t. conv weights matches finite differences") {
  Rng rng(23);
  Parameter w("w", random_tensor({3, 2, 3, 3}, rng, -0.6, 0.6));
  Parameter b("b", random_tensor({3}, rng, -0.1, 0.1));
  Graph g;
  Var x = g.input("x", random_tensor({2, 2, 4, 4}, rng));
  Var pre = conv2d(x, g.parameter(w), g.parameter(b), 1, 1);
  RegProfile p;
  p.lambda["conv"] = 0.001;
  auto pen = sparsity_penalty({{"conv", pre}}, p);
  REQUIRE(pen.has_value());
  CHECK(max_grad_fd_error(g, *pen, {&w, &b}) < 1e-4);
}

TEST_CASE("pearson correlation: identical pair, negated pair, scalar oracle") {
  {
    Tensor w({2, 3}, {0.4, -1.0, 2.0, 0.4, -1.0, 2.0});
    PearsonResult pr = pearson_filter_correlation(w);
    CHECK(pr.matrix(1, 0) == 1.0);
    CHECK(pr.degenerate_pairs == 0);
  }
  {
    Tensor w({2, 3}, {0.4, -1.0, 2.0, -0.4, 1.0, -2.0});
    PearsonResult pr = pearson_filter_correlation(w);
    CHECK(pr.matrix(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  {
    Rng rng(37);
    Tensor w = random_tensor({3, 7}, rng);
    PearsonResult pr = pearson_filter_correlation(w);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t e = 0; e < d; ++e)
        CHECK(std::fabs(pr.matrix(d, e) - pearson_scalar(w, d, e)) < 1e-12);
  }
}

TEST_CASE("pearson correlation: symmetry, range, unit diagonal") {
  Rng rng(41);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t d = 2 + rng.below(6);
    Tensor w = random_tensor({d, 2 + rng.below(10)}, rng);
    PearsonResult pr = pearson_filter_correlation(w);
    for (std::size_t i = 0; i < d; ++i) {
      CHECK(pr.matrix(i, i) == 1.0);
      for (std::size_t j = 0; j < d; ++j) {
        CHECK(pr.matrix(i, j) == pr.matrix(j, i));
        CHECK(pr.matrix(i, j) >= -1.0 - 1e-9);
        CHECK(pr.matrix(i, j) <= 1.0 + 1e-9);
      }
    }
  }
}

TEST_CASE("pearson correlation: one-sided zero-norm pair is 0 with a count") {
  // filter 0 equals the mean of the other two, so it centers to zero
  Tensor w({3, 2}, {2.0, 3.0, 1.0, 1.0, 3.0, 5.0});
  PearsonResult pr = pearson_filter_correlation(w);
  CHECK(pr.degenerate_pairs == 2);
  CHECK(pr.matrix(1, 0) == 0.0);
  CHECK(pr.matrix(2, 0) == 0.0);
  CHECK(pr.matrix(2, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("decorrelation penalty: kappa=0 none, identical filters give L_c = 1") {
  Graph g;
  Parameter w("w", Tensor({2, 3}, {0.4, -1.0, 2.0, 0.4, -1.0, 2.0}));
  Var leaf = g.parameter(w);
  auto none = decorrelation_penalty({{"conv1", leaf}}, regularization_profile("none"));
  CHECK_FALSE(none.has_value());

  RegProfile p;
  p.kappa["conv1"] = 1.0;
  auto pen = decorrelation_penalty({{"conv1", leaf}}, p);
  REQUIRE(pen.has_value());
  CHECK(pen->value().item() == 1.0);
}

TEST_CASE("decorrelation penalty gradient matches finite differences") {
  Rng rng(47);
  Parameter w("w", random_tensor({4, 2, 2, 2}, rng));
  Graph g;
  RegProfile p;
  p.kappa["conv1"] = 0.8;
  auto pen = decorrelation_penalty({{"conv1", g.parameter(w)}}, p);
  REQUIRE(pen.has_value());
  CHECK(max_grad_fd_error(g, *pen, {&w}) < 1e-4);
}

TEST_CASE("total loss composes terms and is linear in backward") {
  Graph g;
  Parameter a("a", Tensor({1}, {1.0}));
  Parameter b("b", Tensor({1}, {-0.002}));
  Parameter c("c", Tensor({1}, {0.5}));
  Var va = g.parameter(a), vb = g.parameter(b), vc = g.parameter(c);
  CHECK(total_loss(va, std::nullopt, std::nullopt).value().item() == 1.0);
  Var combined = total_loss(va, vb, vc);
  CHECK(combined.value().item() == doctest::Approx(1.498).epsilon(1e-15));

  auto grads = g.gradients(combined);
  CHECK(grads.at("a")[0] == 1.0);
  CHECK(grads.at("b")[0] == 1.0);
  CHECK(grads.at("c")[0] == 1.0);
}

TEST_CASE("backward through the combined loss equals the sum of separate backwards") {
  Rng rng(53);
  Parameter w("w", random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5));
  Parameter b("b", random_tensor({3}, rng, -0.1, 0.1));
  Rng xrng(99);
  auto build = [&](Graph& g, Var& base, Var& ls, Var& lc) {
    Var x = g.input("x", random_tensor({2, 2, 4, 4}, xrng));
    Var wleaf = g.parameter(w);
    Var pre = conv2d(x, wleaf, g.parameter(b), 1, 1);
    base = cross_entropy(reshape(pre, {2, 3 * 16}), {5, 11});
    RegProfile p;
    p.lambda["conv"] = 0.001;
    p.kappa["conv"] = 1.0;
    ls = *sparsity_penalty({{"conv", pre}}, p);
    lc = *decorrelation_penalty({{"conv", wleaf}}, p);
  };
  Graph g1;
  Var base1, ls1, lc1;
  build(g1, base1, ls1, lc1);
  auto combined = g1.gradients(total_loss(base1, ls1, lc1));

  w.zero_grad();
  b.zero_grad();
  g1.backward(base1);
  g1.backward(ls1);
  g1.backward(lc1);
  for (Parameter* p : {&w, &b})
    for (std::size_t i = 0; i < p->value.size(); ++i)
      CHECK(rel_err(combined.at(p->name)[i], p->grad[i]) < 1e-12);
}

TEST_CASE("uniform fields give the exact closed-form penalty") {
  // L_s = -(sum_i lambda_i r_i ln D_i) when every regularized RFAV is uniform
  Graph g;
  Tensor a({1, 3, 2, 2});
  a.fill(0.2);
  Tensor b({1, 5, 1, 2});
  b.fill(-1.0);
  RegProfile p;
  p.lambda["l1"] = 0.4;
  p.lambda["l2"] = 0.25;
  auto pen = sparsity_penalty({{"l1", g.input("a", a)}, {"l2", g.input("b", b)}}, p);
  const double expect = -(0.4 * 4.0 * std::log(3.0) + 0.25 * 2.0 * std::log(5.0));
  CHECK(pen->value().item() == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("one descent step on the sparsity term does not decrease mean entropy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 400);
    Parameter w("w", random_tensor({4, 3, 3, 3}, rng, -0.7, 0.7));
    Parameter b("b", random_tensor({4}, rng, -0.1, 0.1));
    Tensor x = random_tensor({2, 3, 6, 6}, rng);

    auto mean_h = [&] {
      Graph g;
      Var pre = conv2d(g.input("x", x), g.parameter(w), g.parameter(b), 1, 1);
      EntropyAccumulator acc;
      const Tensor& v = pre.value();
      std::vector<double> chan(4);
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t k = 0; k < 36; ++k) {
          for (std::size_t l = 0; l < 4; ++l) chan[l] = v[(n * 4 + l) * 36 + k];
          acc.add_channels_at(chan.data(), 4);
        }
      return acc.mean();
    };

    const double before = mean_h();
    Graph g;
    Var pre = conv2d(g.input("x", x), g.parameter(w), g.parameter(b), 1, 1);
    RegProfile p;
    p.lambda["conv"] = 1.0;
    auto pen = sparsity_penalty({{"conv", pre}}, p);
    auto grads = g.gradients(*pen);
    for (Parameter* prm : {&w, &b}) {
      const Tensor& gr = grads.at(prm->name);
      for (std::size_t i = 0; i < prm->value.size(); ++i) prm->value[i] -= 1e-4 * gr[i];
    }
    CHECK(mean_h() >= before - 1e-12);
  }
}
