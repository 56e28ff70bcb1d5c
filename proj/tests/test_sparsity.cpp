#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "srnet/rng.hpp"
#include "srnet/sparsity.hpp"
#include "test_util.hpp"

using namespace srnet;
using testutil::random_tensor;

TEST_CASE("rfav_extract: index map and round trip") {
  {
    Tensor act({2, 1, 1}, {4.0, -1.5});
    auto v = rfav_extract(act);
    REQUIRE(v.size() == 1);
    CHECK(v[0][0] == 4.0);
    CHECK(v[0][1] == -1.5);
  }
  {
    // D=2, A=2, B=1: k=0 from (a=0,b=0), k=1 from (a=1,b=0)
    Tensor act({2, 2, 1}, {10, 11, 20, 21});
    auto v = rfav_extract(act);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == std::vector<double>{10, 20});
    CHECK(v[1] == std::vector<double>{11, 21});
  }
  {
    Rng rng(5);
    Tensor act = random_tensor({4, 3, 5}, rng);
    auto v = rfav_extract(act);
    REQUIRE(v.size() == 15);
    Tensor back({4, 3, 5});
    for (std::size_t k = 0; k < 15; ++k)
      for (std::size_t l = 0; l < 4; ++l) back[l * 15 + k] = v[k][l];
    for (std::size_t i = 0; i < act.size(); ++i) CHECK(back[i] == act[i]);
  }
  CHECK_THROWS_AS(rfav_extract(Tensor({1, 2, 2})), std::invalid_argument);
  CHECK_THROWS_AS(rfav_extract(Tensor({4, 4})), std::invalid_argument);
}

TEST_CASE("rfav_entropy closed forms") {
  CHECK(rfav_entropy({3.0, 3.0, 3.0, 3.0}) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(rfav_entropy({1000.0, 0.0, 0.0, 0.0}) <= 1e-6);
  const double expected = -(2.0 / 3.0 * std::log(2.0 / 3.0) + 1.0 / 3.0 * std::log(1.0 / 3.0));
  CHECK(rfav_entropy({std::log(2.0), 0.0}) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(expected == doctest::Approx(0.6365).epsilon(1e-4));
  CHECK_THROWS_AS(rfav_entropy({1.0, std::nan("")}), std::invalid_argument);
}

TEST_CASE("perplexity") {
  CHECK(perplexity(0.0) == 1.0);
  const double ln_d = std::log(16.0);
  CHECK(perplexity(ln_d) == doctest::Approx(16.0).epsilon(1e-12));
  CHECK(perplexity(0.6365141682948129) == doctest::Approx(1.890).epsilon(1e-3));
  CHECK_THROWS_AS(perplexity(-0.1), std::invalid_argument);
}

TEST_CASE("sparsity_heatmap: uniform, dominated, per-cell recomputation") {
  {
    Tensor act({4, 2, 3});
    act.fill(0.7);
    SparsityHeatmap h = sparsity_heatmap({"conv1", act}, 3);
    CHECK(h.layer_id == "conv1");
    CHECK(h.epoch == 3);
    CHECK(h.channels == 4);
    for (std::size_t i = 0; i < h.grid.size(); ++i)
      CHECK(h.grid[i] == doctest::Approx(std::log(4.0)).epsilon(1e-13));
  }
  {
    Tensor act({3, 2, 2});
    for (std::size_t k = 0; k < 4; ++k) act[k] = 500.0;  // channel 0 dominates everywhere
    SparsityHeatmap h = sparsity_heatmap({"x", act}, 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(h.grid[i] <= 1e-6);
  }
  {
    Rng rng(31);
    Tensor act = random_tensor({5, 3, 4}, rng, -2.0, 2.0);
    SparsityHeatmap h = sparsity_heatmap({"x", act}, 0);
    auto vecs = rfav_extract(act);
    for (std::size_t k = 0; k < vecs.size(); ++k)
      CHECK(h.grid[k] == doctest::Approx(rfav_entropy(vecs[k])).epsilon(1e-15));
  }
}

TEST_CASE("mean_entropy: single field, linearity, flat mean") {
  {
    Tensor act({4, 1, 1});
    act.fill(1.0);
    CHECK(mean_entropy({{"l", act}}) == doctest::Approx(std::log(4.0)).epsilon(1e-13));
  }
  {
    Rng rng(8);
    RfavField f1{"l", random_tensor({3, 2, 2}, rng)};
    RfavField f2{"l", random_tensor({3, 2, 2}, rng)};
    const double m1 = mean_entropy({f1});
    const double m2 = mean_entropy({f2});
    CHECK(mean_entropy({f1, f2}) == doctest::Approx((m1 + m2) / 2.0).epsilon(1e-12));
  }
  {
    Rng rng(9);
    std::vector<RfavField> fields;
    double flat_sum = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < 10; ++i) {
      fields.push_back({"l", random_tensor({4, 2, 3}, rng)});
      for (const auto& v : rfav_extract(fields.back().activations)) {
        flat_sum += rfav_entropy(v);
        ++count;
      }
    }
    CHECK(mean_entropy(fields) ==
          doctest::Approx(flat_sum / static_cast<double>(count)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(mean_entropy({}), std::invalid_argument);
}

TEST_CASE("entropy invariants over 10^4 random vectors, D in 2..64") {
  Rng rng(1234);
  for (int it = 0; it < 10000; ++it) {
    const std::size_t d = 2 + rng.below(63);
    std::vector<double> v(d), shifted(d), permuted(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.uniform(-20.0, 20.0);
    const double h = rfav_entropy(v);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(d)) + 1e-12);

    const double c = rng.uniform(-100.0, 100.0);
    for (std::size_t i = 0; i < d; ++i) shifted[i] = v[i] + c;
    CHECK(std::fabs(rfav_entropy(shifted) - h) <= 1e-10);

    permuted = v;
    shuffle_indices(permuted, rng);
    CHECK(std::fabs(rfav_entropy(permuted) - h) <= 1e-12);

    const double rho = perplexity(h);
    CHECK(rho >= 1.0);
    CHECK(rho <= static_cast<double>(d) + 1e-9);
  }
}
