#include <catch2/catch_amalgamated.hpp>

#include "sve/entmax.hpp"
#include "sve/numerics.hpp"
#include "support/simplex_oracle.hpp"

using namespace sve;

namespace {

std::vector<double> seeded_logits(std::size_t d, std::uint64_t seed, double scale = 2.0) {
  Rng rng(seed);
  std::vector<double> z(d);
  for (double& v : z) v = scale * rng.normal();
  return z;
}

bool on_simplex(const std::vector<double>& p, double tol = 1e-9) {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

double rel_error(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace

TEST_CASE("softmax basics") {
  const auto uniform = softmax({0.0, 0.0, 0.0});
  for (double p : uniform) REQUIRE(p == Catch::Approx(1.0 / 3.0).margin(1e-12));

  const auto two = softmax({1.0, 0.0});
  const double e = std::exp(1.0);
  REQUIRE(two[0] == Catch::Approx(e / (e + 1.0)).margin(1e-12));
  REQUIRE(two[1] == Catch::Approx(1.0 / (e + 1.0)).margin(1e-12));

  // shift invariance
  const auto z = seeded_logits(6, 11);
  auto shifted = z;
  for (double& v : shifted) v += 17.5;
  const auto a = softmax(z);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("sparsemax matches the exhaustive projection oracle") {
  const auto half = sparsemax({0.0, 0.0});
  REQUIRE(half[0] == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(half[1] == Catch::Approx(0.5).margin(1e-12));

  const auto saturated = sparsemax({1.0, 0.0});
  REQUIRE(saturated[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(saturated[1] == Catch::Approx(0.0).margin(1e-12));

  const auto identity = sparsemax({0.6, 0.4, 0.0});
  REQUIRE(identity[0] == Catch::Approx(0.6).margin(1e-12));
  REQUIRE(identity[1] == Catch::Approx(0.4).margin(1e-12));
  REQUIRE(identity[2] == Catch::Approx(0.0).margin(1e-12));

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto z = seeded_logits(6, seed);
    const auto got = sparsemax(z);
    const auto want = oracle::simplex_projection(z);
    for (std::size_t i = 0; i < z.size(); ++i)
      REQUIRE(got[i] == Catch::Approx(want[i]).margin(1e-10));
  }
}

TEST_CASE("entmax limits: alpha 1 is softmax, alpha 2 is sparsemax") {
  for (std::size_t d : {2ul, 8ul, 64ul}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto z = seeded_logits(d, seed * 131 + d);
      const auto soft = softmax(z);
      const auto e1 = entmax(z, {1.0, false});
      const auto sparse = sparsemax(z);
      const auto e2 = entmax(z, {2.0, false});
      for (std::size_t i = 0; i < d; ++i) {
        REQUIRE(std::abs(e1[i] - soft[i]) <= 1e-6);
        REQUIRE(std::abs(e2[i] - sparse[i]) <= 1e-6);
      }
    }
  }
}

TEST_CASE("entmax saturates under a large margin") {
  const auto p = entmax({10.0, 0.0, 0.0}, {1.5, false});
  REQUIRE(std::abs(p[0] - 1.0) <= 1e-9);
  REQUIRE(p[1] == 0.0);
  REQUIRE(p[2] == 0.0);

  // the threshold-equation residual of the returned vector is tiny:
  // sum_j [(a-1)(z_j - tau)]_+^{1/(a-1)} = 1 at tau recovered from p[0]
  const double tau = 10.0 - std::pow(p[0], 0.5) / 0.5;
  double residual = 0.0;
  for (double zj : {10.0, 0.0, 0.0}) {
    const double base = 0.5 * (zj - tau);
    residual += base > 0.0 ? base * base : 0.0;
  }
  REQUIRE(std::abs(residual - 1.0) < 1e-9);
}

TEST_CASE("entmax output properties across the alpha range") {
  for (double alpha : {0.5, 0.9, 1.05, 1.3, 1.5, 2.0, 2.7}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto z = seeded_logits(7, seed + 1000 * static_cast<std::uint64_t>(alpha * 10));
      const auto p = entmax(z, {alpha, false});
      REQUIRE(on_simplex(p));

      // shift invariance
      auto shifted = z;
      for (double& v : shifted) v -= 3.25;
      const auto q = entmax(shifted, {alpha, false});
      for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(std::abs(p[i] - q[i]) <= 1e-9);

      // permutation equivariance (reverse order)
      auto reversed = z;
      std::reverse(reversed.begin(), reversed.end());
      const auto r = entmax(reversed, {alpha, false});
      for (std::size_t i = 0; i < p.size(); ++i)
        REQUIRE(r[i] == Catch::Approx(p[p.size() - 1 - i]).margin(1e-9));

      // dense for alpha <= 1
      if (alpha <= 1.0)
        for (double v : p) REQUIRE(v > 0.0);
    }
  }
}

TEST_CASE("entmax is continuous across the softmax branch") {
  const auto z = seeded_logits(8, 77);
  const auto soft = softmax(z);
  for (double alpha : {1.0 - 1e-6, 1.0 + 1e-6}) {
    const auto p = entmax(z, {alpha, false});
    for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(std::abs(p[i] - soft[i]) <= 1e-4);
  }
  // just outside the substitution band the exact solve is still close
  for (double alpha : {1.0 - 2e-4, 1.0 + 2e-4}) {
    const auto p = entmax(z, {alpha, false});
    for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(std::abs(p[i] - soft[i]) <= 1e-2);
  }
}

TEST_CASE("entmax rejects bad input") {
  REQUIRE_THROWS_AS(entmax({1.0, std::numeric_limits<double>::infinity()}, {1.5, false}),
                    std::domain_error);
  REQUIRE_THROWS_AS(entmax({1.0, 0.0}, {-0.5, false}), std::domain_error);
}

TEST_CASE("entmax_backward reduces to the softmax Jacobian at alpha 1") {
  const auto z = seeded_logits(5, 3);
  const auto p = entmax(z, {1.0, false});
  const auto upstream = seeded_logits(5, 4, 1.0);
  const auto grads = entmax_backward(z, p, {1.0, true}, upstream);
  // J u = p . u - p (p^T u)
  double pu = 0.0;
  for (std::size_t i = 0; i < 5; ++i) pu += p[i] * upstream[i];
  for (std::size_t i = 0; i < 5; ++i)
    REQUIRE(grads.grad_z[i] == Catch::Approx(p[i] * (upstream[i] - pu)).margin(1e-12));
  REQUIRE(grads.grad_alpha == 0.0);  // softmax branch: output constant in alpha
}

TEST_CASE("entmax_backward is zero on a saturated support") {
  const std::vector<double> z{5.0, 0.0, -1.0};
  const auto p = entmax(z, {2.0, false});
  REQUIRE(p[0] == Catch::Approx(1.0).margin(1e-12));
  const auto grads = entmax_backward(z, p, {2.0, true}, {1.0, 0.5, -0.25});
  for (double g : grads.grad_z) REQUIRE(g == 0.0);
  REQUIRE(grads.grad_alpha == 0.0);
}

TEST_CASE("entmax_backward matches finite differences") {
  const std::vector<double> upstream = seeded_logits(6, 5, 1.0);
  for (double alpha : {0.7, 0.9, 1.3, 1.5, 2.0}) {
    const auto z = seeded_logits(6, 21 + static_cast<std::uint64_t>(alpha * 100));
    const auto p = entmax(z, {alpha, false});
    const auto grads = entmax_backward(z, p, {alpha, true}, upstream);

    auto objective_z = [&](const std::vector<double>& zz) {
      const auto pp = entmax(zz, {alpha, false});
      double s = 0.0;
      for (std::size_t i = 0; i < pp.size(); ++i) s += pp[i] * upstream[i];
      return s;
    };
    const auto fd_z = finite_difference_gradient(objective_z, z, 1e-5);
    REQUIRE(rel_error(grads.grad_z, fd_z) <= 1e-4);

    auto objective_alpha = [&](const std::vector<double>& av) {
      const auto pp = entmax(z, {av[0], false});
      double s = 0.0;
      for (std::size_t i = 0; i < pp.size(); ++i) s += pp[i] * upstream[i];
      return s;
    };
    const auto fd_alpha = finite_difference_gradient(objective_alpha, {alpha}, 1e-5);
    REQUIRE(std::abs(grads.grad_alpha - fd_alpha[0]) <=
            1e-4 * std::max(std::abs(fd_alpha[0]), 1e-8));
  }
}

TEST_CASE("entmax_backward validates its probability input") {
  const auto z = seeded_logits(4, 6);
  std::vector<double> bad(4, 0.5);  // sums to 2
  REQUIRE_THROWS_AS(entmax_backward(z, bad, {1.5, false}, {1, 1, 1, 1}), std::invalid_argument);
}
