#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fvmps/elastic.hpp>

#include <numbers>

using namespace fvmps;

namespace {
PhaseShiftModel model_with_alpha(double alpha) { return PhaseShiftModel{alpha, 1.0, 1.0}; }
}  // namespace

TEST_CASE("alpha = 0: no phase shift, no entanglement") {
  auto m = model_with_alpha(0.0);
  for (int n = 2; n <= 6; ++n) CHECK(renyi_entropy(m, n) == doctest::Approx(0.0));
  CHECK(von_neumann_entropy(m) == doctest::Approx(0.0));
  CHECK(trace_rho_n(m, 2) == doctest::Approx(1.0));
  auto q = trace_rho_n_numeric(m, 2);
  CHECK(q.value == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("S2 at alpha = 1 equals half log2(5)") {
  auto m = model_with_alpha(1.0);
  CHECK(renyi_entropy(m, 2) == doctest::Approx(0.5 * std::log2(5.0)).epsilon(1e-14));
}

TEST_CASE("closed form equals product form to 1e-12 for n <= 8") {
  for (double alpha : {0.3, 0.5, 1.0, 2.0, 4.0, 17.0}) {
    auto m = model_with_alpha(alpha);
    for (int n = 2; n <= 8; ++n) {
      CHECK(renyi_entropy_closed(m, n) ==
            doctest::Approx(renyi_entropy(m, n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("quadrature oracle matches the closed form for n in {2,3}, alpha in {0.5,1,2}") {
  for (double alpha : {0.5, 1.0, 2.0}) {
    auto m = model_with_alpha(alpha);
    for (int n : {2, 3}) {
      auto q = trace_rho_n_numeric(m, n);
      double exact = trace_rho_n(m, n);
      CHECK(std::abs(q.value - exact) <= std::max(5.0 * q.error_estimate, 1e-8));
    }
  }
}

TEST_CASE("n=2, alpha=1 quadrature matches 5^{-1/2}") {
  auto q = trace_rho_n_numeric(model_with_alpha(1.0), 2);
  CHECK(q.value == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-6));
}

TEST_CASE("large alpha: tr rho^2 approaches 1/(2 alpha)") {
  auto m = model_with_alpha(10.0);
  CHECK(trace_rho_n(m, 2) == doctest::Approx(1.0 / 20.0).epsilon(0.01));
}

TEST_CASE("von Neumann asymptote log2(e alpha) at alpha = 100") {
  auto m = model_with_alpha(100.0);
  CHECK(std::abs(von_neumann_entropy(m) - von_neumann_large_alpha(m)) < 1e-3);
}

TEST_CASE("n -> 1 limit of the closed form reproduces the von Neumann entropy") {
  auto m = model_with_alpha(1.0);
  // Richardson extrapolation of S(1 + eps) over shrinking eps
  double eps = 0.5;
  double prev = renyi_entropy_closed(m, 1 + eps);
  double extrap = prev;
  for (int it = 0; it < 20; ++it) {
    eps /= 2;
    double cur = renyi_entropy_closed(m, 1 + eps);
    extrap = 2 * cur - prev;  // first-order Richardson in eps
    prev = cur;
  }
  CHECK(std::abs(extrap - von_neumann_entropy(m)) < 1e-6);
}

TEST_CASE("Renyi entropies are nonincreasing in n") {
  for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
    auto m = model_with_alpha(alpha);
    double prev = renyi_entropy(m, 2);
    for (int n = 3; n <= 6; ++n) {
      double cur = renyi_entropy(m, n);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("S_n depends on |alpha| only") {
  for (int n = 2; n <= 5; ++n) {
    CHECK(renyi_entropy(model_with_alpha(1.7), n) ==
          doctest::Approx(renyi_entropy(model_with_alpha(-1.7), n)).epsilon(1e-14));
  }
}

TEST_CASE("invalid widths are rejected") {
  PhaseShiftModel m{1.0, 0.0, 1.0};
  CHECK_THROWS_AS(renyi_entropy(m, 2), Error);
}
