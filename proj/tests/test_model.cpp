#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fvmps/model.hpp>
#include <fvmps/rng.hpp>

#include <numbers>

using namespace fvmps;

namespace {

// Energy of a classical Z-basis configuration under the full H on an open
// chain, summing the translation-invariant term over all placements.
double classical_energy(const LocalHamiltonian& ham, const std::vector<int>& spins) {
  const int r = ham.range;
  const int n = static_cast<int>(spins.size());
  Mat term = ham.term.matrix();
  double e = 0;
  for (int j = 0; j + r <= n; ++j) {
    long idx = 0;
    for (int k = 0; k < r; ++k) idx = idx * 2 + spins[j + k];
    e += std::real(term(idx, idx));
  }
  return e;
}

}  // namespace

TEST_CASE("magnetization operators follow the documented basis") {
  auto [z, x] = magnetization_ops();
  // Z|up> = +|up>
  CHECK(z.at({0, 0}) == cxd(1, 0));
  CHECK(z.at({1, 1}) == cxd(-1, 0));
  // X^2 = 1
  Tensor x2 = contract(x, x, {{1, 0}});
  CHECK(std::abs(x2.at({0, 0}) - cxd(1, 0)) < 1e-15);
  CHECK(std::abs(x2.at({0, 1})) < 1e-15);
  // tr(ZX) = 0
  Tensor zx = contract(z, x, {{1, 0}});
  CHECK(std::abs(zx.at({0, 0}) + zx.at({1, 1})) < 1e-15);
}

TEST_CASE("classical limits of the energy density") {
  // g=0, lambda=0, h=0: all-up density -1 per site (bulk term value)
  LocalHamiltonian h0 = build_hamiltonian({0.0, 0.0, 0.0});
  std::vector<int> up(10, 0);
  // interior sum over 9 bonds = -9; density per term = -1
  CHECK(classical_energy(h0, up) == doctest::Approx(-9.0));

  // h > 0 splits all-up vs all-down by 2h per site
  double hfield = 0.03;
  LocalHamiltonian hh = build_hamiltonian({0.0, hfield, 0.0});
  std::vector<int> down(10, 1);
  double e_up = classical_energy(hh, up) / 9.0;
  double e_dn = classical_energy(hh, down) / 9.0;
  CHECK(e_up == doctest::Approx(-1.0 - hfield).epsilon(1e-12));
  CHECK(e_dn == doctest::Approx(-1.0 + hfield).epsilon(1e-12));
  CHECK(e_dn - e_up == doctest::Approx(2 * hfield).epsilon(1e-12));
}

TEST_CASE("bare kink costs +2 above the vacuum at g=0, h=0") {
  LocalHamiltonian ham = build_hamiltonian({0.0, 0.0, 0.0});
  std::vector<int> vac(12, 0), kink(12, 0);
  for (int i = 6; i < 12; ++i) kink[i] = 1;
  CHECK(classical_energy(ham, kink) - classical_energy(ham, vac) == doctest::Approx(2.0));
}

TEST_CASE("hamiltonian term is Hermitian for random valid parameters") {
  Rng rng = make_rng(41);
  std::uniform_real_distribution<double> ug(0, 2), uh(-0.1, 0.1), ul(0, 0.42);
  for (int rep = 0; rep < 8; ++rep) {
    ModelParams p{ug(rng), uh(rng), ul(rng)};
    LocalHamiltonian ham = build_hamiltonian(p);
    Mat t = ham.term.matrix();
    CHECK((t - t.adjoint()).norm() < 1e-14 * std::max(1.0, t.norm()));
    CHECK(ham.range == (p.lambda == 0.0 ? 2 : 3));
  }
}

TEST_CASE("lambda term matches the printed operator form") {
  ModelParams p{0.0, 0.0, 0.3};
  LocalHamiltonian ham = build_hamiltonian(p);
  Tensor z = pauli_z(), x = pauli_x(), id = pauli_id();
  Tensor expected = (kron(kron(z, z), id) + kron(id, kron(z, z))).scaled(-0.5);
  expected = expected + kron(kron(x, z), z).scaled(0.3) + kron(kron(z, z), x).scaled(0.3);
  Mat diff = ham.term.matrix() - expected.matrix();
  CHECK(diff.norm() < 1e-14);
}

TEST_CASE("global spin flip commutes with the term at h=0") {
  for (double lambda : {0.0, 0.25}) {
    ModelParams p{0.7, 0.0, lambda};
    LocalHamiltonian ham = build_hamiltonian(p);
    int r = ham.range;
    Tensor flip = pauli_x();
    for (int k = 1; k < r; ++k) flip = kron(flip, pauli_x());
    Mat f = flip.matrix(), t = ham.term.matrix();
    CHECK((f * t - t * f).norm() < 1e-13);
  }
}

TEST_CASE("free-fermion oracle dispersion") {
  auto oracle = free_fermion_oracle(0.8);
  CHECK(oracle.kink_dispersion(0.0) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(oracle.kink_dispersion(std::numbers::pi) == doctest::Approx(3.6).epsilon(1e-12));
  auto crit = free_fermion_oracle(1.0);
  CHECK(crit.kink_dispersion(0.0) == doctest::Approx(0.0));
}

TEST_CASE("free-fermion vacuum density agrees with a 1e6-point Riemann sum") {
  double g = 0.8;
  auto oracle = free_fermion_oracle(g);
  const long n = 1000000;
  double sum = 0;
  for (long i = 0; i < n; ++i) {
    double k = -std::numbers::pi + (2 * std::numbers::pi) * (i + 0.5) / n;
    sum += std::sqrt(1 + g * g - 2 * g * std::cos(k));
  }
  double riemann = -sum / n;
  CHECK(oracle.vacuum_energy_density == doctest::Approx(riemann).epsilon(1e-10));
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(build_hamiltonian({-0.1, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(build_hamiltonian({0.5, 0.2, 0.0}), Error);
  CHECK_THROWS_AS(build_hamiltonian({0.5, 0.0, 0.5}), Error);
}
