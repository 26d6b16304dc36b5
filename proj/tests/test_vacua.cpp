#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fvmps/vacua.hpp>

using namespace fvmps;

TEST_CASE("classical limit: D=1, g=0 gives the aligned product state") {
  ModelParams p{0.0, 0.01, 0.0};
  auto sol = find_true_vacuum(p, 1, 1e-11);
  CHECK(sol.energy == doctest::Approx(-1.0 - p.h).epsilon(1e-10));
  CHECK(std::real(expect_local_uniform(sol.state, pauli_z(), 1)) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("free Ising vacuum at moderate bond dimension matches the oracle") {
  ModelParams p{0.8, 0.0, 0.0};
  auto oracle = free_fermion_oracle(p.g);
  auto sol = find_true_vacuum(p, 8, 1e-9);
  // D=8 already gives a very accurate vacuum at g=0.8
  CHECK(std::abs(sol.energy - oracle.vacuum_energy_density) < 1e-6);
  CHECK(sol.grad_norm <= 1e-9);
  // spontaneous symmetry breaking: the up-tilted start selects <Z> > 0
  CHECK(std::real(expect_local_uniform(sol.state, pauli_z(), 1)) > 0.5);
}

TEST_CASE("false vacuum in the classical limit splits by exactly 2h") {
  ModelParams p{0.0, 0.01, 0.0};
  auto pair = solve_vacuum_pair(p, 1, 1e-11);
  CHECK(pair.e_false - pair.e_true == doctest::Approx(2 * p.h).epsilon(1e-9));
  CHECK(std::real(expect_local_uniform(pair.false_vac, pauli_z(), 1)) ==
        doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("h=0: flipped vacuum is degenerate to 1e-10") {
  ModelParams p{0.8, 0.0, 0.0};
  auto t = find_true_vacuum(p, 6, 1e-10);
  auto f = find_false_vacuum(t.state, p, 1e-10);
  CHECK(std::abs(f.energy - t.energy) < 1e-10);
}

TEST_CASE("metastable false vacuum at Ising point (i): flipped magnetization") {
  ModelParams p{0.8, 0.007, 0.0};
  auto pair = solve_vacuum_pair(p, 6, 1e-9);
  double z_true = std::real(expect_local_uniform(pair.true_vac, pauli_z(), 1));
  double z_false = std::real(expect_local_uniform(pair.false_vac, pauli_z(), 1));
  CHECK(z_true > 0.5);
  CHECK(z_false < -0.5);
  // bare-limit heuristic: splitting ~ 2 h |<Z>| within 20%
  double split = pair.e_false - pair.e_true;
  CHECK(split == doctest::Approx(2 * p.h * std::abs(z_true)).epsilon(0.2));
}

TEST_CASE("true and false vacua are exponentially orthogonal per site") {
  ModelParams p{0.8, 0.007, 0.0};
  auto pair = solve_vacuum_pair(p, 8, 1e-9);
  CHECK(overlap_per_site(pair.true_vac, pair.false_vac) < 1.0 - 1e-6);
}

TEST_CASE("metastability: random tangent perturbations do not lower the energy") {
  ModelParams p{0.8, 0.007, 0.0};
  auto pair = solve_vacuum_pair(p, 4, 1e-9);
  LocalHamiltonian ham = build_hamiltonian(p);
  double e0 = energy_density(pair.false_vac, ham);
  Rng rng = make_rng(777);
  auto v = left_null_space(pair.false_vac.AL, Mat::Identity(4, 4));
  for (int rep = 0; rep < 20; ++rep) {
    Mat coords = random_matrix(rng, v[0].cols(), 4);
    coords /= coords.norm();
    const double eps = 1e-4;
    Site ac = pair.false_vac.ac();
    Site perturbed = ac;
    for (long s = 0; s < 2; ++s) perturbed.m[static_cast<size_t>(s)] += eps * (v[static_cast<size_t>(s)] * coords);
    auto u2 = canonicalize(perturbed);
    double e2 = energy_density(u2, ham);
    CHECK(e2 - e0 >= -1e-8);  // second-order increase up to numerical floor
  }
}
