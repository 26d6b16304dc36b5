#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fvmps/snapshot.hpp>
#include <fvmps/window.hpp>

#include "support/oracles.hpp"

using namespace fvmps;

namespace {

UniformImps product_bulk(double up_amp, double down_amp) {
  Site s(2, 1, 1);
  s.m[0](0, 0) = up_amp;
  s.m[1](0, 0) = down_amp;
  return canonicalize(s);
}

// Random window with product bulks and a varying bond-dimension profile.
WindowMps random_window(uint64_t seed, const std::vector<long>& bonds) {
  Rng rng = make_rng(seed);
  WindowMps s;
  s.left_bulk = product_bulk(1.0, 0.2);
  s.right_bulk = product_bulk(1.0, -0.15);
  for (size_t i = 0; i + 1 < bonds.size(); ++i)
    s.w.push_back(Site::random(rng, 2, bonds[i], bonds[i + 1]));
  s.check_bonds();
  normalize_window(s);
  return s;
}

}  // namespace

TEST_CASE("window norm matches the exact vector") {
  auto s = random_window(201, {1, 2, 4, 3, 4, 2, 1});
  Vec psi = test::window_to_vector(s);
  CHECK(window_norm2(s) == doctest::Approx(psi.squaredNorm()).epsilon(1e-10));
  CHECK(window_norm2(s) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("product window has zero cut entropy and Schmidt spectrum (1)") {
  WindowMps s;
  s.left_bulk = product_bulk(1.0, 0.0);
  s.right_bulk = product_bulk(1.0, 0.0);
  for (int i = 0; i < 4; ++i) {
    Site site(2, 1, 1);
    site.m[0](0, 0) = 1.0;
    s.w.push_back(site);
  }
  for (long b = 0; b <= 4; ++b) {
    CHECK(cut_entropy(s, b) == doctest::Approx(0.0));
    auto sc = schmidt_spectrum(s, b);
    REQUIRE(sc.size() == 1);
    CHECK(sc(0) == doctest::Approx(1.0));
  }
}

TEST_CASE("maximally entangled bond carries exactly one bit") {
  // Two sites, bond dimension 2: |00> + |11> (normalized).
  WindowMps s;
  s.left_bulk = product_bulk(1.0, 0.0);
  s.right_bulk = product_bulk(1.0, 0.0);
  Site a(2, 1, 2), b(2, 2, 1);
  a.m[0](0, 0) = 1.0;
  a.m[1](0, 1) = 1.0;
  b.m[0](0, 0) = 1.0;
  b.m[1](1, 0) = 1.0;
  s.w = {a, b};
  normalize_window(s);
  CHECK(cut_entropy(s, 1) == doctest::Approx(1.0).epsilon(1e-12));
  auto sc = schmidt_spectrum(s, 1);
  CHECK(sc(0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(sc(1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("random window: entropies and Schmidt spectra match the exact-vector oracle") {
  auto s = random_window(202, {1, 2, 4, 4, 3, 2, 1});
  Vec psi = test::window_to_vector(s);
  for (long b = 1; b < s.n(); ++b) {
    double se = cut_entropy(s, b);
    double so = test::vector_cut_entropy(psi, b);
    CHECK(se == doctest::Approx(so).epsilon(1e-9));
    CHECK(se <= std::log2(static_cast<double>(s.bond_dim(b))) + 1e-12);
    auto sc = schmidt_spectrum(s, b);
    auto sv = test::vector_schmidt(psi, b);
    for (long i = 0; i < std::min<long>(sc.size(), sv.size()); ++i)
      CHECK(sc(i) == doctest::Approx(sv(i)).epsilon(1e-8));
  }
}

TEST_CASE("renyi-2 cut entropy from Schmidt coefficients") {
  auto s = random_window(203, {1, 2, 3, 2, 1});
  Vec psi = test::window_to_vector(s);
  auto sv = test::vector_schmidt(psi, 2);
  double p2 = 0;
  for (long i = 0; i < sv.size(); ++i) p2 += std::pow(sv(i) * sv(i), 2);
  CHECK(cut_entropy(s, 2, 2.0) == doctest::Approx(-std::log2(p2)).epsilon(1e-9));
}

TEST_CASE("expect_local_window matches the oracle inside, bulk outside") {
  auto s = random_window(204, {1, 3, 4, 2, 1});
  long margin = 2;
  Vec psi = test::window_to_vector(s, margin);
  Mat z = pauli_z().matrix();
  long total = s.n() + 2 * margin;
  for (long j = 1 - margin; j <= s.n() + margin; ++j) {
    double got = std::real(expect_local_window(s, pauli_z(), 1, j));
    double expect = test::vector_expect_site(psi, z, j - 1 + margin, total);
    CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  }
  // far outside the window: exact bulk value
  double bulk = std::real(expect_local_uniform(s.left_bulk, pauli_z(), 1));
  CHECK(std::real(expect_local_window(s, pauli_z(), 1, -50)) == doctest::Approx(bulk));
}

TEST_CASE("window MPO energy matches the exact-vector oracle") {
  for (ModelParams p : {ModelParams{0.6, 0.02, 0.0}, ModelParams{0.7, 0.01, 0.2}}) {
    Rng rng = make_rng(205);
    WindowMps s;
    s.left_bulk = product_bulk(1.0, 0.2);
    s.right_bulk = s.left_bulk;  // equal bulks keep the reference subtraction unambiguous
    std::vector<long> bonds{1, 2, 4, 3, 2, 1};
    for (size_t i = 0; i + 1 < bonds.size(); ++i)
      s.w.push_back(Site::random(rng, 2, bonds[i], bonds[i + 1]));
    normalize_window(s);
    LocalHamiltonian ham = build_hamiltonian(p);
    const int r = ham.range;
    double shift = std::real(expect_local_uniform(s.left_bulk, ham.term, r));

    Mpo w = hamiltonian_mpo(p, shift);
    auto lfp = mpo_left_fixed_point(w, s.left_bulk.AL, s.left_bulk.r_env());
    auto rfp = mpo_right_fixed_point(w, s.right_bulk.AR, s.right_bulk.l_env());
    auto lenvs = window_left_mpo_envs(w, s, lfp.env);
    auto renvs = window_right_mpo_envs(w, s, rfp.env);
    double offset = mpo_junction_energy(lfp.env, rfp.env);
    double e_machinery = window_energy(lenvs, renvs, s.n() / 2, window_norm2(s), offset);

    // A window filled with the bulk tensor itself must sit at zero.
    WindowMps ref = s;
    for (long i = 1; i <= ref.n(); ++i) {
      Site b(2, 1, 1);
      b.m[0] = ref.left_bulk.AL.m[0];
      b.m[1] = ref.left_bulk.AL.m[1];
      ref.site_mut(i) = b;
    }
    auto lref = window_left_mpo_envs(w, ref, lfp.env);
    auto rref = window_right_mpo_envs(w, ref, rfp.env);
    double e_ref = window_energy(lref, rref, 0, window_norm2(ref), offset);
    CHECK(std::abs(e_ref) < 1e-9);

    // Oracle difference: boundary accounting constants cancel between the
    // window state and the bulk-filled reference.
    long margin = r + 2;
    Vec psi = test::window_to_vector(s, margin);
    Vec psi_ref = test::window_to_vector(ref, margin);
    long total = s.n() + 2 * margin;
    double e_exact = test::vector_energy(psi, ham, total, 0, total - r, shift) -
                     test::vector_energy(psi_ref, ham, total, 0, total - r, shift);
    CHECK(e_machinery == doctest::Approx(e_exact).epsilon(1e-8));

    // Energy is bond-independent
    double e2 = window_energy(lenvs, renvs, 0, window_norm2(s), offset);
    CHECK(e2 == doctest::Approx(e_machinery).epsilon(1e-9));
  }
}

TEST_CASE("snapshot round trip preserves window states bit-for-bit") {
  auto s = random_window(206, {1, 2, 3, 2, 1});
  Snapshot snap;
  snap.meta["t"] = 1.25;
  snapshot_put_window(snap, s);
  std::string path = "/tmp/fvmps_test_window.fvsnap";
  snap.save(path);
  Snapshot loaded = Snapshot::load(path);
  WindowMps s2 = snapshot_get_window(loaded);
  CHECK(loaded.meta.at("t").get<double>() == 1.25);
  REQUIRE(s2.n() == s.n());
  for (long i = 1; i <= s.n(); ++i)
    for (long ph = 0; ph < 2; ++ph)
      CHECK((s2.site(i).m[ph] - s.site(i).m[ph]).norm() == 0.0);
  CHECK((s2.left_bulk.c - s.left_bulk.c).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("un-normalized window raises consistency error in schmidt_spectrum") {
  auto s = random_window(207, {1, 2, 2, 1});
  s.w[0].m[0] *= 3.0;  // break normalization
  CHECK_THROWS_AS(schmidt_spectrum(s, 1), Error);
}
