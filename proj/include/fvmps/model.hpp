#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include "fvmps/errors.hpp"
#include "fvmps/quadrature.hpp"
#include "fvmps/tensor.hpp"

namespace fvmps {

// H = sum_j [ -Z_j Z_{j+1} - g X_j - h Z_j
//             + lambda (X_j Z_{j+1} Z_{j+2} + Z_j Z_{j+1} X_{j+2}) ]
// Basis convention: index 0 = up, Z|up> = +|up>.
struct ModelParams {
  double g = 0;
  double h = 0;
  double lambda = 0;

  void validate() const {
    require(std::isfinite(g) && std::isfinite(h) && std::isfinite(lambda), ErrorKind::Numeric,
            "model parameters must be finite");
    require(g >= 0.0 && g <= 2.0, ErrorKind::Config, "g outside supported range [0, 2]");
    require(std::abs(h) <= 0.1, ErrorKind::Config, "|h| outside supported range [0, 0.1]");
    require(lambda >= 0.0 && lambda < 0.428, ErrorKind::Config,
            "lambda outside supported range [0, 0.428)");
  }

  int range() const { return lambda == 0.0 ? 2 : 3; }

  bool operator==(const ModelParams&) const = default;
};

inline Tensor pauli_z() { return Tensor({2, 2}, {1, 0, 0, -1}); }
inline Tensor pauli_x() { return Tensor({2, 2}, {0, 1, 1, 0}); }
inline Tensor pauli_id() { return Tensor::identity(2); }

// (Z, X) in the documented basis ordering.
inline std::pair<Tensor, Tensor> magnetization_ops() { return {pauli_z(), pauli_x()}; }

// Translation-invariant r-site term. Single-site fields are split evenly over
// the r windows covering a site and two-site bonds over the r-1 windows, so
// the per-site sum reproduces H exactly in the bulk.
struct LocalHamiltonian {
  int range = 2;
  Tensor term;  // (2^r) x (2^r) matrix

  long local_dim() const { return term.extent(0); }
};

inline LocalHamiltonian build_hamiltonian(const ModelParams& p) {
  p.validate();
  const Tensor z = pauli_z(), x = pauli_x(), id = pauli_id();
  LocalHamiltonian out;
  out.range = p.range();
  if (out.range == 2) {
    Tensor t = kron(z, z).scaled(-1.0);
    t = t + (kron(x, id) + kron(id, x)).scaled(-p.g / 2.0);
    t = t + (kron(z, id) + kron(id, z)).scaled(-p.h / 2.0);
    out.term = t;
  } else {
    Tensor zz1 = kron(kron(z, z), id), one_zz = kron(id, kron(z, z));
    Tensor t = (zz1 + one_zz).scaled(-0.5);
    Tensor x1 = kron(kron(x, id), id), x2 = kron(kron(id, x), id), x3 = kron(id, kron(id, x));
    t = t + (x1 + x2 + x3).scaled(-p.g / 3.0);
    Tensor z1 = kron(kron(z, id), id), z2 = kron(kron(id, z), id), z3 = kron(id, kron(id, z));
    t = t + (z1 + z2 + z3).scaled(-p.h / 3.0);
    t = t + kron(kron(x, z), z).scaled(p.lambda);
    t = t + kron(kron(z, z), x).scaled(p.lambda);
    out.term = t;
  }
  return out;
}

struct FreeFermionOracle {
  double vacuum_energy_density = 0;
  std::function<double(double)> kink_dispersion;       // E(p)
  std::function<double(double)> kink_group_velocity;   // dE/dp
};

// Exact Jordan-Wigner solution of the lambda = 0, h = 0 chain.
inline FreeFermionOracle free_fermion_oracle(double g) {
  require(g > 0, ErrorKind::Config, "free_fermion_oracle: need g > 0");
  FreeFermionOracle out;
  auto eps = [g](double k) { return 2.0 * std::sqrt(1.0 + g * g - 2.0 * g * std::cos(k)); };
  out.kink_dispersion = eps;
  out.kink_group_velocity = [g, eps](double p) {
    double e = eps(p);
    if (e == 0.0) return 0.0;
    return 4.0 * g * std::sin(p) / e;
  };
  // e0 = -(1/2π) ∫ sqrt(1 + g² - 2g cos k) dk = -(1/2π) ∫ ε(k)/2 dk
  out.vacuum_energy_density =
      -integrate([&](double k) { return eps(k) / 2.0; }, -std::numbers::pi, std::numbers::pi,
                 1e-13) /
      (2.0 * std::numbers::pi);
  return out;
}

}  // namespace fvmps
