#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/quadrature.hpp"

namespace fvmps {

// Entanglement produced by an elastic two-wavepacket collision with an exactly
// quadratic phase shift phi(p, q) = phi2 * p * q. Everything depends on the
// single combination alpha = phi2 * delta_a * delta_b.
struct PhaseShiftModel {
  double phi2 = 0;
  double delta_a = 1;
  double delta_b = 1;

  double alpha() const { return phi2 * delta_a * delta_b; }

  void validate() const {
    require(delta_a > 0 && delta_b > 0, ErrorKind::Dimension,
            "PhaseShiftModel: momentum widths must be positive");
    require(std::isfinite(phi2), ErrorKind::Numeric, "PhaseShiftModel: phi2 must be finite");
  }
};

// tr rho_A^n from the product over Fourier modes.
inline double trace_rho_n(const PhaseShiftModel& m, int n) {
  m.validate();
  require(n >= 2, ErrorKind::Dimension, "trace_rho_n: n >= 2");
  const double a2 = m.alpha() * m.alpha();
  double prod = 1.0;
  for (int k = 1; k < n; ++k) {
    double s = std::sin(k * std::numbers::pi / n);
    prod *= 1.0 + 4.0 * a2 * s * s;
  }
  return 1.0 / std::sqrt(prod);
}

// Renyi entropy (bits) from the product form.
inline double renyi_entropy(const PhaseShiftModel& m, int n) {
  m.validate();
  require(n >= 2, ErrorKind::Dimension, "renyi_entropy: n >= 2");
  const double a2 = m.alpha() * m.alpha();
  double sum = 0.0;
  for (int k = 1; k < n; ++k) {
    double s = std::sin(k * std::numbers::pi / n);
    sum += std::log2(1.0 + 4.0 * a2 * s * s);
  }
  return sum / (2.0 * (n - 1));
}

// Same quantity through the Chebyshev-identity closed form; valid for real
// n > 1, which also provides the analytic continuation toward n -> 1.
inline double renyi_entropy_closed(const PhaseShiftModel& m, double n) {
  m.validate();
  require(n > 1.0, ErrorKind::Dimension, "renyi_entropy_closed: n > 1");
  const double a = std::abs(m.alpha());
  if (a == 0.0) return 0.0;
  const double b = std::acosh(1.0 + 1.0 / (2.0 * a * a));
  double num = 1.0 + 2.0 * n * std::log2(a) + std::log2(std::cosh(b * n) - 1.0);
  return num / (2.0 * (n - 1.0));
}

// Exact von Neumann entropy (bits); 0 at alpha = 0 by continuity.
inline double von_neumann_entropy(const PhaseShiftModel& m) {
  m.validate();
  const double a = std::abs(m.alpha());
  if (a == 0.0) return 0.0;
  const double b = std::acosh(1.0 + 1.0 / (2.0 * a * a));
  return std::log2(a) + 0.5 * b * std::sqrt(1.0 + 4.0 * a * a) * std::numbers::log2e;
}

inline double von_neumann_large_alpha(const PhaseShiftModel& m) {
  return std::log2(std::numbers::e * std::abs(m.alpha()));
}

struct QuadratureTrace {
  double value = 0;
  double error_estimate = 0;
  bool accuracy_warning = false;
};

// Brute-force 2n-dimensional Gauss-Hermite evaluation of the tr rho_A^n
// integral: n momenta for each particle, Gaussian weights, and the
// telescoping phase chain. Cost grows as grid^(2n); n is capped at 4.
inline QuadratureTrace trace_rho_n_numeric(const PhaseShiftModel& m, int n, int grid = 0) {
  m.validate();
  require(n >= 2 && n <= 4, ErrorKind::Dimension, "trace_rho_n_numeric: n in {2,3,4}");
  if (grid <= 0) grid = (n == 2) ? 32 : (n == 3) ? 20 : 10;

  auto eval = [&](int k_nodes) -> double {
    GaussHermite gh = gauss_hermite(k_nodes);
    // p_i = sqrt(2) * delta_a * x_i, q_i = sqrt(2) * delta_b * y_i, each
    // Gaussian carrying a 1/sqrt(pi) normalization.
    const double sa = std::sqrt(2.0) * m.delta_a;
    const double sb = std::sqrt(2.0) * m.delta_b;
    const int dims = 2 * n;
    std::vector<int> idx(static_cast<size_t>(dims), 0);
    const double norm = std::pow(std::numbers::pi, -n);
    double acc = 0.0;
    const long total = static_cast<long>(std::pow(static_cast<double>(k_nodes), dims));
    for (long it = 0; it < total; ++it) {
      double w = 1.0;
      for (int dct = 0; dct < dims; ++dct) w *= gh.weights[static_cast<size_t>(idx[static_cast<size_t>(dct)])];
      // phase chain: phi2 * sum_k q_k (p_k - p_{k+1}) with p indices cyclic
      double phase = 0.0;
      for (int k = 0; k < n; ++k) {
        double pk = sa * gh.nodes[static_cast<size_t>(idx[static_cast<size_t>(k)])];
        double pk1 = sa * gh.nodes[static_cast<size_t>(idx[static_cast<size_t>((k + 1) % n)])];
        double qk = sb * gh.nodes[static_cast<size_t>(idx[static_cast<size_t>(n + k)])];
        phase += qk * (pk - pk1);
      }
      acc += w * std::cos(m.phi2 * phase);
      for (int dct = dims - 1; dct >= 0; --dct) {
        auto du = static_cast<size_t>(dct);
        if (++idx[du] < k_nodes) break;
        idx[du] = 0;
      }
    }
    return acc * norm;
  };

  QuadratureTrace out;
  out.value = eval(grid);
  const int coarse = std::max(4, (3 * grid) / 4);
  double v_coarse = eval(coarse);
  out.error_estimate = std::abs(out.value - v_coarse);
  out.accuracy_warning = out.error_estimate > 5e-3 * std::max(1e-6, std::abs(out.value));
  return out;
}

}  // namespace fvmps
