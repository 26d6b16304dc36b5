#pragma once

#include <Eigen/Dense>
#include <complex>
#include <random>

namespace fvmps {

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Derive a stream for a named sub-task so independent solver invocations with
// the same run seed do not share draws.
inline Rng make_rng(uint64_t seed, uint64_t stream) {
  uint64_t mixed = stream ^ 0x9e3779b97f4a7c15ull;
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(mixed), static_cast<uint32_t>(mixed >> 32)};
  return Rng(seq);
}

inline std::complex<double> random_unit_complex(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {n(rng), n(rng)};
}

inline Eigen::VectorXcd random_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = std::complex<double>(d(rng), d(rng));
  return v;
}

inline Eigen::MatrixXcd random_real_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = std::complex<double>(d(rng), 0.0);
  return m;
}

inline Eigen::MatrixXcd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = std::complex<double>(d(rng), d(rng));
  return m;
}

}  // namespace fvmps
