#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "fvmps/errors.hpp"

namespace fvmps {

namespace detail {

inline bool is_pow2(size_t n) { return n && !(n & (n - 1)); }

// In-place iterative radix-2 Cooley-Tukey. sign = -1: forward convention
// X_k = sum_j x_j exp(sign * 2πi jk / n).
inline void fft_pow2(std::vector<std::complex<double>>& a, int sign) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

}  // namespace detail

// Forward DFT (X_k = Σ_j x_j e^{-2πi jk/n}) for any length via Bluestein.
inline std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x, int sign = -1) {
  const size_t n = x.size();
  if (n <= 1) return x;
  if (detail::is_pow2(n)) {
    detail::fft_pow2(x, sign);
    return x;
  }
  // Bluestein: convolution with a chirp, done at the next power of two.
  size_t m = 1;
  while (m < 2 * n + 1) m <<= 1;
  std::vector<std::complex<double>> a(m, {0, 0}), b(m, {0, 0}), chirp(n);
  for (size_t j = 0; j < n; ++j) {
    double ang = sign * std::numbers::pi * static_cast<double>((j * j) % (2 * n)) / static_cast<double>(n);
    chirp[j] = {std::cos(ang), std::sin(ang)};
    a[j] = x[j] * chirp[j];
    b[j] = std::conj(chirp[j]);
    if (j != 0) b[m - j] = std::conj(chirp[j]);
  }
  detail::fft_pow2(a, -1);
  detail::fft_pow2(b, -1);
  for (size_t j = 0; j < m; ++j) a[j] *= b[j];
  detail::fft_pow2(a, +1);
  for (size_t j = 0; j < m; ++j) a[j] /= static_cast<double>(m);
  std::vector<std::complex<double>> out(n);
  for (size_t j = 0; j < n; ++j) out[j] = a[j] * chirp[j];
  return out;
}

inline std::vector<std::complex<double>> ifft(std::vector<std::complex<double>> x) {
  const size_t n = x.size();
  auto y = fft(std::move(x), +1);
  for (auto& z : y) z /= static_cast<double>(n);
  return y;
}

// O(n^2) reference transform; the production FFT is cross-checked against it.
inline std::vector<std::complex<double>> dft_direct(const std::vector<std::complex<double>>& x,
                                                    int sign = -1) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n, {0, 0});
  for (size_t k = 0; k < n; ++k)
    for (size_t j = 0; j < n; ++j) {
      double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n);
      out[k] += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
  return out;
}

}  // namespace fvmps
