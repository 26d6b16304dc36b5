#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <vector>

#include "fvmps/errors.hpp"

namespace fvmps {

namespace detail {

// 15-point Gauss-Kronrod with embedded 7-point Gauss rule on [-1, 1].
inline const double kKronrodNodes[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769, -0.741531185599394,
    -0.586087235467691, -0.405845151377397, -0.207784955007898, 0.0,
    0.207784955007898,  0.405845151377397,  0.586087235467691,  0.741531185599394,
    0.864864423359769,  0.949107912342759,  0.991455371120813};
inline const double kKronrodWeights[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
inline const double kGaussWeights[7] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
    0.381830050505119, 0.279705391489277, 0.129484966168870};

struct PanelResult {
  double value;
  double error;
};

inline PanelResult gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double kron = 0, gauss = 0;
  for (int i = 0; i < 15; ++i) {
    double fx = f(c + h * kKronrodNodes[i]);
    kron += kKronrodWeights[i] * fx;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * fx;
  }
  return {kron * h, std::abs(kron - gauss) * std::abs(h)};
}

inline double adapt(const std::function<double(double)>& f, double a, double b, double tol,
                    int depth) {
  auto r = gk15(f, a, b);
  if (r.error <= tol || depth > 48) return r.value;
  double m = 0.5 * (a + b);
  return adapt(f, a, m, tol / 2, depth + 1) + adapt(f, m, b, tol / 2, depth + 1);
}

}  // namespace detail

// Adaptive Gauss-Kronrod quadrature to an absolute tolerance.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double abs_tol = 1e-12) {
  return detail::adapt(f, a, b, abs_tol, 0);
}

struct GaussHermite {
  std::vector<double> nodes;    // roots of H_n
  std::vector<double> weights;  // for ∫ e^{-x^2} f(x) dx ≈ Σ w_i f(x_i)
};

// Golub-Welsch on the Hermite Jacobi matrix.
inline GaussHermite gauss_hermite(int n) {
  require(n >= 1, ErrorKind::Dimension, "gauss_hermite: need n >= 1");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = std::sqrt(i / 2.0);
    j(i, i - 1) = j(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  GaussHermite out;
  out.nodes.resize(static_cast<size_t>(n));
  out.weights.resize(static_cast<size_t>(n));
  const double mu0 = std::sqrt(std::acos(-1.0));  // ∫ e^{-x^2} dx
  for (int i = 0; i < n; ++i) {
    out.nodes[static_cast<size_t>(i)] = es.eigenvalues()(i);
    double v0 = es.eigenvectors()(0, i);
    out.weights[static_cast<size_t>(i)] = mu0 * v0 * v0;
  }
  return out;
}

}  // namespace fvmps
