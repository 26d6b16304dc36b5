#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/rng.hpp"
#include "fvmps/tensor.hpp"

namespace fvmps {

// Matrix-free linear operator. Transfer matrices are D^2 x D^2 and are never
// densified; everything downstream talks to them through this interface.
struct LinearMap {
  Eigen::Index dim = 0;
  std::function<void(const Vec&, Vec&)> apply;

  Vec operator()(const Vec& x) const {
    Vec y(dim);
    apply(x, y);
    return y;
  }
};

struct EigPair {
  cxd value;
  Vec vector;
  double residual = 0;
};

namespace detail {

// Krylov basis with modified Gram-Schmidt and a second orthogonalization pass.
inline void orthogonalize(const std::vector<Vec>& basis, Vec& w) {
  for (int pass = 0; pass < 2; ++pass)
    for (const Vec& v : basis) w -= v * v.dot(w);
}

}  // namespace detail

// Arnoldi iteration returning the k largest-magnitude eigenpairs.
// Residuals are explicit (‖A v − λ v‖ with v normalized).
inline std::vector<EigPair> arnoldi_top(const LinearMap& map, int k, double tol, int max_iter,
                                        uint64_t seed = 7) {
  const Eigen::Index n = map.dim;
  require(n >= 1, ErrorKind::Dimension, "arnoldi: empty map");
  if (n == 1) {
    Vec e(1);
    e(0) = 1.0;
    Vec y = map(e);
    return {{y(0), e, 0.0}};
  }
  k = static_cast<int>(std::min<Eigen::Index>(k, n));
  const int m = static_cast<int>(std::min<Eigen::Index>(n, std::max(2 * k + 12, 30)));

  Rng rng = make_rng(seed, 0x41524e4f);
  Vec start = random_vector(rng, n).normalized();

  std::vector<EigPair> best;
  double best_res = std::numeric_limits<double>::infinity();
  const int cycles = std::max(1, max_iter / m);

  for (int cycle = 0; cycle < cycles; ++cycle) {
    std::vector<Vec> v;
    v.reserve(static_cast<size_t>(m) + 1);
    v.push_back(start.normalized());
    Mat h = Mat::Zero(m + 1, m);
    int built = 0;
    for (int j = 0; j < m; ++j) {
      Vec w = map(v[static_cast<size_t>(j)]);
      for (int i = 0; i <= j; ++i) {
        cxd hij = v[static_cast<size_t>(i)].dot(w);
        h(i, j) = hij;
        w -= hij * v[static_cast<size_t>(i)];
      }
      // reorthogonalization pass
      for (int i = 0; i <= j; ++i) {
        cxd c = v[static_cast<size_t>(i)].dot(w);
        h(i, j) += c;
        w -= c * v[static_cast<size_t>(i)];
      }
      double wn = w.norm();
      h(j + 1, j) = wn;
      built = j + 1;
      if (wn < 1e-14) break;  // invariant subspace found
      v.push_back(w / wn);
    }

    Mat hm = h.topLeftCorner(built, built);
    Eigen::ComplexEigenSolver<Mat> es(hm);
    std::vector<int> order(static_cast<size_t>(built));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()(a)) > std::abs(es.eigenvalues()(b));
    });

    std::vector<EigPair> ritz;
    for (int idx = 0; idx < std::min(k, built); ++idx) {
      int col = order[static_cast<size_t>(idx)];
      Vec y = es.eigenvectors().col(col);
      Vec x = Vec::Zero(n);
      for (int i = 0; i < built; ++i) x += y(i) * v[static_cast<size_t>(i)];
      x.normalize();
      cxd lam = es.eigenvalues()(col);
      double res = (map(x) - lam * x).norm();
      ritz.push_back({lam, x, res});
    }

    if (!ritz.empty() && ritz[0].residual < best_res) {
      best = ritz;
      best_res = ritz[0].residual;
    }

    bool done = !ritz.empty();
    for (int idx = 0; idx < std::min<int>(k, static_cast<int>(ritz.size())); ++idx)
      done = done && ritz[static_cast<size_t>(idx)].residual <=
                         tol * std::max(1.0, std::abs(ritz[0].value));
    if (done) return ritz;

    // Restart from the span of the wanted Ritz vectors.
    start = Vec::Zero(n);
    for (const auto& r : ritz) start += r.vector;
    if (start.norm() < 1e-14) start = random_vector(rng, n);
  }
  if (best.empty() || best_res > tol * std::max(1.0, std::abs(best[0].value)) * 1e3)
    throw ConvergenceError("arnoldi did not converge", best_res);
  return best;
}

// Dominant (largest-magnitude) eigenpair. A degenerate dominant magnitude is
// reported as an error instead of silently picking one member of the pair.
inline EigPair dominant_eigenpair(const LinearMap& map, double tol, int max_iter,
                                  uint64_t seed = 7) {
  require(map.dim >= 1, ErrorKind::Dimension, "dominant_eigenpair: empty map");
  int k = map.dim >= 2 ? 2 : 1;
  auto pairs = arnoldi_top(map, k, tol, max_iter, seed);
  const EigPair& top = pairs[0];
  if (top.residual > tol * std::max(1.0, std::abs(top.value)))
    throw ConvergenceError("dominant_eigenpair residual above tolerance", top.residual);
  if (pairs.size() >= 2) {
    const EigPair& second = pairs[1];
    double gap = std::abs(top.value) - std::abs(second.value);
    bool second_credible = second.residual <= 1e-3 * std::max(1.0, std::abs(top.value));
    if (second_credible && gap <= 1e-8 * std::abs(top.value))
      throw Error(ErrorKind::IllConditioned,
                  "dominant eigenvalue magnitude is degenerate; no canonical choice");
  }
  return top;
}

namespace detail {

struct RitzPair {
  double value;
  Vec vector;
  double residual;
};

// One Lanczos cycle (full reorthogonalization) on the map deflated against
// `locked`. Returns Ritz pairs sorted ascending with explicit residuals.
inline std::vector<RitzPair> lanczos_cycle(const LinearMap& map, const std::vector<Vec>& locked,
                                           Vec v0, int m, int n_ritz) {
  const Eigen::Index n = map.dim;
  orthogonalize(locked, v0);
  if (v0.norm() < 1e-12) return {};
  v0.normalize();

  std::vector<Vec> v{v0};
  std::vector<double> alpha, beta;
  for (int j = 0; j < m; ++j) {
    Vec w = map(v[static_cast<size_t>(j)]);
    orthogonalize(locked, w);
    double a = std::real(v[static_cast<size_t>(j)].dot(w));
    alpha.push_back(a);
    w -= a * v[static_cast<size_t>(j)];
    if (j > 0) w -= beta[static_cast<size_t>(j - 1)] * v[static_cast<size_t>(j - 1)];
    orthogonalize(v, w);
    double b = w.norm();
    if (b < 1e-14 || j + 1 >= m) break;
    beta.push_back(b);
    v.push_back(w / b);
  }

  const int built = static_cast<int>(alpha.size());
  if (built == 0) return {};
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(built, built);
  for (int i = 0; i < built; ++i) {
    t(i, i) = alpha[static_cast<size_t>(i)];
    if (i + 1 < built) t(i, i + 1) = t(i + 1, i) = beta[static_cast<size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);

  std::vector<RitzPair> out;
  for (int idx = 0; idx < std::min(built, n_ritz); ++idx) {
    Eigen::VectorXd y = es.eigenvectors().col(idx);
    Vec x = Vec::Zero(n);
    for (int i = 0; i < static_cast<int>(v.size()); ++i) x += y(i) * v[static_cast<size_t>(i)];
    orthogonalize(locked, x);
    if (x.norm() < 1e-10) continue;
    x.normalize();
    double lam = std::real(x.dot(map(x)));
    double res = (map(x) - lam * x).norm();
    out.push_back({lam, x, res});
  }
  return out;
}

}  // namespace detail

// Lowest k eigenpairs of a Hermitian map via Lanczos with locking restarts.
// A deflated verification cycle guards against missing degenerate copies
// (a single Krylov space only ever contains one copy of each eigenvalue).
inline std::vector<std::pair<double, Vec>> lowest_eigenpairs_hermitian(
    const LinearMap& map, int k, double tol, int max_iter = 4000, uint64_t seed = 11) {
  const Eigen::Index n = map.dim;
  require(n >= 1, ErrorKind::Dimension, "lanczos: empty map");
  require(k >= 1, ErrorKind::Dimension, "lanczos: k must be >= 1");
  k = static_cast<int>(std::min<Eigen::Index>(k, n));

  Rng rng = make_rng(seed, 0x4c414e43);
  std::vector<Vec> locked;
  std::vector<double> locked_val;
  double scale = 1.0;
  double best_res = std::numeric_limits<double>::infinity();
  int applications = 0;

  auto res_ok = [&](double res) { return res <= tol * std::max(1.0, scale); };

  int stagnant = 0;
  while (static_cast<int>(locked.size()) < k) {
    const Eigen::Index free_dim = n - static_cast<Eigen::Index>(locked.size());
    if (free_dim <= 0) break;
    const int want = k - static_cast<int>(locked.size());
    const int m = static_cast<int>(std::min<Eigen::Index>(free_dim, std::max(4 * want + 28, 56)));
    applications += m;
    if (applications > std::max(max_iter, 10 * m))
      throw ConvergenceError("lanczos: iteration budget exhausted", best_res);

    auto ritz = detail::lanczos_cycle(map, locked, random_vector(rng, n), m, want + 2);
    if (ritz.empty()) continue;
    for (const auto& r : ritz) scale = std::max(scale, std::abs(r.value));

    int newly = 0;
    for (const auto& r : ritz) {
      best_res = std::min(best_res, r.residual);
      if (!res_ok(r.residual)) break;  // lower pairs converge first
      locked.push_back(r.vector);
      locked_val.push_back(r.value);
      if (++newly == want) break;
    }
    if (newly == 0) {
      if (++stagnant > 24) throw ConvergenceError("lanczos stalled", best_res);
    } else {
      stagnant = 0;
    }
  }

  // Verification: a deflated cycle must not reveal an eigenvalue below the
  // current top of the locked set (possible with degeneracies).
  for (int guard = 0; guard <= k + 2 && static_cast<Eigen::Index>(locked.size()) < n; ++guard) {
    auto order = std::vector<int>(locked.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return locked_val[static_cast<size_t>(a)] < locked_val[static_cast<size_t>(b)];
    });
    int hi = order.back();
    const int m = static_cast<int>(
        std::min<Eigen::Index>(n - static_cast<Eigen::Index>(locked.size()), 48));
    auto ritz = detail::lanczos_cycle(map, locked, random_vector(rng, n), m, 1);
    if (ritz.empty()) break;
    double margin = 1e-10 * std::max(1.0, scale);
    if (res_ok(ritz[0].residual) && ritz[0].value < locked_val[static_cast<size_t>(hi)] - margin) {
      locked[static_cast<size_t>(hi)] = ritz[0].vector;
      locked_val[static_cast<size_t>(hi)] = ritz[0].value;
    } else {
      break;
    }
  }

  std::vector<std::pair<double, Vec>> out;
  std::vector<int> order(locked.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return locked_val[static_cast<size_t>(a)] < locked_val[static_cast<size_t>(b)];
  });
  for (int i : order) out.emplace_back(locked_val[static_cast<size_t>(i)], locked[static_cast<size_t>(i)]);
  out.resize(static_cast<size_t>(std::min<size_t>(out.size(), static_cast<size_t>(k))));
  return out;
}

// Restarted GMRES for A x = b with A given as a callback. x0 = 0, so results
// are bit-reproducible for identical inputs.
inline Vec gmres(const std::function<void(const Vec&, Vec&)>& apply_a, const Vec& b, double tol,
                 int max_iter = 2000, int restart = 60) {
  const Eigen::Index n = b.size();
  Vec x = Vec::Zero(n);
  double bnorm = b.norm();
  if (bnorm == 0) return x;

  Vec ax(n);
  int iters = 0;
  double res_norm = bnorm;
  while (iters < max_iter) {
    apply_a(x, ax);
    Vec r = b - ax;
    res_norm = r.norm();
    if (res_norm <= tol * bnorm) return x;

    const int m = std::min<int>(restart, static_cast<int>(n));
    std::vector<Vec> v;
    v.push_back(r / res_norm);
    Mat h = Mat::Zero(m + 1, m);
    std::vector<cxd> cs(static_cast<size_t>(m)), sn(static_cast<size_t>(m));
    Vec g = Vec::Zero(m + 1);
    g(0) = res_norm;

    int j = 0;
    for (; j < m && iters < max_iter; ++j, ++iters) {
      Vec w(n);
      apply_a(v[static_cast<size_t>(j)], w);
      for (int i = 0; i <= j; ++i) {
        h(i, j) = v[static_cast<size_t>(i)].dot(w);
        w -= h(i, j) * v[static_cast<size_t>(i)];
      }
      for (int i = 0; i <= j; ++i) {  // reorthogonalize
        cxd c = v[static_cast<size_t>(i)].dot(w);
        h(i, j) += c;
        w -= c * v[static_cast<size_t>(i)];
      }
      h(j + 1, j) = w.norm();
      if (std::abs(h(j + 1, j)) > 1e-300) v.push_back(w / h(j + 1, j));

      for (int i = 0; i < j; ++i) {
        cxd t = cs[static_cast<size_t>(i)] * h(i, j) + sn[static_cast<size_t>(i)] * h(i + 1, j);
        h(i + 1, j) = -std::conj(sn[static_cast<size_t>(i)]) * h(i, j) +
                      std::conj(cs[static_cast<size_t>(i)]) * h(i + 1, j);
        h(i, j) = t;
      }
      double denom = std::sqrt(std::norm(h(j, j)) + std::norm(h(j + 1, j)));
      if (denom < 1e-300) {
        cs[static_cast<size_t>(j)] = 1;
        sn[static_cast<size_t>(j)] = 0;
      } else {
        cs[static_cast<size_t>(j)] = std::conj(h(j, j)) / denom;
        sn[static_cast<size_t>(j)] = std::conj(h(j + 1, j)) / denom;
      }
      h(j, j) = cs[static_cast<size_t>(j)] * h(j, j) + sn[static_cast<size_t>(j)] * h(j + 1, j);
      h(j + 1, j) = 0;
      g(j + 1) = -std::conj(sn[static_cast<size_t>(j)]) * g(j);
      g(j) = cs[static_cast<size_t>(j)] * g(j);
      if (std::abs(g(j + 1)) <= tol * bnorm) {
        ++j;
        break;
      }
      if (static_cast<int>(v.size()) <= j + 1) {  // happy breakdown
        ++j;
        break;
      }
    }

    Vec y = Vec::Zero(j);
    for (int i = j - 1; i >= 0; --i) {
      cxd s = g(i);
      for (int l = i + 1; l < j; ++l) s -= h(i, l) * y(l);
      y(i) = s / h(i, i);
    }
    for (int i = 0; i < j; ++i) x += y(i) * v[static_cast<size_t>(i)];
  }

  apply_a(x, ax);
  double final_res = (b - ax).norm();
  if (final_res > tol * bnorm * 10)
    throw ConvergenceError("gmres did not converge", final_res / bnorm);
  return x;
}

// Spec-facing adapters on Tensor-shaped vectors.
inline EigPair dominant_eigenpair_t(const LinearMap& map, double tol, int max_iter) {
  return dominant_eigenpair(map, tol, max_iter);
}

}  // namespace fvmps
