#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/imps.hpp"
#include "fvmps/mpo.hpp"
#include "fvmps/site_tensor.hpp"

namespace fvmps {

// Nonuniform window of N sites embedded in two frozen uniform bulks.
// The left bulk enters in AL (left-orthonormal) form, the right bulk in AR
// form, so both boundary norm environments are the identity. Window sites
// are 1-indexed; bond b sits between sites b and b+1 (b = 0..N).
struct WindowMps {
  UniformImps left_bulk;
  UniformImps right_bulk;
  std::vector<Site> w;

  long n() const { return static_cast<long>(w.size()); }
  long d() const { return w.empty() ? 2 : w[0].phys_dim(); }

  long bond_dim(long b) const {  // bond b in 0..N
    if (b <= 0) return left_bulk.D();
    if (b >= n()) return right_bulk.D();
    return w[static_cast<size_t>(b)].rows();
  }

  long max_bond() const {
    long m = left_bulk.D();
    for (const Site& s : w) m = std::max(m, s.cols());
    return m;
  }

  const Site& site(long i) const {  // virtual accessor over the infinite chain
    if (i < 1) return left_bulk.AL;
    if (i > n()) return right_bulk.AR;
    return w[static_cast<size_t>(i - 1)];
  }

  Site& site_mut(long i) {
    require(i >= 1 && i <= n(), ErrorKind::Dimension, "window site out of range");
    return w[static_cast<size_t>(i - 1)];
  }

  bool all_finite() const {
    for (const Site& s : w)
      if (!s.all_finite()) return false;
    return true;
  }

  void check_bonds() const {
    long prev = left_bulk.D();
    for (long i = 1; i <= n(); ++i) {
      require(site(i).rows() == prev, ErrorKind::Dimension, "window bond mismatch");
      prev = site(i).cols();
    }
    require(prev == right_bulk.D(), ErrorKind::Dimension, "window right-edge bond mismatch");
  }
};

// Norm environments across the window. left_envs[b] is the left norm
// environment at bond b (size N+1, [0] = identity); right_envs[b] mirrors.
inline std::vector<Mat> window_left_norm_envs(const WindowMps& s) {
  std::vector<Mat> l(static_cast<size_t>(s.n()) + 1);
  l[0] = Mat::Identity(s.left_bulk.D(), s.left_bulk.D());
  for (long i = 1; i <= s.n(); ++i)
    l[static_cast<size_t>(i)] = transfer_left(s.site(i), s.site(i), l[static_cast<size_t>(i - 1)]);
  return l;
}

inline std::vector<Mat> window_right_norm_envs(const WindowMps& s) {
  std::vector<Mat> r(static_cast<size_t>(s.n()) + 1);
  r[static_cast<size_t>(s.n())] = Mat::Identity(s.right_bulk.D(), s.right_bulk.D());
  for (long i = s.n(); i >= 1; --i)
    r[static_cast<size_t>(i - 1)] = transfer_right(s.site(i), s.site(i), r[static_cast<size_t>(i)]);
  return r;
}

inline double window_norm2(const WindowMps& s) {
  auto l = window_left_norm_envs(s);
  return std::real(l.back().trace());
}

inline void normalize_window(WindowMps& s) {
  double n2 = window_norm2(s);
  require(n2 > 0 && std::isfinite(n2), ErrorKind::Numeric, "window norm is not positive finite");
  double scale = std::pow(n2, -0.5 / static_cast<double>(s.n()));
  for (Site& site : s.w)
    for (Mat& m : site.m) m *= scale;
}

// Squared Schmidt coefficients at a bond from the raw-gauge environments.
inline Eigen::VectorXd schmidt_sq_at_bond(const Mat& l, const Mat& r) {
  auto [lsq, lisq] = herm_sqrt_and_invsqrt(l, 1e-300);
  Mat rho = lsq * r * lsq;  // (ket x ket) similarity-equivalent to l^T-weighted cut density
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (rho + rho.adjoint()));
  Eigen::VectorXd w = es.eigenvalues().reverse();
  for (long i = 0; i < w.size(); ++i) w(i) = std::max(w(i), 0.0);
  return w;
}

// Descending Schmidt coefficients at bond b; squares sum to 1 within 1e-10
// for a normalized state.
inline Eigen::VectorXd schmidt_spectrum(const WindowMps& s, long b) {
  require(b >= 0 && b <= s.n(), ErrorKind::Dimension, "bond out of range");
  auto l = window_left_norm_envs(s);
  auto r = window_right_norm_envs(s);
  Eigen::VectorXd w = schmidt_sq_at_bond(l[static_cast<size_t>(b)], r[static_cast<size_t>(b)]);
  double sum = w.sum();
  require(std::abs(sum - 1.0) < 1e-8, ErrorKind::Consistency,
          "Schmidt spectrum is not normalized; normalize the window first");
  return w.array().max(0.0).sqrt();
}

inline double entropy_from_schmidt_sq(const Eigen::VectorXd& w, std::optional<double> renyi_n) {
  if (renyi_n && std::abs(*renyi_n - 1.0) > 1e-12) {
    double s = 0;
    for (long i = 0; i < w.size(); ++i)
      if (w(i) > 1e-14) s += std::pow(w(i), *renyi_n);
    return std::log2(s) / (1.0 - *renyi_n);
  }
  double s = 0;
  for (long i = 0; i < w.size(); ++i)
    if (w(i) > 1e-14) s -= w(i) * std::log2(w(i));  // coefficients below 1e-14 are clamped
  return s;
}

// Base-2 entanglement entropy of the left-right bipartition at bond b.
inline double cut_entropy(const WindowMps& s, long b, std::optional<double> renyi_n = {}) {
  Eigen::VectorXd sc = schmidt_spectrum(s, b);
  return entropy_from_schmidt_sq(sc.array().square(), renyi_n);
}

// All cut entropies (bonds 0..N) in one pair of sweeps.
inline std::vector<double> entropy_profile(const WindowMps& s, std::optional<double> renyi_n = {}) {
  auto l = window_left_norm_envs(s);
  auto r = window_right_norm_envs(s);
  std::vector<double> out(static_cast<size_t>(s.n()) + 1);
  for (long b = 0; b <= s.n(); ++b) {
    Eigen::VectorXd w = schmidt_sq_at_bond(l[static_cast<size_t>(b)], r[static_cast<size_t>(b)]);
    out[static_cast<size_t>(b)] = entropy_from_schmidt_sq(w, renyi_n);
  }
  return out;
}

// <psi| op_{j..j+r-1} |psi> / <psi|psi>. Sites outside the window use the
// bulk tensors, so any j is valid; op is (d^r x d^r).
inline cxd expect_local_window(const WindowMps& s, const Tensor& op, int r, long j) {
  const long nn = s.n();
  if (j + r - 1 < 1) return expect_local_uniform(s.left_bulk, op, r);
  if (j > nn) return expect_local_uniform(s.right_bulk, op, r);

  auto lenv = window_left_norm_envs(s);
  auto renv = window_right_norm_envs(s);
  double norm2 = std::real(lenv.back().trace());

  auto left_at = [&](long b) -> Mat {  // bond b possibly left of the window
    if (b <= 0) return Mat::Identity(s.left_bulk.D(), s.left_bulk.D());
    return lenv[static_cast<size_t>(std::min(b, nn))];
  };
  auto right_at = [&](long b) -> Mat {
    if (b >= nn) return Mat::Identity(s.right_bulk.D(), s.right_bulk.D());
    return renv[static_cast<size_t>(std::max<long>(b, 0))];
  };

  // Composite chains over sites j..j+r-1 via the virtual accessor.
  long dim = 1;
  for (int k = 0; k < r; ++k) dim *= s.d();
  require(op.rank() == 2 && op.extent(0) == dim, ErrorKind::Dimension,
          "expect_local_window: op shape mismatch");
  std::vector<Mat> chain(static_cast<size_t>(dim));
  for (long comp = 0; comp < dim; ++comp) {
    long rem = comp;
    std::vector<long> digits(static_cast<size_t>(r));
    for (int k = r - 1; k >= 0; --k) {
      digits[static_cast<size_t>(k)] = rem % s.d();
      rem /= s.d();
    }
    Mat m = s.site(j).m[static_cast<size_t>(digits[0])];
    for (int k = 1; k < r; ++k)
      m = m * s.site(j + k).m[static_cast<size_t>(digits[static_cast<size_t>(k)])];
    chain[static_cast<size_t>(comp)] = m;
  }

  Mat l = left_at(j - 1);
  Mat rr = right_at(j + r - 1);
  cxd acc(0, 0);
  for (long sb = 0; sb < dim; ++sb)
    for (long sk = 0; sk < dim; ++sk) {
      cxd c = op.at({sb, sk});
      if (c == cxd(0, 0)) continue;
      acc += c * (l * chain[static_cast<size_t>(sk)] * rr * chain[static_cast<size_t>(sb)].adjoint())
                     .trace();
    }
  return acc / norm2;
}

// <Z_j> over a site range (window plus margin on both sides).
inline std::vector<double> z_profile(const WindowMps& s, long margin = 0) {
  Tensor z = pauli_z();
  std::vector<double> out;
  for (long j = 1 - margin; j <= s.n() + margin; ++j)
    out.push_back(std::real(expect_local_window(s, z, 1, j)));
  return out;
}

// Per-term energy profile e_j = <h_{j..j+r-1}> - reference for j in
// [1-margin, N+margin]. The reference is a per-term vacuum density.
inline std::vector<double> window_energy_profile(const WindowMps& s, const LocalHamiltonian& ham,
                                                 double reference, long margin = 0) {
  std::vector<double> out;
  for (long j = 1 - margin; j <= s.n() + margin; ++j)
    out.push_back(std::real(expect_local_window(s, ham.term, ham.range, j)) - reference);
  return out;
}

// <bra|ket> for two windows over identical bulk tensors and edge bond
// dimensions (window lengths may differ only by bulk-equivalent sites).
inline cxd window_overlap(const WindowMps& bra, const WindowMps& ket) {
  require(bra.n() == ket.n(), ErrorKind::Dimension, "window_overlap: length mismatch");
  require(bra.left_bulk.D() == ket.left_bulk.D() && bra.right_bulk.D() == ket.right_bulk.D(),
          ErrorKind::Dimension, "window_overlap: bulk mismatch");
  Mat l = Mat::Identity(bra.left_bulk.D(), ket.left_bulk.D());
  for (long i = 1; i <= ket.n(); ++i) l = transfer_left(ket.site(i), bra.site(i), l);
  return l.trace();
}

// MPO environment stacks across the window, seeded by the bulk fixed points.
// left[b] is the environment at bond b (left of site b+1).
inline std::vector<MpoEnv> window_left_mpo_envs(const Mpo& w, const WindowMps& s,
                                                const MpoEnv& bulk_left) {
  std::vector<MpoEnv> env(static_cast<size_t>(s.n()) + 1);
  env[0] = bulk_left;
  for (long i = 1; i <= s.n(); ++i)
    env[static_cast<size_t>(i)] =
        mpo_env_step_left(w, env[static_cast<size_t>(i - 1)], s.site(i), s.site(i));
  return env;
}

inline std::vector<MpoEnv> window_right_mpo_envs(const Mpo& w, const WindowMps& s,
                                                 const MpoEnv& bulk_right) {
  std::vector<MpoEnv> env(static_cast<size_t>(s.n()) + 1);
  env[static_cast<size_t>(s.n())] = bulk_right;
  for (long i = s.n(); i >= 1; --i)
    env[static_cast<size_t>(i - 1)] =
        mpo_env_step_right(w, env[static_cast<size_t>(i)], s.site(i), s.site(i));
  return env;
}

inline double mpo_env_pairing(const MpoEnv& l, const MpoEnv& r) {
  cxd acc(0, 0);
  for (size_t a = 0; a < l.size(); ++a) {
    if (l[a].size() == 0 || r[a].size() == 0) continue;
    acc += (l[a] * r[a]).trace();
  }
  return std::real(acc);
}

// The regularized bulk environments leave one unanchored junction term when
// paired directly; pairing the two bulk fixed points measures exactly that
// constant. Subtracting it zeroes the energy of a bulk-filled window.
inline double mpo_junction_energy(const MpoEnv& bulk_left, const MpoEnv& bulk_right) {
  return mpo_env_pairing(bulk_left, bulk_right);
}

// Total (shift-subtracted) energy from matched env stacks at any bond,
// relative to the junction reference.
inline double window_energy(const std::vector<MpoEnv>& left, const std::vector<MpoEnv>& right,
                            long bond, double norm2, double junction_offset = 0.0) {
  return mpo_env_pairing(left[static_cast<size_t>(bond)], right[static_cast<size_t>(bond)]) /
             norm2 -
         junction_offset;
}

}  // namespace fvmps
