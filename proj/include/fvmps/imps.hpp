#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/linear_map.hpp"
#include "fvmps/model.hpp"
#include "fvmps/site_tensor.hpp"

namespace fvmps {

// Uniform infinite MPS in canonical form. AL is left-orthonormal
// (sum_s AL^s† AL^s = 1), AR right-orthonormal, AL C = C AR with C = diag(c),
// and the right environment of AL is diag(c^2) with tr = 1.
struct UniformImps {
  Site AL;
  Site AR;
  Eigen::VectorXd c;

  long D() const { return AL.rows(); }
  long d() const { return AL.phys_dim(); }

  Mat center() const { return c.cast<cxd>().asDiagonal(); }
  Mat r_env() const { return c.array().square().matrix().cast<cxd>().asDiagonal(); }  // AL frame
  Mat l_env() const { return r_env(); }                                               // AR frame

  // Center-site tensor AC = AL * C (= C * AR).
  Site ac() const {
    Site out = AL;
    Mat cm = center();
    for (Mat& x : out.m) x = x * cm;
    return out;
  }

  // Schmidt entropy of one bulk cut, in bits.
  double bulk_entropy() const {
    double s = 0;
    for (long i = 0; i < c.size(); ++i) {
      double p = c(i) * c(i);
      if (p > 1e-14) s -= p * std::log2(p);
    }
    return s;
  }

  UniformImps apply_op(const Mat& op) const {
    // A unitary single-site operator preserves both canonical forms.
    return UniformImps{AL.apply_op(op), AR.apply_op(op), c};
  }
};

namespace detail {

inline Mat hermitianized_psd(const Mat& m) {
  Mat h = 0.5 * (m + m.adjoint());
  if (std::real(h.trace()) < 0) h = -h;
  return h;
}

}  // namespace detail

// Bring an arbitrary uniform tensor to canonical form. The dominant
// transfer eigenvalue is scaled to 1; a degenerate dominant magnitude is
// reported as an ill-conditioned-state error by the eigensolver.
inline UniformImps canonicalize(const Site& a_in, double tol = 1e-14, uint64_t seed = 97) {
  require(a_in.rows() == a_in.cols(), ErrorKind::Dimension, "uniform tensor must be square");
  require(a_in.all_finite(), ErrorKind::Numeric, "uniform tensor has non-finite entries");
  const long dloc = a_in.phys_dim(), bd = a_in.rows();

  Site a = a_in;
  if (bd == 1) {
    double n2 = 0;
    for (const Mat& x : a.m) n2 += std::norm(x(0, 0));
    require(n2 > 0, ErrorKind::Numeric, "zero tensor");
    Site al = a.scaled(1.0 / std::sqrt(n2));
    Eigen::VectorXd c(1);
    c(0) = 1.0;
    return UniformImps{al, al, c};
  }

  // Left fixed point of the transfer map, then gauge to AL with l = 1.
  auto lpair = dominant_eigenpair(transfer_left_map(a, a), tol, 6000, seed);
  require(std::abs(lpair.value.imag()) <= 1e-9 * std::abs(lpair.value), ErrorKind::IllConditioned,
          "complex dominant transfer eigenvalue");
  double lambda = std::abs(lpair.value);
  Mat l = detail::hermitianized_psd(Eigen::Map<const Mat>(lpair.vector.data(), bd, bd));
  l /= l.trace().real();

  auto [lsq, lisq] = herm_sqrt_and_invsqrt(l, 1e-28);
  Site al(dloc, bd, bd);
  double inv_sqrt_lambda = 1.0 / std::sqrt(lambda);
  for (long s = 0; s < dloc; ++s)
    al.m[static_cast<size_t>(s)] = inv_sqrt_lambda * (lsq * a.m[static_cast<size_t>(s)] * lisq);

  // Polish: the left fixed point of AL must be the identity.
  for (int it = 0; it < 8; ++it) {
    Mat res = transfer_left(al, al, Mat::Identity(bd, bd));
    double dev = (res - Mat::Identity(bd, bd)).norm();
    if (dev < 1e-13 * bd) break;
    auto pol = dominant_eigenpair(transfer_left_map(al, al), tol, 6000, seed + 1 + it);
    Mat lp = detail::hermitianized_psd(Eigen::Map<const Mat>(pol.vector.data(), bd, bd));
    lp /= lp.trace().real();
    auto [ps, pis] = herm_sqrt_and_invsqrt(lp, 1e-28);
    double sc = 1.0 / std::sqrt(std::abs(pol.value));
    for (long s = 0; s < dloc; ++s)
      al.m[static_cast<size_t>(s)] = sc * (ps * al.m[static_cast<size_t>(s)] * pis);
  }

  // Right fixed point of AL, diagonalized to fix the remaining gauge.
  auto rpair = dominant_eigenpair(transfer_right_map(al, al), tol, 6000, seed + 17);
  Mat r = detail::hermitianized_psd(Eigen::Map<const Mat>(rpair.vector.data(), bd, bd));
  r /= r.trace().real();
  Eigen::SelfAdjointEigenSolver<Mat> es(r);
  Eigen::VectorXd w = es.eigenvalues().reverse();
  Mat u = es.eigenvectors().rowwise().reverse();
  // deterministic column phases: largest entry real positive
  for (long j = 0; j < u.cols(); ++j) {
    long imax = 0;
    double best = 0;
    for (long i = 0; i < u.rows(); ++i)
      if (std::abs(u(i, j)) > best) {
        best = std::abs(u(i, j));
        imax = i;
      }
    if (best > 1e-300) u.col(j) *= std::conj(u(imax, j)) / best;
  }
  for (long s = 0; s < dloc; ++s)
    al.m[static_cast<size_t>(s)] = u.adjoint() * al.m[static_cast<size_t>(s)] * u;

  Eigen::VectorXd c(bd);
  for (long i = 0; i < bd; ++i) c(i) = std::sqrt(std::max(w(i), 0.0));
  c /= c.norm();

  // AR by LQ iteration on AL (stable for any Schmidt spectrum): find L with
  // AL^s L = L AR^s, sum_s AR^s AR^s† = 1, warm-started at diag(c).
  Site ar(dloc, bd, bd);
  Mat lgauge = c.cast<cxd>().asDiagonal();
  for (int iter = 0; iter < 400; ++iter) {
    Mat m(bd, dloc * bd);
    for (long s = 0; s < dloc; ++s)
      m.block(0, s * bd, bd, bd) = al.m[static_cast<size_t>(s)] * lgauge;
    // LQ via QR of the adjoint: m = L Q with Q right-orthonormal rows
    Eigen::HouseholderQR<Mat> qr(m.adjoint());
    Mat q = (qr.householderQ() * Mat::Identity(dloc * bd, bd)).adjoint();
    Mat lnew = m * q.adjoint();
    // fix phases so the diagonal of L is real nonnegative
    for (long i = 0; i < bd; ++i) {
      cxd di = lnew(i, i);
      if (std::abs(di) > 1e-300) {
        cxd ph = di / std::abs(di);
        lnew.col(i) *= std::conj(ph);
        q.row(i) *= ph;
      }
    }
    lnew /= lnew.norm();
    double delta = (lnew - lgauge).norm();
    lgauge = lnew;
    for (long s = 0; s < dloc; ++s)
      ar.m[static_cast<size_t>(s)] = q.block(0, s * bd, bd, bd);
    if (delta < 1e-14) break;
  }

  return UniformImps{al, ar, c};
}

inline UniformImps normalize(const UniformImps& s, double tol = 1e-14, uint64_t seed = 97) {
  return canonicalize(s.AL, tol, seed);
}

// <psi| op |psi> for an operator acting on `r` adjacent bulk sites.
// op is a (d^r x d^r) matrix tensor.
inline cxd expect_local_uniform(const UniformImps& u, const Tensor& op, int r) {
  const long dloc = u.d();
  long dim = 1;
  for (int k = 0; k < r; ++k) dim *= dloc;
  require(op.rank() == 2 && op.extent(0) == dim && op.extent(1) == dim, ErrorKind::Dimension,
          "expect_local_uniform: operator shape mismatch");

  // Composite chain matrices M^(s1..sr) = AL^{s1} ... AL^{sr}.
  std::vector<Mat> chain(static_cast<size_t>(dim));
  for (long comp = 0; comp < dim; ++comp) {
    long rem = comp;
    std::vector<long> digits(static_cast<size_t>(r));
    for (int k = r - 1; k >= 0; --k) {
      digits[static_cast<size_t>(k)] = rem % dloc;
      rem /= dloc;
    }
    Mat m = u.AL.m[static_cast<size_t>(digits[0])];
    for (int k = 1; k < r; ++k) m = m * u.AL.m[static_cast<size_t>(digits[static_cast<size_t>(k)])];
    chain[static_cast<size_t>(comp)] = m;
  }

  Mat renv = u.r_env();
  cxd acc(0, 0);
  for (long sb = 0; sb < dim; ++sb)
    for (long sk = 0; sk < dim; ++sk) {
      cxd w = op.at({sb, sk});
      if (w == cxd(0, 0)) continue;
      acc += w * (chain[static_cast<size_t>(sk)] * renv * chain[static_cast<size_t>(sb)].adjoint())
                     .trace();
    }
  return acc;
}

inline double energy_density(const UniformImps& u, const LocalHamiltonian& ham) {
  return std::real(expect_local_uniform(u, ham.term, ham.range));
}

// Per-site modulus of the overlap between two uniform states: the dominant
// eigenvalue magnitude of the mixed transfer matrix.
inline double overlap_per_site(const UniformImps& ket, const UniformImps& bra, uint64_t seed = 31) {
  auto pairs = arnoldi_top(transfer_left_map(ket.AL, bra.AL), 1, 1e-10, 4000, seed);
  return std::abs(pairs[0].value);
}

// xi = -1 / ln |lambda_2|; 0 for product states by convention.
inline double correlation_length(const UniformImps& u, uint64_t seed = 53) {
  if (u.D() == 1) return 0.0;
  auto pairs = arnoldi_top(transfer_right_map(u.AL, u.AL), 4, 1e-9, 6000, seed);
  require(std::abs(std::abs(pairs[0].value) - 1.0) < 1e-7, ErrorKind::IllConditioned,
          "state not normalized: dominant transfer eigenvalue differs from 1");
  if (pairs.size() < 2) return 0.0;
  double l2 = std::abs(pairs[1].value);
  if (l2 < 1e-14) return 0.0;
  require(l2 < 1.0 - 1e-12, ErrorKind::IllConditioned,
          "second transfer eigenvalue at unit magnitude; correlation length diverges");
  return -1.0 / std::log(l2);
}

}  // namespace fvmps
