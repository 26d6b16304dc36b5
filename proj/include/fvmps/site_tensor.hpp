#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/linear_map.hpp"
#include "fvmps/rng.hpp"
#include "fvmps/tensor.hpp"

namespace fvmps {

// MPS site tensor stored as one (rows x cols) matrix per physical index.
//
// Environment conventions used throughout:
//   left  env l: rows = bra bond, cols = ket bond;  l' = sum_s bra^s† l ket^s
//   right env r: rows = ket bond, cols = bra bond;  r' = sum_s ket^s r bra^s†
//   pairing: <l, r> = tr(l * r), invariant under moving the cut.
struct Site {
  std::vector<Mat> m;

  Site() = default;
  Site(long d, long rows, long cols) : m(static_cast<size_t>(d), Mat::Zero(rows, cols)) {}

  long phys_dim() const { return static_cast<long>(m.size()); }
  long rows() const { return m.empty() ? 0 : m[0].rows(); }
  long cols() const { return m.empty() ? 0 : m[0].cols(); }

  Site scaled(cxd a) const {
    Site out = *this;
    for (Mat& x : out.m) x *= a;
    return out;
  }

  Site adjoint_sites() const = delete;

  double norm() const {
    double s = 0;
    for (const Mat& x : m) s += x.squaredNorm();
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (const Mat& x : m)
      if (!x.allFinite()) return false;
    return true;
  }

  // Apply a single-site operator: out^t = sum_s op(t, s) A^s.
  Site apply_op(const Mat& op) const {
    Site out(phys_dim(), rows(), cols());
    for (long t = 0; t < phys_dim(); ++t)
      for (long s = 0; s < phys_dim(); ++s)
        if (op(t, s) != cxd(0, 0)) out.m[static_cast<size_t>(t)] += op(t, s) * m[static_cast<size_t>(s)];
    return out;
  }

  static Site random(Rng& rng, long d, long rows, long cols) {
    Site s(d, rows, cols);
    for (Mat& x : s.m) x = random_matrix(rng, rows, cols);
    return s;
  }

  // Rank-3 tensor view with index order (left, phys, right).
  Tensor to_tensor() const {
    Tensor t({rows(), phys_dim(), cols()});
    for (long s = 0; s < phys_dim(); ++s)
      for (long a = 0; a < rows(); ++a)
        for (long b = 0; b < cols(); ++b) t.at({a, s, b}) = m[static_cast<size_t>(s)](a, b);
    return t;
  }

  static Site from_tensor(const Tensor& t) {
    require(t.rank() == 3, ErrorKind::Dimension, "Site::from_tensor needs rank 3");
    Site s(t.extent(1), t.extent(0), t.extent(2));
    for (long p = 0; p < t.extent(1); ++p)
      for (long a = 0; a < t.extent(0); ++a)
        for (long b = 0; b < t.extent(2); ++b) s.m[static_cast<size_t>(p)](a, b) = t.at({a, p, b});
    return s;
  }
};

// r' = sum_s ket^s r bra^s†
inline Mat transfer_right(const Site& ket, const Site& bra, const Mat& r) {
  Mat out = Mat::Zero(ket.rows(), bra.rows());
  for (long s = 0; s < ket.phys_dim(); ++s)
    out.noalias() += ket.m[static_cast<size_t>(s)] * r * bra.m[static_cast<size_t>(s)].adjoint();
  return out;
}

// l' = sum_s bra^s† l ket^s
inline Mat transfer_left(const Site& ket, const Site& bra, const Mat& l) {
  Mat out = Mat::Zero(bra.cols(), ket.cols());
  for (long s = 0; s < ket.phys_dim(); ++s)
    out.noalias() += bra.m[static_cast<size_t>(s)].adjoint() * l * ket.m[static_cast<size_t>(s)];
  return out;
}

// Same with a single-site operator sandwiched: op(s_bra, s_ket).
inline Mat transfer_right_op(const Site& ket, const Site& bra, const Mat& op, const Mat& r) {
  Mat out = Mat::Zero(ket.rows(), bra.rows());
  for (long sb = 0; sb < bra.phys_dim(); ++sb)
    for (long sk = 0; sk < ket.phys_dim(); ++sk) {
      cxd w = op(sb, sk);
      if (w == cxd(0, 0)) continue;
      out.noalias() += w * (ket.m[static_cast<size_t>(sk)] * r * bra.m[static_cast<size_t>(sb)].adjoint());
    }
  return out;
}

inline Mat transfer_left_op(const Site& ket, const Site& bra, const Mat& op, const Mat& l) {
  Mat out = Mat::Zero(bra.cols(), ket.cols());
  for (long sb = 0; sb < bra.phys_dim(); ++sb)
    for (long sk = 0; sk < ket.phys_dim(); ++sk) {
      cxd w = op(sb, sk);
      if (w == cxd(0, 0)) continue;
      out.noalias() += w * (bra.m[static_cast<size_t>(sb)].adjoint() * l * ket.m[static_cast<size_t>(sk)]);
    }
  return out;
}

// Matrix-free right transfer map on vectorized (D_ket x D_bra) matrices.
inline LinearMap transfer_right_map(const Site& ket, const Site& bra) {
  const long rk = ket.cols(), rb = bra.cols();
  LinearMap map;
  map.dim = rk * rb;
  map.apply = [ket, bra, rk, rb](const Vec& x, Vec& y) {
    Eigen::Map<const Mat> xm(x.data(), rk, rb);
    Mat ym = transfer_right(ket, bra, xm);
    y = Eigen::Map<const Vec>(ym.data(), ym.size());
  };
  return map;
}

inline LinearMap transfer_left_map(const Site& ket, const Site& bra) {
  const long lb = bra.rows(), lk = ket.rows();
  LinearMap map;
  map.dim = lb * lk;
  map.apply = [ket, bra, lb, lk](const Vec& x, Vec& y) {
    Eigen::Map<const Mat> xm(x.data(), lb, lk);
    Mat ym = transfer_left(ket, bra, xm);
    y = Eigen::Map<const Vec>(ym.data(), ym.size());
  };
  return map;
}

// Hermitian square root / inverse square root with eigenvalue floor.
// Eigendirections below the floor are dropped from the pseudo-inverse.
inline std::pair<Mat, Mat> herm_sqrt_and_invsqrt(const Mat& h, double floor_eig = 1e-24) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (h + h.adjoint()));
  const auto& w = es.eigenvalues();
  Mat sq = Mat::Zero(h.rows(), h.cols());
  Mat isq = Mat::Zero(h.rows(), h.cols());
  for (long i = 0; i < w.size(); ++i) {
    double wi = std::max(w(i), 0.0);
    double root = std::sqrt(wi);
    sq += root * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
    if (wi > floor_eig)
      isq += (1.0 / root) * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
  }
  return {sq, isq};
}

// Orthonormal basis of the null space required for tangent vectors in the
// left gauge: columns V with V† M = 0 where M stacks l^{1/2} A^s over s.
// Returned as a Site-like list of D x (dD - D') blocks.
inline std::vector<Mat> left_null_space(const Site& a, const Mat& l_sqrt) {
  const long d = a.phys_dim(), dl = a.rows(), dr = a.cols();
  Mat m(d * dl, dr);
  for (long s = 0; s < d; ++s) m.block(s * dl, 0, dl, dr) = l_sqrt * a.m[static_cast<size_t>(s)];
  // full SVD: null space = columns of U beyond rank
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU);
  long rank = 0;
  const auto& sv = svd.singularValues();
  double scale = sv.size() ? sv(0) : 0.0;
  for (long i = 0; i < sv.size(); ++i)
    if (sv(i) > std::max(1e-13 * scale, 1e-300)) ++rank;
  long nnull = d * dl - rank;
  std::vector<Mat> v(static_cast<size_t>(d));
  Mat u = svd.matrixU().rightCols(nnull);
  for (long s = 0; s < d; ++s) v[static_cast<size_t>(s)] = u.block(s * dl, 0, dl, nnull);
  return v;
}

// Right-gauge analog: rows V with M V† = 0 where M stacks A^s r^{1/2}
// horizontally; returned per physical index as ((dDr - D') x Dr) blocks.
inline std::vector<Mat> right_null_space(const Site& a, const Mat& r_sqrt) {
  const long d = a.phys_dim(), dl = a.rows(), dr = a.cols();
  Mat m(dl, d * dr);
  for (long s = 0; s < d; ++s) m.block(0, s * dr, dl, dr) = a.m[static_cast<size_t>(s)] * r_sqrt;
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
  long rank = 0;
  const auto& sv = svd.singularValues();
  double scale = sv.size() ? sv(0) : 0.0;
  for (long i = 0; i < sv.size(); ++i)
    if (sv(i) > std::max(1e-13 * scale, 1e-300)) ++rank;
  long nnull = d * dr - rank;
  Mat v = svd.matrixV().rightCols(nnull).adjoint();  // nnull x (d dr)
  std::vector<Mat> out(static_cast<size_t>(d));
  for (long s = 0; s < d; ++s) out[static_cast<size_t>(s)] = v.block(0, s * dr, nnull, dr);
  return out;
}

}  // namespace fvmps
