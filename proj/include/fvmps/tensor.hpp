#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <numeric>
#include <utility>
#include <vector>

#include "fvmps/errors.hpp"

namespace fvmps {

using cxd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

// Dense complex tensor, row-major: the last index varies fastest.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(size_of(shape_)), cxd(0, 0));
  }

  Tensor(std::vector<long> shape, std::vector<cxd> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<long>(data_.size()) == size_of(shape_), ErrorKind::Dimension,
            "tensor data length does not match shape");
  }

  static long size_of(const std::vector<long>& shape) {
    long n = 1;
    for (long e : shape) {
      require(e > 0, ErrorKind::Dimension, "tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  static Tensor identity(long n) {
    Tensor t({n, n});
    for (long i = 0; i < n; ++i) t.data_[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
  }

  static Tensor from_matrix(const Mat& m) {
    Tensor t({m.rows(), m.cols()});
    for (long i = 0; i < m.rows(); ++i)
      for (long j = 0; j < m.cols(); ++j) t.data_[static_cast<size_t>(i * m.cols() + j)] = m(i, j);
    return t;
  }

  const std::vector<long>& shape() const { return shape_; }
  long rank() const { return static_cast<long>(shape_.size()); }
  long size() const { return static_cast<long>(data_.size()); }
  const std::vector<cxd>& data() const { return data_; }
  std::vector<cxd>& data() { return data_; }

  long extent(long axis) const { return shape_.at(static_cast<size_t>(axis)); }

  std::vector<long> strides() const {
    std::vector<long> s(shape_.size());
    long acc = 1;
    for (long i = rank() - 1; i >= 0; --i) {
      s[static_cast<size_t>(i)] = acc;
      acc *= shape_[static_cast<size_t>(i)];
    }
    return s;
  }

  cxd& at(const std::vector<long>& idx) { return data_[flat(idx)]; }
  const cxd& at(const std::vector<long>& idx) const { return data_[flat(idx)]; }

  bool all_finite() const {
    for (const cxd& z : data_)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
  }

  double norm() const {
    double s = 0;
    for (const cxd& z : data_) s += std::norm(z);
    return std::sqrt(s);
  }

  Tensor reshape(std::vector<long> shape) const {
    require(size_of(shape) == size(), ErrorKind::Dimension, "reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  // New tensor with axes reordered so that new axis k is old axis perm[k].
  Tensor permute(const std::vector<long>& perm) const {
    require(static_cast<long>(perm.size()) == rank(), ErrorKind::Dimension, "permutation rank mismatch");
    std::vector<long> new_shape(perm.size());
    for (size_t k = 0; k < perm.size(); ++k) new_shape[k] = shape_[static_cast<size_t>(perm[k])];
    Tensor out(new_shape);
    const auto old_strides = strides();
    std::vector<long> perm_strides(perm.size());
    for (size_t k = 0; k < perm.size(); ++k)
      perm_strides[k] = old_strides[static_cast<size_t>(perm[k])];
    const long n = size();
    std::vector<long> idx(perm.size(), 0);
    long src = 0;
    for (long flat_i = 0; flat_i < n; ++flat_i) {
      out.data_[static_cast<size_t>(flat_i)] = data_[static_cast<size_t>(src)];
      for (long k = static_cast<long>(perm.size()) - 1; k >= 0; --k) {
        auto ku = static_cast<size_t>(k);
        if (++idx[ku] < new_shape[ku]) {
          src += perm_strides[ku];
          break;
        }
        src -= perm_strides[ku] * (new_shape[ku] - 1);
        idx[ku] = 0;
      }
    }
    return out;
  }

  Tensor conj() const {
    Tensor out = *this;
    for (cxd& z : out.data_) z = std::conj(z);
    return out;
  }

  Tensor scaled(cxd a) const {
    Tensor out = *this;
    for (cxd& z : out.data_) z *= a;
    return out;
  }

  Tensor operator+(const Tensor& o) const {
    require(shape_ == o.shape_, ErrorKind::Dimension, "tensor add shape mismatch");
    Tensor out = *this;
    for (size_t i = 0; i < data_.size(); ++i) out.data_[i] += o.data_[i];
    return out;
  }

  Tensor operator-(const Tensor& o) const {
    require(shape_ == o.shape_, ErrorKind::Dimension, "tensor sub shape mismatch");
    Tensor out = *this;
    for (size_t i = 0; i < data_.size(); ++i) out.data_[i] -= o.data_[i];
    return out;
  }

  // Rank-2 view as an Eigen matrix (copies; row-major storage).
  Mat matrix() const {
    require(rank() == 2, ErrorKind::Dimension, "matrix view needs a rank-2 tensor");
    Mat m(shape_[0], shape_[1]);
    for (long i = 0; i < shape_[0]; ++i)
      for (long j = 0; j < shape_[1]; ++j) m(i, j) = data_[static_cast<size_t>(i * shape_[1] + j)];
    return m;
  }

 private:
  size_t flat(const std::vector<long>& idx) const {
    require(static_cast<long>(idx.size()) == rank(), ErrorKind::Dimension, "index rank mismatch");
    const auto s = strides();
    long f = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
      require(idx[k] >= 0 && idx[k] < shape_[k], ErrorKind::Dimension, "index out of range");
      f += idx[k] * s[k];
    }
    return static_cast<size_t>(f);
  }

  std::vector<long> shape_;
  std::vector<cxd> data_;
};

// contract(a, b, pairs): sum over the paired axes (axis_of_a, axis_of_b).
// Result shape: unpaired axes of a (in order), then unpaired axes of b.
inline Tensor contract(const Tensor& a, const Tensor& b,
                       const std::vector<std::pair<long, long>>& pairs) {
  long contracted = 1;
  std::vector<bool> a_used(static_cast<size_t>(a.rank()), false);
  std::vector<bool> b_used(static_cast<size_t>(b.rank()), false);
  for (const auto& [ia, ib] : pairs) {
    require(ia >= 0 && ia < a.rank() && ib >= 0 && ib < b.rank(), ErrorKind::Dimension,
            "contract: axis out of range");
    require(!a_used[static_cast<size_t>(ia)] && !b_used[static_cast<size_t>(ib)],
            ErrorKind::Dimension, "contract: repeated axis");
    require(a.extent(ia) == b.extent(ib), ErrorKind::Dimension,
            "contract: paired extents differ");
    a_used[static_cast<size_t>(ia)] = true;
    b_used[static_cast<size_t>(ib)] = true;
    contracted *= a.extent(ia);
  }

  std::vector<long> a_free, b_free;
  for (long i = 0; i < a.rank(); ++i)
    if (!a_used[static_cast<size_t>(i)]) a_free.push_back(i);
  for (long i = 0; i < b.rank(); ++i)
    if (!b_used[static_cast<size_t>(i)]) b_free.push_back(i);

  std::vector<long> a_perm = a_free, b_perm;
  for (const auto& [ia, ib] : pairs) a_perm.push_back(ia);
  for (const auto& [ia, ib] : pairs) b_perm.push_back(ib);
  for (long i : b_free) b_perm.push_back(i);

  Tensor ap = a.permute(a_perm);
  Tensor bp = b.permute(b_perm);

  long m = ap.size() / contracted;
  long n = bp.size() / contracted;

  using RowMat = Eigen::Matrix<cxd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> ma(ap.data().data(), m, contracted);
  Eigen::Map<const RowMat> mb(bp.data().data(), contracted, n);

  std::vector<long> out_shape;
  for (long i : a_free) out_shape.push_back(a.extent(i));
  for (long i : b_free) out_shape.push_back(b.extent(i));
  if (out_shape.empty()) out_shape.push_back(1);  // scalar result as a 1-tensor

  Tensor out(out_shape);
  Eigen::Map<RowMat> mo(out.data().data(), m, n);
  mo.noalias() = ma * mb;
  return out;
}

// Kronecker product of rank-2 tensors; used to assemble local Hamiltonian terms.
inline Tensor kron(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::Dimension, "kron needs rank-2 tensors");
  const long ar = a.extent(0), ac = a.extent(1), br = b.extent(0), bc = b.extent(1);
  Tensor out({ar * br, ac * bc});
  for (long i = 0; i < ar; ++i)
    for (long j = 0; j < ac; ++j) {
      cxd aij = a.at({i, j});
      if (aij == cxd(0, 0)) continue;
      for (long k = 0; k < br; ++k)
        for (long l = 0; l < bc; ++l) out.at({i * br + k, j * bc + l}) = aij * b.at({k, l});
    }
  return out;
}

struct SvdTruncated {
  Tensor u;                 // m x k, orthonormal columns
  std::vector<double> s;    // k singular values, descending, nonnegative
  Tensor v;                 // k x n, orthonormal rows; input ~ u * diag(s) * v
  double discarded_weight;  // sum of squares of dropped singular values
};

inline SvdTruncated svd_truncate(const Tensor& m, long max_rank, double cutoff) {
  require(m.rank() == 2, ErrorKind::Dimension, "svd_truncate needs a rank-2 tensor");
  require(max_rank >= 1, ErrorKind::Dimension, "svd_truncate: max_rank must be >= 1");
  require(cutoff >= 0, ErrorKind::Dimension, "svd_truncate: cutoff must be >= 0");
  require(m.all_finite(), ErrorKind::Numeric, "svd_truncate: non-finite input");

  Eigen::JacobiSVD<Mat> svd(m.matrix(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  long full = sv.size();
  long keep = 0;
  while (keep < full && sv(keep) > cutoff) ++keep;
  keep = std::min(keep, max_rank);
  keep = std::max<long>(keep, 1);  // never return an empty factorization

  double discarded = 0;
  for (long i = keep; i < full; ++i) discarded += sv(i) * sv(i);

  SvdTruncated out;
  out.u = Tensor::from_matrix(svd.matrixU().leftCols(keep));
  out.s.assign(sv.data(), sv.data() + keep);
  out.v = Tensor::from_matrix(svd.matrixV().leftCols(keep).adjoint());
  out.discarded_weight = discarded;
  return out;
}

}  // namespace fvmps
