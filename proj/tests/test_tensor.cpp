#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fvmps/rng.hpp>
#include <fvmps/tensor.hpp>

using namespace fvmps;

namespace {

// Naive O(n^3)-style contraction oracle: loops over all free and paired
// indices directly.
Tensor contract_oracle(const Tensor& a, const Tensor& b,
                       const std::vector<std::pair<long, long>>& pairs) {
  std::vector<bool> a_used(a.rank(), false), b_used(b.rank(), false);
  for (auto [ia, ib] : pairs) {
    a_used[ia] = true;
    b_used[ib] = true;
  }
  std::vector<long> a_free, b_free, out_shape;
  for (long i = 0; i < a.rank(); ++i)
    if (!a_used[i]) {
      a_free.push_back(i);
      out_shape.push_back(a.extent(i));
    }
  for (long i = 0; i < b.rank(); ++i)
    if (!b_used[i]) {
      b_free.push_back(i);
      out_shape.push_back(b.extent(i));
    }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);

  std::vector<long> pair_ext;
  for (auto [ia, ib] : pairs) pair_ext.push_back(a.extent(ia));
  long pair_total = 1;
  for (long e : pair_ext) pair_total *= e;

  std::vector<long> ai(a.rank()), bi(b.rank()), oi(out_shape.size(), 0);
  long out_total = out.size();
  for (long of = 0; of < out_total; ++of) {
    long rem = of;
    for (long k = static_cast<long>(out_shape.size()) - 1; k >= 0; --k) {
      oi[k] = rem % out_shape[k];
      rem /= out_shape[k];
    }
    cxd acc(0, 0);
    for (long pf = 0; pf < pair_total; ++pf) {
      long prem = pf;
      std::vector<long> pi(pairs.size());
      for (long k = static_cast<long>(pairs.size()) - 1; k >= 0; --k) {
        pi[k] = prem % pair_ext[k];
        prem /= pair_ext[k];
      }
      for (size_t k = 0; k < a_free.size(); ++k) ai[a_free[k]] = oi[k];
      for (size_t k = 0; k < b_free.size(); ++k) bi[b_free[k]] = oi[a_free.size() + k];
      for (size_t k = 0; k < pairs.size(); ++k) {
        ai[pairs[k].first] = pi[k];
        bi[pairs[k].second] = pi[k];
      }
      acc += a.at(ai) * b.at(bi);
    }
    out.at(oi) = acc;
  }
  return out;
}

Tensor random_tensor(Rng& rng, std::vector<long> shape) {
  Tensor t(std::move(shape));
  for (auto& z : t.data()) z = random_unit_complex(rng);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (long i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("contract: identity times vector returns the vector") {
  Tensor id = Tensor::identity(2);
  Tensor v({2}, {cxd(0.3, 0.1), cxd(-1.0, 2.0)});
  Tensor r = contract(id, v, {{1, 0}});
  CHECK(r.shape() == std::vector<long>{2});
  CHECK(std::abs(r.data()[0] - v.data()[0]) < 1e-15);
  CHECK(std::abs(r.data()[1] - v.data()[1]) < 1e-15);
}

TEST_CASE("contract: no pairs gives the outer product with concatenated shape") {
  Rng rng = make_rng(1);
  Tensor a = random_tensor(rng, {2, 3});
  Tensor b = random_tensor(rng, {4});
  Tensor r = contract(a, b, {});
  CHECK(r.shape() == std::vector<long>{2, 3, 4});
  for (long i = 0; i < 2; ++i)
    for (long j = 0; j < 3; ++j)
      for (long k = 0; k < 4; ++k)
        CHECK(std::abs(r.at({i, j, k}) - a.at({i, j}) * b.at({k})) < 1e-15);
}

TEST_CASE("contract: random 3x4 * 4x5 matches the naive-loop oracle") {
  Rng rng = make_rng(2);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {4, 5});
  Tensor r = contract(a, b, {{1, 0}});
  Tensor o = contract_oracle(a, b, {{1, 0}});
  CHECK(max_abs_diff(r, o) < 1e-12);
}

TEST_CASE("contract: multi-axis random tensors match the oracle to 1e-12 relative") {
  Rng rng = make_rng(3);
  for (int rep = 0; rep < 4; ++rep) {
    Tensor a = random_tensor(rng, {3, 5, 2, 4});
    Tensor b = random_tensor(rng, {4, 3, 6});
    std::vector<std::pair<long, long>> pairs{{3, 0}, {0, 1}};
    Tensor r = contract(a, b, pairs);
    Tensor o = contract_oracle(a, b, pairs);
    CHECK(max_abs_diff(r, o) / std::max(1.0, o.norm()) < 1e-12);
  }
}

TEST_CASE("contract is bilinear") {
  Rng rng = make_rng(4);
  Tensor a1 = random_tensor(rng, {4, 3});
  Tensor a2 = random_tensor(rng, {4, 3});
  Tensor b = random_tensor(rng, {3, 5});
  cxd alpha(0.7, -1.3);
  Tensor lhs = contract(a1.scaled(alpha) + a2, b, {{1, 0}});
  Tensor rhs = contract(a1, b, {{1, 0}}).scaled(alpha) + contract(a2, b, {{1, 0}});
  CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("contract: extent mismatch raises a dimension error") {
  Rng rng = make_rng(5);
  Tensor a = random_tensor(rng, {3, 4});
  Tensor b = random_tensor(rng, {5, 2});
  CHECK_THROWS_AS(contract(a, b, {{1, 0}}), Error);
}

TEST_CASE("svd_truncate: identity 4x4 gives unit singular values, zero discarded weight") {
  auto r = svd_truncate(Tensor::identity(4), 4, 0.0);
  REQUIRE(r.s.size() == 4);
  for (double s : r.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.discarded_weight == doctest::Approx(0.0));
}

TEST_CASE("svd_truncate: rank-1 outer product keeps rank 1 exactly") {
  Rng rng = make_rng(6);
  Vec u = random_vector(rng, 5), v = random_vector(rng, 7);
  Mat m = u * v.transpose();
  auto r = svd_truncate(Tensor::from_matrix(m), 1, 0.0);
  CHECK(r.s.size() == 1);
  CHECK(r.discarded_weight < 1e-24);
  // reconstruction
  Mat rec = r.u.matrix() * Eigen::Map<const Eigen::VectorXd>(r.s.data(), 1).asDiagonal().toDenseMatrix() * r.v.matrix();
  CHECK((rec - m).norm() < 1e-12 * m.norm());
}

TEST_CASE("svd_truncate: reconstruction error squared equals discarded weight") {
  Rng rng = make_rng(7);
  Mat m = random_matrix(rng, 8, 8);
  auto r = svd_truncate(Tensor::from_matrix(m), 3, 0.0);
  REQUIRE(r.s.size() == 3);
  Eigen::VectorXd sv = Eigen::Map<const Eigen::VectorXd>(r.s.data(), 3);
  Mat rec = r.u.matrix() * sv.asDiagonal().toDenseMatrix() * r.v.matrix();
  double err2 = (m - rec).squaredNorm();
  CHECK(err2 == doctest::Approx(r.discarded_weight).epsilon(1e-10));
  // against a full SVD oracle
  Eigen::JacobiSVD<Mat> full(m);
  double expect = 0;
  for (int i = 3; i < 8; ++i) expect += full.singularValues()(i) * full.singularValues()(i);
  CHECK(r.discarded_weight == doctest::Approx(expect).epsilon(1e-10));
  // orthonormality
  CHECK((r.u.matrix().adjoint() * r.u.matrix() - Mat::Identity(3, 3)).norm() < 1e-12);
  CHECK((r.v.matrix() * r.v.matrix().adjoint() - Mat::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("svd_truncate: singular values descending and cutoff respected") {
  Rng rng = make_rng(8);
  Mat m = random_matrix(rng, 6, 9);
  auto r = svd_truncate(Tensor::from_matrix(m), 6, 0.5);
  for (size_t i = 1; i < r.s.size(); ++i) CHECK(r.s[i] <= r.s[i - 1]);
  for (size_t i = 0; i < r.s.size(); ++i) CHECK(r.s[i] > 0.5);
}

TEST_CASE("svd_truncate: non-finite input raises a numeric error") {
  Tensor t = Tensor::identity(3);
  t.data()[2] = cxd(std::numeric_limits<double>::quiet_NaN(), 0);
  CHECK_THROWS_AS(svd_truncate(t, 2, 0.0), Error);
}

TEST_CASE("permute round trip") {
  Rng rng = make_rng(9);
  Tensor a = random_tensor(rng, {2, 3, 4});
  Tensor p = a.permute({2, 0, 1});
  CHECK(p.shape() == std::vector<long>{4, 2, 3});
  Tensor back = p.permute({1, 2, 0});
  CHECK(max_abs_diff(a, back) == 0.0);
}
