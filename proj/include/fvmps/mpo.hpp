#pragma once

#include <optional>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/imps.hpp"
#include "fvmps/model.hpp"
#include "fvmps/site_tensor.hpp"

namespace fvmps {

// Upper-triangular matrix-product operator for the spin-chain Hamiltonian.
// Channel 0 is "nothing placed yet", channel chi-1 is "done"; both carry an
// identity on the diagonal. Pending channels have no diagonal entry, so all
// channel recursions below terminate or reduce to a single geometric series.
struct Mpo {
  long d = 2;
  int chi = 0;
  std::vector<std::vector<std::optional<Mat>>> w;

  int first() const { return 0; }
  int last() const { return chi - 1; }

  static Mpo empty(long d, int chi) {
    Mpo m;
    m.d = d;
    m.chi = chi;
    m.w.assign(static_cast<size_t>(chi), std::vector<std::optional<Mat>>(static_cast<size_t>(chi)));
    return m;
  }

  void add(int a, int b, const Mat& op) {
    require(a >= 0 && b >= 0 && a < chi && b < chi, ErrorKind::Dimension, "mpo channel out of range");
    auto& slot = w[static_cast<size_t>(a)][static_cast<size_t>(b)];
    if (slot)
      *slot += op;
    else
      slot = op;
  }
};

// Compact MPO for windows and time evolution: single-site fields enter as
// genuine on-site operators. `onsite_shift` subtracts a constant per site
// (used to measure energies relative to a vacuum density).
inline Mpo hamiltonian_mpo(const ModelParams& p, double onsite_shift = 0.0) {
  p.validate();
  Mat z = pauli_z().matrix(), x = pauli_x().matrix(), id = Mat::Identity(2, 2);
  Mat onsite = -p.g * x - p.h * z - onsite_shift * id;
  if (p.lambda == 0.0) {
    Mpo m = Mpo::empty(2, 3);
    m.add(0, 0, id);
    m.add(2, 2, id);
    m.add(0, 1, z);
    m.add(1, 2, -z);
    m.add(0, 2, onsite);
    return m;
  }
  Mpo m = Mpo::empty(2, 6);
  m.add(0, 0, id);
  m.add(5, 5, id);
  m.add(0, 5, onsite);
  m.add(0, 1, z);   // Z placed
  m.add(1, 5, -z);  // -Z Z
  m.add(1, 2, z);   // Z Z placed
  m.add(2, 5, p.lambda * x);  // lambda Z Z X
  m.add(0, 3, x);   // X placed
  m.add(3, 4, z);   // X Z placed
  m.add(4, 5, p.lambda * z);  // lambda X Z Z
  return m;
}

// Atomic-term MPO: every r-site window term of build_hamiltonian() is one
// monomial chain completing at its last site. This makes "term ends at site
// i" / "term starts at site i" well defined, which the excitation solver's
// per-term energy subtraction relies on.
inline Mpo hamiltonian_mpo_atomic(const ModelParams& p) {
  p.validate();
  Mat z = pauli_z().matrix(), x = pauli_x().matrix(), id = Mat::Identity(2, 2);
  struct Monomial {
    double coeff;
    std::vector<const Mat*> ops;
  };
  std::vector<Monomial> mono;
  if (p.lambda == 0.0) {
    mono = {{-1.0, {&z, &z}},
            {-p.g / 2, {&x, &id}},
            {-p.g / 2, {&id, &x}},
            {-p.h / 2, {&z, &id}},
            {-p.h / 2, {&id, &z}}};
  } else {
    mono = {{-0.5, {&z, &z, &id}},      {-0.5, {&id, &z, &z}},
            {-p.g / 3, {&x, &id, &id}}, {-p.g / 3, {&id, &x, &id}},
            {-p.g / 3, {&id, &id, &x}}, {-p.h / 3, {&z, &id, &id}},
            {-p.h / 3, {&id, &z, &id}}, {-p.h / 3, {&id, &id, &z}},
            {p.lambda, {&x, &z, &z}},   {p.lambda, {&z, &z, &x}}};
  }
  const int r = static_cast<int>(mono[0].ops.size());
  const int chi = 2 + static_cast<int>(mono.size()) * (r - 1);
  Mpo m = Mpo::empty(2, chi);
  const int last = chi - 1;
  m.add(0, 0, id);
  m.add(last, last, id);
  int next_free = 1;
  for (const auto& mm : mono) {
    int prev = 0;
    for (int k = 0; k + 1 < r; ++k) {
      int ch = next_free++;
      m.add(prev, ch, *mm.ops[static_cast<size_t>(k)]);
      prev = ch;
    }
    m.add(prev, last, mm.coeff * (*mm.ops[static_cast<size_t>(r - 1)]));
  }
  return m;
}

// Per-channel environment. Left environments are (bra x ket) matrices, right
// environments (ket x bra), matching the Site transfer conventions.
using MpoEnv = std::vector<Mat>;

inline MpoEnv mpo_env_step_left(const Mpo& w, const MpoEnv& e, const Site& ket, const Site& bra) {
  MpoEnv out(static_cast<size_t>(w.chi), Mat::Zero(bra.cols(), ket.cols()));
  for (int a = 0; a < w.chi; ++a) {
    if (e[static_cast<size_t>(a)].size() == 0) continue;
    for (int b = a; b < w.chi; ++b) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op) continue;
      out[static_cast<size_t>(b)] += transfer_left_op(ket, bra, *op, e[static_cast<size_t>(a)]);
    }
  }
  return out;
}

inline MpoEnv mpo_env_step_right(const Mpo& w, const MpoEnv& e, const Site& ket, const Site& bra) {
  MpoEnv out(static_cast<size_t>(w.chi), Mat::Zero(ket.rows(), bra.rows()));
  for (int b = 0; b < w.chi; ++b) {
    if (e[static_cast<size_t>(b)].size() == 0) continue;
    for (int a = 0; a <= b; ++a) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op) continue;
      out[static_cast<size_t>(a)] += transfer_right_op(ket, bra, *op, e[static_cast<size_t>(b)]);
    }
  }
  return out;
}

// Bra-removed one-site contraction: Y^{sb} = sum_{a,b,sk} W[a][b](sb,sk)
// el[a] A^{sk} er[b]. <A, Y> is the energy; Y is also the raw gradient and
// the one-site effective Hamiltonian action.
inline Site mpo_sandwich_one(const Mpo& w, const MpoEnv& el, const MpoEnv& er, const Site& a) {
  const long d = a.phys_dim();
  Site y(d, el[0].size() ? el[0].rows() : a.rows(), er[0].size() ? er[0].cols() : a.cols());
  for (int ca = 0; ca < w.chi; ++ca) {
    if (el[static_cast<size_t>(ca)].size() == 0) continue;
    // cache el[ca] * A^{sk}
    std::vector<Mat> left(static_cast<size_t>(d));
    bool computed = false;
    for (int cb = ca; cb < w.chi; ++cb) {
      const auto& op = w.w[static_cast<size_t>(ca)][static_cast<size_t>(cb)];
      if (!op || er[static_cast<size_t>(cb)].size() == 0) continue;
      if (!computed) {
        for (long sk = 0; sk < d; ++sk)
          left[static_cast<size_t>(sk)] =
              el[static_cast<size_t>(ca)] * a.m[static_cast<size_t>(sk)];
        computed = true;
      }
      for (long sb = 0; sb < d; ++sb)
        for (long sk = 0; sk < d; ++sk) {
          cxd c = (*op)(sb, sk);
          if (c == cxd(0, 0)) continue;
          y.m[static_cast<size_t>(sb)].noalias() +=
              c * (left[static_cast<size_t>(sk)] * er[static_cast<size_t>(cb)]);
        }
    }
  }
  return y;
}

inline double mpo_expectation(const Mpo& w, const MpoEnv& el, const MpoEnv& er, const Site& a) {
  Site y = mpo_sandwich_one(w, el, er, a);
  cxd acc(0, 0);
  for (long s = 0; s < a.phys_dim(); ++s)
    acc += (a.m[static_cast<size_t>(s)].adjoint() * y.m[static_cast<size_t>(s)]).trace();
  return std::real(acc);
}

// Two-site effective action on theta^{s1 s2} (stored as d*d matrices,
// index s1 * d + s2).
inline std::vector<Mat> mpo_apply_two(const Mpo& w, const MpoEnv& el, const MpoEnv& er,
                                      const std::vector<Mat>& theta, long d) {
  const long rows = theta[0].rows(), cols = theta[0].cols();
  // U[a][s1 s2] = el[a] * theta^{s1 s2}
  std::vector<std::vector<Mat>> u(static_cast<size_t>(w.chi));
  for (int a = 0; a < w.chi; ++a) {
    if (el[static_cast<size_t>(a)].size() == 0) continue;
    bool used = false;
    for (int mch = a; mch < w.chi && !used; ++mch)
      used = w.w[static_cast<size_t>(a)][static_cast<size_t>(mch)].has_value();
    if (!used) continue;
    u[static_cast<size_t>(a)].assign(static_cast<size_t>(d * d), Mat());
    for (long s = 0; s < d * d; ++s)
      u[static_cast<size_t>(a)][static_cast<size_t>(s)] =
          el[static_cast<size_t>(a)] * theta[static_cast<size_t>(s)];
  }
  // V[m][t1, s2] = sum_{a, s1} W[a][m](t1, s1) U[a][s1 s2]
  std::vector<std::vector<Mat>> v(static_cast<size_t>(w.chi));
  for (int mch = 0; mch < w.chi; ++mch) {
    for (int a = 0; a <= mch; ++a) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(mch)];
      if (!op || u[static_cast<size_t>(a)].empty()) continue;
      if (v[static_cast<size_t>(mch)].empty())
        v[static_cast<size_t>(mch)].assign(static_cast<size_t>(d * d),
                                           Mat::Zero(el[0].size() ? el[0].rows() : rows, cols));
      for (long t1 = 0; t1 < d; ++t1)
        for (long s1 = 0; s1 < d; ++s1) {
          cxd c = (*op)(t1, s1);
          if (c == cxd(0, 0)) continue;
          for (long s2 = 0; s2 < d; ++s2)
            v[static_cast<size_t>(mch)][static_cast<size_t>(t1 * d + s2)].noalias() +=
                c * u[static_cast<size_t>(a)][static_cast<size_t>(s1 * d + s2)];
        }
    }
  }
  // out^{t1 t2} = sum_{m, b, s2} W[m][b](t2, s2) V[m][t1, s2] er[b]
  std::vector<Mat> out(static_cast<size_t>(d * d),
                       Mat::Zero(el[0].size() ? el[0].rows() : rows,
                                 er[0].size() ? er[0].cols() : cols));
  for (int mch = 0; mch < w.chi; ++mch) {
    if (v[static_cast<size_t>(mch)].empty()) continue;
    for (int b = mch; b < w.chi; ++b) {
      const auto& op = w.w[static_cast<size_t>(mch)][static_cast<size_t>(b)];
      if (!op || er[static_cast<size_t>(b)].size() == 0) continue;
      for (long t2 = 0; t2 < d; ++t2)
        for (long s2 = 0; s2 < d; ++s2) {
          cxd c = (*op)(t2, s2);
          if (c == cxd(0, 0)) continue;
          for (long t1 = 0; t1 < d; ++t1)
            out[static_cast<size_t>(t1 * d + t2)].noalias() +=
                c * (v[static_cast<size_t>(mch)][static_cast<size_t>(t1 * d + s2)] *
                     er[static_cast<size_t>(b)]);
        }
    }
  }
  return out;
}

// Bond (zero-site) effective action: H0(C) = sum_a el[a] C er[a].
inline Mat mpo_apply_bond(const MpoEnv& el, const MpoEnv& er, const Mat& c) {
  Mat out = Mat::Zero(el[0].rows(), er[0].cols());
  for (size_t a = 0; a < el.size(); ++a) {
    if (el[a].size() == 0 || er[a].size() == 0) continue;
    out.noalias() += el[a] * c * er[a];
  }
  return out;
}

struct UniformFixedPoint {
  MpoEnv env;
  double energy_density = 0;
};

// Left fixed point of the MPO environment for a left-canonical uniform
// tensor. The done-channel geometric series is regularized by subtracting
// the energy density per site; its solution is fixed by <E, r_pair> = 0.
inline UniformFixedPoint mpo_left_fixed_point(const Mpo& w, const Site& al, const Mat& r_pair,
                                              double tol = 1e-13) {
  const long bd = al.rows();
  const int last = w.last();
  MpoEnv env(static_cast<size_t>(w.chi));
  env[0] = Mat::Identity(bd, bd);
  for (int b = 1; b < last; ++b) {
    Mat rhs = Mat::Zero(bd, bd);
    for (int a = 0; a < b; ++a) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op || env[static_cast<size_t>(a)].size() == 0) continue;
      rhs += transfer_left_op(al, al, *op, env[static_cast<size_t>(a)]);
    }
    env[static_cast<size_t>(b)] = rhs;
  }
  Mat rhs = Mat::Zero(bd, bd);
  for (int a = 0; a < last; ++a) {
    const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(last)];
    if (!op || env[static_cast<size_t>(a)].size() == 0) continue;
    rhs += transfer_left_op(al, al, *op, env[static_cast<size_t>(a)]);
  }
  double e = std::real((rhs * r_pair).trace());
  Mat b0 = rhs - e * Mat::Identity(bd, bd);

  auto apply = [&](const Vec& x, Vec& y) {
    Eigen::Map<const Mat> xm(x.data(), bd, bd);
    Mat t = transfer_left(al, al, xm);
    cxd comp = (xm * r_pair).trace();
    Mat ym = xm - t + comp * Mat::Identity(bd, bd);
    y = Eigen::Map<const Vec>(ym.data(), ym.size());
  };
  Vec bb = Eigen::Map<const Vec>(b0.data(), b0.size());
  Vec xx = gmres(apply, bb, tol, 4000, 60);
  env[static_cast<size_t>(last)] = Eigen::Map<const Mat>(xx.data(), bd, bd);
  return {env, e};
}

// General form: `r_dom` is the dominant right environment of the tensor
// (identity for AR, diag(c^2) for AL) and `l_pair` its left partner with
// <l_pair, r_dom> = 1. The start-channel series is regularized by removing
// the dominant component e * r_dom.
inline UniformFixedPoint mpo_right_fixed_point_general(const Mpo& w, const Site& a_site,
                                                       const Mat& r_dom, const Mat& l_pair,
                                                       double tol = 1e-13) {
  const long bd = a_site.rows();
  const int last = w.last();
  MpoEnv env(static_cast<size_t>(w.chi));
  env[static_cast<size_t>(last)] = r_dom;
  for (int a = last - 1; a > 0; --a) {
    Mat rhs = Mat::Zero(bd, bd);
    for (int b = a + 1; b <= last; ++b) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op || env[static_cast<size_t>(b)].size() == 0) continue;
      rhs += transfer_right_op(a_site, a_site, *op, env[static_cast<size_t>(b)]);
    }
    env[static_cast<size_t>(a)] = rhs;
  }
  Mat rhs = Mat::Zero(bd, bd);
  for (int b = 1; b <= last; ++b) {
    const auto& op = w.w[static_cast<size_t>(0)][static_cast<size_t>(b)];
    if (!op || env[static_cast<size_t>(b)].size() == 0) continue;
    rhs += transfer_right_op(a_site, a_site, *op, env[static_cast<size_t>(b)]);
  }
  double e = std::real((l_pair * rhs).trace());
  Mat b0 = rhs - e * r_dom;

  auto apply = [&](const Vec& x, Vec& y) {
    Eigen::Map<const Mat> xm(x.data(), bd, bd);
    Mat t = transfer_right(a_site, a_site, xm);
    cxd comp = (l_pair * xm).trace();
    Mat ym = xm - t + comp * r_dom;
    y = Eigen::Map<const Vec>(ym.data(), ym.size());
  };
  Vec bb = Eigen::Map<const Vec>(b0.data(), b0.size());
  Vec xx = gmres(apply, bb, tol, 4000, 60);
  env[0] = Eigen::Map<const Mat>(xx.data(), bd, bd);
  return {env, e};
}

inline UniformFixedPoint mpo_right_fixed_point(const Mpo& w, const Site& ar, const Mat& l_pair,
                                               double tol = 1e-13) {
  return mpo_right_fixed_point_general(w, ar, Mat::Identity(ar.rows(), ar.rows()), l_pair, tol);
}

}  // namespace fvmps
