#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/imps.hpp"
#include "fvmps/model.hpp"
#include "fvmps/mpo.hpp"
#include "fvmps/rng.hpp"

namespace fvmps {

enum class Gauge { LeftOrth, RightOrth, ReflectionSymmetric };
enum class Species { Kink, Antikink, Meson };
enum class EnergyConvention { GapAboveVacuum, TildeEnergy };

inline const char* to_string(Gauge g) {
  switch (g) {
    case Gauge::LeftOrth: return "left-orth";
    case Gauge::RightOrth: return "right-orth";
    case Gauge::ReflectionSymmetric: return "reflection-symmetric";
  }
  return "?";
}

inline const char* to_string(Species s) {
  switch (s) {
    case Species::Kink: return "kink";
    case Species::Antikink: return "antikink";
    case Species::Meson: return "meson";
  }
  return "?";
}

// Excitation tensor B between two vacua: left vacuum enters in AL form,
// right vacuum in AR form. Between them B parameterizes one site.
struct ExcitationTensor {
  Site B;
  UniformImps left_vac;
  UniformImps right_vac;
  Gauge gauge = Gauge::LeftOrth;
  double p = 0;
  Species species = Species::Meson;
  int band = 0;

  long D() const { return B.rows(); }

  double norm_sq() const {
    double s = 0;
    for (const Mat& m : B.m) s += m.squaredNorm();
    return s;
  }
};

namespace qp_detail {

// Geometric channel solve for right-moving environments:
//   X = z * (rb + T_mix(X)),  T_mix(X)[a] = sum_{b>=a} W[a][b] ket X[b] bra†.
// Identity channels (first, last) reduce to (1 - z T_op) linear systems,
// deflated against the dominant mixed-transfer eigenpair when it sits on the
// unit circle (equal vacua). Pending channels are explicit.
struct Deflation {
  bool active = false;
  Mat right_vec;  // dominant right object (e.g. C)
  Mat left_vec;   // pairing partner with tr(left * right) = 1
};

inline MpoEnv solve_right_geometric(const Mpo& w, cxd z, const Site& ket, const Site& bra,
                                    const MpoEnv& rb, const Deflation& defl, double tol) {
  const int last = w.last();
  MpoEnv x(static_cast<size_t>(w.chi));
  for (int a = last; a >= 0; --a) {
    Mat rhs = rb[static_cast<size_t>(a)].size() ? rb[static_cast<size_t>(a)]
                                                : Mat::Zero(ket.rows(), bra.rows());
    for (int b = a + 1; b <= last; ++b) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op || x[static_cast<size_t>(b)].size() == 0) continue;
      rhs += transfer_right_op(ket, bra, *op, x[static_cast<size_t>(b)]);
    }
    const auto& diag = w.w[static_cast<size_t>(a)][static_cast<size_t>(a)];
    if (!diag) {
      x[static_cast<size_t>(a)] = z * rhs;
      continue;
    }
    // solve (1 - z T_diag) X = z rhs
    const long rk = ket.rows(), rbm = bra.rows();
    Mat rhs_m = z * rhs;
    if (defl.active) rhs_m -= (defl.left_vec * rhs_m).trace() * defl.right_vec;
    auto apply = [&](const Vec& v, Vec& y) {
      Eigen::Map<const Mat> vm(v.data(), rk, rbm);
      Mat t = transfer_right_op(ket, bra, *diag, vm);
      Mat ym = vm - z * t;
      if (defl.active) ym += (defl.left_vec * vm).trace() * defl.right_vec;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs_m.data(), rhs_m.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    x[static_cast<size_t>(a)] = Eigen::Map<const Mat>(sol.data(), rk, rbm);
  }
  return x;
}

inline MpoEnv solve_left_geometric(const Mpo& w, cxd z, const Site& ket, const Site& bra,
                                   const MpoEnv& lb, const Deflation& defl, double tol) {
  const int last = w.last();
  MpoEnv x(static_cast<size_t>(w.chi));
  for (int b = 0; b <= last; ++b) {
    Mat rhs = lb[static_cast<size_t>(b)].size() ? lb[static_cast<size_t>(b)]
                                                : Mat::Zero(bra.cols(), ket.cols());
    for (int a = 0; a < b; ++a) {
      const auto& op = w.w[static_cast<size_t>(a)][static_cast<size_t>(b)];
      if (!op || x[static_cast<size_t>(a)].size() == 0) continue;
      rhs += transfer_left_op(ket, bra, *op, x[static_cast<size_t>(a)]);
    }
    const auto& diag = w.w[static_cast<size_t>(b)][static_cast<size_t>(b)];
    if (!diag) {
      x[static_cast<size_t>(b)] = z * rhs;
      continue;
    }
    const long lb_dim = bra.cols(), lk = ket.cols();
    Mat rhs_m = z * rhs;
    if (defl.active) rhs_m -= (rhs_m * defl.right_vec).trace() * defl.left_vec;
    auto apply = [&](const Vec& v, Vec& y) {
      Eigen::Map<const Mat> vm(v.data(), lb_dim, lk);
      Mat t = transfer_left_op(ket, bra, *diag, vm);
      Mat ym = vm - z * t;
      if (defl.active) ym += (vm * defl.right_vec).trace() * defl.left_vec;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs_m.data(), rhs_m.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    x[static_cast<size_t>(b)] = Eigen::Map<const Mat>(sol.data(), lb_dim, lk);
  }
  return x;
}

}  // namespace qp_detail

// Everything fixed during one band solve: vacua, environments, and the
// atomic-term MPO whose per-term completion makes the energy subtraction
// convention exact.
struct ExcitationFrame {
  UniformImps aL;  // used in AL form
  UniformImps aR;  // used in AR form
  ModelParams params;
  Mpo w;           // atomic-term MPO
  MpoEnv env_l;    // left fixed point of aL (per-site e_L subtracted)
  MpoEnv env_r;    // right fixed point of aR (per-site e_R subtracted)
  double e_l = 0;
  double e_r = 0;
  double p = 0;
  bool same_vacuum = false;  // equal states left and right (nontopological)
  Mat defl_c;                // deflation object for equal vacua
  double solver_tol = 1e-12;

  long D() const { return aL.D(); }
  long d() const { return aL.d(); }
  int range() const { return params.range(); }
};

inline ExcitationFrame make_excitation_frame(const UniformImps& aL, const UniformImps& aR,
                                             const ModelParams& params, double p,
                                             double tol = 1e-12) {
  require(aL.D() == aR.D(), ErrorKind::Dimension,
          "excitation frame needs equal bond dimensions left and right");
  ExcitationFrame f;
  f.aL = aL;
  f.aR = aR;
  f.params = params;
  f.p = p;
  f.w = hamiltonian_mpo_atomic(params);
  f.solver_tol = tol;
  auto lfp = mpo_left_fixed_point(f.w, aL.AL, aL.r_env(), tol);
  auto rfp = mpo_right_fixed_point(f.w, aR.AR, aR.l_env(), tol);
  f.env_l = lfp.env;
  f.env_r = rfp.env;
  f.e_l = lfp.energy_density;
  f.e_r = rfp.energy_density;
  // Equal vacua (nontopological sector): the mixed transfer has a unit
  // eigenvalue with eigenvector C; gauge-fixed tensors never excite it, but
  // the linear solves are deflated against it for stability.
  auto mixed = arnoldi_top(transfer_right_map(aL.AL, aR.AR), 1, 1e-8, 3000, 0x51504652);
  f.same_vacuum = std::abs(std::abs(mixed[0].value) - 1.0) < 1e-6;
  if (f.same_vacuum) f.defl_c = aL.center();
  return f;
}

// Apply the momentum-space effective Hamiltonian to a B tensor (any gauge
// content; callers pass gauge-fixed parameterizations).
inline Site excitation_heff_apply(const ExcitationFrame& f, const Site& b) {
  const cxd zp = std::exp(cxd(0, f.p));
  const cxd zm = std::exp(cxd(0, -f.p));
  const int r = f.range();

  // (A) diagonal group: bra and ket B on the same site. The r straddling
  // terms are referenced at the mean density, which keeps the effective
  // Hamiltonian exactly reflection-covariant (kink <-> antikink mirror).
  Site y = mpo_sandwich_one(f.w, f.env_l, f.env_r, b);
  const double e_mid = 0.5 * (f.e_l + f.e_r);
  for (long s = 0; s < b.phys_dim(); ++s)
    y.m[static_cast<size_t>(s)] -= (r * e_mid) * b.m[static_cast<size_t>(s)];

  qp_detail::Deflation defl_r, defl_l;
  if (f.same_vacuum) {
    defl_r.active = defl_l.active = true;
    defl_r.right_vec = f.defl_c;  // T(C) = C with left partner C
    defl_r.left_vec = f.defl_c;
    defl_l.right_vec = f.defl_c;
    defl_l.left_vec = f.defl_c;
  }

  // (B) ket B strictly to the right of the bra site
  MpoEnv rb = mpo_env_step_right(f.w, f.env_r, b, f.aR.AR);
  MpoEnv rsum = qp_detail::solve_right_geometric(f.w, zp, f.aL.AL, f.aR.AR, rb, defl_r,
                                                 f.solver_tol);
  Site yb = mpo_sandwich_one(f.w, f.env_l, rsum, f.aL.AL);
  for (long s = 0; s < b.phys_dim(); ++s) y.m[static_cast<size_t>(s)] += yb.m[static_cast<size_t>(s)];

  // (C) ket B strictly to the left of the bra site
  MpoEnv lb = mpo_env_step_left(f.w, f.env_l, b, f.aL.AL);
  MpoEnv lsum = qp_detail::solve_left_geometric(f.w, zm, f.aR.AR, f.aL.AL, lb, defl_l,
                                                f.solver_tol);
  Site yc = mpo_sandwich_one(f.w, lsum, f.env_r, f.aR.AR);
  for (long s = 0; s < b.phys_dim(); ++s) y.m[static_cast<size_t>(s)] += yc.m[static_cast<size_t>(s)];

  return y;
}

// ---------------------------------------------------------------------------
// Band solving

struct BandState {
  double energy = 0;
  ExcitationTensor tensor;
};

struct BandSolveOptions {
  double tol = 1e-11;
  double frame_tol = 1e-12;
  uint64_t seed = 4242;
  double hermiticity_tol = 1e-10;
};

// Solve for the lowest n_bands excitation tensors at momentum p in the given
// orthogonality gauge. Energies are gaps above the vacuum for equal vacua
// and the tilde (confinement-subtracted) energies otherwise.
inline std::vector<BandState> solve_band(const UniformImps& aL, const UniformImps& aR,
                                         const ModelParams& params, double p, int n_bands,
                                         Gauge gauge, Species species,
                                         const BandSolveOptions& opts = {}) {
  require(gauge == Gauge::LeftOrth || gauge == Gauge::RightOrth, ErrorKind::Config,
          "solve_band optimizes in LeftOrth or RightOrth gauge; apply "
          "ReflectionSymmetric post hoc with fix_gauge");
  ExcitationFrame f = make_excitation_frame(aL, aR, params, p, opts.frame_tol);
  const long dloc = f.d(), bd = f.D();

  std::vector<Mat> basis;  // per physical index, D x n or n x D blocks
  long nb;
  if (gauge == Gauge::LeftOrth) {
    basis = left_null_space(aL.AL, Mat::Identity(bd, bd));
    nb = basis[0].cols();
  } else {
    basis = right_null_space(aR.AR, Mat::Identity(bd, bd));
    nb = basis[0].rows();
  }

  auto coords_to_site = [&](const Vec& x) {
    Eigen::Map<const Mat> xm(x.data(), gauge == Gauge::LeftOrth ? nb : bd,
                             gauge == Gauge::LeftOrth ? bd : nb);
    Site b(dloc, bd, bd);
    for (long s = 0; s < dloc; ++s)
      b.m[static_cast<size_t>(s)] = (gauge == Gauge::LeftOrth)
                                        ? Mat(basis[static_cast<size_t>(s)] * xm)
                                        : Mat(xm * basis[static_cast<size_t>(s)]);
    return b;
  };
  auto site_to_coords = [&](const Site& y) {
    Mat xm = (gauge == Gauge::LeftOrth) ? Mat(Mat::Zero(nb, bd)) : Mat(Mat::Zero(bd, nb));
    for (long s = 0; s < dloc; ++s) {
      if (gauge == Gauge::LeftOrth)
        xm.noalias() += basis[static_cast<size_t>(s)].adjoint() * y.m[static_cast<size_t>(s)];
      else
        xm.noalias() += y.m[static_cast<size_t>(s)] * basis[static_cast<size_t>(s)].adjoint();
    }
    return Vec(Eigen::Map<const Vec>(xm.data(), xm.size()));
  };

  LinearMap heff;
  heff.dim = nb * bd;
  heff.apply = [&](const Vec& x, Vec& y) {
    Site b = coords_to_site(x);
    Site yb = excitation_heff_apply(f, b);
    y = site_to_coords(yb);
  };

  // Hermiticity is a strong end-to-end check of the environment assembly.
  {
    Rng rng = make_rng(opts.seed, 0x48455243);
    Vec xa = random_vector(rng, heff.dim).normalized();
    Vec xb = random_vector(rng, heff.dim).normalized();
    cxd m_ab = xa.dot(heff(xb));
    cxd m_ba = xb.dot(heff(xa));
    double asym = std::abs(m_ab - std::conj(m_ba));
    double scale = std::max({1.0, std::abs(m_ab), std::abs(m_ba)});
    require(asym <= opts.hermiticity_tol * scale * 10, ErrorKind::Gauge,
            "effective excitation Hamiltonian is not Hermitian; gauge or "
            "environment inconsistency (asymmetry " +
                std::to_string(asym) + ")");
  }

  auto pairs = lowest_eigenpairs_hermitian(heff, n_bands, opts.tol, 6000, opts.seed);

  std::vector<BandState> out;
  for (int k = 0; k < static_cast<int>(pairs.size()); ++k) {
    BandState bs;
    bs.energy = pairs[static_cast<size_t>(k)].first;
    bs.tensor.B = coords_to_site(pairs[static_cast<size_t>(k)].second);
    bs.tensor.left_vac = aL;
    bs.tensor.right_vac = aR;
    bs.tensor.gauge = gauge;
    bs.tensor.p = p;
    bs.tensor.species = species;
    bs.tensor.band = k;
    out.push_back(std::move(bs));
  }
  return out;
}

// (B ⊗ conj(A)) as a D^2 x D^2 matrix: entry ((i k),(j l)) = B_ij conj(A_kl).
inline Mat kroneckerLike(const Mat& b, const Mat& a) {
  const long bd = b.rows();
  Mat out(bd * a.rows(), bd * a.cols());
  for (long i = 0; i < b.rows(); ++i)
    for (long j = 0; j < b.cols(); ++j)
      out.block(i * a.rows(), j * a.cols(), a.rows(), a.cols()) = b(i, j) * a.conjugate();
  return out;
}

// Adjoint contraction: (F† W)_ij = sum_kl A_kl W_((i k),(j l)) for
// F(B) = B ⊗ conj(A).
inline Mat deKroneckerLike(const Mat& w, const Mat& a) {
  const long ar = a.rows(), ac = a.cols();
  const long bd = w.rows() / ar;
  Mat out = Mat::Zero(bd, w.cols() / ac);
  for (long i = 0; i < bd; ++i)
    for (long j = 0; j < out.cols(); ++j)
      out(i, j) = (w.block(i * ar, j * ac, ar, ac).array() * a.array()).sum();
  return out;
}

// ---------------------------------------------------------------------------
// Gauge fixing

// Per-site overlap sum_m e^{ipm} <phi_0(bra)|phi_m(ket)> of two momentum
// eigenstates over the same vacua; |result| = 1 iff the states coincide.
inline cxd momentum_state_overlap(const ExcitationTensor& bra, const ExcitationTensor& ket,
                                  double tol = 1e-12) {
  require(bra.D() == ket.D(), ErrorKind::Dimension, "overlap: bond mismatch");
  require(std::abs(bra.p - ket.p) < 1e-12, ErrorKind::Config, "overlap: momenta differ");
  const Site& al = ket.left_vac.AL;
  const Site& ar = ket.right_vac.AR;
  const double p = ket.p;
  const cxd zp = std::exp(cxd(0, p)), zm = std::exp(cxd(0, -p));

  // same-site term
  cxd val(0, 0);
  for (long s = 0; s < al.phys_dim(); ++s)
    val += (bra.B.m[static_cast<size_t>(s)].adjoint() * ket.B.m[static_cast<size_t>(s)]).trace();

  bool same_vacuum =
      std::abs(std::abs(arnoldi_top(transfer_right_map(al, ar), 1, 1e-8, 3000, 7)[0].value) -
               1.0) < 1e-6;
  Mat defl_c = ket.left_vac.center();

  // ket B to the right: transport its dressed right environment to the bra
  {
    Mat r0 = transfer_right(ket.B, ar, Mat::Identity(ket.D(), ket.D()));
    Mat rhs = zp * r0;
    if (same_vacuum) rhs -= (defl_c * rhs).trace() * defl_c;
    auto apply = [&](const Vec& x, Vec& y) {
      Eigen::Map<const Mat> xm(x.data(), r0.rows(), r0.cols());
      Mat ym = xm - zp * transfer_right(al, ar, xm);
      if (same_vacuum) ym += (defl_c * xm).trace() * defl_c;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs.data(), rhs.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    Eigen::Map<const Mat> rsum(sol.data(), r0.rows(), r0.cols());
    Mat l0 = transfer_left(al, bra.B, Mat::Identity(ket.D(), ket.D()));
    val += (l0 * Mat(rsum)).trace();
  }
  // ket B to the left
  {
    Mat l0 = transfer_left(ket.B, al, Mat::Identity(ket.D(), ket.D()));
    Mat rhs = zm * l0;
    if (same_vacuum) rhs -= (rhs * defl_c).trace() * defl_c;
    auto apply = [&](const Vec& x, Vec& y) {
      Eigen::Map<const Mat> xm(x.data(), l0.rows(), l0.cols());
      Mat ym = xm - zm * transfer_left(ar, al, xm);
      if (same_vacuum) ym += (xm * defl_c).trace() * defl_c;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs.data(), rhs.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    Eigen::Map<const Mat> lsum(sol.data(), l0.rows(), l0.cols());
    val += transfer_left(ar, bra.B, Mat(lsum)).trace();
  }
  return val;
}

// B -> B + AL x - e^{-ip} x AR leaves the momentum eigenstate invariant.
inline Site apply_gauge_shift(const ExcitationTensor& b, const Mat& x) {
  Site out = b.B;
  const cxd zm = std::exp(cxd(0, -b.p));
  for (long s = 0; s < out.phys_dim(); ++s)
    out.m[static_cast<size_t>(s)] +=
        b.left_vac.AL.m[static_cast<size_t>(s)] * x - zm * (x * b.right_vac.AR.m[static_cast<size_t>(s)]);
  return out;
}

inline ExcitationTensor fix_gauge(const ExcitationTensor& b, Gauge target, double tol = 1e-12) {
  const long bd = b.D();
  const Site& al = b.left_vac.AL;
  const Site& ar = b.right_vac.AR;
  const cxd zm = std::exp(cxd(0, -b.p)), zp = std::exp(cxd(0, b.p));
  bool same_vacuum =
      std::abs(std::abs(arnoldi_top(transfer_right_map(al, ar), 1, 1e-8, 3000, 7)[0].value) -
               1.0) < 1e-6;
  Mat defl_c = b.left_vac.center();

  ExcitationTensor out = b;
  out.gauge = target;

  if (target == Gauge::LeftOrth) {
    // (1 - e^{-ip} T')(x) = -sum_s AL^s† B^s  with T'(x) = sum AL^s† x AR^s
    Mat m = Mat::Zero(bd, bd);
    for (long s = 0; s < al.phys_dim(); ++s)
      m += al.m[static_cast<size_t>(s)].adjoint() * b.B.m[static_cast<size_t>(s)];
    Mat rhs = -m;
    if (same_vacuum) rhs -= (rhs * defl_c).trace() * defl_c;
    auto apply = [&](const Vec& v, Vec& y) {
      Eigen::Map<const Mat> xm(v.data(), bd, bd);
      Mat t = Mat::Zero(bd, bd);
      for (long s = 0; s < al.phys_dim(); ++s)
        t += al.m[static_cast<size_t>(s)].adjoint() * xm * ar.m[static_cast<size_t>(s)];
      Mat ym = xm - zm * t;
      if (same_vacuum) ym += (xm * defl_c).trace() * defl_c;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs.data(), rhs.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    out.B = apply_gauge_shift(b, Eigen::Map<const Mat>(sol.data(), bd, bd));
  } else if (target == Gauge::RightOrth) {
    // (1 - e^{+ip} T)(x) = e^{+ip} sum_s B^s AR^s†  with T(x) = sum AL^s x AR^s†
    Mat m = Mat::Zero(bd, bd);
    for (long s = 0; s < al.phys_dim(); ++s)
      m += b.B.m[static_cast<size_t>(s)] * ar.m[static_cast<size_t>(s)].adjoint();
    Mat rhs = zp * m;
    if (same_vacuum) rhs -= (defl_c * rhs).trace() * defl_c;
    auto apply = [&](const Vec& v, Vec& y) {
      Eigen::Map<const Mat> xm(v.data(), bd, bd);
      Mat t = Mat::Zero(bd, bd);
      for (long s = 0; s < al.phys_dim(); ++s)
        t += al.m[static_cast<size_t>(s)] * xm * ar.m[static_cast<size_t>(s)].adjoint();
      Mat ym = xm - zp * t;
      if (same_vacuum) ym += (defl_c * xm).trace() * defl_c;
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Vec b0 = Eigen::Map<const Vec>(rhs.data(), rhs.size());
    Vec sol = gmres(apply, b0, tol, 4000, 60);
    out.B = apply_gauge_shift(b, Eigen::Map<const Mat>(sol.data(), bd, bd));
  } else {
    // Reflection-symmetric least squares: minimize |F_L(x)|^2 + |F_R(x)|^2
    // where F_L = sum_s B'(x)^s ⊗ conj(AL^s), F_R likewise with AR.
    auto fl = [&](const Site& bb) {
      Mat out_m = Mat::Zero(bd * bd, bd * bd);
      for (long s = 0; s < al.phys_dim(); ++s)
        out_m += kroneckerLike(bb.m[static_cast<size_t>(s)], al.m[static_cast<size_t>(s)]);
      return out_m;
    };
    auto fr = [&](const Site& bb) {
      Mat out_m = Mat::Zero(bd * bd, bd * bd);
      for (long s = 0; s < al.phys_dim(); ++s)
        out_m += kroneckerLike(bb.m[static_cast<size_t>(s)], ar.m[static_cast<size_t>(s)]);
      return out_m;
    };
    // adjoint of x -> F(B(x)) as a map back onto x
    auto fl_adj = [&](const Mat& w_big) {
      Mat g = Mat::Zero(bd, bd);
      for (long s = 0; s < al.phys_dim(); ++s) {
        Mat grad_b = deKroneckerLike(w_big, al.m[static_cast<size_t>(s)]);
        g += al.m[static_cast<size_t>(s)].adjoint() * grad_b;
        g -= std::conj(zm) * grad_b * ar.m[static_cast<size_t>(s)].adjoint();
      }
      return g;
    };
    auto fr_adj = [&](const Mat& w_big) {
      Mat g = Mat::Zero(bd, bd);
      for (long s = 0; s < al.phys_dim(); ++s) {
        Mat grad_b = deKroneckerLike(w_big, ar.m[static_cast<size_t>(s)]);
        g += al.m[static_cast<size_t>(s)].adjoint() * grad_b;
        g -= std::conj(zm) * grad_b * ar.m[static_cast<size_t>(s)].adjoint();
      }
      return g;
    };
    Site b0s = b.B;
    Mat v_l = fl(b0s), v_r = fr(b0s);
    auto normal_apply = [&](const Vec& v, Vec& y) {
      Eigen::Map<const Mat> xm(v.data(), bd, bd);
      ExcitationTensor tmp = b;
      tmp.B = Site(al.phys_dim(), bd, bd);
      for (long s = 0; s < al.phys_dim(); ++s)
        tmp.B.m[static_cast<size_t>(s)] =
            al.m[static_cast<size_t>(s)] * xm - zm * (xm * ar.m[static_cast<size_t>(s)]);
      Mat big_l = fl(tmp.B), big_r = fr(tmp.B);
      Mat ym = fl_adj(big_l) + fr_adj(big_r);
      y = Eigen::Map<const Vec>(ym.data(), ym.size());
    };
    Mat rhs = -(fl_adj(v_l) + fr_adj(v_r));
    Vec b0 = Eigen::Map<const Vec>(rhs.data(), rhs.size());
    Vec sol;
    try {
      sol = gmres(normal_apply, b0, std::max(tol, 1e-11), 4000, 80);
    } catch (const ConvergenceError& e) {
      throw Error(ErrorKind::IllConditioned,
                  std::string("reflection-symmetric gauge system is singular: ") + e.what());
    }
    out.B = apply_gauge_shift(b, Eigen::Map<const Mat>(sol.data(), bd, bd));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispersion and position diagnostics

struct BandSample {
  double p = 0;
  double energy = 0;
};

struct QuasiparticleBand {
  Species species = Species::Kink;
  int band = 0;
  EnergyConvention convention = EnergyConvention::GapAboveVacuum;
  std::vector<BandSample> samples;  // sorted by p
  std::vector<ExcitationTensor> tensors;
};

struct Dispersion {
  std::vector<double> p, e, v;  // grid, energy, group velocity

  double energy(double pp) const { return interp(pp, e); }
  double velocity(double pp) const { return interp(pp, v); }

 private:
  double interp(double pp, const std::vector<double>& f) const {
    require(!p.empty(), ErrorKind::Range, "dispersion: empty samples");
    // wrap into the sampled Brillouin zone (periodic continuation)
    const double two_pi = 2 * std::numbers::pi;
    while (pp > p.back() + 1e-12) pp -= two_pi;
    while (pp < p.front() - 1e-12) pp += two_pi;
    require(pp >= p.front() - 1e-9 && pp <= p.back() + 1e-9, ErrorKind::Range,
            "dispersion: momentum outside sampled range");
    pp = std::clamp(pp, p.front(), p.back());
    // natural cubic spline, computed on demand (grids are small)
    size_t n = p.size();
    std::vector<double> h(n - 1), alpha(n, 0), l(n, 1), mu(n, 0), zc(n, 0), cs(n, 0), bs(n - 1),
        ds(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) h[i] = p[i + 1] - p[i];
    for (size_t i = 1; i + 1 < n; ++i)
      alpha[i] = 3.0 * ((f[i + 1] - f[i]) / h[i] - (f[i] - f[i - 1]) / h[i - 1]);
    for (size_t i = 1; i + 1 < n; ++i) {
      l[i] = 2.0 * (p[i + 1] - p[i - 1]) - h[i - 1] * mu[i - 1];
      mu[i] = h[i] / l[i];
      zc[i] = (alpha[i] - h[i - 1] * zc[i - 1]) / l[i];
    }
    for (size_t j = n - 1; j-- > 0;) {
      cs[j] = zc[j] - mu[j] * cs[j + 1];
      bs[j] = (f[j + 1] - f[j]) / h[j] - h[j] * (cs[j + 1] + 2 * cs[j]) / 3.0;
      ds[j] = (cs[j + 1] - cs[j]) / (3 * h[j]);
    }
    size_t j = 0;
    while (j + 2 < n && pp > p[j + 1]) ++j;
    double dx = pp - p[j];
    return f[j] + bs[j] * dx + cs[j] * dx * dx + ds[j] * dx * dx * dx;
  }
};

// E(p) and dE/dp from band samples: centered finite differences on the
// periodically-continued samples, then spline interpolation.
inline Dispersion make_dispersion(const QuasiparticleBand& band) {
  require(band.samples.size() >= 5, ErrorKind::Config, "dispersion needs >= 5 samples");
  Dispersion d;
  const double two_pi = 2 * std::numbers::pi;
  size_t n = band.samples.size();
  auto samples = band.samples;
  std::sort(samples.begin(), samples.end(),
            [](const BandSample& a, const BandSample& b) { return a.p < b.p; });
  for (const auto& s : samples) {
    d.p.push_back(s.p);
    d.e.push_back(s.energy);
  }
  for (size_t i = 0; i < n; ++i) {
    double pm = (i == 0) ? d.p[n - 1] - two_pi : d.p[i - 1];
    double pp = (i + 1 == n) ? d.p[0] + two_pi : d.p[i + 1];
    double em = (i == 0) ? d.e[n - 1] : d.e[i - 1];
    double ep = (i + 1 == n) ? d.e[0] : d.e[i + 1];
    d.v.push_back((ep - em) / (pp - pm));
  }
  return d;
}

// <Z_i> profile of a single localized excitation |phi_j(B)> around the B
// site (offsets relative to j).
inline std::vector<double> excitation_z_profile(const ExcitationTensor& b, long half_width) {
  const Site& al = b.left_vac.AL;
  const Site& ar = b.right_vac.AR;
  Mat z = pauli_z().matrix();
  double norm = b.norm_sq();
  std::vector<double> out;
  for (long delta = -half_width; delta <= half_width; ++delta) {
    double val;
    if (delta < 0) {
      Mat l = transfer_left_op(al, al, z, Mat::Identity(b.D(), b.D()));
      for (long k = 1; k < -delta; ++k) l = transfer_left(al, al, l);
      val = std::real(transfer_left(b.B, b.B, l).trace());
    } else if (delta == 0) {
      val = std::real(transfer_left_op(b.B, b.B, z, Mat::Identity(b.D(), b.D())).trace());
    } else {
      Mat r = transfer_right_op(ar, ar, z, Mat::Identity(b.D(), b.D()));
      for (long k = 1; k < delta; ++k) r = transfer_right(ar, ar, r);
      val = std::real(transfer_right(b.B, b.B, r).trace());
    }
    out.push_back(val / norm);
  }
  return out;
}

// Offset between the B site and the interpolated <Z> zero crossing:
// shift = j_B - x_cross. The bare kink gives +0.5 by this convention.
inline double kink_position_shift(const ExcitationTensor& b, long half_width = 0) {
  require(b.species == Species::Kink || b.species == Species::Antikink, ErrorKind::Config,
          "kink_position_shift applies to topological tensors");
  if (half_width <= 0) half_width = std::max<long>(20, 4 * b.D());
  auto prof = excitation_z_profile(b, half_width);
  for (size_t i = 0; i + 1 < prof.size(); ++i) {
    if ((prof[i] > 0) == (prof[i + 1] > 0)) continue;
    double x0 = static_cast<double>(static_cast<long>(i)) - half_width;
    double x_cross = x0 + prof[i] / (prof[i] - prof[i + 1]);
    return -x_cross;
  }
  throw Error(ErrorKind::Detection, "no <Z> zero crossing in the evaluation window");
}

}  // namespace fvmps
