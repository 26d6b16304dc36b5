#pragma once

#include <cmath>
#include <numbers>

#include "fvmps/errors.hpp"
#include "fvmps/imps.hpp"
#include "fvmps/model.hpp"
#include "fvmps/mpo.hpp"
#include "fvmps/rng.hpp"

namespace fvmps {

struct VacuumOptions {
  int max_iter = 6000;
  uint64_t seed = 20201204;
  double noise = 1e-2;      // start-state perturbation
  double env_tol = 1e-13;   // fixed-point solver tolerance
  int restart_every = 0;    // 0: use D*D
};

struct VacuumSolution {
  UniformImps state;
  double energy = 0;
  double grad_norm = 0;
  int iterations = 0;
};

struct VacuumPair {
  UniformImps true_vac;
  UniformImps false_vac;
  double e_true = 0;
  double e_false = 0;
  double grad_norm_true = 0;
  double grad_norm_false = 0;
};

namespace detail {

// Gradient in metric-orthonormal tangent coordinates. With E_L the MPO fixed
// point of AL, E_R that of AR, and AC = AL C, the coordinates
//   x = V† sandwich(E_L, W, E_R, AC)
// satisfy: moving the plain uniform tensor by B = V (d C) changes the state
// along a tangent vector of physical norm |d| and energy slope 2 Re <x, d>.
// No environment inversions appear anywhere.
// x are metric-orthonormal tangent coordinates (|x| is the physical gradient
// norm); g_m = x C† is the gradient with respect to the raw move parameter M
// in B = V M. Optimizing in M-space needs no environment inversions; the
// C† factor is exactly the natural r-metric preconditioner.
struct VacuumGradient {
  Eigen::MatrixXcd x;          // metric-orthonormal coordinates; |x| is the gradient norm
  std::vector<Mat> null_basis;
  Mat center;
  Mat center_pinv;
  Site al;
  double energy = 0;
};

// Null basis built by orthonormalizing a fixed completion matrix against the
// AL columns. Unlike an SVD null space it varies continuously with the state,
// so directions can be transported between consecutive iterates.
inline std::vector<Mat> continuous_null_basis(const Site& al, const Mat& completion) {
  const long d = al.phys_dim(), bd = al.rows();
  Mat m(d * bd, al.cols());
  for (long s = 0; s < d; ++s) m.block(s * bd, 0, bd, al.cols()) = al.m[static_cast<size_t>(s)];
  Mat proj = completion - m * (m.adjoint() * completion);
  Eigen::HouseholderQR<Mat> qr(proj);
  Mat q = qr.householderQ() * Mat::Identity(d * bd, completion.cols());
  // one more pass for orthogonality against m
  q -= m * (m.adjoint() * q);
  Eigen::HouseholderQR<Mat> qr2(q);
  q = qr2.householderQ() * Mat::Identity(d * bd, completion.cols());
  std::vector<Mat> v(static_cast<size_t>(d));
  for (long s = 0; s < d; ++s) v[static_cast<size_t>(s)] = q.block(s * bd, 0, bd, completion.cols());
  return v;
}

inline VacuumGradient vacuum_gradient(const UniformImps& u, const Mpo& w, double env_tol,
                                      const Mat& completion) {
  auto lfp = mpo_left_fixed_point(w, u.AL, u.r_env(), env_tol);
  auto rfp = mpo_right_fixed_point(w, u.AR, u.l_env(), env_tol);
  Site y = mpo_sandwich_one(w, lfp.env, rfp.env, u.ac());
  auto v = continuous_null_basis(u.AL, completion);
  Mat x = Mat::Zero(v[0].cols(), u.D());
  for (long s = 0; s < u.d(); ++s)
    x.noalias() += v[static_cast<size_t>(s)].adjoint() * y.m[static_cast<size_t>(s)];

  VacuumGradient g;
  g.x = x;
  g.null_basis = v;
  g.center = u.center();
  Eigen::VectorXd cinv = Eigen::VectorXd::Zero(u.D());
  double floor = u.c.maxCoeff() * 1e-10;
  for (long i = 0; i < u.D(); ++i)
    if (u.c(i) > floor) cinv(i) = 1.0 / u.c(i);
  g.center_pinv = cinv.cast<cxd>().asDiagonal();
  g.al = u.AL;
  g.energy = lfp.energy_density;
  return g;
}

// Move tensor realizing orthonormal tangent coordinates: B = V x C^+ with a
// relative pseudo-inverse floor. Directions with negligible Schmidt weight
// are dropped; their physical effect is suppressed by the same factor.
inline Site move_tensor(const VacuumGradient& g, const Mat& coords, long d) {
  Mat m = coords * g.center_pinv;
  Site b(d, g.null_basis[0].rows(), m.cols());
  for (long s = 0; s < d; ++s)
    b.m[static_cast<size_t>(s)] = g.null_basis[static_cast<size_t>(s)] * m;
  return b;
}

// The Hamiltonian is real: its vacua can be represented by real tensors, and
// keeping them real makes momentum reversal exact at finite bond dimension.
// Complex components are pure gauge + convergence-shell noise; project them
// out whenever they are demonstrably small.
inline UniformImps strip_imaginary(const UniformImps& u) {
  double re = 0, im = 0;
  for (long s = 0; s < u.d(); ++s) {
    re += u.AL.m[static_cast<size_t>(s)].real().norm();
    im += u.AL.m[static_cast<size_t>(s)].imag().norm();
  }
  if (im >= 0.02 * re) return u;  // genuinely complex: leave it alone
  UniformImps out = u;
  for (long s = 0; s < u.d(); ++s) {
    out.AL.m[static_cast<size_t>(s)] = u.AL.m[static_cast<size_t>(s)].real().cast<cxd>();
    out.AR.m[static_cast<size_t>(s)] = u.AR.m[static_cast<size_t>(s)].real().cast<cxd>();
  }
  return out;
}

inline Site add_scaled(const Site& a, const Site& b, double alpha) {
  Site out = a;
  for (long s = 0; s < a.phys_dim(); ++s)
    out.m[static_cast<size_t>(s)] += alpha * b.m[static_cast<size_t>(s)];
  return out;
}

}  // namespace detail

// Lowest product-state energy density over single-site rotations; a sanity
// bound any optimized vacuum must beat.
inline double best_product_energy(const ModelParams& p, int grid = 720) {
  LocalHamiltonian ham = build_hamiltonian(p);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    double theta = std::numbers::pi * i / grid;
    for (double phi : {0.0, std::numbers::pi}) {
      Site s(2, 1, 1);
      s.m[0](0, 0) = std::cos(theta / 2);
      s.m[1](0, 0) = std::sin(theta / 2) * std::exp(cxd(0, phi));
      auto u = canonicalize(s);
      best = std::min(best, std::real(expect_local_uniform(u, ham.term, ham.range)));
    }
  }
  return best;
}

// Nonlinear conjugate gradient (Polak-Ribiere+) on the iMPS tangent space,
// with a secant line search on the directional gradient. Near convergence
// energy differences drop below double precision, so the step control works
// with gradients throughout.
inline VacuumSolution minimize_energy(UniformImps u, const ModelParams& p, double tol,
                                      const VacuumOptions& opts = {},
                                      const std::function<void(const UniformImps&, double)>&
                                          on_accept = {}) {
  const Mpo w = hamiltonian_mpo(p, 0.0);
  const long dloc = u.d();
  const long bd = u.D();
  const int restart = opts.restart_every > 0
                          ? opts.restart_every
                          : static_cast<int>(std::max<long>(30, bd * bd));

  // fixed completion for a continuous tangent frame (deterministic per seed)
  const int patience = tol < 1e-7 ? 400 : 150;
  Mat completion;
  auto reseed_frame = [&](uint64_t stream) {
    Rng frame_rng = make_rng(opts.seed + stream, 0x4652414d);
    completion = random_real_matrix(frame_rng, dloc * bd, (dloc - 1) * bd);
  };
  reseed_frame(0);

  auto grad = [&](const UniformImps& s) { return detail::vacuum_gradient(s, w, opts.env_tol, completion); };

  u = detail::strip_imaginary(u);
  auto g = grad(u);
  double grad_norm = g.x.norm();
  UniformImps best_state = u;
  double best_grad = grad_norm;
  double best_energy = g.energy;
  int best_iter = 0;
  Mat prev_x, prev_d;
  bool have_prev = false;
  double alpha_prev = 0.1;
  int it = 0;

  for (; it < opts.max_iter && grad_norm > tol; ++it) {
    if (it - best_iter > patience) break;  // no progress for a long stretch

    Mat d = -g.x;
    if (have_prev && (it % restart) != 0 && prev_x.rows() == g.x.rows()) {
      double denom = prev_x.squaredNorm();
      if (denom > 1e-300) {
        double beta = std::max(
            0.0, std::real((g.x.conjugate().cwiseProduct(g.x - prev_x)).sum()) / denom);
        d += beta * prev_d;
      }
    }
    double slope0 = 2.0 * std::real((g.x.conjugate().cwiseProduct(d)).sum());
    if (slope0 >= -1e-300) {
      d = -g.x;
      slope0 = -2.0 * g.x.squaredNorm();
    }
    Site dir = detail::move_tensor(g, d, dloc);

    bool accepted = false;
    double alpha = alpha_prev;
    UniformImps next_state;
    detail::VacuumGradient next_g;
    for (int ls = 0; ls < 20 && !accepted; ++ls) {
      UniformImps trial;
      try {
        trial = detail::strip_imaginary(
            canonicalize(detail::add_scaled(g.al, dir, alpha), 1e-14, opts.seed + 7));
      } catch (const Error&) {
        alpha *= 0.3;
        continue;
      }
      auto gt = grad(trial);
      double e_drop = g.energy - gt.energy;
      double expected_drop = -alpha * slope0;
      bool energy_resolvable = expected_drop > 5e-12 * std::abs(g.energy);
      bool ok;
      if (energy_resolvable)
        ok = e_drop > 0.1 * expected_drop && gt.x.norm() < 8.0 * grad_norm;
      else
        // below energy resolution: allow the non-monotone conjugate-gradient
        // tail; the best-state tracker and patience window are the safeguard
        ok = gt.x.norm() < 1.5 * grad_norm;
      if (!ok) {
        alpha *= 0.35;
        continue;
      }
      accepted = true;
      next_state = trial;
      next_g = gt;
      // approximate secant refinement along d (frames are continuous, so
      // coordinate reuse gives a usable directional derivative)
      double slope1 = 2.0 * std::real((gt.x.conjugate().cwiseProduct(d)).sum());
      if (std::abs(slope0 - slope1) > 1e-300) {
        double alpha2 = alpha * slope0 / (slope0 - slope1);
        if (std::isfinite(alpha2) && alpha2 > 0.05 * alpha && alpha2 < 8 * alpha &&
            std::abs(alpha2 - alpha) > 0.03 * alpha) {
          try {
            UniformImps t2 = detail::strip_imaginary(
                canonicalize(detail::add_scaled(g.al, dir, alpha2), 1e-14, opts.seed + 11));
            auto g2 = grad(t2);
            if (g2.x.norm() < gt.x.norm() &&
                g2.energy <= g.energy + 5e-13 * std::abs(g.energy) + 1e-15) {
              next_state = t2;
              next_g = g2;
              alpha = alpha2;
            }
          } catch (const Error&) {
          }
        }
      }
    }
    if (!accepted) {
      if (have_prev) {
        have_prev = false;  // retry from steepest descent
        continue;
      }
      alpha_prev = std::max(1e-8, 0.01 * alpha_prev);
      continue;
    }

    prev_x = g.x;
    prev_d = d;
    have_prev = true;
    alpha_prev = std::clamp((alpha < alpha_prev * 0.9) ? alpha : alpha * 1.6, 1e-7, 4.0);
    u = next_state;
    g = next_g;
    grad_norm = g.x.norm();
    if (grad_norm < best_grad) {
      best_grad = grad_norm;
      best_state = u;
      best_energy = g.energy;
      best_iter = it;
    }
    if (on_accept) on_accept(u, g.energy);
  }

  // rescue attempts from the best state with fresh frames
  for (int attempt = 1; attempt <= 2 && best_grad > tol && it < opts.max_iter; ++attempt) {
    reseed_frame(static_cast<uint64_t>(1000 * attempt));
    u = best_state;
    g = grad(u);
    grad_norm = g.x.norm();
    have_prev = false;
    best_iter = it;
    alpha_prev = 0.05;
    int local_best_iter = it;
    for (; it < opts.max_iter && grad_norm > tol && (it - local_best_iter) <= patience; ++it) {
      Mat d = -g.x;
      if (have_prev && prev_x.rows() == g.x.rows()) {
        double denom = prev_x.squaredNorm();
        if (denom > 1e-300) {
          double beta = std::max(
              0.0, std::real((g.x.conjugate().cwiseProduct(g.x - prev_x)).sum()) / denom);
          d += beta * prev_d;
        }
      }
      double slope0 = 2.0 * std::real((g.x.conjugate().cwiseProduct(d)).sum());
      if (slope0 >= -1e-300) {
        d = -g.x;
      }
      Site dir = detail::move_tensor(g, d, dloc);
      bool accepted = false;
      double alpha = alpha_prev;
      for (int ls = 0; ls < 20 && !accepted; ++ls) {
        UniformImps trial;
        try {
          trial = detail::strip_imaginary(
              canonicalize(detail::add_scaled(g.al, dir, alpha), 1e-14, opts.seed + 7));
        } catch (const Error&) {
          alpha *= 0.3;
          continue;
        }
        auto gt = grad(trial);
        if (gt.x.norm() < 1.5 * grad_norm) {
          accepted = true;
          prev_x = g.x;
          prev_d = d;
          have_prev = true;
          u = trial;
          g = gt;
          grad_norm = g.x.norm();
          alpha_prev = std::clamp(alpha * 1.4, 1e-7, 4.0);
          if (grad_norm < best_grad) {
            best_grad = grad_norm;
            best_state = u;
            best_energy = g.energy;
            local_best_iter = it;
          }
        } else {
          alpha *= 0.35;
        }
      }
      if (!accepted) {
        if (have_prev) {
          have_prev = false;
          continue;
        }
        break;
      }
    }
  }

  grad_norm = best_grad;
  if (grad_norm > tol)
    throw ConvergenceError("vacuum optimization did not reach gradient tolerance", grad_norm);
  return {best_state, best_energy, best_grad, it};
}

inline UniformImps initial_vacuum_guess(const ModelParams& p, long D, const VacuumOptions& opts) {
  Rng rng = make_rng(opts.seed, 0x56414355);
  Site a(2, D, D);
  // aligned product embedded at full rank: a graded diagonal keeps every
  // Schmidt level populated so the tangent frame is well conditioned
  int up = (p.h >= 0) ? 0 : 1;
  const double eta = 0.35;
  double scale = 1.0;
  for (long i = 0; i < D; ++i, scale *= eta) a.m[static_cast<size_t>(up)](i, i) = scale;
  // real perturbation: the Hamiltonian is real, so real tensors represent the
  // vacua and keep momentum-reversal exact at finite bond dimension
  for (long s = 0; s < 2; ++s)
    a.m[static_cast<size_t>(s)] += opts.noise * random_real_matrix(rng, D, D);
  return canonicalize(a);
}

// Embed a converged state into a larger bond dimension with a small seeded
// perturbation opening the new directions.
inline UniformImps grow_bond_dimension(const UniformImps& u, long D2, double noise,
                                       uint64_t seed) {
  require(D2 >= u.D(), ErrorKind::Dimension, "grow_bond_dimension: target smaller than source");
  if (D2 == u.D()) return u;
  Rng rng = make_rng(seed, 0x47524f57);
  Site t(u.d(), D2, D2);
  Site ac = u.ac();
  for (long s = 0; s < u.d(); ++s) {
    t.m[static_cast<size_t>(s)] = noise * random_real_matrix(rng, D2, D2);
    t.m[static_cast<size_t>(s)].topLeftCorner(u.D(), u.D()) += ac.m[static_cast<size_t>(s)];
  }
  return canonicalize(t);
}

// Vacuum search with warm-started growth: converge cheaply at small D, then
// grow toward the target, polishing to the requested tolerance at full D.
inline VacuumSolution find_true_vacuum(const ModelParams& p, long D, double tol,
                                       const VacuumOptions& opts = {}) {
  p.validate();
  require(D >= 1, ErrorKind::Config, "bond dimension must be >= 1");

  std::vector<long> schedule;
  for (long dd = std::min<long>(D, 4); dd < D; dd = std::min(D, dd * 2))
    schedule.push_back(dd);
  schedule.push_back(D);

  UniformImps u = initial_vacuum_guess(p, schedule.front(), opts);
  VacuumSolution sol;
  for (size_t stage = 0; stage < schedule.size(); ++stage) {
    bool final_stage = (stage + 1 == schedule.size());
    double stage_tol = final_stage ? tol : std::max(tol, 1e-7);
    if (schedule[stage] > u.D())
      u = grow_bond_dimension(u, schedule[stage], 1e-4, opts.seed + stage);
    sol = minimize_energy(u, p, stage_tol, opts);
    u = sol.state;
  }

  double bound = best_product_energy(p);
  require(sol.energy <= bound + 1e-9, ErrorKind::Consistency,
          "optimized vacuum is above the best product state");
  return sol;
}

// False vacuum: optimize the spin-flipped true vacuum and watch for collapse.
inline VacuumSolution find_false_vacuum(const UniformImps& true_vac, const ModelParams& p,
                                        double tol, const VacuumOptions& opts = {}) {
  p.validate();
  LocalHamiltonian ham = build_hamiltonian(p);
  double e_true = energy_density(true_vac, ham);
  double z_true = std::real(expect_local_uniform(true_vac, pauli_z(), 1));

  UniformImps start = true_vac.apply_op(pauli_x().matrix());
  auto watchdog = [&](const UniformImps& s, double e) {
    if (p.h == 0.0) return;
    double z = std::real(expect_local_uniform(s, pauli_z(), 1));
    bool sign_flipped = z * z_true > 0;
    bool fell_through = e < e_true + std::abs(p.h) * std::abs(z_true);
    if (sign_flipped || fell_through)
      throw Error(ErrorKind::MetastabilityLost,
                  "false-vacuum search collapsed toward the true vacuum; "
                  "h too large for this (g, lambda, D)");
  };
  VacuumSolution sol = minimize_energy(start, p, tol, opts, watchdog);
  watchdog(sol.state, sol.energy);
  if (p.h != 0.0) {
    double z = std::real(expect_local_uniform(sol.state, pauli_z(), 1));
    require(z * z_true < 0, ErrorKind::MetastabilityLost,
            "false-vacuum magnetization does not oppose the true vacuum");
  }
  return sol;
}

inline VacuumPair solve_vacuum_pair(const ModelParams& p, long D, double tol,
                                    const VacuumOptions& opts = {}) {
  VacuumSolution t = find_true_vacuum(p, D, tol, opts);
  VacuumSolution f = find_false_vacuum(t.state, p, tol, opts);
  VacuumPair pair;
  pair.true_vac = t.state;
  pair.false_vac = f.state;
  pair.e_true = t.energy;
  pair.e_false = f.energy;
  pair.grad_norm_true = t.grad_norm;
  pair.grad_norm_false = f.grad_norm;
  require(pair.e_false >= pair.e_true - 1e-10, ErrorKind::Consistency,
          "false vacuum ended below the true vacuum");
  return pair;
}

}  // namespace fvmps
