#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fvmps/errors.hpp"
#include "fvmps/model.hpp"
#include "fvmps/mpo.hpp"
#include "fvmps/window.hpp"

namespace fvmps {

enum class Integrator { Rk45, ProjectorSplitting2Site };

struct EvolutionConfig {
  double dt = 0.05;
  double t_final = 10.0;
  long d_max = 64;
  int stage_switch = 20;           // initial two-site projector-splitting steps
  double expansion_cutoff = 1e-10; // discarded-weight target per bond
  Integrator integrator = Integrator::Rk45;
  double inversion_floor = 1e-12;  // pseudo-inverse floor on Schmidt coefficients
  int max_growth_per_bond = 4;     // per expansion pass
  double boundary_threshold = 1e-6;  // excess energy density flagging edge contact
  int krylov_dim = 16;             // local exponential subspace

  void validate() const {
    require(dt > 0, ErrorKind::Config, "dt must be positive");
    require(d_max >= 1, ErrorKind::Config, "d_max must be >= 1");
    require(expansion_cutoff >= 0, ErrorKind::Config, "expansion_cutoff must be >= 0");
  }
};

struct StepDiagnostics {
  long step = 0;
  double t = 0;
  double energy = 0;
  double energy_drift = 0;  // |1 - E/E0|
  double norm_error = 0;    // |1 - <psi|psi>| accumulated per step before rescaling
  double trunc_error = 0;   // max over bonds of the smallest kept Schmidt coefficient
  double max_entropy = 0;
  long max_entropy_bond = 0;
  long max_bond = 0;
  double wall_ms = 0;
  bool boundary_warning = false;
};

struct RunDiagnostics {
  std::vector<StepDiagnostics> steps;
  bool boundary_collision = false;
  double initial_energy = 0;
};

namespace tdvp_detail {

struct SiteEnvs {
  Mat l_sqrt, l_isqrt, r_sqrt, r_isqrt;
};

inline std::pair<Mat, Mat> split_sqrt(const Mat& h, double floor_coeff) {
  return herm_sqrt_and_invsqrt(h, floor_coeff * floor_coeff);
}

// Krylov (Lanczos) approximation of exp(z H) v for Hermitian H.
inline std::vector<Mat> krylov_expm(const std::function<std::vector<Mat>(const std::vector<Mat>&)>& h,
                                    std::vector<Mat> v, cxd z, int m, double tol) {
  auto dot = [](const std::vector<Mat>& a, const std::vector<Mat>& b) {
    cxd s(0, 0);
    for (size_t i = 0; i < a.size(); ++i)
      s += (a[i].conjugate().cwiseProduct(b[i])).sum();
    return s;
  };
  auto axpy = [](std::vector<Mat>& y, cxd c, const std::vector<Mat>& x) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
  };
  double nrm0 = std::sqrt(std::abs(dot(v, v)));
  if (nrm0 == 0) return v;
  for (auto& m_ : v) m_ /= nrm0;

  std::vector<std::vector<Mat>> basis{v};
  std::vector<double> alpha, beta;
  for (int j = 0; j < m; ++j) {
    auto w = h(basis[static_cast<size_t>(j)]);
    double a = std::real(dot(basis[static_cast<size_t>(j)], w));
    alpha.push_back(a);
    axpy(w, -a, basis[static_cast<size_t>(j)]);
    if (j > 0) axpy(w, -beta[static_cast<size_t>(j - 1)], basis[static_cast<size_t>(j - 1)]);
    for (const auto& b : basis) axpy(w, -dot(b, w), b);  // full reorthogonalization
    double bnorm = std::sqrt(std::abs(dot(w, w)));
    if (bnorm < 1e-13 || j + 1 == m) {
      beta.push_back(bnorm);
      break;
    }
    beta.push_back(bnorm);
    for (auto& m_ : w) m_ /= bnorm;
    basis.push_back(std::move(w));
    (void)tol;
  }
  const int k = static_cast<int>(basis.size());
  Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    tri(i, i) = alpha[static_cast<size_t>(i)];
    if (i + 1 < k) tri(i, i + 1) = tri(i + 1, i) = beta[static_cast<size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
  Vec coeff = Vec::Zero(k);
  for (int i = 0; i < k; ++i) {
    cxd amp(0, 0);
    for (int j = 0; j < k; ++j)
      amp += es.eigenvectors()(0, j) * std::exp(z * es.eigenvalues()(j)) *
             es.eigenvectors()(i, j);
    coeff(i) = amp;
  }
  std::vector<Mat> out(v.size(), Mat::Zero(v[0].rows(), v[0].cols()));
  for (int i = 0; i < k; ++i) axpy(out, nrm0 * coeff(i), basis[static_cast<size_t>(i)]);
  return out;
}

}  // namespace tdvp_detail

// Window TDVP with frozen bulks. The bulk MPO fixed points are computed once;
// a single engine owns the evolving state and its diagnostics.
class TdvpEngine {
 public:
  TdvpEngine(WindowMps state, const ModelParams& params, EvolutionConfig cfg)
      : state_(std::move(state)), params_(params), cfg_(cfg) {
    cfg_.validate();
    ham_ = build_hamiltonian(params);
    e_l_ = energy_density(state_.left_bulk, ham_);
    e_r_ = energy_density(state_.right_bulk, ham_);
    w_ = hamiltonian_mpo(params, e_l_);
    auto lfp = mpo_left_fixed_point(w_, state_.left_bulk.AL, state_.left_bulk.r_env());
    auto rfp = mpo_right_fixed_point(w_, state_.right_bulk.AR, state_.right_bulk.l_env());
    bulk_l_ = lfp.env;
    bulk_r_ = rfp.env;
    junction_ = mpo_junction_energy(bulk_l_, bulk_r_);
    normalize_window(state_);
    e0_ = measure_energy();
    diag_.initial_energy = e0_;
    last_good_ = state_;
  }

  const WindowMps& state() const { return state_; }
  WindowMps& state_mut() { return state_; }
  double time() const { return t_; }
  long step_count() const { return step_; }
  const RunDiagnostics& diagnostics() const { return diag_; }
  double initial_energy() const { return e0_; }

  // Resume support: restore the drift reference and step counter of an
  // interrupted run so diagnostics continue seamlessly.
  void restore_run_position(double t, long step, double reference_energy) {
    t_ = t;
    step_ = step;
    e0_ = reference_energy;
    diag_.initial_energy = reference_energy;
  }
  const LocalHamiltonian& ham() const { return ham_; }
  double left_density() const { return e_l_; }
  double right_density() const { return e_r_; }

  double measure_energy() const {
    auto renvs = window_right_mpo_envs(w_, state_, bulk_r_);
    return mpo_env_pairing(bulk_l_, renvs[0]) / window_norm2(state_) - junction_;
  }

  // One classical RK4 step of the TDVP flow; optional bond expansion first.
  void step_rk45(bool allow_expansion = true) {
    begin_ = std::chrono::steady_clock::now();
    check_conditioning();
    if (allow_expansion && state_.max_bond() < cfg_.d_max) expand_bonds();

    auto deriv = [&](const WindowMps& s) { return tangent_derivative(s); };
    const double dt = cfg_.dt;
    auto k1 = deriv(state_);
    auto k2 = deriv(applied(state_, k1, dt / 2));
    auto k3 = deriv(applied(state_, k2, dt / 2));
    auto k4 = deriv(applied(state_, k3, dt));
    for (long i = 1; i <= state_.n(); ++i) {
      Site& a = state_.site_mut(i);
      for (long s = 0; s < a.phys_dim(); ++s)
        a.m[static_cast<size_t>(s)] +=
            (dt / 6.0) * (k1[static_cast<size_t>(i - 1)].m[static_cast<size_t>(s)] +
                          2.0 * k2[static_cast<size_t>(i - 1)].m[static_cast<size_t>(s)] +
                          2.0 * k3[static_cast<size_t>(i - 1)].m[static_cast<size_t>(s)] +
                          k4[static_cast<size_t>(i - 1)].m[static_cast<size_t>(s)]);
    }
    finish_step();
  }

  // Two-site projector-splitting step (inversion free, grows bonds).
  void step_projector_splitting() {
    begin_ = std::chrono::steady_clock::now();
    const double tau = cfg_.dt / 2;
    sweep_ltr(tau);
    sweep_rtl(tau);
    finish_step();
  }

  void step() {
    if (step_ < cfg_.stage_switch || cfg_.integrator == Integrator::ProjectorSplitting2Site) {
      step_projector_splitting();
    } else {
      try {
        step_rk45();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::IllConditioned) throw;
        // recondition through one projector-splitting step, then continue
        step_projector_splitting();
      }
    }
  }

  using Observer = std::function<void(const TdvpEngine&, const StepDiagnostics&)>;

  RunDiagnostics evolve(const Observer& observer = {}, int observer_cadence = 1) {
    const long n_steps = static_cast<long>(std::llround(cfg_.t_final / cfg_.dt));
    for (long k = step_; k < n_steps; ++k) {
      step();
      if (observer && (step_ % std::max(1, observer_cadence) == 0))
        observer(*this, diag_.steps.back());
    }
    return diag_;
  }

  // Current per-bond spectra; used by diagnostics and tests.
  std::vector<Eigen::VectorXd> schmidt_profile() const {
    auto l = window_left_norm_envs(state_);
    auto r = window_right_norm_envs(state_);
    std::vector<Eigen::VectorXd> out;
    for (long b = 0; b <= state_.n(); ++b)
      out.push_back(schmidt_sq_at_bond(l[static_cast<size_t>(b)], r[static_cast<size_t>(b)]));
    return out;
  }

 private:
  // Tangent-space derivative dA_i/dt = -i B_i for every window site.
  std::vector<Site> tangent_derivative(const WindowMps& s) const {
    auto lenvs = window_left_mpo_envs(w_, s, bulk_l_);
    auto renvs = window_right_mpo_envs(w_, s, bulk_r_);
    double norm2 = std::real(lenvs.back()[0].trace());
    // normalize the right stacks so the projection acts on a unit state
    for (auto& env : renvs)
      for (auto& m : env)
        if (m.size()) m /= norm2;

    const long n = s.n();
    std::vector<Site> b(static_cast<size_t>(n));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 1; i <= n; ++i) {
      const Site& a = s.site(i);
      const Mat& l = lenvs[static_cast<size_t>(i - 1)][0];
      const Mat& r = renvs[static_cast<size_t>(i)][static_cast<size_t>(w_.last())];
      auto [lsq, lisq] = tdvp_detail::split_sqrt(l, cfg_.inversion_floor);
      auto [rsq, risq] = tdvp_detail::split_sqrt(r, cfg_.inversion_floor);
      Site f = mpo_sandwich_one(w_, lenvs[static_cast<size_t>(i - 1)],
                                renvs[static_cast<size_t>(i)], a);
      auto v = left_null_space(a, lsq);
      const long nb = v[0].cols();
      Mat x = Mat::Zero(nb, a.cols());
      for (long ph = 0; ph < a.phys_dim(); ++ph)
        x.noalias() += v[static_cast<size_t>(ph)].adjoint() *
                       (lisq * f.m[static_cast<size_t>(ph)] * risq);
      Site bi(a.phys_dim(), a.rows(), a.cols());
      for (long ph = 0; ph < a.phys_dim(); ++ph)
        bi.m[static_cast<size_t>(ph)] =
            cxd(0, -1) * (lisq * v[static_cast<size_t>(ph)] * x * risq);
      b[static_cast<size_t>(i - 1)] = std::move(bi);
    }
    return b;
  }

  static WindowMps applied(const WindowMps& s, const std::vector<Site>& k, double h) {
    WindowMps out = s;
    for (long i = 1; i <= s.n(); ++i) {
      Site& a = out.site_mut(i);
      for (long ph = 0; ph < a.phys_dim(); ++ph)
        a.m[static_cast<size_t>(ph)] += h * k[static_cast<size_t>(i - 1)].m[static_cast<size_t>(ph)];
    }
    return out;
  }

  void check_conditioning() const {
    auto l = window_left_norm_envs(state_);
    auto r = window_right_norm_envs(state_);
    for (long bnd = 1; bnd < state_.n(); ++bnd) {
      Eigen::VectorXd w =
          schmidt_sq_at_bond(l[static_cast<size_t>(bnd)], r[static_cast<size_t>(bnd)]);
      double smallest = std::sqrt(std::max(w(w.size() - 1), 0.0));
      if (smallest < cfg_.inversion_floor)
        throw Error(ErrorKind::IllConditioned,
                    "bond " + std::to_string(bnd) + " Schmidt coefficient " +
                        std::to_string(smallest) +
                        " below the inversion floor; run projector-splitting steps first");
    }
  }

  // Euler-seeded two-site subspace expansion limited by the discarded-weight
  // cutoff, the per-bond growth cap, and d_max.
  void expand_bonds() {
    auto lenvs = window_left_mpo_envs(w_, state_, bulk_l_);
    auto renvs = window_right_mpo_envs(w_, state_, bulk_r_);
    double norm2 = std::real(lenvs.back()[0].trace());
    for (auto& env : renvs)
      for (auto& m : env)
        if (m.size()) m /= norm2;

    const long n = state_.n();
    std::vector<std::pair<std::vector<Mat>, std::vector<Mat>>> grow(
        static_cast<size_t>(n) + 1);  // per bond: (P cols for site i, Q rows for site i+1)

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long bnd = 1; bnd < n; ++bnd) {
      long i = bnd;  // between sites i and i+1
      const Site& a1 = state_.site(i);
      const Site& a2 = state_.site(i + 1);
      long dm = a1.cols();
      long room = std::min<long>(cfg_.d_max - dm, cfg_.max_growth_per_bond);
      if (room <= 0) continue;

      const Mat& l = lenvs[static_cast<size_t>(i - 1)][0];
      const Mat& r = renvs[static_cast<size_t>(i + 1)][static_cast<size_t>(w_.last())];
      auto [lsq, lisq] = tdvp_detail::split_sqrt(l, cfg_.inversion_floor);
      auto [rsq, risq] = tdvp_detail::split_sqrt(r, cfg_.inversion_floor);

      const long d = a1.phys_dim();
      std::vector<Mat> theta(static_cast<size_t>(d * d));
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          theta[static_cast<size_t>(s1 * d + s2)] =
              a1.m[static_cast<size_t>(s1)] * a2.m[static_cast<size_t>(s2)];
      auto f2 = mpo_apply_two(w_, lenvs[static_cast<size_t>(i - 1)],
                              renvs[static_cast<size_t>(i + 1)], theta, d);

      auto vl = left_null_space(a1, lsq);
      auto vr = right_null_space(a2, rsq);
      const long nl = vl[0].cols(), nr = vr[0].rows();
      if (nl == 0 || nr == 0) continue;
      Mat y = Mat::Zero(nl, nr);
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          y.noalias() += vl[static_cast<size_t>(s1)].adjoint() *
                         (lisq * f2[static_cast<size_t>(s1 * d + s2)] * risq) *
                         vr[static_cast<size_t>(s2)].adjoint();

      Eigen::JacobiSVD<Mat> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      double total = sv.squaredNorm();
      if (total < 1e-28) continue;
      long keep = 0;
      double tail = total;
      while (keep < std::min<long>(room, sv.size())) {
        tail -= sv(keep) * sv(keep);
        ++keep;
        if (tail <= cfg_.expansion_cutoff * total) break;
      }
      if (keep == 0) continue;

      std::vector<Mat> p(static_cast<size_t>(d)), q(static_cast<size_t>(d));
      Mat u = svd.matrixU().leftCols(keep);
      Mat vv = svd.matrixV().leftCols(keep).adjoint();  // keep x nr
      for (long s = 0; s < d; ++s) {
        p[static_cast<size_t>(s)] = lisq * vl[static_cast<size_t>(s)] * u;
        Mat scale = (cxd(0, -cfg_.dt) * sv.head(keep)).asDiagonal();
        q[static_cast<size_t>(s)] = scale * vv * vr[static_cast<size_t>(s)] * risq;
      }
      grow[static_cast<size_t>(bnd)] = {p, q};
    }

    // apply the collected expansions with zero-padding
    for (long i = 1; i <= n; ++i) {
      long add_left = (i >= 2 && !grow[static_cast<size_t>(i - 1)].second.empty())
                          ? grow[static_cast<size_t>(i - 1)].second[0].rows()
                          : 0;
      long add_right = (i < n && !grow[static_cast<size_t>(i)].first.empty())
                           ? grow[static_cast<size_t>(i)].first[0].cols()
                           : 0;
      if (add_left == 0 && add_right == 0) continue;
      Site& a = state_.site_mut(i);
      Site bigger(a.phys_dim(), a.rows() + add_left, a.cols() + add_right);
      for (long s = 0; s < a.phys_dim(); ++s) {
        bigger.m[static_cast<size_t>(s)].topLeftCorner(a.rows(), a.cols()) =
            a.m[static_cast<size_t>(s)];
        if (add_left)
          bigger.m[static_cast<size_t>(s)].bottomLeftCorner(add_left, a.cols()) =
              grow[static_cast<size_t>(i - 1)].second[static_cast<size_t>(s)];
        if (add_right)
          bigger.m[static_cast<size_t>(s)].topRightCorner(a.rows(), add_right) =
              grow[static_cast<size_t>(i)].first[static_cast<size_t>(s)];
      }
      a = std::move(bigger);
    }
    state_.check_bonds();
  }

  // Left-to-right projector-splitting half sweep with step tau.
  void sweep_ltr(double tau) {
    right_canonicalize();
    auto renvs = window_right_mpo_envs(w_, state_, bulk_r_);
    std::vector<MpoEnv> lenvs(static_cast<size_t>(state_.n()) + 1);
    lenvs[0] = bulk_l_;
    const long n = state_.n();
    const long d = state_.d();

    for (long i = 1; i < n; ++i) {
      Site& a1 = state_.site_mut(i);
      Site& a2 = state_.site_mut(i + 1);
      std::vector<Mat> theta(static_cast<size_t>(d * d));
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          theta[static_cast<size_t>(s1 * d + s2)] =
              a1.m[static_cast<size_t>(s1)] * a2.m[static_cast<size_t>(s2)];
      auto h2 = [&](const std::vector<Mat>& v) {
        return mpo_apply_two(w_, lenvs[static_cast<size_t>(i - 1)],
                             renvs[static_cast<size_t>(i + 1)], v, d);
      };
      theta = tdvp_detail::krylov_expm(h2, std::move(theta), cxd(0, -tau), cfg_.krylov_dim, 1e-12);

      // split: rows (s1, left) x cols (s2, right)
      long rows = a1.rows(), cols = a2.cols();
      Mat block(rows * d, cols * d);
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          block.block(s1 * rows, s2 * cols, rows, cols) = theta[static_cast<size_t>(s1 * d + s2)];
      Eigen::JacobiSVD<Mat> svd(block, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      double total = sv.squaredNorm();
      long keep = 0;
      double tail = total;
      long cap = std::min<long>(cfg_.d_max, sv.size());
      while (keep < cap) {
        if (sv(keep) < cfg_.inversion_floor && keep > 0) break;
        tail -= sv(keep) * sv(keep);
        ++keep;
        if (tail <= cfg_.expansion_cutoff * total) break;
      }
      keep = std::max<long>(keep, 1);
      trunc_accum_ = std::max(trunc_accum_, sv(std::min<long>(keep, sv.size()) - 1) /
                                                std::sqrt(total));

      Mat u = svd.matrixU().leftCols(keep);
      Eigen::VectorXd kept = sv.head(keep);
      kept /= kept.norm();  // keep the state normalized through truncation
      Mat center = kept.cast<cxd>().asDiagonal() * svd.matrixV().leftCols(keep).adjoint();

      for (long s1 = 0; s1 < d; ++s1)
        a1.m[static_cast<size_t>(s1)] = u.block(s1 * rows, 0, rows, keep);
      lenvs[static_cast<size_t>(i)] =
          mpo_env_step_left(w_, lenvs[static_cast<size_t>(i - 1)], a1, a1);

      // absorb the center into site i+1 and evolve it backward
      std::vector<Mat> c_next(static_cast<size_t>(d));
      for (long s2 = 0; s2 < d; ++s2)
        c_next[static_cast<size_t>(s2)] =
            center.block(0, 0, keep, cols * d).block(0, s2 * cols, keep, cols);
      {
        if (i + 1 <= n - 1) {
          auto h1 = [&](const std::vector<Mat>& v) {
            Site tmp(d, keep, cols);
            for (long s = 0; s < d; ++s) tmp.m[static_cast<size_t>(s)] = v[static_cast<size_t>(s)];
            Site y = mpo_sandwich_one(w_, lenvs[static_cast<size_t>(i)],
                                      renvs[static_cast<size_t>(i + 1)], tmp);
            std::vector<Mat> out(static_cast<size_t>(d));
            for (long s = 0; s < d; ++s) out[static_cast<size_t>(s)] = y.m[static_cast<size_t>(s)];
            return out;
          };
          c_next = tdvp_detail::krylov_expm(h1, std::move(c_next), cxd(0, +tau), cfg_.krylov_dim,
                                            1e-12);
        }
      }
      Site a2_new(d, keep, cols);
      for (long s = 0; s < d; ++s) a2_new.m[static_cast<size_t>(s)] = c_next[static_cast<size_t>(s)];
      a2 = std::move(a2_new);
    }
  }

  void sweep_rtl(double tau) {
    left_canonicalize();
    auto lenvs = window_left_mpo_envs(w_, state_, bulk_l_);
    std::vector<MpoEnv> renvs(static_cast<size_t>(state_.n()) + 1);
    renvs[static_cast<size_t>(state_.n())] = bulk_r_;
    const long n = state_.n();
    const long d = state_.d();

    for (long i = n; i >= 2; --i) {
      Site& a1 = state_.site_mut(i - 1);
      Site& a2 = state_.site_mut(i);
      std::vector<Mat> theta(static_cast<size_t>(d * d));
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          theta[static_cast<size_t>(s1 * d + s2)] =
              a1.m[static_cast<size_t>(s1)] * a2.m[static_cast<size_t>(s2)];
      auto h2 = [&](const std::vector<Mat>& v) {
        return mpo_apply_two(w_, lenvs[static_cast<size_t>(i - 2)],
                             renvs[static_cast<size_t>(i)], v, d);
      };
      theta = tdvp_detail::krylov_expm(h2, std::move(theta), cxd(0, -tau), cfg_.krylov_dim, 1e-12);

      long rows = a1.rows(), cols = a2.cols();
      Mat block(rows * d, cols * d);
      for (long s1 = 0; s1 < d; ++s1)
        for (long s2 = 0; s2 < d; ++s2)
          block.block(s1 * rows, s2 * cols, rows, cols) = theta[static_cast<size_t>(s1 * d + s2)];
      Eigen::JacobiSVD<Mat> svd(block, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      double total = sv.squaredNorm();
      long keep = 0;
      double tail = total;
      long cap = std::min<long>(cfg_.d_max, sv.size());
      while (keep < cap) {
        if (sv(keep) < cfg_.inversion_floor && keep > 0) break;
        tail -= sv(keep) * sv(keep);
        ++keep;
        if (tail <= cfg_.expansion_cutoff * total) break;
      }
      keep = std::max<long>(keep, 1);
      trunc_accum_ = std::max(trunc_accum_, sv(std::min<long>(keep, sv.size()) - 1) /
                                                std::sqrt(total));

      Eigen::VectorXd kept = sv.head(keep);
      kept /= kept.norm();
      Mat vpart = svd.matrixV().leftCols(keep).adjoint();  // keep x (d cols)
      Mat center = svd.matrixU().leftCols(keep) * kept.cast<cxd>().asDiagonal();

      for (long s2 = 0; s2 < d; ++s2)
        a2.m[static_cast<size_t>(s2)] = vpart.block(0, s2 * cols, keep, cols);
      renvs[static_cast<size_t>(i - 1)] =
          mpo_env_step_right(w_, renvs[static_cast<size_t>(i)], a2, a2);

      std::vector<Mat> c_prev(static_cast<size_t>(d));
      for (long s1 = 0; s1 < d; ++s1)
        c_prev[static_cast<size_t>(s1)] = center.block(s1 * rows, 0, rows, keep);
      if (i - 1 >= 2) {
        auto h1 = [&](const std::vector<Mat>& v) {
          Site tmp(d, rows, keep);
          for (long s = 0; s < d; ++s) tmp.m[static_cast<size_t>(s)] = v[static_cast<size_t>(s)];
          Site y = mpo_sandwich_one(w_, lenvs[static_cast<size_t>(i - 2)],
                                    renvs[static_cast<size_t>(i - 1)], tmp);
          std::vector<Mat> out(static_cast<size_t>(d));
          for (long s = 0; s < d; ++s) out[static_cast<size_t>(s)] = y.m[static_cast<size_t>(s)];
          return out;
        };
        c_prev = tdvp_detail::krylov_expm(h1, std::move(c_prev), cxd(0, +tau), cfg_.krylov_dim,
                                          1e-12);
      }
      Site a1_new(d, rows, keep);
      for (long s = 0; s < d; ++s) a1_new.m[static_cast<size_t>(s)] = c_prev[static_cast<size_t>(s)];
      a1 = std::move(a1_new);
    }
  }

  // Gauge sweeps keeping the center inside the window (bulk bonds frozen).
  void right_canonicalize() {
    for (long i = state_.n(); i >= 2; --i) {
      Site& a = state_.site_mut(i);
      long rows = a.rows(), cols = a.cols();
      Mat m(rows, state_.d() * cols);
      for (long s = 0; s < state_.d(); ++s) m.block(0, s * cols, rows, cols) = a.m[static_cast<size_t>(s)];
      Eigen::HouseholderQR<Mat> qr(m.adjoint());
      long k = std::min(rows, state_.d() * cols);
      Mat q = (qr.householderQ() * Mat::Identity(state_.d() * cols, k)).adjoint();
      Mat lfac = m * q.adjoint();
      for (long s = 0; s < state_.d(); ++s) a.m[static_cast<size_t>(s)] = q.block(0, s * cols, k, cols);
      Site& prev = state_.site_mut(i - 1);
      for (long s = 0; s < state_.d(); ++s) prev.m[static_cast<size_t>(s)] = prev.m[static_cast<size_t>(s)] * lfac;
    }
  }

  void left_canonicalize() {
    for (long i = 1; i <= state_.n() - 1; ++i) {
      Site& a = state_.site_mut(i);
      long rows = a.rows(), cols = a.cols();
      Mat m(state_.d() * rows, cols);
      for (long s = 0; s < state_.d(); ++s) m.block(s * rows, 0, rows, cols) = a.m[static_cast<size_t>(s)];
      Eigen::HouseholderQR<Mat> qr(m);
      long k = std::min(cols, state_.d() * rows);
      Mat q = qr.householderQ() * Mat::Identity(state_.d() * rows, k);
      Mat rfac = q.adjoint() * m;
      for (long s = 0; s < state_.d(); ++s) a.m[static_cast<size_t>(s)] = q.block(s * rows, 0, rows, k);
      Site& next = state_.site_mut(i + 1);
      for (long s = 0; s < state_.d(); ++s) next.m[static_cast<size_t>(s)] = rfac * next.m[static_cast<size_t>(s)];
    }
  }

  void finish_step() {
    if (!state_.all_finite()) {
      state_ = last_good_;
      throw Error(ErrorKind::Numeric,
                  "time step produced non-finite tensors; last good state restored");
    }
    double norm2 = window_norm2(state_);
    double norm_err = std::abs(1.0 - norm2);
    if (!(norm2 > 0) || !std::isfinite(norm2)) {
      state_ = last_good_;
      throw Error(ErrorKind::Numeric, "norm blow-up; last good state restored");
    }
    normalize_window(state_);
    ++step_;
    t_ += cfg_.dt;

    StepDiagnostics d;
    d.step = step_;
    d.t = t_;
    d.norm_error = norm_err;
    d.energy = measure_energy();
    d.energy_drift = (e0_ != 0) ? std::abs(1.0 - d.energy / e0_) : std::abs(d.energy - e0_);
    d.max_bond = state_.max_bond();

    auto l = window_left_norm_envs(state_);
    auto r = window_right_norm_envs(state_);
    double trunc = trunc_accum_;
    for (long bnd = 0; bnd <= state_.n(); ++bnd) {
      Eigen::VectorXd sq =
          schmidt_sq_at_bond(l[static_cast<size_t>(bnd)], r[static_cast<size_t>(bnd)]);
      double ent = entropy_from_schmidt_sq(sq, {});
      if (ent > d.max_entropy) {
        d.max_entropy = ent;
        d.max_entropy_bond = bnd;
      }
      // max over bonds of the smallest kept Schmidt coefficient
      double smallest = std::sqrt(std::max(sq(sq.size() - 1), 0.0));
      trunc = std::max(trunc, smallest);
    }
    d.trunc_error = trunc;
    trunc_accum_ = 0;

    // boundary contact: excess energy density near the window edges
    d.boundary_warning = boundary_contact();
    if (d.boundary_warning) diag_.boundary_collision = true;

    auto t_end = std::chrono::steady_clock::now();
    d.wall_ms = std::chrono::duration<double, std::milli>(t_end - begin_).count();
    diag_.steps.push_back(d);
    last_good_ = state_;
  }

  bool boundary_contact() const {
    const int edge = 10;
    for (long j : {long(1), state_.n() - ham_.range - edge}) {
      for (long k = 0; k < edge; ++k) {
        long site = j + k;
        if (site < 1 || site > state_.n() - ham_.range + 1) continue;
        double ref = (site < state_.n() / 2) ? e_l_ : e_r_;
        double e = std::real(expect_local_window(state_, ham_.term, ham_.range, site)) - ref;
        if (std::abs(e) > cfg_.boundary_threshold) return true;
      }
    }
    return false;
  }

  WindowMps state_;
  WindowMps last_good_;
  ModelParams params_;
  EvolutionConfig cfg_;
  LocalHamiltonian ham_;
  Mpo w_;
  MpoEnv bulk_l_, bulk_r_;
  double junction_ = 0;
  double e_l_ = 0, e_r_ = 0;
  double e0_ = 0;
  double t_ = 0;
  long step_ = 0;
  double trunc_accum_ = 0;
  std::chrono::steady_clock::time_point begin_ = std::chrono::steady_clock::now();
  RunDiagnostics diag_;
};

}  // namespace fvmps
