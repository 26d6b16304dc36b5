#pragma once

#include <cmath>
#include <vector>

#include "fvmps/errors.hpp"
#include "fvmps/quasiparticle.hpp"
#include "fvmps/window.hpp"

namespace fvmps {

// Gaussian packet f_j = exp(i p j) exp(-(j - x)^2 / sigma^2).
struct WavepacketSpec {
  double x = 0;
  double sigma = 10;
  double p = 0;
  double truncation = 1e-8;  // relative |f| threshold

  void validate() const {
    require(sigma > 0, ErrorKind::Config, "wavepacket width must be positive");
    require(truncation > 0 && truncation < 1, ErrorKind::Config, "bad truncation threshold");
  }

  cxd coeff(long j) const {
    double dx = static_cast<double>(j) - x;
    return std::exp(cxd(0, p * static_cast<double>(j))) * std::exp(-dx * dx / (sigma * sigma));
  }

  // support [lo, hi] where |f| >= truncation * max|f|
  std::pair<long, long> support() const {
    double half = sigma * std::sqrt(-std::log(truncation));
    long lo = static_cast<long>(std::floor(x - half));
    long hi = static_cast<long>(std::ceil(x + half));
    return {lo, hi};
  }
};

struct BubbleSpec {
  WavepacketSpec left;               // kink packet
  WavepacketSpec right;              // antikink packet
  ExcitationTensor kink_tensor;      // between (true | false) vacua
  ExcitationTensor antikink_tensor;  // between (false | true) vacua
  UniformImps interior;              // false vacuum
  double margin_sigmas = 6.0;
  double overlap_threshold = 1e-6;   // max joint amplitude below the diagonal

  double separation() const { return right.x - left.x; }
};

struct BuildReport {
  long window_lo = 0;   // absolute site index of window site 1
  long window_hi = 0;   // absolute site index of window site N
  double truncated_weight = 0;   // relative packet weight dropped at the edges
  double diagonal_overlap = 0;   // bubble only: relative weight at k <= j
};

namespace states_detail {

inline Site block_upper(const Site& a, const Site& b_scaled, const Site& c) {
  // [[a, b],[0, c]]
  const long d = a.phys_dim();
  Site out(d, a.rows() + c.rows(), a.cols() + c.cols());
  for (long s = 0; s < d; ++s) {
    out.m[static_cast<size_t>(s)].topLeftCorner(a.rows(), a.cols()) = a.m[static_cast<size_t>(s)];
    out.m[static_cast<size_t>(s)].topRightCorner(b_scaled.rows(), b_scaled.cols()) =
        b_scaled.m[static_cast<size_t>(s)];
    out.m[static_cast<size_t>(s)].bottomRightCorner(c.rows(), c.cols()) = c.m[static_cast<size_t>(s)];
  }
  return out;
}

inline Site block_enter(const Site& a, const Site& b_scaled) {
  // [a, b]: row coming from the pure-left region
  const long d = a.phys_dim();
  Site out(d, a.rows(), a.cols() + b_scaled.cols());
  for (long s = 0; s < d; ++s) {
    out.m[static_cast<size_t>(s)].leftCols(a.cols()) = a.m[static_cast<size_t>(s)];
    out.m[static_cast<size_t>(s)].rightCols(b_scaled.cols()) = b_scaled.m[static_cast<size_t>(s)];
  }
  return out;
}

inline Site block_exit(const Site& b_scaled, const Site& c) {
  // [[b],[c]]: column collapsing to the pure-right region
  const long d = c.phys_dim();
  Site out(d, b_scaled.rows() + c.rows(), c.cols());
  for (long s = 0; s < d; ++s) {
    out.m[static_cast<size_t>(s)].topRows(b_scaled.rows()) = b_scaled.m[static_cast<size_t>(s)];
    out.m[static_cast<size_t>(s)].bottomRows(c.rows()) = c.m[static_cast<size_t>(s)];
  }
  return out;
}

inline Site scaled_site(const Site& b, cxd f) {
  Site out = b;
  for (Mat& m : out.m) m *= f;
  return out;
}

inline void require_same_state(const UniformImps& a, const UniformImps& b, const char* what) {
  require(a.D() == b.D(), ErrorKind::Dimension, std::string(what) + ": bond mismatch");
  double diff = 0;
  for (long s = 0; s < a.d(); ++s)
    diff += (a.AL.m[static_cast<size_t>(s)] - b.AL.m[static_cast<size_t>(s)]).norm();
  require(diff < 1e-8, ErrorKind::Config, std::string(what) + ": vacuum tensors differ");
}

}  // namespace states_detail

// Wavepacket of a single quasiparticle as one window MPS: bond dimension 2D
// inside the packet support, D outside. The spanned state is
// sum_j f_j |phi_j(B)> with the window covering support plus margins.
inline WindowMps build_single_packet(const ExcitationTensor& b, const WavepacketSpec& w,
                                     BuildReport* report = nullptr, double margin_sigmas = 6.0) {
  w.validate();
  auto [lo, hi] = w.support();
  long margin = static_cast<long>(std::ceil(margin_sigmas * w.sigma));
  long win_lo = lo - margin, win_hi = hi + margin;

  WindowMps s;
  s.left_bulk = b.left_vac;
  s.right_bulk = b.right_vac;
  const Site& al = b.left_vac.AL;
  const Site& ar = b.right_vac.AR;

  for (long j = win_lo; j <= win_hi; ++j) {
    if (j < lo) {
      s.w.push_back(al);
    } else if (j > hi) {
      s.w.push_back(ar);
    } else if (lo == hi) {
      s.w.push_back(states_detail::scaled_site(b.B, w.coeff(j)));
    } else if (j == lo) {
      s.w.push_back(states_detail::block_enter(al, states_detail::scaled_site(b.B, w.coeff(j))));
    } else if (j == hi) {
      s.w.push_back(states_detail::block_exit(states_detail::scaled_site(b.B, w.coeff(j)), ar));
    } else {
      s.w.push_back(
          states_detail::block_upper(al, states_detail::scaled_site(b.B, w.coeff(j)), ar));
    }
  }
  s.check_bonds();

  if (report) {
    report->window_lo = win_lo;
    report->window_hi = win_hi;
    double kept = 0, dropped = 0;
    for (long j = lo; j <= hi; ++j) kept += std::norm(w.coeff(j));
    for (long j = lo - 4 * margin; j < lo; ++j) dropped += std::norm(w.coeff(j));
    for (long j = hi + 1; j <= hi + 4 * margin; ++j) dropped += std::norm(w.coeff(j));
    report->truncated_weight = dropped / (kept + dropped);
  }
  normalize_window(s);
  return s;
}

// False-vacuum bubble: kink packet, false-vacuum interior, antikink packet,
// all between true-vacuum bulks. Bond dimensions stay <= 2D and the block
// construction enforces the j < k ordering of Gaussian amplitudes.
inline WindowMps build_bubble(const BubbleSpec& spec, BuildReport* report = nullptr) {
  spec.left.validate();
  spec.right.validate();
  states_detail::require_same_state(spec.kink_tensor.right_vac, spec.interior,
                                    "bubble kink/interior");
  states_detail::require_same_state(spec.antikink_tensor.left_vac, spec.interior,
                                    "bubble antikink/interior");
  states_detail::require_same_state(spec.kink_tensor.left_vac, spec.antikink_tensor.right_vac,
                                    "bubble outer vacua");

  auto [llo, lhi] = spec.left.support();
  auto [rlo, rhi] = spec.right.support();
  require(lhi < rlo, ErrorKind::Config,
          "bubble packets overlap: increase separation or reduce sigma");

  // joint amplitude at non-ordered separations must be negligible
  double fmax = 0, gmax = 0, joint = 0;
  for (long j = llo; j <= lhi; ++j) fmax = std::max(fmax, std::abs(spec.left.coeff(j)));
  for (long k = rlo; k <= rhi; ++k) gmax = std::max(gmax, std::abs(spec.right.coeff(k)));
  for (long j = llo; j <= lhi + 40; ++j) {
    double fj = std::abs(spec.left.coeff(j));
    double gj = std::abs(spec.right.coeff(j));  // k = j: the ordering boundary
    joint = std::max(joint, fj * gj / (fmax * gmax));
  }
  require(joint <= spec.overlap_threshold, ErrorKind::Config,
          "bubble packets insufficiently separated: joint amplitude " + std::to_string(joint));

  // antikink tensor re-expressed with the interior in AR form
  const UniformImps& fv = spec.interior;
  Site bk = spec.kink_tensor.B;
  Site ba = spec.antikink_tensor.B;
  Eigen::VectorXd cinv = Eigen::VectorXd::Zero(fv.D());
  for (long i = 0; i < fv.D(); ++i)
    if (fv.c(i) > 1e-12 * fv.c.maxCoeff()) cinv(i) = 1.0 / fv.c(i);
  Mat cpinv = cinv.cast<cxd>().asDiagonal();
  for (Mat& m : ba.m) m = cpinv * m;

  long margin = static_cast<long>(std::ceil(spec.margin_sigmas *
                                            std::max(spec.left.sigma, spec.right.sigma)));
  long win_lo = llo - margin, win_hi = rhi + margin;

  const Site& al_true = spec.kink_tensor.left_vac.AL;
  const Site& ar_true = spec.antikink_tensor.right_vac.AR;
  const Site& ar_false = fv.AR;

  WindowMps s;
  s.left_bulk = spec.kink_tensor.left_vac;
  s.right_bulk = spec.antikink_tensor.right_vac;
  for (long j = win_lo; j <= win_hi; ++j) {
    if (j < llo) {
      s.w.push_back(al_true);
    } else if (j == llo && llo == lhi) {
      s.w.push_back(states_detail::scaled_site(bk, spec.left.coeff(j)));
    } else if (j == llo) {
      s.w.push_back(
          states_detail::block_enter(al_true, states_detail::scaled_site(bk, spec.left.coeff(j))));
    } else if (j < lhi) {
      s.w.push_back(states_detail::block_upper(
          al_true, states_detail::scaled_site(bk, spec.left.coeff(j)), ar_false));
    } else if (j == lhi) {
      s.w.push_back(states_detail::block_exit(
          states_detail::scaled_site(bk, spec.left.coeff(j)), ar_false));
    } else if (j < rlo) {
      s.w.push_back(ar_false);
    } else if (j == rlo && rlo == rhi) {
      s.w.push_back(states_detail::scaled_site(ba, spec.right.coeff(j)));
    } else if (j == rlo) {
      s.w.push_back(states_detail::block_enter(
          ar_false, states_detail::scaled_site(ba, spec.right.coeff(j))));
    } else if (j < rhi) {
      s.w.push_back(states_detail::block_upper(
          ar_false, states_detail::scaled_site(ba, spec.right.coeff(j)), ar_true));
    } else if (j == rhi) {
      s.w.push_back(states_detail::block_exit(
          states_detail::scaled_site(ba, spec.right.coeff(j)), ar_true));
    } else {
      s.w.push_back(ar_true);
    }
  }
  s.check_bonds();

  if (report) {
    report->window_lo = win_lo;
    report->window_hi = win_hi;
    report->diagonal_overlap = joint;
  }
  normalize_window(s);
  return s;
}

// Bare string: spins flipped on [x_l, x_r] of the uniform true vacuum.
inline WindowMps build_bare_string(const UniformImps& vac, long x_l, long x_r, long margin) {
  require(x_l < x_r, ErrorKind::Config, "bare string needs x_l < x_r");
  WindowMps s;
  s.left_bulk = vac;
  s.right_bulk = vac;
  Mat x = pauli_x().matrix();
  for (long j = x_l - margin; j <= x_r + margin; ++j) {
    // left-of-string sites stay in AL form, right-of-string in AR form so
    // both window edges join their bulks canonically
    if (j < x_l)
      s.w.push_back(vac.AL);
    else if (j <= x_r)
      s.w.push_back((j < x_r ? vac.AL : vac.ac()).apply_op(x));
    else
      s.w.push_back(vac.AR);
  }
  // the center gauge sits at the last flipped site; repair bond shapes:
  // AL...AL[flipped] AC[flipped] AR...: dimensions all D, consistent.
  s.check_bonds();
  normalize_window(s);
  return s;
}

// Smeared string: sum_{j<k} f_j g_k X_j..X_k |vac> via a three-channel
// transition construction (before / flipping / after).
inline WindowMps build_smeared_string(const UniformImps& vac, const WavepacketSpec& f,
                                      const WavepacketSpec& g, double margin_sigmas = 6.0,
                                      BuildReport* report = nullptr) {
  f.validate();
  g.validate();
  auto [flo, fhi] = f.support();
  auto [glo, ghi] = g.support();
  require(fhi < glo, ErrorKind::Config, "smeared string edges overlap");
  long margin = static_cast<long>(std::ceil(margin_sigmas * std::max(f.sigma, g.sigma)));
  long win_lo = flo - margin, win_hi = ghi + margin;
  if (report) {
    report->window_lo = win_lo;
    report->window_hi = win_hi;
  }

  Mat x = pauli_x().matrix();
  const Site al = vac.AL;
  const Site ar = vac.AR;
  const Site al_x = vac.AL.apply_op(x);
  const Site ac_x = vac.ac().apply_op(x);  // last flipped site carries the gauge center

  // channel layout at a bond: {unflipped-left(AL), flipping(AL-flipped),
  // done(AR)}; f starts the flip, g makes the last flipped site.
  WindowMps s;
  s.left_bulk = vac;
  s.right_bulk = vac;
  for (long j = win_lo; j <= win_hi; ++j) {
    bool in_f = (j >= flo && j <= fhi);
    bool in_g = (j >= glo && j <= ghi);
    if (!in_f && j < glo) {
      if (j < flo)
        s.w.push_back(al);
      else
        s.w.push_back(al_x);  // between supports: definitely flipping
    } else if (in_f) {
      // channels {unflipped AL, flipping}: f_j starts the flip at site j
      if (j == flo)
        s.w.push_back(states_detail::block_enter(al, states_detail::scaled_site(al_x, f.coeff(j))));
      else if (j == fhi)
        s.w.push_back(states_detail::block_exit(states_detail::scaled_site(al_x, f.coeff(j)), al_x));
      else
        s.w.push_back(states_detail::block_upper(
            al, states_detail::scaled_site(al_x, f.coeff(j)), al_x));
    } else if (in_g) {
      // channels {flipping, done}: g_j flips its last site at j, where the
      // AL -> AR gauge center is inserted
      if (j == glo)
        s.w.push_back(states_detail::block_enter(al_x, states_detail::scaled_site(ac_x, g.coeff(j))));
      else if (j == ghi)
        s.w.push_back(states_detail::block_exit(states_detail::scaled_site(ac_x, g.coeff(j)), ar));
      else
        s.w.push_back(states_detail::block_upper(
            al_x, states_detail::scaled_site(ac_x, g.coeff(j)), ar));
    } else {
      s.w.push_back(ar);
    }
  }
  s.check_bonds();
  normalize_window(s);
  return s;
}

// Excess energy relative to a vacuum density: per-term profile and total.
struct ExcessEnergy {
  double total = 0;
  std::vector<double> profile;  // index 0 is term starting at window site 1-margin
  long first_site = 0;
};

inline ExcessEnergy excess_energy(const WindowMps& s, const LocalHamiltonian& ham,
                                  double vac_density, long margin = 6) {
  ExcessEnergy out;
  out.first_site = 1 - margin;
  out.profile = window_energy_profile(s, ham, vac_density, margin);
  for (double v : out.profile) out.total += v;
  return out;
}

}  // namespace fvmps
