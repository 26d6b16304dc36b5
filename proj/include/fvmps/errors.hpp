#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

namespace fvmps {

enum class ErrorKind {
  Dimension,          // shape/extent mismatch
  Numeric,            // non-finite values, blow-up
  Convergence,        // iterative solver did not reach tolerance
  IllConditioned,     // degenerate dominant eigenvalue, singular gauge solve
  MetastabilityLost,  // false-vacuum search collapsed to the true vacuum
  Gauge,              // gauge/environment inconsistency (e.g. non-Hermitian effective map)
  Detection,          // feature not found (zero crossing, ...)
  Range,              // evaluation outside sampled/valid range
  Consistency,        // internal state invariant violated (norms, Schmidt sums)
  BasisQuality,       // compressed-basis residual above threshold
  Config,             // bad experiment configuration / checkpoint mismatch
  Io,                 // file format / filesystem problems
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::IllConditioned: return "ill-conditioned";
    case ErrorKind::MetastabilityLost: return "metastability-lost";
    case ErrorKind::Gauge: return "gauge";
    case ErrorKind::Detection: return "detection";
    case ErrorKind::Range: return "range";
    case ErrorKind::Consistency: return "consistency";
    case ErrorKind::BasisQuality: return "basis-quality";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Convergence failures carry the best residual reached so callers can decide
// whether to retry with looser tolerances.
namespace detail {
inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}
}  // namespace detail

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, double best_residual)
      : Error(ErrorKind::Convergence, msg + " (best residual " + detail::sci(best_residual) + ")"),
        best_residual_(best_residual) {}

  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

}  // namespace fvmps
