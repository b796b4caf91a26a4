#pragma once

#include <mfc/errors.hpp>

#include <cmath>
#include <cstddef>
#include <vector>

namespace mfc {

/// Tracking gains and ultra-local constants of an intelligent controller. Unused gains stay 0.
struct IntelligentGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double kii = 0.0;
  double alpha = 1.0;
  double beta = 0.0;
};

/// Gains of a classic PID / PI2D acting on e = y - y*.
struct ClassicGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double kii = 0.0;
  double deriv_filter_tau = 0.0;  ///< seconds, 0 = raw backward difference
};

/// Per-loop accumulators, advanced once per sample.
struct ControllerState {
  double int_e = 0.0;
  double int_int_e = 0.0;
  double int_u = 0.0;
  double prev_e = 0.0;
  double prev_filtered_de = 0.0;

  /// Left-Riemann step of both error integrals: int_e += e*te, then int_int_e += int_e*te.
  void accumulate(double e, double te) {
    int_e += e * te;
    int_int_e += int_e * te;
  }

  /// Backward difference of e through a first-order low-pass with time constant tau.
  double filtered_derivative(double e, double te, double tau) {
    const double raw = (e - prev_e) / te;
    prev_e = e;
    prev_filtered_de += te / (tau + te) * (raw - prev_filtered_de);
    return prev_filtered_de;
  }
};

// Intelligent laws. F is the current estimate of the lumped term.

inline double ip(double F, double dystar, double e, const IntelligentGains& g) {
  return -(F - dystar + g.kp * e) / g.alpha;
}

inline double ipi(double F, double dystar, double e, double int_e, const IntelligentGains& g) {
  return -(F - dystar + g.kp * e + g.ki * int_e) / g.alpha;
}

inline double ipd(double F, double ddystar, double e, double de, const IntelligentGains& g) {
  return -(F - ddystar + g.kp * e + g.kd * de) / g.alpha;
}

inline double ipid(double F, double ddystar, double e, double de, double int_e,
                   const IntelligentGains& g) {
  return -(F - ddystar + g.kp * e + g.ki * int_e + g.kd * de) / g.alpha;
}

/// Intelligent GPI for y' = F + alpha*u + beta*int(u), corrector kp e + ki int e + kii int int e.
inline double igpi(double F, double dystar, double e, double int_e, double int_int_e,
                   double int_u, const IntelligentGains& g) {
  return -(F + g.beta * int_u - dystar + g.kp * e + g.ki * int_e + g.kii * int_int_e) / g.alpha;
}

// Classic laws. Both advance `state` by one sample.

inline double classic_pid(double e, ControllerState& state, const ClassicGains& g, double te) {
  state.accumulate(e, te);
  const double de = state.filtered_derivative(e, te, g.deriv_filter_tau);
  return g.kp * e + g.ki * state.int_e + g.kd * de;
}

inline double classic_pi2d(double e, ControllerState& state, const ClassicGains& g, double te) {
  state.accumulate(e, te);
  const double de = state.filtered_derivative(e, te, g.deriv_filter_tau);
  return g.kp * e + g.ki * state.int_e + g.kii * state.int_int_e + g.kd * de;
}

/// Characteristic polynomial of the closed error dynamics and its Hurwitz verdict.
struct StabilityReport {
  std::vector<double> coefficients;  ///< highest degree first, monic
  bool hurwitz = false;
};

/// Routh-Hurwitz test; coefficients highest degree first. Any zero in the first column
/// (marginal or worse) counts as not Hurwitz.
inline bool is_hurwitz(const std::vector<double>& coeffs) {
  if (coeffs.empty() || coeffs.front() == 0.0) return false;
  const double lead = coeffs.front();
  std::vector<double> c;
  for (double v : coeffs) c.push_back(v / lead);
  const std::size_t n = c.size() - 1;
  if (n == 0) return true;
  for (double v : c)
    if (!(v > 0.0)) return false;
  std::vector<double> upper, lower;
  for (std::size_t i = 0; i < c.size(); i += 2) upper.push_back(c[i]);
  for (std::size_t i = 1; i < c.size(); i += 2) lower.push_back(c[i]);
  for (std::size_t row = 1; row < n; ++row) {
    if (lower.empty() || !(lower.front() > 0.0)) return false;
    std::vector<double> next;
    for (std::size_t j = 0; j + 1 < upper.size(); ++j) {
      const double b = j + 1 < lower.size() ? lower[j + 1] : 0.0;
      next.push_back((lower.front() * upper[j + 1] - upper.front() * b) / lower.front());
    }
    upper = std::move(lower);
    lower = std::move(next);
  }
  return !lower.empty() && lower.front() > 0.0;
}

/// nu = 1: s + kp (iP), s^2 + kp s + ki (iPI), s^3 + kp s^2 + ki s + kii (iGPI corrector).
/// nu = 2: s^2 + kd s + kp (iPD), s^3 + kd s^2 + kp s + ki (iPID).
inline StabilityReport validate_error_dynamics(const IntelligentGains& g, int nu) {
  StabilityReport r;
  if (nu == 1) {
    if (g.kii != 0.0) r.coefficients = {1.0, g.kp, g.ki, g.kii};
    else if (g.ki != 0.0) r.coefficients = {1.0, g.kp, g.ki};
    else r.coefficients = {1.0, g.kp};
  } else if (nu == 2) {
    if (g.ki != 0.0) r.coefficients = {1.0, g.kd, g.kp, g.ki};
    else r.coefficients = {1.0, g.kd, g.kp};
  } else {
    throw ConfigError("ultra-local order must be 1 or 2");
  }
  r.hurwitz = is_hurwitz(r.coefficients);
  return r;
}

} // namespace mfc
