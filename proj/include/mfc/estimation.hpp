#pragma once

#include <mfc/errors.hpp>
#include <mfc/signals.hpp>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mfc {

enum class EstimatorKind { open_loop_integral, closed_loop_ip, one_step };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::open_loop_integral: return "open-loop-integral";
    case EstimatorKind::closed_loop_ip: return "closed-loop-ip";
    case EstimatorKind::one_step: return "one-step";
  }
  return "?";
}

/// Parameters of the ultra-local model y^(nu) = F + alpha*u (+ beta * integral of u).
struct UltraLocalConfig {
  int nu = 1;
  double alpha = 1.0;
  double beta = 0.0;
  EstimatorKind estimator = EstimatorKind::open_loop_integral;
  double window_len = 0.1;

  /// Number of sampling intervals spanned by the estimation window.
  std::size_t window_intervals(double te) const {
    return static_cast<std::size_t>(std::llround(window_len / te));
  }

  void validate(double te) const {
    if (nu != 1 && nu != 2) throw ConfigError("ultra-local order must be 1 or 2");
    if (alpha == 0.0 || !std::isfinite(alpha)) throw ConfigError("alpha must be non-zero");
    if (!std::isfinite(beta)) throw ConfigError("beta must be finite");
    if (estimator != EstimatorKind::one_step && window_intervals(te) < 2)
      throw ConfigError("estimation window must span at least two sampling periods");
    if (estimator == EstimatorKind::open_loop_integral && nu != 1)
      throw ConfigError("the integral estimator is only available for nu = 1");
    if (estimator == EstimatorKind::closed_loop_ip && (nu != 1 || beta != 0.0))
      throw ConfigError("the closed-loop estimator requires the iP model (nu = 1, beta = 0)");
  }
};

/// Estimated lumped term; value is 0 while the estimator is warming up.
struct FEstimate {
  double value = 0.0;
  double t = 0.0;
  bool ready = false;
};

/// Discrete filter equivalent of
///   phi = -(6/L^3) * integral_0^L [ (L - 2s) y(s) + alpha s (L - s) u(s) ] ds
/// with y interpolated linearly between samples and u held constant over each sampling
/// interval. Under those two readings the filter is exact for y' = phi + alpha*u.
class OpenLoopKernel {
public:
  OpenLoopKernel(std::size_t intervals, double te) : te_(te) {
    if (intervals < 1) throw ConfigError("kernel needs at least one interval");
    const double len = static_cast<double>(intervals) * te;
    const double scale = -6.0 / (len * len * len);
    y_weights_.assign(intervals + 1, 0.0);
    u_weights_.assign(intervals, 0.0);
    const auto ramp = [len](double s) { return len - 2.0 * s; };
    const auto bump = [len](double s) { return s * (len - s); };
    // Simpson's rule is exact here: every integrand is at most quadratic on an interval.
    for (std::size_t j = 0; j < intervals; ++j) {
      const double a = static_cast<double>(j) * te;
      const double b = a + te;
      const double m = 0.5 * (a + b);
      y_weights_[j] += te / 6.0 * (ramp(a) + 2.0 * ramp(m));
      y_weights_[j + 1] += te / 6.0 * (2.0 * ramp(m) + ramp(b));
      u_weights_[j] = te / 6.0 * (bump(a) + 4.0 * bump(m) + bump(b));
    }
    for (auto& w : y_weights_) w *= scale;
    for (auto& w : u_weights_) w *= scale;
  }

  std::size_t intervals() const { return u_weights_.size(); }
  double te() const { return te_; }
  const std::vector<double>& y_weights() const { return y_weights_; }
  const std::vector<double>& u_weights() const { return u_weights_; }

  /// y holds intervals+1 samples; u holds at least `intervals` samples (extra trailing ones
  /// lie outside the window and are ignored).
  template <class YRange, class URange>
  double apply(const YRange& y, const URange& u, double alpha) const {
    double acc_y = 0.0;
    double acc_u = 0.0;
    std::size_t j = 0;
    for (const auto& s : y) acc_y += y_weights_[j++] * value_of(s);
    j = 0;
    for (const auto& s : u) {
      if (j == u_weights_.size()) break;
      acc_u += u_weights_[j++] * value_of(s);
    }
    return acc_y + alpha * acc_u;
  }

private:
  static double value_of(double v) { return v; }
  static double value_of(const Sample& s) { return s.value; }

  double te_;
  std::vector<double> y_weights_;
  std::vector<double> u_weights_;
};

namespace detail {

inline bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a));
}

} // namespace detail

/// Integral estimator for nu = 1. u_win stores the control applied on [t_j, t_j + te) at t_j;
/// it must start at the same instant as y_win and hold one sample fewer (or the same count).
inline FEstimate estimate_openloop(const SampleWindow& y_win, const SampleWindow& u_win,
                                   double alpha) {
  FEstimate out;
  if (!y_win.empty()) out.t = y_win.back().t;
  if (!y_win.full() || y_win.size() < 3) return out;
  if (u_win.size() + 1 < y_win.size()) return out;
  if (u_win.size() > y_win.size() || !detail::same_time(u_win.front().t, y_win.front().t) ||
      !detail::same_time(u_win.te(), y_win.te()))
    throw ConfigError("control and output windows are not aligned");
  const OpenLoopKernel kernel(y_win.size() - 1, y_win.te());
  out.value = kernel.apply(y_win, u_win, alpha);
  out.ready = true;
  return out;
}

/// Window mean of (dy* - alpha*u - kp*e), valid when the loop is closed by an iP with the same
/// alpha and kp.
inline FEstimate estimate_closedloop_ip(const SampleWindow& dystar_win, const SampleWindow& u_win,
                                        const SampleWindow& e_win, double alpha, double kp) {
  FEstimate out;
  if (!e_win.empty()) out.t = e_win.back().t;
  if (!dystar_win.full() || !u_win.full() || !e_win.full() || e_win.size() < 2) return out;
  if (dystar_win.size() != u_win.size() || u_win.size() != e_win.size() ||
      !detail::same_time(dystar_win.front().t, u_win.front().t) ||
      !detail::same_time(u_win.front().t, e_win.front().t))
    throw ConfigError("closed-loop estimator windows are not aligned");
  SampleWindow residual(e_win.size(), e_win.te());
  for (std::size_t j = 0; j < e_win.size(); ++j)
    residual.push(e_win[j].t, dystar_win[j].value - alpha * u_win[j].value - kp * e_win[j].value);
  const auto integral = window_quadrature(residual, [](double) { return 1.0; });
  out.value = *integral / residual.span();
  out.ready = true;
  return out;
}

/// Backward-difference estimate: F = y^(nu)(t) - alpha*u(t - h).
inline FEstimate estimate_onestep(const SampleWindow& y_win, double u_prev, double alpha, int nu) {
  FEstimate out;
  if (nu != 1 && nu != 2) throw ConfigError("ultra-local order must be 1 or 2");
  const std::size_t n = y_win.size();
  if (n == 0) return out;
  out.t = y_win.back().t;
  if (n < static_cast<std::size_t>(nu) + 1) return out;
  const double h = y_win.te();
  const double y0 = y_win[n - 1].value;
  const double y1 = y_win[n - 2].value;
  const double derivative =
      nu == 1 ? (y0 - y1) / h : (y0 - 2.0 * y1 + y_win[n - 3].value) / (h * h);
  out.value = derivative - alpha * u_prev;
  out.ready = true;
  return out;
}

/// What the loop did over the previous sampling interval [t - te, t).
struct PastStep {
  double u = 0.0;        ///< commanded control held over the interval
  double int_u = 0.0;    ///< running integral of u at the interval midpoint (iGPI input term)
  double dystar = 0.0;   ///< dy*/dt at the start of the interval
  double e = 0.0;        ///< tracking error at the start of the interval
};

/// Online estimator owning its sliding windows.
class FEstimator {
public:
  FEstimator(const UltraLocalConfig& cfg, double te, double kp = 0.0)
      : cfg_(cfg), te_(te), kp_(kp),
        y_win_(capacity_for(cfg, te), te),
        u_win_(std::max<std::size_t>(1, capacity_for(cfg, te) - 1), te),
        dystar_win_(std::max<std::size_t>(1, capacity_for(cfg, te)), te),
        ucl_win_(std::max<std::size_t>(1, capacity_for(cfg, te)), te),
        e_win_(std::max<std::size_t>(1, capacity_for(cfg, te)), te) {
    cfg.validate(te);
    if (cfg.estimator == EstimatorKind::open_loop_integral)
      kernel_.emplace(cfg.window_intervals(te), te);
  }

  /// Feeds the measurement at t and, from the second sample on, the previous step.
  FEstimate update(double t, double y_meas, const std::optional<PastStep>& prev) {
    y_win_.push(t, y_meas);
    if (prev) last_u_ = input_term(*prev);
    FEstimate out;
    out.t = t;
    switch (cfg_.estimator) {
      case EstimatorKind::one_step:
        if (prev) return estimate_onestep(y_win_, *last_u_, cfg_.alpha, cfg_.nu);
        return out;
      case EstimatorKind::open_loop_integral:
        if (prev) u_win_.push(t - te_, *last_u_);
        if (!y_win_.full() || !u_win_.full()) return out;
        out.value = kernel_->apply(y_win_, u_win_, cfg_.alpha);
        out.ready = true;
        return out;
      case EstimatorKind::closed_loop_ip:
        if (prev) {
          dystar_win_.push(t - te_, prev->dystar);
          ucl_win_.push(t - te_, prev->u);
          e_win_.push(t - te_, prev->e);
        }
        return estimate_closedloop_ip(dystar_win_, ucl_win_, e_win_, cfg_.alpha, kp_);
    }
    return out;
  }

  const UltraLocalConfig& config() const { return cfg_; }

private:
  static std::size_t capacity_for(const UltraLocalConfig& cfg, double te) {
    if (cfg.estimator == EstimatorKind::one_step) return static_cast<std::size_t>(cfg.nu) + 1;
    return std::max<std::size_t>(2, cfg.window_intervals(te) + 1);
  }

  // alpha*u + beta*int(u) expressed per unit alpha
  double input_term(const PastStep& p) const { return p.u + cfg_.beta / cfg_.alpha * p.int_u; }

  UltraLocalConfig cfg_;
  double te_;
  double kp_;
  SampleWindow y_win_;
  SampleWindow u_win_;
  SampleWindow dystar_win_;
  SampleWindow ucl_win_;
  SampleWindow e_win_;
  std::optional<OpenLoopKernel> kernel_;
  std::optional<double> last_u_;
};

} // namespace mfc
