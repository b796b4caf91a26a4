#pragma once

#include <mfc/controllers.hpp>
#include <mfc/errors.hpp>
#include <mfc/estimation.hpp>
#include <mfc/plants.hpp>
#include <mfc/signals.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mfc {

enum class ControllerKind { ip, ipi, ipd, ipid, igpi, pid, pi2d };

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::ip: return "iP";
    case ControllerKind::ipi: return "iPI";
    case ControllerKind::ipd: return "iPD";
    case ControllerKind::ipid: return "iPID";
    case ControllerKind::igpi: return "iGPI";
    case ControllerKind::pid: return "PID";
    case ControllerKind::pi2d: return "PI2D";
  }
  return "?";
}

struct ControllerSpec {
  ControllerKind kind = ControllerKind::ip;
  IntelligentGains intelligent{};
  ClassicGains classic{};
  /// Low-pass time constant of the error derivative used by iPD/iPID (seconds); negative means 5*te.
  double deriv_filter_tau = -1.0;

  bool is_intelligent() const {
    return kind != ControllerKind::pid && kind != ControllerKind::pi2d;
  }
  int required_nu() const {
    return (kind == ControllerKind::ipd || kind == ControllerKind::ipid) ? 2 : 1;
  }
  double derivative_tau(double te) const { return deriv_filter_tau < 0.0 ? 5.0 * te : deriv_filter_tau; }
};

/// Nominal flat feedforward m*ddy* + k1_hat*y*, added to the feedback control.
struct FeedforwardSpec {
  double m = 0.5;
  double k1_hat = 2.0;
};

/// Which control signal the estimator sees as the input of the ultra-local model.
enum class EstimatorInput { commanded, effective };

struct LoopConfig {
  std::string name;
  TimeGrid grid;
  Plant plant;
  ControllerSpec controller;
  UltraLocalConfig ultra_local{};
  ReferenceTrajectory reference;
  NoiseSource noise{};
  std::optional<FaultSpec> fault;
  std::optional<FeedforwardSpec> feedforward;
  EstimatorInput estimator_input = EstimatorInput::commanded;
  /// Called after every recorded sample, before the plant is stepped.
  std::function<void(std::size_t, double, const Plant&)> observer;

  void validate() const {
    if (reference.size() != grid.n_steps)
      throw ConfigError("reference length does not match the time grid");
    if (fault) fault->validate();
    if (controller.is_intelligent()) {
      ultra_local.validate(grid.te);
      if (ultra_local.nu != controller.required_nu())
        throw ConfigError(std::string(to_string(controller.kind)) +
                          " needs an ultra-local model of order " +
                          std::to_string(controller.required_nu()));
      if (controller.intelligent.alpha != ultra_local.alpha)
        throw ConfigError("controller alpha differs from the ultra-local alpha");
      if (controller.kind == ControllerKind::igpi && controller.intelligent.beta != ultra_local.beta)
        throw ConfigError("controller beta differs from the ultra-local beta");
      if (controller.kind != ControllerKind::igpi && ultra_local.beta != 0.0)
        throw ConfigError("beta is only meaningful for the iGPI");
    }
    if (controller.classic.deriv_filter_tau < 0.0)
      throw ConfigError("derivative filter time constant must be non-negative");
  }
};

struct RecordRow {
  double t = 0.0;
  double setpoint = 0.0;
  double y_ref = 0.0;
  double dy_ref = 0.0;
  double y_true = 0.0;
  double y_meas = 0.0;
  double u_cmd = 0.0;
  double u_eff = 0.0;
  double F_est = 0.0;
  std::optional<double> aux;
};

struct ClosedLoopRecord {
  std::string scenario;
  std::string controller;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double te = 0.0;
  double window_len = 0.0;
  std::optional<FaultSpec> fault;
  std::vector<RecordRow> rows;
};

struct Metrics {
  double rms_error = 0.0;
  double iae = 0.0;
  double max_abs_error = 0.0;
  double control_effort = 0.0;
  std::optional<double> recovery_time;  ///< +inf when the error never settles back
};

/// 64-bit FNV-1a, fed field by field.
class Fnv1a {
public:
  Fnv1a& add(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& add(double v) { return add(&v, sizeof v); }
  Fnv1a& add(std::uint64_t v) { return add(&v, sizeof v); }
  Fnv1a& add(const std::string& s) { return add(s.data(), s.size()).add(std::uint64_t{s.size()}); }
  std::uint64_t value() const { return h_; }

private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t config_hash(const LoopConfig& cfg) {
  Fnv1a h;
  h.add(cfg.name).add(cfg.plant.kind()).add(std::string(to_string(cfg.controller.kind)));
  h.add(cfg.grid.te).add(cfg.grid.duration);
  const auto& g = cfg.controller.intelligent;
  for (double v : {g.kp, g.ki, g.kd, g.kii, g.alpha, g.beta}) h.add(v);
  const auto& c = cfg.controller.classic;
  for (double v : {c.kp, c.ki, c.kd, c.kii, c.deriv_filter_tau, cfg.controller.deriv_filter_tau}) h.add(v);
  const auto& ul = cfg.ultra_local;
  h.add(std::uint64_t(ul.nu)).add(ul.alpha).add(ul.beta).add(std::string(to_string(ul.estimator)));
  h.add(ul.window_len);
  h.add(cfg.noise.seed()).add(cfg.noise.std_dev());
  h.add(std::uint64_t(cfg.fault.has_value()));
  if (cfg.fault) h.add(cfg.fault->t_fault).add(cfg.fault->gain_factor);
  h.add(std::uint64_t(cfg.feedforward.has_value()));
  if (cfg.feedforward) h.add(cfg.feedforward->m).add(cfg.feedforward->k1_hat);
  h.add(std::uint64_t(cfg.estimator_input == EstimatorInput::commanded));
  for (const auto* series : {&cfg.reference.ystar, &cfg.reference.dystar, &cfg.reference.ddystar,
                             &cfg.reference.setpoint})
    for (double v : *series) h.add(v);
  return h.value();
}

/// Runs one closed loop over the whole grid. Per sample k:
/// measure, update the estimate with the previous control, form e = y_meas - y*, evaluate the law,
/// add feedforward, apply the fault, log, then step the plant.
inline ClosedLoopRecord run_closed_loop(LoopConfig cfg) {
  cfg.validate();
  const double te = cfg.grid.te;
  const auto& ref = cfg.reference;
  const auto& spec = cfg.controller;

  ClosedLoopRecord rec;
  rec.scenario = cfg.name;
  rec.controller = to_string(spec.kind);
  rec.seed = cfg.noise.seed();
  rec.config_hash = config_hash(cfg);
  rec.te = te;
  rec.window_len = spec.is_intelligent() ? cfg.ultra_local.window_len : 0.0;
  rec.fault = cfg.fault;
  rec.rows.reserve(cfg.grid.n_steps);

  std::optional<FEstimator> estimator;
  if (spec.is_intelligent()) estimator.emplace(cfg.ultra_local, te, spec.intelligent.kp);
  ControllerState state;
  std::optional<PastStep> prev;
  const double dtau = spec.derivative_tau(te);

  for (std::size_t k = 0; k < cfg.grid.n_steps; ++k) {
    const double t = cfg.grid.time(k);
    RecordRow row;
    row.t = t;
    row.setpoint = ref.setpoint[k];
    row.y_ref = ref.ystar[k];
    row.dy_ref = ref.dystar[k];
    row.y_true = cfg.plant.output();
    row.y_meas = row.y_true + cfg.noise.next();
    const double e = row.y_meas - row.y_ref;

    double u = 0.0;
    const double int_u_before = state.int_u;
    if (spec.is_intelligent()) {
      const FEstimate est = estimator->update(t, row.y_meas, prev);
      row.F_est = est.ready ? est.value : 0.0;
      const double F = row.F_est;
      const auto& g = spec.intelligent;
      switch (spec.kind) {
        case ControllerKind::ip:
          u = ip(F, ref.dystar[k], e, g);
          break;
        case ControllerKind::ipi:
          state.accumulate(e, te);
          u = ipi(F, ref.dystar[k], e, state.int_e, g);
          break;
        case ControllerKind::ipd:
          u = ipd(F, ref.ddystar[k], e, state.filtered_derivative(e, te, dtau), g);
          break;
        case ControllerKind::ipid: {
          state.accumulate(e, te);
          const double de = state.filtered_derivative(e, te, dtau);
          u = ipid(F, ref.ddystar[k], e, de, state.int_e, g);
          break;
        }
        case ControllerKind::igpi:
          state.accumulate(e, te);
          u = igpi(F, ref.dystar[k], e, state.int_e, state.int_int_e, state.int_u, g);
          break;
        default: break;
      }
    } else if (spec.kind == ControllerKind::pid) {
      u = classic_pid(e, state, spec.classic, te);
    } else {
      u = classic_pi2d(e, state, spec.classic, te);
    }
    if (cfg.feedforward)
      u += flat_feedforward(ref.ystar[k], ref.ddystar[k], cfg.feedforward->m, cfg.feedforward->k1_hat);
    if (!std::isfinite(u) || !std::isfinite(row.F_est))
      throw DivergenceError(k, "non-finite control at t = " + std::to_string(t));
    state.int_u += u * te;

    row.u_cmd = u;
    row.u_eff = cfg.fault ? apply_fault(u, t, *cfg.fault) : u;
    row.aux = cfg.plant.aux();
    rec.rows.push_back(row);
    if (cfg.observer) cfg.observer(k, t, cfg.plant);

    const double u_seen = cfg.estimator_input == EstimatorInput::commanded ? row.u_cmd : row.u_eff;
    prev = PastStep{u_seen, int_u_before + 0.5 * u * te, ref.dystar[k], e};
    if (k + 1 < cfg.grid.n_steps) {
      try {
        cfg.plant.step(row.u_eff, te);
      } catch (const DivergenceError&) {
        throw DivergenceError(k, std::string("plant state is no longer finite at t = ") +
                                     std::to_string(t));
      }
    }
  }
  return rec;
}

/// Error metrics over rows with t in [t0, t1]; the error is y_true - y_ref.
/// recovery_time is measured from fault->t_fault to the first instant after which |e| stays
/// within band for at least `hold` seconds (0 if the error never leaves the band).
inline Metrics compute_metrics(const ClosedLoopRecord& rec, double t0, double t1, double band,
                               const std::optional<FaultSpec>& fault = std::nullopt,
                               double hold = 0.5) {
  if (!(t0 < t1)) throw ConfigError("evaluation window must satisfy t0 < t1");
  const double tol = 1e-9 * std::max(1.0, std::abs(t1));
  std::vector<const RecordRow*> win;
  for (const auto& r : rec.rows)
    if (r.t >= t0 - tol && r.t <= t1 + tol) win.push_back(&r);
  if (win.empty()) throw ConfigError("evaluation window contains no samples");

  Metrics m;
  double sq = 0.0;
  for (std::size_t i = 0; i < win.size(); ++i) {
    const double e = win[i]->y_true - win[i]->y_ref;
    sq += e * e;
    m.max_abs_error = std::max(m.max_abs_error, std::abs(e));
    if (i > 0) {
      const double dt = win[i]->t - win[i - 1]->t;
      const double ep = win[i - 1]->y_true - win[i - 1]->y_ref;
      m.iae += 0.5 * dt * (std::abs(e) + std::abs(ep));
      m.control_effort +=
          0.5 * dt * (win[i]->u_eff * win[i]->u_eff + win[i - 1]->u_eff * win[i - 1]->u_eff);
    }
  }
  m.rms_error = std::sqrt(sq / static_cast<double>(win.size()));

  if (fault) {
    m.recovery_time = std::numeric_limits<double>::infinity();
    std::optional<double> inside_since;
    for (const auto& r : rec.rows) {
      if (r.t < fault->t_fault - tol) continue;
      if (std::abs(r.y_true - r.y_ref) <= band) {
        if (!inside_since) inside_since = r.t;
        if (r.t - *inside_since >= hold - tol) {
          m.recovery_time = *inside_since - fault->t_fault;
          break;
        }
      } else {
        inside_since.reset();
      }
    }
  }
  return m;
}

/// Default evaluation window: skip the estimator warm-up of 2L, up to the end of the record.
inline Metrics compute_metrics(const ClosedLoopRecord& rec, double band = 0.0) {
  if (rec.rows.empty()) throw ConfigError("empty record");
  return compute_metrics(rec, 2.0 * rec.window_len, rec.rows.back().t, band, rec.fault);
}

} // namespace mfc
