#pragma once

#include <mfc/errors.hpp>
#include <mfc/signals.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mfc {

/// Classic fourth-order Runge-Kutta over `substeps` equal steps of size h/substeps.
/// `f(t, x)` returns dx/dt; State is any fixed- or dynamic-size container of doubles.
template <class State, class Rhs>
State rk4_step(const Rhs& f, double t, State x, double h, int substeps = 1) {
  const double dt = h / substeps;
  const auto shifted = [](const State& base, double c, const State& k) {
    State out = base;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * k[i];
    return out;
  };
  for (int s = 0; s < substeps; ++s) {
    const double ts = t + s * dt;
    const State k1 = f(ts, x);
    const State k2 = f(ts + 0.5 * dt, shifted(x, 0.5 * dt, k1));
    const State k3 = f(ts + 0.5 * dt, shifted(x, 0.5 * dt, k2));
    const State k4 = f(ts + dt, shifted(x, dt, k3));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return x;
}

inline constexpr int kOdeSubsteps = 4;

/// Coulomb + Stribeck friction; fs >= fc > 0, vs > 0.
struct TustinFriction {
  double fc = 0.25;
  double fs = 0.5;
  double vs = 0.1;
};

inline double tustin_force(double v, const TustinFriction& f) {
  if (v == 0.0) return 0.0;
  const double magnitude = f.fc + (f.fs - f.fc) * std::exp(-std::abs(v) / f.vs);
  return v > 0.0 ? -magnitude : magnitude;
}

/// Actuator power loss: the applied control is scaled by gain_factor from t_fault on.
struct FaultSpec {
  double t_fault = 8.0;
  double gain_factor = 0.5;

  void validate() const {
    if (!(gain_factor > 0.0 && gain_factor <= 1.0))
      throw ConfigError("fault gain factor must lie in (0, 1]");
  }
};

inline double apply_fault(double u, double t, const FaultSpec& f) {
  return t >= f.t_fault ? u * f.gain_factor : u;
}

/// Nominal control of the known flat part m y'' = -k1_hat y + u along the reference.
inline double flat_feedforward(double ystar, double ddystar, double m, double k1_hat) {
  return m * ddystar + k1_hat * ystar;
}

/// One step of the clamped sign random walk of the delay:
/// tau <- clamp(tau + step_factor*te*sign(N), 0, tau_max).
inline double delay_walk(double tau_prev, double te, NoiseSource& noise,
                         double tau_max = 5.0, double step_factor = 10.0) {
  const double draw = noise.standard();
  const double sign = draw > 0.0 ? 1.0 : (draw < 0.0 ? -1.0 : 0.0);
  return std::clamp(tau_prev + step_factor * te * sign, 0.0, tau_max);
}

// ---------------------------------------------------------------------------------------------
// Plant variants

/// y'' + c y' + stiffness y = u
struct OscillatorPlant {
  double c = 3.0;
  double stiffness = 4.0;
  std::array<double, 2> x{0.0, 0.0};  // y, y'

  double output() const { return x[0]; }
  double energy() const { return 0.5 * x[1] * x[1] + 0.5 * stiffness * x[0] * x[0]; }

  void step(double u, double te) {
    const auto rhs = [&](double, const std::array<double, 2>& s) {
      return std::array<double, 2>{s[1], u - c * s[1] - stiffness * s[0]};
    };
    x = rk4_step(rhs, 0.0, x, te, kOdeSubsteps);
  }
};

/// m y'' = -(k1 y + k3 y^3) + tustin(y') - d y' + u
struct DuffingPlant {
  double m = 0.5;
  double k1 = 3.0;
  double k3 = 2.0;
  double d = 1.0;
  TustinFriction friction{};
  std::array<double, 2> x{0.0, 0.0};

  double output() const { return x[0]; }

  void step(double u, double te) {
    const auto rhs = [&](double, const std::array<double, 2>& s) {
      const double force = -(k1 * s[0] + k3 * s[0] * s[0] * s[0]) + tustin_force(s[1], friction) -
                           d * s[1] + u;
      return std::array<double, 2>{s[1], force / m};
    };
    x = rk4_step(rhs, 0.0, x, te, kOdeSubsteps);
  }
};

/// Strictly proper transfer function, coefficients highest power first.
struct TransferFunction {
  std::vector<double> num;
  std::vector<double> den;

  double dc_gain() const { return num.back() / den.back(); }
};

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

/// Controllable canonical realization x' = A x + B u, y = C x of a strictly proper G(s).
struct LtiPlant {
  std::vector<double> a;  // monic denominator tail: s^n + a[0] s^(n-1) + ... + a[n-1]
  std::vector<double> c;  // output row, c[i] multiplies x[i]
  std::vector<double> x;

  static LtiPlant from_transfer_function(const TransferFunction& tf) {
    if (tf.den.size() < 2 || tf.den.front() == 0.0)
      throw ConfigError("transfer function needs a denominator of degree >= 1");
    if (tf.num.empty() || tf.num.size() >= tf.den.size())
      throw ConfigError("transfer function must be strictly proper");
    const std::size_t n = tf.den.size() - 1;
    LtiPlant p;
    const double lead = tf.den.front();
    for (std::size_t i = 1; i <= n; ++i) p.a.push_back(tf.den[i] / lead);
    // numerator b_1 s^(n-1) + ... + b_n maps to y = b_n x_1 + ... + b_1 x_n
    std::vector<double> b(n, 0.0);
    const std::size_t pad = n - tf.num.size();
    for (std::size_t i = 0; i < tf.num.size(); ++i) b[pad + i] = tf.num[i] / lead;
    p.c.assign(b.rbegin(), b.rend());
    p.x.assign(n, 0.0);
    return p;
  }

  double output() const {
    double y = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) y += c[i] * x[i];
    return y;
  }

  void step(double u, double te) {
    const std::size_t n = x.size();
    const auto rhs = [&](double, const std::vector<double>& s) {
      std::vector<double> ds(n);
      for (std::size_t i = 0; i + 1 < n; ++i) ds[i] = s[i + 1];
      double last = u;
      for (std::size_t i = 0; i < n; ++i) last -= a[n - 1 - i] * s[i];
      ds[n - 1] = last;
      return ds;
    };
    x = rk4_step(rhs, 0.0, x, te, kOdeSubsteps);
  }
};

/// y' - y = u^3
struct CubicPlant {
  std::array<double, 1> x{0.0};

  double output() const { return x[0]; }

  void step(double u, double te) {
    const double u3 = u * u * u;
    const auto rhs = [&](double, const std::array<double, 1>& s) {
      return std::array<double, 1>{s[0] + u3};
    };
    x = rk4_step(rhs, 0.0, x, te, kOdeSubsteps);
  }
};

/// y'(t) = self_gain y(t) + delayed_gain y(t - tau) + u with a randomly walking delay.
class DelayPlant {
public:
  struct Params {
    double self_gain = 1.0;
    double delayed_gain = 5.0;
    double tau0 = 2.5;
    double tau_max = 5.0;
    double walk_step_factor = 10.0;
    bool walk = true;
    double y0 = 0.0;
  };

  DelayPlant(const Params& p, double te, NoiseSource walk_noise)
      : p_(p), te_(te), h_(te / kOdeSubsteps), y_(p.y0), tau_(p.tau0),
        walk_noise_(std::move(walk_noise)) {
    if (!(p.tau0 >= 0.0 && p.tau0 <= p.tau_max)) throw ConfigError("initial delay out of range");
    // history reaches back tau_max plus one step; older samples are never read
    capacity_ = static_cast<std::size_t>(std::ceil(p.tau_max / h_)) + kOdeSubsteps + 2;
    history_.push_back(y_);
  }

  double output() const { return y_; }
  double tau() const { return tau_; }
  double rate(double y, double y_delayed, double u) const {
    return p_.self_gain * y + p_.delayed_gain * y_delayed + u;
  }

  void step(double u, double te) {
    if (std::abs(te - te_) > 1e-12) throw ConfigError("delay plant stepped with a foreign te");
    for (int s = 0; s < kOdeSubsteps; ++s) {
      const double t0 = now_;
      const auto rhs = [&](double t, const std::array<double, 1>& x) {
        return std::array<double, 1>{rate(x[0], delayed(t - tau_, t, x[0]), u)};
      };
      y_ = rk4_step(rhs, t0, std::array<double, 1>{y_}, h_, 1)[0];
      now_ += h_;
      history_.push_back(y_);
      if (history_.size() > capacity_) {
        history_.pop_front();
        history_start_ += h_;
      }
    }
    if (p_.walk) tau_ = delay_walk(tau_, te_, walk_noise_, p_.tau_max, p_.walk_step_factor);
  }

private:
  // y(query) from the stored history (constant before t = 0); past the last stored sample
  // the value is interpolated towards the current stage state.
  double delayed(double query, double stage_t, double stage_y) const {
    if (query <= history_start_) return history_.front();
    const double last_t = now_;
    if (query >= last_t) {
      if (stage_t <= last_t) return history_.back();
      const double w = (query - last_t) / (stage_t - last_t);
      return (1.0 - w) * history_.back() + w * stage_y;
    }
    const double pos = (query - history_start_) / h_;
    if (pos <= 0.0) return history_.front();
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= history_.size()) return history_.back();
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * history_[i] + w * history_[i + 1];
  }

  Params p_;
  double te_;
  double h_;
  double y_;
  double tau_;
  NoiseSource walk_noise_;
  std::deque<double> history_;
  std::size_t capacity_ = 0;
  double history_start_ = 0.0;
  double now_ = 0.0;
};

/// w_t = w_xx + f(w) on [0, length] with w(t,0) = c, w(t,length) = u(t); output w(t, x_c).
class HeatPlant {
public:
  struct Params {
    double length = 1.0;
    std::size_t n_x = 101;
    double x_c = 1.0 / 3.0;
    double c = 0.0;
    bool cubic_source = false;
    double u0 = 0.0;
  };

  explicit HeatPlant(const Params& p) : p_(p) {
    if (p.n_x < 5) throw ConfigError("heat grid needs at least 3 interior points");
    if (!(p.length > 0.0)) throw ConfigError("heat domain length must be positive");
    if (!(p.x_c >= 0.0 && p.x_c <= p.length)) throw ConfigError("x_c outside the domain");
    dx_ = p.length / static_cast<double>(p.n_x - 1);
    w_.resize(p.n_x);
    scratch_.resize(p.n_x);
    const double pi = std::acos(-1.0);
    for (std::size_t i = 0; i < p.n_x; ++i) {
      const double xr = static_cast<double>(i) * dx_ / p.length;
      w_[i] = std::sin(pi * xr) + (p.u0 - p.c) * xr + p.c;
    }
    w_.front() = p.c;
    w_.back() = p.u0;
  }

  double output() const {
    const double pos = p_.x_c / dx_;
    const auto i = std::min(static_cast<std::size_t>(pos), p_.n_x - 2);
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * w_[i] + w * w_[i + 1];
  }

  /// Explicit Euler with the largest inner step satisfying dt <= dx^2 / 2.
  void step(double u, double te) {
    const std::size_t inner = inner_steps(te);
    const double dt = te / static_cast<double>(inner);
    const double r = dt / (dx_ * dx_);
    const std::size_t n = p_.n_x;
    for (std::size_t s = 0; s < inner; ++s) {
      w_.front() = p_.c;
      w_.back() = u;
      scratch_.front() = p_.c;
      scratch_.back() = u;
      for (std::size_t i = 1; i + 1 < n; ++i) {
        const double wi = w_[i];
        const double source = p_.cubic_source ? wi * wi * wi : 0.0;
        scratch_[i] = wi + r * (w_[i + 1] - 2.0 * wi + w_[i - 1]) + dt * source;
      }
      w_.swap(scratch_);
    }
  }

  std::size_t inner_steps(double te) const {
    return static_cast<std::size_t>(std::ceil(te / (0.5 * dx_ * dx_) - 1e-9));
  }

  double dx() const { return dx_; }
  const std::vector<double>& field() const { return w_; }
  const Params& params() const { return p_; }

private:
  Params p_;
  double dx_ = 0.0;
  std::vector<double> w_;
  std::vector<double> scratch_;
};

/// Any benchmark plant, stepped with divergence detection.
class Plant {
public:
  using Model =
      std::variant<OscillatorPlant, DuffingPlant, LtiPlant, CubicPlant, DelayPlant, HeatPlant>;

  Plant() = default;

  template <class M>
  Plant(M model) : model_(std::move(model)) {}

  double output() const {
    return std::visit([](const auto& m) { return m.output(); }, model_);
  }

  /// Advances one sampling period with u held constant; returns the new output.
  double step(double u, double te) {
    if (!std::isfinite(u)) throw DivergenceError(steps_, "non-finite control");
    std::visit([&](auto& m) { m.step(u, te); }, model_);
    const double y = output();
    if (!std::isfinite(y) || !state_finite()) throw DivergenceError(steps_, "non-finite plant state");
    ++steps_;
    return y;
  }

  /// Extra per-step signal logged alongside the output (current delay for the delay plant).
  std::optional<double> aux() const {
    if (const auto* d = std::get_if<DelayPlant>(&model_)) return d->tau();
    return std::nullopt;
  }

  std::string kind() const {
    static const char* names[] = {"oscillator", "duffing", "lti", "nonlinear_cubic", "delay",
                                  "heat_1d"};
    return names[model_.index()];
  }

  std::size_t steps() const { return steps_; }
  const Model& model() const { return model_; }
  Model& model() { return model_; }

private:
  bool state_finite() const {
    if (const auto* h = std::get_if<HeatPlant>(&model_))
      return std::all_of(h->field().begin(), h->field().end(),
                         [](double v) { return std::isfinite(v); });
    if (const auto* l = std::get_if<LtiPlant>(&model_))
      return std::all_of(l->x.begin(), l->x.end(), [](double v) { return std::isfinite(v); });
    return true;
  }

  Model model_;
  std::size_t steps_ = 0;
};

} // namespace mfc
