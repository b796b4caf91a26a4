#pragma once

#include <mfc/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace mfc {

/// Uniform sampling grid: points k*te for k = 0 .. n_steps-1.
struct TimeGrid {
  double te = 0.01;
  double duration = 0.0;
  std::size_t n_steps = 1;

  static TimeGrid make(double te, double duration) {
    if (!(te > 0.0) || !std::isfinite(te))
      throw ConfigError("sampling period must be positive");
    if (!(duration >= 0.0) || !std::isfinite(duration))
      throw ConfigError("duration must be non-negative");
    return TimeGrid{te, duration, static_cast<std::size_t>(std::llround(duration / te)) + 1};
  }

  double time(std::size_t k) const { return static_cast<double>(k) * te; }
};

struct Sample {
  double t = 0.0;
  double value = 0.0;
};

/// Fixed-capacity sliding window of uniformly spaced samples, oldest first.
class SampleWindow {
public:
  SampleWindow(std::size_t capacity, double te) : capacity_(capacity), te_(te) {
    if (capacity == 0) throw ConfigError("window capacity must be positive");
    if (!(te > 0.0)) throw ConfigError("window sampling period must be positive");
  }

  /// Appends a sample; evicts the oldest one when full. Timestamps must advance by exactly te.
  void push(double t, double value) {
    if (!samples_.empty()) {
      const double gap = t - samples_.back().t;
      if (std::abs(gap - te_) > 1e-9 * std::max(1.0, std::abs(t)))
        throw ConfigError("window samples must be spaced by the sampling period");
    }
    if (samples_.size() == capacity_) samples_.pop_front();
    samples_.push_back({t, value});
  }

  void clear() { samples_.clear(); }

  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }
  bool full() const { return samples_.size() == capacity_; }
  double te() const { return te_; }

  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const Sample& front() const { return samples_.front(); }
  const Sample& back() const { return samples_.back(); }

  /// Time span covered by the stored samples, (count-1)*te.
  double span() const {
    return samples_.empty() ? 0.0 : static_cast<double>(samples_.size() - 1) * te_;
  }

  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

private:
  std::size_t capacity_;
  double te_;
  std::deque<Sample> samples_;
};

/// Trapezoidal approximation of the integral over the window of weight(sigma) * value(sigma),
/// where sigma is window-local time (0 at the oldest sample). Empty when fewer than 2 samples.
template <class Weight>
std::optional<double> window_quadrature(const SampleWindow& window, Weight&& weight) {
  if (window.size() < 2) return std::nullopt;
  const double t0 = window.front().t;
  const double h = window.te();
  double acc = 0.0;
  const std::size_t last = window.size() - 1;
  for (std::size_t j = 0; j <= last; ++j) {
    const double sigma = window[j].t - t0;
    const double f = weight(sigma) * window[j].value;
    acc += (j == 0 || j == last) ? 0.5 * f : f;
  }
  return acc * h;
}

struct Setpoint {
  double t = 0.0;
  double level = 0.0;
};

/// y*, dy*/dt and d2y*/dt2 at one instant.
struct ReferencePoint {
  double y = 0.0;
  double dy = 0.0;
  double ddy = 0.0;
  double setpoint = 0.0;
};

/// Piecewise-constant targets joined by quintic (C2) transitions starting at each setpoint time.
class ReferenceProfile {
public:
  ReferenceProfile(std::vector<Setpoint> setpoints, double transition_time)
      : setpoints_(std::move(setpoints)), transition_(transition_time) {
    if (setpoints_.empty()) throw ConfigError("reference needs at least one setpoint");
    if (!(transition_ >= 0.0)) throw ConfigError("transition time must be non-negative");
    for (std::size_t i = 1; i < setpoints_.size(); ++i) {
      if (!(setpoints_[i].t > setpoints_[i - 1].t))
        throw ConfigError("setpoint times must be strictly increasing");
      if (setpoints_[i].t < setpoints_[i - 1].t + transition_ && i > 1)
        throw ConfigError("setpoint transitions overlap");
    }
  }

  ReferencePoint at(double t) const {
    ReferencePoint p{setpoints_.front().level, 0.0, 0.0, setpoints_.front().level};
    for (std::size_t i = 1; i < setpoints_.size(); ++i) {
      if (t < setpoints_[i].t) break;
      const double from = setpoints_[i - 1].level;
      const double to = setpoints_[i].level;
      p.setpoint = to;
      const double elapsed = t - setpoints_[i].t;
      if (transition_ == 0.0 || elapsed >= transition_) {
        p = {to, 0.0, 0.0, to};
        continue;
      }
      // s-curve 10s^3 - 15s^4 + 6s^5 has zero slope and curvature at both ends
      const double s = elapsed / transition_;
      const double s2 = s * s;
      const double jump = to - from;
      p.y = from + jump * s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
      p.dy = jump * 30.0 * s2 * (1.0 - s) * (1.0 - s) / transition_;
      p.ddy = jump * 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (transition_ * transition_);
    }
    return p;
  }

  const std::vector<Setpoint>& setpoints() const { return setpoints_; }
  double transition_time() const { return transition_; }

private:
  std::vector<Setpoint> setpoints_;
  double transition_;
};

/// Reference sampled on a grid.
struct ReferenceTrajectory {
  std::vector<double> ystar;
  std::vector<double> dystar;
  std::vector<double> ddystar;
  std::vector<double> setpoint;

  std::size_t size() const { return ystar.size(); }
};

inline ReferenceTrajectory make_reference(const std::vector<Setpoint>& setpoints,
                                          double transition_time, const TimeGrid& grid) {
  for (const auto& sp : setpoints)
    if (sp.t < 0.0 || sp.t > grid.duration)
      throw ConfigError("setpoint time outside the simulation horizon");
  const ReferenceProfile profile(setpoints, transition_time);
  ReferenceTrajectory ref;
  ref.ystar.reserve(grid.n_steps);
  ref.dystar.reserve(grid.n_steps);
  ref.ddystar.reserve(grid.n_steps);
  ref.setpoint.reserve(grid.n_steps);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const auto p = profile.at(grid.time(k));
    ref.ystar.push_back(p.y);
    ref.dystar.push_back(p.dy);
    ref.ddystar.push_back(p.ddy);
    ref.setpoint.push_back(p.setpoint);
  }
  return ref;
}

/// Seeded zero-mean Gaussian source. Copies replay the same stream from the copy point.
class NoiseSource {
public:
  NoiseSource() : NoiseSource(0, 0.0) {}
  NoiseSource(std::uint64_t seed, double std_dev) : seed_(seed), std_(std_dev), engine_(seed) {
    if (!(std_dev >= 0.0)) throw ConfigError("noise standard deviation must be non-negative");
  }

  double next() {
    // keep the engine moving so that std = 0 and std > 0 runs stay in lockstep
    const double z = normal_(engine_);
    return std_ == 0.0 ? 0.0 : std_ * z;
  }

  /// One standard normal draw, regardless of the configured deviation.
  double standard() { return normal_(engine_); }

  std::uint64_t seed() const { return seed_; }
  double std_dev() const { return std_; }

private:
  std::uint64_t seed_;
  double std_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline std::vector<double> noise_stream(NoiseSource source, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(source.next());
  return out;
}

} // namespace mfc
