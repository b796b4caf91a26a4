#pragma once

#include <mfc/controllers.hpp>
#include <mfc/errors.hpp>
#include <mfc/signals.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Sampled classic and intelligent controllers written as velocity-form recursions, and the gain
// maps under which they produce the same control sequence. These recursions use the
// plus-K_P convention u = (y*' - F + K_P e)/alpha, not the minus convention of controllers.hpp.

namespace mfc {

enum class MapDirection { ip_to_pi, ipd_to_pid, ipi_to_pi2, ipid_to_pi2d };

inline const char* to_string(MapDirection d) {
  switch (d) {
    case MapDirection::ip_to_pi: return "iP->PI";
    case MapDirection::ipd_to_pid: return "iPD->PID";
    case MapDirection::ipi_to_pi2: return "iPI->PI2";
    case MapDirection::ipid_to_pi2d: return "iPID->PI2D";
  }
  return "?";
}

struct GainMap {
  MapDirection direction = MapDirection::ip_to_pi;
  double h = 0.0;
  double alpha = 1.0;
  IntelligentGains source{};
  ClassicGains mapped{};
};

namespace detail {

inline double alpha_h(double alpha, double h) {
  const double ah = alpha * h;
  if (ah == 0.0 || !std::isfinite(ah)) throw ConfigError("alpha*h must be non-zero");
  return ah;
}

} // namespace detail

inline ClassicGains map_ip_to_pi(double alpha, double h, double KP) {
  const double ah = detail::alpha_h(alpha, h);
  ClassicGains g;
  g.kp = -1.0 / ah;
  g.ki = KP / ah;
  return g;
}

inline ClassicGains map_ipd_to_pid(double alpha, double h, double KP, double KD) {
  const double ah = detail::alpha_h(alpha, h);
  ClassicGains g;
  g.kp = KD / ah;
  g.ki = KP / ah;
  g.kd = -1.0 / ah;
  return g;
}

inline ClassicGains map_ipi_to_pi2(double alpha, double h, double KP, double KI) {
  ClassicGains g = map_ip_to_pi(alpha, h, KP);
  g.kii = KI / detail::alpha_h(alpha, h);
  return g;
}

inline ClassicGains map_ipid_to_pi2d(double alpha, double h, double KP, double KI, double KD) {
  ClassicGains g = map_ipd_to_pid(alpha, h, KP, KD);
  g.kii = KI / detail::alpha_h(alpha, h);
  return g;
}

inline GainMap make_gain_map(MapDirection d, double alpha, double h, const IntelligentGains& src) {
  GainMap m{d, h, alpha, src, {}};
  switch (d) {
    case MapDirection::ip_to_pi: m.mapped = map_ip_to_pi(alpha, h, src.kp); break;
    case MapDirection::ipd_to_pid: m.mapped = map_ipd_to_pid(alpha, h, src.kp, src.kd); break;
    case MapDirection::ipi_to_pi2: m.mapped = map_ipi_to_pi2(alpha, h, src.kp, src.ki); break;
    case MapDirection::ipid_to_pi2d:
      m.mapped = map_ipid_to_pi2d(alpha, h, src.kp, src.ki, src.kd);
      break;
  }
  m.source.alpha = alpha;
  return m;
}

/// Backward differences and the running Riemann sum of a sampled error, zero initial memory.
class DiscreteError {
public:
  explicit DiscreteError(double h) : h_(h) {}

  void push(double e) {
    prev_de_ = de_;
    de_ = (e - e_) / h_;
    dde_ = (de_ - prev_de_) / h_;
    diff_ = e - e_;
    e_ = e;
    sum_ += h_ * e;
  }

  double e() const { return e_; }
  double diff() const { return diff_; }  ///< e(t) - e(t-h)
  double de() const { return de_; }
  double dde() const { return dde_; }
  double sum() const { return sum_; }

private:
  double h_;
  double e_ = 0.0;
  double diff_ = 0.0;
  double de_ = 0.0;
  double prev_de_ = 0.0;
  double dde_ = 0.0;
  double sum_ = 0.0;
};

namespace detail {

template <class Step>
std::vector<double> run_recursion(const std::vector<double>& e_seq, double h, Step&& step) {
  std::vector<double> u_seq;
  u_seq.reserve(e_seq.size());
  DiscreteError d(h);
  double u = 0.0;
  for (double e : e_seq) {
    d.push(e);
    u += step(d);
    u_seq.push_back(u);
  }
  return u_seq;
}

} // namespace detail

inline std::vector<double> sampled_pi(const std::vector<double>& e, double h, double kp, double ki) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return kp * d.diff() + ki * h * d.e();
  });
}

inline std::vector<double> sampled_ip(const std::vector<double>& e, double h, double alpha, double KP) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return -d.diff() / (h * alpha) + KP / alpha * d.e();
  });
}

inline std::vector<double> sampled_pi2(const std::vector<double>& e, double h, double kp, double ki,
                                       double kii) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return kp * d.diff() + ki * h * d.e() + kii * h * d.sum();
  });
}

inline std::vector<double> sampled_ipi(const std::vector<double>& e, double h, double alpha,
                                       double KP, double KI) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return -d.diff() / (h * alpha) + KP / alpha * d.e() + KI / alpha * d.sum();
  });
}

inline std::vector<double> sampled_pid(const std::vector<double>& e, double h, double kp, double ki,
                                       double kd) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return kp * h * d.de() + ki * h * d.e() + kd * h * d.dde();
  });
}

inline std::vector<double> sampled_ipd(const std::vector<double>& e, double h, double alpha,
                                       double KP, double KD) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return -d.dde() / alpha + KP / alpha * d.e() + KD / alpha * d.de();
  });
}

inline std::vector<double> sampled_pi2d(const std::vector<double>& e, double h, double kp, double ki,
                                        double kii, double kd) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return kp * h * d.de() + ki * h * d.e() + kii * h * d.sum() + kd * h * d.dde();
  });
}

inline std::vector<double> sampled_ipid(const std::vector<double>& e, double h, double alpha,
                                        double KP, double KI, double KD) {
  return detail::run_recursion(e, h, [&](const DiscreteError& d) {
    return -d.dde() / alpha + KP / alpha * d.e() + KI / alpha * d.sum() + KD / alpha * d.de();
  });
}

/// max|a - b| scaled by max(1, max|a|, max|b|).
inline double relative_deviation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("sequences differ in length");
  double dev = 0.0;
  double scale = 1.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dev = std::max(dev, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return dev / scale;
}

/// Control sequences of the intelligent controller and of its mapped classic twin.
inline std::pair<std::vector<double>, std::vector<double>> run_pair(const GainMap& m,
                                                                    const std::vector<double>& e) {
  const auto& s = m.source;
  const auto& c = m.mapped;
  switch (m.direction) {
    case MapDirection::ip_to_pi:
      return {sampled_ip(e, m.h, m.alpha, s.kp), sampled_pi(e, m.h, c.kp, c.ki)};
    case MapDirection::ipd_to_pid:
      return {sampled_ipd(e, m.h, m.alpha, s.kp, s.kd), sampled_pid(e, m.h, c.kp, c.ki, c.kd)};
    case MapDirection::ipi_to_pi2:
      return {sampled_ipi(e, m.h, m.alpha, s.kp, s.ki), sampled_pi2(e, m.h, c.kp, c.ki, c.kii)};
    case MapDirection::ipid_to_pi2d:
      return {sampled_ipid(e, m.h, m.alpha, s.kp, s.ki, s.kd),
              sampled_pi2d(e, m.h, c.kp, c.ki, c.kii, c.kd)};
  }
  return {};
}

struct CorrespondenceRow {
  GainMap map;
  double max_abs_deviation = 0.0;
  double max_rel_deviation = 0.0;
};

struct CorrespondenceReport {
  std::size_t n_sequences = 0;
  std::size_t length = 0;
  std::uint64_t seed = 0;
  std::vector<CorrespondenceRow> rows;

  double worst_relative() const {
    double w = 0.0;
    for (const auto& r : rows) w = std::max(w, r.max_rel_deviation);
    return w;
  }
};

/// Runs every map direction on n_sequences standard-normal error sequences.
inline CorrespondenceReport verify_correspondence(double h, double alpha, const IntelligentGains& gains,
                                                  std::size_t n_sequences, std::size_t length = 1000,
                                                  std::uint64_t seed = 1) {
  if (n_sequences == 0) throw ConfigError("at least one random sequence is required");
  if (length == 0) throw ConfigError("sequence length must be positive");
  CorrespondenceReport report{n_sequences, length, seed, {}};
  for (auto d : {MapDirection::ip_to_pi, MapDirection::ipd_to_pid, MapDirection::ipi_to_pi2,
                 MapDirection::ipid_to_pi2d})
    report.rows.push_back({make_gain_map(d, alpha, h, gains), 0.0, 0.0});

  NoiseSource source(seed, 1.0);
  std::vector<double> e(length);
  for (std::size_t s = 0; s < n_sequences; ++s) {
    for (auto& v : e) v = source.standard();
    for (auto& row : report.rows) {
      const auto [ui, uc] = run_pair(row.map, e);
      double abs_dev = 0.0;
      for (std::size_t i = 0; i < ui.size(); ++i) abs_dev = std::max(abs_dev, std::abs(ui[i] - uc[i]));
      row.max_abs_deviation = std::max(row.max_abs_deviation, abs_dev);
      row.max_rel_deviation = std::max(row.max_rel_deviation, relative_deviation(ui, uc));
    }
  }
  return report;
}

} // namespace mfc
