// One PASS/FAIL line per acceptance criterion. Exit status is the number of failed criteria.

#include "../oracles.hpp"

#include <mfc/experiments.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Verdict()> check;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Tolerances and bounds pinned for the criteria below.
constexpr double kOpenLoopTol = 1e-3;
constexpr double kOneStepTol = 1e-2;
constexpr double kOffsetTol = 1e-9;
constexpr double kCorrespondenceTol = 1e-12;
constexpr double kOscillatorNoise = 0.03;
constexpr double kCubicBound = 0.25;
constexpr double kDelayBound = 1.0;
constexpr double kSteadyTol = 0.02;
constexpr double kRk4Tol = 1e-6;
constexpr double kDcTol = 1e-3;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

mfc::ScenarioResult run(const std::string& name, std::uint64_t seed) {
  mfc::RunOptions opt;
  opt.seed = seed;
  return mfc::run_scenario(name, opt);
}

double rms_between(const mfc::ClosedLoopRecord& r, double t0, double t1) {
  return mfc::compute_metrics(r, t0, t1, 0.0).rms_error;
}

double max_between(const mfc::ClosedLoopRecord& r, double t0, double t1) {
  return mfc::compute_metrics(r, t0, t1, 0.0).max_abs_error;
}

Verdict estimator_consistency() {
  const double te = 0.01;
  const std::size_t N = 10;  // L = 0.1 s
  double worst_ol = 0.0;
  double worst_os = 0.0;
  double worst_offset = 0.0;
  for (double phi : {-2.0, 0.0, 1.0, 5.0}) {
    for (double alpha : {1.0, 10.0}) {
      const auto run = oracle::integrator(phi, alpha, te, 200, 0.3, [](double t) { return 0.5 + 0.3 * t; });
      mfc::SampleWindow y(N + 1, te), ys(N + 1, te), u(N, te), y2(2, te);
      for (std::size_t k = 0; k < run.y.size(); ++k) {
        const double t = static_cast<double>(k) * te;
        y.push(t, run.y[k]);
        ys.push(t, run.y[k] + 10.0);
        y2.push(t, run.y[k]);
        if (k >= 1) u.push(t - te, run.u[k - 1]);
        if (y.full() && u.full()) {
          const auto a = mfc::estimate_openloop(y, u, alpha);
          const auto b = mfc::estimate_openloop(ys, u, alpha);
          worst_ol = std::max(worst_ol, std::abs(a.value - phi));
          worst_offset = std::max(worst_offset, std::abs(a.value - b.value));
        }
        if (k >= 1) {
          const auto c = mfc::estimate_onestep(y2, run.u[k - 1], alpha, 1);
          worst_os = std::max(worst_os, std::abs(c.value - phi));
        }
      }
    }
  }
  return {worst_ol <= kOpenLoopTol && worst_os <= kOneStepTol && worst_offset <= kOffsetTol,
          "open-loop |dphi|=" + fmt(worst_ol) + " one-step |dphi|=" + fmt(worst_os) +
              " offset |d|=" + fmt(worst_offset)};
}

Verdict table_equivalence() {
  mfc::IntelligentGains g;
  g.kp = 1.375;
  g.ki = 1.6875;
  g.kd = 2.25;
  const auto rep = mfc::verify_correspondence(0.01, 1.0, g, 10000, 1000, 1);
  std::string d;
  bool ok = true;
  for (const auto& row : rep.rows) {
    ok = ok && row.max_rel_deviation <= kCorrespondenceTol;
    d += std::string(mfc::to_string(row.map.direction)) + "=" + fmt(row.max_rel_deviation) + " ";
  }
  return {ok, d + "over 10000 sequences of length 1000"};
}

Verdict oscillator_cancellation() {
  bool ok = true;
  std::string d;
  for (auto seed : kSeeds) {
    const auto damped = run("oscillator-ipi", seed);
    const auto undamped = run("oscillator-undamped", seed);
    const double a = rms_between(damped.get("iPI").record, 10.0, 15.0);
    const double b = rms_between(undamped.get("iPI").record, 10.0, 15.0);
    ok = ok && a <= 3.0 * kOscillatorNoise && b >= 3.0 * a;
    if (seed == kSeeds.front()) d = "seed 1: c=3 rms=" + fmt(a) + " c=0 rms=" + fmt(b);
  }
  return {ok, d + " (final 5 s, seeds 1-5)"};
}

Verdict spring_ordering() {
  bool ok = true;
  std::string d;
  for (auto seed : kSeeds) {
    const auto r = run("spring", seed);
    const double pid = rms_between(r.get("PID").record, 0.0, 15.0);
    const double ipid = rms_between(r.get("iPID").record, 0.0, 15.0);
    const double ip = rms_between(r.get("iP").record, 0.0, 15.0);
    ok = ok && ipid < ip && ip < pid;
    if (seed == kSeeds.front())
      d = "seed 1: iPID=" + fmt(ipid) + " iP=" + fmt(ip) + " PID=" + fmt(pid);
  }
  return {ok, d + " (full run, seeds 1-5)"};
}

Verdict lti_robustness() {
  bool ok = true;
  std::string d;
  for (auto seed : kSeeds) {
    const auto nominal = run("lti-nominal", seed);
    const auto aged = run("lti-aging", seed);
    const auto fault = run("lti-fault", seed);
    const double ip_ratio = aged.get("iP").metrics.rms_error / nominal.get("iP").metrics.rms_error;
    const double pid_ratio = aged.get("PID").metrics.rms_error / nominal.get("PID").metrics.rms_error;
    const double rec_ip = *fault.get("iP").metrics.recovery_time;
    const double rec_pid = *fault.get("PID").metrics.recovery_time;
    ok = ok && ip_ratio <= 1.5 && pid_ratio >= 2.0 && rec_ip < rec_pid;
    if (seed == kSeeds.front())
      d = "seed 1: aging/nominal iP=" + fmt(ip_ratio) + " PID=" + fmt(pid_ratio) +
          " recovery iP=" + fmt(rec_ip) + "s PID=" + fmt(rec_pid) + "s";
  }
  return {ok, d + " (seeds 1-5)"};
}

Verdict cubic_levels() {
  const auto sps = mfc::scenario_detail::cubic_setpoints();
  double top = 0.0;
  for (const auto& s : sps) top = std::max(top, std::abs(s.level));
  bool ok = true;
  std::string d;
  for (auto seed : kSeeds) {
    const auto r = run("nonlinear-cubic", seed);
    const auto& ip = r.get("iP").record;
    const auto& pid = r.get("PID").record;
    double ip_worst = max_between(ip, 0.0, ip.rows.back().t);
    double small_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < sps.size(); ++i) {
      const double t0 = sps[i].t;
      const double t1 = i + 1 < sps.size() ? sps[i + 1].t : ip.rows.back().t;
      if (std::abs(sps[i].level) > 0.05 * top) continue;
      small_ratio = std::min(small_ratio, max_between(pid, t0, t1) / max_between(ip, t0, t1));
    }
    ok = ok && ip_worst <= kCubicBound && small_ratio >= 2.0;
    if (seed == kSeeds.front())
      d = "seed 1: iP max|e|=" + fmt(ip_worst) + " smallest PID/iP ratio on small levels=" + fmt(small_ratio);
  }
  return {ok, d + " (seeds 1-5)"};
}

Verdict delay_bounded() {
  bool ok = true;
  std::string d;
  for (auto seed : kSeeds) {
    const auto r = run("delay-varying", seed);
    const auto& rec = r.get("iP").record;
    const double worst = max_between(rec, 0.0, rec.rows.back().t);
    ok = ok && std::isfinite(worst) && worst <= kDelayBound;
    if (seed == kSeeds.front()) d = "seed 1: closed-loop max|e|=" + fmt(worst) + " over 60 s";
  }
  // open loop from a unit history with u = 0
  mfc::DelayPlant::Params p;
  p.y0 = 1.0;
  mfc::Plant plant(mfc::DelayPlant(p, 0.01, mfc::NoiseSource(7, 1.0)));
  bool diverged = false;
  double last = 1.0;
  try {
    for (int k = 0; k < 6000 && !diverged; ++k) {
      last = plant.step(0.0, 0.01);
      diverged = std::abs(last) > 1e6;
    }
  } catch (const mfc::DivergenceError&) {
    diverged = true;
  }
  return {ok && diverged, d + "; open loop " + (diverged ? "diverges" : "stays bounded") +
                              " (|y|=" + fmt(std::abs(last)) + ")"};
}

Verdict heat_settling() {
  bool ok = true;
  std::string d;
  const std::vector<std::pair<double, double>> plateaus{{5.0, 0.5}, {10.0, 1.0}, {15.0, 0.25}};
  for (int idx = 1; idx <= 4; ++idx) {
    const auto r = run("heat-" + std::to_string(idx), 1);
    const auto& rec = r.get("iP").record;
    double worst = 0.0;
    for (const auto& [t_end, level] : plateaus) {
      double sum = 0.0;
      int n = 0;
      for (const auto& row : rec.rows)
        if (row.t > t_end - 1.0 - 1e-9 && row.t <= t_end + 1e-9) {
          sum += row.y_true;
          ++n;
        }
      worst = std::max(worst, std::abs(sum / n - level) / std::abs(level));
    }
    ok = ok && worst <= kSteadyTol;
    d += "heat-" + std::to_string(idx) + "=" + fmt(100.0 * worst) + "% ";
    if (idx == 1) {
      // final field against the linear profile carried by the mean boundary control
      double u_mean = 0.0;
      int n = 0;
      for (const auto& row : rec.rows)
        if (row.t > 14.0 - 1e-9) {
          u_mean += row.u_eff;
          ++n;
        }
      u_mean /= n;
      // the equation is linear, so the time-averaged field obeys the steady profile of the mean control
      const auto& f = *r.field;
      std::vector<double> w(f.x.size(), 0.0);
      int m = 0;
      for (std::size_t k = 0; k < f.t.size(); ++k)
        if (f.t[k] > 14.0 - 1e-9) {
          for (std::size_t i = 0; i < w.size(); ++i) w[i] += f.w[k][i];
          ++m;
        }
      double dev = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i)
        dev = std::max(dev, std::abs(w[i] / m - u_mean * f.x[i] / f.x.back()));
      const bool profile_ok = dev <= kSteadyTol * std::abs(u_mean);
      ok = ok && profile_ok;
      d += "(profile dev " + fmt(dev) + " vs u=" + fmt(u_mean) + ") ";
    }
  }
  return {ok, d + "steady error per plateau, worst"};
}

Verdict nonminphase() {
  try {
    const auto r = run("nonminphase-igpi", 1);
    const auto& rec = r.get("iGPI").record;
    double umax = 0.0;
    for (const auto& row : rec.rows) umax = std::max(umax, std::abs(row.u_eff));
    const double steady = max_between(rec, rec.rows.back().t - 2.0, rec.rows.back().t);
    const bool ok = umax <= 100.0 && steady <= kSteadyTol;
    return {ok, "max|u|=" + fmt(umax) + " final-2s max|e|=" + fmt(steady)};
  } catch (const mfc::DivergenceError& e) {
    return {false, std::string("diverged: ") + e.what()};
  }
}

Verdict numerical_hygiene() {
  const double te = 0.01;
  mfc::OscillatorPlant osc;
  double rk4_err = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    osc.step(1.0, te);
    rk4_err = std::max(rk4_err, std::abs(osc.output() - oracle::oscillator_step(k * te, 3.0, 4.0)));
  }
  const auto dc = [&](const mfc::TransferFunction& tf) {
    auto p = mfc::LtiPlant::from_transfer_function(tf);
    for (int k = 0; k < 3000; ++k) p.step(1.0, te);
    return p.output();
  };
  const double g1 = dc(mfc::scenario_detail::nominal_lti());
  const double g2 = dc(mfc::scenario_detail::aged_lti());
  const double g3 = dc(mfc::scenario_detail::nonminphase_lti());
  const double dc_err = std::max({std::abs(g1 - 4.0), std::abs(g2 - 4.0 / std::pow(2.2, 3)),
                                  std::abs(g3 + 0.5)});
  const double kp_h = mfc::map_ip_to_pi(1.0, 0.01, 1.8177).kp;
  const double kp_h2 = mfc::map_ip_to_pi(1.0, 0.005, 1.8177).kp;
  const bool doubled = std::abs(kp_h2) == 2.0 * std::abs(kp_h);
  return {rk4_err <= kRk4Tol && dc_err <= kDcTol && doubled,
          "rk4 err=" + fmt(rk4_err) + " dc err=" + fmt(dc_err) + " |kp(h/2)|/|kp(h)|=" +
              fmt(kp_h2 / kp_h)};
}

} // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"estimator consistency", estimator_consistency},
      {"gain-map equivalence", table_equivalence},
      {"oscillator error-dynamics cancellation", oscillator_cancellation},
      {"spring ordering iPID < iP < PID", spring_ordering},
      {"LTI aging and fault robustness", lti_robustness},
      {"unstable cubic plant, small levels", cubic_levels},
      {"time-varying delay", delay_bounded},
      {"heat equation settling", heat_settling},
      {"non-minimum-phase iGPI", nonminphase},
      {"numerical hygiene", numerical_hygiene},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s  %s: %s\n", v.pass ? "PASS" : "FAIL", c.name.c_str(), v.detail.c_str());
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed;
}
