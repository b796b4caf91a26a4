#pragma once

#include <mfc/controllers.hpp>
#include <mfc/correspondence.hpp>
#include <mfc/errors.hpp>
#include <mfc/estimation.hpp>
#include <mfc/plants.hpp>
#include <mfc/signals.hpp>
#include <mfc/simulation.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace mfc {

struct Param {
  std::string name;
  double value = 0.0;
  std::string help;
};

/// Ordered named numeric parameters; only known names can be overridden.
class Params {
public:
  Params() = default;
  explicit Params(std::vector<Param> items) : items_(std::move(items)) {}

  double operator[](const std::string& name) const { return find(name).value; }

  void set(const std::string& name, double value) { find(name).value = value; }

  /// Applies "key=value".
  void apply_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value: '" + text + "'");
    const std::string key = text.substr(0, eq);
    const std::string val = text.substr(eq + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || ptr != val.data() + val.size() || !std::isfinite(v))
      throw ConfigError("override value for '" + key + "' is not a number: '" + val + "'");
    set(key, v);
  }

  const std::vector<Param>& items() const { return items_; }

private:
  const Param& find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return p;
    throw ConfigError("unknown parameter '" + name + "'");
  }
  Param& find(const std::string& name) {
    return const_cast<Param&>(static_cast<const Params&>(*this).find(name));
  }

  std::vector<Param> items_;
};

struct RunOptions {
  std::uint64_t seed = 1;
  std::optional<double> duration;
  std::vector<std::string> overrides;
  std::optional<std::filesystem::path> out_dir;  ///< no files are written when empty
};

/// Optional dump of the heat field every `stride` samples.
struct FieldDump {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<std::vector<double>> w;
};

struct ScenarioPlan {
  std::vector<LoopConfig> loops;
  double recovery_band = 0.0;
  std::size_t field_stride = 0;  ///< heat scenarios only; 0 disables the field dump
};

struct Scenario {
  std::string name;
  std::string summary;
  double default_duration = 15.0;
  std::vector<Param> defaults;
  /// Empty for the correspondence check, which is not a closed loop.
  std::function<ScenarioPlan(const Params&, const TimeGrid&, std::uint64_t seed)> plan;
};

struct ControllerResult {
  ClosedLoopRecord record;
  Metrics metrics;
};

struct ScenarioResult {
  std::string name;
  std::uint64_t seed = 0;
  Params params;
  std::vector<ControllerResult> controllers;
  std::optional<FieldDump> field;
  std::optional<CorrespondenceReport> correspondence;
  std::string summary;

  const ControllerResult& get(const std::string& controller) const {
    for (const auto& c : controllers)
      if (c.record.controller == controller) return c;
    throw ConfigError("scenario " + name + " has no controller " + controller);
  }
};

// ---------------------------------------------------------------------------------------------
// Builders shared by the catalog

namespace scenario_detail {

inline std::vector<Setpoint> within(std::vector<Setpoint> sps, const TimeGrid& grid) {
  std::vector<Setpoint> out;
  for (const auto& s : sps)
    if (s.t <= grid.duration + 1e-12) out.push_back(s);
  return out;
}

inline LoopConfig loop(const std::string& name, const TimeGrid& grid, Plant plant,
                       const ReferenceTrajectory& ref, double noise_std, std::uint64_t seed) {
  LoopConfig c;
  c.name = name;
  c.grid = grid;
  c.plant = std::move(plant);
  c.reference = ref;
  c.noise = NoiseSource(seed, noise_std);
  return c;
}

inline LoopConfig intelligent(LoopConfig c, ControllerKind kind, IntelligentGains g,
                              EstimatorKind est, double window, int nu) {
  c.controller.kind = kind;
  c.controller.intelligent = g;
  c.ultra_local = UltraLocalConfig{nu, g.alpha, g.beta, est, window};
  return c;
}

/// Classic gains are given as the magnitudes of the design; the error convention e = y - y*
/// makes the feedback gains negative.
inline LoopConfig classic(LoopConfig c, ControllerKind kind, double kp, double ki, double kd,
                          double tau) {
  c.controller.kind = kind;
  c.controller.classic = ClassicGains{-kp, -ki, -kd, 0.0, tau};
  return c;
}

inline Params oscillator_params(double c) {
  return Params({{"c", c, "viscous friction coefficient"},
                 {"stiffness", 4.0, "spring constant"},
                 {"alpha", 1.0, "ultra-local input gain"},
                 {"kp", 16.0, "iPI proportional gain"},
                 {"ki", 25.0, "iPI integral gain"},
                 {"window", 2.0, "estimation window length [s]"},
                 {"noise", 0.03, "measurement noise std"},
                 {"transition", 2.0, "reference transition time [s]"}});
}

inline ScenarioPlan oscillator_plan(const std::string& name, const Params& p, const TimeGrid& grid,
                                    std::uint64_t seed) {
  const auto ref = make_reference(within({{0, 0}, {1, 1}, {6, 0.5}}, grid), p["transition"], grid);
  OscillatorPlant plant;
  plant.c = p["c"];
  plant.stiffness = p["stiffness"];
  IntelligentGains g;
  g.kp = p["kp"];
  g.ki = p["ki"];
  g.alpha = p["alpha"];
  ScenarioPlan plan;
  plan.loops.push_back(intelligent(loop(name, grid, plant, ref, p["noise"], seed), ControllerKind::ipi,
                                   g, EstimatorKind::open_loop_integral, p["window"], 1));
  return plan;
}

inline std::vector<Param> spring_defaults() {
  return {{"m", 0.5, "mass"},
          {"k1", 3.0, "true linear stiffness"},
          {"k1_hat", 2.0, "nominal stiffness used by the feedforward"},
          {"k3", 2.0, "cubic stiffness"},
          {"d", 1.0, "viscous damping"},
          {"fc", 0.25, "Coulomb friction level"},
          {"fs", 0.5, "static friction level"},
          {"vs", 0.1, "Stribeck velocity"},
          {"pid_kp", 1.375, "PID proportional gain magnitude"},
          {"pid_ki", 1.6875, "PID integral gain magnitude"},
          {"pid_kd", 2.25, "PID derivative gain magnitude"},
          {"pid_tau", 0.05, "PID derivative filter time constant [s]"},
          {"ipid_alpha", 2.0, "iPID input gain"},
          {"ipid_kp", 6.75, "iPID proportional gain, error poles at -1.5"},
          {"ipid_ki", 3.375, "iPID integral gain"},
          {"ipid_kd", 4.5, "iPID derivative gain"},
          {"ip_alpha", 1.0, "iP input gain"},
          {"ip_kp", 1.5, "iP proportional gain"},
          {"window", 0.1, "iP estimation window length [s]"},
          {"noise", 0.01, "measurement noise std"},
          {"amplitude", 1.5, "reference amplitude"},
          {"transition", 1.0, "reference transition time [s]"}};
}

enum SpringSet : unsigned { spring_pid = 1, spring_ipid = 2, spring_ip = 4 };

inline ScenarioPlan spring_plan(const std::string& name, unsigned which, const Params& p,
                                const TimeGrid& grid, std::uint64_t seed) {
  const double a = p["amplitude"];
  const auto ref = make_reference(within({{0, 0}, {1, a}, {6, -a / 2}, {11, a / 2}}, grid),
                                  p["transition"], grid);
  DuffingPlant plant;
  plant.m = p["m"];
  plant.k1 = p["k1"];
  plant.k3 = p["k3"];
  plant.d = p["d"];
  plant.friction = TustinFriction{p["fc"], p["fs"], p["vs"]};
  if (!(plant.m > 0.0)) throw ConfigError("mass must be positive");
  if (!(plant.friction.fs >= plant.friction.fc && plant.friction.fc > 0.0 && plant.friction.vs > 0.0))
    throw ConfigError("friction needs fs >= fc > 0 and vs > 0");
  const auto base = loop(name, grid, plant, ref, p["noise"], seed);
  ScenarioPlan plan;
  if (which & spring_pid) {
    auto c = classic(base, ControllerKind::pid, p["pid_kp"], p["pid_ki"], p["pid_kd"], p["pid_tau"]);
    c.feedforward = FeedforwardSpec{p["m"], p["k1_hat"]};
    plan.loops.push_back(std::move(c));
  }
  if (which & spring_ipid) {
    IntelligentGains g;
    g.kp = p["ipid_kp"];
    g.ki = p["ipid_ki"];
    g.kd = p["ipid_kd"];
    g.alpha = p["ipid_alpha"];
    plan.loops.push_back(
        intelligent(base, ControllerKind::ipid, g, EstimatorKind::one_step, p["window"], 2));
  }
  if (which & spring_ip) {
    IntelligentGains g;
    g.kp = p["ip_kp"];
    g.alpha = p["ip_alpha"];
    plan.loops.push_back(intelligent(base, ControllerKind::ip, g, EstimatorKind::open_loop_integral,
                                     p["window"], 1));
  }
  return plan;
}

inline std::vector<Param> lti_defaults(bool fault) {
  std::vector<Param> v{{"pid_kp", 1.8177, "PID proportional gain magnitude"},
                       {"pid_ki", 0.7755, "PID integral gain magnitude"},
                       {"pid_kd", 0.1766, "PID derivative gain magnitude"},
                       {"pid_tau", 0.05, "PID derivative filter time constant [s]"},
                       {"kp", 1.8177, "iP proportional gain"},
                       {"alpha", 1.0, "iP input gain"},
                       {"window", 0.05, "estimation window length [s]"},
                       {"noise", 0.03, "measurement noise std"},
                       {"setpoint", 1.0, "target level"},
                       {"transition", 1.0, "reference transition time [s]"}};
  if (fault) {
    v.push_back({"t_fault", 8.0, "actuator fault time [s]"});
    v.push_back({"fault_gain", 0.5, "control multiplier after the fault"});
    v.push_back({"band", 0.05, "recovery band as a fraction of the setpoint"});
  }
  return v;
}

inline ScenarioPlan lti_plan(const std::string& name, const TransferFunction& tf, bool fault,
                             const Params& p, const TimeGrid& grid, std::uint64_t seed) {
  const auto ref = make_reference(within({{0, 0}, {1, p["setpoint"]}}, grid), p["transition"], grid);
  const auto base = loop(name, grid, LtiPlant::from_transfer_function(tf), ref, p["noise"], seed);
  IntelligentGains g;
  g.kp = p["kp"];
  g.alpha = p["alpha"];
  ScenarioPlan plan;
  plan.loops.push_back(classic(base, ControllerKind::pid, p["pid_kp"], p["pid_ki"], p["pid_kd"], p["pid_tau"]));
  plan.loops.push_back(
      intelligent(base, ControllerKind::ip, g, EstimatorKind::open_loop_integral, p["window"], 1));
  if (fault) {
    for (auto& l : plan.loops) l.fault = FaultSpec{p["t_fault"], p["fault_gain"]};
    plan.recovery_band = p["band"] * std::abs(p["setpoint"]);
  }
  return plan;
}

inline TransferFunction nominal_lti() { return {{1, 4, 4}, {1, 3, 3, 1}}; }              // (s+2)^2/(s+1)^3
inline TransferFunction aged_lti() {
  return {{1, 4, 4}, poly_mul(poly_mul({1, 2.2}, {1, 2.2}), {1, 2.2})};                  // (s+2)^2/(s+2.2)^3
}
inline TransferFunction nonminphase_lti() { return {{1, -1}, {1, 3, 2}}; }               // (s-1)/((s+1)(s+2))

/// Levels of the unstable cubic benchmark; each starts 5 s after the previous one.
inline std::vector<double> cubic_levels() { return {1.0, 0.5, 0.2, 0.05, 0.5, 0.0}; }

inline std::vector<Setpoint> cubic_setpoints() {
  std::vector<Setpoint> s{{0, 0}};
  const auto levels = cubic_levels();
  for (std::size_t i = 0; i < levels.size(); ++i) s.push_back({2.0 + 5.0 * static_cast<double>(i), levels[i]});
  return s;
}

inline std::vector<Param> heat_defaults(double x_c, double c, bool cubic) {
  return {{"alpha", 10.0, "ultra-local input gain"},
          {"kp", 10.0, "iP proportional gain"},
          {"window", 0.1, "estimation window length [s]"},
          {"noise", 0.01, "measurement noise std"},
          {"length", 1.0, "rod length"},
          {"n_x", 101.0, "grid points including both ends"},
          {"x_c", x_c, "measurement point as a fraction of the length"},
          {"c", c, "left boundary value"},
          {"cubic", cubic ? 1.0 : 0.0, "1 adds the w^3 source term"},
          {"transition", 1.0, "reference transition time [s]"},
          {"field_stride", 10.0, "dump the field every N samples (0 disables)"}};
}

inline ScenarioPlan heat_plan(const std::string& name, const Params& p, const TimeGrid& grid,
                              std::uint64_t seed) {
  const auto ref =
      make_reference(within({{0, 0.5}, {5, 1.0}, {10, 0.25}}, grid), p["transition"], grid);
  if (!(p["n_x"] >= 5.0)) throw ConfigError("heat grid needs at least 3 interior points");
  HeatPlant::Params hp;
  hp.length = p["length"];
  hp.n_x = static_cast<std::size_t>(std::lround(p["n_x"]));
  hp.x_c = p["x_c"] * p["length"];
  hp.c = p["c"];
  hp.cubic_source = p["cubic"] != 0.0;
  IntelligentGains g;
  g.kp = p["kp"];
  g.alpha = p["alpha"];
  ScenarioPlan plan;
  plan.loops.push_back(intelligent(loop(name, grid, HeatPlant(hp), ref, p["noise"], seed),
                                   ControllerKind::ip, g, EstimatorKind::open_loop_integral,
                                   p["window"], 1));
  if (p["field_stride"] < 0.0) throw ConfigError("field_stride must be non-negative");
  plan.field_stride = static_cast<std::size_t>(std::lround(p["field_stride"]));
  return plan;
}

} // namespace scenario_detail

inline const std::vector<Scenario>& scenario_catalog() {
  using namespace scenario_detail;
  static const std::vector<Scenario> catalog = [] {
    std::vector<Scenario> c;
    for (const auto& [nm, damping, text] :
         {std::tuple{"oscillator-ipi", 3.0, "iPI on the damped oscillator y'' + c y' + 4y = u"},
          std::tuple{"oscillator-undamped", 0.0, "same first-order iPI design on the undamped oscillator"}}) {
      const std::string name = nm;
      c.push_back({name, text, 15.0, oscillator_params(damping).items(),
                   [name](const Params& p, const TimeGrid& g, std::uint64_t s) {
                     return oscillator_plan(name, p, g, s);
                   }});
    }
    for (const auto& [nm, which, text] :
         {std::tuple{"spring", 7u, "Duffing spring with Tustin friction: PID+feedforward, iPID and iP"},
          std::tuple{"spring-pid", 1u, "Duffing spring: PID with flat feedforward"},
          std::tuple{"spring-ipid", 2u, "Duffing spring: iPID (nu = 2, one-step estimate)"},
          std::tuple{"spring-ip", 4u, "Duffing spring: iP (nu = 1)"}}) {
      const std::string name = nm;
      const unsigned set = which;
      c.push_back({name, text, 15.0, spring_defaults(),
                   [name, set](const Params& p, const TimeGrid& g, std::uint64_t s) {
                     return spring_plan(name, set, p, g, s);
                   }});
    }
    c.push_back({"lti-nominal", "PID vs iP on (s+2)^2/(s+1)^3", 15.0, lti_defaults(false),
                 [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   return lti_plan("lti-nominal", nominal_lti(), false, p, g, s);
                 }});
    c.push_back({"lti-aging", "same controllers on the aged plant (s+2)^2/(s+2.2)^3", 15.0,
                 lti_defaults(false), [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   return lti_plan("lti-aging", aged_lti(), false, p, g, s);
                 }});
    c.push_back({"lti-fault", "nominal plant, actuator loses half its power at t_fault", 15.0,
                 lti_defaults(true), [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   return lti_plan("lti-fault", nominal_lti(), true, p, g, s);
                 }});
    c.push_back({"nonlinear-cubic", "PID vs iP on the unstable y' - y = u^3 over decreasing levels", 32.0,
                 {{"pid_kp", 2.2727, "PID proportional gain magnitude"},
                  {"pid_ki", 1.8769, "PID integral gain magnitude"},
                  {"pid_kd", 0.1750, "PID derivative gain magnitude"},
                  {"pid_tau", 0.05, "PID derivative filter time constant [s]"},
                  {"kp", 2.2727, "iP proportional gain"},
                  {"alpha", 1.0, "iP input gain"},
                  {"window", 0.1, "estimation window length [s]"},
                  {"noise", 0.03, "measurement noise std"},
                  {"transition", 1.0, "reference transition time [s]"}},
                 [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   const auto ref = make_reference(within(cubic_setpoints(), g), p["transition"], g);
                   const auto base = loop("nonlinear-cubic", g, CubicPlant{}, ref, p["noise"], s);
                   IntelligentGains ig;
                   ig.kp = p["kp"];
                   ig.alpha = p["alpha"];
                   ScenarioPlan plan;
                   plan.loops.push_back(classic(base, ControllerKind::pid, p["pid_kp"], p["pid_ki"],
                                                p["pid_kd"], p["pid_tau"]));
                   plan.loops.push_back(intelligent(base, ControllerKind::ip, ig,
                                                    EstimatorKind::open_loop_integral, p["window"], 1));
                   return plan;
                 }});
    c.push_back({"delay-varying", "iP on y' = y + 5 y(t - tau) + u with a random-walk delay", 60.0,
                 {{"kp", 1.0, "iP proportional gain"},
                  {"alpha", 1.0, "iP input gain"},
                  {"window", 0.1, "estimation window length [s]"},
                  {"noise", 0.03, "measurement noise std"},
                  {"tau0", 2.5, "initial delay [s]"},
                  {"tau_max", 5.0, "delay upper clamp [s]"},
                  {"walk_step", 10.0, "delay step per sample in units of te"},
                  {"transition", 2.0, "reference transition time [s]"}},
                 [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   const auto ref = make_reference(within({{0, 0}, {1, 1}, {20, -1}, {40, 0.5}}, g),
                                                   p["transition"], g);
                   DelayPlant::Params dp;
                   dp.tau0 = p["tau0"];
                   dp.tau_max = p["tau_max"];
                   dp.walk_step_factor = p["walk_step"];
                   // the delay walk draws from its own stream so the sensor noise matches other runs
                   const DelayPlant plant(dp, g.te, NoiseSource(s ^ 0x9e3779b97f4a7c15ULL, 1.0));
                   IntelligentGains ig;
                   ig.kp = p["kp"];
                   ig.alpha = p["alpha"];
                   ScenarioPlan plan;
                   plan.loops.push_back(intelligent(loop("delay-varying", g, plant, ref, p["noise"], s),
                                                    ControllerKind::ip, ig,
                                                    EstimatorKind::open_loop_integral, p["window"], 1));
                   return plan;
                 }});
    for (const auto& [idx, x_c, cval, cubic] :
         {std::tuple{1, 1.0 / 3.0, 0.0, false}, std::tuple{2, 1.0 / 3.0, 0.5, false},
          std::tuple{3, 2.0 / 3.0, 0.0, false}, std::tuple{4, 2.0 / 3.0, 0.0, true}}) {
      const std::string name = "heat-" + std::to_string(idx);
      std::ostringstream text;
      text << "iP on the 1-D heat equation, boundary control, x_c = " << (x_c < 0.5 ? "L/3" : "2L/3")
           << ", c = " << cval << (cubic ? ", source w^3" : "");
      c.push_back({name, text.str(), 15.0, heat_defaults(x_c, cval, cubic),
                   [name](const Params& p, const TimeGrid& g, std::uint64_t s) {
                     return heat_plan(name, p, g, s);
                   }});
    }
    c.push_back({"nonminphase-igpi", "iGPI on (s-1)/((s+1)(s+2))", 15.0,
                 {{"alpha", 10.0, "ultra-local input gain"},
                  {"beta", -10.0, "gain of the integral of u"},
                  {"kp", 3.0, "proportional gain"},
                  {"ki", 5.0, "integral gain"},
                  {"kii", 5.0, "double-integral gain"},
                  {"window", 0.1, "estimation window length [s]"},
                  {"noise", 0.03, "measurement noise std"},
                  {"setpoint", 1.0, "target level"},
                  {"transition", 1.0, "reference transition time [s]"}},
                 [](const Params& p, const TimeGrid& g, std::uint64_t s) {
                   const auto ref =
                       make_reference(within({{0, 0}, {1, p["setpoint"]}}, g), p["transition"], g);
                   IntelligentGains ig;
                   ig.kp = p["kp"];
                   ig.ki = p["ki"];
                   ig.kii = p["kii"];
                   ig.alpha = p["alpha"];
                   ig.beta = p["beta"];
                   ScenarioPlan plan;
                   plan.loops.push_back(intelligent(
                       loop("nonminphase-igpi", g, LtiPlant::from_transfer_function(nonminphase_lti()),
                            ref, p["noise"], s),
                       ControllerKind::igpi, ig, EstimatorKind::open_loop_integral, p["window"], 1));
                   return plan;
                 }});
    c.push_back({"correspondence-check", "sampled classic vs intelligent controllers under the gain maps",
                 0.0,
                 {{"h", 0.01, "sampling interval [s]"},
                  {"alpha", 1.0, "ultra-local input gain"},
                  {"kp", 1.375, "intelligent proportional gain"},
                  {"ki", 1.6875, "intelligent integral gain"},
                  {"kd", 2.25, "intelligent derivative gain"},
                  {"n", 10000.0, "number of random error sequences"},
                  {"length", 1000.0, "samples per sequence"}},
                 {}});
    return c;
  }();
  return catalog;
}

inline const Scenario* find_scenario(const std::string& name) {
  for (const auto& s : scenario_catalog())
    if (s.name == name) return &s;
  return nullptr;
}

inline std::string list_scenarios() {
  std::ostringstream os;
  for (const auto& s : scenario_catalog()) {
    os << std::left << std::setw(22) << s.name << s.summary;
    if (s.default_duration > 0.0) os << " [" << s.default_duration << " s]";
    os << '\n';
    for (const auto& p : s.defaults)
      os << "    " << std::setw(14) << p.name << std::setw(10) << p.value << p.help << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Output

/// Shortest decimal that round-trips the double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
    if (!os.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline const char* kCsvHeader = "t,setpoint,y_ref,dy_ref,y_true,y_meas,u_cmd,u_eff,F_est,aux";

inline std::string record_csv(const ClosedLoopRecord& rec) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rec.rows) {
    for (double v : {r.t, r.setpoint, r.y_ref, r.dy_ref, r.y_true, r.y_meas, r.u_cmd, r.u_eff, r.F_est}) {
      out += format_double(v);
      out += ',';
    }
    if (r.aux) out += format_double(*r.aux);
    out += '\n';
  }
  return out;
}

inline std::string field_csv(const FieldDump& f) {
  std::string out = "t";
  for (std::size_t i = 0; i < f.x.size(); ++i) out += ",w" + std::to_string(i);
  out += "\nx";
  for (double x : f.x) out += "," + format_double(x);
  out += '\n';
  for (std::size_t k = 0; k < f.t.size(); ++k) {
    out += format_double(f.t[k]);
    for (double w : f.w[k]) out += "," + format_double(w);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["rms_error"] = m.rms_error;
  j["iae"] = m.iae;
  j["max_abs_error"] = m.max_abs_error;
  j["control_effort"] = m.control_effort;
  if (m.recovery_time) {
    if (std::isfinite(*m.recovery_time)) j["recovery_time"] = *m.recovery_time;
    else j["recovery_time"] = nullptr;
  }
  return j;
}

inline std::string scenario_summary(const ScenarioResult& r) {
  std::ostringstream os;
  os << "scenario " << r.name << "  seed " << r.seed << '\n';
  if (r.correspondence) {
    const auto& rep = *r.correspondence;
    os << rep.n_sequences << " random error sequences of length " << rep.length << '\n';
    for (const auto& row : rep.rows) {
      const auto& g = row.map.mapped;
      os << std::left << std::setw(12) << to_string(row.map.direction) << " kp=" << format_double(g.kp)
         << " ki=" << format_double(g.ki) << " kii=" << format_double(g.kii)
         << " kd=" << format_double(g.kd) << "  max|du|=" << row.max_abs_deviation
         << "  relative=" << row.max_rel_deviation << '\n';
    }
    return os.str();
  }
  for (const auto& c : r.controllers) {
    const auto& m = c.metrics;
    os << std::left << std::setw(6) << c.record.controller << " rms=" << m.rms_error
       << " iae=" << m.iae << " max|e|=" << m.max_abs_error << " effort=" << m.control_effort;
    if (m.recovery_time) os << " recovery=" << *m.recovery_time;
    os << '\n';
  }
  for (std::size_t i = 0; i < r.controllers.size(); ++i)
    for (std::size_t j = i + 1; j < r.controllers.size(); ++j) {
      const auto& a = r.controllers[i];
      const auto& b = r.controllers[j];
      os << "rms " << a.record.controller << "/" << b.record.controller << " = "
         << a.metrics.rms_error / b.metrics.rms_error << '\n';
    }
  return os.str();
}

inline void write_outputs(const ScenarioResult& r, const std::filesystem::path& root) {
  const auto dir = root / r.name;
  nlohmann::ordered_json j;
  j["scenario"] = r.name;
  j["seed"] = r.seed;
  nlohmann::ordered_json params;
  for (const auto& p : r.params.items()) params[p.name] = p.value;
  j["params"] = params;
  if (r.correspondence) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.correspondence->rows) {
      const auto& g = row.map.mapped;
      rows.push_back({{"map", to_string(row.map.direction)},
                      {"h", row.map.h},
                      {"kp", g.kp},
                      {"ki", g.ki},
                      {"kii", g.kii},
                      {"kd", g.kd},
                      {"max_abs_deviation", row.max_abs_deviation},
                      {"max_rel_deviation", row.max_rel_deviation}});
    }
    j["correspondence"] = rows;
  } else {
    nlohmann::ordered_json per;
    for (const auto& c : r.controllers) {
      auto m = metrics_json(c.metrics);
      std::ostringstream hash;
      hash << std::hex << std::setw(16) << std::setfill('0') << c.record.config_hash;
      m["config_hash"] = hash.str();
      per[c.record.controller] = m;
      write_atomically(dir / (c.record.controller + ".csv"), record_csv(c.record));
    }
    j["controllers"] = per;
    if (r.field) write_atomically(dir / "field.csv", field_csv(*r.field));
  }
  write_atomically(dir / "metrics.json", j.dump(2) + "\n");
  write_atomically(dir / "summary.txt", r.summary);
}

// ---------------------------------------------------------------------------------------------
// Running

inline ScenarioResult run_scenario(const std::string& name, const RunOptions& opt = {}) {
  const Scenario* sc = find_scenario(name);
  if (!sc) throw ConfigError("unknown scenario '" + name + "'");
  Params params(sc->defaults);
  for (const auto& o : opt.overrides) params.apply_override(o);

  ScenarioResult result;
  result.name = sc->name;
  result.seed = opt.seed;
  result.params = params;

  if (!sc->plan) {
    if (!(params["n"] >= 1.0)) throw ConfigError("at least one random sequence is required");
    if (!(params["length"] >= 1.0)) throw ConfigError("sequence length must be positive");
    IntelligentGains g;
    g.kp = params["kp"];
    g.ki = params["ki"];
    g.kd = params["kd"];
    result.correspondence = verify_correspondence(
        params["h"], params["alpha"], g, static_cast<std::size_t>(std::llround(params["n"])),
        static_cast<std::size_t>(std::llround(params["length"])), opt.seed);
  } else {
    const TimeGrid grid = TimeGrid::make(0.01, opt.duration.value_or(sc->default_duration));
    ScenarioPlan plan = sc->plan(params, grid, opt.seed);

    auto field = std::make_shared<FieldDump>();
    if (plan.field_stride > 0 && plan.loops.size() == 1) {
      const std::size_t stride = plan.field_stride;
      plan.loops.front().observer = [field, stride](std::size_t k, double t, const Plant& p) {
        const auto* h = std::get_if<HeatPlant>(&p.model());
        if (!h || k % stride != 0) return;
        if (field->x.empty())
          for (std::size_t i = 0; i < h->field().size(); ++i)
            field->x.push_back(static_cast<double>(i) * h->dx());
        field->t.push_back(t);
        field->w.push_back(h->field());
      };
    }

    std::vector<std::future<ClosedLoopRecord>> jobs;
    for (auto& l : plan.loops)
      jobs.push_back(std::async(std::launch::async, [cfg = std::move(l)]() mutable {
        return run_closed_loop(std::move(cfg));
      }));
    std::vector<ClosedLoopRecord> records;
    for (auto& j : jobs) records.push_back(j.get());  // rethrows divergence of any loop
    for (auto& rec : records) {
      const Metrics m = compute_metrics(rec, plan.recovery_band);
      result.controllers.push_back({std::move(rec), m});
    }
    if (!field->t.empty()) result.field = std::move(*field);
  }
  result.summary = scenario_summary(result);
  if (opt.out_dir) write_outputs(result, *opt.out_dir);
  return result;
}

} // namespace mfc
