#include <mfc/correspondence.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace mfc;

namespace {

std::vector<double> random_errors(std::uint64_t seed, std::size_t n) {
  NoiseSource s(seed, 1.0);
  std::vector<double> e(n);
  for (auto& v : e) v = s.standard();
  return e;
}

// Position form of the sampled PID with zero initial memory: u = kp e + ki h sum(e) + kd (e - e_prev)/h.
std::vector<double> position_pid(const std::vector<double>& e, double h, double kp, double ki,
                                 double kd) {
  std::vector<double> u;
  double sum = 0.0, prev = 0.0;
  for (double v : e) {
    sum += v;
    u.push_back(kp * v + ki * h * sum + kd * (v - prev) / h);
    prev = v;
  }
  return u;
}

} // namespace

TEST(GainMaps, WorkedExamples) {
  const auto pi = map_ip_to_pi(1.0, 0.01, 1.8177);
  EXPECT_NEAR(pi.kp, -100.0, 1e-12);
  EXPECT_NEAR(pi.ki, 181.77, 1e-10);

  const auto coarse = map_ip_to_pi(2.0, 0.1, 16.0);
  EXPECT_NEAR(coarse.kp, -5.0, 1e-12);
  EXPECT_NEAR(coarse.ki, 80.0, 1e-12);

  const auto pi2d = map_ipid_to_pi2d(1.0, 0.01, 1.375, 1.6875, 2.25);
  EXPECT_NEAR(pi2d.kp, 225.0, 1e-10);
  EXPECT_NEAR(pi2d.ki, 137.5, 1e-10);
  EXPECT_NEAR(pi2d.kii, 168.75, 1e-10);
  EXPECT_NEAR(pi2d.kd, -100.0, 1e-12);
}

TEST(GainMaps, ZeroIntelligentGainsLeaveOnlyTheDerivativeTerm) {
  const auto g = map_ipid_to_pi2d(1.0, 0.01, 0.0, 0.0, 0.0);
  EXPECT_EQ(g.kp, 0.0);
  EXPECT_EQ(g.ki, 0.0);
  EXPECT_EQ(g.kii, 0.0);
  EXPECT_NE(g.kd, 0.0);
  EXPECT_EQ(map_ip_to_pi(1.0, 0.01, 0.0).ki, 0.0);
}

TEST(GainMaps, AffineInTheIntelligentGains) {
  const double a = 1.7, h = 0.02;
  const auto base = map_ipid_to_pi2d(a, h, 0.0, 0.0, 0.0);
  const auto g1 = map_ipid_to_pi2d(a, h, 1.0, 2.0, 3.0);
  const auto g2 = map_ipid_to_pi2d(a, h, 2.0, 4.0, 6.0);
  EXPECT_NEAR(g2.kp - base.kp, 2.0 * (g1.kp - base.kp), 1e-12);
  EXPECT_NEAR(g2.ki - base.ki, 2.0 * (g1.ki - base.ki), 1e-12);
  EXPECT_NEAR(g2.kii - base.kii, 2.0 * (g1.kii - base.kii), 1e-12);
  EXPECT_EQ(g2.kd, g1.kd);
}

TEST(GainMaps, ProportionalGainScalesInverselyWithTheStep) {
  for (double h : {0.1, 0.01, 0.001}) {
    const double fine = map_ip_to_pi(1.0, h / 2, 1.0).kp;
    const double coarse = map_ip_to_pi(1.0, h, 1.0).kp;
    EXPECT_LT(coarse, 0.0);
    EXPECT_DOUBLE_EQ(std::abs(fine), 2.0 * std::abs(coarse));
  }
}

TEST(GainMaps, RejectDegenerateStep) {
  EXPECT_THROW(map_ip_to_pi(1.0, 0.0, 1.0), ConfigError);
  EXPECT_THROW(map_ipid_to_pi2d(0.0, 0.01, 1.0, 1.0, 1.0), ConfigError);
}

TEST(Recursions, UnrolledImpulse) {
  std::vector<double> e(5, 0.0);
  e[0] = 1.0;
  const auto u = sampled_ip(e, 0.01, 1.0, 1.8177);
  EXPECT_NEAR(u[0], -98.1823, 1e-10);
  EXPECT_NEAR(u[1] - u[0], 100.0, 1e-10);
  for (std::size_t k = 2; k < u.size(); ++k) EXPECT_EQ(u[k], u[k - 1]);
}

TEST(Recursions, ConstantErrorIntegratesInThePid) {
  const double h = 0.01, ki = 0.7;
  const auto u = sampled_pid(std::vector<double>(50, 2.0), h, 1.3, ki, 0.4);
  for (std::size_t k = 2; k < u.size(); ++k) EXPECT_NEAR(u[k] - u[k - 1], ki * h * 2.0, 1e-12);
}

TEST(Recursions, VelocityPidMatchesPositionForm) {
  const auto e = random_errors(5, 400);
  const auto v = sampled_pid(e, 0.01, 1.375, 1.6875, 2.25);
  const auto p = position_pid(e, 0.01, 1.375, 1.6875, 2.25);
  EXPECT_LE(relative_deviation(v, p), 1e-12);
}

TEST(Recursions, MappedPairsAgreeOnRandomSequences) {
  const IntelligentGains g{1.375, 1.6875, 2.25, 0.0, 1.0, 0.0};
  for (double h : {0.001, 0.01, 0.1})
    for (double alpha : {0.5, 1.0, 7.0}) {
      for (auto d : {MapDirection::ip_to_pi, MapDirection::ipd_to_pid, MapDirection::ipi_to_pi2,
                     MapDirection::ipid_to_pi2d}) {
        const auto m = make_gain_map(d, alpha, h, g);
        const auto [ui, uc] = run_pair(m, random_errors(11, 1000));
        EXPECT_LE(relative_deviation(ui, uc), 1e-12) << to_string(d) << " h=" << h;
      }
    }
}

TEST(Recursions, RelativeDeviationScale) {
  EXPECT_EQ(relative_deviation({1.0, 2.0}, {1.0, 2.0}), 0.0);
  EXPECT_DOUBLE_EQ(relative_deviation({0.0, 0.1}, {0.0, 0.2}), 0.1);
  EXPECT_DOUBLE_EQ(relative_deviation({0.0, 10.0}, {0.0, 11.0}), 1.0 / 11.0);
  EXPECT_THROW(relative_deviation({1.0}, {1.0, 2.0}), ConfigError);
}

TEST(Verification, ReportCoversEveryDirection) {
  const IntelligentGains g{1.375, 1.6875, 2.25, 0.0, 1.0, 0.0};
  const auto r = verify_correspondence(0.01, 1.0, g, 20, 500, 3);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_LE(r.worst_relative(), 1e-12);
  EXPECT_EQ(r.n_sequences, 20u);
  EXPECT_THROW(verify_correspondence(0.01, 1.0, g, 0), ConfigError);
  EXPECT_THROW(verify_correspondence(0.01, 1.0, g, 1, 0), ConfigError);
  EXPECT_THROW(verify_correspondence(0.0, 1.0, g, 1), ConfigError);
}
