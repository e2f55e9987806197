#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "cfres/channel.hpp"

using namespace cfres;

namespace {

ChannelStatistics one_ap(double beta_user, double beta_eve, double tp_user, double tp_eve,
                         std::size_t K = 1) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Constant(1, static_cast<Eigen::Index>(K), beta_user);
  Eigen::VectorXd be = Eigen::VectorXd::Constant(1, beta_eve);
  auto p = PilotConfig::uniform(K, K, tp_user / static_cast<double>(K), tp_eve / static_cast<double>(K));
  return estimation_quality(b, be, p);
}

}  // namespace

TEST(EstimationQuality, ZeroGainGivesZeroQuality) {
  const auto s = one_ap(0.0, 1.0, 10.0, 10.0);
  EXPECT_EQ(s.gamma_users(0, 0), 0.0);
}

TEST(EstimationQuality, CleanPilot) {
  Eigen::MatrixXd b(1, 2);
  b << 1.0, 1.0;
  Eigen::VectorXd be = Eigen::VectorXd::Ones(1);
  auto p = PilotConfig::uniform(2, 3, 3.0, 0.0);
  const auto s = estimation_quality(b, be, p);
  EXPECT_DOUBLE_EQ(s.gamma_users(0, 1), 0.9);
  EXPECT_DOUBLE_EQ(s.gamma_users(0, 0), 0.9);
  EXPECT_EQ(s.gamma_eve(0), 0.0);
  EXPECT_FALSE(s.eve_active);
}

TEST(EstimationQuality, SymmetricContamination) {
  const auto s = one_ap(1.0, 1.0, 4.0, 4.0);
  EXPECT_NEAR(s.gamma_users(0, 0), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(s.gamma_eve(0), 4.0 / 9.0, 1e-15);
  EXPECT_TRUE(s.eve_active);
}

TEST(EstimationQuality, BoundsAndMonotonicity) {
  ScenarioConfig cfg;
  const auto drop = generate_drop(cfg, 5);
  const double p = units::normalized_power(100.0, cfg.noise_power_dbm);
  ChannelStatistics prev;
  for (int i = 0; i <= 6; ++i) {
    const double pe = i == 0 ? 0.0 : p * std::pow(10.0, i - 3);
    const auto s = estimation_quality(drop, PilotConfig::uniform(10, 10, p, pe));
    EXPECT_TRUE((s.gamma_users.array() >= 0.0).all());
    EXPECT_TRUE((s.gamma_users.array() <= s.beta_users.array()).all());
    EXPECT_TRUE((s.gamma_eve.array() >= 0.0).all());
    EXPECT_TRUE((s.gamma_eve.array() <= s.beta_eve.array()).all());
    if (i > 0) {
      EXPECT_TRUE((s.gamma_users.col(0).array() <= prev.gamma_users.col(0).array()).all());
      EXPECT_EQ(s.gamma_users.rightCols(9), prev.gamma_users.rightCols(9));
    }
    prev = s;
  }
}

TEST(EstimationQuality, NoAttackMatchesUncontaminated) {
  Eigen::MatrixXd b(2, 2);
  b << 2.0, 0.5, 0.1, 3.0;
  Eigen::VectorXd be(2);
  be << 1.0, 1.0;
  const auto s = estimation_quality(b, be, PilotConfig::uniform(2, 2, 5.0, 0.0));
  for (Eigen::Index l = 0; l < 2; ++l) {
    EXPECT_DOUBLE_EQ(s.gamma_users(l, 0), 10.0 * b(l, 0) * b(l, 0) / (10.0 * b(l, 0) + 1.0));
    EXPECT_EQ(s.gamma_eve(l), 0.0);
  }
}

TEST(Pilots, RejectsInvalid) {
  auto p = PilotConfig::uniform(3, 2, 1.0, 1.0);
  EXPECT_THROW(p.validate(3), InvalidArgument);
  p = PilotConfig::uniform(3, 3, -1.0, 1.0);
  EXPECT_THROW(p.validate(3), InvalidArgument);
  p = PilotConfig::uniform(3, 3, 1.0, 1.0, 3);
  EXPECT_THROW(p.validate(3), InvalidArgument);
}

TEST(Realization, MatchesStatistics) {
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 0.3, 0.05, 2.0;
  Eigen::VectorXd be(2);
  be << 0.7, 0.2;
  const auto pilots = PilotConfig::uniform(2, 2, 2.0, 1.5);
  const auto stats = estimation_quality(b, be, pilots);
  const std::size_t M = 4;
  const int N = 100000;

  Eigen::ArrayXXd est_var = Eigen::ArrayXXd::Zero(2, 2);
  Eigen::ArrayXXd est_norm = Eigen::ArrayXXd::Zero(2, 2);
  Eigen::ArrayXXd err_var = Eigen::ArrayXXd::Zero(2, 2);
  Eigen::ArrayXXcd cross = Eigen::ArrayXXcd::Zero(2, 2);
  double worst_cos = 0.0;

  std::mt19937_64 rng(42);
  ChannelRealization r;
  for (int n = 0; n < N; ++n) {
    sample_realization(stats, pilots, M, rng, r);
    for (Eigen::Index l = 0; l < 2; ++l) {
      const auto& h = r.h_users[static_cast<std::size_t>(l)];
      const auto& hh = r.h_hat_users[static_cast<std::size_t>(l)];
      for (Eigen::Index k = 0; k < 2; ++k) {
        est_var(l, k) += std::norm(hh(0, k));
        est_norm(l, k) += hh.col(k).squaredNorm();
        const std::complex<double> e = h(0, k) - hh(0, k);
        err_var(l, k) += std::norm(e);
        cross(l, k) += std::conj(hh(0, k)) * e;
      }
      const auto a = hh.col(0);
      const auto e = r.h_hat_eve.col(l);
      const double c = std::abs(a.dot(e)) / (a.norm() * e.norm());
      worst_cos = std::max(worst_cos, std::abs(c - 1.0));
    }
  }
  for (Eigen::Index l = 0; l < 2; ++l) {
    for (Eigen::Index k = 0; k < 2; ++k) {
      const double g = stats.gamma_users(l, k);
      const double beta = stats.beta_users(l, k);
      EXPECT_NEAR(est_var(l, k) / N, g, 0.01 * g) << l << "," << k;
      EXPECT_NEAR(est_norm(l, k) / N, M * g, 0.01 * M * g);
      EXPECT_NEAR(err_var(l, k) / N, beta - g, 0.01 * (beta - g));
      EXPECT_LT(std::abs(cross(l, k)) / N / std::sqrt(g * (beta - g)), 1e-2);
    }
  }
  EXPECT_LT(worst_cos, 1e-12);
}

TEST(Realization, SeedReproducible) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Ones(2, 2);
  Eigen::VectorXd be = Eigen::VectorXd::Ones(2);
  const auto pilots = PilotConfig::uniform(2, 2, 1.0, 1.0);
  const auto stats = estimation_quality(b, be, pilots);
  const auto r1 = sample_realization(stats, pilots, 4, 9);
  const auto r2 = sample_realization(stats, pilots, 4, 9);
  EXPECT_EQ(r1.h_hat_users[1], r2.h_hat_users[1]);
  EXPECT_EQ(r1.h_eve, r2.h_eve);
}
