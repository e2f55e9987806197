#include <cmath>

#include <gtest/gtest.h>

#include "cfres/oracle.hpp"

using namespace cfres;

namespace {

struct Fixture {
  PilotConfig pilots;
  ChannelStatistics stats;
  UserPartition part;
};

// Two APs, user 1 strong at AP 0 and weak at AP 1.
Fixture mixed_instance() {
  Eigen::MatrixXd b(2, 2);
  b << 1.0, 0.6, 0.02, 1.0;
  Eigen::VectorXd be(2);
  be << 0.8, 0.5;
  Fixture f;
  f.pilots = PilotConfig::uniform(2, 2, 5.0, 4.0);
  f.stats = estimation_quality(b, be, f.pilots);
  f.part = partition_users(f.stats, 4, 0.1);
  return f;
}

}  // namespace

TEST(Precoders, ZeroForcingAndProjectorIdentities) {
  const auto f = mixed_instance();
  std::mt19937_64 rng(1);
  ChannelRealization r;
  for (int n = 0; n < 50; ++n) {
    sample_realization(f.stats, f.pilots, 4, rng, r);
    const auto pre = build_precoders(r, f.stats, f.part, rng);
    for (Index l = 0; l < 2; ++l) {
      const auto& hh = r.h_hat_users[static_cast<std::size_t>(l)];
      const auto& B = pre[static_cast<std::size_t>(l)].projector;
      EXPECT_LT((B * B - B).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LT((B.adjoint() - B).cwiseAbs().maxCoeff(), 1e-9);
      for (Index k : f.part.strong[static_cast<std::size_t>(l)]) {
        EXPECT_LT((B * hh.col(k)).norm(), 1e-9 * (1.0 + hh.col(k).norm()));
        for (Index t : f.part.strong[static_cast<std::size_t>(l)]) {
          const std::complex<double> g = hh.col(k).dot(pre[static_cast<std::size_t>(l)].w.col(t));
          const double want = k == t ? std::sqrt(f.part.free_dims(l) * f.stats.gamma_users(l, t)) : 0.0;
          EXPECT_LT(std::abs(g - want), 1e-9 * (1.0 + want));
        }
      }
    }
  }
}

TEST(Precoders, RankDeficiencyNamesAp) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Ones(2, 2);
  const auto pilots = PilotConfig::uniform(2, 2, 1.0, 0.0);
  const auto stats = estimation_quality(b, Eigen::VectorXd::Ones(2), pilots);
  const auto part = partition_users(stats, 4);
  auto r = sample_realization(stats, pilots, 4, 5);
  r.h_hat_users[1].col(1) = 2.0 * r.h_hat_users[1].col(0);
  try {
    build_precoders(r, stats, part, 1);
    FAIL() << "expected RankDeficientError";
  } catch (const RankDeficientError& e) {
    EXPECT_EQ(e.ap(), 1u);
    EXPECT_NE(std::string(e.what()).find("AP 1"), std::string::npos);
  }
}

TEST(Oracle, NormalizationsNearOne) {
  const auto f = mixed_instance();
  const auto alloc = PowerAllocation::zeros(2, 2);
  const auto rep = oracle_expectations(f.stats, f.pilots, f.part, alloc, 10000, 3);
  int seen = 0;
  for (const auto& t : rep.terms) {
    if (t.name.rfind("norm_", 0) == 0) {
      EXPECT_NEAR(t.estimate, 1.0, 0.03) << t.name;
      ++seen;
    }
  }
  EXPECT_EQ(seen, 2 * 2 + 2);
}

TEST(Oracle, AllTermsWithinFiveSigma) {
  const auto f = mixed_instance();
  PowerAllocation alloc = PowerAllocation::zeros(2, 2);
  alloc.u_users << 1.0, 0.5, 0.3, 1.2;
  alloc.u_an << 0.7, 0.4;
  const auto rep = oracle_expectations(f.stats, f.pilots, f.part, alloc, 100000, 11);
  for (const auto& t : rep.failures(5.0)) {
    ADD_FAILURE() << t.name << ": closed " << t.closed_form << " sampled " << t.estimate << " se "
                  << t.std_error;
  }
  ASSERT_TRUE(f.part.delta(0, 0));
  ASSERT_FALSE(f.part.delta(1, 0));
  const auto* strong_leak = rep.find("an_eve[0]");
  const auto* weak_leak = rep.find("an_eve[1]");
  ASSERT_TRUE(strong_leak && weak_leak);
  EXPECT_NEAR(strong_leak->estimate, f.stats.beta_eve(0) - f.stats.gamma_eve(0),
              0.03 * (f.stats.beta_eve(0) - f.stats.gamma_eve(0)));
  EXPECT_NEAR(weak_leak->estimate, f.stats.beta_eve(1), 0.03 * f.stats.beta_eve(1));
  const auto* user_leak = rep.find("an[0,0]");
  ASSERT_TRUE(user_leak);
  EXPECT_NEAR(user_leak->estimate, f.stats.beta_users(0, 0) - f.stats.gamma_users(0, 0),
              0.03 * (f.stats.beta_users(0, 0) - f.stats.gamma_users(0, 0)));
}

TEST(Oracle, ZeroPowerGivesExactZeroInterference) {
  const auto f = mixed_instance();
  const auto rep = oracle_expectations(f.stats, f.pilots, f.part, PowerAllocation::zeros(2, 2), 2000, 4);
  for (Index k = 0; k < 2; ++k) {
    const auto* t = rep.find("interf_power[" + std::to_string(k) + "]");
    ASSERT_TRUE(t);
    EXPECT_EQ(t->closed_form, 0.0);
    EXPECT_EQ(t->estimate, 0.0);
  }
}

TEST(Oracle, RejectsTooFewSamples) {
  const auto f = mixed_instance();
  EXPECT_THROW(oracle_expectations(f.stats, f.pilots, f.part, PowerAllocation::zeros(2, 2), 10, 1),
               InvalidArgument);
}
