#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cfres/ppzf.hpp"

using namespace cfres;

namespace {

ChannelStatistics from_beta(const Eigen::MatrixXd& b, const Eigen::VectorXd& be, double p,
                            double pe) {
  const auto K = static_cast<std::size_t>(b.cols());
  return estimation_quality(b, be, PilotConfig::uniform(K, K, p, pe));
}

// Independent re-derivation of the user SINR from its definition, one
// (l, t) pair at a time.
double reference_sinr(Index k, const PowerAllocation& u, const ChannelStatistics& s,
                      const UserPartition& part) {
  double num = 0.0;
  double den = 1.0;
  for (Index l = 0; l < s.num_aps(); ++l) {
    const double m_free = static_cast<double>(part.antennas) -
                          static_cast<double>(part.delta.row(l).count());
    num += u.u_users(l, k) * std::sqrt(m_free * s.gamma_users(l, k));
    const double err = part.delta(l, k) ? s.beta_users(l, k) - s.gamma_users(l, k) : s.beta_users(l, k);
    den += (u.u_users.row(l).squaredNorm() + u.u_an(l) * u.u_an(l)) * err;
  }
  return num * num / den;
}

struct RandomInstance {
  ChannelStatistics stats;
  UserPartition part;
  PowerAllocation alloc;
};

RandomInstance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dl(1, 6), dk(1, 6), dm(2, 6);
  std::uniform_real_distribution<double> lg(-3.0, 1.0), u01(0.0, 1.0);
  const int L = dl(rng), K = dk(rng), M = dm(rng);
  Eigen::MatrixXd b(L, K);
  Eigen::VectorXd be(L);
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < K; ++k) b(l, k) = std::pow(10.0, lg(rng));
    be(l) = std::pow(10.0, lg(rng));
  }
  RandomInstance r;
  r.stats = estimation_quality(b, be, PilotConfig::uniform(static_cast<std::size_t>(K), static_cast<std::size_t>(K), 10.0 * u01(rng) + 0.1, 10.0 * u01(rng) + 0.1));
  r.part = partition_users(r.stats, static_cast<std::size_t>(M), 0.05 + 0.9 * u01(rng));
  r.alloc = PowerAllocation::zeros(L, K);
  for (int l = 0; l < L; ++l) {
    for (int k = 0; k < K; ++k) r.alloc.u_users(l, k) = 3.0 * u01(rng);
    r.alloc.u_an(l) = u01(rng) < 0.3 ? 0.0 : 3.0 * u01(rng);
  }
  return r;
}

}  // namespace

TEST(Partition, ThresholdRule) {
  Eigen::MatrixXd b(1, 3);
  b << 1.0, 0.5, 0.05;
  const auto p = partition_users(from_beta(b, Eigen::VectorXd::Ones(1), 1.0, 0.0), 4);
  EXPECT_EQ(p.strong[0], (std::vector<Index>{0, 1}));
  EXPECT_EQ(p.weak[0], (std::vector<Index>{2}));
  EXPECT_EQ(p.free_dims(0), 2.0);
}

TEST(Partition, EqualGainsTruncateByIndex) {
  const Eigen::MatrixXd b = Eigen::MatrixXd::Ones(1, 10);
  const auto p = partition_users(from_beta(b, Eigen::VectorXd::Ones(1), 1.0, 0.0), 4);
  EXPECT_EQ(p.strong[0], (std::vector<Index>{0, 1, 2}));
  EXPECT_EQ(p.weak[0].size(), 7u);
}

TEST(Partition, SingleUserAlwaysStrong) {
  Eigen::MatrixXd b(3, 1);
  b << 1e-9, 2.0, 1e-12;
  const auto p = partition_users(from_beta(b, Eigen::VectorXd::Ones(3), 1.0, 0.0), 4);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(p.strong[l], (std::vector<Index>{0}));
    EXPECT_TRUE(p.weak[l].empty());
  }
}

TEST(Partition, Invariants) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = random_instance(rng);
    const auto& p = inst.part;
    const Index L = p.num_aps(), K = p.num_users();
    for (Index l = 0; l < L; ++l) {
      const auto& s = p.strong[static_cast<std::size_t>(l)];
      EXPECT_EQ(s.size() + p.weak[static_cast<std::size_t>(l)].size(), static_cast<std::size_t>(K));
      EXPECT_LE(s.size(), p.antennas - 1);
      EXPECT_GE(p.free_dims(l), 1.0);
      for (Index k : s) EXPECT_TRUE(p.delta(l, k));
      for (Index k : p.weak[static_cast<std::size_t>(l)]) EXPECT_FALSE(p.delta(l, k));
    }
    for (Index k = 0; k < K; ++k) {
      EXPECT_EQ(p.zf_aps[static_cast<std::size_t>(k)].size() + p.mrt_aps[static_cast<std::size_t>(k)].size(),
                static_cast<std::size_t>(L));
    }
  }
}

TEST(Partition, RejectsBadArguments) {
  const auto s = from_beta(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1), 1.0, 0.0);
  EXPECT_THROW(partition_users(s, 4, 0.0), InvalidArgument);
  EXPECT_THROW(partition_users(s, 4, 1.5), InvalidArgument);
  EXPECT_THROW(partition_users(s, 1, 0.1), InvalidArgument);
}

TEST(Sinr, SingleApSingleUser) {
  ChannelStatistics s;
  s.beta_users = Eigen::MatrixXd::Ones(1, 1);
  s.gamma_users = Eigen::MatrixXd::Constant(1, 1, 0.5);
  s.beta_eve = Eigen::VectorXd::Ones(1);
  s.gamma_eve = Eigen::VectorXd::Zero(1);
  const auto part = partition_users(s, 4);
  PowerAllocation u = PowerAllocation::zeros(1, 1);
  u.u_users(0, 0) = 1.0;
  EXPECT_NEAR(sinr_user(0, u, s, part), 1.0, 1e-15);
}

TEST(Sinr, ZeroPowerGivesZero) {
  std::mt19937_64 rng(3);
  const auto inst = random_instance(rng);
  const auto u = PowerAllocation::zeros(inst.stats.num_aps(), inst.stats.num_users());
  for (Index k = 0; k < inst.stats.num_users(); ++k) EXPECT_EQ(sinr_user(k, u, inst.stats, inst.part), 0.0);
  EXPECT_EQ(sinr_eve(u, inst.stats, inst.part), 0.0);
}

TEST(Sinr, MatchesReferenceDerivation) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = random_instance(rng);
    for (Index k = 0; k < inst.stats.num_users(); ++k) {
      const double ref = reference_sinr(k, inst.alloc, inst.stats, inst.part);
      EXPECT_NEAR(sinr_user(k, inst.alloc, inst.stats, inst.part), ref, 1e-12 * ref);
    }
  }
}

TEST(Sinr, ScalarAndVectorFormsAgree) {
  std::mt19937_64 rng(2025);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const SinrCoefficients coef(inst.stats, inst.part);
    for (Index k = 0; k < inst.stats.num_users(); ++k) {
      const double a = sinr_user(k, inst.alloc, inst.stats, inst.part);
      const double b = sinr_user_vectorized(k, inst.alloc, coef);
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
    }
    const double a = sinr_eve(inst.alloc, inst.stats, inst.part);
    const double b = sinr_eve_vectorized(inst.alloc, inst.stats, coef);
    worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(SinrEve, AttackedUserSilentGivesZero) {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng);
  inst.alloc.u_users.col(0).setZero();
  EXPECT_EQ(sinr_eve(inst.alloc, inst.stats, inst.part), 0.0);
}

TEST(SinrEve, SingleApStrongCollapse) {
  Eigen::MatrixXd b(1, 3);
  b << 1.0, 0.8, 0.5;
  Eigen::VectorXd be(1);
  be << 0.6;
  const auto s = from_beta(b, be, 3.0, 2.0);
  const auto part = partition_users(s, 4);
  ASSERT_TRUE(part.delta(0, 0));
  PowerAllocation u = PowerAllocation::zeros(1, 3);
  u.u_users << 1.2, 0.7, 0.4;
  u.u_an << 0.9;
  const double r1 = 1.44, r2 = 0.49, r3 = 0.16, ran = 0.81;
  const double ge = s.gamma_eve(0), bee = s.beta_eve(0), dims = 4.0 - 3.0;
  const double num = r1 * dims * ge + r1 * (bee - ge);
  const double den = (r2 + r3) * (bee - ge) + ran * (bee - ge) + 1.0;
  EXPECT_NEAR(sinr_eve(u, s, part), num / den, 1e-14);
}

TEST(SinrEve, RequiresActiveEve) {
  const auto s = from_beta(Eigen::MatrixXd::Ones(1, 2), Eigen::VectorXd::Ones(1), 1.0, 0.0);
  const auto part = partition_users(s, 4);
  const auto u = PowerAllocation::zeros(1, 2);
  EXPECT_THROW(sinr_eve(u, s, part), InvalidArgument);
  const auto rep = evaluate(u, s, part);
  EXPECT_FALSE(rep.sinr_eve.has_value());
  EXPECT_FALSE(rep.sse_target.has_value());
  EXPECT_EQ(rep.se_users.size(), 2);
}

TEST(Secrecy, ClampAndSubtract) {
  EXPECT_EQ(secrecy_se(2.0, 3.0), 0.0);
  EXPECT_EQ(secrecy_se(4.0, 1.0), 3.0);
}

TEST(Evaluate, ConsistentReport) {
  std::mt19937_64 rng(4);
  const auto inst = random_instance(rng);
  const auto rep = evaluate(inst.alloc, inst.stats, inst.part);
  for (Index k = 0; k < inst.stats.num_users(); ++k) {
    EXPECT_DOUBLE_EQ(rep.se_users(k), std::log2(1.0 + rep.sinr_users(k)));
  }
  ASSERT_TRUE(rep.se_eve && rep.sse_target);
  EXPECT_DOUBLE_EQ(*rep.sse_target, std::max(0.0, rep.se_users(0) - *rep.se_eve));
}

TEST(Evaluate, ScalingBetaFollowsClosedForm) {
  std::mt19937_64 rng(12);
  const auto inst = random_instance(rng);
  const auto K = static_cast<std::size_t>(inst.stats.num_users());
  const auto pilots = PilotConfig::uniform(K, K, 2.0, 1.0);
  const auto s1 = estimation_quality(inst.stats.beta_users, inst.stats.beta_eve, pilots);
  const auto s2 = estimation_quality(2.0 * inst.stats.beta_users, 2.0 * inst.stats.beta_eve, pilots);
  for (const auto* s : {&s1, &s2}) {
    const auto rep = evaluate(inst.alloc, *s, inst.part);
    for (Index k = 0; k < s->num_users(); ++k) {
      const double ref = reference_sinr(k, inst.alloc, *s, inst.part);
      EXPECT_NEAR(rep.sinr_users(k), ref, 1e-12 * ref);
    }
  }
}

TEST(Sinr, MonotoneInOwnPowerWithPerfectStrongCsi) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = random_instance(rng);
    inst.stats.gamma_users = inst.stats.beta_users;
    const Index L = inst.stats.num_aps();
    for (Index l = 0; l < L; ++l) {
      for (Index k = 0; k < inst.stats.num_users(); ++k) {
        if (!inst.part.delta(l, k)) continue;
        auto u = inst.alloc;
        double prev = sinr_user(k, u, inst.stats, inst.part);
        for (int step = 0; step < 5; ++step) {
          u.u_users(l, k) += u01(rng);
          const double cur = sinr_user(k, u, inst.stats, inst.part);
          EXPECT_GE(cur, prev * (1.0 - 1e-14));
          prev = cur;
        }
      }
    }
  }
}
