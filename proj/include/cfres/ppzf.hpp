#pragma once

// Protective partial zero-forcing: per-AP strong/weak user split and the
// closed-form SINR, SE and secrecy SE expressions used by the optimizer.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "cfres/channel.hpp"
#include "cfres/error.hpp"

namespace cfres {

using Index = Eigen::Index;

struct UserPartition {
  std::size_t antennas = 0;                 // M
  std::vector<std::vector<Index>> strong;   // S_l, ascending user index
  std::vector<std::vector<Index>> weak;     // W_l, ascending user index
  std::vector<std::vector<Index>> zf_aps;   // Z_k
  std::vector<std::vector<Index>> mrt_aps;  // M_k
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> delta;  // L x K, k in S_l

  Index num_aps() const { return delta.rows(); }
  Index num_users() const { return delta.cols(); }

  /// M - |S_l|, the null-space dimension left for PMRT and AN at AP l.
  double free_dims(Index l) const {
    return static_cast<double>(antennas) -
           static_cast<double>(strong[static_cast<std::size_t>(l)].size());
  }

  bool is_strong(Index l, Index k) const { return delta(l, k); }
};

/// Strong users at AP l are those with beta >= threshold * max_t beta_{l,t},
/// keeping at most min(M-1, K) of the largest (ties go to the lower index).
inline UserPartition partition_users(const ChannelStatistics& stats, std::size_t antennas,
                                     double threshold_fraction = 0.1) {
  if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
    throw InvalidArgument("partition_users: threshold_fraction must lie in (0, 1]");
  }
  if (antennas < 2) throw InvalidArgument("partition_users: need M >= 2");

  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  const auto cap = static_cast<std::size_t>(std::min<Index>(static_cast<Index>(antennas) - 1, K));

  UserPartition p;
  p.antennas = antennas;
  p.strong.resize(static_cast<std::size_t>(L));
  p.weak.resize(static_cast<std::size_t>(L));
  p.zf_aps.resize(static_cast<std::size_t>(K));
  p.mrt_aps.resize(static_cast<std::size_t>(K));
  p.delta.setConstant(L, K, false);

  std::vector<Index> order(static_cast<std::size_t>(K));
  for (Index l = 0; l < L; ++l) {
    const auto row = stats.beta_users.row(l);
    const double cutoff = threshold_fraction * row.maxCoeff();
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return row(a) > row(b); });
    auto& s = p.strong[static_cast<std::size_t>(l)];
    for (Index k : order) {
      if (s.size() >= cap) break;
      if (row(k) >= cutoff) s.push_back(k);
    }
    std::sort(s.begin(), s.end());
    for (Index k : s) p.delta(l, k) = true;
    for (Index k = 0; k < K; ++k) {
      if (p.delta(l, k)) {
        p.zf_aps[static_cast<std::size_t>(k)].push_back(l);
      } else {
        p.weak[static_cast<std::size_t>(l)].push_back(k);
        p.mrt_aps[static_cast<std::size_t>(k)].push_back(l);
      }
    }
  }
  return p;
}

/// Amplitudes u = sqrt(rho), in noise-normalized power units.
struct PowerAllocation {
  Eigen::MatrixXd u_users;  // L x K
  Eigen::VectorXd u_an;     // L

  static PowerAllocation zeros(Index L, Index K) {
    return {Eigen::MatrixXd::Zero(L, K), Eigen::VectorXd::Zero(L)};
  }

  Eigen::MatrixXd rho_users() const { return u_users.array().square().matrix(); }
  Eigen::VectorXd rho_an() const { return u_an.array().square().matrix(); }

  /// Total transmit power per AP.
  Eigen::VectorXd ap_power() const {
    return u_users.array().square().rowwise().sum().matrix() + rho_an();
  }

  bool satisfies(const Eigen::VectorXd& p_max, double tol) const {
    if ((u_users.array() < 0.0).any() || (u_an.array() < 0.0).any()) return false;
    return ((ap_power() - p_max).array() <= tol).all();
  }

  friend bool operator==(const PowerAllocation&, const PowerAllocation&) = default;
};

struct PerformanceReport {
  Eigen::VectorXd sinr_users;
  Eigen::VectorXd se_users;
  std::optional<double> sinr_eve;  // empty when no eavesdropper is active
  std::optional<double> se_eve;
  std::optional<double> sse_target;
  std::size_t attacked_user = 0;
};

inline double spectral_efficiency(double sinr) { return std::log2(1.0 + sinr); }

/// Coefficient vectors of the quadratic-ratio SINR forms.
///   a(l,k)  = sqrt((M - |S_l|) gamma_{l,k})
///   w(l,k)  = beta_{l,k} - delta_{l,k} gamma_{l,k}     (squared diagonal of A_{k,k})
///   b_e(l)  = sqrt((M - |S_l|) gamma_{l,e})
///   w_e(l)  = beta_{l,e} - delta_{l,a} gamma_{l,e}      (squared diagonal of B_e)
struct SinrCoefficients {
  Eigen::MatrixXd a;
  Eigen::MatrixXd w;
  Eigen::VectorXd b_e;
  Eigen::VectorXd w_e;
  Index attacked = 0;

  SinrCoefficients(const ChannelStatistics& stats, const UserPartition& part)
      : attacked(static_cast<Index>(stats.attacked_user)) {
    const Index L = stats.num_aps();
    const Index K = stats.num_users();
    a.resize(L, K);
    w.resize(L, K);
    b_e.resize(L);
    w_e.resize(L);
    for (Index l = 0; l < L; ++l) {
      const double dims = part.free_dims(l);
      for (Index k = 0; k < K; ++k) {
        a(l, k) = std::sqrt(dims * stats.gamma_users(l, k));
        w(l, k) = stats.beta_users(l, k) - (part.delta(l, k) ? stats.gamma_users(l, k) : 0.0);
      }
      b_e(l) = std::sqrt(dims * stats.gamma_eve(l));
      w_e(l) = stats.beta_eve(l) - (part.delta(l, attacked) ? stats.gamma_eve(l) : 0.0);
    }
  }

  double x(Index k, const PowerAllocation& u) const { return a.col(k).dot(u.u_users.col(k)); }

  double phi(Index k, const PowerAllocation& u) const {
    return w.col(k).dot(u.ap_power()) + 1.0;
  }

  double eve_numerator(const PowerAllocation& u) const {
    const auto u1 = u.u_users.col(attacked);
    const double coherent = b_e.dot(u1);
    return coherent * coherent + w_e.dot(u1.cwiseAbs2());
  }

  double eve_denominator(const PowerAllocation& u) const {
    Eigen::VectorXd other = u.ap_power() - u.u_users.col(attacked).cwiseAbs2();
    return w_e.dot(other) + 1.0;
  }
};

/// SINR of user k via the explicit double sum over (t, l).
inline double sinr_user(Index k, const PowerAllocation& alloc, const ChannelStatistics& stats,
                        const UserPartition& part) {
  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  double coherent = 0.0;
  double interference = 0.0;
  for (Index l = 0; l < L; ++l) {
    const double rho_lk = alloc.u_users(l, k) * alloc.u_users(l, k);
    coherent += std::sqrt(part.free_dims(l) * rho_lk * stats.gamma_users(l, k));
    const double leak =
        stats.beta_users(l, k) - (part.is_strong(l, k) ? stats.gamma_users(l, k) : 0.0);
    for (Index t = 0; t < K; ++t) {
      interference += alloc.u_users(l, t) * alloc.u_users(l, t) * leak;
    }
    interference += alloc.u_an(l) * alloc.u_an(l) * leak;
  }
  return coherent * coherent / (interference + 1.0);
}

/// Same quantity as sinr_user, through (a_k^T u_k)^2 / phi_k(u).
inline double sinr_user_vectorized(Index k, const PowerAllocation& alloc,
                                   const SinrCoefficients& coef) {
  const double x = coef.x(k, alloc);
  return x * x / coef.phi(k, alloc);
}

inline void require_eve(const ChannelStatistics& stats) {
  if (!stats.eve_active) {
    throw InvalidArgument("sinr_eve: no active eavesdropper (p_eve = 0); SSE is undefined");
  }
}

/// Eavesdropper SINR when targeting the attacked user, explicit sums.
inline double sinr_eve(const PowerAllocation& alloc, const ChannelStatistics& stats,
                       const UserPartition& part) {
  require_eve(stats);
  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  const auto a = static_cast<Index>(stats.attacked_user);
  double coherent = 0.0;
  double spread = 0.0;
  double interference = 0.0;
  for (Index l = 0; l < L; ++l) {
    const double rho_la = alloc.u_users(l, a) * alloc.u_users(l, a);
    coherent += std::sqrt(rho_la * part.free_dims(l) * stats.gamma_eve(l));
    spread += rho_la * stats.beta_eve(l);
    if (part.is_strong(l, a)) spread -= rho_la * stats.gamma_eve(l);
    const double leak = stats.beta_eve(l) - (part.is_strong(l, a) ? stats.gamma_eve(l) : 0.0);
    for (Index t = 0; t < K; ++t) {
      if (t == a) continue;
      interference += alloc.u_users(l, t) * alloc.u_users(l, t) * leak;
    }
    interference += alloc.u_an(l) * alloc.u_an(l) * leak;
  }
  return (coherent * coherent + spread) / (interference + 1.0);
}

/// Same quantity as sinr_eve, through f_N(u) / f_D(u).
inline double sinr_eve_vectorized(const PowerAllocation& alloc, const ChannelStatistics& stats,
                                  const SinrCoefficients& coef) {
  require_eve(stats);
  return coef.eve_numerator(alloc) / coef.eve_denominator(alloc);
}

inline double secrecy_se(double se_user, double se_eve) { return std::max(0.0, se_user - se_eve); }

inline PerformanceReport evaluate(const PowerAllocation& alloc, const ChannelStatistics& stats,
                                  const UserPartition& part) {
  const Index K = stats.num_users();
  PerformanceReport r;
  r.attacked_user = stats.attacked_user;
  r.sinr_users.resize(K);
  r.se_users.resize(K);
  for (Index k = 0; k < K; ++k) {
    r.sinr_users(k) = sinr_user(k, alloc, stats, part);
    r.se_users(k) = spectral_efficiency(r.sinr_users(k));
  }
  if (stats.eve_active) {
    r.sinr_eve = sinr_eve(alloc, stats, part);
    r.se_eve = spectral_efficiency(*r.sinr_eve);
    r.sse_target = secrecy_se(r.se_users(static_cast<Index>(stats.attacked_user)), *r.se_eve);
  }
  return r;
}

}  // namespace cfres
