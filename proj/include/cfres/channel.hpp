#pragma once

// Uplink pilot training under a pilot-contamination attack: MMSE estimation
// quality coefficients and full small-scale channel realizations.

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cfres/error.hpp"
#include "cfres/scenario.hpp"

namespace cfres {

/// Pilot powers are normalized by the noise power. The eavesdropper sends a
/// copy of the attacked user's pilot; p_eve == 0 means no attack.
struct PilotConfig {
  std::size_t tau_p = 10;
  Eigen::VectorXd p_users;  // K
  double p_eve = 0.0;
  std::size_t attacked_user = 0;  // zero-based

  static PilotConfig uniform(std::size_t num_users, std::size_t tau_p, double p_user,
                             double p_eve, std::size_t attacked_user = 0) {
    PilotConfig cfg;
    cfg.tau_p = tau_p;
    cfg.p_users = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(num_users), p_user);
    cfg.p_eve = p_eve;
    cfg.attacked_user = attacked_user;
    return cfg;
  }

  void validate(std::size_t num_users) const {
    if (static_cast<std::size_t>(p_users.size()) != num_users) {
      throw InvalidArgument("pilots: expected one pilot power per user");
    }
    if (tau_p < num_users) {
      throw InvalidArgument("pilots: tau_p must be >= K for orthonormal pilots");
    }
    if ((p_users.array() < 0.0).any() || !p_users.allFinite() || !(p_eve >= 0.0) ||
        !std::isfinite(p_eve)) {
      throw InvalidArgument("pilots: powers must be finite and non-negative");
    }
    if (attacked_user >= num_users) {
      throw InvalidArgument("pilots: attacked user index out of range");
    }
  }
};

/// Large-scale gains and MMSE estimation quality; these fully determine the
/// closed-form performance expressions.
struct ChannelStatistics {
  Eigen::MatrixXd beta_users;   // L x K
  Eigen::VectorXd beta_eve;     // L
  Eigen::MatrixXd gamma_users;  // L x K
  Eigen::VectorXd gamma_eve;    // L
  bool eve_active = false;
  std::size_t attacked_user = 0;

  Eigen::Index num_aps() const { return beta_users.rows(); }
  Eigen::Index num_users() const { return beta_users.cols(); }
};

inline ChannelStatistics estimation_quality(const Eigen::MatrixXd& beta_users,
                                            const Eigen::VectorXd& beta_eve,
                                            const PilotConfig& pilots) {
  const Eigen::Index L = beta_users.rows();
  const Eigen::Index K = beta_users.cols();
  pilots.validate(static_cast<std::size_t>(K));
  if (beta_eve.size() != L) throw InvalidArgument("estimation_quality: beta_eve size mismatch");

  const double tau = static_cast<double>(pilots.tau_p);
  const auto a = static_cast<Eigen::Index>(pilots.attacked_user);

  ChannelStatistics s;
  s.beta_users = beta_users;
  s.beta_eve = beta_eve;
  s.gamma_users.resize(L, K);
  s.gamma_eve.resize(L);
  s.eve_active = pilots.p_eve > 0.0;
  s.attacked_user = pilots.attacked_user;

  for (Eigen::Index l = 0; l < L; ++l) {
    const double eve_term = tau * pilots.p_eve * beta_eve(l);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double b = beta_users(l, k);
      const double tp = tau * pilots.p_users(k);
      const double den = tp * b + (k == a ? eve_term : 0.0) + 1.0;
      s.gamma_users(l, k) = tp * b * b / den;
    }
    const double den1 = tau * pilots.p_users(a) * beta_users(l, a) + eve_term + 1.0;
    s.gamma_eve(l) = eve_term * beta_eve(l) / den1;
  }
  return s;
}

inline ChannelStatistics estimation_quality(const NetworkDrop& drop, const PilotConfig& pilots) {
  return estimation_quality(drop.beta_users, drop.beta_eve, pilots);
}

/// Per-AP small-scale realizations. Column k of h_users[l] is h_{l,k}; column
/// l of h_eve is h_{l,e}.
struct ChannelRealization {
  std::vector<Eigen::MatrixXcd> h_users;      // L entries, M x K
  std::vector<Eigen::MatrixXcd> h_hat_users;  // L entries, M x K
  Eigen::MatrixXcd h_eve;                     // M x L
  Eigen::MatrixXcd h_hat_eve;                 // M x L
};

namespace detail {

/// CN(0, 1) entries: independent real and imaginary parts of variance 1/2.
template <class Rng>
void fill_cn(Eigen::Ref<Eigen::VectorXcd> v, Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double re = n(rng);
    const double im = n(rng);
    v(i) = {re, im};
  }
}

}  // namespace detail

/// Draws true channels, forms the pilot projections (including the
/// eavesdropper's copy of the attacked pilot) and applies MMSE scaling.
template <class Rng>
void sample_realization(const ChannelStatistics& stats, const PilotConfig& pilots,
                        std::size_t antennas, Rng& rng, ChannelRealization& out) {
  const Eigen::Index L = stats.num_aps();
  const Eigen::Index K = stats.num_users();
  const auto M = static_cast<Eigen::Index>(antennas);
  const double tau = static_cast<double>(pilots.tau_p);
  const auto a = static_cast<Eigen::Index>(pilots.attacked_user);

  out.h_users.resize(static_cast<std::size_t>(L));
  out.h_hat_users.resize(static_cast<std::size_t>(L));
  out.h_eve.resize(M, L);
  out.h_hat_eve.resize(M, L);

  Eigen::VectorXcd g(M);
  Eigen::VectorXcd noise(M);
  for (Eigen::Index l = 0; l < L; ++l) {
    auto& h = out.h_users[static_cast<std::size_t>(l)];
    auto& hh = out.h_hat_users[static_cast<std::size_t>(l)];
    h.resize(M, K);
    hh.resize(M, K);
    for (Eigen::Index k = 0; k < K; ++k) {
      detail::fill_cn(g, rng);
      h.col(k) = std::sqrt(stats.beta_users(l, k)) * g;
    }
    detail::fill_cn(g, rng);
    out.h_eve.col(l) = std::sqrt(stats.beta_eve(l)) * g;

    const double eve_amp = std::sqrt(tau * pilots.p_eve);
    const double eve_term = tau * pilots.p_eve * stats.beta_eve(l);
    for (Eigen::Index k = 0; k < K; ++k) {
      detail::fill_cn(noise, rng);
      const double amp = std::sqrt(tau * pilots.p_users(k));
      Eigen::VectorXcd y = amp * h.col(k) + noise;
      double den = tau * pilots.p_users(k) * stats.beta_users(l, k) + 1.0;
      if (k == a) {
        y += eve_amp * out.h_eve.col(l);
        den += eve_term;
      }
      hh.col(k) = (amp * stats.beta_users(l, k) / den) * y;
      if (k == a) {
        out.h_hat_eve.col(l) = (eve_amp * stats.beta_eve(l) / den) * y;
      }
    }
  }
}

inline ChannelRealization sample_realization(const ChannelStatistics& stats,
                                             const PilotConfig& pilots, std::size_t antennas,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ChannelRealization out;
  sample_realization(stats, pilots, antennas, rng, out);
  return out;
}

}  // namespace cfres
