#pragma once

// Precoder-level Monte Carlo: explicit PZF / PMRT / AN vectors built from
// sampled channel estimates, and sample averages of every expectation term
// that enters the closed-form SINR expressions.

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfres/channel.hpp"
#include "cfres/error.hpp"
#include "cfres/ppzf.hpp"
#include "cfres/sca.hpp"

namespace cfres {

struct ApPrecoders {
  Eigen::MatrixXcd w;          // M x K, column k is w_{l,k}
  Eigen::VectorXcd v;          // AN beam v_l
  Eigen::MatrixXcd projector;  // B_l
};

/// Builds one AP's precoders from the estimated channels at that AP.
template <class Rng>
ApPrecoders build_ap_precoders(Index l, const Eigen::MatrixXcd& h_hat, const ChannelStatistics& stats,
                               const UserPartition& part, Rng& an_rng) {
  const Index M = h_hat.rows();
  const Index K = h_hat.cols();
  const auto& strong = part.strong[static_cast<std::size_t>(l)];
  const auto s = static_cast<Index>(strong.size());
  const double dims = part.free_dims(l);

  ApPrecoders out;
  out.w.setZero(M, K);
  out.projector = Eigen::MatrixXcd::Identity(M, M);

  if (s > 0) {
    Eigen::MatrixXcd hs(M, s);
    for (Index j = 0; j < s; ++j) hs.col(j) = h_hat.col(strong[static_cast<std::size_t>(j)]);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(hs);
    qr.setThreshold(1e-10);
    if (qr.rank() < s) {
      throw RankDeficientError(static_cast<std::size_t>(l),
                               "estimated strong-user channel matrix is rank deficient");
    }
    const Eigen::MatrixXcd gram = hs.adjoint() * hs;
    Eigen::LLT<Eigen::MatrixXcd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw RankDeficientError(static_cast<std::size_t>(l), "strong-user Gram matrix is singular");
    }
    const Eigen::MatrixXcd pinv = hs * llt.solve(Eigen::MatrixXcd::Identity(s, s));
    out.projector -= pinv * hs.adjoint();
    for (Index j = 0; j < s; ++j) {
      const Index k = strong[static_cast<std::size_t>(j)];
      out.w.col(k) = pinv.col(j) * std::sqrt(dims * stats.gamma_users(l, k));
    }
  }
  for (Index k : part.weak[static_cast<std::size_t>(l)]) {
    const double norm = std::sqrt(dims * stats.gamma_users(l, k));
    if (norm > 0.0) out.w.col(k) = out.projector * h_hat.col(k) / norm;
  }
  Eigen::VectorXcd a(M);
  detail::fill_cn(a, an_rng);
  out.v = out.projector * a / std::sqrt(dims);
  return out;
}

template <class Rng>
std::vector<ApPrecoders> build_precoders(const ChannelRealization& real, const ChannelStatistics& stats,
                                         const UserPartition& part, Rng& an_rng) {
  std::vector<ApPrecoders> out;
  out.reserve(real.h_hat_users.size());
  for (std::size_t l = 0; l < real.h_hat_users.size(); ++l) {
    out.push_back(build_ap_precoders(static_cast<Index>(l), real.h_hat_users[l], stats, part, an_rng));
  }
  return out;
}

inline std::vector<ApPrecoders> build_precoders(const ChannelRealization& real,
                                                const ChannelStatistics& stats,
                                                const UserPartition& part, std::uint64_t an_seed) {
  std::mt19937_64 rng(an_seed);
  return build_precoders(real, stats, part, rng);
}

/// How an oracle term is judged.
enum class OracleCheck {
  StandardErrors,  // |estimate - closed| <= k * std_error
  Exact,           // |estimate - closed| <= abs_tolerance
  Relative,        // |estimate - closed| <= rel_tolerance * |closed| (+ tiny floor)
};

struct OracleTerm {
  std::string name;
  double closed_form = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  OracleCheck check = OracleCheck::StandardErrors;
  double tolerance = 0.0;  // absolute for Exact, relative for Relative

  double deviation() const { return std::abs(estimate - closed_form); }

  bool within(double k_sigma) const {
    switch (check) {
      case OracleCheck::StandardErrors:
        return deviation() <= k_sigma * std_error + 1e-15 * std::abs(closed_form);
      case OracleCheck::Exact:
        return deviation() <= tolerance;
      case OracleCheck::Relative:
        return deviation() <= tolerance * std::abs(closed_form) + 1e-300;
    }
    return false;
  }
};

struct OracleReport {
  std::size_t samples = 0;
  std::vector<OracleTerm> terms;

  bool all_within(double k_sigma) const {
    for (const auto& t : terms) {
      if (!t.within(k_sigma)) return false;
    }
    return true;
  }

  std::vector<OracleTerm> failures(double k_sigma) const {
    std::vector<OracleTerm> out;
    for (const auto& t : terms) {
      if (!t.within(k_sigma)) out.push_back(t);
    }
    return out;
  }

  const OracleTerm* find(const std::string& name) const {
    for (const auto& t : terms) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

struct MeanAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double std_error() const {
    if (n < 2) return 0.0;
    const double nn = static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - sum * sum / nn) / (nn - 1.0));
    return std::sqrt(var / nn);
  }
};

inline std::string idx(std::initializer_list<Index> v) {
  std::string s = "[";
  bool first = true;
  for (Index i : v) {
    if (!first) s += ",";
    s += std::to_string(i);
    first = false;
  }
  return s + "]";
}

}  // namespace detail

/// Sample averages of every expectation term behind the closed forms, each
/// paired with its closed-form value, plus the SINRs re-assembled from the
/// sampled terms under the given allocation.
///
/// Term names: norm_w, norm_v, gain2, var, interf, zf, an, eve_gain2,
/// eve_var, eve_interf, an_eve, interf_power, sinr, sinr_eve.
inline OracleReport oracle_expectations(const ChannelStatistics& stats, const PilotConfig& pilots,
                                        const UserPartition& part, const PowerAllocation& alloc,
                                        std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw InvalidArgument("oracle_expectations: need at least 1000 samples");
  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  const auto a = static_cast<Index>(stats.attacked_user);
  const bool eve = stats.eve_active;
  using detail::MeanAccumulator;

  // Accumulator layout, all indexed [l][k][t] or [l][k].
  auto grid3 = [&] { return std::vector<MeanAccumulator>(static_cast<std::size_t>(L * K * K)); };
  auto grid2 = [&] { return std::vector<MeanAccumulator>(static_cast<std::size_t>(L * K)); };
  auto at3 = [&](Index l, Index k, Index t) { return static_cast<std::size_t>((l * K + k) * K + t); };
  auto at2 = [&](Index l, Index k) { return static_cast<std::size_t>(l * K + k); };

  auto norm_w = grid2();
  auto gain = grid2();
  auto var = grid2();
  auto interf = grid3();
  auto an = grid2();
  std::vector<MeanAccumulator> norm_v(static_cast<std::size_t>(L));
  std::vector<MeanAccumulator> an_eve(static_cast<std::size_t>(L));
  std::vector<MeanAccumulator> eve_gain(static_cast<std::size_t>(L));
  std::vector<MeanAccumulator> eve_var(static_cast<std::size_t>(L));
  auto eve_interf = grid2();
  std::vector<double> zf_max(static_cast<std::size_t>(L * K * K), 0.0);
  std::vector<double> zf_scale(static_cast<std::size_t>(L * K * K), 0.0);

  auto mean_gain = [&](Index l, Index k) { return std::sqrt(part.free_dims(l) * stats.gamma_users(l, k)); };
  auto mean_gain_eve = [&](Index l) { return std::sqrt(part.free_dims(l) * stats.gamma_eve(l)); };
  auto leak = [&](Index l, Index k) {
    return stats.beta_users(l, k) - (part.is_strong(l, k) ? stats.gamma_users(l, k) : 0.0);
  };
  auto leak_eve = [&](Index l) {
    return stats.beta_eve(l) - (part.is_strong(l, a) ? stats.gamma_eve(l) : 0.0);
  };

  std::mt19937_64 rng(seed);
  ChannelRealization real;
  for (std::size_t n = 0; n < n_samples; ++n) {
    sample_realization(stats, pilots, part.antennas, rng, real);
    for (Index l = 0; l < L; ++l) {
      const auto& h = real.h_users[static_cast<std::size_t>(l)];
      const auto& hh = real.h_hat_users[static_cast<std::size_t>(l)];
      const ApPrecoders pre = build_ap_precoders(l, hh, stats, part, rng);
      norm_v[static_cast<std::size_t>(l)].add(pre.v.squaredNorm());
      for (Index k = 0; k < K; ++k) {
        norm_w[at2(l, k)].add(pre.w.col(k).squaredNorm());
        for (Index t = 0; t < K; ++t) {
          const std::complex<double> g = h.col(k).dot(pre.w.col(t));  // h^H w
          if (t == k) {
            gain[at2(l, k)].add(g.real());
            var[at2(l, k)].add(std::norm(g - mean_gain(l, k)));
          } else {
            interf[at3(l, k, t)].add(std::norm(g));
            if (part.is_strong(l, k) && part.is_strong(l, t)) {
              const double z = std::abs(hh.col(k).dot(pre.w.col(t)));
              auto& m = zf_max[at3(l, k, t)];
              m = std::max(m, z);
              zf_scale[at3(l, k, t)] =
                  std::max(zf_scale[at3(l, k, t)], hh.col(k).norm() * pre.w.col(t).norm());
            }
          }
        }
        an[at2(l, k)].add(std::norm(h.col(k).dot(pre.v)));
      }
      if (eve) {
        const auto he = real.h_eve.col(l);
        an_eve[static_cast<std::size_t>(l)].add(std::norm(he.dot(pre.v)));
        const std::complex<double> ge = he.dot(pre.w.col(a));
        eve_gain[static_cast<std::size_t>(l)].add(ge.real());
        eve_var[static_cast<std::size_t>(l)].add(std::norm(ge - mean_gain_eve(l)));
        for (Index t = 0; t < K; ++t) {
          if (t != a) eve_interf[at2(l, t)].add(std::norm(he.dot(pre.w.col(t))));
        }
      }
    }
  }

  OracleReport rep;
  rep.samples = n_samples;
  auto push = [&](std::string name, double closed, const MeanAccumulator& acc) {
    rep.terms.push_back({std::move(name), closed, acc.mean(), acc.std_error(),
                         OracleCheck::StandardErrors, 0.0});
  };
  auto push_squared_mean = [&](std::string name, double closed, const MeanAccumulator& acc) {
    const double m = acc.mean();
    rep.terms.push_back({std::move(name), closed, m * m, 2.0 * std::abs(m) * acc.std_error(),
                         OracleCheck::StandardErrors, 0.0});
  };

  for (Index l = 0; l < L; ++l) {
    push("norm_v" + detail::idx({l}), 1.0, norm_v[static_cast<std::size_t>(l)]);
    for (Index k = 0; k < K; ++k) {
      push("norm_w" + detail::idx({l, k}), 1.0, norm_w[at2(l, k)]);
      push_squared_mean("gain2" + detail::idx({l, k}), part.free_dims(l) * stats.gamma_users(l, k),
                        gain[at2(l, k)]);
      push("var" + detail::idx({l, k}), leak(l, k), var[at2(l, k)]);
      push("an" + detail::idx({l, k}), leak(l, k), an[at2(l, k)]);
      for (Index t = 0; t < K; ++t) {
        if (t == k) continue;
        push("interf" + detail::idx({l, k, t}), leak(l, k), interf[at3(l, k, t)]);
        if (part.is_strong(l, k) && part.is_strong(l, t)) {
          rep.terms.push_back({"zf" + detail::idx({l, k, t}), 0.0, zf_max[at3(l, k, t)], 0.0,
                               OracleCheck::Exact, 1e-9 * std::max(1.0, zf_scale[at3(l, k, t)])});
        }
      }
    }
    if (eve) {
      push("an_eve" + detail::idx({l}), leak_eve(l), an_eve[static_cast<std::size_t>(l)]);
      push_squared_mean("eve_gain2" + detail::idx({l}), part.free_dims(l) * stats.gamma_eve(l),
                        eve_gain[static_cast<std::size_t>(l)]);
      push("eve_var" + detail::idx({l}), leak_eve(l), eve_var[static_cast<std::size_t>(l)]);
      for (Index t = 0; t < K; ++t) {
        if (t != a) push("eve_interf" + detail::idx({l, t}), leak_eve(l), eve_interf[at2(l, t)]);
      }
    }
  }

  // Re-assemble the SINRs from the sampled terms under the allocation.
  const Eigen::MatrixXd rho = alloc.rho_users();
  const Eigen::VectorXd rho_an = alloc.rho_an();
  for (Index k = 0; k < K; ++k) {
    double coh_mc = 0.0;
    double int_mc = 0.0;
    double int_cf = 0.0;
    for (Index l = 0; l < L; ++l) {
      coh_mc += alloc.u_users(l, k) * gain[at2(l, k)].mean();
      for (Index t = 0; t < K; ++t) {
        const double term = t == k ? var[at2(l, k)].mean() : interf[at3(l, k, t)].mean();
        int_mc += rho(l, t) * term;
        int_cf += rho(l, t) * leak(l, k);
      }
      int_mc += rho_an(l) * an[at2(l, k)].mean();
      int_cf += rho_an(l) * leak(l, k);
    }
    rep.terms.push_back({"interf_power" + detail::idx({k}), int_cf, int_mc, 0.0,
                         OracleCheck::Relative, 0.03});
    rep.terms.push_back({"sinr" + detail::idx({k}), sinr_user(k, alloc, stats, part),
                         coh_mc * coh_mc / (int_mc + 1.0), 0.0, OracleCheck::Relative, 0.03});
  }
  if (eve) {
    double coh = 0.0;
    double spread = 0.0;
    double den = 1.0;
    for (Index l = 0; l < L; ++l) {
      coh += alloc.u_users(l, a) * eve_gain[static_cast<std::size_t>(l)].mean();
      spread += rho(l, a) * eve_var[static_cast<std::size_t>(l)].mean();
      for (Index t = 0; t < K; ++t) {
        if (t != a) den += rho(l, t) * eve_interf[at2(l, t)].mean();
      }
      den += rho_an(l) * an_eve[static_cast<std::size_t>(l)].mean();
    }
    rep.terms.push_back({"sinr_eve", sinr_eve(alloc, stats, part), (coh * coh + spread) / den, 0.0,
                         OracleCheck::Relative, 0.03});
  }
  return rep;
}

struct GridOracleResult {
  double psi = std::numeric_limits<double>::infinity();
  double rho_user = 0.0;  // normalized power
  double rho_an = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive search for the single-AP single-user case over
/// (rho_1, rho_AN) = (i, j) * step * P_max with i + j <= 1 / step, keeping
/// points that meet SE_min. Minimizes the true objective.
inline GridOracleResult grid_search_oracle(const ChannelStatistics& stats, const UserPartition& part,
                                           const ServiceTargets& targets, double p_max, double step = 1e-3) {
  if (stats.num_aps() != 1 || stats.num_users() != 1) {
    throw InvalidArgument("grid_search_oracle: needs L = 1 and K = 1");
  }
  if (!(step > 0.0 && step <= 1.0)) throw InvalidArgument("grid_search_oracle: step must lie in (0, 1]");
  const auto n = static_cast<long>(std::llround(1.0 / step));
  GridOracleResult best;
  PowerAllocation u = PowerAllocation::zeros(1, 1);
  for (long i = 0; i <= n; ++i) {
    for (long j = 0; i + j <= n; ++j) {
      const double r1 = static_cast<double>(i) * step * p_max;
      const double ra = static_cast<double>(j) * step * p_max;
      u.u_users(0, 0) = std::sqrt(r1);
      u.u_an(0) = std::sqrt(ra);
      const auto rep = evaluate(u, stats, part);
      ++best.evaluated;
      if (rep.se_users(0) < targets.se_min(0)) continue;
      const double psi = psi_omega(rep, targets);
      if (psi < best.psi) {
        best.psi = psi;
        best.rho_user = r1;
        best.rho_an = ra;
      }
    }
  }
  return best;
}

}  // namespace cfres
