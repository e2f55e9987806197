#pragma once

// Oracle checks behind `cfres validate`: closed forms against Monte Carlo
// and the single-link SCA result against an exhaustive power grid.

#include <cmath>
#include <string>
#include <vector>

#include "cfres/config.hpp"
#include "cfres/oracle.hpp"
#include "cfres/resilience.hpp"
#include "cfres/sca.hpp"

namespace cfres {

struct GridComparison {
  std::uint64_t seed = 0;
  std::string status;  // match, both_infeasible, mismatch, sca_failed
  double grid_psi = 0.0;
  double sca_psi = 0.0;
  std::size_t sca_iterations = 0;
  std::string note;

  bool passed() const { return status == "match" || status == "both_infeasible"; }
};

/// SCA fixed point vs grid for L = K = 1 and omega = (1, 0). Passes when the
/// SCA objective is at most 1% above the grid optimum, or when both find no
/// point meeting SE_min.
inline GridComparison compare_with_grid(const ScenarioConfig& base, const PilotConfig& pilots, double p_max,
                                        const ServiceTargets& targets, std::uint64_t seed, double step = 1e-3,
                                        double threshold_fraction = 0.1) {
  ScenarioConfig sc = base;
  sc.num_aps = 1;
  sc.num_users = 1;
  const auto drop = generate_drop(sc, seed);
  const auto stats = estimation_quality(drop, pilots);
  const auto part = partition_users(stats, sc.antennas_per_ap, threshold_fraction);

  GridComparison g;
  g.seed = seed;
  const auto grid = grid_search_oracle(stats, part, targets, p_max, step);
  g.grid_psi = grid.psi;

  ScaOptions opt;
  opt.max_iterations = 300;
  opt.psi_tolerance = 1e-10;
  const auto run = run_sca(stats, part, targets, Eigen::VectorXd::Constant(1, p_max), opt);
  g.sca_iterations = run.records.size() - 1;
  g.sca_psi = run.records.back().psi;
  const bool grid_empty = !std::isfinite(grid.psi);
  if (!run.failure.empty()) {
    g.status = grid_empty ? "both_infeasible" : "sca_failed";
    g.note = run.failure;
    return g;
  }
  if (grid_empty) {
    g.status = "mismatch";
    g.note = "grid found no point meeting SE_min";
    return g;
  }
  g.status = g.sca_psi <= grid.psi * 1.01 + 1e-9 ? "match" : "mismatch";
  return g;
}

struct ValidationReport {
  OracleReport oracle;
  double k_sigma = 5.0;
  OracleReport zero_power;
  std::vector<GridComparison> grid;

  std::vector<OracleTerm> oracle_failures() const { return oracle.failures(k_sigma); }

  /// Interference and SINR terms that are not exactly zero at zero power.
  std::vector<OracleTerm> zero_power_failures() const {
    std::vector<OracleTerm> out;
    for (const auto& t : zero_power.terms) {
      const bool power_term = t.name.rfind("interf_power", 0) == 0 || t.name.rfind("sinr", 0) == 0;
      if (power_term && (t.closed_form != 0.0 || t.estimate != 0.0)) out.push_back(t);
    }
    return out;
  }

  bool passed() const {
    if (!oracle_failures().empty() || !zero_power_failures().empty()) return false;
    for (const auto& g : grid) {
      if (!g.passed()) return false;
    }
    return true;
  }
};

/// The small oracle instance: validate.L x validate.K with the scenario's
/// physics, tau_p = K, equal split with AN share 1 / (K + 1).
struct OracleInstance {
  PilotConfig pilots;
  ChannelStatistics stats;
  UserPartition part;
  PowerAllocation alloc;
};

inline OracleInstance oracle_instance(const ExperimentConfig& c) {
  ScenarioConfig sc = c.scenario;
  sc.num_aps = c.validate.L;
  sc.num_users = c.validate.K;
  const auto drop = generate_drop(sc, c.validate.seed);
  OracleInstance in;
  in.pilots = PilotConfig::uniform(sc.num_users, sc.num_users, noise_normalized(c, c.pilots.user_power_mw),
                                   noise_normalized(c, c.pilots.eve_power_mw),
                                   std::min(c.pilots.attacked_user, sc.num_users) - 1);
  in.stats = estimation_quality(drop, in.pilots);
  in.part = partition_users(in.stats, sc.antennas_per_ap, c.solver.threshold_fraction);
  const Eigen::VectorXd p_max = Eigen::VectorXd::Constant(static_cast<Index>(sc.num_aps), noise_normalized(c, c.p_max_mw));
  in.alloc = equal_power_allocation(in.stats, in.part, p_max, 1.0 / static_cast<double>(sc.num_users + 1));
  return in;
}

inline ValidationReport run_validation(const ExperimentConfig& c) {
  ValidationReport rep;
  rep.k_sigma = c.validate.k_sigma;
  const auto in = oracle_instance(c);
  rep.oracle = oracle_expectations(in.stats, in.pilots, in.part, in.alloc, c.validate.samples, c.validate.seed);
  const auto zero = PowerAllocation::zeros(in.stats.num_aps(), in.stats.num_users());
  rep.zero_power = oracle_expectations(in.stats, in.pilots, in.part, zero, 2000, c.validate.seed + 1);

  const auto pilots = PilotConfig::uniform(1, std::max<std::size_t>(1, c.tau_p()),
                                           noise_normalized(c, c.pilots.user_power_mw),
                                           noise_normalized(c, c.pilots.eve_power_mw), 0);
  ServiceTargets t = targets_for(c, {1.0, 0.0});
  t.se_des.conservativeResize(1);
  t.se_min.conservativeResize(1);
  for (std::size_t s = 0; s < c.validate.grid_seeds; ++s) {
    rep.grid.push_back(compare_with_grid(c.scenario, pilots, noise_normalized(c, c.p_max_mw), t,
                                         c.drops.base_seed + s, c.validate.grid_step, c.solver.threshold_fraction));
  }
  return rep;
}

}  // namespace cfres
