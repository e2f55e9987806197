#pragma once

// Random network drops: AP, user and eavesdropper placement plus the
// large-scale fading (path loss and log-normal shadowing) of every link.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cfres/error.hpp"
#include "cfres/units.hpp"

namespace cfres {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(const Point2& a, const Point2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct ScenarioConfig {
  double area_side_m = 1000.0;
  std::size_t num_aps = 40;          // L
  std::size_t antennas_per_ap = 4;   // M
  std::size_t num_users = 10;        // K
  double eve_radius_m = 100.0;
  double pathloss_intercept_db = -30.5;
  double pathloss_exponent_db_per_decade = 36.7;
  double shadow_sigma_db = 4.0;
  double noise_power_dbm = -96.0;
  std::uint64_t seed = 1;

  void validate() const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(area_side_m) || !finite(eve_radius_m) || !finite(pathloss_intercept_db) ||
        !finite(pathloss_exponent_db_per_decade) || !finite(shadow_sigma_db) ||
        !finite(noise_power_dbm)) {
      throw InvalidArgument("scenario: non-finite parameter");
    }
    if (num_aps < 1) throw InvalidArgument("scenario: need at least one AP");
    if (antennas_per_ap < 2) throw InvalidArgument("scenario: need M >= 2 antennas per AP");
    if (num_users < 1) throw InvalidArgument("scenario: need at least one user");
    if (area_side_m <= 0.0) throw InvalidArgument("scenario: area side must be positive");
    if (eve_radius_m < 0.0) throw InvalidArgument("scenario: eve radius must be >= 0");
    if (shadow_sigma_db < 0.0) throw InvalidArgument("scenario: shadowing sigma must be >= 0");
  }
};

/// One random placement. Gains are linear and dimensionless; every power in
/// the library is expressed relative to the noise power, so noise is 1.
struct NetworkDrop {
  std::vector<Point2> ap_positions;
  std::vector<Point2> user_positions;
  Point2 eve_position;
  Eigen::MatrixXd beta_users;  // L x K
  Eigen::VectorXd beta_eve;    // L

  std::size_t num_aps() const { return ap_positions.size(); }
  std::size_t num_users() const { return user_positions.size(); }

  friend bool operator==(const NetworkDrop& a, const NetworkDrop& b) {
    return a.ap_positions == b.ap_positions && a.user_positions == b.user_positions &&
           a.eve_position == b.eve_position && a.beta_users == b.beta_users &&
           a.beta_eve == b.beta_eve;
  }
};

inline constexpr double kMinLinkDistanceM = 1.0;

/// Distance-dependent path loss in dB. Distances below 1 m are clamped.
inline double path_loss_db(double distance_m, double intercept_db = -30.5,
                           double exponent_db_per_decade = 36.7) {
  const double d = std::max(distance_m, kMinLinkDistanceM);
  return intercept_db - exponent_db_per_decade * std::log10(d);
}

inline double path_loss_db(double distance_m, const ScenarioConfig& cfg) {
  return path_loss_db(distance_m, cfg.pathloss_intercept_db, cfg.pathloss_exponent_db_per_decade);
}

/// Draws a drop. Identical (config, seed) pairs give bit-identical drops.
///
/// APs and users are uniform over the square; the eavesdropper is uniform
/// over the disc of radius eve_radius_m around user 1 and may land outside
/// the square when user 1 sits near an edge.
inline NetworkDrop generate_drop(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(0.0, config.area_side_m);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> shadow(0.0, 1.0);

  const std::size_t L = config.num_aps;
  const std::size_t K = config.num_users;

  NetworkDrop drop;
  drop.ap_positions.resize(L);
  drop.user_positions.resize(K);
  for (auto& p : drop.ap_positions) {
    p.x = coord(rng);
    p.y = coord(rng);
  }
  for (auto& p : drop.user_positions) {
    p.x = coord(rng);
    p.y = coord(rng);
  }

  // sqrt of a uniform radius fraction gives a uniform density over the disc.
  const double radius = config.eve_radius_m * std::sqrt(unit(rng));
  const double angle = 2.0 * std::numbers::pi * unit(rng);
  drop.eve_position = drop.user_positions.front();
  if (radius > 0.0) {
    drop.eve_position.x += radius * std::cos(angle);
    drop.eve_position.y += radius * std::sin(angle);
  }

  auto link_gain = [&](const Point2& a, const Point2& b) {
    const double pl = path_loss_db(distance(a, b), config);
    const double f = config.shadow_sigma_db * shadow(rng);
    return units::db_to_linear(pl + f);
  };

  drop.beta_users.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(K));
  drop.beta_eve.resize(static_cast<Eigen::Index>(L));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      drop.beta_users(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) =
          link_gain(drop.ap_positions[l], drop.user_positions[k]);
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    drop.beta_eve(static_cast<Eigen::Index>(l)) = link_gain(drop.ap_positions[l], drop.eve_position);
  }
  return drop;
}

}  // namespace cfres
