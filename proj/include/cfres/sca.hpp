#pragma once

// Successive convex approximation of the weighted service-gap power
// allocation problem. Each outer iteration linearizes the non-convex SINR
// terms around the current allocation and solves the resulting conic
// subproblem.

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfres/conic.hpp"
#include "cfres/error.hpp"
#include "cfres/ppzf.hpp"

namespace cfres {

struct ServiceTargets {
  double sse_des = 3.0;
  Eigen::VectorXd se_des;  // K
  Eigen::VectorXd se_min;  // K
  double omega1 = 0.5;
  double omega2 = 0.5;

  static ServiceTargets uniform(std::size_t K, double sse_des, double se_des, double se_min,
                                double omega1, double omega2) {
    ServiceTargets t;
    t.sse_des = sse_des;
    t.se_des = Eigen::VectorXd::Constant(static_cast<Index>(K), se_des);
    t.se_min = Eigen::VectorXd::Constant(static_cast<Index>(K), se_min);
    t.omega1 = omega1;
    t.omega2 = omega2;
    return t;
  }

  void validate(std::size_t K) const {
    if (static_cast<std::size_t>(se_des.size()) != K || static_cast<std::size_t>(se_min.size()) != K) {
      throw InvalidArgument("targets: se_des and se_min need one entry per user");
    }
    if (!(sse_des > 0.0) || !std::isfinite(sse_des)) throw InvalidArgument("targets: sse_des must be > 0");
    if (!(se_des.array() > 0.0).all() || !se_des.allFinite()) {
      throw InvalidArgument("targets: se_des must be > 0");
    }
    if (!(se_min.array() >= 0.0).all() || !se_min.allFinite()) {
      throw InvalidArgument("targets: se_min must be >= 0");
    }
    if (!(omega1 >= 0.0) || !(omega2 >= 0.0) || std::abs(omega1 + omega2 - 1.0) > 1e-9) {
      throw InvalidArgument("targets: omega weights must be >= 0 and sum to 1");
    }
  }
};

/// Weighted squared service gap on true performance. The secrecy term is 0
/// when the report carries no eavesdropper, the QoS term is 0 when K = 1.
inline double psi_omega(const PerformanceReport& r, const ServiceTargets& t) {
  const Index K = r.se_users.size();
  const auto a = static_cast<Index>(r.attacked_user);
  double psi = 0.0;
  if (r.sse_target) {
    const double g = *r.sse_target / t.sse_des - 1.0;
    psi += t.omega1 * g * g;
  }
  if (K > 1) {
    double s = 0.0;
    for (Index k = 0; k < K; ++k) {
      if (k == a) continue;
      const double g = r.se_users(k) / t.se_des(k) - 1.0;
      s += g * g;
    }
    psi += t.omega2 / static_cast<double>(K - 1) * s;
  }
  return psi;
}

/// Current allocation with its surrogate variables and the quantities that
/// define the next linearization.
struct IteratePoint {
  PowerAllocation u;
  Eigen::VectorXd tau;   // K
  double eta1 = 0.0;
  double zeta1 = 0.0;
  double gamma_e = 0.0;

  Eigen::VectorXd x;         // a_k^T u_k per user
  Eigen::VectorXd phi;       // phi_k(u) per user
  double f_d = 1.0;          // eavesdropper SINR denominator
  Eigen::MatrixXd grad_f_d_users;  // L x K, zero column for the attacked user
  Eigen::VectorXd grad_f_d_an;     // L

  /// Recomputes x, phi, f_D and its gradient from u.
  void refresh(const SinrCoefficients& coef) {
    const Index K = u.u_users.cols();
    x.resize(K);
    phi.resize(K);
    for (Index k = 0; k < K; ++k) {
      x(k) = coef.x(k, u);
      phi(k) = coef.phi(k, u);
    }
    f_d = coef.eve_denominator(u);
    grad_f_d_users = 2.0 * (u.u_users.array().colwise() * coef.w_e.array()).matrix();
    grad_f_d_users.col(coef.attacked).setZero();
    grad_f_d_an = 2.0 * coef.w_e.cwiseProduct(u.u_an);
  }
};

/// SINR_lb(u; u^n) = 2 x^n / phi^n * x(u) - (x^n / phi^n)^2 * phi(u).
inline double sinr_lower_bound(Index k, const PowerAllocation& u, const IteratePoint& at,
                               const SinrCoefficients& coef) {
  const double r = at.x(k) / at.phi(k);
  return 2.0 * r * coef.x(k, u) - r * r * coef.phi(k, u);
}

/// Tangent of the (convex) eavesdropper denominator at the expansion point.
inline double eve_denominator_lower_bound(const PowerAllocation& u, const IteratePoint& at) {
  return at.f_d + (at.grad_f_d_users.array() * (u.u_users - at.u.u_users).array()).sum() +
         at.grad_f_d_an.dot(u.u_an - at.u.u_an);
}

/// Even split of P_max over the users (minus an optional AN share), with
/// every amplitude at least sqrt(epsilon_floor).
inline IteratePoint initial_point(const ChannelStatistics& stats, const UserPartition& part,
                                  const Eigen::VectorXd& p_max, double epsilon_floor = 1e-9,
                                  double an_fraction = 0.0) {
  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  if (p_max.size() != L) throw InvalidArgument("initial_point: p_max needs one entry per AP");
  if (!(p_max.array() > 0.0).all()) throw InvalidArgument("initial_point: p_max must be > 0");
  if (!(an_fraction >= 0.0 && an_fraction < 1.0)) {
    throw InvalidArgument("initial_point: an_fraction must lie in [0, 1)");
  }
  IteratePoint pt;
  pt.u = PowerAllocation::zeros(L, K);
  for (Index l = 0; l < L; ++l) {
    const double user_share = (1.0 - an_fraction) * p_max(l) / static_cast<double>(K);
    pt.u.u_users.row(l).setConstant(std::sqrt(std::max(user_share, epsilon_floor)));
    pt.u.u_an(l) = std::sqrt(an_fraction * p_max(l));
  }
  const SinrCoefficients coef(stats, part);
  pt.refresh(coef);
  const auto rep = evaluate(pt.u, stats, part);
  pt.tau = rep.se_users;
  if (rep.sinr_eve) {
    pt.gamma_e = *rep.sinr_eve;
    pt.eta1 = std::log2(1.0 + pt.gamma_e);
    pt.zeta1 = std::max(0.0, pt.tau(static_cast<Index>(stats.attacked_user)) - pt.eta1);
  }
  return pt;
}

enum class RateEncoding { Exponential, PiecewiseLinear };

struct ScaOptions {
  std::size_t max_iterations = 50;   // N_max
  double psi_tolerance = 1e-5;       // stop when |psi_n - psi_{n-1}| < tol
  bool use_an = true;                // false removes the AN variables
  RateEncoding rate_encoding = RateEncoding::Exponential;
  std::size_t pwl_segments = 48;
  double pwl_g_max = 1e4;            // SINR cap of the piecewise-linear encoding
  double eps_d = 1e-3;               // floor on the linearized Eve denominator
  double x_floor_factor = 1e-6;
  bool sse_restoration = true;       // see solve_subproblem
  double zeta_restoration_floor = -100.0;
  double epsilon_floor = 1e-9;       // power floor of the even-split start
  conic::Settings solver;
};

/// Variable layout of one subproblem. Powers are stored as u / sqrt(p_ref).
struct SubproblemLayout {
  Index L = 0, K = 0;
  bool has_an = false;
  bool has_eve = false;
  Index num_vars = 0;
  Index off_an = -1, off_tau = -1, off_g = -1;
  Index eta = -1, zeta = -1, gamma_e = -1, t = -1;

  Index u(Index l, Index k) const { return l * K + k; }
  Index an(Index l) const { return off_an + l; }
  Index tau(Index k) const { return off_tau + k; }
  Index g(Index k) const { return off_g + k; }

  static SubproblemLayout make(Index L, Index K, bool has_an, bool has_eve) {
    SubproblemLayout s;
    s.L = L;
    s.K = K;
    s.has_an = has_an;
    s.has_eve = has_eve;
    Index n = L * K;
    if (has_an) {
      s.off_an = n;
      n += L;
    }
    s.off_tau = n;
    n += K;
    s.off_g = n;
    n += K;
    if (has_eve) {
      s.eta = n++;
      s.zeta = n++;
      s.gamma_e = n++;
    }
    s.t = n++;
    s.num_vars = n;
    return s;
  }
};

struct ConicSubproblem {
  conic::Problem problem;
  SubproblemLayout layout;
  double scale = 1.0;        // sqrt(p_ref)
  bool relaxed = false;      // zeta >= 0 dropped
  Eigen::VectorXd start;     // heuristic start, may be outside the interior
};

namespace detail {

inline double pwl_log2(double g, const std::vector<double>& knots) {
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    if (g <= knots[i + 1]) {
      const double f0 = std::log2(1.0 + knots[i]);
      const double f1 = std::log2(1.0 + knots[i + 1]);
      return f0 + (f1 - f0) * (g - knots[i]) / (knots[i + 1] - knots[i]);
    }
  }
  return std::log2(1.0 + knots.back());
}

inline std::vector<double> pwl_knots(std::size_t segments, double g_max) {
  // Denser near zero where log2(1 + g) bends most.
  std::vector<double> k(segments + 1);
  for (std::size_t i = 0; i <= segments; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(segments);
    k[i] = std::expm1(s * std::log1p(g_max));
  }
  k.back() = g_max;
  return k;
}

}  // namespace detail

/// Builds the convex subproblem around `at`. With relax_sse the constraint
/// zeta >= 0 is replaced by zeta >= zeta_restoration_floor.
inline ConicSubproblem build_subproblem(const IteratePoint& at, const ChannelStatistics& stats,
                                        const SinrCoefficients& coef,
                                        const ServiceTargets& targets, const Eigen::VectorXd& p_max,
                                        const ScaOptions& opt, bool relax_sse = false) {
  using conic::AffineRow;
  const Index L = stats.num_aps();
  const Index K = stats.num_users();
  const auto a = static_cast<Index>(stats.attacked_user);
  targets.validate(static_cast<std::size_t>(K));
  if (p_max.size() != L || !(p_max.array() > 0.0).all()) {
    throw InvalidArgument("build_subproblem: p_max must hold one positive entry per AP");
  }

  const double p_ref = p_max.maxCoeff();
  const double x_floor = opt.x_floor_factor * std::sqrt(p_ref * stats.gamma_users.maxCoeff());
  for (Index k = 0; k < K; ++k) {
    if (!(at.x(k) >= x_floor)) {
      throw InvalidArgument("build_subproblem: user " + std::to_string(k) +
                            " has a degenerate linearization point (x below floor)");
    }
  }

  ConicSubproblem sub;
  sub.scale = std::sqrt(p_ref);
  sub.relaxed = relax_sse;
  const bool eve = stats.eve_active;
  const bool use_an = opt.use_an;
  auto& lay = sub.layout;
  lay = SubproblemLayout::make(L, K, use_an, eve);
  conic::Problem& P = sub.problem;
  P = conic::Problem(lay.num_vars);
  P.c(lay.t) = 1.0;

  // Scaled coefficients: x(u) = a_s^T u_s, phi(u) = 1 + w_s^T pow_s.
  const Eigen::MatrixXd a_s = coef.a * sub.scale;
  const Eigen::MatrixXd w_s = coef.w * p_ref;
  const Eigen::VectorXd be_s = coef.b_e * sub.scale;
  const Eigen::VectorXd we_s = coef.w_e * p_ref;
  const double ln2 = std::numbers::ln2;

  // (i) SINR lower bound: g_k + c2 phi_k(u) <= c1 x_k(u), as
  //     ||(2 D u, 1 - r)|| <= 1 + r with r = c1 x_k(u) - g_k - c2.
  for (Index k = 0; k < K; ++k) {
    const double ratio = at.x(k) / at.phi(k);
    const double c1 = 2.0 * ratio;
    const double c2 = ratio * ratio;
    AffineRow r(-c2);
    for (Index l = 0; l < L; ++l) r.add(lay.u(l, k), c1 * a_s(l, k));
    r.add(lay.g(k), -1.0);
    AffineRow lhs = r;
    lhs.constant += 1.0;
    std::vector<AffineRow> ys;
    ys.reserve(static_cast<std::size_t>(L * (K + 1) + 1));
    for (Index l = 0; l < L; ++l) {
      const double d = 2.0 * std::sqrt(c2 * w_s(l, k));
      if (d == 0.0) continue;
      for (Index t = 0; t < K; ++t) ys.push_back(AffineRow().add(lay.u(l, t), d));
      if (use_an) ys.push_back(AffineRow().add(lay.an(l), d));
    }
    AffineRow one_minus_r(1.0 + c2);
    for (std::size_t j = 0; j < r.index.size(); ++j) one_minus_r.add(r.index[j], -r.coef[j]);
    ys.push_back(std::move(one_minus_r));
    P.add_second_order(std::move(lhs), std::move(ys), "sinr_lb[" + std::to_string(k) + "]");
    P.add_nonnegative(AffineRow().add(lay.g(k), 1.0), "g_nonneg[" + std::to_string(k) + "]");
  }

  // (ii) tau_k <= log2(1 + g_k).
  std::vector<double> knots;
  if (opt.rate_encoding == RateEncoding::PiecewiseLinear) {
    knots = detail::pwl_knots(std::max<std::size_t>(opt.pwl_segments, 1), opt.pwl_g_max);
  }
  for (Index k = 0; k < K; ++k) {
    const std::string tag = "[" + std::to_string(k) + "]";
    if (opt.rate_encoding == RateEncoding::Exponential) {
      P.add_exponential(AffineRow().add(lay.tau(k), ln2), AffineRow(1.0),
                        AffineRow(1.0).add(lay.g(k), 1.0), "rate" + tag);
    } else {
      for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double f0 = std::log2(1.0 + knots[i]);
        const double slope = (std::log2(1.0 + knots[i + 1]) - f0) / (knots[i + 1] - knots[i]);
        P.add_nonnegative(AffineRow(f0 - slope * knots[i]).add(lay.g(k), slope).add(lay.tau(k), -1.0),
                          "rate_pwl" + tag);
      }
      P.add_nonnegative(AffineRow(opt.pwl_g_max).add(lay.g(k), -1.0), "rate_cap" + tag);
    }
    P.add_nonnegative(AffineRow(-targets.se_min(k)).add(lay.tau(k), 1.0), "se_min" + tag);
  }

  if (eve) {
    // (iii) f_N(u) <= gamma_e f_D^lb(u) as
    //       ||(2 b_e^T u_a, 2 sqrt(w_e) u_a, gamma_e - f_lb)|| <= gamma_e + f_lb.
    AffineRow f_lb(at.f_d);
    for (Index l = 0; l < L; ++l) {
      for (Index t = 0; t < K; ++t) {
        const double gr = at.grad_f_d_users(l, t);
        if (gr == 0.0) continue;
        f_lb.constant -= gr * at.u.u_users(l, t);
        f_lb.add(lay.u(l, t), gr * sub.scale);
      }
      if (use_an && at.grad_f_d_an(l) != 0.0) {
        f_lb.constant -= at.grad_f_d_an(l) * at.u.u_an(l);
        f_lb.add(lay.an(l), at.grad_f_d_an(l) * sub.scale);
      }
    }
    AffineRow coherent;
    for (Index l = 0; l < L; ++l) coherent.add(lay.u(l, a), 2.0 * be_s(l));
    std::vector<AffineRow> ys;
    ys.push_back(std::move(coherent));
    for (Index l = 0; l < L; ++l) {
      const double d = 2.0 * std::sqrt(we_s(l));
      if (d != 0.0) ys.push_back(AffineRow().add(lay.u(l, a), d));
    }
    AffineRow diff = AffineRow().add(lay.gamma_e, 1.0);
    diff.constant -= f_lb.constant;
    for (std::size_t j = 0; j < f_lb.index.size(); ++j) diff.add(f_lb.index[j], -f_lb.coef[j]);
    ys.push_back(std::move(diff));
    AffineRow sum = f_lb;
    sum.add(lay.gamma_e, 1.0);
    P.add_second_order(std::move(sum), std::move(ys), "eve_sinr");
    AffineRow floor = f_lb;
    floor.constant -= opt.eps_d;
    P.add_nonnegative(std::move(floor), "eve_denominator_floor");
    P.add_nonnegative(AffineRow().add(lay.gamma_e, 1.0), "gamma_e_nonneg");

    // (iv) eta >= log2(1 + g_n) + (gamma_e - g_n) / ((1 + g_n) ln 2).
    const double gn = at.gamma_e;
    const double slope = 1.0 / ((1.0 + gn) * ln2);
    P.add_nonnegative(AffineRow(-std::log2(1.0 + gn) + slope * gn).add(lay.eta, 1.0).add(lay.gamma_e, -slope),
                      "eta_tangent");

    // (v) tau_a - eta >= zeta >= 0.
    P.add_nonnegative(AffineRow().add(lay.tau(a), 1.0).add(lay.eta, -1.0).add(lay.zeta, -1.0), "sse");
    if (relax_sse) {
      P.add_nonnegative(AffineRow(-opt.zeta_restoration_floor).add(lay.zeta, 1.0), "zeta_floor");
    } else {
      P.add_nonnegative(AffineRow().add(lay.zeta, 1.0), "zeta_nonneg");
    }
  }

  // (vi) per-AP power balls and nonnegativity.
  for (Index l = 0; l < L; ++l) {
    std::vector<AffineRow> ys;
    for (Index k = 0; k < K; ++k) ys.push_back(AffineRow().add(lay.u(l, k), 1.0));
    if (use_an) ys.push_back(AffineRow().add(lay.an(l), 1.0));
    P.add_second_order(AffineRow(std::sqrt(p_max(l) / p_ref)), std::move(ys),
                       "power[" + std::to_string(l) + "]");
    for (Index k = 0; k < K; ++k) P.add_nonnegative(AffineRow().add(lay.u(l, k), 1.0), "u_nonneg");
    if (use_an) P.add_nonnegative(AffineRow().add(lay.an(l), 1.0), "an_nonneg");
  }

  // (vii) objective epigraph t >= ||v||^2 as ||(2v, 1 - t)|| <= 1 + t.
  std::vector<AffineRow> vs;
  if (eve && targets.omega1 > 0.0) {
    const double s = std::sqrt(targets.omega1);
    vs.push_back(AffineRow(-2.0 * s).add(lay.zeta, 2.0 * s / targets.sse_des));
  }
  if (K > 1 && targets.omega2 > 0.0) {
    const double s = std::sqrt(targets.omega2 / static_cast<double>(K - 1));
    for (Index k = 0; k < K; ++k) {
      if (k == a) continue;
      vs.push_back(AffineRow(-2.0 * s).add(lay.tau(k), 2.0 * s / targets.se_des(k)));
    }
  }
  vs.push_back(AffineRow(1.0).add(lay.t, -1.0));
  P.add_second_order(AffineRow(1.0).add(lay.t, 1.0), std::move(vs), "objective");

  // Heuristic interior start: pull u^n slightly towards the centre of the
  // power balls and pick the surrogates strictly inside their bounds.
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(lay.num_vars);
  PowerAllocation us = at.u;
  for (Index l = 0; l < L; ++l) {
    const double centre = std::sqrt(p_max(l) / (2.0 * static_cast<double>(K + 1)));
    for (Index k = 0; k < K; ++k) us.u_users(l, k) = 0.98 * at.u.u_users(l, k) + 0.02 * centre;
    us.u_an(l) = use_an ? 0.98 * at.u.u_an(l) + 0.02 * centre : 0.0;
    for (Index k = 0; k < K; ++k) x0(lay.u(l, k)) = us.u_users(l, k) / sub.scale;
    if (use_an) x0(lay.an(l)) = us.u_an(l) / sub.scale;
  }
  for (Index k = 0; k < K; ++k) {
    const double lb = sinr_lower_bound(k, us, at, coef);
    double g = 0.99 * std::max(lb, 0.0);
    double ub;
    if (opt.rate_encoding == RateEncoding::PiecewiseLinear) {
      g = std::min(g, 0.99 * opt.pwl_g_max);
      ub = detail::pwl_log2(g, knots);
    } else {
      ub = std::log2(1.0 + g);
    }
    x0(lay.g(k)) = g;
    const double frac = k == a ? 0.99 : 0.9;
    x0(lay.tau(k)) = targets.se_min(k) + frac * (ub - targets.se_min(k));
  }
  if (eve) {
    const double num = coef.eve_numerator(us);
    const double den = std::max(eve_denominator_lower_bound(us, at), opt.eps_d);
    const double ge = 1.01 * num / den + 1e-6;
    const double gn = at.gamma_e;
    const double eta = std::log2(1.0 + gn) + (ge - gn) / ((1.0 + gn) * std::numbers::ln2) + 1e-3;
    const double hi = x0(lay.tau(a)) - eta;
    const double lo = relax_sse ? opt.zeta_restoration_floor : 0.0;
    x0(lay.gamma_e) = ge;
    x0(lay.eta) = eta;
    x0(lay.zeta) = hi - std::min(0.1, 0.5 * std::abs(hi - lo));
  }
  double vv = 0.0;
  for (std::size_t j = 0; j + 1 < P.blocks.back().rows.size(); ++j) {
    const double v = 0.5 * P.blocks.back().rows[j].eval(x0);
    vv += v * v;
  }
  x0(lay.t) = 1.1 * vv + 0.1;
  sub.start = std::move(x0);
  return sub;
}

struct SubproblemSolution {
  IteratePoint point;
  conic::Result solver;
  bool relaxed = false;
  bool reduced_accuracy = false;
  double solve_ms = 0.0;
};

/// Maps a solver vector back to an allocation in noise-normalized units,
/// clipping the solver's residual infeasibility (negative amplitudes, power
/// a few ulps above budget).
inline PowerAllocation allocation_from(const ConicSubproblem& sub, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& p_max) {
  const auto& lay = sub.layout;
  PowerAllocation u = PowerAllocation::zeros(lay.L, lay.K);
  for (Index l = 0; l < lay.L; ++l) {
    for (Index k = 0; k < lay.K; ++k) u.u_users(l, k) = std::max(0.0, x(lay.u(l, k))) * sub.scale;
    if (lay.has_an) u.u_an(l) = std::max(0.0, x(lay.an(l))) * sub.scale;
  }
  const Eigen::VectorXd power = u.ap_power();
  for (Index l = 0; l < lay.L; ++l) {
    if (power(l) > p_max(l)) {
      const double f = std::sqrt(p_max(l) / power(l));
      u.u_users.row(l) *= f;
      u.u_an(l) *= f;
    }
  }
  return u;
}

/// Solves one subproblem. Throws InfeasibleError when no strictly feasible
/// point exists and SolverError when the solver stops short of tolerance.
inline SubproblemSolution solve_subproblem(const ConicSubproblem& sub, const ChannelStatistics& stats,
                                           const SinrCoefficients& coef, const Eigen::VectorXd& p_max,
                                           const conic::Settings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  SubproblemSolution out;
  out.relaxed = sub.relaxed;
  out.solver = conic::solve(sub.problem, settings, &sub.start);
  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  const auto& r = out.solver;
  if (r.status == conic::Status::Infeasible) {
    throw InfeasibleError("subproblem infeasible: " + r.message);
  }
  if (r.status != conic::Status::Optimal) {
    const bool usable = r.x.size() == sub.problem.num_vars && std::isfinite(r.gap) &&
                        r.gap <= 1e-6 * (1.0 + std::abs(r.objective)) && r.max_violation <= 1e-7;
    if (!usable) {
      throw SolverError(std::string("subproblem solve failed (") + conic::to_string(r.status) + "): " +
                        r.message);
    }
    out.reduced_accuracy = true;
  }
  const auto& lay = sub.layout;
  IteratePoint& p = out.point;
  p.u = allocation_from(sub, r.x, p_max);
  p.tau.resize(lay.K);
  for (Index k = 0; k < lay.K; ++k) p.tau(k) = r.x(lay.tau(k));
  p.refresh(coef);
  if (lay.has_eve) {
    p.eta1 = r.x(lay.eta);
    p.zeta1 = r.x(lay.zeta);
    p.gamma_e = sinr_eve_vectorized(p.u, stats, coef);
  }
  return out;
}

/// One outer iteration record.
struct ScaRecord {
  std::size_t iteration = 0;
  PowerAllocation alloc;
  PerformanceReport report;
  double psi = 0.0;
  double surrogate_psi = 0.0;  // subproblem optimum that produced this iterate
  bool relaxed = false;
  bool reduced_accuracy = false;
  int newton_iterations = 0;
  int phase1_iterations = 0;
  double solver_gap = 0.0;
  double max_violation = 0.0;
  double solve_ms = 0.0;
};

/// Stateful outer loop: holds the current expansion point and advances it
/// one subproblem at a time.
class ScaStepper {
 public:
  ScaStepper(ChannelStatistics stats, UserPartition part, ServiceTargets targets, Eigen::VectorXd p_max,
             ScaOptions options, const IteratePoint& start)
      : stats_(std::move(stats)),
        part_(std::move(part)),
        targets_(std::move(targets)),
        p_max_(std::move(p_max)),
        opt_(std::move(options)),
        coef_(stats_, part_),
        point_(start) {
    targets_.validate(static_cast<std::size_t>(stats_.num_users()));
    if (!opt_.use_an) point_.u.u_an.setZero();
    point_.refresh(coef_);
    if (stats_.eve_active) point_.gamma_e = sinr_eve_vectorized(point_.u, stats_, coef_);
    current_ = record_for(0, point_.u);
  }

  const IteratePoint& point() const { return point_; }
  const ScaRecord& current() const { return current_; }
  const ChannelStatistics& stats() const { return stats_; }
  const UserPartition& partition() const { return part_; }
  const ServiceTargets& targets() const { return targets_; }
  const ScaOptions& options() const { return opt_; }

  /// Solves the next subproblem. On an infeasible strict subproblem with an
  /// active eavesdropper, retries once with zeta allowed below zero so the
  /// iterate can climb back to positive secrecy.
  const ScaRecord& step() {
    SubproblemSolution sol;
    try {
      auto sub = build_subproblem(point_, stats_, coef_, targets_, p_max_, opt_, false);
      sol = solve_subproblem(sub, stats_, coef_, p_max_, opt_.solver);
    } catch (const InfeasibleError&) {
      if (!(opt_.sse_restoration && stats_.eve_active)) throw;
      auto sub = build_subproblem(point_, stats_, coef_, targets_, p_max_, opt_, true);
      try {
        sol = solve_subproblem(sub, stats_, coef_, p_max_, opt_.solver);
      } catch (const InfeasibleError& e) {
        throw InfeasibleError(std::string("SE_min targets cannot be met within P_max at this "
                                          "linearization (") + e.what() + ")");
      }
    }
    point_ = sol.point;
    ++iteration_;
    current_ = record_for(iteration_, point_.u);
    current_.relaxed = sol.relaxed;
    current_.reduced_accuracy = sol.reduced_accuracy;
    current_.newton_iterations = sol.solver.iterations;
    current_.phase1_iterations = sol.solver.phase1_iterations;
    current_.surrogate_psi = sol.solver.objective;
    current_.solver_gap = sol.solver.gap;
    current_.max_violation = sol.solver.max_violation;
    current_.solve_ms = sol.solve_ms;
    return current_;
  }

 private:
  ScaRecord record_for(std::size_t n, const PowerAllocation& u) const {
    ScaRecord r;
    r.iteration = n;
    r.alloc = u;
    r.report = evaluate(u, stats_, part_);
    r.psi = psi_omega(r.report, targets_);
    return r;
  }

  ChannelStatistics stats_;
  UserPartition part_;
  ServiceTargets targets_;
  Eigen::VectorXd p_max_;
  ScaOptions opt_;
  SinrCoefficients coef_;
  IteratePoint point_;
  ScaRecord current_;
  std::size_t iteration_ = 0;
};

struct ScaRun {
  std::vector<ScaRecord> records;  // records[0] is the starting point
  bool converged = false;
  std::string failure;             // empty unless a subproblem failed
};

/// Plain SCA: iterate until the true objective settles or N_max is hit.
inline ScaRun run_sca(const ChannelStatistics& stats, const UserPartition& part, const ServiceTargets& targets,
                      const Eigen::VectorXd& p_max, const ScaOptions& options,
                      const std::optional<IteratePoint>& start = std::nullopt,
                      const std::function<void(const ScaRecord&)>& sink = {}) {
  ScaStepper stepper(stats, part, targets, p_max, options,
                     start ? *start : initial_point(stats, part, p_max, options.epsilon_floor));
  ScaRun run;
  run.records.push_back(stepper.current());
  if (sink) sink(run.records.back());
  for (std::size_t n = 1; n <= options.max_iterations; ++n) {
    try {
      run.records.push_back(stepper.step());
    } catch (const Error& e) {
      run.failure = e.what();
      return run;
    }
    if (sink) sink(run.records.back());
    const double d = run.records.back().psi - run.records[run.records.size() - 2].psi;
    if (std::abs(d) < options.psi_tolerance) {
      run.converged = true;
      break;
    }
  }
  return run;
}

}  // namespace cfres
