#pragma once

// Absorption / adaptation / recovery scoring, resilience-aware iterate
// selection on top of the SCA loop, and the eavesdropper outage timeline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cfres/channel.hpp"
#include "cfres/error.hpp"
#include "cfres/ppzf.hpp"
#include "cfres/sca.hpp"
#include "cfres/scenario.hpp"

namespace cfres {

struct ResilienceWeights {
  double lambda1 = 0.0;  // absorption
  double lambda2 = 1.0;  // adaptation
  double lambda3 = 0.0;  // recovery

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0) ||
        std::abs(lambda1 + lambda2 + lambda3 - 1.0) > 1e-9) {
      throw InvalidArgument("resilience weights must be >= 0 and sum to 1");
    }
  }
};

inline double absorption(double psi_at_t0) { return 1.0 - psi_at_t0; }

inline double adaptation(double psi_at_tn) { return 1.0 - psi_at_tn; }

/// 1 while the deadline holds, T_d / elapsed afterwards.
inline double recovery(double t_n, double t_0, double t_d) {
  if (!(t_d > 0.0)) throw InvalidArgument("recovery: T_d must be > 0");
  if (!(t_n >= t_0)) throw InvalidArgument("recovery: t_n must not precede t_0");
  const double elapsed = t_n - t_0;
  return elapsed <= t_d ? 1.0 : t_d / elapsed;
}

inline double overall(double abs, double ada, double rec, const ResilienceWeights& w) {
  w.validate();
  return w.lambda1 * abs + w.lambda2 * ada + w.lambda3 * rec;
}

/// Time source for t_n. Fixed advances a constant step per iteration; Wall
/// reports real elapsed time. Both start at t_0.
class Clock {
 public:
  enum class Mode { Fixed, Wall };

  static Clock fixed(double step_ms = 100.0) { return Clock(Mode::Fixed, step_ms); }
  static Clock wall() { return Clock(Mode::Wall, 0.0); }

  Mode mode() const { return mode_; }
  double step_ms() const { return step_ms_; }

  void start(double t0_ms) {
    t0_ = t0_ms;
    ticks_ = 0;
    origin_ = std::chrono::steady_clock::now();
  }

  /// Time at which the iterate just produced became available.
  double tick() {
    ++ticks_;
    if (mode_ == Mode::Fixed) return t0_ + step_ms_ * static_cast<double>(ticks_);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_).count();
    // Strictly increasing even if two ticks land in the same clock quantum.
    last_ = std::max(t0_ + ms, std::nextafter(last_, std::numeric_limits<double>::infinity()));
    return last_;
  }

 private:
  Clock(Mode m, double step) : mode_(m), step_ms_(step) {
    if (m == Mode::Fixed && !(step > 0.0)) throw InvalidArgument("clock: fixed step must be > 0");
  }

  Mode mode_;
  double step_ms_;
  double t0_ = 0.0;
  double last_ = -std::numeric_limits<double>::infinity();
  std::size_t ticks_ = 0;
  std::chrono::steady_clock::time_point origin_{};
};

inline const char* to_string(Clock::Mode m) { return m == Clock::Mode::Fixed ? "fixed" : "wall"; }

struct ResilienceRecord {
  std::size_t iteration = 0;
  double t_ms = 0.0;
  double psi = 0.0;
  double alpha_ada = 0.0;
  double alpha_rec = 0.0;
  double alpha_overall = 0.0;
  PowerAllocation alloc;
};

struct ResilienceTrace {
  double t0_ms = 0.0;
  double td_ms = 0.0;
  ResilienceWeights weights;
  double psi_at_t0 = 0.0;
  double alpha_abs = 0.0;
  std::vector<ResilienceRecord> records;
  std::optional<std::size_t> best_index;  // into records
  std::string failure;                    // set when the run stopped early

  const ResilienceRecord* best() const { return best_index ? &records[*best_index] : nullptr; }
};

/// Index of the largest alpha_overall, earliest on ties.
inline std::optional<std::size_t> best_record(const std::vector<ResilienceRecord>& records) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!best || records[i].alpha_overall > records[*best].alpha_overall) best = i;
  }
  return best;
}

struct ScoringOptions {
  ResilienceWeights weights;
  double t0_ms = 0.0;
  double td_ms = 500.0;
  bool clamp = false;  // clamp alpha_abs and alpha_ada into [0, 1]
};

namespace detail {

inline double clamp_score(double a, bool on) { return on ? std::clamp(a, 0.0, 1.0) : a; }

}  // namespace detail

/// Algorithm 1 over any stepper whose step() returns an object with `psi`
/// (true objective) and `alloc`. Stops at the first throwing step; the trace
/// keeps everything recorded before it.
template <class Stepper>
ResilienceTrace run_resilience_loop(Stepper& stepper, std::size_t n_max, double psi_at_t0,
                                    const ScoringOptions& opt, Clock clock,
                                    const std::function<void(const ResilienceRecord&)>& sink = {}) {
  if (n_max < 1) throw InvalidArgument("run_algorithm1: N_max must be >= 1");
  opt.weights.validate();
  if (!(opt.td_ms > 0.0)) throw InvalidArgument("run_algorithm1: T_d must be > 0");

  ResilienceTrace trace;
  trace.t0_ms = opt.t0_ms;
  trace.td_ms = opt.td_ms;
  trace.weights = opt.weights;
  trace.psi_at_t0 = psi_at_t0;
  trace.alpha_abs = detail::clamp_score(absorption(psi_at_t0), opt.clamp);
  clock.start(opt.t0_ms);

  double alpha_best = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= n_max; ++n) {
    ResilienceRecord rec;
    try {
      const auto& r = stepper.step();
      rec.psi = r.psi;
      rec.alloc = r.alloc;
    } catch (const Error& e) {
      trace.failure = "iteration " + std::to_string(n) + ": " + e.what();
      break;
    }
    rec.iteration = n;
    rec.t_ms = clock.tick();
    rec.alpha_ada = detail::clamp_score(adaptation(rec.psi), opt.clamp);
    rec.alpha_rec = recovery(rec.t_ms, opt.t0_ms, opt.td_ms);
    rec.alpha_overall = overall(trace.alpha_abs, rec.alpha_ada, rec.alpha_rec, opt.weights);
    trace.records.push_back(std::move(rec));
    if (trace.records.back().alpha_overall > alpha_best) {
      alpha_best = trace.records.back().alpha_overall;
      trace.best_index = trace.records.size() - 1;
    }
    if (sink) sink(trace.records.back());
  }
  return trace;
}

/// Scores an existing psi / time sequence under other weights or deadline.
/// Equal to a fresh run whenever the iterates and timestamps would repeat.
inline ResilienceTrace rescore(const ResilienceTrace& in, const ScoringOptions& opt) {
  opt.weights.validate();
  if (!(opt.td_ms > 0.0)) throw InvalidArgument("rescore: T_d must be > 0");
  ResilienceTrace out = in;
  out.t0_ms = opt.t0_ms;
  out.td_ms = opt.td_ms;
  out.weights = opt.weights;
  out.alpha_abs = detail::clamp_score(absorption(in.psi_at_t0), opt.clamp);
  for (auto& r : out.records) {
    r.alpha_ada = detail::clamp_score(adaptation(r.psi), opt.clamp);
    r.alpha_rec = recovery(r.t_ms, opt.t0_ms, opt.td_ms);
    r.alpha_overall = overall(out.alpha_abs, r.alpha_ada, r.alpha_rec, opt.weights);
  }
  out.best_index = best_record(out.records);
  return out;
}

/// Replays an allocation without optimizing; every step returns it again.
class HoldStepper {
 public:
  HoldStepper(const PowerAllocation& alloc, const ChannelStatistics& stats, const UserPartition& part,
              const ServiceTargets& targets) {
    record_.alloc = alloc;
    record_.report = evaluate(alloc, stats, part);
    record_.psi = psi_omega(record_.report, targets);
  }

  const ScaRecord& current() const { return record_; }
  const ScaRecord& step() {
    ++record_.iteration;
    return record_;
  }

 private:
  ScaRecord record_;
};

struct Algorithm1Result {
  ResilienceTrace trace;
  std::optional<PowerAllocation> best;  // u*, empty if the first iteration failed
  std::vector<ScaRecord> sca_records;   // full per-iteration SCA diagnostics
};

/// Algorithm 1 with SCA from `start` (even power split by default).
inline Algorithm1Result run_algorithm1(const ChannelStatistics& stats, const UserPartition& part,
                                       const ServiceTargets& targets, const Eigen::VectorXd& p_max,
                                       const ScaOptions& sca, std::size_t n_max, double psi_at_t0,
                                       const ScoringOptions& scoring, Clock clock,
                                       const std::optional<IteratePoint>& start = std::nullopt) {
  ScaStepper stepper(stats, part, targets, p_max, sca,
                     start ? *start : initial_point(stats, part, p_max, sca.epsilon_floor));
  Algorithm1Result out;
  out.trace = run_resilience_loop(stepper, n_max, psi_at_t0, scoring, clock, [&](const ResilienceRecord&) {
    out.sca_records.push_back(stepper.current());
  });
  if (const auto* b = out.trace.best()) out.best = b->alloc;
  return out;
}

enum class Preset { Full, OpaNoAn, EpaAn };

inline const char* to_string(Preset p) {
  switch (p) {
    case Preset::Full:
      return "full";
    case Preset::OpaNoAn:
      return "opa_no_an";
    case Preset::EpaAn:
      return "epa_an";
  }
  return "?";
}

struct TimelineOptions {
  Preset preset = Preset::Full;
  std::size_t antennas = 4;      // M
  ServiceTargets targets;        // objective after the attack
  ScaOptions sca;                // steady phase uses max_iterations and psi_tolerance from here
  std::size_t n_max = 50;
  ScoringOptions scoring;        // t0_ms is the outage instant
  Clock clock = Clock::fixed();
  double threshold_fraction = 0.1;
  double epa_an_fraction = -1.0;  // negative: 1 / (K + 1)
};

struct TimelineResult {
  PowerAllocation steady;         // allocation in force before the outage
  double psi_steady = 0.0;        // pre-attack objective with omega = (0, 1)
  double psi_at_t0 = 0.0;         // same allocation, attacked statistics, attack omega
  std::size_t steady_iterations = 0;
  std::string steady_failure;
  Algorithm1Result run;
};

/// Equal split with a fixed AN share, the allocation of the epa_an preset.
inline PowerAllocation equal_power_allocation(const ChannelStatistics& stats, const UserPartition& part,
                                              const Eigen::VectorXd& p_max, double an_fraction) {
  if (!(an_fraction >= 0.0 && an_fraction < 1.0)) {
    throw InvalidArgument("equal_power_allocation: AN fraction must lie in [0, 1)");
  }
  return initial_point(stats, part, p_max, 1e-9, an_fraction).u;
}

/// Steady phase without Eve, outage at t0 holding the steady allocation, then
/// Algorithm 1 under attack from the even-power start. The partition comes
/// from beta and is shared by both phases.
inline TimelineResult run_outage_timeline(const NetworkDrop& drop, const PilotConfig& pilots_preattack,
                                          const PilotConfig& pilots_attack, const Eigen::VectorXd& p_max,
                                          const TimelineOptions& opt) {
  if (pilots_preattack.p_eve != 0.0) throw InvalidArgument("timeline: pre-attack pilots must have p_eve = 0");
  const auto steady_stats = estimation_quality(drop, pilots_preattack);
  const auto attack_stats = estimation_quality(drop, pilots_attack);
  const auto part = partition_users(attack_stats, opt.antennas, opt.threshold_fraction);
  const auto K = static_cast<std::size_t>(attack_stats.num_users());

  ServiceTargets steady_targets = opt.targets;
  steady_targets.omega1 = 0.0;
  steady_targets.omega2 = 1.0;

  ScaOptions sca = opt.sca;
  if (opt.preset == Preset::OpaNoAn) sca.use_an = false;

  TimelineResult out;
  if (opt.preset == Preset::EpaAn) {
    const double f = opt.epa_an_fraction < 0.0 ? 1.0 / static_cast<double>(K + 1) : opt.epa_an_fraction;
    out.steady = equal_power_allocation(attack_stats, part, p_max, f);
    out.psi_steady = psi_omega(evaluate(out.steady, steady_stats, part), steady_targets);
    out.psi_at_t0 = psi_omega(evaluate(out.steady, attack_stats, part), opt.targets);
    HoldStepper hold(out.steady, attack_stats, part, opt.targets);
    out.run.trace = run_resilience_loop(hold, opt.n_max, out.psi_at_t0, opt.scoring, opt.clock,
                                        [&](const ResilienceRecord&) {
                                          out.run.sca_records.push_back(hold.current());
                                        });
    if (const auto* b = out.run.trace.best()) out.run.best = b->alloc;
    return out;
  }

  const auto steady = run_sca(steady_stats, part, steady_targets, p_max, sca);
  out.steady = steady.records.back().alloc;
  out.psi_steady = steady.records.back().psi;
  out.steady_iterations = steady.records.size() - 1;
  out.steady_failure = steady.failure;
  out.psi_at_t0 = psi_omega(evaluate(out.steady, attack_stats, part), opt.targets);
  out.run = run_algorithm1(attack_stats, part, opt.targets, p_max, sca, opt.n_max, out.psi_at_t0,
                           opt.scoring, opt.clock);
  return out;
}

}  // namespace cfres
