#pragma once

// Experiment orchestration: drops x (omega, lambda) grid points, each an
// outage timeline, written out as trace tables, allocation documents,
// diagnostics and one manifest per run directory.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cfres/config.hpp"
#include "cfres/error.hpp"
#include "cfres/resilience.hpp"
#include "cfres/scenario.hpp"
#include "cfres/trace_io.hpp"

namespace cfres {

enum class ExperimentMode { Run, Sweep };

struct RunOutcome {
  std::size_t drop_index = 0;
  std::uint64_t seed = 0;
  std::size_t omega_index = 0;
  std::array<double, 2> omega{};
  std::size_t lambda_index = 0;
  std::array<double, 3> lambda{};
  std::string status = "failed";  // ok, partial (trace truncated) or failed
  std::string failure;
  std::string trace_file;
  std::string allocation_file;
  std::string diagnostics_file;
  double psi_steady = 0.0;
  double psi_at_t0 = 0.0;
  double alpha_abs = 0.0;
  std::size_t steady_iterations = 0;
  std::string steady_failure;
  std::size_t records = 0;
  std::optional<std::size_t> best_iteration;
  double best_t_ms = 0.0;
  double best_alpha = 0.0;
  double final_alpha_ada = 0.0;
};

struct ExperimentSummary {
  std::vector<RunOutcome> runs;
  std::size_t failed_drops = 0;
  std::size_t drops = 0;
  nlohmann::json manifest;

  bool all_failed() const { return failed_drops == drops; }
};

namespace detail {

inline std::string run_stem(std::size_t d, std::size_t w, std::optional<std::size_t> l) {
  char buf[64];
  if (l) {
    std::snprintf(buf, sizeof buf, "d%03zu_w%zu_l%zu", d, w, *l);
  } else {
    std::snprintf(buf, sizeof buf, "d%03zu_w%zu", d, w);
  }
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  fn(out);
  if (!out) throw Error("write failed for " + p.string());
}

inline nlohmann::json outcome_json(const RunOutcome& r) {
  nlohmann::json j = {{"drop_index", r.drop_index},
                      {"seed", r.seed},
                      {"omega_index", r.omega_index},
                      {"omega", r.omega},
                      {"lambda_index", r.lambda_index},
                      {"lambda", r.lambda},
                      {"status", r.status},
                      {"trace", r.trace_file},
                      {"allocation", r.allocation_file},
                      {"diagnostics", r.diagnostics_file},
                      {"records", r.records}};
  if (!r.failure.empty()) j["failure"] = r.failure;
  if (r.status != "failed") {
    j["psi_steady"] = r.psi_steady;
    j["steady_iterations"] = r.steady_iterations;
    if (!r.steady_failure.empty()) j["steady_failure"] = r.steady_failure;
    j["psi_at_t0"] = r.psi_at_t0;
    j["alpha_abs"] = r.alpha_abs;
    j["final_alpha_ada"] = r.final_alpha_ada;
    if (r.best_iteration) {
      j["best_iteration"] = *r.best_iteration;
      j["best_t_ms"] = r.best_t_ms;
      j["best_alpha"] = r.best_alpha;
    }
  }
  return j;
}

}  // namespace detail

inline TimelineOptions timeline_options_for(const ExperimentConfig& c, std::array<double, 2> omega,
                                            std::array<double, 3> lambda) {
  TimelineOptions o;
  o.preset = c.preset;
  o.antennas = c.scenario.antennas_per_ap;
  o.targets = targets_for(c, omega);
  o.sca = sca_options_for(c);
  o.n_max = c.resilience.n_max;
  o.scoring = {weights_from(lambda), c.resilience.t0_ms, c.resilience.td_ms, c.resilience.clamp};
  o.clock = clock_for(c);
  o.threshold_fraction = c.solver.threshold_fraction;
  o.epa_an_fraction = c.epa_fraction();
  return o;
}

/// Runs every drop and grid point. `run` uses targets.omega and
/// resilience.lambda; `sweep` takes the grids from the sweep section (a grid
/// that is absent falls back to the single configured point). Per-run
/// failures are recorded, never thrown.
inline ExperimentSummary run_experiment(const ExperimentConfig& c, ExperimentMode mode,
                                        const std::filesystem::path& out_dir, unsigned jobs = 1,
                                        const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  if (mode == ExperimentMode::Sweep && !c.sweep) {
    throw ConfigError("sweep", "the sweep subcommand needs a sweep section");
  }
  std::vector<std::array<double, 2>> omegas{c.targets.omega};
  std::vector<std::array<double, 3>> lambdas{c.resilience.lambda};
  if (mode == ExperimentMode::Sweep) {
    if (!c.sweep->omega.empty()) omegas = c.sweep->omega;
    if (!c.sweep->lambda.empty()) lambdas = c.sweep->lambda;
  }
  // With the fixed clock one timeline per (drop, omega) is re-scored for each
  // lambda; the wall clock needs a fresh run per grid point.
  const bool share = c.resilience.clock == Clock::Mode::Fixed;

  fs::create_directories(out_dir / "traces");
  fs::create_directories(out_dir / "allocations");
  fs::create_directories(out_dir / "diagnostics");

  struct Unit {
    std::size_t d, w;
    std::optional<std::size_t> l;
  };
  std::vector<Unit> units;
  for (std::size_t d = 0; d < c.drops.count; ++d) {
    for (std::size_t w = 0; w < omegas.size(); ++w) {
      if (share) {
        units.push_back({d, w, std::nullopt});
      } else {
        for (std::size_t l = 0; l < lambdas.size(); ++l) units.push_back({d, w, l});
      }
    }
  }

  const std::size_t per_drop = omegas.size() * lambdas.size();
  std::vector<RunOutcome> runs(c.drops.count * per_drop);
  auto slot = [&](std::size_t d, std::size_t w, std::size_t l) -> RunOutcome& {
    return runs[(d * omegas.size() + w) * lambdas.size() + l];
  };
  for (std::size_t d = 0; d < c.drops.count; ++d) {
    for (std::size_t w = 0; w < omegas.size(); ++w) {
      for (std::size_t l = 0; l < lambdas.size(); ++l) {
        auto& r = slot(d, w, l);
        r.drop_index = d;
        r.seed = c.drops.base_seed + d;
        r.omega_index = w;
        r.omega = omegas[w];
        r.lambda_index = l;
        r.lambda = lambdas[l];
      }
    }
  }

  std::mutex io;
  const double noise = c.scenario.noise_power_dbm;

  auto process = [&](const Unit& u) {
    const std::uint64_t seed = c.drops.base_seed + u.d;
    const std::size_t l_first = u.l.value_or(0);
    const std::size_t l_last = u.l ? *u.l + 1 : lambdas.size();
    TimelineResult tl;
    try {
      const auto drop = generate_drop(c.scenario, seed);
      tl = run_outage_timeline(drop, pilots_for(c, false), pilots_for(c, true), p_max_for(c),
                               timeline_options_for(c, omegas[u.w], lambdas[l_first]));
    } catch (const Error& e) {
      for (std::size_t l = l_first; l < l_last; ++l) slot(u.d, u.w, l).failure = e.what();
      if (log) {
        std::lock_guard lock(io);
        log("drop " + std::to_string(u.d) + " omega " + std::to_string(u.w) + ": " + e.what());
      }
      return;
    }

    const std::string diag = "diagnostics/" + detail::run_stem(u.d, u.w, u.l) + ".csv";
    {
      std::lock_guard lock(io);
      detail::write_text(out_dir / diag, [&](std::ostream& os) { write_diagnostics_csv(os, tl.run.sca_records); });
    }
    for (std::size_t l = l_first; l < l_last; ++l) {
      const ResilienceTrace trace =
          l == l_first ? tl.run.trace
                       : rescore(tl.run.trace, {weights_from(lambdas[l]), c.resilience.t0_ms, c.resilience.td_ms,
                                                c.resilience.clamp});
      auto& r = slot(u.d, u.w, l);
      r.status = trace.records.empty() ? "failed" : (trace.failure.empty() ? "ok" : "partial");
      r.failure = trace.failure;
      r.psi_steady = tl.psi_steady;
      r.psi_at_t0 = tl.psi_at_t0;
      r.alpha_abs = trace.alpha_abs;
      r.steady_iterations = tl.steady_iterations;
      r.steady_failure = tl.steady_failure;
      r.records = trace.records.size();
      r.diagnostics_file = diag;
      if (const auto* b = trace.best()) {
        r.best_iteration = b->iteration;
        r.best_t_ms = b->t_ms;
        r.best_alpha = b->alpha_overall;
        r.final_alpha_ada = trace.records.back().alpha_ada;
      }
      const std::string stem = detail::run_stem(u.d, u.w, l);
      r.trace_file = "traces/" + stem + ".csv";
      r.allocation_file = "allocations/" + stem + ".json";

      nlohmann::json alloc = {{"seed", r.seed},
                              {"omega", r.omega},
                              {"lambda", r.lambda},
                              {"preset", to_string(c.preset)},
                              {"noise_power_dbm", noise},
                              {"units", {{"u", "sqrt of noise-normalized power"}, {"power", "mW"}}},
                              {"steady", allocation_json(tl.steady, noise)}};
      if (const auto* b = trace.best()) {
        alloc["best"] = allocation_json(b->alloc, noise);
        alloc["best"]["iteration"] = b->iteration;
        alloc["best"]["t_ms"] = b->t_ms;
        alloc["best"]["psi"] = b->psi;
        const auto& f = trace.records.back();
        alloc["final"] = allocation_json(f.alloc, noise);
        alloc["final"]["iteration"] = f.iteration;
        alloc["final"]["t_ms"] = f.t_ms;
        alloc["final"]["psi"] = f.psi;
      }
      std::lock_guard lock(io);
      detail::write_text(out_dir / r.trace_file, [&](std::ostream& os) { write_trace_csv(os, trace); });
      detail::write_text(out_dir / r.allocation_file, [&](std::ostream& os) { os << alloc.dump(2) << '\n'; });
      if (log) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "drop %zu (seed %llu) omega (%.3g, %.3g) lambda (%.3g, %.3g, %.3g): %s, final alpha_ada %.4f",
                      u.d, static_cast<unsigned long long>(seed), r.omega[0], r.omega[1], r.lambda[0], r.lambda[1],
                      r.lambda[2], r.status.c_str(), r.final_alpha_ada);
        log(buf);
      }
    }
  };

  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, static_cast<unsigned>(units.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) process(units[i]);
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  ExperimentSummary sum;
  sum.runs = std::move(runs);
  sum.drops = c.drops.count;
  nlohmann::json drops = nlohmann::json::array();
  for (std::size_t d = 0; d < c.drops.count; ++d) {
    bool any_ok = false;
    for (std::size_t i = 0; i < per_drop; ++i) any_ok = any_ok || sum.runs[d * per_drop + i].status != "failed";
    if (!any_ok) ++sum.failed_drops;
    drops.push_back({{"index", d}, {"seed", c.drops.base_seed + d}, {"status", any_ok ? "ok" : "failed"}});
  }
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : sum.runs) runs_json.push_back(detail::outcome_json(r));
  sum.manifest = {{"format", 1},
                  {"mode", mode == ExperimentMode::Run ? "run" : "sweep"},
                  {"config_hash", hex(config_hash(c))},
                  {"config", to_json(c)},
                  {"preset", to_string(c.preset)},
                  {"clock", to_string(c.resilience.clock)},
                  {"t0_ms", c.resilience.t0_ms},
                  {"td_ms", c.resilience.td_ms},
                  {"trace_header", kTraceHeader},
                  {"omega_grid", omegas},
                  {"lambda_grid", lambdas},
                  {"drops", drops},
                  {"failed_drops", sum.failed_drops},
                  {"runs", runs_json}};
  detail::write_text(out_dir / "manifest.json", [&](std::ostream& os) { os << sum.manifest.dump(2) << '\n'; });
  return sum;
}

}  // namespace cfres
