// cfres: drops, outage experiments, sweeps and oracle validation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfres/cfres.hpp"

namespace {

using namespace cfres;
namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string clock;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool out_required) {
  cmd->add_option("--config", f.config, "JSON config file (empty or absent: defaults)");
  auto* out = cmd->add_option("--out", f.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", f.seed, "base seed (overrides drops.base_seed)");
  cmd->add_option("--preset", f.preset, "full, opa_no_an or epa_an")
      ->check(CLI::IsMember({"full", "opa_no_an", "epa_an"}));
  cmd->add_option("--clock", f.clock, "fixed or wall")->check(CLI::IsMember({"fixed", "wall"}));
}

ExperimentConfig resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? parse_config_text("") : load_config(f.config);
  if (f.seed) c.drops.base_seed = *f.seed;
  if (!f.preset.empty()) c.preset = parse_preset(f.preset, "--preset");
  if (!f.clock.empty()) c.resilience.clock = parse_clock(f.clock, "--clock");
  validate(c);
  return c;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json j = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(r, k));
    j.push_back(row);
  }
  return j;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

int cmd_drop(const CommonFlags& f) {
  const auto c = resolve(f);
  const std::uint64_t seed = c.drops.base_seed;
  const auto drop = generate_drop(c.scenario, seed);
  const auto stats = estimation_quality(drop, pilots_for(c, true));
  const auto part = partition_users(stats, c.scenario.antennas_per_ap, c.solver.threshold_fraction);
  const auto start = initial_point(stats, part, p_max_for(c), c.solver.epsilon_floor);
  const auto rep = evaluate(start.u, stats, part);

  auto points = [](const std::vector<Point2>& ps) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : ps) j.push_back({p.x, p.y});
    return j;
  };
  nlohmann::json strong = nlohmann::json::array();
  for (const auto& s : part.strong) {
    nlohmann::json row = nlohmann::json::array();
    for (Index k : s) row.push_back(k + 1);
    strong.push_back(row);
  }
  Eigen::MatrixXd beta_db = drop.beta_users.array().log10() * 10.0;
  Eigen::VectorXd beta_eve_db = drop.beta_eve.array().log10() * 10.0;
  nlohmann::json j = {
      {"seed", seed},
      {"L", drop.num_aps()},
      {"K", drop.num_users()},
      {"M", c.scenario.antennas_per_ap},
      {"ap_positions_m", points(drop.ap_positions)},
      {"user_positions_m", points(drop.user_positions)},
      {"eve_position_m", {drop.eve_position.x, drop.eve_position.y}},
      {"eve_distance_to_user1_m", distance(drop.eve_position, drop.user_positions.front())},
      {"beta_users_db", matrix_json(beta_db)},
      {"beta_eve_db", vector_json(beta_eve_db)},
      {"gamma_users", matrix_json(stats.gamma_users)},
      {"gamma_eve", vector_json(stats.gamma_eve)},
      {"strong_users_per_ap", strong},
      {"even_split_under_attack",
       {{"se_users", vector_json(rep.se_users)}, {"se_eve", *rep.se_eve}, {"sse", *rep.sse_target}}}};
  if (f.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    fs::create_directories(f.out);
    std::ofstream(fs::path(f.out) / "drop.json") << j.dump(2) << '\n';
    std::cerr << "wrote " << (fs::path(f.out) / "drop.json").string() << '\n';
  }
  return 0;
}

int cmd_experiment(const CommonFlags& f, ExperimentMode mode, unsigned jobs, bool quiet) {
  const auto c = resolve(f);
  auto log = [&](const std::string& s) {
    if (!quiet) std::cerr << s << '\n';
  };
  const auto sum = run_experiment(c, mode, f.out, jobs, log);
  std::size_t failed = 0;
  for (const auto& r : sum.runs) failed += r.status == "failed";
  std::cerr << sum.runs.size() << " runs, " << failed << " failed, " << sum.failed_drops << "/" << sum.drops
            << " drops failed; manifest " << (fs::path(f.out) / "manifest.json").string() << '\n';
  return sum.all_failed() ? 1 : 0;
}

int cmd_validate(const CommonFlags& f) {
  const auto c = resolve(f);
  const auto rep = run_validation(c);
  nlohmann::json terms = nlohmann::json::array();
  std::printf("%-22s %14s %14s %12s %8s  %s\n", "term", "closed_form", "estimate", "std_error", "z", "result");
  for (const auto& t : rep.oracle.terms) {
    const double z = t.std_error > 0.0 ? t.deviation() / t.std_error : 0.0;
    const bool ok = t.within(rep.k_sigma);
    std::printf("%-22s %14.6g %14.6g %12.3g %8.2f  %s\n", t.name.c_str(), t.closed_form, t.estimate, t.std_error, z,
                ok ? "PASS" : "FAIL");
    terms.push_back({{"name", t.name},
                     {"closed_form", t.closed_form},
                     {"estimate", t.estimate},
                     {"std_error", t.std_error},
                     {"pass", ok}});
  }
  const auto zero_fail = rep.zero_power_failures();
  std::printf("zero-power interference terms exactly 0: %s\n", zero_fail.empty() ? "PASS" : "FAIL");
  for (const auto& t : zero_fail) std::printf("  %s closed %g estimate %g\n", t.name.c_str(), t.closed_form, t.estimate);

  nlohmann::json grid = nlohmann::json::array();
  std::printf("%-6s %14s %14s %6s  %s\n", "seed", "grid_psi", "sca_psi", "iters", "status");
  for (const auto& g : rep.grid) {
    std::printf("%-6llu %14.6g %14.6g %6zu  %s%s%s\n", static_cast<unsigned long long>(g.seed), g.grid_psi, g.sca_psi,
                g.sca_iterations, g.status.c_str(), g.note.empty() ? "" : ": ", g.note.c_str());
    grid.push_back({{"seed", g.seed},
                    {"grid_psi", std::isfinite(g.grid_psi) ? nlohmann::json(g.grid_psi) : nlohmann::json(nullptr)},
                    {"sca_psi", g.sca_psi},
                    {"status", g.status},
                    {"pass", g.passed()}});
  }
  const bool ok = rep.passed();
  std::printf("validate: %s\n", ok ? "PASS" : "FAIL");
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    nlohmann::json j = {{"config_hash", hex(config_hash(c))},
                        {"samples", rep.oracle.samples},
                        {"k_sigma", rep.k_sigma},
                        {"terms", terms},
                        {"zero_power_pass", zero_fail.empty()},
                        {"grid", grid},
                        {"pass", ok}};
    std::ofstream(fs::path(f.out) / "validate.json") << j.dump(2) << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure cell-free massive MIMO power allocation with resilience scoring"};
  app.require_subcommand(1);

  CommonFlags drop_f, run_f, sweep_f, val_f;
  unsigned jobs = 1;
  bool quiet = false;

  auto* drop = app.add_subcommand("drop", "emit a network drop summary (JSON)");
  add_common(drop, drop_f, false);
  auto* run = app.add_subcommand("run", "outage experiment at the configured omega and lambda");
  add_common(run, run_f, true);
  auto* sweep = app.add_subcommand("sweep", "outage experiment over the sweep grids");
  add_common(sweep, sweep_f, true);
  for (auto* cmd : {run, sweep}) {
    cmd->add_option("--jobs", jobs, "parallel work items (0: one per core)");
    cmd->add_flag("--quiet", quiet, "no per-run progress lines");
  }
  auto* val = app.add_subcommand("validate", "closed-form and grid oracles on small instances");
  add_common(val, val_f, false);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*drop) return cmd_drop(drop_f);
    if (*run) return cmd_experiment(run_f, ExperimentMode::Run, jobs, quiet);
    if (*sweep) return cmd_experiment(sweep_f, ExperimentMode::Sweep, jobs, quiet);
    if (*val) return cmd_validate(val_f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
