#pragma once

// Experiment configuration: a JSON tree with defaults for every key, strict
// key checking, and a stable hash of the resolved values.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfres/channel.hpp"
#include "cfres/error.hpp"
#include "cfres/resilience.hpp"
#include "cfres/sca.hpp"
#include "cfres/scenario.hpp"
#include "cfres/units.hpp"

namespace cfres {

using Json = nlohmann::json;

struct PilotSettings {
  std::optional<std::size_t> tau_p;  // defaults to K
  double user_power_mw = 100.0;
  double eve_power_mw = 100.0;
  std::size_t attacked_user = 1;     // 1-based
};

struct TargetSettings {
  double sse_des = 3.0;
  std::vector<double> se_des{5.0};  // one value broadcasts to every user
  std::vector<double> se_min{0.1};
  std::array<double, 2> omega{0.5, 0.5};
};

struct ResilienceSettings {
  std::array<double, 3> lambda{0.0, 1.0, 0.0};
  double t0_ms = 500.0;
  double td_ms = 500.0;
  std::size_t n_max = 50;
  Clock::Mode clock = Clock::Mode::Fixed;
  double clock_step_ms = 100.0;
  bool clamp = false;
};

struct SolverSettings {
  double threshold_fraction = 0.1;
  double epsilon_floor = 1e-9;
  double psi_tolerance = 1e-5;
  std::size_t steady_max_iterations = 50;
  double gap_tol = 1e-8;
  double feas_tol = 1e-9;
  int max_iterations = 100;
  RateEncoding rate_encoding = RateEncoding::Exponential;
  std::size_t pwl_segments = 48;
  double pwl_g_max = 1e4;
  double eps_d = 1e-3;
  double x_floor_factor = 1e-6;
  bool sse_restoration = true;
};

struct SweepSettings {
  std::vector<std::array<double, 2>> omega;
  std::vector<std::array<double, 3>> lambda;
};

struct DropSettings {
  std::size_t count = 1;
  std::uint64_t base_seed = 1;
};

struct ValidateSettings {
  std::size_t L = 2;
  std::size_t K = 3;
  std::size_t samples = 100000;
  std::uint64_t seed = 7;
  double k_sigma = 5.0;
  std::size_t grid_seeds = 20;
  double grid_step = 1e-3;
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  PilotSettings pilots;
  double p_max_mw = 200.0;
  TargetSettings targets;
  ResilienceSettings resilience;
  SolverSettings solver;
  std::optional<SweepSettings> sweep;
  DropSettings drops;
  Preset preset = Preset::Full;
  std::optional<double> epa_an_fraction;  // defaults to 1 / (K + 1)
  ValidateSettings validate;

  std::size_t tau_p() const { return pilots.tau_p.value_or(scenario.num_users); }
  double epa_fraction() const {
    return epa_an_fraction.value_or(1.0 / static_cast<double>(scenario.num_users + 1));
  }
};

inline const char* to_string(RateEncoding e) {
  return e == RateEncoding::Exponential ? "exponential" : "piecewise_linear";
}

namespace detail {

/// Walks one JSON object, remembers which keys were read, and rejects the rest.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(display(), "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <class T>
  void number(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return;
    out = as_number<T>(*v, key_path(key));
  }

  void boolean(const std::string& key, bool& out) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_boolean()) throw ConfigError(key_path(key), "expected true or false");
    out = v->get<bool>();
  }

  void text(const std::string& key, std::string& out) {
    const Json* v = find(key);
    if (!v) return;
    if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
    out = v->get<std::string>();
  }

  template <std::size_t N>
  void fixed_array(const std::string& key, std::array<double, N>& out) {
    const Json* v = find(key);
    if (!v) return;
    out = as_array<N>(*v, key_path(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }
  }

  template <class T>
  static T as_number(const Json& v, const std::string& path) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
      return static_cast<T>(d);
    } else {
      if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
      if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(path, "must be >= 0");
        return static_cast<T>(v.get<std::int64_t>());
      }
      throw ConfigError(path, "expected a non-negative integer");
    }
  }

  template <std::size_t N>
  static std::array<double, N> as_array(const Json& v, const std::string& path) {
    if (!v.is_array() || v.size() != N) {
      throw ConfigError(path, "expected an array of " + std::to_string(N) + " numbers");
    }
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = as_number<double>(v[i], path);
    return out;
  }

  static std::vector<double> as_scalar_or_vector(const Json& v, const std::string& path) {
    if (v.is_number()) return {as_number<double>(v, path)};
    if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a number or a nonempty array");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(as_number<double>(e, path));
    return out;
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

inline bool on_simplex(const double* w, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(w[i] >= 0.0)) return false;
    sum += w[i];
  }
  return std::abs(sum - 1.0) <= 1e-9;
}

}  // namespace detail

inline Preset parse_preset(const std::string& s, const std::string& path = "preset") {
  if (s == "full") return Preset::Full;
  if (s == "opa_no_an") return Preset::OpaNoAn;
  if (s == "epa_an") return Preset::EpaAn;
  throw ConfigError(path, "unknown preset '" + s + "' (expected full, opa_no_an or epa_an)");
}

inline Clock::Mode parse_clock(const std::string& s, const std::string& path = "resilience.clock") {
  if (s == "fixed") return Clock::Mode::Fixed;
  if (s == "wall") return Clock::Mode::Wall;
  throw ConfigError(path, "unknown clock '" + s + "' (expected fixed or wall)");
}

/// Range and consistency checks; every failure names its key path.
inline void validate(const ExperimentConfig& c) {
  using detail::require;
  const auto& s = c.scenario;
  require(s.area_side_m > 0.0, "scenario.area_side_m", "must be > 0");
  require(s.num_aps >= 1, "scenario.L", "must be >= 1");
  require(s.antennas_per_ap >= 2, "scenario.M", "must be >= 2");
  require(s.num_users >= 1, "scenario.K", "must be >= 1");
  require(s.eve_radius_m >= 0.0, "scenario.eve_radius_m", "must be >= 0");
  require(s.shadow_sigma_db >= 0.0, "scenario.shadow_sigma_db", "must be >= 0");

  const std::size_t K = s.num_users;
  require(c.tau_p() >= K, "pilots.tau_p", "must be >= K");
  require(c.pilots.user_power_mw >= 0.0, "pilots.user_power_mw", "must be >= 0");
  require(c.pilots.eve_power_mw > 0.0, "pilots.eve_power_mw", "must be > 0 (the outage is the attack)");
  require(c.pilots.attacked_user >= 1 && c.pilots.attacked_user <= K, "pilots.attacked_user",
          "must lie in 1..K");
  require(c.p_max_mw > 0.0, "power.p_max_mw", "must be > 0");

  const auto& t = c.targets;
  require(t.sse_des > 0.0, "targets.sse_des", "must be > 0");
  require(t.se_des.size() == 1 || t.se_des.size() == K, "targets.se_des", "needs 1 or K entries");
  require(t.se_min.size() == 1 || t.se_min.size() == K, "targets.se_min", "needs 1 or K entries");
  for (double v : t.se_des) require(v > 0.0, "targets.se_des", "entries must be > 0");
  for (double v : t.se_min) require(v >= 0.0, "targets.se_min", "entries must be >= 0");
  require(detail::on_simplex(t.omega.data(), 2), "targets.omega", "weights must be >= 0 and sum to 1");

  const auto& r = c.resilience;
  require(detail::on_simplex(r.lambda.data(), 3), "resilience.lambda", "weights must be >= 0 and sum to 1");
  require(r.t0_ms >= 0.0, "resilience.t0_ms", "must be >= 0");
  require(r.td_ms > 0.0, "resilience.td_ms", "must be > 0");
  require(r.n_max >= 1, "resilience.n_max", "must be >= 1");
  require(r.clock_step_ms > 0.0, "resilience.clock_step_ms", "must be > 0");

  const auto& v = c.solver;
  require(v.threshold_fraction > 0.0 && v.threshold_fraction <= 1.0, "solver.threshold_fraction",
          "must lie in (0, 1]");
  require(v.epsilon_floor > 0.0, "solver.epsilon_floor", "must be > 0");
  require(v.psi_tolerance >= 0.0, "solver.psi_tolerance", "must be >= 0");
  require(v.steady_max_iterations >= 1, "solver.steady_max_iterations", "must be >= 1");
  require(v.gap_tol > 0.0, "solver.gap_tol", "must be > 0");
  require(v.feas_tol > 0.0, "solver.feas_tol", "must be > 0");
  require(v.max_iterations >= 1, "solver.max_iterations", "must be >= 1");
  require(v.pwl_segments >= 2, "solver.pwl_segments", "must be >= 2");
  require(v.pwl_g_max > 0.0, "solver.pwl_g_max", "must be > 0");
  require(v.eps_d > 0.0, "solver.eps_d", "must be > 0");
  require(v.x_floor_factor > 0.0, "solver.x_floor_factor", "must be > 0");

  if (c.sweep) {
    require(!c.sweep->omega.empty() || !c.sweep->lambda.empty(), "sweep", "needs a nonempty omega or lambda grid");
    for (const auto& w : c.sweep->omega) {
      require(detail::on_simplex(w.data(), 2), "sweep.omega", "every point must be >= 0 and sum to 1");
    }
    for (const auto& w : c.sweep->lambda) {
      require(detail::on_simplex(w.data(), 3), "sweep.lambda", "every point must be >= 0 and sum to 1");
    }
  }
  require(c.drops.count >= 1, "drops.count", "must be >= 1");
  if (c.epa_an_fraction) {
    require(*c.epa_an_fraction >= 0.0 && *c.epa_an_fraction < 1.0, "epa_an_fraction", "must lie in [0, 1)");
  }
  const auto& q = c.validate;
  require(q.L >= 1 && q.L <= 4, "validate.L", "must lie in 1..4");
  require(q.K >= 1 && q.K <= 4, "validate.K", "must lie in 1..4");
  require(q.samples >= 1000, "validate.samples", "must be >= 1000");
  require(q.k_sigma > 0.0, "validate.k_sigma", "must be > 0");
  require(q.grid_step > 0.0 && q.grid_step <= 0.1, "validate.grid_step", "must lie in (0, 0.1]");
}

inline ExperimentConfig parse_config(const Json& root) {
  using detail::ObjectReader;
  ExperimentConfig c;
  ObjectReader top(root, "");

  if (const Json* j = top.find("scenario")) {
    ObjectReader r(*j, "scenario");
    r.number("area_side_m", c.scenario.area_side_m);
    r.number("L", c.scenario.num_aps);
    r.number("M", c.scenario.antennas_per_ap);
    r.number("K", c.scenario.num_users);
    r.number("eve_radius_m", c.scenario.eve_radius_m);
    r.number("pathloss_intercept_db", c.scenario.pathloss_intercept_db);
    r.number("pathloss_exponent_db_per_decade", c.scenario.pathloss_exponent_db_per_decade);
    r.number("shadow_sigma_db", c.scenario.shadow_sigma_db);
    r.number("noise_power_dbm", c.scenario.noise_power_dbm);
    r.finish();
  }
  if (const Json* j = top.find("pilots")) {
    ObjectReader r(*j, "pilots");
    std::size_t tau = 0;
    if (r.find("tau_p")) {
      r.number("tau_p", tau);
      c.pilots.tau_p = tau;
    }
    r.number("user_power_mw", c.pilots.user_power_mw);
    r.number("eve_power_mw", c.pilots.eve_power_mw);
    r.number("attacked_user", c.pilots.attacked_user);
    r.finish();
  }
  if (const Json* j = top.find("power")) {
    ObjectReader r(*j, "power");
    r.number("p_max_mw", c.p_max_mw);
    r.finish();
  }
  if (const Json* j = top.find("targets")) {
    ObjectReader r(*j, "targets");
    r.number("sse_des", c.targets.sse_des);
    if (const Json* v = r.find("se_des")) c.targets.se_des = ObjectReader::as_scalar_or_vector(*v, "targets.se_des");
    if (const Json* v = r.find("se_min")) c.targets.se_min = ObjectReader::as_scalar_or_vector(*v, "targets.se_min");
    r.fixed_array("omega", c.targets.omega);
    r.finish();
  }
  if (const Json* j = top.find("resilience")) {
    ObjectReader r(*j, "resilience");
    r.fixed_array("lambda", c.resilience.lambda);
    r.number("t0_ms", c.resilience.t0_ms);
    r.number("td_ms", c.resilience.td_ms);
    r.number("n_max", c.resilience.n_max);
    std::string clock;
    r.text("clock", clock);
    if (!clock.empty()) c.resilience.clock = parse_clock(clock);
    r.number("clock_step_ms", c.resilience.clock_step_ms);
    r.boolean("clamp", c.resilience.clamp);
    r.finish();
  }
  if (const Json* j = top.find("solver")) {
    ObjectReader r(*j, "solver");
    r.number("threshold_fraction", c.solver.threshold_fraction);
    r.number("epsilon_floor", c.solver.epsilon_floor);
    r.number("psi_tolerance", c.solver.psi_tolerance);
    r.number("steady_max_iterations", c.solver.steady_max_iterations);
    r.number("gap_tol", c.solver.gap_tol);
    r.number("feas_tol", c.solver.feas_tol);
    r.number("max_iterations", c.solver.max_iterations);
    std::string enc;
    r.text("rate_encoding", enc);
    if (enc == "piecewise_linear") {
      c.solver.rate_encoding = RateEncoding::PiecewiseLinear;
    } else if (!enc.empty() && enc != "exponential") {
      throw ConfigError("solver.rate_encoding", "expected exponential or piecewise_linear");
    }
    r.number("pwl_segments", c.solver.pwl_segments);
    r.number("pwl_g_max", c.solver.pwl_g_max);
    r.number("eps_d", c.solver.eps_d);
    r.number("x_floor_factor", c.solver.x_floor_factor);
    r.boolean("sse_restoration", c.solver.sse_restoration);
    r.finish();
  }
  if (const Json* j = top.find("sweep"); j && !j->is_null()) {
    ObjectReader r(*j, "sweep");
    SweepSettings s;
    auto grid = [&](const char* key, auto& out) {
      const Json* v = r.find(key);
      if (!v) return;
      const std::string path = std::string("sweep.") + key;
      if (!v->is_array() || v->empty()) throw ConfigError(path, "expected a nonempty array of points");
      for (const auto& p : *v) {
        out.push_back(ObjectReader::as_array<std::tuple_size_v<typename std::decay_t<decltype(out)>::value_type>>(
            p, path));
      }
    };
    grid("omega", s.omega);
    grid("lambda", s.lambda);
    r.finish();
    c.sweep = std::move(s);
  }
  if (const Json* j = top.find("drops")) {
    ObjectReader r(*j, "drops");
    r.number("count", c.drops.count);
    r.number("base_seed", c.drops.base_seed);
    r.finish();
  }
  std::string preset;
  top.text("preset", preset);
  if (!preset.empty()) c.preset = parse_preset(preset);
  if (const Json* v = top.find("epa_an_fraction")) {
    c.epa_an_fraction = ObjectReader::as_number<double>(*v, "epa_an_fraction");
  }
  if (const Json* j = top.find("validate")) {
    ObjectReader r(*j, "validate");
    r.number("L", c.validate.L);
    r.number("K", c.validate.K);
    r.number("samples", c.validate.samples);
    r.number("seed", c.validate.seed);
    r.number("k_sigma", c.validate.k_sigma);
    r.number("grid_seeds", c.validate.grid_seeds);
    r.number("grid_step", c.validate.grid_step);
    r.finish();
  }
  top.finish();
  validate(c);
  return c;
}

/// Parses text; empty or whitespace-only input gives the defaults.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_config(Json::object());
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", source + ": " + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<root>", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Fully resolved tree: every key present, defaults filled in.
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["scenario"] = {{"area_side_m", c.scenario.area_side_m},
                   {"L", c.scenario.num_aps},
                   {"M", c.scenario.antennas_per_ap},
                   {"K", c.scenario.num_users},
                   {"eve_radius_m", c.scenario.eve_radius_m},
                   {"pathloss_intercept_db", c.scenario.pathloss_intercept_db},
                   {"pathloss_exponent_db_per_decade", c.scenario.pathloss_exponent_db_per_decade},
                   {"shadow_sigma_db", c.scenario.shadow_sigma_db},
                   {"noise_power_dbm", c.scenario.noise_power_dbm}};
  j["pilots"] = {{"tau_p", c.tau_p()},
                 {"user_power_mw", c.pilots.user_power_mw},
                 {"eve_power_mw", c.pilots.eve_power_mw},
                 {"attacked_user", c.pilots.attacked_user}};
  j["power"] = {{"p_max_mw", c.p_max_mw}};
  j["targets"] = {{"sse_des", c.targets.sse_des},
                  {"se_des", c.targets.se_des},
                  {"se_min", c.targets.se_min},
                  {"omega", c.targets.omega}};
  j["resilience"] = {{"lambda", c.resilience.lambda},
                     {"t0_ms", c.resilience.t0_ms},
                     {"td_ms", c.resilience.td_ms},
                     {"n_max", c.resilience.n_max},
                     {"clock", to_string(c.resilience.clock)},
                     {"clock_step_ms", c.resilience.clock_step_ms},
                     {"clamp", c.resilience.clamp}};
  j["solver"] = {{"threshold_fraction", c.solver.threshold_fraction},
                 {"epsilon_floor", c.solver.epsilon_floor},
                 {"psi_tolerance", c.solver.psi_tolerance},
                 {"steady_max_iterations", c.solver.steady_max_iterations},
                 {"gap_tol", c.solver.gap_tol},
                 {"feas_tol", c.solver.feas_tol},
                 {"max_iterations", c.solver.max_iterations},
                 {"rate_encoding", to_string(c.solver.rate_encoding)},
                 {"pwl_segments", c.solver.pwl_segments},
                 {"pwl_g_max", c.solver.pwl_g_max},
                 {"eps_d", c.solver.eps_d},
                 {"x_floor_factor", c.solver.x_floor_factor},
                 {"sse_restoration", c.solver.sse_restoration}};
  if (c.sweep) {
    j["sweep"] = Json::object();
    if (!c.sweep->omega.empty()) j["sweep"]["omega"] = c.sweep->omega;
    if (!c.sweep->lambda.empty()) j["sweep"]["lambda"] = c.sweep->lambda;
  } else {
    j["sweep"] = nullptr;
  }
  j["drops"] = {{"count", c.drops.count}, {"base_seed", c.drops.base_seed}};
  j["preset"] = to_string(c.preset);
  j["epa_an_fraction"] = c.epa_fraction();
  j["validate"] = {{"L", c.validate.L},
                   {"K", c.validate.K},
                   {"samples", c.validate.samples},
                   {"seed", c.validate.seed},
                   {"k_sigma", c.validate.k_sigma},
                   {"grid_seeds", c.validate.grid_seeds},
                   {"grid_step", c.validate.grid_step}};
  return j;
}

/// FNV-1a (64 bit) over the canonical dump of the resolved tree.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Conversions into library types. Powers leave here noise-normalized.

inline double noise_normalized(const ExperimentConfig& c, double mw) {
  return units::normalized_power(mw, c.scenario.noise_power_dbm);
}

inline PilotConfig pilots_for(const ExperimentConfig& c, bool attack) {
  return PilotConfig::uniform(c.scenario.num_users, c.tau_p(), noise_normalized(c, c.pilots.user_power_mw),
                              attack ? noise_normalized(c, c.pilots.eve_power_mw) : 0.0,
                              c.pilots.attacked_user - 1);
}

inline Eigen::VectorXd p_max_for(const ExperimentConfig& c) {
  return Eigen::VectorXd::Constant(static_cast<Index>(c.scenario.num_aps), noise_normalized(c, c.p_max_mw));
}

inline ServiceTargets targets_for(const ExperimentConfig& c, std::array<double, 2> omega) {
  const auto K = static_cast<Index>(c.scenario.num_users);
  auto expand = [&](const std::vector<double>& v) {
    return v.size() == 1 ? Eigen::VectorXd::Constant(K, v[0]) : Eigen::Map<const Eigen::VectorXd>(v.data(), K).eval();
  };
  ServiceTargets t;
  t.sse_des = c.targets.sse_des;
  t.se_des = expand(c.targets.se_des);
  t.se_min = expand(c.targets.se_min);
  t.omega1 = omega[0];
  t.omega2 = omega[1];
  return t;
}

inline ScaOptions sca_options_for(const ExperimentConfig& c) {
  ScaOptions o;
  o.max_iterations = c.solver.steady_max_iterations;
  o.psi_tolerance = c.solver.psi_tolerance;
  o.rate_encoding = c.solver.rate_encoding;
  o.pwl_segments = c.solver.pwl_segments;
  o.pwl_g_max = c.solver.pwl_g_max;
  o.eps_d = c.solver.eps_d;
  o.x_floor_factor = c.solver.x_floor_factor;
  o.sse_restoration = c.solver.sse_restoration;
  o.epsilon_floor = c.solver.epsilon_floor;
  o.solver.gap_tol = c.solver.gap_tol;
  o.solver.rel_gap_tol = c.solver.gap_tol;
  o.solver.feas_tol = c.solver.feas_tol;
  o.solver.max_iterations = c.solver.max_iterations;
  return o;
}

inline Clock clock_for(const ExperimentConfig& c) {
  return c.resilience.clock == Clock::Mode::Fixed ? Clock::fixed(c.resilience.clock_step_ms) : Clock::wall();
}

inline ResilienceWeights weights_from(const std::array<double, 3>& l) { return {l[0], l[1], l[2]}; }

}  // namespace cfres
