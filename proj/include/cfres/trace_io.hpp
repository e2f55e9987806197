#pragma once

// Trace tables (CSV), allocation documents and per-iteration diagnostics.

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfres/error.hpp"
#include "cfres/ppzf.hpp"
#include "cfres/resilience.hpp"
#include "cfres/sca.hpp"
#include "cfres/units.hpp"

namespace cfres {

inline constexpr const char* kTraceHeader = "iter,t_ms,psi,alpha_ada,alpha_rec,alpha_overall,is_best";

struct TraceRow {
  std::size_t iter = 0;
  double t_ms = 0.0;
  double psi = 0.0;
  double alpha_ada = 0.0;
  double alpha_rec = 0.0;
  double alpha_overall = 0.0;
  bool is_best = false;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

inline std::vector<TraceRow> trace_rows(const ResilienceTrace& t) {
  std::vector<TraceRow> rows;
  rows.reserve(t.records.size());
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    const auto& r = t.records[i];
    rows.push_back({r.iteration, r.t_ms, r.psi, r.alpha_ada, r.alpha_rec, r.alpha_overall, t.best_index == i});
  }
  return rows;
}

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::invalid_argument(s);
  return v;
}

}  // namespace detail

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << kTraceHeader << '\n';
  for (const auto& r : rows) {
    out << r.iter << ',' << detail::exact(r.t_ms) << ',' << detail::exact(r.psi) << ','
        << detail::exact(r.alpha_ada) << ',' << detail::exact(r.alpha_rec) << ','
        << detail::exact(r.alpha_overall) << ',' << (r.is_best ? 1 : 0) << '\n';
  }
}

inline void write_trace_csv(std::ostream& out, const ResilienceTrace& t) { write_trace_csv(out, trace_rows(t)); }

inline std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw InvalidArgument("trace: header must be '" + std::string(kTraceHeader) + "'");
  }
  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) {
      throw InvalidArgument("trace: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected 7");
    }
    try {
      TraceRow r;
      r.iter = static_cast<std::size_t>(std::stoull(cells[0]));
      r.t_ms = detail::parse_double(cells[1]);
      r.psi = detail::parse_double(cells[2]);
      r.alpha_ada = detail::parse_double(cells[3]);
      r.alpha_rec = detail::parse_double(cells[4]);
      r.alpha_overall = detail::parse_double(cells[5]);
      if (cells[6] != "0" && cells[6] != "1") throw std::invalid_argument("is_best");
      r.is_best = cells[6] == "1";
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw InvalidArgument("trace: malformed value on line " + std::to_string(line_no));
    }
  }
  return rows;
}

/// u in noise-normalized amplitude units plus the matching powers in mW.
inline nlohmann::json allocation_json(const PowerAllocation& a, double noise_dbm) {
  nlohmann::json u = nlohmann::json::array();
  nlohmann::json p = nlohmann::json::array();
  for (Index l = 0; l < a.u_users.rows(); ++l) {
    nlohmann::json ur = nlohmann::json::array();
    nlohmann::json pr = nlohmann::json::array();
    for (Index k = 0; k < a.u_users.cols(); ++k) {
      ur.push_back(a.u_users(l, k));
      pr.push_back(units::to_mw(a.u_users(l, k) * a.u_users(l, k), noise_dbm));
    }
    u.push_back(ur);
    p.push_back(pr);
  }
  nlohmann::json uan = nlohmann::json::array();
  nlohmann::json pan = nlohmann::json::array();
  for (Index l = 0; l < a.u_an.size(); ++l) {
    uan.push_back(a.u_an(l));
    pan.push_back(units::to_mw(a.u_an(l) * a.u_an(l), noise_dbm));
  }
  return {{"u_users", u}, {"u_an", uan}, {"power_mw_users", p}, {"power_mw_an", pan}};
}

inline PowerAllocation allocation_from_json(const nlohmann::json& j) {
  const auto& u = j.at("u_users");
  const auto L = static_cast<Index>(u.size());
  const auto K = L ? static_cast<Index>(u.at(0).size()) : 0;
  PowerAllocation a = PowerAllocation::zeros(L, K);
  for (Index l = 0; l < L; ++l) {
    for (Index k = 0; k < K; ++k) a.u_users(l, k) = u.at(l).at(k).get<double>();
    a.u_an(l) = j.at("u_an").at(l).get<double>();
  }
  return a;
}

inline constexpr const char* kDiagnosticsHeader =
    "iter,psi,surrogate_psi,sse,se_attacked,se_eve,min_se_other,relaxed,reduced_accuracy,"
    "solver_iterations,phase1_iterations,solver_gap,max_violation,solve_ms";

/// One line per SCA iterate: objective, constraint residuals and solve time.
inline void write_diagnostics_csv(std::ostream& out, const std::vector<ScaRecord>& recs) {
  out << kDiagnosticsHeader << '\n';
  using detail::exact;
  for (const auto& r : recs) {
    const auto& rep = r.report;
    const auto a = static_cast<Index>(rep.attacked_user);
    double min_other = std::numeric_limits<double>::quiet_NaN();
    for (Index k = 0; k < rep.se_users.size(); ++k) {
      if (k != a && !(rep.se_users(k) >= min_other)) min_other = rep.se_users(k);
    }
    out << r.iteration << ',' << exact(r.psi) << ',' << exact(r.surrogate_psi) << ','
        << (rep.sse_target ? exact(*rep.sse_target) : "") << ',' << exact(rep.se_users(a)) << ','
        << (rep.se_eve ? exact(*rep.se_eve) : "") << ',' << (std::isnan(min_other) ? "" : exact(min_other)) << ','
        << (r.relaxed ? 1 : 0) << ',' << (r.reduced_accuracy ? 1 : 0) << ',' << r.newton_iterations << ','
        << r.phase1_iterations << ',' << exact(r.solver_gap) << ',' << exact(r.max_violation) << ','
        << exact(r.solve_ms) << '\n';
  }
}

}  // namespace cfres
