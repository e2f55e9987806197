#pragma once

#include <cmath>

namespace cfres::units {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_mw(double dbm) { return db_to_linear(dbm); }

/// Power in mW expressed relative to the noise power (given in dBm).
inline double normalized_power(double power_mw, double noise_dbm) {
  return power_mw / dbm_to_mw(noise_dbm);
}

inline double to_mw(double normalized, double noise_dbm) {
  return normalized * dbm_to_mw(noise_dbm);
}

}  // namespace cfres::units
