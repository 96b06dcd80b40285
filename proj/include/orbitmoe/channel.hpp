// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Satellite-ground uplink model: visibility, large-scale fading, Doppler,
// Rician small-scale fading, capacity and per-window byte budgets.
//
// Angles are in degrees at the API boundary. Powers are dBm, gains dBi,
// losses dB (positive = attenuation).

#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "orbitmoe/common.hpp"

namespace orbitmoe {

struct LinkBudget {
  double tx_power_dbm = 23.0;
  double sat_gain_dbi = 40.0;
  double bandwidth_hz = 5e6;
  double wavelength_m = 0.15;
  double noise_dbm = -97.0;
  double min_elevation_deg = 10.0;
  double rician_k_db = 10.0;  // +inf gives a deterministic line-of-sight channel
  double shadow_db = 0.0;
  double rain_phase_rad = 0.0;
  double atmos_coeff_db = 0.0;  // A(theta) = atmos_coeff_db / sin(theta)
  // Replaces the free-space term lambda / (4 pi d) with a fixed loss.
  std::optional<double> path_loss_db;

  void validate() const {
    if (!(bandwidth_hz > 0.0)) throw ConfigError("link: bandwidth must be positive");
    if (!(min_elevation_deg > 0.0 && min_elevation_deg < 90.0)) throw ConfigError("link: min elevation must lie in (0, 90)");
    if (!std::isfinite(noise_dbm)) throw ConfigError("link: noise power must be finite");
    if (!(wavelength_m > 0.0)) throw ConfigError("link: wavelength must be positive");
  }

  friend bool operator==(const LinkBudget&, const LinkBudget&) = default;
};

struct GeometryModel {
  double altitude_m = 600e3;
  double earth_radius_m = 6371e3;
  std::optional<double> orbital_velocity_mps;  // default: circular-orbit speed
  std::vector<double> pass_elevation_deg{90.0};  // per cluster; one entry applies to all

  // Slant range from the law of cosines on the Earth-centre triangle.
  double distance(double elevation_deg) const {
    const double th = elevation_deg * std::numbers::pi / 180.0;
    const double r = earth_radius_m;
    const double R = r + altitude_m;
    return std::sqrt(R * R - r * r * std::cos(th) * std::cos(th)) - r * std::sin(th);
  }

  double velocity() const {
    if (orbital_velocity_mps) return *orbital_velocity_mps;
    constexpr double kEarthMu = 3.986004418e14;
    return std::sqrt(kEarthMu / (earth_radius_m + altitude_m));
  }

  double pass_elevation(int cluster) const {
    if (pass_elevation_deg.empty()) return 90.0;
    if (pass_elevation_deg.size() == 1) return pass_elevation_deg.front();
    return pass_elevation_deg.at(static_cast<std::size_t>(cluster));
  }

  friend bool operator==(const GeometryModel&, const GeometryModel&) = default;
};

inline double db_to_linear_power(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_power_to_db(double lin) { return 10.0 * std::log10(lin); }

// Power gain 20 log10 a(theta) in dB (negative). Kept in the log domain so
// integer-dB budgets produce exact SNRs.
inline double large_scale_db(double elevation_deg, const LinkBudget& b, const GeometryModel& g) {
  if (!(elevation_deg > 0.0)) throw DomainError("large_scale: elevation must be positive");
  const double th = elevation_deg * std::numbers::pi / 180.0;
  const double free_space_db =
      b.path_loss_db ? -*b.path_loss_db
                     : 20.0 * std::log10(b.wavelength_m / (4.0 * std::numbers::pi * g.distance(elevation_deg)));
  return free_space_db - b.atmos_coeff_db / std::sin(th) - b.shadow_db;
}

// Amplitude coefficient a(theta), linear.
inline double large_scale(double elevation_deg, const LinkBudget& b, const GeometryModel& g) {
  return std::pow(10.0, large_scale_db(elevation_deg, b, g) / 20.0);
}

// f_D = v cos(theta) / lambda, with cos(theta) evaluated as sin(90 - theta)
// so the zenith value is exactly 0.
inline double doppler(double elevation_deg, const LinkBudget& b, const GeometryModel& g) {
  const double co = (90.0 - elevation_deg) * std::numbers::pi / 180.0;
  return g.velocity() * std::sin(co) / b.wavelength_m;
}

// Unit-mean-power Rician sample with a zero-phase line-of-sight component.
inline std::complex<double> rician_sample(double k_db, Rng& rng) {
  if (std::isinf(k_db) && k_db > 0) return {1.0, 0.0};
  const double k = db_to_linear_power(k_db);
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double los = std::sqrt(k / (k + 1.0));
  const double nlos = std::sqrt(1.0 / (k + 1.0));
  const double re = n(rng);
  const double im = n(rng);
  return {los + nlos * re, nlos * im};
}

// Complex channel coefficient at time t seconds; exactly zero below the
// elevation threshold.
inline std::complex<double> channel(double t, double elevation_deg, const LinkBudget& b, const GeometryModel& g, Rng& rng) {
  if (elevation_deg < b.min_elevation_deg) return {0.0, 0.0};
  const double a = large_scale(elevation_deg, b, g);
  const double phase = b.rain_phase_rad + 2.0 * std::numbers::pi * doppler(elevation_deg, b, g) * t;
  return a * std::polar(1.0, phase) * rician_sample(b.rician_k_db, rng);
}

// Mean received SNR (linear) with the small-scale fading averaged out.
inline double mean_snr(double elevation_deg, const LinkBudget& b, const GeometryModel& g) {
  return db_to_linear_power(b.tx_power_dbm + b.sat_gain_dbi + large_scale_db(elevation_deg, b, g) - b.noise_dbm);
}

inline double shannon_rate(double snr_linear, double bandwidth_hz) { return bandwidth_hz * std::log2(1.0 + snr_linear); }

inline double shannon_from_dbm(double rx_dbm, double noise_dbm, double bandwidth_hz) {
  return shannon_rate(db_to_linear_power(rx_dbm - noise_dbm), bandwidth_hz);
}

// Shannon upper bound of the ergodic capacity; zero when not visible.
inline double shannon_upper(const LinkBudget& b, const GeometryModel& g, double elevation_deg) {
  if (elevation_deg < b.min_elevation_deg) return 0.0;
  return shannon_rate(mean_snr(elevation_deg, b, g), b.bandwidth_hz);
}

struct ErgodicEstimate {
  double rate_bps = 0.0;
  double std_error = 0.0;
};

inline ErgodicEstimate ergodic_capacity_snr(double snr_linear, double rician_k_db, double bandwidth_hz, int n_samples,
                                            Rng& rng) {
  if (n_samples < 1) throw ArgumentError("ergodic_capacity: n_samples must be >= 1");
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double r = bandwidth_hz * std::log2(1.0 + snr_linear * std::norm(rician_sample(rician_k_db, rng)));
    sum += r;
    sum2 += r * r;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

inline ErgodicEstimate ergodic_capacity(const LinkBudget& b, const GeometryModel& g, double elevation_deg, int n_samples,
                                        Rng& rng) {
  if (n_samples < 1) throw ArgumentError("ergodic_capacity: n_samples must be >= 1");
  if (elevation_deg < b.min_elevation_deg) return {};
  return ergodic_capacity_snr(mean_snr(elevation_deg, b, g), b.rician_k_db, b.bandwidth_hz, n_samples, rng);
}

inline std::uint64_t window_bytes(double rate_bps, double window_seconds) {
  if (!(rate_bps >= 0.0)) throw ArgumentError("window_bytes: rate must be non-negative");
  return static_cast<std::uint64_t>(std::floor(rate_bps * window_seconds / 8.0));
}

struct ContactSlot {
  int round = 0;             // 1-based
  std::optional<int> cluster;  // 0-based; empty = idle
  double window_seconds = 0.0;
  double rate_bps = 0.0;
  std::uint64_t budget_bytes = std::numeric_limits<std::uint64_t>::max();  // unlimited until a link is attached
};

struct ContactPlan {
  int clusters = 0;
  int idle_slots = 0;
  std::vector<ContactSlot> rounds;

  int cycle_length() const { return clusters + idle_slots; }
  int total_rounds() const { return static_cast<int>(rounds.size()); }
  const ContactSlot& at(int round) const { return rounds.at(static_cast<std::size_t>(round - 1)); }
  bool all_idle() const {
    for (const auto& s : rounds)
      if (s.cluster) return false;
    return true;
  }
};

// Cycle = clusters 1..C then `idle_slots` idle rounds, repeated; round 1 is
// cluster 1.
inline ContactPlan build_contact_plan(int C, int total_rounds, int idle_slots, double window_seconds) {
  if (total_rounds < 1) throw ArgumentError("contact plan: total_rounds must be >= 1");
  if (C < 1 || idle_slots < 0) throw ArgumentError("contact plan: bad cycle shape");
  ContactPlan plan;
  plan.clusters = C;
  plan.idle_slots = idle_slots;
  const int cycle = C + idle_slots;
  for (int t = 1; t <= total_rounds; ++t) {
    ContactSlot s;
    s.round = t;
    const int slot = (t - 1) % cycle;
    if (slot < C) {
      s.cluster = slot;
      s.window_seconds = window_seconds;
    }
    plan.rounds.push_back(s);
  }
  return plan;
}

// Fills rates and byte budgets from each cluster's pass elevation. Clusters
// whose pass never clears the elevation threshold become idle slots.
// Returns the number of slots turned idle.
inline int attach_link(ContactPlan& plan, const LinkBudget& b, const GeometryModel& g) {
  b.validate();
  int dropped = 0;
  for (auto& s : plan.rounds) {
    if (!s.cluster) continue;
    const double elev = g.pass_elevation(*s.cluster);
    if (elev < b.min_elevation_deg) {
      s.cluster.reset();
      s.window_seconds = 0.0;
      s.rate_bps = 0.0;
      s.budget_bytes = 0;
      ++dropped;
      continue;
    }
    s.rate_bps = shannon_upper(b, g, elev);
    s.budget_bytes = window_bytes(s.rate_bps, s.window_seconds);
  }
  return dropped;
}

// Rows: round cluster-or-IDLE window_s rate_bps budget_bytes.
inline void write_contact_plan(std::ostream& os, const ContactPlan& plan, int max_rows = -1) {
  os << "# round cluster window_s rate_bps budget_bytes\n";
  char buf[128];
  int n = 0;
  for (const auto& s : plan.rounds) {
    if (max_rows >= 0 && n++ >= max_rows) break;
    const std::string cl = s.cluster ? std::to_string(*s.cluster + 1) : std::string("IDLE");
    const std::string budget = s.cluster ? std::to_string(s.budget_bytes) : std::string("0");
    std::snprintf(buf, sizeof buf, "%d %s %.3f %.3f %s\n", s.round, cl.c_str(), s.window_seconds, s.rate_bps,
                  budget.c_str());
    os << buf;
  }
}

}  // namespace orbitmoe
