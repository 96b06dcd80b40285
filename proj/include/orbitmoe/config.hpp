// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: one key = value text file.
//
//   # orbitmoe-config v1
//   scheme = ems_fl
//   seed = 7
//   ...
//
// Blank lines and lines starting with '#' after the header are ignored.
// Unknown keys, duplicate keys and malformed values are errors reported with
// their line number. Lists are comma-separated; mixing rows are separated by
// ';'. See README.md for the full key table.

#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/channel.hpp"
#include "orbitmoe/common.hpp"
#include "orbitmoe/data.hpp"
#include "orbitmoe/federation.hpp"
#include "orbitmoe/moe.hpp"

namespace orbitmoe {

inline constexpr const char* kConfigHeader = "# orbitmoe-config v1";

struct ExperimentConfig {
  Scheme scheme = Scheme::kEmsFl;
  std::uint64_t seed = 0;
  int clusters = 0;
  int devices = 0;
  int samples_per_device = 0;
  int total_cycles = 0;
  MoEConfig model{.layers = 0, .experts = 0, .top_k = 0, .d_in = 8, .d_hidden = 16, .d_out = 8, .n_classes = 3,
                  .noise_std = 0.0};

  // Synthetic data. modalities = 0 means one modality per cluster.
  int modalities = 0;
  std::string mixing = "identity";
  double separation = 4.0;
  double class_separation = 2.0;
  double data_noise_sd = 1.0;
  std::vector<int> modality_expert;  // empty: modality k -> expert k mod M

  // Gate initialization on a shared sample pool.
  std::string gate_init = "prototype";  // prototype | random
  double gate_scale = 4.0;
  int gate_pretrain_steps = 50;
  double gate_pretrain_eta = 0.1;
  int shared_samples = 8;  // per modality

  // Splitting.
  int n_trial = 20;
  double p_th = 0.05;
  int cap_k = 0;  // 0: ceil(M / C)
  int resplit_every_cycles = 0;

  // Link and contact plan.
  LinkBudget link;
  GeometryModel geometry;
  int idle_slots = 0;
  double window_seconds = 600.0;

  FederationHyper hyper;
  double target_loss_ratio = 0.5;

  int modality_count() const { return modalities > 0 ? modalities : clusters; }
  int cycle_length() const { return clusters + idle_slots; }
  int total_rounds() const { return total_cycles * cycle_length(); }

  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// "identity", "uniform" or explicit rows such as "0.8,0.2;0.2,0.8".
inline HeterogeneityProfile parse_mixing(const std::string& spec, int clusters, int modalities) {
  if (spec == "identity") {
    if (clusters != modalities) throw ConfigError("mixing: identity needs modalities == clusters");
    return HeterogeneityProfile::identity(clusters);
  }
  if (spec == "uniform") return HeterogeneityProfile::uniform(clusters, modalities);
  HeterogeneityProfile p;
  std::stringstream rows(spec);
  std::string row;
  while (std::getline(rows, row, ';')) {
    std::vector<double> r;
    std::stringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        r.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("mixing: bad number '" + cell + "'");
      }
    }
    p.mixing.push_back(std::move(r));
  }
  if (static_cast<int>(p.mixing.size()) != clusters) throw ConfigError("mixing: expected one row per cluster");
  try {
    p.validate(static_cast<std::size_t>(modalities));
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("mixing: ") + e.what());
  }
  return p;
}

inline void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(clusters >= 1, "clusters must be >= 1");
  need(devices >= 1, "devices must be >= 1");
  need(samples_per_device >= 1, "samples_per_device must be >= 1");
  need(total_cycles >= 1, "total_cycles must be >= 1");
  model.validate();
  need(modalities >= 0, "modalities must be >= 0");
  parse_mixing(mixing, clusters, modality_count());
  need(separation >= 0.0 && class_separation >= 0.0, "separations must be >= 0");
  need(data_noise_sd > 0.0, "data_noise_sd must be > 0");
  if (!modality_expert.empty()) {
    need(static_cast<int>(modality_expert.size()) == modality_count(), "modality_expert needs one entry per modality");
    for (int m : modality_expert) need(m >= 1 && m <= model.experts, "modality_expert entries must lie in 1..experts");
  }
  need(gate_init == "prototype" || gate_init == "random", "gate_init must be prototype or random");
  need(gate_scale >= 0.0, "gate_scale must be >= 0");
  need(gate_pretrain_steps >= 0, "gate_pretrain_steps must be >= 0");
  need(gate_pretrain_eta >= 0.0, "gate_pretrain_eta must be >= 0");
  need(shared_samples >= 1, "shared_samples must be >= 1");
  need(n_trial >= 1 && n_trial <= devices * samples_per_device, "n_trial must lie in 1..devices*samples_per_device");
  need(p_th >= 0.0, "p_th must be >= 0");
  need(cap_k >= 0, "cap_k must be >= 0");
  need(resplit_every_cycles >= 0, "resplit_every_cycles must be >= 0");
  link.validate();
  need(geometry.altitude_m > 0.0 && geometry.earth_radius_m > 0.0, "geometry: altitude and radius must be positive");
  need(geometry.pass_elevation_deg.size() == 1 || static_cast<int>(geometry.pass_elevation_deg.size()) == clusters,
       "pass_elevation_deg needs one value or one per cluster");
  for (double e : geometry.pass_elevation_deg) need(e > 0.0 && e <= 90.0, "pass elevations must lie in (0, 90]");
  need(idle_slots >= 0, "idle_slots must be >= 0");
  need(window_seconds >= 0.0, "window_seconds must be >= 0");
  hyper.validate();
  need(hyper.eta_e <= hyper.eta_u, "eta_e must not exceed eta_u");
  need(hyper.gate_rounds <= total_rounds(), "gate_rounds exceeds total rounds");
  need(target_loss_ratio > 0.0, "target_loss_ratio must be > 0");
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

inline long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return i;
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Field {
  std::string key;
  bool required = false;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field int_field(std::string key, T ExperimentConfig::*member, bool required = false) {
  return {std::move(key), required, [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = static_cast<T>(to_int(v)); }};
}

inline Field dbl_field(std::string key, std::function<double&(ExperimentConfig&)> ref) {
  return {std::move(key), false,
          [ref](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            return fmt_double(ref(copy));
          },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_double(v); }};
}

inline Field int_ref_field(std::string key, std::function<int&(ExperimentConfig&)> ref, bool required = false) {
  return {std::move(key), required,
          [ref](const ExperimentConfig& c) {
            ExperimentConfig copy = c;
            return std::to_string(ref(copy));
          },
          [ref](ExperimentConfig& c, const std::string& v) { ref(c) = static_cast<int>(to_int(v)); }};
}

inline Field str_field(std::string key, std::string ExperimentConfig::*member) {
  return {std::move(key), false, [member](const ExperimentConfig& c) { return c.*member; },
          [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

// Ordered schema; serialization follows this order.
inline const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    using C = ExperimentConfig;
    std::vector<Field> f;
    f.push_back({"scheme", true, [](const C& c) { return to_string(c.scheme); },
                 [](C& c, const std::string& v) { c.scheme = parse_scheme(v); }});
    f.push_back({"seed", true, [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, const std::string& v) {
                   std::size_t used = 0;
                   if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
                   c.seed = std::stoull(v, &used);
                   if (used != v.size()) throw std::invalid_argument(v);
                 }});
    f.push_back(int_field("clusters", &C::clusters, true));
    f.push_back(int_field("devices", &C::devices, true));
    f.push_back(int_field("samples_per_device", &C::samples_per_device, true));
    f.push_back(int_ref_field("experts", [](C& c) -> int& { return c.model.experts; }, true));
    f.push_back(int_ref_field("top_k", [](C& c) -> int& { return c.model.top_k; }, true));
    f.push_back(int_ref_field("layers", [](C& c) -> int& { return c.model.layers; }, true));
    f.push_back(int_field("total_cycles", &C::total_cycles, true));
    f.push_back(int_ref_field("d_in", [](C& c) -> int& { return c.model.d_in; }));
    f.push_back(int_ref_field("d_hidden", [](C& c) -> int& { return c.model.d_hidden; }));
    f.push_back(int_ref_field("d_out", [](C& c) -> int& { return c.model.d_out; }));
    f.push_back(int_ref_field("n_classes", [](C& c) -> int& { return c.model.n_classes; }));
    f.push_back(dbl_field("noise_std", [](C& c) -> double& { return c.model.noise_std; }));

    f.push_back(int_field("modalities", &C::modalities));
    f.push_back(str_field("mixing", &C::mixing));
    f.push_back(dbl_field("separation", [](C& c) -> double& { return c.separation; }));
    f.push_back(dbl_field("class_separation", [](C& c) -> double& { return c.class_separation; }));
    f.push_back(dbl_field("data_noise_sd", [](C& c) -> double& { return c.data_noise_sd; }));
    f.push_back({"modality_expert", false,
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.modality_expert.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.modality_expert[i]);
                   return s.empty() ? std::string("auto") : s;
                 },
                 [](C& c, const std::string& v) {
                   c.modality_expert.clear();
                   if (v == "auto") return;
                   for (const auto& item : split_list(v)) c.modality_expert.push_back(static_cast<int>(to_int(item)));
                 }});

    f.push_back(str_field("gate_init", &C::gate_init));
    f.push_back(dbl_field("gate_scale", [](C& c) -> double& { return c.gate_scale; }));
    f.push_back(int_field("gate_pretrain_steps", &C::gate_pretrain_steps));
    f.push_back(dbl_field("gate_pretrain_eta", [](C& c) -> double& { return c.gate_pretrain_eta; }));
    f.push_back(int_field("shared_samples", &C::shared_samples));

    f.push_back(int_field("n_trial", &C::n_trial));
    f.push_back(dbl_field("p_th", [](C& c) -> double& { return c.p_th; }));
    f.push_back(int_field("cap_k", &C::cap_k));
    f.push_back(int_field("resplit_every_cycles", &C::resplit_every_cycles));

    f.push_back(dbl_field("tx_power_dbm", [](C& c) -> double& { return c.link.tx_power_dbm; }));
    f.push_back(dbl_field("sat_gain_dbi", [](C& c) -> double& { return c.link.sat_gain_dbi; }));
    f.push_back(dbl_field("bandwidth_hz", [](C& c) -> double& { return c.link.bandwidth_hz; }));
    f.push_back(dbl_field("wavelength_m", [](C& c) -> double& { return c.link.wavelength_m; }));
    f.push_back(dbl_field("noise_dbm", [](C& c) -> double& { return c.link.noise_dbm; }));
    f.push_back(dbl_field("min_elevation_deg", [](C& c) -> double& { return c.link.min_elevation_deg; }));
    f.push_back(dbl_field("rician_k_db", [](C& c) -> double& { return c.link.rician_k_db; }));
    f.push_back(dbl_field("shadow_db", [](C& c) -> double& { return c.link.shadow_db; }));
    f.push_back(dbl_field("rain_phase_rad", [](C& c) -> double& { return c.link.rain_phase_rad; }));
    f.push_back(dbl_field("atmos_coeff_db", [](C& c) -> double& { return c.link.atmos_coeff_db; }));
    f.push_back({"path_loss_db", false,
                 [](const C& c) { return c.link.path_loss_db ? fmt_double(*c.link.path_loss_db) : std::string("none"); },
                 [](C& c, const std::string& v) {
                   if (v == "none")
                     c.link.path_loss_db.reset();
                   else
                     c.link.path_loss_db = to_double(v);
                 }});
    f.push_back(dbl_field("altitude_m", [](C& c) -> double& { return c.geometry.altitude_m; }));
    f.push_back(dbl_field("earth_radius_m", [](C& c) -> double& { return c.geometry.earth_radius_m; }));
    f.push_back({"orbital_velocity_mps", false,
                 [](const C& c) {
                   return c.geometry.orbital_velocity_mps ? fmt_double(*c.geometry.orbital_velocity_mps)
                                                          : std::string("auto");
                 },
                 [](C& c, const std::string& v) {
                   if (v == "auto")
                     c.geometry.orbital_velocity_mps.reset();
                   else
                     c.geometry.orbital_velocity_mps = to_double(v);
                 }});
    f.push_back({"pass_elevation_deg", false,
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.geometry.pass_elevation_deg.size(); ++i)
                     s += (i ? "," : "") + fmt_double(c.geometry.pass_elevation_deg[i]);
                   return s;
                 },
                 [](C& c, const std::string& v) {
                   c.geometry.pass_elevation_deg.clear();
                   for (const auto& item : split_list(v)) c.geometry.pass_elevation_deg.push_back(to_double(item));
                 }});
    f.push_back(int_field("idle_slots", &C::idle_slots));
    f.push_back(dbl_field("window_seconds", [](C& c) -> double& { return c.window_seconds; }));

    f.push_back(dbl_field("eta_e", [](C& c) -> double& { return c.hyper.eta_e; }));
    f.push_back(dbl_field("eta_u", [](C& c) -> double& { return c.hyper.eta_u; }));
    f.push_back(int_ref_field("lora_rank", [](C& c) -> int& { return c.hyper.lora_rank; }));
    f.push_back(int_ref_field("local_steps", [](C& c) -> int& { return c.hyper.local_steps; }));
    f.push_back(int_ref_field("disconnected_steps", [](C& c) -> int& { return c.hyper.disconnected_steps; }));
    f.push_back(int_ref_field("batch_size", [](C& c) -> int& { return c.hyper.batch_size; }));
    f.push_back(int_ref_field("gate_rounds", [](C& c) -> int& { return c.hyper.gate_rounds; }));
    f.push_back(dbl_field("target_loss_ratio", [](C& c) -> double& { return c.target_loss_ratio; }));
    return f;
  }();
  return fields;
}

}  // namespace detail

// Parses and validates. Every failure is a ConfigError.
inline ExperimentConfig parse_config(std::istream& is) {
  const auto& fields = detail::schema();
  std::map<std::string, const detail::Field*> by_key;
  for (const auto& f : fields) by_key[f.key] = &f;

  ExperimentConfig cfg;
  std::map<std::string, int> seen;  // key -> line
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (!header) {
      if (t.empty()) continue;
      if (t != kConfigHeader) {
        if (t.rfind("# orbitmoe-config", 0) == 0)
          throw ConfigError("line " + std::to_string(lineno) + ": unsupported config version '" + t + "'");
        throw ConfigError("line " + std::to_string(lineno) + ": expected header '" + kConfigHeader + "'");
      }
      header = true;
      continue;
    }
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.emplace(key, lineno).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty value for '" + key + "'");
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value '" + value + "' for '" + key + "'");
    }
  }
  if (!header) throw ConfigError("missing header '" + std::string(kConfigHeader) + "'");
  for (const auto& f : fields)
    if (f.required && !seen.count(f.key)) throw ConfigError("missing required field '" + f.key + "'");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Point at the line of the key the message names, when there is one.
    const std::string msg = e.what();
    std::string best;
    for (const auto& [key, at] : seen)
      if (msg.rfind(key, 0) == 0 && key.size() > best.size() &&
          (msg.size() == key.size() || msg[key.size()] == ' ' || msg[key.size()] == ':'))
        best = key;
    if (best.empty()) throw;
    throw ConfigError("line " + std::to_string(seen[best]) + ": " + msg);
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Every key, in schema order, with exact decimal round-tripping of doubles.
inline void write_config(std::ostream& os, const ExperimentConfig& cfg) {
  os << kConfigHeader << '\n';
  for (const auto& f : detail::schema()) os << f.key << " = " << f.get(cfg) << '\n';
}

inline std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

}  // namespace orbitmoe
