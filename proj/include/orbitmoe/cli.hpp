// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the orbitmoe tool. Each returns the
// process exit code: 0 success, 2 configuration error, 3 runtime error.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/analysis.hpp"
#include "orbitmoe/channel.hpp"
#include "orbitmoe/config.hpp"
#include "orbitmoe/experiment.hpp"
#include "orbitmoe/federation.hpp"
#include "orbitmoe/report.hpp"
#include "orbitmoe/split.hpp"

namespace orbitmoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct Io {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  bool quiet = false;
};

namespace detail {

inline ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  ExperimentConfig cfg = parse_config(in);
  if (seed) cfg.seed = *seed;
  return cfg;
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  if (dir.empty()) throw ArgumentError("an output directory is required (--out)");
  std::filesystem::path p(dir);
  std::filesystem::create_directories(p);
  return p;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write '" + p.string() + "'");
  f << content;
  if (!f) throw Error("write failed for '" + p.string() + "'");
}

inline std::string matrix_text(const MatrixXd& p, const char* title) {
  std::ostringstream os;
  os << "# " << title << " (rows: experts, columns: clusters)\n";
  char buf[32];
  for (Eigen::Index m = 0; m < p.rows(); ++m) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%s%.6f", c ? " " : "", p(m, c));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

inline std::string assignment_text(const ExpertAssignment& a) {
  std::ostringstream os;
  write_assignment(os, a);
  return os.str();
}

template <typename F>
int guarded(Io& io, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    io.err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ArgumentError& e) {
    io.err << "argument error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

inline std::string summary_text(const Experiment& e, const ExperimentResult& r) {
  std::ostringstream os;
  const auto& cfg = e.config;
  os << "scheme: " << to_string(cfg.scheme) << '\n';
  os << "seed: " << cfg.seed << '\n';
  os << "rounds: " << r.run.logs.size() << " (" << cfg.total_cycles << " cycles of " << e.plan.cycle_length() << ")\n";
  os << "initial_loss: " << format_double(r.initial_loss) << '\n';
  os << "final_loss: " << format_double(r.run.logs.empty() ? r.initial_loss : r.run.logs.back().loss_global) << '\n';
  os << "target_loss: " << format_double(r.target_loss) << '\n';
  os << "cycles_to_target: " << (r.cycles_to_target ? std::to_string(*r.cycles_to_target) : std::string("inf")) << '\n';
  os << "final_accuracy: " << format_double(r.final_accuracy) << '\n';
  os << "bytes_up_total: " << r.total_bytes << '\n';
  os << "params_loaded_max: " << r.max_loaded << '\n';
  if (e.ratios) os << "gamma: " << format_double(e.ratios->gamma) << '\n';
  os << "resplits: " << (r.assignments.empty() ? 0 : r.assignments.size() - 1) << '\n';
  os << "infeasible_rounds: " << r.infeasible_rounds << '\n';
  std::vector<std::string> warnings = e.warnings;
  if (r.infeasible_rounds > 0)
    warnings.push_back(std::to_string(r.infeasible_rounds) + " round(s) skipped: upload exceeds the window budget");
  os << "warnings: " << warnings.size() << '\n';
  for (const auto& w : warnings) os << "warning: " << w << '\n';
  return os.str();
}

}  // namespace detail

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

// Writes metrics.csv, assignment.txt, contactplan.txt, checkpoint.bin and
// summary.txt into the output directory.
inline int cmd_run(const RunOptions& opt, Io io = {}) {
  return detail::guarded(io, [&] {
    const ExperimentConfig cfg = detail::load_config(opt.config, opt.seed);
    const auto dir = detail::prepare_dir(opt.out);
    const Experiment e = build_experiment(cfg);
    const ExperimentResult r = run_experiment(e);

    std::ostringstream metrics, plan;
    write_metrics(metrics, r.run.logs);
    write_contact_plan(plan, e.plan);
    detail::write_file(dir / "metrics.csv", metrics.str());
    detail::write_file(dir / "assignment.txt", detail::assignment_text(r.assignments.back()));
    detail::write_file(dir / "contactplan.txt", plan.str());
    detail::write_file(dir / "checkpoint.bin", checkpoint(r.final_state));

    const std::string summary = detail::summary_text(e, r);
    detail::write_file(dir / "summary.txt", summary);
    if (!io.quiet) io.out << summary;
    return kExitOk;
  });
}

struct SplitOptions {
  std::string config;
  std::string out;  // optional
  std::optional<std::uint64_t> seed;
};

// Relevance, truncation and assignment only.
inline int cmd_split(const SplitOptions& opt, Io io = {}) {
  return detail::guarded(io, [&] {
    const ExperimentConfig cfg = detail::load_config(opt.config, opt.seed);
    const Experiment e = build_experiment(cfg);
    std::ostringstream os;
    os << detail::matrix_text(e.relevance.p, "relevance p");
    os << detail::matrix_text(e.relevance.p_trunc, "truncated p");
    os << detail::matrix_text(e.relevance.p_assign, "assignment probabilities");
    os << "# cap_k " << e.cap_k << '\n';
    os << detail::assignment_text(e.assignment);
    const auto unassigned = e.assignment.unassigned();
    if (!unassigned.empty()) os << "warning: " << unassigned.size() << " expert(s) unassignable at p_th\n";
    if (!opt.out.empty()) {
      const auto dir = detail::prepare_dir(opt.out);
      detail::write_file(dir / "assignment.txt", detail::assignment_text(e.assignment));
      detail::write_file(dir / "relevance.txt", os.str());
    }
    if (!io.quiet) io.out << os.str();
    return kExitOk;
  });
}

struct LinkOptions {
  std::string config;
  int preview_rows = 12;
};

inline int cmd_linkbudget(const LinkOptions& opt, Io io = {}) {
  return detail::guarded(io, [&] {
    const ExperimentConfig cfg = detail::load_config(opt.config, std::nullopt);
    ContactPlan plan = build_contact_plan(cfg.clusters, cfg.total_rounds(), cfg.idle_slots, cfg.window_seconds);
    const int dropped = attach_link(plan, cfg.link, cfg.geometry);
    std::ostringstream os;
    char buf[256];
    for (int c = 0; c < cfg.clusters; ++c) {
      const double elev = cfg.geometry.pass_elevation(c);
      const double rate = shannon_upper(cfg.link, cfg.geometry, elev);
      const double rx = cfg.link.tx_power_dbm + cfg.link.sat_gain_dbi + large_scale_db(elev, cfg.link, cfg.geometry);
      std::snprintf(buf, sizeof buf,
                    "cluster %d: elevation %.2f deg, received %.3f dBm, rate %.3f Mbit/s, window %.1f s, "
                    "budget %llu bytes\n",
                    c + 1, elev, rx, rate / 1e6, cfg.window_seconds,
                    static_cast<unsigned long long>(window_bytes(rate, cfg.window_seconds)));
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "doppler at pass elevation: %.3f Hz\n",
                  doppler(cfg.geometry.pass_elevation(0), cfg.link, cfg.geometry));
    os << buf;
    write_contact_plan(os, plan, opt.preview_rows);
    if (plan.all_idle()) os << "warning: no cluster clears the elevation threshold; every round is IDLE\n";
    else if (dropped > 0) os << "warning: " << dropped << " contact slot(s) became IDLE\n";
    io.out << os.str();
    return kExitOk;
  });
}

struct BoundsOptions {
  std::string params;
  std::vector<double> T;
};

// Params file: "# orbitmoe-bounds v1" then key = value for L_smooth, G_E,
// G_U, sigma_E2, sigma_U2, zeta_E2, gamma, C, F0_gap (missing keys keep
// their defaults).
inline BoundParams read_bound_params(std::istream& is) {
  BoundParams p;
  std::map<std::string, double*> keys{{"L_smooth", &p.L_smooth}, {"G_E", &p.G_E},         {"G_U", &p.G_U},
                                      {"sigma_E2", &p.sigma_E2}, {"sigma_U2", &p.sigma_U2}, {"zeta_E2", &p.zeta_E2},
                                      {"gamma", &p.gamma},       {"C", &p.C},             {"F0_gap", &p.F0_gap}};
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = orbitmoe::detail::trim(line);
    if (!header) {
      if (t.empty()) continue;
      if (t != "# orbitmoe-bounds v1") throw ConfigError("line " + std::to_string(lineno) + ": expected header '# orbitmoe-bounds v1'");
      header = true;
      continue;
    }
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const auto key = orbitmoe::detail::trim(t.substr(0, eq));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      *it->second = orbitmoe::detail::to_double(orbitmoe::detail::trim(t.substr(eq + 1)));
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  if (!header) throw ConfigError("missing header '# orbitmoe-bounds v1'");
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

inline int cmd_bounds(const BoundsOptions& opt, Io io = {}) {
  return detail::guarded(io, [&] {
    if (opt.T.empty()) throw ArgumentError("at least one T is required");
    for (double T : opt.T)
      if (!(T >= 1.0)) throw ArgumentError("every T must be >= 1");
    std::ifstream in(opt.params);
    if (!in) throw ConfigError("cannot open params file '" + opt.params + "'");
    const BoundParams p = read_bound_params(in);
    std::ostringstream os;
    os << "T,bound_emsfl,bound_baseline,crossover_zeta_E2\n";
    for (double T : opt.T)
      os << format_double(T) << ',' << format_double(bound_emsfl(p, T)) << ',' << format_double(bound_baseline(p, T))
         << ',' << format_double(crossover_zeta(p, T)) << '\n';
    io.out << os.str();
    return kExitOk;
  });
}

struct CompareOptions {
  std::string config;  // a config file, or a directory of *.cfg files
  std::vector<std::string> schemes;  // with a file: schemes to run (default all three)
  std::vector<std::uint64_t> seeds;  // default: the config seed
  std::string out;
};

inline std::vector<CompareEntry> compare_entries(const CompareOptions& opt) {
  std::vector<CompareEntry> entries;
  std::map<std::string, int> uses;
  auto label = [&](const std::string& base) {
    const int n = ++uses[base];
    return n == 1 ? base : base + "#" + std::to_string(n);
  };
  if (std::filesystem::is_directory(opt.config)) {
    if (!opt.schemes.empty()) throw ArgumentError("--schemes applies to a single config file only");
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(opt.config))
      if (f.path().extension() == ".cfg") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no *.cfg files in '" + opt.config + "'");
    for (const auto& f : files) {
      auto cfg = detail::load_config(f.string(), std::nullopt);
      entries.push_back({label(to_string(cfg.scheme)), cfg});
    }
    return entries;
  }
  const auto base = detail::load_config(opt.config, std::nullopt);
  const std::vector<std::string> names =
      opt.schemes.empty() ? std::vector<std::string>{"baseline", "ems_fl", "enhanced"} : opt.schemes;
  for (const auto& n : names) {
    auto cfg = base;
    cfg.scheme = parse_scheme(n);
    cfg.validate();
    entries.push_back({label(n), cfg});
  }
  return entries;
}

// Writes report.csv, runs.csv, report.txt and one metrics.csv per run under
// <out>/<label>/seed-<seed>/.
inline int cmd_compare(const CompareOptions& opt, Io io = {}) {
  return detail::guarded(io, [&] {
    const auto entries = compare_entries(opt);
    std::vector<std::uint64_t> seeds = opt.seeds;
    if (seeds.empty()) seeds.push_back(entries.front().config.seed);
    const auto dir = detail::prepare_dir(opt.out);
    const auto rep = compare_schemes(entries, seeds, [&](const CompareEntry& entry, std::uint64_t seed,
                                                         const Experiment&, const ExperimentResult& r) {
      auto sub = dir / entry.label / ("seed-" + std::to_string(seed));
      std::filesystem::create_directories(sub);
      std::ostringstream m;
      write_metrics(m, r.run.logs);
      detail::write_file(sub / "metrics.csv", m.str());
    });
    std::ostringstream csv, runs, text;
    write_report_csv(csv, rep);
    write_runs_csv(runs, rep);
    write_report_text(text, rep);
    detail::write_file(dir / "report.csv", csv.str());
    detail::write_file(dir / "runs.csv", runs.str());
    detail::write_file(dir / "report.txt", text.str());
    if (!io.quiet) io.out << text.str();
    return kExitOk;
  });
}

}  // namespace orbitmoe::cli
