// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scheme comparison over seeds: cycles to the target loss, final accuracy,
// uplink bytes and peak loaded parameters, as CSV and as a text summary.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "orbitmoe/config.hpp"
#include "orbitmoe/experiment.hpp"
#include "orbitmoe/federation.hpp"

namespace orbitmoe {

struct SchemeRun {
  std::string label;  // scheme name, made unique when listed twice
  Scheme scheme = Scheme::kBaseline;
  std::uint64_t seed = 0;
  std::optional<int> cycles_to_target;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t max_loaded = 0;
  int infeasible_rounds = 0;
};

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
  double median = 0.0;
};

// Infinite entries are allowed: any infinity makes mean infinite and sd NaN.
inline Stat describe(std::vector<double> v) {
  Stat s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (std::isinf(v.back())) {
    s.mean = std::numeric_limits<double>::infinity();
    s.sd = std::numeric_limits<double>::quiet_NaN();
    if (n % 2 == 0 && std::isinf(v[n / 2 - 1])) s.median = std::numeric_limits<double>::infinity();
    return s;
  }
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

struct SchemeSummary {
  std::string label;
  Scheme scheme = Scheme::kBaseline;
  int runs = 0;
  int reached = 0;
  Stat cycles;
  Stat accuracy;
  Stat bytes;
  std::uint64_t max_loaded = 0;
};

struct CompareReport {
  std::vector<SchemeRun> runs;
  std::vector<SchemeSummary> summary;
};

struct CompareEntry {
  std::string label;
  ExperimentConfig config;  // its seed is replaced per run
};

using RunObserver = std::function<void(const CompareEntry&, std::uint64_t seed, const Experiment&, const ExperimentResult&)>;

// Every entry runs on every seed. Data, model and split depend only on the
// seed and the data/model keys, so entries sharing them see identical inputs.
inline CompareReport compare_schemes(const std::vector<CompareEntry>& entries, const std::vector<std::uint64_t>& seeds,
                                     const RunObserver& observe = {}) {
  if (entries.empty()) throw ArgumentError("compare: no schemes");
  if (seeds.empty()) throw ArgumentError("compare: no seeds");
  CompareReport rep;
  for (const auto& entry : entries) {
    SchemeSummary sum;
    sum.label = entry.label;
    sum.scheme = entry.config.scheme;
    std::vector<double> cycles, acc, bytes;
    for (std::uint64_t seed : seeds) {
      ExperimentConfig cfg = entry.config;
      cfg.seed = seed;
      const Experiment e = build_experiment(cfg);
      const ExperimentResult r = run_experiment(e);
      if (observe) observe(entry, seed, e, r);
      SchemeRun run;
      run.label = entry.label;
      run.scheme = cfg.scheme;
      run.seed = seed;
      run.cycles_to_target = r.cycles_to_target;
      run.final_loss = r.run.logs.empty() ? r.initial_loss : r.run.logs.back().loss_global;
      run.final_accuracy = r.final_accuracy;
      run.bytes_up = r.total_bytes;
      run.max_loaded = r.max_loaded;
      run.infeasible_rounds = r.infeasible_rounds;
      rep.runs.push_back(run);
      ++sum.runs;
      if (run.cycles_to_target) ++sum.reached;
      cycles.push_back(run.cycles_to_target ? static_cast<double>(*run.cycles_to_target)
                                            : std::numeric_limits<double>::infinity());
      acc.push_back(run.final_accuracy);
      bytes.push_back(static_cast<double>(run.bytes_up));
      sum.max_loaded = std::max(sum.max_loaded, run.max_loaded);
    }
    sum.cycles = describe(cycles);
    sum.accuracy = describe(acc);
    sum.bytes = describe(bytes);
    rep.summary.push_back(std::move(sum));
  }
  return rep;
}

inline void write_report_csv(std::ostream& os, const CompareReport& rep) {
  os << "scheme,runs,reached,cycles_mean,cycles_sd,cycles_median,accuracy_mean,accuracy_sd,bytes_up_mean,bytes_up_sd,"
        "params_loaded_max\n";
  for (const auto& s : rep.summary) {
    os << s.label << ',' << s.runs << ',' << s.reached << ',' << format_double(s.cycles.mean) << ','
       << format_double(s.cycles.sd) << ',' << format_double(s.cycles.median) << ',' << format_double(s.accuracy.mean)
       << ',' << format_double(s.accuracy.sd) << ',' << format_double(s.bytes.mean) << ','
       << format_double(s.bytes.sd) << ',' << s.max_loaded << '\n';
  }
}

inline void write_runs_csv(std::ostream& os, const CompareReport& rep) {
  os << "scheme,seed,cycles_to_target,reached,final_loss,final_accuracy,bytes_up,params_loaded_max,infeasible_rounds\n";
  for (const auto& r : rep.runs) {
    os << r.label << ',' << r.seed << ','
       << (r.cycles_to_target ? std::to_string(*r.cycles_to_target) : std::string("inf")) << ','
       << (r.cycles_to_target ? 1 : 0) << ',' << format_double(r.final_loss) << ',' << format_double(r.final_accuracy)
       << ',' << r.bytes_up << ',' << r.max_loaded << ',' << r.infeasible_rounds << '\n';
  }
}

namespace detail {

inline std::string fixed(double v, int precision) {
  if (std::isnan(v)) return "-";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace detail

inline void write_report_text(std::ostream& os, const CompareReport& rep) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %5s %8s %18s %8s %16s %16s %10s\n", "scheme", "runs", "reached",
                "cycles (mean+-sd)", "median", "accuracy", "bytes up (mean)", "loaded");
  os << buf;
  for (const auto& s : rep.summary) {
    const std::string cyc = detail::fixed(s.cycles.mean, 1) + " +- " + detail::fixed(s.cycles.sd, 1);
    const std::string acc = detail::fixed(s.accuracy.mean, 3) + " +- " + detail::fixed(s.accuracy.sd, 3);
    std::snprintf(buf, sizeof buf, "%-12s %5d %8d %18s %8s %16s %16s %10llu\n", s.label.c_str(), s.runs, s.reached,
                  cyc.c_str(), detail::fixed(s.cycles.median, 1).c_str(), acc.c_str(),
                  detail::fixed(s.bytes.mean, 0).c_str(), static_cast<unsigned long long>(s.max_loaded));
    os << buf;
  }
  for (const auto& s : rep.summary)
    if (s.reached < s.runs)
      os << s.label << ": target not reached in " << (s.runs - s.reached) << " of " << s.runs << " run(s)\n";
}

}  // namespace orbitmoe
