// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/cli.hpp"

namespace orbitmoe {
namespace {

namespace fs = std::filesystem;

const std::string kSmall =
    "# orbitmoe-config v1\n"
    "scheme = ems_fl\n"
    "seed = 3\n"
    "clusters = 3\n"
    "devices = 2\n"
    "samples_per_device = 15\n"
    "experts = 3\n"
    "top_k = 1\n"
    "layers = 1\n"
    "total_cycles = 3\n"
    "idle_slots = 1\n"
    "lora_rank = 2\n"
    "eta_u = 0.3\n"
    "eta_e = 0.1\n";

const fs::path kConfigs = fs::path(ORBITMOE_SOURCE_DIR) / "configs";

// Fresh scratch directory per test.
fs::path scratch() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path p = fs::temp_directory_path() / "orbitmoe_cli" / (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
  return p.string();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::vector<std::string> fields_of(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  return out;
}

bool contains(const std::string& s, const std::string& needle) { return s.find(needle) != std::string::npos; }

struct Captured {
  int code;
  std::string out;
  std::string err;
};

template <typename Opt, typename Fn>
Captured call(Fn fn, const Opt& opt) {
  std::ostringstream out, err;
  const int code = fn(opt, cli::Io{out, err, false});
  return {code, out.str(), err.str()};
}

TEST(Run, WritesEveryFile) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  const auto r = call(cli::cmd_run, cli::RunOptions{cfg, (dir / "out").string(), std::nullopt});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  for (const char* f : {"metrics.csv", "assignment.txt", "contactplan.txt", "checkpoint.bin", "summary.txt"})
    EXPECT_TRUE(fs::is_regular_file(dir / "out" / f)) << f;
  const int rounds = parse_config(kSmall).total_rounds();
  EXPECT_EQ(rounds, 12);
  const auto metrics = lines_of(read_text(dir / "out" / "metrics.csv"));
  EXPECT_EQ(metrics.size(), static_cast<std::size_t>(rounds) + 1);
  EXPECT_EQ(metrics.front(), kMetricsHeader);
  EXPECT_EQ(read_text(dir / "out" / "summary.txt"), r.out);
  EXPECT_TRUE(contains(r.out, "rounds: 12 (3 cycles of 4)"));
  EXPECT_TRUE(contains(r.out, "warnings: 0"));
}

TEST(Run, QuietSuppressesSummary) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  std::ostringstream out, err;
  EXPECT_EQ(cli::cmd_run({cfg, (dir / "out").string(), std::nullopt}, cli::Io{out, err, true}), cli::kExitOk);
  EXPECT_EQ(out.str(), "");
  EXPECT_TRUE(fs::is_regular_file(dir / "out" / "summary.txt"));
}

TEST(Run, RepeatedRunsAreByteIdentical) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall + "noise_std = 0.3\nbatch_size = 4\n");
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (dir / "a").string(), std::nullopt}).code, cli::kExitOk);
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (dir / "b").string(), std::nullopt}).code, cli::kExitOk);
  for (const char* f : {"metrics.csv", "assignment.txt", "contactplan.txt", "checkpoint.bin", "summary.txt"})
    EXPECT_EQ(read_text(dir / "a" / f), read_text(dir / "b" / f)) << f;
}

TEST(Run, SeedFlagOverridesConfig) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  std::string reseeded = kSmall;
  reseeded.replace(reseeded.find("seed = 3"), 8, "seed = 9");
  const auto cfg9 = write_text(dir / "small9.cfg", reseeded);
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (dir / "flag").string(), 9}).code, cli::kExitOk);
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg9, (dir / "file").string(), std::nullopt}).code, cli::kExitOk);
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (dir / "orig").string(), std::nullopt}).code, cli::kExitOk);
  EXPECT_EQ(read_text(dir / "flag" / "metrics.csv"), read_text(dir / "file" / "metrics.csv"));
  EXPECT_NE(read_text(dir / "flag" / "metrics.csv"), read_text(dir / "orig" / "metrics.csv"));
}

TEST(Run, ConfigErrorsExitTwo) {
  const auto dir = scratch();
  std::string missing = kSmall;
  missing.erase(missing.find("clusters = 3\n"), 13);
  auto r = call(cli::cmd_run, cli::RunOptions{write_text(dir / "a.cfg", missing), (dir / "o").string(), std::nullopt});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_TRUE(contains(r.err, "missing required field 'clusters'"));

  r = call(cli::cmd_run, cli::RunOptions{write_text(dir / "b.cfg", kSmall + "seed = 9\n"), (dir / "o").string(),
                                          std::nullopt});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_TRUE(contains(r.err, "line 15: duplicate key 'seed'")) << r.err;

  r = call(cli::cmd_run, cli::RunOptions{(dir / "absent.cfg").string(), (dir / "o").string(), std::nullopt});
  EXPECT_EQ(r.code, cli::kExitConfig);

  r = call(cli::cmd_run, cli::RunOptions{write_text(dir / "c.cfg", kSmall), "", std::nullopt});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Run, UnwritableOutputExitsThree) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  const auto blocker = write_text(dir / "blocker", "x");
  const auto r = call(cli::cmd_run, cli::RunOptions{cfg, blocker + "/out", std::nullopt});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_TRUE(contains(r.err, "error: "));
}

TEST(Run, InfeasibleUploadsStillSucceed) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "slow.cfg", kSmall + "bandwidth_hz = 10\nwindow_seconds = 1\n");
  const auto r = call(cli::cmd_run, cli::RunOptions{cfg, (dir / "out").string(), std::nullopt});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "infeasible_rounds: 9"));
  EXPECT_TRUE(contains(r.out, "warnings: 1"));
  EXPECT_TRUE(contains(r.out, "warning: 9 round(s) skipped"));
}

TEST(Run, StepSizeRuleWarns) {
  const auto dir = scratch();
  std::string text = kSmall;
  text.replace(text.find("eta_e = 0.1"), 11, "eta_e = 0.2");
  const auto r = call(cli::cmd_run, cli::RunOptions{write_text(dir / "fast.cfg", text), (dir / "out").string(),
                                                    std::nullopt});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "warnings: 1\nwarning: eta_e exceeds eta_u / gamma (gamma = 3)\n")) << r.out;
}

const std::string kIdentityAssignment = "# expert cluster\n1 1\n2 2\n3 3\n";

TEST(Split, LocalizedModalitiesGiveIdentityAssignment) {
  const auto r = call(cli::cmd_split, cli::SplitOptions{(kConfigs / "extreme.cfg").string(), "", std::nullopt});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "# relevance p (rows: experts, columns: clusters)\n"));
  EXPECT_TRUE(contains(r.out, "# cap_k 1\n"));
  EXPECT_TRUE(contains(r.out, kIdentityAssignment)) << r.out;
  EXPECT_FALSE(contains(r.out, "warning"));
}

TEST(Split, ThresholdAboveOneLeavesEveryExpertUnassigned) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "high.cfg", kSmall + "p_th = 1.1\n");
  const auto r = call(cli::cmd_split, cli::SplitOptions{cfg, "", std::nullopt});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "warning: 3 expert(s) unassignable at p_th\n"));
  EXPECT_TRUE(contains(r.out, "# truncated p (rows: experts, columns: clusters)\n0.000000 0.000000 0.000000\n"));
}

TEST(Split, MatchesAssignmentUsedByRun) {
  const auto dir = scratch();
  std::string text = kSmall;
  text.replace(text.find("experts = 3"), 11, "experts = 5");
  text.replace(text.find("top_k = 1"), 9, "top_k = 2");
  const auto cfg = write_text(dir / "five.cfg", text + "mixing = uniform\n");
  for (std::uint64_t seed : {1u, 2u, 5u}) {
    const auto sd = dir / ("s" + std::to_string(seed));
    ASSERT_EQ(call(cli::cmd_split, cli::SplitOptions{cfg, (sd / "split").string(), seed}).code, cli::kExitOk);
    ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (sd / "run").string(), seed}).code, cli::kExitOk);
    EXPECT_EQ(read_text(sd / "split" / "assignment.txt"), read_text(sd / "run" / "assignment.txt"));
    EXPECT_TRUE(fs::is_regular_file(sd / "split" / "relevance.txt"));
  }
}

TEST(LinkBudget, AnchorConfig) {
  const auto r = call(cli::cmd_linkbudget, cli::LinkOptions{(kConfigs / "anchor_link.cfg").string(), 12});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "received -97.000 dBm, rate 5.000 Mbit/s, window 600.0 s, budget 375000000 bytes"));
  EXPECT_TRUE(contains(r.out, "doppler at pass elevation: 0.000 Hz"));
  const auto lines = lines_of(r.out);
  // Three cluster lines, doppler, plan header, 12 preview rows.
  EXPECT_EQ(lines.size(), 3u + 1u + 1u + 12u);
  EXPECT_FALSE(contains(r.out, "warning"));
}

TEST(LinkBudget, ThresholdAbovePassIsAllIdle) {
  const auto dir = scratch();
  const auto cfg = write_text(dir / "low.cfg", kSmall + "pass_elevation_deg = 30, 40, 50\nmin_elevation_deg = 60\n");
  const auto r = call(cli::cmd_linkbudget, cli::LinkOptions{cfg, 4});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "warning: no cluster clears the elevation threshold; every round is IDLE"));
  EXPECT_TRUE(contains(r.out, "budget 0 bytes"));
}

struct BoundRow {
  double T, emsfl, baseline, crossover;
};

std::vector<BoundRow> bound_rows(const std::string& out) {
  std::vector<BoundRow> rows;
  const auto lines = lines_of(out);
  EXPECT_EQ(lines.at(0), "T,bound_emsfl,bound_baseline,crossover_zeta_E2");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = fields_of(lines[i]);
    EXPECT_EQ(f.size(), 4u);
    rows.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
  }
  return rows;
}

TEST(Bounds, HandArithmeticCases) {
  const auto r = call(cli::cmd_bounds, cli::BoundsOptions{(kConfigs / "bounds_unit.txt").string(), {100}});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto rows = bound_rows(r.out);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].emsfl, 12.05, 1e-12);
  EXPECT_NEAR(rows[0].baseline, 8.05, 1e-12);
}

TEST(Bounds, DoublingHorizonShrinksBySqrtTwo) {
  const auto r = call(cli::cmd_bounds, cli::BoundsOptions{(kConfigs / "bounds_unit.txt").string(), {25, 50, 100, 200}});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto rows = bound_rows(r.out);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    EXPECT_NEAR(rows[i].emsfl / rows[i + 1].emsfl, std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(rows[i].baseline / rows[i + 1].baseline, std::sqrt(2.0), 1e-9);
  }
}

TEST(Bounds, BadInputsExitTwo) {
  const auto dir = scratch();
  const auto good = (kConfigs / "bounds_unit.txt").string();
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{good, {}}).code, cli::kExitConfig);
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{good, {0.5}}).code, cli::kExitConfig);
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{(dir / "absent").string(), {10}}).code, cli::kExitConfig);
  const auto no_header = write_text(dir / "a.txt", "C = 2\n");
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{no_header, {10}}).code, cli::kExitConfig);
  const auto unknown = write_text(dir / "b.txt", "# orbitmoe-bounds v1\nbeta = 2\n");
  auto r = call(cli::cmd_bounds, cli::BoundsOptions{unknown, {10}});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_TRUE(contains(r.err, "line 2: unknown key 'beta'"));
  const auto bad_gamma = write_text(dir / "c.txt", "# orbitmoe-bounds v1\ngamma = 0\n");
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{bad_gamma, {10}}).code, cli::kExitConfig);
  const auto bad_value = write_text(dir / "d.txt", "# orbitmoe-bounds v1\nC = two\n");
  EXPECT_EQ(call(cli::cmd_bounds, cli::BoundsOptions{bad_value, {10}}).code, cli::kExitConfig);
}

std::string compare_config(const fs::path& dir) { return write_text(dir / "cmp.cfg", kSmall); }

TEST(Compare, SchemeListedTwiceGivesIdenticalColumns) {
  const auto dir = scratch();
  const auto r = call(cli::cmd_compare, cli::CompareOptions{compare_config(dir), {"ems_fl", "ems_fl"}, {1, 2},
                                                            (dir / "out").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto report = lines_of(read_text(dir / "out" / "report.csv"));
  ASSERT_EQ(report.size(), 3u);
  auto a = fields_of(report[1]), b = fields_of(report[2]);
  EXPECT_EQ(a[0], "ems_fl");
  EXPECT_EQ(b[0], "ems_fl#2");
  a.erase(a.begin());
  b.erase(b.begin());
  EXPECT_EQ(a, b);
  EXPECT_EQ(read_text(dir / "out" / "ems_fl" / "seed-2" / "metrics.csv"),
            read_text(dir / "out" / "ems_fl#2" / "seed-2" / "metrics.csv"));
}

TEST(Compare, ByteColumnsReconcileWithRunMetrics) {
  const auto dir = scratch();
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto r = call(cli::cmd_compare, cli::CompareOptions{compare_config(dir), {}, seeds, (dir / "out").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto runs = lines_of(read_text(dir / "out" / "runs.csv"));
  ASSERT_EQ(runs.size(), 1u + 3u * seeds.size());
  std::map<std::string, std::vector<double>> per_scheme;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto f = fields_of(runs[i]);
    ASSERT_EQ(f.size(), 9u);
    const auto metrics = lines_of(read_text(dir / "out" / f[0] / ("seed-" + f[1]) / "metrics.csv"));
    std::uint64_t total = 0, loaded = 0;
    for (std::size_t k = 1; k < metrics.size(); ++k) {
      const auto m = fields_of(metrics[k]);
      total += std::stoull(m.at(6));
      loaded = std::max<std::uint64_t>(loaded, std::stoull(m.at(8)));
    }
    EXPECT_EQ(std::stoull(f[6]), total) << runs[i];
    EXPECT_EQ(std::stoull(f[7]), loaded) << runs[i];
    per_scheme[f[0]].push_back(static_cast<double>(total));
  }
  const auto report = lines_of(read_text(dir / "out" / "report.csv"));
  ASSERT_EQ(report.size(), 4u);
  for (std::size_t i = 1; i < report.size(); ++i) {
    const auto f = fields_of(report[i]);
    const auto& bytes = per_scheme.at(f[0]);
    double sum = 0;
    for (double b : bytes) sum += b;
    EXPECT_DOUBLE_EQ(std::stod(f[8]), sum / static_cast<double>(bytes.size()));
  }
  EXPECT_EQ(read_text(dir / "out" / "report.txt"), r.out);
}

TEST(Compare, RepeatedComparisonsAreByteIdentical) {
  const auto dir = scratch();
  const auto cfg = compare_config(dir);
  ASSERT_EQ(call(cli::cmd_compare, cli::CompareOptions{cfg, {}, {4, 5}, (dir / "a").string()}).code, cli::kExitOk);
  ASSERT_EQ(call(cli::cmd_compare, cli::CompareOptions{cfg, {}, {4, 5}, (dir / "b").string()}).code, cli::kExitOk);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(read_text(e.path()), read_text(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 3 + 3 * 2);
}

TEST(Compare, DirectoryOfConfigs) {
  const auto dir = scratch();
  fs::create_directories(dir / "cfgs");
  std::string enhanced = kSmall;
  enhanced.replace(enhanced.find("ems_fl"), 6, "enhanced");
  write_text(dir / "cfgs" / "a.cfg", kSmall);
  write_text(dir / "cfgs" / "b.cfg", enhanced);
  write_text(dir / "cfgs" / "c.cfg", kSmall);
  write_text(dir / "cfgs" / "notes.txt", "ignored");
  auto r = call(cli::cmd_compare, cli::CompareOptions{(dir / "cfgs").string(), {}, {}, (dir / "out").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto runs = lines_of(read_text(dir / "out" / "runs.csv"));
  ASSERT_EQ(runs.size(), 4u);
  EXPECT_EQ(fields_of(runs[1])[0], "ems_fl");
  EXPECT_EQ(fields_of(runs[2])[0], "enhanced");
  EXPECT_EQ(fields_of(runs[3])[0], "ems_fl#2");
  EXPECT_EQ(fields_of(runs[1])[1], "3");

  r = call(cli::cmd_compare, cli::CompareOptions{(dir / "cfgs").string(), {"baseline"}, {}, (dir / "out2").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  fs::create_directories(dir / "empty");
  r = call(cli::cmd_compare, cli::CompareOptions{(dir / "empty").string(), {}, {}, (dir / "out3").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  r = call(cli::cmd_compare, cli::CompareOptions{compare_config(dir), {"fedavg"}, {}, (dir / "out4").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
}

// The installed tool: flag parsing and exit codes.
int tool(const std::string& args) {
  const std::string cmd = std::string(ORBITMOE_TOOL) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Tool, ExitCodes) {
  if (std::string(ORBITMOE_TOOL).empty()) GTEST_SKIP() << "tool not built";
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  std::string missing = kSmall;
  missing.erase(missing.find("clusters = 3\n"), 13);
  const auto bad = write_text(dir / "bad.cfg", missing);
  const auto params = (kConfigs / "bounds_unit.txt").string();
  EXPECT_EQ(tool("run --config " + cfg + " --out " + (dir / "out").string() + " --seed 4 --quiet"), 0);
  EXPECT_TRUE(fs::is_regular_file(dir / "out" / "metrics.csv"));
  EXPECT_EQ(tool("run --config " + bad + " --out " + (dir / "bad").string()), 2);
  EXPECT_EQ(tool("run --config " + cfg + " --out " + cfg + "/sub"), 3);
  EXPECT_EQ(tool("run --config " + cfg + " --seed notanumber --out " + (dir / "x").string()), 2);
  EXPECT_EQ(tool("frobnicate"), 2);
  EXPECT_EQ(tool("bounds --params " + params + " -T 100,200"), 0);
  EXPECT_EQ(tool("bounds --params " + params), 2);
  EXPECT_EQ(tool("linkbudget --config " + cfg + " --rows 3"), 0);
  EXPECT_EQ(tool("split --config " + cfg), 0);
}

TEST(Tool, SeedFlagMatchesLibraryCall) {
  if (std::string(ORBITMOE_TOOL).empty()) GTEST_SKIP() << "tool not built";
  const auto dir = scratch();
  const auto cfg = write_text(dir / "small.cfg", kSmall);
  ASSERT_EQ(tool("run --config " + cfg + " --out " + (dir / "tool").string() + " --seed 11"), 0);
  ASSERT_EQ(call(cli::cmd_run, cli::RunOptions{cfg, (dir / "lib").string(), 11}).code, cli::kExitOk);
  EXPECT_EQ(read_text(dir / "tool" / "metrics.csv"), read_text(dir / "lib" / "metrics.csv"));
  EXPECT_EQ(read_text(dir / "tool" / "checkpoint.bin"), read_text(dir / "lib" / "checkpoint.bin"));
}

}  // namespace
}  // namespace orbitmoe
