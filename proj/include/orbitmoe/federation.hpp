// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Federated fine-tuning protocols over a contact plan:
//   baseline  synchronous FedAvg with the connected cluster only
//   ems_fl    expert split + asynchronous local expert training
//   enhanced  ems_fl with a masked, frozen gate, then a gate phase of ems_fl
//
// Uploads are always parameter deltas against the last downloaded copy,
// optionally rank-r factorized, and reconstructed as base + delta before
// aggregation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/analysis.hpp"
#include "orbitmoe/assignment.hpp"
#include "orbitmoe/channel.hpp"
#include "orbitmoe/common.hpp"
#include "orbitmoe/data.hpp"
#include "orbitmoe/lowrank.hpp"
#include "orbitmoe/moe.hpp"

namespace orbitmoe {

enum class Scheme : std::uint8_t { kBaseline = 0, kEmsFl = 1, kEnhanced = 2 };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kBaseline: return "baseline";
    case Scheme::kEmsFl: return "ems_fl";
    case Scheme::kEnhanced: return "enhanced";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "baseline") return Scheme::kBaseline;
  if (s == "ems_fl") return Scheme::kEmsFl;
  if (s == "enhanced") return Scheme::kEnhanced;
  throw ConfigError("unknown scheme '" + s + "' (expected baseline, ems_fl or enhanced)");
}

struct FederationHyper {
  double eta_e = 0.1;
  double eta_u = 0.1;
  int lora_rank = 4;           // 0 uploads the raw delta
  int local_steps = 1;         // per connected round
  int disconnected_steps = 1;  // per round without contact
  int batch_size = 0;          // 0 = full shard
  int gate_rounds = 0;         // enhanced only: trailing rounds of standard ems_fl

  void validate() const {
    if (!(eta_e >= 0.0) || !std::isfinite(eta_e)) throw ConfigError("eta_e must be a finite value >= 0");
    if (!(eta_u >= 0.0) || !std::isfinite(eta_u)) throw ConfigError("eta_u must be a finite value >= 0");
    if (lora_rank < 0) throw ConfigError("lora_rank must be >= 0");
    if (local_steps < 0 || disconnected_steps < 0) throw ConfigError("step counts must be >= 0");
    if (batch_size < 0) throw ConfigError("batch_size must be >= 0");
    if (gate_rounds < 0) throw ConfigError("gate_rounds must be >= 0");
  }

  friend bool operator==(const FederationHyper&, const FederationHyper&) = default;
};

// One gradient-descent step on the trainable groups of p. Returns the
// pre-step batch loss.
inline double local_step(MoEParams& p, Batch batch, const TrainableGroups& trainable, const MaskedGate* gate,
                         double eta_e, double eta_u, Rng* rng = nullptr) {
  if (eta_e < 0.0 || eta_u < 0.0) throw ConfigError("local_step: step sizes must be >= 0");
  const Gradients g = gate ? backward(p, batch, trainable, *gate, rng) : backward(p, batch, trainable, nullptr, rng);
  for (std::size_t m = 0; m < g.experts.size(); ++m) {
    if (!g.experts[m]) continue;
    visit_tensor_pairs(p.experts[m], *g.experts[m], [&](auto& w, const auto& d) { w -= eta_e * d; });
  }
  if (g.gate) visit_tensor_pairs(p.gate, *g.gate, [&](auto& w, const auto& d) { w -= eta_u * d; });
  return g.loss;
}

// Elementwise mean of the copies: summed in order, then divided by J.
template <typename Group>
Group aggregate(const std::vector<Group>& copies) {
  if (copies.empty()) throw ProtocolError("aggregate: no copies");
  Group out = copies.front();
  for (std::size_t j = 1; j < copies.size(); ++j) {
    if (!same_shape(out, copies[j])) throw ProtocolError("aggregate: shape mismatch");
    visit_tensor_pairs(out, copies[j], [](auto& a, const auto& b) { a += b; });
  }
  const double inv = static_cast<double>(copies.size());
  visit_tensors(out, [&](auto& t) { t /= inv; });
  return out;
}

inline ExpertParams aggregate_experts(const std::vector<ExpertParams>& copies) { return aggregate(copies); }
inline GateParams aggregate_gate(const std::vector<GateParams>& copies) { return aggregate(copies); }

// Uplink size of one group: matrices as rank-r factors when rank > 0,
// vectors and rank-0 matrices raw. Eight bytes per value.
template <typename Group>
std::uint64_t upload_bytes(const Group& g, int rank) {
  std::uint64_t n = 0;
  visit_tensors(g, [&](const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, MatrixXd>) {
      if (rank > 0) {
        n += low_rank_bytes(t.rows(), t.cols(), rank);
        return;
      }
    }
    n += static_cast<std::uint64_t>(t.size()) * 8u;
  });
  return n;
}

// What the satellite reconstructs from a device's delta upload.
template <typename Group>
Group upload_delta(const Group& local, const Group& base, int rank) {
  if (!same_shape(local, base)) throw ProtocolError("upload: shape mismatch with base");
  Group out = base;
  visit_tensor_pairs(out, local, [&](auto& o, const auto& l) {
    using T = std::decay_t<decltype(o)>;
    const T delta = l - o;
    if constexpr (std::is_same_v<T, MatrixXd>) {
      if (rank > 0) {
        o += lora_roundtrip(delta, rank).reconstruction;
        return;
      }
    }
    o += delta;
  });
  return out;
}

struct RoundLog {
  int round = 0;
  Scheme scheme = Scheme::kBaseline;
  std::string event;  // aggregate | local-step | idle | infeasible
  std::optional<int> cluster;
  double loss_global = 0.0;
  std::optional<double> grad_var;  // cycle-end rounds only
  std::uint64_t bytes_up = 0;      // summed over the connected cluster's devices
  std::uint64_t bytes_budget = 0;  // J x window bytes; max() = unlimited
  std::uint64_t params_loaded_max = 0;
  std::vector<int> experts_aggregated;
  bool gate_aggregated = false;
  std::string phase;  // "expert" or "gate" for enhanced

  friend bool operator==(const RoundLog&, const RoundLog&) = default;
};

struct DeviceState {
  MoEParams params;
  MoEParams base;  // last downloaded global copy
};

struct FederationState {
  Scheme scheme = Scheme::kBaseline;
  FederationHyper hyper;
  int round = 0;  // rounds completed
  MoEParams global;
  ExpertAssignment assignment;
  std::vector<int> expert_last_update;  // per expert, 0 = never
  int gate_updates = 0;
  std::vector<std::vector<DeviceState>> devices;  // [cluster][device]
  Rng rng;
  std::vector<RoundLog> logs;
};

inline FederationState initial_state(Scheme scheme, const FederationHyper& hyper, const MoEParams& init,
                                     const ExpertAssignment& assignment, int clusters, int devices,
                                     std::uint64_t seed) {
  hyper.validate();
  init.config.validate();
  if (clusters < 1 || devices < 1) throw ConfigError("federation: clusters and devices must be >= 1");
  if (scheme != Scheme::kBaseline) {
    if (assignment.clusters() != clusters || assignment.experts() != init.config.experts)
      throw ProtocolError("federation: assignment does not match clusters x experts");
    if (!assignment.consistent()) throw ProtocolError("federation: assignment is not a valid partition");
  }
  FederationState s;
  s.scheme = scheme;
  s.hyper = hyper;
  s.global = init;
  s.assignment = scheme == Scheme::kBaseline ? ExpertAssignment(clusters, init.config.experts) : assignment;
  s.expert_last_update.assign(static_cast<std::size_t>(init.config.experts), 0);
  s.devices.assign(static_cast<std::size_t>(clusters),
                   std::vector<DeviceState>(static_cast<std::size_t>(devices), DeviceState{init, init}));
  s.rng = derive_rng(seed, Stream::kTraining);
  return s;
}

class Federation {
 public:
  Federation(FederationState state, const SyntheticData& data, const ContactPlan& plan)
      : s_(std::move(state)), data_(&data), plan_(&plan), global_data_(data.global()) {
    const int C = static_cast<int>(s_.devices.size());
    if (static_cast<int>(data.clusters.size()) != C || plan.clusters != C)
      throw ProtocolError("federation: data, plan and state disagree on the cluster count");
    for (const auto& cd : data.clusters)
      if (cd.shards.size() != s_.devices.front().size()) throw ProtocolError("federation: device count mismatch");
    if (s_.hyper.gate_rounds > plan.total_rounds()) throw ConfigError("gate_rounds exceeds the number of rounds");
    counts_ = param_counts(s_.global.config);
  }

  bool done() const { return s_.round >= plan_->total_rounds(); }
  const FederationState& state() const { return s_; }
  const std::vector<RoundLog>& logs() const { return s_.logs; }

  // Rounds of the enhanced scheme before the gate phase.
  int expert_phase_rounds() const { return plan_->total_rounds() - s_.hyper.gate_rounds; }

  const RoundLog& step() {
    if (done()) throw ProtocolError("federation: all rounds already run");
    const int t = s_.round + 1;
    const ContactSlot& slot = plan_->at(t);
    RoundLog log;
    log.round = t;
    log.scheme = s_.scheme;
    log.cluster = slot.cluster;
    const bool masked_phase = s_.scheme == Scheme::kEnhanced && t <= expert_phase_rounds();
    if (s_.scheme == Scheme::kEnhanced) log.phase = masked_phase ? "expert" : "gate";

    if (s_.scheme == Scheme::kBaseline)
      step_baseline(slot, log);
    else if (masked_phase)
      step_enhanced(slot, log);
    else
      step_ems(slot, log);

    s_.round = t;
    log.loss_global = loss(s_.global, global_data_);
    if (t % plan_->cycle_length() == 0) log.grad_var = estimate_grad_variance(s_.global, global_data_);
    s_.logs.push_back(std::move(log));
    return s_.logs.back();
  }

  void run() {
    while (!done()) step();
  }

  // Installs a new expert partition. Every device restarts from the global
  // model so no local progress leaks across groups.
  void reassign(const ExpertAssignment& a) {
    if (s_.scheme == Scheme::kBaseline) throw ProtocolError("reassign: the baseline has no expert partition");
    if (a.clusters() != static_cast<int>(s_.devices.size()) || a.experts() != M() || !a.consistent())
      throw ProtocolError("reassign: assignment does not match the federation");
    s_.assignment = a;
    for (auto& cl : s_.devices)
      for (auto& d : cl) d.base = d.params = s_.global;
  }

 private:
  int J() const { return static_cast<int>(s_.devices.front().size()); }
  int M() const { return s_.global.config.experts; }
  DeviceState& dev(int c, int j) { return s_.devices[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]; }
  const std::vector<Sample>& shard(int c, int j) const {
    return data_->clusters[static_cast<std::size_t>(c)].shards[static_cast<std::size_t>(j)];
  }

  Rng* noise_rng() { return s_.global.config.noise_std > 0.0 ? &s_.rng : nullptr; }

  std::vector<Sample> draw_batch(int c, int j) {
    const auto& sh = shard(c, j);
    const auto n = static_cast<std::size_t>(s_.hyper.batch_size);
    if (n == 0 || n >= sh.size()) return sh;
    std::vector<std::size_t> idx(sh.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(s_.rng)]);
    }
    std::vector<Sample> b;
    for (std::size_t i = 0; i < n; ++i) b.push_back(sh[idx[i]]);
    return b;
  }

  void train(int c, int j, int steps, const TrainableGroups& tg, const MaskedGate* gate, double eta_u) {
    for (int k = 0; k < steps; ++k) {
      const auto batch = draw_batch(c, j);
      local_step(dev(c, j).params, batch, tg, gate, s_.hyper.eta_e, eta_u, noise_rng());
    }
  }

  std::uint64_t group_bytes(const std::set<int>& experts, bool with_gate) const {
    std::uint64_t n = 0;
    for (int m : experts) n += upload_bytes(s_.global.experts[static_cast<std::size_t>(m)], s_.hyper.lora_rank);
    if (with_gate) n += upload_bytes(s_.global.gate, s_.hyper.lora_rank);
    return n;
  }

  static std::uint64_t cluster_budget(const ContactSlot& slot, int J) {
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    if (slot.budget_bytes == kMax) return kMax;
    return slot.budget_bytes * static_cast<std::uint64_t>(J);
  }

  // Every device must fit its own upload into the window.
  bool feasible(const ContactSlot& slot, std::uint64_t per_device) const { return per_device <= slot.budget_bytes; }

  void aggregate_group(int c, const std::set<int>& experts, int t, RoundLog& log) {
    for (int m : experts) {
      std::vector<ExpertParams> copies;
      for (int j = 0; j < J(); ++j) {
        auto& d = dev(c, j);
        copies.push_back(upload_delta(d.params.experts[static_cast<std::size_t>(m)],
                                      d.base.experts[static_cast<std::size_t>(m)], s_.hyper.lora_rank));
      }
      s_.global.experts[static_cast<std::size_t>(m)] = aggregate_experts(copies);
      s_.expert_last_update[static_cast<std::size_t>(m)] = t;
      log.experts_aggregated.push_back(m);
    }
  }

  void aggregate_gate_from(int c, RoundLog& log) {
    std::vector<GateParams> copies;
    for (int j = 0; j < J(); ++j) copies.push_back(upload_delta(dev(c, j).params.gate, dev(c, j).base.gate, s_.hyper.lora_rank));
    s_.global.gate = aggregate_gate(copies);
    ++s_.gate_updates;
    log.gate_aggregated = true;
  }

  void step_baseline(const ContactSlot& slot, RoundLog& log) {
    if (!slot.cluster) {
      log.event = "idle";
      return;
    }
    const int c = *slot.cluster;
    std::set<int> all;
    for (int m = 0; m < M(); ++m) all.insert(m);
    const std::uint64_t per_device = group_bytes(all, true);
    log.bytes_budget = cluster_budget(slot, J());
    if (!feasible(slot, per_device)) {
      log.event = "infeasible";
      return;
    }
    const auto tg = TrainableGroups::all(M());
    for (int j = 0; j < J(); ++j) {
      dev(c, j).params = s_.global;
      dev(c, j).base = s_.global;
      train(c, j, s_.hyper.local_steps, tg, nullptr, s_.hyper.eta_u);
    }
    aggregate_group(c, all, s_.round + 1, log);
    aggregate_gate_from(c, log);
    for (int j = 0; j < J(); ++j) dev(c, j).base = dev(c, j).params = s_.global;
    log.event = "aggregate";
    log.bytes_up = per_device * static_cast<std::uint64_t>(J());
    log.params_loaded_max = counts_.full(M());
  }

  // Disconnected-phase expert training of cluster c; the gate stays frozen.
  void disconnected(int c, bool masked) {
    const auto& group = s_.assignment.group(c);
    if (group.empty() || s_.hyper.disconnected_steps == 0) return;
    const auto tg = TrainableGroups::experts_only(M(), group);
    for (int j = 0; j < J(); ++j) {
      if (masked) {
        const MaskedGate mg = apply_masked_gate(dev(c, j).params.gate, group);
        train(c, j, s_.hyper.disconnected_steps, tg, &mg, 0.0);
      } else {
        train(c, j, s_.hyper.disconnected_steps, tg, nullptr, 0.0);
      }
    }
  }

  std::uint64_t loaded(int c, bool masked) const {
    return masked ? counts_.loaded(s_.assignment.group(c).size()) : counts_.full(M());
  }

  void step_ems(const ContactSlot& slot, RoundLog& log) {
    const int t = s_.round + 1;
    std::optional<int> connected;
    if (slot.cluster) {
      const int c = *slot.cluster;
      const std::uint64_t per_device = group_bytes(s_.assignment.group(c), true);
      log.bytes_budget = cluster_budget(slot, J());
      if (feasible(slot, per_device)) {
        connected = c;
        log.bytes_up = per_device * static_cast<std::uint64_t>(J());
      } else {
        log.event = "infeasible";
      }
    }
    for (int c = 0; c < static_cast<int>(s_.devices.size()); ++c) {
      if (connected && *connected == c) {
        const auto& group = s_.assignment.group(c);
        aggregate_group(c, group, t, log);
        for (int j = 0; j < J(); ++j) dev(c, j).base = dev(c, j).params = s_.global;
        const auto tg = TrainableGroups::with_gate(M(), group);
        for (int j = 0; j < J(); ++j) train(c, j, s_.hyper.local_steps, tg, nullptr, s_.hyper.eta_u);
        aggregate_gate_from(c, log);
        for (int j = 0; j < J(); ++j) dev(c, j).base.gate = dev(c, j).params.gate = s_.global.gate;
      } else {
        disconnected(c, false);
      }
      log.params_loaded_max = std::max(log.params_loaded_max, loaded(c, false));
    }
    if (log.event.empty()) log.event = connected ? "aggregate" : "local-step";
  }

  void step_enhanced(const ContactSlot& slot, RoundLog& log) {
    const int t = s_.round + 1;
    std::optional<int> connected;
    if (slot.cluster) {
      const int c = *slot.cluster;
      const std::uint64_t per_device = group_bytes(s_.assignment.group(c), false);
      log.bytes_budget = cluster_budget(slot, J());
      if (feasible(slot, per_device)) {
        connected = c;
        log.bytes_up = per_device * static_cast<std::uint64_t>(J());
      } else {
        log.event = "infeasible";
      }
    }
    for (int c = 0; c < static_cast<int>(s_.devices.size()); ++c) {
      const auto& group = s_.assignment.group(c);
      if (connected && *connected == c) {
        aggregate_group(c, group, t, log);
        for (int j = 0; j < J(); ++j) {
          for (int m : group) {
            const auto& e = s_.global.experts[static_cast<std::size_t>(m)];
            dev(c, j).params.experts[static_cast<std::size_t>(m)] = e;
            dev(c, j).base.experts[static_cast<std::size_t>(m)] = e;
          }
        }
        if (!group.empty() && s_.hyper.local_steps > 0) {
          const auto tg = TrainableGroups::experts_only(M(), group);
          for (int j = 0; j < J(); ++j) {
            const MaskedGate mg = apply_masked_gate(dev(c, j).params.gate, group);
            train(c, j, s_.hyper.local_steps, tg, &mg, 0.0);
          }
        }
      } else {
        disconnected(c, true);
      }
      if (!group.empty()) log.params_loaded_max = std::max(log.params_loaded_max, loaded(c, true));
    }
    if (log.event.empty()) log.event = connected ? "aggregate" : "local-step";
  }

  FederationState s_;
  const SyntheticData* data_;
  const ContactPlan* plan_;
  std::vector<Sample> global_data_;
  ParamCounts counts_;
};

struct RunResult {
  MoEParams final_model;
  std::vector<RoundLog> logs;
};

inline RunResult run_scheme(Scheme scheme, const MoEParams& model, const SyntheticData& data, const ContactPlan& plan,
                            const ExpertAssignment& assignment, const FederationHyper& hyper, std::uint64_t seed) {
  Federation f(initial_state(scheme, hyper, model, assignment, plan.clusters, data.devices(), seed), data, plan);
  f.run();
  return {f.state().global, f.state().logs};
}

inline RunResult run_baseline(const MoEParams& model, const SyntheticData& data, const ContactPlan& plan,
                              const FederationHyper& hyper, std::uint64_t seed) {
  return run_scheme(Scheme::kBaseline, model, data, plan, ExpertAssignment(plan.clusters, model.config.experts), hyper,
                    seed);
}

inline RunResult run_ems_fl(const MoEParams& model, const SyntheticData& data, const ContactPlan& plan,
                            const ExpertAssignment& assignment, const FederationHyper& hyper, std::uint64_t seed) {
  return run_scheme(Scheme::kEmsFl, model, data, plan, assignment, hyper, seed);
}

inline RunResult run_enhanced(const MoEParams& model, const SyntheticData& data, const ContactPlan& plan,
                              const ExpertAssignment& assignment, const FederationHyper& hyper, std::uint64_t seed) {
  return run_scheme(Scheme::kEnhanced, model, data, plan, assignment, hyper, seed);
}

// ---------------------------------------------------------------------------
// Metrics CSV

inline constexpr const char* kMetricsHeader =
    "round,scheme,event,cluster,loss_global,grad_var_est,bytes_up,bytes_budget,params_loaded_max";

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string format_budget(std::uint64_t b) {
  return b == std::numeric_limits<std::uint64_t>::max() ? std::string("inf") : std::to_string(b);
}

inline void write_metrics(std::ostream& os, const std::vector<RoundLog>& logs) {
  os << kMetricsHeader << '\n';
  for (const auto& l : logs) {
    os << l.round << ',' << to_string(l.scheme) << ',' << l.event << ','
       << (l.cluster ? std::to_string(*l.cluster + 1) : std::string("IDLE")) << ',' << format_double(l.loss_global)
       << ',' << (l.grad_var ? format_double(*l.grad_var) : std::string()) << ',' << l.bytes_up << ','
       << format_budget(l.bytes_budget) << ',' << l.params_loaded_max << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoint
//
// Layout (little-endian host order):
//   "OMOECKPT" u32 version
//   scheme u8, hyper, round i32
//   global MoEParams, assignment, expert_last_update, gate_updates
//   devices: u32 C, u32 J, then params/base per device
//   generator state as a length-prefixed decimal string
//   logs
// Matrices are u64 rows, u64 cols, then column-major doubles.

inline constexpr char kCheckpointMagic[8] = {'O', 'M', 'O', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckpt {

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void mat(const MatrixXd& m) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    out_.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  void vec(const VectorXd& v) {
    pod<std::uint64_t>(static_cast<std::uint64_t>(v.size()));
    out_.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  MatrixXd mat() {
    const auto r = pod<std::uint64_t>();
    const auto c = pod<std::uint64_t>();
    if (r > (1u << 24) || c > (1u << 24)) throw FormatError("checkpoint: implausible matrix shape");
    MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    raw(m.data(), static_cast<std::size_t>(m.size()));
    return m;
  }
  VectorXd vec() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 26)) throw FormatError("checkpoint: implausible vector length");
    VectorXd v(static_cast<Eigen::Index>(n));
    raw(v.data(), static_cast<std::size_t>(n));
    return v;
  }
  std::uint64_t count(std::uint64_t limit = 1u << 24) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) throw FormatError("checkpoint: implausible element count");
    return n;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint: truncated file");
  }
  void raw(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, in_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

inline void put(Writer& w, const MoEParams& p) {
  const auto& c = p.config;
  for (int v : {c.layers, c.experts, c.top_k, c.d_in, c.d_hidden, c.d_out, c.n_classes}) w.pod<std::int32_t>(v);
  w.pod<double>(c.noise_std);
  w.pod<std::uint64_t>(p.gate.layers.size());
  for (const auto& g : p.gate.layers) w.mat(g);
  w.pod<std::uint64_t>(p.experts.size());
  for (const auto& e : p.experts) {
    w.pod<std::uint64_t>(e.layers.size());
    for (const auto& l : e.layers) {
      w.mat(l.w1);
      w.vec(l.b1);
      w.mat(l.w2);
      w.vec(l.b2);
    }
  }
  w.mat(p.backbone.embed);
  w.pod<std::uint64_t>(p.backbone.mix.size());
  for (const auto& m : p.backbone.mix) w.mat(m);
  w.mat(p.backbone.head_proj);
  w.mat(p.backbone.head_cls);
}

inline MoEParams get_params(Reader& r) {
  MoEParams p;
  auto& c = p.config;
  for (int* f : {&c.layers, &c.experts, &c.top_k, &c.d_in, &c.d_hidden, &c.d_out, &c.n_classes})
    *f = r.pod<std::int32_t>();
  c.noise_std = r.pod<double>();
  for (auto n = r.count(); n > 0; --n) p.gate.layers.push_back(r.mat());
  for (auto n = r.count(); n > 0; --n) {
    ExpertParams e;
    for (auto k = r.count(); k > 0; --k) {
      ExpertLayer l;
      l.w1 = r.mat();
      l.b1 = r.vec();
      l.w2 = r.mat();
      l.b2 = r.vec();
      e.layers.push_back(std::move(l));
    }
    p.experts.push_back(std::move(e));
  }
  p.backbone.embed = r.mat();
  for (auto n = r.count(); n > 0; --n) p.backbone.mix.push_back(r.mat());
  p.backbone.head_proj = r.mat();
  p.backbone.head_cls = r.mat();
  return p;
}

}  // namespace ckpt

inline std::string checkpoint(const FederationState& s) {
  ckpt::Writer w;
  for (char ch : kCheckpointMagic) w.pod(ch);
  w.pod(kCheckpointVersion);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(s.scheme));
  const auto& h = s.hyper;
  w.pod(h.eta_e);
  w.pod(h.eta_u);
  for (int v : {h.lora_rank, h.local_steps, h.disconnected_steps, h.batch_size, h.gate_rounds}) w.pod<std::int32_t>(v);
  w.pod<std::int32_t>(s.round);
  ckpt::put(w, s.global);
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(s.assignment.clusters()));
  w.pod<std::uint64_t>(s.assignment.owner.size());
  for (int o : s.assignment.owner) w.pod<std::int32_t>(o);
  w.pod<std::uint64_t>(s.expert_last_update.size());
  for (int v : s.expert_last_update) w.pod<std::int32_t>(v);
  w.pod<std::int32_t>(s.gate_updates);
  w.pod<std::uint64_t>(s.devices.size());
  w.pod<std::uint64_t>(s.devices.empty() ? 0 : s.devices.front().size());
  for (const auto& cl : s.devices)
    for (const auto& d : cl) {
      ckpt::put(w, d.params);
      ckpt::put(w, d.base);
    }
  std::ostringstream rs;
  rs << s.rng;
  w.str(rs.str());
  w.pod<std::uint64_t>(s.logs.size());
  for (const auto& l : s.logs) {
    w.pod<std::int32_t>(l.round);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(l.scheme));
    w.str(l.event);
    w.pod<std::int32_t>(l.cluster ? *l.cluster : -1);
    w.pod(l.loss_global);
    w.pod<std::uint8_t>(l.grad_var ? 1 : 0);
    w.pod(l.grad_var.value_or(0.0));
    w.pod(l.bytes_up);
    w.pod(l.bytes_budget);
    w.pod(l.params_loaded_max);
    w.pod<std::uint64_t>(l.experts_aggregated.size());
    for (int m : l.experts_aggregated) w.pod<std::int32_t>(m);
    w.pod<std::uint8_t>(l.gate_aggregated ? 1 : 0);
    w.str(l.phase);
  }
  return w.take();
}

inline FederationState restore(const std::string& bytes) {
  ckpt::Reader r(bytes);
  for (char ch : kCheckpointMagic)
    if (r.pod<char>() != ch) throw FormatError("checkpoint: bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  FederationState s;
  const auto scheme = r.pod<std::uint8_t>();
  if (scheme > 2) throw FormatError("checkpoint: unknown scheme");
  s.scheme = static_cast<Scheme>(scheme);
  auto& h = s.hyper;
  h.eta_e = r.pod<double>();
  h.eta_u = r.pod<double>();
  for (int* f : {&h.lora_rank, &h.local_steps, &h.disconnected_steps, &h.batch_size, &h.gate_rounds})
    *f = r.pod<std::int32_t>();
  s.round = r.pod<std::int32_t>();
  s.global = ckpt::get_params(r);
  const auto clusters = r.count();
  const auto experts = r.count();
  s.assignment = ExpertAssignment(static_cast<int>(clusters), static_cast<int>(experts));
  for (std::uint64_t m = 0; m < experts; ++m) {
    const int o = r.pod<std::int32_t>();
    if (o != ExpertAssignment::kUnassigned) {
      if (o < 0 || static_cast<std::uint64_t>(o) >= clusters) throw FormatError("checkpoint: bad assignment");
      s.assignment.assign(static_cast<int>(m), o);
    }
  }
  for (auto n = r.count(); n > 0; --n) s.expert_last_update.push_back(r.pod<std::int32_t>());
  s.gate_updates = r.pod<std::int32_t>();
  const auto C = r.count();
  const auto J = r.count();
  s.devices.resize(C);
  for (auto& cl : s.devices)
    for (std::uint64_t j = 0; j < J; ++j) {
      DeviceState d;
      d.params = ckpt::get_params(r);
      d.base = ckpt::get_params(r);
      cl.push_back(std::move(d));
    }
  std::istringstream rs(r.str());
  rs >> s.rng;
  if (!rs) throw FormatError("checkpoint: bad generator state");
  for (auto n = r.count(); n > 0; --n) {
    RoundLog l;
    l.round = r.pod<std::int32_t>();
    l.scheme = static_cast<Scheme>(r.pod<std::uint8_t>());
    l.event = r.str();
    const int c = r.pod<std::int32_t>();
    if (c >= 0) l.cluster = c;
    l.loss_global = r.pod<double>();
    const bool has_gv = r.pod<std::uint8_t>() != 0;
    const double gv = r.pod<double>();
    if (has_gv) l.grad_var = gv;
    l.bytes_up = r.pod<std::uint64_t>();
    l.bytes_budget = r.pod<std::uint64_t>();
    l.params_loaded_max = r.pod<std::uint64_t>();
    for (auto k = r.count(); k > 0; --k) l.experts_aggregated.push_back(r.pod<std::int32_t>());
    l.gate_aggregated = r.pod<std::uint8_t>() != 0;
    l.phase = r.str();
    s.logs.push_back(std::move(l));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes");
  return s;
}

}  // namespace orbitmoe
