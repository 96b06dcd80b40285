// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tiny federated instances and straight-line reference scripts of the three
// protocols. The scripts share only the gradient and the rank-r round trip
// with the library; device bookkeeping, upload reconstruction, averaging and
// the update rule are written out here. Full-shard batches and zero routing
// noise keep every run free of random draws.

#pragma once

#include <set>
#include <vector>

#include "orbitmoe/federation.hpp"
#include "test_util.hpp"

namespace orbitmoe::testing {

struct TinyInstance {
  MoEParams init;
  SyntheticData data;
  ContactPlan plan;
  ExpertAssignment assignment;
  FederationHyper hyper;
};

// C = 2, M = 2, expert m owned by cluster m.
inline TinyInstance tiny_instance(int J, int top_k, int rounds, int idle_slots, int lora_rank, std::uint64_t seed) {
  TinyInstance t;
  MoEConfig c;
  c.layers = 1;
  c.experts = 2;
  c.top_k = top_k;
  c.d_in = 3;
  c.d_hidden = 4;
  c.d_out = 3;
  c.n_classes = 2;
  Rng rng(seed);
  t.init = random_params(c, rng);
  t.data = generate(HeterogeneityProfile::uniform(2, 2), make_modalities(2, 2, 3, 2.0, 2.0, 1.0, seed), 2, J, 4, seed);
  t.plan = build_contact_plan(2, rounds, idle_slots, 600.0);
  t.assignment = ExpertAssignment(2, 2);
  t.assignment.assign(0, 0);
  t.assignment.assign(1, 1);
  t.hyper.eta_e = 0.05;
  t.hyper.eta_u = 0.2;
  t.hyper.lora_rank = lora_rank;
  t.hyper.local_steps = 1;
  t.hyper.disconnected_steps = 1;
  t.hyper.batch_size = 0;
  return t;
}

namespace oracle {

struct Device {
  MoEParams params;
  MoEParams base;
};

using Devices = std::vector<std::vector<Device>>;  // [cluster][device]

inline Devices fresh_devices(const MoEParams& init, int C, int J) {
  return Devices(static_cast<std::size_t>(C), std::vector<Device>(static_cast<std::size_t>(J), Device{init, init}));
}

inline const std::vector<Sample>& shard(const TinyInstance& t, int c, int j) {
  return t.data.clusters[static_cast<std::size_t>(c)].shards[static_cast<std::size_t>(j)];
}

// w <- w - eta * g, spelled out per tensor.
inline void descend(MoEParams& p, const Gradients& g, double eta_e, double eta_u) {
  for (std::size_t m = 0; m < g.experts.size(); ++m) {
    if (!g.experts[m]) continue;
    for (std::size_t l = 0; l < p.experts[m].layers.size(); ++l) {
      auto& w = p.experts[m].layers[l];
      const auto& d = g.experts[m]->layers[l];
      w.w1 = w.w1 - eta_e * d.w1;
      w.b1 = w.b1 - eta_e * d.b1;
      w.w2 = w.w2 - eta_e * d.w2;
      w.b2 = w.b2 - eta_e * d.b2;
    }
  }
  if (g.gate)
    for (std::size_t l = 0; l < p.gate.layers.size(); ++l)
      p.gate.layers[l] = p.gate.layers[l] - eta_u * g.gate->layers[l];
}

inline void plain_step(MoEParams& p, const std::vector<Sample>& batch, const TrainableGroups& tg, double eta_e,
                       double eta_u) {
  descend(p, backward(p, batch, tg), eta_e, eta_u);
}

// Gate replaced by its masked copy for the pass; only the experts move.
inline void masked_step(MoEParams& p, const std::vector<Sample>& batch, const std::set<int>& group, double eta_e) {
  const MaskedGate mg = apply_masked_gate(p.gate, group);
  descend(p, backward(p, batch, TrainableGroups::experts_only(p.config.experts, group), mg), eta_e, 0.0);
}

// What the satellite sees from one device: base + (possibly rank-r) delta.
inline MatrixXd received(const MatrixXd& local, const MatrixXd& base, int rank) {
  const MatrixXd delta = local - base;
  if (rank == 0) return base + delta;
  return base + lora_roundtrip(delta, rank).reconstruction;
}

inline VectorXd received(const VectorXd& local, const VectorXd& base, int) { return base + (local - base); }

template <typename T>
T mean_of(const std::vector<T>& xs) {
  T sum = xs[0];
  for (std::size_t j = 1; j < xs.size(); ++j) sum = sum + xs[j];
  return sum / static_cast<double>(xs.size());
}

inline ExpertParams average_expert(const std::vector<Device>& devs, int m, int rank) {
  ExpertParams out = devs[0].params.experts[static_cast<std::size_t>(m)];
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    std::vector<MatrixXd> w1, w2;
    std::vector<VectorXd> b1, b2;
    for (const auto& d : devs) {
      const auto& lo = d.params.experts[static_cast<std::size_t>(m)].layers[l];
      const auto& ba = d.base.experts[static_cast<std::size_t>(m)].layers[l];
      w1.push_back(received(lo.w1, ba.w1, rank));
      b1.push_back(received(lo.b1, ba.b1, rank));
      w2.push_back(received(lo.w2, ba.w2, rank));
      b2.push_back(received(lo.b2, ba.b2, rank));
    }
    out.layers[l] = {mean_of(w1), mean_of(b1), mean_of(w2), mean_of(b2)};
  }
  return out;
}

inline GateParams average_gate(const std::vector<Device>& devs, int rank) {
  GateParams out = devs[0].params.gate;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    std::vector<MatrixXd> u;
    for (const auto& d : devs) u.push_back(received(d.params.gate.layers[l], d.base.gate.layers[l], rank));
    out.layers[l] = mean_of(u);
  }
  return out;
}

// Baseline round with cluster c in view: broadcast, one step on everything,
// upload and average every expert and the gate.
inline void baseline_round(const TinyInstance& t, MoEParams& global, int c) {
  const int J = t.data.devices();
  std::vector<Device> devs(static_cast<std::size_t>(J), Device{global, global});
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < t.hyper.local_steps; ++k)
      plain_step(devs[static_cast<std::size_t>(j)].params, shard(t, c, j), TrainableGroups::all(2), t.hyper.eta_e,
                 t.hyper.eta_u);
  global.experts[0] = average_expert(devs, 0, t.hyper.lora_rank);
  global.experts[1] = average_expert(devs, 1, t.hyper.lora_rank);
  global.gate = average_gate(devs, t.hyper.lora_rank);
}

// Cluster c out of contact: its own experts step with the gate frozen.
inline void ems_disconnected(const TinyInstance& t, Devices& devs, int c, bool masked) {
  const std::set<int>& group = t.assignment.group(c);
  for (int k = 0; k < t.hyper.disconnected_steps; ++k)
    for (std::size_t j = 0; j < devs[static_cast<std::size_t>(c)].size(); ++j) {
      auto& p = devs[static_cast<std::size_t>(c)][j].params;
      if (masked)
        masked_step(p, shard(t, c, static_cast<int>(j)), group, t.hyper.eta_e);
      else
        plain_step(p, shard(t, c, static_cast<int>(j)), TrainableGroups::experts_only(2, group), t.hyper.eta_e, 0.0);
    }
}

// Cluster c in contact: upload experts, aggregate, download the full model,
// one step on experts + gate, upload the gate, aggregate, download it.
inline void ems_connected(const TinyInstance& t, MoEParams& global, Devices& devs, int c) {
  auto& cl = devs[static_cast<std::size_t>(c)];
  for (int m : t.assignment.group(c)) global.experts[static_cast<std::size_t>(m)] = average_expert(cl, m, t.hyper.lora_rank);
  for (auto& d : cl) d.params = d.base = global;
  for (int k = 0; k < t.hyper.local_steps; ++k)
    for (std::size_t j = 0; j < cl.size(); ++j)
      plain_step(cl[j].params, shard(t, c, static_cast<int>(j)), TrainableGroups::with_gate(2, t.assignment.group(c)),
                 t.hyper.eta_e, t.hyper.eta_u);
  global.gate = average_gate(cl, t.hyper.lora_rank);
  for (auto& d : cl) d.params.gate = d.base.gate = global.gate;
}

// Enhanced expert phase, cluster c in contact: only its own experts travel
// and the gate stays frozen and masked.
inline void enhanced_connected(const TinyInstance& t, MoEParams& global, Devices& devs, int c) {
  auto& cl = devs[static_cast<std::size_t>(c)];
  const std::set<int>& group = t.assignment.group(c);
  for (int m : group) global.experts[static_cast<std::size_t>(m)] = average_expert(cl, m, t.hyper.lora_rank);
  for (auto& d : cl)
    for (int m : group) {
      d.params.experts[static_cast<std::size_t>(m)] = global.experts[static_cast<std::size_t>(m)];
      d.base.experts[static_cast<std::size_t>(m)] = global.experts[static_cast<std::size_t>(m)];
    }
  for (int k = 0; k < t.hyper.local_steps; ++k)
    for (std::size_t j = 0; j < cl.size(); ++j) masked_step(cl[j].params, shard(t, c, static_cast<int>(j)), group, t.hyper.eta_e);
}

}  // namespace oracle

// Plan: cluster 1, cluster 2, idle, cluster 1.
inline MoEParams baseline_reference(const TinyInstance& t) {
  MoEParams g = t.init;
  oracle::baseline_round(t, g, 0);
  oracle::baseline_round(t, g, 1);
  oracle::baseline_round(t, g, 0);
  return g;
}

// Plan: clusters 1, 2, 1, 2.
inline MoEParams ems_reference(const TinyInstance& t) {
  MoEParams g = t.init;
  auto devs = oracle::fresh_devices(t.init, 2, t.data.devices());
  // round 1
  oracle::ems_connected(t, g, devs, 0);
  oracle::ems_disconnected(t, devs, 1, false);
  // round 2
  oracle::ems_disconnected(t, devs, 0, false);
  oracle::ems_connected(t, g, devs, 1);
  // round 3
  oracle::ems_connected(t, g, devs, 0);
  oracle::ems_disconnected(t, devs, 1, false);
  // round 4
  oracle::ems_disconnected(t, devs, 0, false);
  oracle::ems_connected(t, g, devs, 1);
  return g;
}

// Plan: clusters 1, 2, 1, 2 with the last two rounds in the gate phase.
inline MoEParams enhanced_reference(const TinyInstance& t) {
  MoEParams g = t.init;
  auto devs = oracle::fresh_devices(t.init, 2, t.data.devices());
  // round 1, expert phase
  oracle::enhanced_connected(t, g, devs, 0);
  oracle::ems_disconnected(t, devs, 1, true);
  // round 2, expert phase
  oracle::ems_disconnected(t, devs, 0, true);
  oracle::enhanced_connected(t, g, devs, 1);
  // round 3, gate phase
  oracle::ems_connected(t, g, devs, 0);
  oracle::ems_disconnected(t, devs, 1, false);
  // round 4, gate phase
  oracle::ems_disconnected(t, devs, 0, false);
  oracle::ems_connected(t, g, devs, 1);
  return g;
}

// Library runs on the instances the references script.
inline MoEParams baseline_library(const TinyInstance& t) {
  return run_baseline(t.init, t.data, t.plan, t.hyper, 0).final_model;
}
inline MoEParams ems_library(const TinyInstance& t) {
  return run_ems_fl(t.init, t.data, t.plan, t.assignment, t.hyper, 0).final_model;
}
inline MoEParams enhanced_library(const TinyInstance& t) {
  return run_enhanced(t.init, t.data, t.plan, t.assignment, t.hyper, 0).final_model;
}

// Baseline instance: 4 rounds with one idle slot per cycle.
inline TinyInstance baseline_instance(int J, int top_k, int lora_rank, std::uint64_t seed) {
  return tiny_instance(J, top_k, 4, 1, lora_rank, seed);
}
inline TinyInstance ems_instance(int J, int top_k, int lora_rank, std::uint64_t seed) {
  return tiny_instance(J, top_k, 4, 0, lora_rank, seed);
}
inline TinyInstance enhanced_instance(int J, int top_k, int lora_rank, std::uint64_t seed) {
  auto t = tiny_instance(J, top_k, 4, 0, lora_rank, seed);
  t.hyper.gate_rounds = 2;
  return t;
}

}  // namespace orbitmoe::testing
