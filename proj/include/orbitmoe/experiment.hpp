// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment assembly from an ExperimentConfig:
// data -> model and gate pretraining -> relevance and split -> contact plan
// -> federated run.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "orbitmoe/analysis.hpp"
#include "orbitmoe/assignment.hpp"
#include "orbitmoe/channel.hpp"
#include "orbitmoe/config.hpp"
#include "orbitmoe/data.hpp"
#include "orbitmoe/federation.hpp"
#include "orbitmoe/moe.hpp"
#include "orbitmoe/split.hpp"

namespace orbitmoe {

// Small labelled pool drawn from every modality, standing in for the shared
// samples the gate is pretrained on.
inline std::vector<Sample> shared_pool(const std::vector<ModalitySpec>& specs, int per_modality, std::uint64_t seed) {
  Rng rng = derive_rng(seed, Stream::kShared);
  std::vector<Sample> pool;
  for (const auto& spec : specs) {
    std::vector<MatrixXd> chol;
    for (const auto& cov : spec.class_covs) chol.push_back(Eigen::LLT<MatrixXd>(cov).matrixL());
    for (int i = 0; i < per_modality; ++i)
      pool.push_back(detail::draw_sample(spec, chol, static_cast<std::size_t>(i) % spec.labels.size(), rng));
  }
  return pool;
}

// Sets gate row m of every layer to the scaled, normalized centroid of the
// layer inputs of the modalities routed to m. Layers are processed in order
// because deeper inputs depend on shallower routing.
inline void prototype_gate(MoEParams& p, const std::vector<Sample>& pool, const std::vector<int>& modality_expert,
                           double scale) {
  const int M = p.config.experts;
  for (int l = 0; l < p.config.layers; ++l) {
    std::vector<VectorXd> sum(static_cast<std::size_t>(M), VectorXd::Zero(p.config.d_in));
    std::vector<int> n(static_cast<std::size_t>(M), 0);
    for (const auto& s : pool) {
      const int m = modality_expert.at(static_cast<std::size_t>(s.modality));
      sum[static_cast<std::size_t>(m)] += detail::run_forward(p, s.x, nullptr, nullptr).layers[static_cast<std::size_t>(l)].input;
      ++n[static_cast<std::size_t>(m)];
    }
    auto& g = p.gate.layers[static_cast<std::size_t>(l)];
    for (int m = 0; m < M; ++m) {
      const auto& v = sum[static_cast<std::size_t>(m)];
      if (n[static_cast<std::size_t>(m)] == 0 || v.norm() == 0.0) continue;
      g.row(m) = scale * v.normalized().transpose();
    }
  }
}

// Gradient descent on a routing cross-entropy: every layer should send a
// sample of modality k to expert modality_expert[k]. Layer inputs are
// recomputed before each step. Unlike the task loss, this gives the gate a
// signal even when K = 1.
inline void pretrain_gate(MoEParams& p, const std::vector<Sample>& pool, const std::vector<int>& modality_expert,
                          int steps, double eta) {
  if (pool.empty() || steps <= 0 || eta == 0.0) return;
  const double scale = 1.0 / static_cast<double>(pool.size());
  for (int it = 0; it < steps; ++it) {
    GateParams grad = zeros_like(p.gate);
    for (const auto& s : pool) {
      const auto tape = detail::run_forward(p, s.x, nullptr, nullptr);
      const int target = modality_expert.at(static_cast<std::size_t>(s.modality));
      for (int l = 0; l < p.config.layers; ++l) {
        const VectorXd& z = tape.layers[static_cast<std::size_t>(l)].input;
        VectorXd logits = p.gate.layers[static_cast<std::size_t>(l)] * z;
        VectorXd prob = (logits.array() - logits.maxCoeff()).exp().matrix();
        prob /= prob.sum();
        prob[target] -= 1.0;
        grad.layers[static_cast<std::size_t>(l)].noalias() += scale * prob * z.transpose();
      }
    }
    visit_tensor_pairs(p.gate, grad, [&](auto& w, const auto& d) { w -= eta * d; });
  }
}

struct Experiment {
  ExperimentConfig config;
  std::vector<ModalitySpec> specs;
  SyntheticData data;
  std::vector<Sample> shared;
  std::vector<int> modality_expert;  // 0-based
  MoEParams init;
  std::vector<std::vector<Sample>> trials;
  RelevanceMatrix relevance;
  int cap_k = 1;
  ExpertAssignment assignment;
  ContactPlan plan;
  int dropped_slots = 0;
  std::optional<RelevanceRatios> ratios;
  std::vector<std::string> warnings;
};

inline std::vector<int> resolve_modality_expert(const ExperimentConfig& cfg) {
  std::vector<int> map;
  if (cfg.modality_expert.empty()) {
    for (int k = 0; k < cfg.modality_count(); ++k) map.push_back(k % cfg.model.experts);
  } else {
    for (int m : cfg.modality_expert) map.push_back(m - 1);
  }
  return map;
}

inline std::vector<std::vector<Sample>> draw_trials(const SyntheticData& data, int n_trial, std::uint64_t seed) {
  std::vector<std::vector<Sample>> trials;
  for (const auto& cd : data.clusters) trials.push_back(draw_trial(cd, n_trial, seed));
  return trials;
}

inline Experiment build_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Experiment e;
  e.config = cfg;
  const int C = cfg.clusters;
  const int M = cfg.model.experts;
  e.specs = make_modalities(cfg.modality_count(), cfg.model.n_classes, cfg.model.d_in, cfg.separation,
                            cfg.class_separation, cfg.data_noise_sd, cfg.seed);
  e.data = generate(parse_mixing(cfg.mixing, C, cfg.modality_count()), e.specs, C, cfg.devices,
                    cfg.samples_per_device, cfg.seed);
  e.modality_expert = resolve_modality_expert(cfg);

  Rng init_rng = derive_rng(cfg.seed, Stream::kModelInit);
  e.init = init_params(cfg.model, init_rng);
  e.shared = shared_pool(e.specs, cfg.shared_samples, cfg.seed);
  if (cfg.gate_init == "prototype") prototype_gate(e.init, e.shared, e.modality_expert, cfg.gate_scale);
  pretrain_gate(e.init, e.shared, e.modality_expert, cfg.gate_pretrain_steps, cfg.gate_pretrain_eta);

  e.trials = draw_trials(e.data, cfg.n_trial, cfg.seed);
  e.relevance = relevance_matrix(relevance(e.init, e.trials), cfg.p_th);
  e.cap_k = cfg.cap_k > 0 ? cfg.cap_k : default_cap(M, C);
  Rng split_rng = derive_rng(cfg.seed, Stream::kSplit);
  e.assignment = split(e.relevance.p_trunc, C, e.cap_k, split_rng);
  const auto unassigned = e.assignment.unassigned();
  if (!unassigned.empty())
    e.warnings.push_back(std::to_string(unassigned.size()) + " expert(s) unassignable at p_th and frozen everywhere");

  e.plan = build_contact_plan(C, cfg.total_rounds(), cfg.idle_slots, cfg.window_seconds);
  e.dropped_slots = attach_link(e.plan, cfg.link, cfg.geometry);
  if (e.dropped_slots > 0)
    e.warnings.push_back(std::to_string(e.dropped_slots) + " contact slot(s) below the elevation threshold became idle");

  try {
    e.ratios = relevance_ratios(e.data, e.assignment, e.modality_expert);
  } catch (const DomainError&) {
    e.ratios.reset();
  }
  // Relative slack so that eta_e == eta_u / gamma in decimal does not warn.
  if (e.ratios && e.ratios->gamma > 0.0 && cfg.hyper.eta_e * e.ratios->gamma > cfg.hyper.eta_u * (1.0 + 1e-12))
    e.warnings.push_back("eta_e exceeds eta_u / gamma (gamma = " + format_double(e.ratios->gamma) + ")");
  return e;
}

struct ExperimentResult {
  RunResult run;
  double initial_loss = 0.0;
  double target_loss = 0.0;
  std::optional<int> cycles_to_target;  // first cycle end at or below target
  double final_accuracy = 0.0;
  std::uint64_t total_bytes = 0;
  std::uint64_t max_loaded = 0;
  int infeasible_rounds = 0;
  std::vector<ExpertAssignment> assignments;  // initial split, then each re-split
  FederationState final_state;
};

inline std::optional<int> cycles_to_target(const std::vector<RoundLog>& logs, int cycle_length, double target) {
  for (const auto& l : logs)
    if (l.round % cycle_length == 0 && l.loss_global <= target) return l.round / cycle_length;
  return std::nullopt;
}

inline ExperimentResult summarize(const Experiment& e, RunResult run) {
  ExperimentResult r;
  const auto global = e.data.global();
  r.initial_loss = loss(e.init, global);
  r.target_loss = e.config.target_loss_ratio * r.initial_loss;
  r.cycles_to_target = cycles_to_target(run.logs, e.plan.cycle_length(), r.target_loss);
  r.final_accuracy = accuracy(run.final_model, global);
  for (const auto& l : run.logs) {
    r.total_bytes += l.bytes_up;
    r.max_loaded = std::max(r.max_loaded, l.params_loaded_max);
    if (l.event == "infeasible") ++r.infeasible_rounds;
  }
  r.run = std::move(run);
  return r;
}

// Runs e.config.scheme. Re-splits every resplit_every_cycles cycles from the
// current global model (not for the baseline, which has no partition).
inline ExperimentResult run_experiment(const Experiment& e, std::optional<Scheme> scheme_override = std::nullopt) {
  const auto& cfg = e.config;
  const Scheme scheme = scheme_override.value_or(cfg.scheme);
  Federation fed(initial_state(scheme, cfg.hyper, e.init, e.assignment, cfg.clusters, cfg.devices, cfg.seed), e.data,
                 e.plan);
  std::vector<ExpertAssignment> assignments{e.assignment};
  const int cycle = e.plan.cycle_length();
  const int every = scheme == Scheme::kBaseline ? 0 : cfg.resplit_every_cycles;
  std::uint64_t resplits = 0;
  while (!fed.done()) {
    fed.step();
    const int t = fed.state().round;
    if (every > 0 && !fed.done() && t % (every * cycle) == 0) {
      const auto rm = relevance_matrix(relevance(fed.state().global, e.trials), cfg.p_th);
      Rng rng = derive_rng(cfg.seed, Stream::kSplit, ++resplits);
      assignments.push_back(split(rm.p_trunc, cfg.clusters, e.cap_k, rng));
      fed.reassign(assignments.back());
    }
  }
  auto r = summarize(e, {fed.state().global, fed.state().logs});
  r.assignments = std::move(assignments);
  r.final_state = fed.state();
  return r;
}

// Gradient snapshots of the global model at the start and at every cycle
// end of a run, for estimate_bound_constants.
inline std::vector<GradientSnapshot> cycle_snapshots(const Experiment& e, Scheme scheme) {
  const auto& cfg = e.config;
  Federation fed(initial_state(scheme, cfg.hyper, e.init, e.assignment, cfg.clusters, cfg.devices, cfg.seed), e.data,
                 e.plan);
  std::vector<GradientSnapshot> snaps{take_snapshot(e.init, e.data)};
  while (!fed.done()) {
    fed.step();
    if (fed.state().round % e.plan.cycle_length() == 0) snaps.push_back(take_snapshot(fed.state().global, e.data));
  }
  return snaps;
}

}  // namespace orbitmoe
