// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Convergence-bound evaluators and empirical plug-ins for their constants.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "orbitmoe/common.hpp"
#include "orbitmoe/data.hpp"
#include "orbitmoe/moe.hpp"

namespace orbitmoe {

struct BoundParams {
  double L_smooth = 1.0;
  double G_E = 1.0;
  double G_U = 1.0;
  double sigma_E2 = 1.0;
  double sigma_U2 = 1.0;
  double zeta_E2 = 0.0;
  double gamma = 1.0;
  double C = 1.0;
  double F0_gap = 1.0;

  void validate() const {
    for (double v : {L_smooth, G_E, G_U, sigma_E2, sigma_U2, zeta_E2, gamma, C, F0_gap})
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("bounds: parameters must be finite and non-negative");
    if (gamma == 0.0 || C == 0.0) throw DomainError("bounds: gamma and C must be positive");
  }
};

namespace detail {
inline double check_T(double T) {
  if (!(T >= 1.0)) throw ArgumentError("bounds: T must be >= 1");
  return std::sqrt(T);
}
}  // namespace detail

// Average squared gradient norm over T orbital cycles, asynchronous scheme:
//   F0/(gamma C sqrt T) + 5 L C^2 gamma [C (G_E^2 + s_E^2) + G_U^2 + s_U^2] / sqrt T
inline double bound_emsfl(const BoundParams& p, double T) {
  p.validate();
  const double rt = detail::check_T(T);
  const double C = p.C;
  const double first = p.F0_gap / (p.gamma * C * rt);
  const double second = 5.0 * p.L_smooth * C * C * p.gamma *
                        (C * (p.G_E * p.G_E + p.sigma_E2) + p.G_U * p.G_U + p.sigma_U2) / rt;
  return first + second;
}

// Synchronous baseline:
//   F0/(C sqrt T) + [5 L C^2 (G_E^2 + z_E^2 + s_E^2) + 5 L C^2 gamma^2 (G_U^2 + s_U^2)] / sqrt T
inline double bound_baseline(const BoundParams& p, double T) {
  p.validate();
  const double rt = detail::check_T(T);
  const double C = p.C;
  const double first = p.F0_gap / (C * rt);
  const double experts = 5.0 * p.L_smooth * C * C * (p.G_E * p.G_E + p.zeta_E2 + p.sigma_E2);
  const double gate = 5.0 * p.L_smooth * C * C * p.gamma * p.gamma * (p.G_U * p.G_U + p.sigma_U2);
  return first + (experts + gate) / rt;
}

// Heterogeneity variance at which both bounds coincide, found by bisection
// (tolerance 1e-9 on zeta_E^2). Zero when the baseline bound already exceeds
// the asynchronous one at zeta_E^2 = 0.
inline double crossover_zeta(BoundParams p, double T, double tol = 1e-9) {
  p.zeta_E2 = 0.0;
  const double target = bound_emsfl(p, T);
  auto gap = [&](double z) {
    p.zeta_E2 = z;
    return bound_baseline(p, T) - target;
  };
  if (gap(0.0) >= 0.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (gap(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw DomainError("crossover: no crossing found");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Step-size rule eta_E <= eta_U / gamma <= 1/sqrt(T).
inline bool step_sizes_admissible(double eta_e, double eta_u, double gamma, double T) {
  return eta_e <= eta_u / gamma && eta_u / gamma <= 1.0 / std::sqrt(T);
}
inline double max_eta_e(double eta_u, double gamma) { return eta_u / gamma; }

// ||grad F(theta)||^2 over all trainable parameters (every expert and the
// gate) on the given dataset, gating noise disabled.
inline double estimate_grad_variance(const MoEParams& model, Batch dataset) {
  MoEParams quiet = model;
  quiet.config.noise_std = 0.0;
  const auto g = backward(quiet, dataset, TrainableGroups::all(model.config.experts));
  return flatten(g).squaredNorm();
}

struct DeviceGradient {
  VectorXd expert;
  VectorXd gate;
};

// Global and per-device gradients at one parameter point.
struct GradientSnapshot {
  VectorXd theta;
  VectorXd grad_expert;
  VectorXd grad_gate;
  double loss = 0.0;
  std::vector<std::vector<DeviceGradient>> devices;  // [cluster][device]
};

inline VectorXd flatten(const GateParams& g) {
  Gradients tmp;
  tmp.gate = g;
  return flatten(tmp);
}

inline GradientSnapshot take_snapshot(const MoEParams& model, const SyntheticData& data) {
  MoEParams quiet = model;
  quiet.config.noise_std = 0.0;
  const int M = model.config.experts;
  const auto global = data.global();
  GradientSnapshot s;
  s.theta = flatten(quiet, TrainableGroups::all(M));
  const auto g = backward(quiet, global, TrainableGroups::all(M));
  s.loss = g.loss;
  Gradients ge = g;
  ge.gate.reset();
  s.grad_expert = flatten(ge);
  s.grad_gate = flatten(*g.gate);
  for (const auto& cd : data.clusters) {
    std::vector<DeviceGradient> devs;
    for (const auto& shard : cd.shards) {
      const auto dg = backward(quiet, shard, TrainableGroups::all(M));
      Gradients e = dg;
      e.gate.reset();
      devs.push_back({flatten(e), flatten(*dg.gate)});
    }
    s.devices.push_back(std::move(devs));
  }
  return s;
}

// Empirical plug-ins:
//   L_smooth  max ||g_i - g_j|| / ||theta_i - theta_j|| over snapshot pairs
//   G_E, G_U  max observed global gradient norms
//   sigma_E2  mean within-cluster dispersion of device expert gradients
//   zeta_E2   mean squared distance of cluster-mean expert gradients to the global one
//   sigma_U2  mean squared distance of device gate gradients to the global one
//   F0_gap    first snapshot loss minus the smallest observed loss
inline BoundParams estimate_bound_constants(const std::vector<GradientSnapshot>& snaps, double gamma, double C) {
  if (snaps.size() < 2) throw ArgumentError("bound constants: at least two snapshots are required");
  BoundParams p;
  p.gamma = gamma;
  p.C = C;
  p.L_smooth = 0.0;
  p.G_E = 0.0;
  p.G_U = 0.0;
  auto full_grad = [](const GradientSnapshot& s) {
    VectorXd g(s.grad_expert.size() + s.grad_gate.size());
    g << s.grad_expert, s.grad_gate;
    return g;
  };
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    for (std::size_t j = i + 1; j < snaps.size(); ++j) {
      const double dtheta = (snaps[i].theta - snaps[j].theta).norm();
      if (dtheta == 0.0) continue;
      p.L_smooth = std::max(p.L_smooth, (full_grad(snaps[i]) - full_grad(snaps[j])).norm() / dtheta);
    }
  }
  double sig_e = 0.0, zeta = 0.0, sig_u = 0.0, min_loss = std::numeric_limits<double>::infinity();
  std::size_t n_sig_e = 0, n_zeta = 0, n_sig_u = 0;
  for (const auto& s : snaps) {
    p.G_E = std::max(p.G_E, s.grad_expert.norm());
    p.G_U = std::max(p.G_U, s.grad_gate.norm());
    min_loss = std::min(min_loss, s.loss);
    for (const auto& devs : s.devices) {
      if (devs.empty()) continue;
      VectorXd mean = VectorXd::Zero(s.grad_expert.size());
      for (const auto& d : devs) mean += d.expert;
      mean /= static_cast<double>(devs.size());
      for (const auto& d : devs) {
        sig_e += (d.expert - mean).squaredNorm();
        ++n_sig_e;
        sig_u += (d.gate - s.grad_gate).squaredNorm();
        ++n_sig_u;
      }
      zeta += (mean - s.grad_expert).squaredNorm();
      ++n_zeta;
    }
  }
  p.sigma_E2 = n_sig_e ? sig_e / static_cast<double>(n_sig_e) : 0.0;
  p.zeta_E2 = n_zeta ? zeta / static_cast<double>(n_zeta) : 0.0;
  p.sigma_U2 = n_sig_u ? sig_u / static_cast<double>(n_sig_u) : 0.0;
  p.F0_gap = std::max(0.0, snaps.front().loss - min_loss);
  return p;
}

}  // namespace orbitmoe
