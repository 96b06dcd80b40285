// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Expert-driven model splitting: measure how often each cluster's trial data
// routes to each expert, truncate weak relevance, and assign every expert to
// at most one cluster.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "orbitmoe/assignment.hpp"
#include "orbitmoe/common.hpp"
#include "orbitmoe/moe.hpp"

namespace orbitmoe {

// Matrices are experts x clusters.
struct RelevanceMatrix {
  MatrixXd p;
  double p_th = 0.0;
  MatrixXd p_trunc;
  MatrixXd p_assign;
  std::vector<bool> unassignable;
};

// p[m][c] = L_m / (L * N_trial): the share of layer-routing decisions on
// cluster c's trial set that select expert m. Gating noise is disabled.
inline MatrixXd relevance(const MoEParams& model, const std::vector<std::vector<Sample>>& trials) {
  if (trials.empty()) throw ArgumentError("relevance: no trial sets");
  MoEParams quiet = model;
  quiet.config.noise_std = 0.0;
  const int M = model.config.experts;
  const int L = model.config.layers;
  MatrixXd p = MatrixXd::Zero(M, static_cast<Eigen::Index>(trials.size()));
  for (std::size_t c = 0; c < trials.size(); ++c) {
    if (trials[c].empty()) throw ArgumentError("relevance: empty trial set for cluster " + std::to_string(c + 1));
    for (const auto& s : trials[c]) {
      const auto trace = forward(quiet, s.x).trace;
      for (const auto& route : trace.layers)
        for (int m : route.experts) p(m, static_cast<Eigen::Index>(c)) += 1.0;
    }
    p.col(static_cast<Eigen::Index>(c)) /= static_cast<double>(L) * static_cast<double>(trials[c].size());
  }
  return p;
}

// Entries below the threshold are zeroed; the threshold itself is kept.
inline MatrixXd truncate(const MatrixXd& p, double p_th) {
  return p.unaryExpr([p_th](double v) { return v >= p_th ? v : 0.0; });
}

struct AssignProbs {
  MatrixXd probs;
  std::vector<bool> unassignable;  // all-zero truncated rows
};

inline AssignProbs assign_probs(const MatrixXd& p_trunc) {
  AssignProbs a;
  a.probs = MatrixXd::Zero(p_trunc.rows(), p_trunc.cols());
  a.unassignable.assign(static_cast<std::size_t>(p_trunc.rows()), false);
  for (Eigen::Index m = 0; m < p_trunc.rows(); ++m) {
    const double s = p_trunc.row(m).sum();
    if (s > 0.0)
      a.probs.row(m) = p_trunc.row(m) / s;
    else
      a.unassignable[static_cast<std::size_t>(m)] = true;
  }
  return a;
}

inline RelevanceMatrix relevance_matrix(const MatrixXd& p, double p_th) {
  RelevanceMatrix r;
  r.p = p;
  r.p_th = p_th;
  r.p_trunc = truncate(p, p_th);
  auto a = assign_probs(r.p_trunc);
  r.p_assign = std::move(a.probs);
  r.unassignable = std::move(a.unassignable);
  return r;
}

inline int default_cap(int experts, int clusters) { return (experts + clusters - 1) / clusters; }

namespace detail {

inline int draw_cluster(const Eigen::RowVectorXd& weights, const std::vector<int>& support, Rng& rng) {
  std::vector<double> w;
  for (int c : support) w.push_back(weights[c]);
  std::discrete_distribution<int> d(w.begin(), w.end());
  return support[static_cast<std::size_t>(d(rng))];
}

}  // namespace detail

// Experts are visited in index order. For expert m a cluster c* is drawn from
// p_assign[m]; it is accepted when c* is still feasible or when no feasible
// cluster has nonzero probability. A rejected draw is replaced by a draw
// restricted to the feasible clusters with nonzero probability. A cluster
// leaves the feasible set once it holds cap_k experts.
inline ExpertAssignment split(const MatrixXd& p_trunc, int C, int cap_k, Rng& rng) {
  if (cap_k < 1) throw ArgumentError("split: cap_k must be >= 1");
  if (p_trunc.cols() != C) throw ArgumentError("split: relevance matrix must have one column per cluster");
  const auto probs = assign_probs(p_trunc);
  const int M = static_cast<int>(p_trunc.rows());
  ExpertAssignment out(C, M);
  std::vector<bool> feasible(static_cast<std::size_t>(C), true);
  for (int m = 0; m < M; ++m) {
    if (probs.unassignable[static_cast<std::size_t>(m)]) continue;
    const Eigen::RowVectorXd row = probs.probs.row(m);
    std::vector<int> support, feasible_support;
    double feasible_mass = 0.0;
    for (int c = 0; c < C; ++c) {
      if (row[c] == 0.0) continue;
      support.push_back(c);
      if (feasible[static_cast<std::size_t>(c)]) {
        feasible_support.push_back(c);
        feasible_mass += row[c];
      }
    }
    int chosen = detail::draw_cluster(row, support, rng);
    if (!feasible[static_cast<std::size_t>(chosen)] && feasible_mass > 0.0)
      chosen = detail::draw_cluster(row, feasible_support, rng);
    out.assign(m, chosen);
    if (static_cast<int>(out.group(chosen).size()) >= cap_k) feasible[static_cast<std::size_t>(chosen)] = false;
  }
  return out;
}

// Parameter view of expert group c, in ascending expert order.
inline std::vector<ExpertParams> group_params(const MoEParams& p, const ExpertAssignment& a, int c) {
  std::vector<ExpertParams> g;
  for (int m : a.group(c)) g.push_back(p.experts.at(static_cast<std::size_t>(m)));
  return g;
}

inline void set_group_params(MoEParams& p, const ExpertAssignment& a, int c, const std::vector<ExpertParams>& g) {
  if (g.size() != a.group(c).size()) throw ProtocolError("group: size mismatch");
  std::size_t i = 0;
  for (int m : a.group(c)) p.experts.at(static_cast<std::size_t>(m)) = g[i++];
}

}  // namespace orbitmoe
