// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale sparse mixture-of-experts model.
//
// Architecture (all widths from MoEConfig):
//   h_0      = embed * x                                  (frozen)
//   layer l  : z = h_l
//              logits = gate_l * z, Top-K over logits (+ optional noise)
//              y = z + sum_k w_k * expert_k(z)            (residual)
//              expert(z) = W2 * relu(W1 * z + b1) + b2
//   h_{l+1}  = mix_l * y                                  (frozen, l < L-1)
//   output   = head_cls * tanh(head_proj * y_{L-1})       (frozen)
//
// Routing weights are the softmax of the clean gate logits restricted to the
// selected set; selection itself is treated as non-differentiable.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "orbitmoe/common.hpp"

namespace orbitmoe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MoEConfig {
  int layers = 1;
  int experts = 1;
  int top_k = 1;
  int d_in = 4;
  int d_hidden = 4;
  int d_out = 4;
  int n_classes = 2;
  double noise_std = 0.0;

  void validate() const {
    if (layers < 1) throw ConfigError("moe: layers must be >= 1");
    if (experts < 1) throw ConfigError("moe: experts must be >= 1");
    if (top_k < 1 || top_k > experts) throw ConfigError("moe: top_k must lie in [1, experts]");
    if (d_in < 1 || d_hidden < 1 || d_out < 1) throw ConfigError("moe: widths must be >= 1");
    if (n_classes < 2) throw ConfigError("moe: n_classes must be >= 2");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("moe: noise_std must be >= 0");
  }

  friend bool operator==(const MoEConfig&, const MoEConfig&) = default;
};

struct Sample {
  VectorXd x;
  int label = 0;
  int modality = 0;
};

using Batch = std::span<const Sample>;

struct ExpertLayer {
  MatrixXd w1;  // d_hidden x d_in
  VectorXd b1;  // d_hidden
  MatrixXd w2;  // d_in x d_hidden
  VectorXd b2;  // d_in
};

// Expert m: its per-layer networks across all MoE layers.
struct ExpertParams {
  std::vector<ExpertLayer> layers;
};

struct GateParams {
  std::vector<MatrixXd> layers;  // experts x d_in, one per MoE layer
};

struct Backbone {
  MatrixXd embed;             // d_in x d_in
  std::vector<MatrixXd> mix;  // layers - 1 maps, d_in x d_in
  MatrixXd head_proj;         // d_out x d_in
  MatrixXd head_cls;          // n_classes x d_out
};

struct MoEParams {
  MoEConfig config;
  GateParams gate;
  std::vector<ExpertParams> experts;
  Backbone backbone;
};

// Visitors over every tensor of a parameter group, in a fixed order.
template <typename Group, typename F>
void visit_tensors(Group& expert, F&& f)
  requires std::is_same_v<std::remove_const_t<Group>, ExpertParams>
{
  for (auto& l : expert.layers) {
    f(l.w1);
    f(l.b1);
    f(l.w2);
    f(l.b2);
  }
}

template <typename Group, typename F>
void visit_tensors(Group& gate, F&& f)
  requires std::is_same_v<std::remove_const_t<Group>, GateParams>
{
  for (auto& m : gate.layers) f(m);
}

// Visits matching tensors of two groups with identical shapes.
template <typename Group, typename F>
void visit_tensor_pairs(Group& a, const std::remove_const_t<Group>& b, F&& f) {
  std::vector<const MatrixXd*> mats;
  std::vector<const VectorXd*> vecs;
  visit_tensors(b, [&](const auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, MatrixXd>)
      mats.push_back(&t);
    else
      vecs.push_back(&t);
  });
  std::size_t mi = 0, vi = 0;
  visit_tensors(a, [&](auto& t) {
    if constexpr (std::is_same_v<std::decay_t<decltype(t)>, MatrixXd>)
      f(t, *mats.at(mi++));
    else
      f(t, *vecs.at(vi++));
  });
}

template <typename Group>
std::size_t tensor_count(const Group& g) {
  std::size_t n = 0;
  visit_tensors(g, [&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename Group>
bool same_shape(const Group& a, const Group& b) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sa, sb;
  visit_tensors(a, [&](const auto& t) { sa.emplace_back(t.rows(), t.cols()); });
  visit_tensors(b, [&](const auto& t) { sb.emplace_back(t.rows(), t.cols()); });
  return sa == sb;
}

template <typename Group>
bool bit_equal(const Group& a, const Group& b) {
  if (!same_shape(a, b)) return false;
  bool eq = true;
  visit_tensor_pairs(a, b, [&](const auto& x, const auto& y) {
    eq = eq && std::equal(x.data(), x.data() + x.size(), y.data());
  });
  return eq;
}

inline bool bit_equal(const MoEParams& a, const MoEParams& b) {
  if (a.experts.size() != b.experts.size()) return false;
  for (std::size_t m = 0; m < a.experts.size(); ++m)
    if (!bit_equal(a.experts[m], b.experts[m])) return false;
  auto eqm = [](const MatrixXd& x, const MatrixXd& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() &&
           std::equal(x.data(), x.data() + x.size(), y.data());
  };
  if (!bit_equal(a.gate, b.gate)) return false;
  const auto& ba = a.backbone;
  const auto& bb = b.backbone;
  if (!eqm(ba.embed, bb.embed) || !eqm(ba.head_proj, bb.head_proj) || !eqm(ba.head_cls, bb.head_cls))
    return false;
  if (ba.mix.size() != bb.mix.size()) return false;
  for (std::size_t i = 0; i < ba.mix.size(); ++i)
    if (!eqm(ba.mix[i], bb.mix[i])) return false;
  return true;
}

// Parameter counts used for loaded-memory accounting.
struct ParamCounts {
  std::size_t backbone = 0;
  std::size_t per_expert = 0;
  std::size_t gate = 0;

  std::size_t full(int experts) const { return backbone + gate + per_expert * static_cast<std::size_t>(experts); }
  std::size_t loaded(std::size_t n_experts) const { return backbone + gate + per_expert * n_experts; }
};

inline ParamCounts param_counts(const MoEConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_in);
  const auto h = static_cast<std::size_t>(c.d_hidden);
  const auto L = static_cast<std::size_t>(c.layers);
  ParamCounts p;
  p.backbone = d * d + (L - 1) * d * d + static_cast<std::size_t>(c.d_out) * d +
               static_cast<std::size_t>(c.n_classes) * static_cast<std::size_t>(c.d_out);
  p.per_expert = L * (h * d + h + d * h + d);
  p.gate = L * static_cast<std::size_t>(c.experts) * d;
  return p;
}

namespace detail {

inline MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> n(0.0, sd);
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

}  // namespace detail

// Random initialization. Expert output weights start small so the residual
// path dominates before training.
inline MoEParams init_params(const MoEConfig& cfg, Rng& rng) {
  cfg.validate();
  using detail::gaussian;
  const double sd_in = 1.0 / std::sqrt(static_cast<double>(cfg.d_in));
  MoEParams p;
  p.config = cfg;
  p.backbone.embed = gaussian(cfg.d_in, cfg.d_in, sd_in, rng);
  for (int l = 0; l + 1 < cfg.layers; ++l) p.backbone.mix.push_back(gaussian(cfg.d_in, cfg.d_in, sd_in, rng));
  p.backbone.head_proj = gaussian(cfg.d_out, cfg.d_in, sd_in, rng);
  p.backbone.head_cls = gaussian(cfg.n_classes, cfg.d_out, 1.0 / std::sqrt(static_cast<double>(cfg.d_out)), rng);
  for (int l = 0; l < cfg.layers; ++l) p.gate.layers.push_back(gaussian(cfg.experts, cfg.d_in, sd_in, rng));
  p.experts.resize(static_cast<std::size_t>(cfg.experts));
  for (auto& e : p.experts) {
    for (int l = 0; l < cfg.layers; ++l) {
      ExpertLayer el;
      el.w1 = gaussian(cfg.d_hidden, cfg.d_in, sd_in, rng);
      el.b1 = VectorXd::Zero(cfg.d_hidden);
      el.w2 = gaussian(cfg.d_in, cfg.d_hidden, 0.5 / std::sqrt(static_cast<double>(cfg.d_hidden)), rng);
      el.b2 = VectorXd::Zero(cfg.d_in);
      e.layers.push_back(std::move(el));
    }
  }
  return p;
}

// Set of experts a router may select. An empty optional means "all experts".
class ExpertMask {
 public:
  ExpertMask() = default;
  ExpertMask(int experts, const std::set<int>& allowed) : allowed_(static_cast<std::size_t>(experts), false) {
    for (int m : allowed) {
      if (m < 0 || m >= experts) throw ArgumentError("mask: expert index out of range");
      allowed_[static_cast<std::size_t>(m)] = true;
    }
  }
  static ExpertMask all(int experts) {
    ExpertMask mk;
    mk.allowed_.assign(static_cast<std::size_t>(experts), true);
    return mk;
  }

  bool allows(int m) const { return allowed_.at(static_cast<std::size_t>(m)); }
  int size() const { return static_cast<int>(std::count(allowed_.begin(), allowed_.end(), true)); }
  int experts() const { return static_cast<int>(allowed_.size()); }
  std::set<int> indices() const {
    std::set<int> s;
    for (std::size_t i = 0; i < allowed_.size(); ++i)
      if (allowed_[i]) s.insert(static_cast<int>(i));
    return s;
  }

 private:
  std::vector<bool> allowed_;
};

struct Route {
  std::vector<int> experts;     // selected, in selection order
  std::vector<double> weights;  // softmax over selected clean logits
};

// Per-layer routes for a single sample.
struct ActivationTrace {
  std::vector<Route> layers;
};

// Top-K over the allowed experts. Ties break toward the lower index. When the
// mask admits fewer than K experts the route covers all of them.
inline Route route_logits(const VectorXd& logits, const ExpertMask* mask, int top_k, double noise_std, Rng* rng) {
  const int M = static_cast<int>(logits.size());
  VectorXd perturbed = logits;
  if (noise_std > 0.0) {
    if (rng == nullptr) throw ArgumentError("route: gating noise requires a generator");
    std::normal_distribution<double> n(0.0, noise_std);
    for (int m = 0; m < M; ++m) perturbed[m] += n(*rng);
  }
  std::vector<int> candidates;
  for (int m = 0; m < M; ++m)
    if (mask == nullptr || mask->allows(m)) candidates.push_back(m);
  if (candidates.empty()) throw ArgumentError("route: mask admits no expert");
  const int k = std::min<int>(top_k, static_cast<int>(candidates.size()));
  std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(), [&](int a, int b) {
    if (perturbed[a] != perturbed[b]) return perturbed[a] > perturbed[b];
    return a < b;
  });
  Route r;
  r.experts.assign(candidates.begin(), candidates.begin() + k);
  double mx = -std::numeric_limits<double>::infinity();
  for (int m : r.experts) mx = std::max(mx, logits[m]);
  double z = 0.0;
  for (int m : r.experts) {
    r.weights.push_back(std::exp(logits[m] - mx));
    z += r.weights.back();
  }
  for (double& w : r.weights) w /= z;
  return r;
}

// Gate restricted to an assigned expert group. Excluded logits are sent to
// -inf before Top-K, so excluded experts can never be selected.
class MaskedGate {
 public:
  MaskedGate(GateParams gate, ExpertMask mask) : gate_(std::move(gate)), mask_(std::move(mask)) {}

  VectorXd logits(int layer, const VectorXd& z) const {
    VectorXd g = gate_.layers.at(static_cast<std::size_t>(layer)) * z;
    for (int m = 0; m < g.size(); ++m)
      if (!mask_.allows(m)) g[m] = -std::numeric_limits<double>::infinity();
    return g;
  }

  Route route(int layer, const VectorXd& z, int top_k, double noise_std, Rng* rng) const {
    return route_logits(gate_.layers.at(static_cast<std::size_t>(layer)) * z, &mask_, top_k, noise_std, rng);
  }

  const GateParams& gate() const { return gate_; }
  const ExpertMask& mask() const { return mask_; }

 private:
  GateParams gate_;
  ExpertMask mask_;
};

inline MaskedGate apply_masked_gate(const GateParams& u, const std::set<int>& assigned) {
  if (assigned.empty()) throw ArgumentError("masked gate: assigned expert set is empty");
  const int M = u.layers.empty() ? 0 : static_cast<int>(u.layers.front().rows());
  return MaskedGate(u, ExpertMask(M, assigned));
}

namespace detail {

struct ExpertTape {
  VectorXd pre;  // W1 z + b1
  VectorXd act;  // relu(pre)
  VectorXd out;  // W2 act + b2
};

struct LayerTape {
  VectorXd input;
  Route route;
  std::vector<ExpertTape> experts;  // parallel to route.experts
  VectorXd output;                  // y_l
};

struct Tape {
  std::vector<LayerTape> layers;
  VectorXd head_act;
  VectorXd logits;
};

// Without a generator the pass is a noise-free evaluation.
inline Tape run_forward(const MoEParams& p, const VectorXd& x, const ExpertMask* mask, Rng* rng) {
  const auto& cfg = p.config;
  const double noise = rng != nullptr ? cfg.noise_std : 0.0;
  if (x.size() != cfg.d_in) throw ConfigError("forward: input width does not match d_in");
  if (mask != nullptr && mask->experts() != cfg.experts) throw ConfigError("forward: mask width does not match experts");
  Tape t;
  VectorXd h = p.backbone.embed * x;
  t.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (int l = 0; l < cfg.layers; ++l) {
    auto& lt = t.layers[static_cast<std::size_t>(l)];
    lt.input = h;
    lt.route = route_logits(p.gate.layers[static_cast<std::size_t>(l)] * h, mask, cfg.top_k, noise, rng);
    VectorXd y = h;
    for (std::size_t k = 0; k < lt.route.experts.size(); ++k) {
      const auto& el = p.experts[static_cast<std::size_t>(lt.route.experts[k])].layers[static_cast<std::size_t>(l)];
      ExpertTape et;
      et.pre = el.w1 * h + el.b1;
      et.act = et.pre.cwiseMax(0.0);
      et.out = el.w2 * et.act + el.b2;
      y += lt.route.weights[k] * et.out;
      lt.experts.push_back(std::move(et));
    }
    lt.output = y;
    h = (l + 1 < cfg.layers) ? VectorXd(p.backbone.mix[static_cast<std::size_t>(l)] * y) : y;
  }
  t.head_act = (p.backbone.head_proj * h).array().tanh().matrix();
  t.logits = p.backbone.head_cls * t.head_act;
  return t;
}

inline double cross_entropy(const VectorXd& logits, int label) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return lse - logits[label];
}

}  // namespace detail

struct ForwardResult {
  VectorXd output;
  ActivationTrace trace;
};

inline ForwardResult forward(const MoEParams& p, const VectorXd& x, const ExpertMask* mask = nullptr,
                             Rng* rng = nullptr) {
  auto tape = detail::run_forward(p, x, mask, rng);
  ForwardResult r;
  r.output = std::move(tape.logits);
  for (auto& l : tape.layers) r.trace.layers.push_back(std::move(l.route));
  return r;
}

// Forward pass routed through a masked gate instead of params.gate.
inline ForwardResult forward(const MoEParams& p, const VectorXd& x, const MaskedGate& gate, Rng* rng = nullptr) {
  MoEParams view = p;
  view.gate = gate.gate();
  return forward(view, x, &gate.mask(), rng);
}

inline double loss(const MoEParams& p, Batch batch, const ExpertMask* mask = nullptr, Rng* rng = nullptr) {
  if (batch.empty()) throw ArgumentError("loss: batch is empty");
  double total = 0.0;
  for (const auto& s : batch) {
    if (s.label < 0 || s.label >= p.config.n_classes) throw ArgumentError("loss: label out of range");
    total += detail::cross_entropy(detail::run_forward(p, s.x, mask, rng).logits, s.label);
  }
  return total / static_cast<double>(batch.size());
}

// Fraction of samples whose arg-max output equals the label.
inline double accuracy(const MoEParams& p, Batch batch) {
  if (batch.empty()) throw ArgumentError("accuracy: batch is empty");
  std::size_t hit = 0;
  for (const auto& s : batch) {
    const auto logits = detail::run_forward(p, s.x, nullptr, nullptr).logits;
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    if (static_cast<int>(arg) == s.label) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(batch.size());
}

// Which parameter groups receive gradient.
struct TrainableGroups {
  bool gate = false;
  std::vector<bool> experts;

  static TrainableGroups all(int M) { return {true, std::vector<bool>(static_cast<std::size_t>(M), true)}; }
  static TrainableGroups experts_only(int M, const std::set<int>& ms) {
    TrainableGroups g{false, std::vector<bool>(static_cast<std::size_t>(M), false)};
    for (int m : ms) g.experts.at(static_cast<std::size_t>(m)) = true;
    return g;
  }
  static TrainableGroups with_gate(int M, const std::set<int>& ms) {
    auto g = experts_only(M, ms);
    g.gate = true;
    return g;
  }

  bool expert(int m) const { return experts.at(static_cast<std::size_t>(m)); }
  bool empty() const { return !gate && std::none_of(experts.begin(), experts.end(), [](bool b) { return b; }); }
};

// Gradient structure mirroring the trainable groups. Frozen groups are absent.
struct Gradients {
  std::optional<GateParams> gate;
  std::vector<std::optional<ExpertParams>> experts;
  double loss = 0.0;
};

inline ExpertParams zeros_like(const ExpertParams& e) {
  ExpertParams z = e;
  visit_tensors(z, [](auto& t) { t.setZero(); });
  return z;
}

inline GateParams zeros_like(const GateParams& g) {
  GateParams z = g;
  visit_tensors(z, [](auto& t) { t.setZero(); });
  return z;
}

// Exact gradient of the mean cross-entropy over the batch by manual
// backpropagation. Routing decisions are fixed by the forward pass.
inline Gradients backward(const MoEParams& p, Batch batch, const TrainableGroups& trainable,
                          const ExpertMask* mask = nullptr, Rng* rng = nullptr) {
  const auto& cfg = p.config;
  if (trainable.empty()) throw ArgumentError("backward: trainable set is empty");
  if (batch.empty()) throw ArgumentError("backward: batch is empty");
  if (static_cast<int>(trainable.experts.size()) != cfg.experts)
    throw ArgumentError("backward: trainable set width does not match experts");

  Gradients g;
  if (trainable.gate) g.gate = zeros_like(p.gate);
  g.experts.resize(static_cast<std::size_t>(cfg.experts));
  for (int m = 0; m < cfg.experts; ++m)
    if (trainable.expert(m)) g.experts[static_cast<std::size_t>(m)] = zeros_like(p.experts[static_cast<std::size_t>(m)]);

  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& s : batch) {
    if (s.label < 0 || s.label >= cfg.n_classes) throw ArgumentError("backward: label out of range");
    const auto t = detail::run_forward(p, s.x, mask, rng);
    total += detail::cross_entropy(t.logits, s.label);

    VectorXd dlogits = (t.logits.array() - t.logits.maxCoeff()).exp().matrix();
    dlogits /= dlogits.sum();
    dlogits[s.label] -= 1.0;
    dlogits *= scale;

    const VectorXd dact = p.backbone.head_cls.transpose() * dlogits;
    const VectorXd dpre = dact.array() * (1.0 - t.head_act.array().square());
    VectorXd dy = p.backbone.head_proj.transpose() * dpre;

    for (int l = cfg.layers - 1; l >= 0; --l) {
      const auto& lt = t.layers[static_cast<std::size_t>(l)];
      const auto& gate_l = p.gate.layers[static_cast<std::size_t>(l)];
      VectorXd dz = dy;  // residual path
      const std::size_t k_sel = lt.route.experts.size();
      std::vector<double> dw(k_sel);
      for (std::size_t k = 0; k < k_sel; ++k) {
        const int m = lt.route.experts[k];
        const auto& el = p.experts[static_cast<std::size_t>(m)].layers[static_cast<std::size_t>(l)];
        const auto& et = lt.experts[k];
        dw[k] = dy.dot(et.out);
        const VectorXd dq = lt.route.weights[k] * dy;
        const VectorXd dh = (el.w2.transpose() * dq).cwiseProduct(
            (et.pre.array() > 0.0).cast<double>().matrix());
        if (auto& ge = g.experts[static_cast<std::size_t>(m)]; ge) {
          auto& gl = ge->layers[static_cast<std::size_t>(l)];
          gl.w2.noalias() += dq * et.act.transpose();
          gl.b2 += dq;
          gl.w1.noalias() += dh * lt.input.transpose();
          gl.b1 += dh;
        }
        dz.noalias() += el.w1.transpose() * dh;
      }
      // Softmax over the selected logits.
      double mean_dw = 0.0;
      for (std::size_t k = 0; k < k_sel; ++k) mean_dw += lt.route.weights[k] * dw[k];
      for (std::size_t k = 0; k < k_sel; ++k) {
        const int m = lt.route.experts[k];
        const double dlogit = lt.route.weights[k] * (dw[k] - mean_dw);
        if (g.gate) g.gate->layers[static_cast<std::size_t>(l)].row(m) += dlogit * lt.input.transpose();
        dz += dlogit * gate_l.row(m).transpose();
      }
      if (l > 0) dy = p.backbone.mix[static_cast<std::size_t>(l - 1)].transpose() * dz;
    }
  }
  g.loss = total * scale;
  return g;
}

inline Gradients backward(const MoEParams& p, Batch batch, const TrainableGroups& trainable, const MaskedGate& gate,
                          Rng* rng = nullptr) {
  MoEParams view = p;
  view.gate = gate.gate();
  return backward(view, batch, trainable, &gate.mask(), rng);
}

// Flattening of the trainable groups: experts in index order, then the gate.
inline VectorXd flatten(const MoEParams& p, const TrainableGroups& groups) {
  std::vector<double> out;
  auto push = [&](const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); };
  for (int m = 0; m < p.config.experts; ++m)
    if (groups.expert(m)) visit_tensors(p.experts[static_cast<std::size_t>(m)], push);
  if (groups.gate) visit_tensors(p.gate, push);
  return Eigen::Map<const VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

inline void unflatten(MoEParams& p, const TrainableGroups& groups, const VectorXd& v) {
  Eigen::Index pos = 0;
  auto pull = [&](auto& t) {
    if (pos + t.size() > v.size()) throw ArgumentError("unflatten: vector too short");
    std::copy(v.data() + pos, v.data() + pos + t.size(), t.data());
    pos += t.size();
  };
  for (int m = 0; m < p.config.experts; ++m)
    if (groups.expert(m)) visit_tensors(p.experts[static_cast<std::size_t>(m)], pull);
  if (groups.gate) visit_tensors(p.gate, pull);
  if (pos != v.size()) throw ArgumentError("unflatten: vector length mismatch");
}

inline VectorXd flatten(const Gradients& g) {
  std::vector<double> out;
  auto push = [&](const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); };
  for (const auto& e : g.experts)
    if (e) visit_tensors(*e, push);
  if (g.gate) visit_tensors(*g.gate, push);
  return Eigen::Map<const VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

}  // namespace orbitmoe
