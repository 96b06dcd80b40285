// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-modal classification data spread over device clusters.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/assignment.hpp"
#include "orbitmoe/common.hpp"
#include "orbitmoe/moe.hpp"

namespace orbitmoe {

// Class-conditional Gaussians for one modality. class_means[i] and
// class_covs[i] describe samples carrying labels[i].
struct ModalitySpec {
  int id = 0;
  std::vector<VectorXd> class_means;
  std::vector<MatrixXd> class_covs;
  std::vector<int> labels;

  int dim() const { return class_means.empty() ? 0 : static_cast<int>(class_means.front().size()); }

  void validate() const {
    if (labels.size() < 2) throw ValidationError("modality: at least two labels required");
    if (class_means.size() != labels.size() || class_covs.size() != labels.size())
      throw ValidationError("modality: means/covariances must match the label set");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (class_means[i].size() != dim() || class_covs[i].rows() != dim() || class_covs[i].cols() != dim())
        throw ValidationError("modality: inconsistent dimensions");
      Eigen::LLT<MatrixXd> llt(class_covs[i]);
      if (llt.info() != Eigen::Success || !class_covs[i].isApprox(class_covs[i].transpose()))
        throw ValidationError("modality: covariance is not positive-definite");
    }
  }
};

// mixing[c][k]: fraction of cluster c's samples drawn from modality k.
struct HeterogeneityProfile {
  std::vector<std::vector<double>> mixing;

  static HeterogeneityProfile identity(int n) {
    HeterogeneityProfile p;
    p.mixing.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int i = 0; i < n; ++i) p.mixing[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    return p;
  }
  static HeterogeneityProfile uniform(int clusters, int modalities) {
    HeterogeneityProfile p;
    p.mixing.assign(static_cast<std::size_t>(clusters),
                    std::vector<double>(static_cast<std::size_t>(modalities), 1.0 / modalities));
    return p;
  }

  void validate(std::size_t modalities) const {
    for (std::size_t c = 0; c < mixing.size(); ++c) {
      const auto& row = mixing[c];
      if (row.size() != modalities) throw ValidationError("profile: row " + std::to_string(c + 1) + " has wrong width");
      double s = 0.0;
      for (double w : row) {
        if (!(w >= 0.0 && w <= 1.0)) throw ValidationError("profile: entries must lie in [0,1]");
        s += w;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ValidationError("profile: row " + std::to_string(c + 1) + " does not sum to 1");
    }
  }
};

struct ClusterDataset {
  int cluster = 0;
  std::vector<std::vector<Sample>> shards;  // one per device

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : shards) n += s.size();
    return n;
  }
  std::vector<Sample> samples() const {
    std::vector<Sample> all;
    for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());
    return all;
  }
};

struct SyntheticData {
  std::vector<ClusterDataset> clusters;
  int modalities = 0;

  int devices() const { return clusters.empty() ? 0 : static_cast<int>(clusters.front().shards.size()); }
  std::vector<Sample> global() const {
    std::vector<Sample> all;
    for (const auto& c : clusters) {
      auto s = c.samples();
      all.insert(all.end(), s.begin(), s.end());
    }
    return all;
  }
};

// Largest-remainder apportionment of `total` items by `weights` (which sum to
// 1). Remainder ties go to the lower index.
inline std::vector<int> proportional_allocation(const std::vector<double>& weights, int total) {
  std::vector<int> counts(weights.size(), 0);
  std::vector<double> rem(weights.size(), 0.0);
  int used = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double exact = weights[k] * total;
    counts[k] = static_cast<int>(std::floor(exact + 1e-9));
    rem[k] = exact - counts[k];
    used += counts[k];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; used < total && i < order.size(); ++i, ++used) ++counts[order[i]];
  return counts;
}

namespace detail {

inline Sample draw_sample(const ModalitySpec& spec, const std::vector<MatrixXd>& chol, std::size_t cls, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd z(spec.dim());
  for (int i = 0; i < z.size(); ++i) z[i] = n(rng);
  Sample s;
  s.x = spec.class_means[cls] + chol[cls] * z;
  s.label = spec.labels[cls];
  s.modality = spec.id;
  return s;
}

}  // namespace detail

// Every device shard gets the same modality counts (largest-remainder split of
// N by the cluster's mixing row); labels cycle round-robin within a modality.
inline SyntheticData generate(const HeterogeneityProfile& profile, const std::vector<ModalitySpec>& specs, int C, int J,
                              int N, std::uint64_t seed) {
  if (C < 1 || J < 1 || N < 1) throw ArgumentError("generate: C, J, N must be >= 1");
  if (static_cast<int>(profile.mixing.size()) != C) throw ValidationError("generate: profile must have one row per cluster");
  if (specs.empty()) throw ValidationError("generate: no modalities");
  profile.validate(specs.size());
  std::vector<std::vector<MatrixXd>> chol(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    specs[k].validate();
    if (specs[k].id != static_cast<int>(k)) throw ValidationError("generate: modality ids must be 0..K-1 in order");
    if (specs[k].dim() != specs.front().dim()) throw ValidationError("generate: modalities disagree on dimension");
    for (const auto& cov : specs[k].class_covs) chol[k].push_back(Eigen::LLT<MatrixXd>(cov).matrixL());
  }
  Rng rng = derive_rng(seed, Stream::kData);
  SyntheticData out;
  out.modalities = static_cast<int>(specs.size());
  for (int c = 0; c < C; ++c) {
    ClusterDataset cd;
    cd.cluster = c;
    const auto counts = proportional_allocation(profile.mixing[static_cast<std::size_t>(c)], N);
    for (int j = 0; j < J; ++j) {
      std::vector<Sample> shard;
      shard.reserve(static_cast<std::size_t>(N));
      for (std::size_t k = 0; k < specs.size(); ++k)
        for (int i = 0; i < counts[k]; ++i)
          shard.push_back(detail::draw_sample(specs[k], chol[k], static_cast<std::size_t>(i) % specs[k].labels.size(), rng));
      cd.shards.push_back(std::move(shard));
    }
    out.clusters.push_back(std::move(cd));
  }
  return out;
}

// Procedural modality family: modality k is centred at `separation` along
// axis k (sign flipped on wrap-around); each class sits at a random offset of
// length `class_separation` from that centre; isotropic noise.
inline std::vector<ModalitySpec> make_modalities(int count, int n_classes, int dim, double separation,
                                                 double class_separation, double noise_sd, std::uint64_t seed) {
  if (count < 1 || n_classes < 2 || dim < 1) throw ArgumentError("make_modalities: bad sizes");
  if (!(noise_sd > 0.0)) throw ValidationError("make_modalities: noise must be positive");
  Rng rng = derive_rng(seed, Stream::kModalities);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ModalitySpec> specs;
  for (int k = 0; k < count; ++k) {
    ModalitySpec s;
    s.id = k;
    VectorXd centre = VectorXd::Zero(dim);
    centre[k % dim] = ((k / dim) % 2 == 0 ? 1.0 : -1.0) * separation;
    for (int y = 0; y < n_classes; ++y) {
      VectorXd dir(dim);
      for (int i = 0; i < dim; ++i) dir[i] = n(rng);
      s.class_means.push_back(centre + class_separation * dir.normalized());
      s.class_covs.push_back(noise_sd * noise_sd * MatrixXd::Identity(dim, dim));
      s.labels.push_back(y);
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

struct RelevanceRatios {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma_c;
  double gamma = 0.0;
};

// alpha_c: fraction of cluster c's samples correlated with its expert group;
// beta_c: the same fraction over the global dataset; gamma_c = alpha_c/beta_c.
// modality_expert maps each modality to the expert it is correlated with.
inline RelevanceRatios relevance_ratios(const SyntheticData& data, const ExpertAssignment& assignment,
                                        const std::vector<int>& modality_expert) {
  if (static_cast<int>(modality_expert.size()) != data.modalities)
    throw ArgumentError("relevance_ratios: correlation map must cover every modality");
  if (assignment.clusters() != static_cast<int>(data.clusters.size()))
    throw ArgumentError("relevance_ratios: assignment/cluster count mismatch");
  auto correlated = [&](const Sample& s, int c) {
    const int m = modality_expert.at(static_cast<std::size_t>(s.modality));
    return assignment.group(c).count(m) > 0;
  };
  RelevanceRatios r;
  std::size_t global_n = 0;
  for (const auto& cd : data.clusters) global_n += cd.size();
  for (int c = 0; c < assignment.clusters(); ++c) {
    std::size_t local_hit = 0, local_n = 0, global_hit = 0;
    for (const auto& cd : data.clusters) {
      for (const auto& shard : cd.shards) {
        for (const auto& s : shard) {
          const bool hit = correlated(s, c);
          global_hit += hit ? 1 : 0;
          if (cd.cluster == c) {
            local_hit += hit ? 1 : 0;
            ++local_n;
          }
        }
      }
    }
    const double alpha = local_n ? static_cast<double>(local_hit) / static_cast<double>(local_n) : 0.0;
    const double beta = static_cast<double>(global_hit) / static_cast<double>(global_n);
    if (beta == 0.0)
      throw DomainError("relevance_ratios: beta is zero for cluster " + std::to_string(c + 1) +
                        " (no correlated data anywhere)");
    r.alpha.push_back(alpha);
    r.beta.push_back(beta);
    r.gamma_c.push_back(alpha / beta);
    r.gamma = std::max(r.gamma, alpha / beta);
  }
  return r;
}

// Trial set stratified by the cluster's modality proportions.
inline std::vector<Sample> draw_trial(const ClusterDataset& cluster, int n_trial, std::uint64_t seed) {
  if (n_trial <= 0) throw ArgumentError("draw_trial: N_trial must be positive");
  auto all = cluster.samples();
  if (static_cast<std::size_t>(n_trial) > all.size()) throw ArgumentError("draw_trial: N_trial exceeds cluster size");
  if (static_cast<std::size_t>(n_trial) == all.size()) return all;

  std::map<int, std::vector<std::size_t>> by_modality;
  for (std::size_t i = 0; i < all.size(); ++i) by_modality[all[i].modality].push_back(i);
  std::vector<double> weights;
  for (const auto& [k, idx] : by_modality) weights.push_back(static_cast<double>(idx.size()) / static_cast<double>(all.size()));
  const auto counts = proportional_allocation(weights, n_trial);

  Rng rng = derive_rng(seed ^ (static_cast<std::uint64_t>(cluster.cluster) << 20), Stream::kTrial);
  std::vector<Sample> trial;
  std::size_t k = 0;
  for (auto& [mod, idx] : by_modality) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < counts[k]; ++i) trial.push_back(all[idx[static_cast<std::size_t>(i)]]);
    ++k;
  }
  return trial;
}

// Columnar text export, one sample per row:
//   f_1 .. f_d label modality cluster device   (cluster/device 1-based)
inline void write_dataset(std::ostream& os, const SyntheticData& data) {
  const int d = data.clusters.empty() || data.clusters.front().shards.empty() || data.clusters.front().shards.front().empty()
                    ? 0
                    : static_cast<int>(data.clusters.front().shards.front().front().x.size());
  os << "# orbitmoe-dataset v1 dim=" << d << " modalities=" << data.modalities << " clusters=" << data.clusters.size()
     << " devices=" << data.devices() << '\n';
  char buf[32];
  for (const auto& cd : data.clusters) {
    for (std::size_t j = 0; j < cd.shards.size(); ++j) {
      for (const auto& s : cd.shards[j]) {
        for (int i = 0; i < s.x.size(); ++i) {
          std::snprintf(buf, sizeof buf, "%.17g", s.x[i]);
          os << buf << ' ';
        }
        os << s.label << ' ' << s.modality << ' ' << (cd.cluster + 1) << ' ' << (j + 1) << '\n';
      }
    }
  }
}

inline SyntheticData read_dataset(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw FormatError("dataset: missing header");
  int dim = -1, modalities = -1, clusters = -1, devices = -1;
  if (std::sscanf(header.c_str(), "# orbitmoe-dataset v1 dim=%d modalities=%d clusters=%d devices=%d", &dim, &modalities,
                  &clusters, &devices) != 4)
    throw FormatError("dataset: unrecognized header");
  SyntheticData data;
  data.modalities = modalities;
  data.clusters.resize(static_cast<std::size_t>(clusters));
  for (int c = 0; c < clusters; ++c) {
    data.clusters[static_cast<std::size_t>(c)].cluster = c;
    data.clusters[static_cast<std::size_t>(c)].shards.resize(static_cast<std::size_t>(devices));
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sample s;
    s.x.resize(dim);
    for (int i = 0; i < dim; ++i)
      if (!(ls >> s.x[i])) throw FormatError("dataset: short row");
    int c = 0, j = 0;
    if (!(ls >> s.label >> s.modality >> c >> j)) throw FormatError("dataset: short row");
    if (c < 1 || c > clusters || j < 1 || j > devices) throw FormatError("dataset: cluster/device out of range");
    data.clusters[static_cast<std::size_t>(c - 1)].shards[static_cast<std::size_t>(j - 1)].push_back(std::move(s));
  }
  return data;
}

}  // namespace orbitmoe
