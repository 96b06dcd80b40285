// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Rank-r factorization of parameter deltas for uplink compression.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cstddef>
#include <cstdint>

#include "orbitmoe/common.hpp"

namespace orbitmoe {

// Delta ~= a * b with a: rows x rank, b: rank x cols.
struct LowRankUpdate {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  int rank = 0;

  std::uint64_t bytes() const { return static_cast<std::uint64_t>(rank) * static_cast<std::uint64_t>(a.rows() + b.cols()) * 8u; }
  Eigen::MatrixXd reconstruct() const { return a * b; }
};

inline std::uint64_t low_rank_bytes(Eigen::Index rows, Eigen::Index cols, int rank) {
  const auto r = static_cast<std::uint64_t>(std::min<Eigen::Index>(rank, std::min(rows, cols)));
  return r * static_cast<std::uint64_t>(rows + cols) * 8u;
}

struct LoraResult {
  LowRankUpdate update;
  Eigen::MatrixXd reconstruction;
  double error_fro = 0.0;
};

// Best rank-r approximation by singular-value truncation. A rank at or above
// min(rows, cols) is clamped and uses an exact identity factorization, so the
// reconstruction reproduces the delta bit for bit.
inline LoraResult lora_roundtrip(const Eigen::MatrixXd& delta, int r) {
  if (r < 1) throw ArgumentError("lora: rank must be >= 1");
  const Eigen::Index rows = delta.rows();
  const Eigen::Index cols = delta.cols();
  const int full = static_cast<int>(std::min(rows, cols));
  LoraResult out;
  if (r >= full) {
    out.update.rank = full;
    if (rows <= cols) {
      out.update.a = Eigen::MatrixXd::Identity(rows, rows);
      out.update.b = delta;
    } else {
      out.update.a = delta;
      out.update.b = Eigen::MatrixXd::Identity(cols, cols);
    }
    out.reconstruction = delta;
    out.error_fro = 0.0;
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(delta, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  out.update.rank = r;
  out.update.a = svd.matrixU().leftCols(r) * s.head(r).asDiagonal();
  out.update.b = svd.matrixV().leftCols(r).transpose();
  out.reconstruction = out.update.reconstruct();
  out.error_fro = (delta - out.reconstruction).norm();
  return out;
}

}  // namespace orbitmoe
