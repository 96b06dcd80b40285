// Copyright 2026 The orbitmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "orbitmoe/common.hpp"

namespace orbitmoe {

// Non-overlapping partition of (a subset of) the experts over C clusters.
// Experts with owner == kUnassigned stay frozen everywhere.
struct ExpertAssignment {
  static constexpr int kUnassigned = -1;

  std::vector<std::set<int>> groups;  // per cluster
  std::vector<int> owner;             // per expert

  ExpertAssignment() = default;
  ExpertAssignment(int clusters, int experts)
      : groups(static_cast<std::size_t>(clusters)), owner(static_cast<std::size_t>(experts), kUnassigned) {}

  int clusters() const { return static_cast<int>(groups.size()); }
  int experts() const { return static_cast<int>(owner.size()); }
  const std::set<int>& group(int c) const { return groups.at(static_cast<std::size_t>(c)); }
  int cluster_of(int m) const { return owner.at(static_cast<std::size_t>(m)); }

  void assign(int m, int c) {
    if (owner.at(static_cast<std::size_t>(m)) != kUnassigned) throw ProtocolError("assignment: expert assigned twice");
    owner[static_cast<std::size_t>(m)] = c;
    groups.at(static_cast<std::size_t>(c)).insert(m);
  }

  std::set<int> unassigned() const {
    std::set<int> s;
    for (std::size_t m = 0; m < owner.size(); ++m)
      if (owner[m] == kUnassigned) s.insert(static_cast<int>(m));
    return s;
  }

  // Every expert assigned to exactly one cluster; owner and groups agree.
  static ExpertAssignment one_cluster_owns_all(int experts) {
    ExpertAssignment a(1, experts);
    for (int m = 0; m < experts; ++m) a.assign(m, 0);
    return a;
  }

  bool consistent() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < groups.size(); ++c) {
      for (int m : groups[c]) {
        if (m < 0 || m >= experts() || owner[static_cast<std::size_t>(m)] != static_cast<int>(c)) return false;
        ++n;
      }
    }
    std::size_t owned = 0;
    for (int o : owner) owned += (o != kUnassigned) ? 1 : 0;
    return n == owned;
  }

  friend bool operator==(const ExpertAssignment&, const ExpertAssignment&) = default;
};

// Audit export: one "expert cluster" row per expert, both 1-based, or
// UNASSIGNED for frozen experts.
inline void write_assignment(std::ostream& os, const ExpertAssignment& a) {
  os << "# expert cluster\n";
  for (int m = 0; m < a.experts(); ++m) {
    os << (m + 1) << ' ';
    if (a.cluster_of(m) == ExpertAssignment::kUnassigned)
      os << "UNASSIGNED\n";
    else
      os << (a.cluster_of(m) + 1) << '\n';
  }
}

inline ExpertAssignment read_assignment(std::istream& is, int clusters) {
  std::vector<std::pair<int, int>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int m = 0;
    std::string c;
    if (!(ls >> m >> c)) throw FormatError("assignment: malformed row '" + line + "'");
    rows.emplace_back(m - 1, c == "UNASSIGNED" ? ExpertAssignment::kUnassigned : std::stoi(c) - 1);
  }
  ExpertAssignment a(clusters, static_cast<int>(rows.size()));
  for (auto [m, c] : rows) {
    if (m < 0 || m >= a.experts()) throw FormatError("assignment: expert index out of range");
    if (c != ExpertAssignment::kUnassigned) {
      if (c < 0 || c >= clusters) throw FormatError("assignment: cluster index out of range");
      a.assign(m, c);
    }
  }
  return a;
}

}  // namespace orbitmoe
