#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

namespace salient {

inline constexpr std::int32_t kNoise = -1;

// Classic density-based clustering over an arbitrary distance oracle.
//
// A point is core when at least `min_samples` points (itself included) lie
// within `eps` of it. Clusters are the maximal density-connected sets grown
// from cores; border points take the first cluster that reaches them. Points
// are scanned in index order and clusters are numbered 0, 1, ... in
// discovery order, so the result is a pure function of the input order.
// Returns one label per item, `kNoise` for unclustered items.
template <typename Dist>
  requires std::invocable<Dist&, std::size_t, std::size_t>
std::vector<std::int32_t> dbscan(std::size_t n, Dist&& dist, double eps,
                                 std::size_t min_samples) {
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      if (static_cast<double>(dist(i, j)) <= eps) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }

  constexpr std::int32_t kUnvisited = -2;
  std::vector<std::int32_t> label(n, kUnvisited);
  std::int32_t next_cluster = 0;
  std::deque<std::size_t> frontier;
  for (std::size_t p = 0; p < n; ++p) {
    if (label[p] != kUnvisited) continue;
    if (neighbors[p].size() < min_samples) {
      label[p] = kNoise;
      continue;
    }
    const std::int32_t c = next_cluster++;
    label[p] = c;
    frontier.assign(neighbors[p].begin(), neighbors[p].end());
    while (!frontier.empty()) {
      const std::size_t q = frontier.front();
      frontier.pop_front();
      if (label[q] == kNoise) label[q] = c;  // border
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      if (neighbors[q].size() >= min_samples) {
        frontier.insert(frontier.end(), neighbors[q].begin(), neighbors[q].end());
      }
    }
  }
  return label;
}

}  // namespace salient
