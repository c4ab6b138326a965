#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "urcl/errors.hpp"
#include "urcl/log.hpp"
#include "urcl/tensor.hpp"

namespace urcl {

/// A batch of windows together with the graph they live on.
template <typename Scalar>
struct GraphSample {
  /// B x M x |V| x C
  Tensor4<Scalar> window;
  Mat<Scalar> adjacency;
  bool directed = true;
};

enum class AugmentationKind { DropNodes, DropEdges, Subgraph, AddEdges, TimeShift };
enum class TimeShiftVariant { Slice, Warp, Flip };

inline constexpr std::array<AugmentationKind, 5> kAllAugmentations{
    AugmentationKind::DropNodes, AugmentationKind::DropEdges, AugmentationKind::Subgraph,
    AugmentationKind::AddEdges, AugmentationKind::TimeShift};

inline std::string to_string(AugmentationKind kind) {
  switch (kind) {
    case AugmentationKind::DropNodes: return "DN";
    case AugmentationKind::DropEdges: return "DE";
    case AugmentationKind::Subgraph: return "SG";
    case AugmentationKind::AddEdges: return "AE";
    case AugmentationKind::TimeShift: return "TS";
  }
  return "?";
}

struct AugmentConfig {
  double drop_node_ratio = 0.1;
  double drop_edge_ratio = 0.1;
  /// Negative means "10th percentile of the positive edge weights".
  double drop_edge_threshold = -1.0;
  double add_edge_ratio = 0.05;
  Index add_edge_min_hops = 3;
  double subgraph_coverage = 0.8;
  /// 0 means M / 2.
  Index slice_length = 0;

  bool operator==(const AugmentConfig&) const = default;
};

namespace detail {

inline Index ratio_count(double ratio, Index n) {
  return static_cast<Index>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

/// k distinct indices from [0, n), uniformly, in draw order.
inline std::vector<Index> choose_distinct(Index n, Index k, std::mt19937_64& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  k = std::min(k, n);
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

template <typename Scalar>
std::vector<std::vector<Index>> undirected_neighbors(const Mat<Scalar>& a) {
  const Index n = a.rows();
  std::vector<std::vector<Index>> nbrs(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i != j && (a(i, j) > Scalar(0) || a(j, i) > Scalar(0))) nbrs[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return nbrs;
}

inline void validate_ratio(double ratio, const char* what) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError(std::string(what) + ": ratio must lie in [0, 1)");
}

}  // namespace detail

/// Zeroes adjacency rows and columns and the window values of every node where keep is false.
template <typename Scalar>
GraphSample<Scalar> mask_nodes(const GraphSample<Scalar>& sample, const std::vector<bool>& keep) {
  GraphSample<Scalar> out = sample;
  const Index n = sample.adjacency.rows();
  for (Index v = 0; v < n; ++v) {
    if (keep[static_cast<std::size_t>(v)]) continue;
    out.adjacency.row(v).setZero();
    out.adjacency.col(v).setZero();
    for (Index b = 0; b < out.window.batch(); ++b) {
      for (Index t = 0; t < out.window.steps(); ++t) out.window.frame(b, t).row(v).setZero();
    }
  }
  return out;
}

/// DN: masks floor(ratio * |V|) uniformly chosen nodes.
template <typename Scalar>
GraphSample<Scalar> drop_nodes(const GraphSample<Scalar>& sample, double ratio, std::mt19937_64& rng) {
  detail::validate_ratio(ratio, "drop_nodes");
  const Index n = sample.adjacency.rows();
  std::vector<bool> keep(static_cast<std::size_t>(n), true);
  for (Index v : detail::choose_distinct(n, detail::ratio_count(ratio, n), rng)) keep[static_cast<std::size_t>(v)] = false;
  return mask_nodes(sample, keep);
}

/// DE: samples floor(ratio * |E|) edges and removes those lighter than the threshold.
template <typename Scalar>
GraphSample<Scalar> drop_edges(const GraphSample<Scalar>& sample, double ratio, double threshold,
                               std::mt19937_64& rng) {
  detail::validate_ratio(ratio, "drop_edges");
  if (!(threshold >= 0.0)) throw ContractError("drop_edges: threshold must be >= 0");
  const Index n = sample.adjacency.rows();
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i) {
    for (Index j = sample.directed ? 0 : i + 1; j < n; ++j) {
      if (i != j && sample.adjacency(i, j) > Scalar(0)) edges.emplace_back(i, j);
    }
  }
  GraphSample<Scalar> out = sample;
  const Index count = detail::ratio_count(ratio, static_cast<Index>(edges.size()));
  for (Index e : detail::choose_distinct(static_cast<Index>(edges.size()), count, rng)) {
    const auto [i, j] = edges[static_cast<std::size_t>(e)];
    if (static_cast<double>(sample.adjacency(i, j)) < threshold) {
      out.adjacency(i, j) = 0;
      if (!sample.directed) out.adjacency(j, i) = 0;
    }
  }
  return out;
}

/// SG: random walk (edges taken as undirected) from a uniform start until
/// ceil(coverage * |V|) distinct nodes are visited; every other node is masked.
/// A walk that makes no progress for a while restarts from a visited node that
/// still borders unvisited ones. If the start's component is exhausted the walk stops short.
template <typename Scalar>
GraphSample<Scalar> sample_subgraph(const GraphSample<Scalar>& sample, double coverage, std::mt19937_64& rng) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ContractError("sample_subgraph: coverage must lie in (0, 1]");
  const Index n = sample.adjacency.rows();
  const Index quota = std::min<Index>(n, static_cast<Index>(std::ceil(coverage * static_cast<double>(n) - 1e-9)));
  const auto nbrs = detail::undirected_neighbors(sample.adjacency);

  std::vector<bool> visited(static_cast<std::size_t>(n), false);
  std::vector<Index> order;
  std::uniform_int_distribution<Index> start_dist(0, n - 1);
  Index current = start_dist(rng);
  visited[static_cast<std::size_t>(current)] = true;
  order.push_back(current);

  auto borders_unvisited = [&](Index v) {
    for (Index u : nbrs[static_cast<std::size_t>(v)]) {
      if (!visited[static_cast<std::size_t>(u)]) return true;
    }
    return false;
  };

  Index idle = 0;
  while (static_cast<Index>(order.size()) < quota) {
    if (idle > 4 * n || nbrs[static_cast<std::size_t>(current)].empty()) {
      std::vector<Index> open;
      for (Index v : order) {
        if (borders_unvisited(v)) open.push_back(v);
      }
      if (open.empty()) {
        logger().debug("sample_subgraph: component exhausted at {} of {} nodes", order.size(), quota);
        break;
      }
      std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
      current = open[pick(rng)];
      idle = 0;
    }
    const auto& next = nbrs[static_cast<std::size_t>(current)];
    std::uniform_int_distribution<std::size_t> step(0, next.size() - 1);
    current = next[step(rng)];
    if (!visited[static_cast<std::size_t>(current)]) {
      visited[static_cast<std::size_t>(current)] = true;
      order.push_back(current);
      idle = 0;
    } else {
      ++idle;
    }
  }
  return mask_nodes(sample, visited);
}

/// Breadth-first hop distances over the undirected structure; -1 when unreachable.
template <typename Scalar>
Mat<Index> hop_distances(const Mat<Scalar>& adjacency) {
  const Index n = adjacency.rows();
  const auto nbrs = detail::undirected_neighbors(adjacency);
  Mat<Index> dist = Mat<Index>::Constant(n, n, -1);
  for (Index s = 0; s < n; ++s) {
    std::deque<Index> queue{s};
    dist(s, s) = 0;
    while (!queue.empty()) {
      const Index v = queue.front();
      queue.pop_front();
      for (Index u : nbrs[static_cast<std::size_t>(v)]) {
        if (dist(s, u) < 0) {
          dist(s, u) = dist(s, v) + 1;
          queue.push_back(u);
        }
      }
    }
  }
  return dist;
}

/// Per-node feature vector used to weight added edges: the window mean over batch and steps (|V| x C).
template <typename Scalar>
Mat<Scalar> node_features(const Tensor4<Scalar>& window) {
  Mat<Scalar> f = Mat<Scalar>::Zero(window.nodes(), window.channels());
  for (Index b = 0; b < window.batch(); ++b) {
    for (Index t = 0; t < window.steps(); ++t) f += window.frame(b, t);
  }
  return f / static_cast<Scalar>(window.batch() * window.steps());
}

/// AE: connects floor(ratio * |V|) node pairs at least `min_hops` apart (or
/// disconnected) with weight max(0, f_i . f_j), f the node feature vectors.
template <typename Scalar>
GraphSample<Scalar> add_edges(const GraphSample<Scalar>& sample, double ratio, Index min_hops,
                              std::mt19937_64& rng) {
  detail::validate_ratio(ratio, "add_edges");
  if (min_hops < 1) throw ContractError("add_edges: min_hops must be >= 1");
  const Index n = sample.adjacency.rows();
  const Mat<Index> hops = hop_distances(sample.adjacency);
  std::vector<std::pair<Index, Index>> candidates;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (hops(i, j) < 0 || hops(i, j) >= min_hops) candidates.emplace_back(i, j);
    }
  }
  const Index count = detail::ratio_count(ratio, n);
  if (count == 0) return sample;
  if (candidates.empty()) {
    logger().debug("add_edges: no node pair is {} or more hops apart", min_hops);
    return sample;
  }
  const Mat<Scalar> features = node_features(sample.window);
  GraphSample<Scalar> out = sample;
  for (Index c : detail::choose_distinct(static_cast<Index>(candidates.size()), count, rng)) {
    const auto [i, j] = candidates[static_cast<std::size_t>(c)];
    const Scalar w = std::max(Scalar(0), features.row(i).dot(features.row(j)));
    out.adjacency(i, j) = w;
    if (!sample.directed) out.adjacency(j, i) = w;
  }
  return out;
}

/// Frames [start, start + length) of every sample, right-padded with the last of them.
template <typename Scalar>
Tensor4<Scalar> slice_window(const Tensor4<Scalar>& window, Index start, Index length) {
  if (length < 1 || start < 0 || start + length > window.steps()) throw ContractError("slice_window: out of range");
  Tensor4<Scalar> out(window.batch(), window.steps(), window.nodes(), window.channels());
  for (Index b = 0; b < window.batch(); ++b) {
    for (Index t = 0; t < window.steps(); ++t) {
      out.frame(b, t) = window.frame(b, start + std::min(t, length - 1));
    }
  }
  return out;
}

/// Frames [start, start + length) stretched back to the full step count by linear interpolation.
template <typename Scalar>
Tensor4<Scalar> warp_window(const Tensor4<Scalar>& window, Index start, Index length) {
  const Index steps = window.steps();
  if (length < 2 || start < 0 || start + length > steps) throw ContractError("warp_window: out of range");
  Tensor4<Scalar> out(window.batch(), steps, window.nodes(), window.channels());
  for (Index t = 0; t < steps; ++t) {
    const double pos = steps > 1 ? static_cast<double>(t) * static_cast<double>(length - 1) / (steps - 1) : 0.0;
    const Index lo = std::min<Index>(static_cast<Index>(std::floor(pos)), length - 2);
    const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
    for (Index b = 0; b < window.batch(); ++b) {
      out.frame(b, t) = (Scalar(1) - frac) * window.frame(b, start + lo) + frac * window.frame(b, start + lo + 1);
    }
  }
  return out;
}

/// Reverses the step order.
template <typename Scalar>
Tensor4<Scalar> flip_window(const Tensor4<Scalar>& window) {
  Tensor4<Scalar> out(window.batch(), window.steps(), window.nodes(), window.channels());
  const Index steps = window.steps();
  for (Index b = 0; b < window.batch(); ++b) {
    for (Index t = 0; t < steps; ++t) out.frame(b, t) = window.frame(b, steps - 1 - t);
  }
  return out;
}

/// TS: slice, warp or flip. Slice and warp place one window of length l uniformly per sample.
template <typename Scalar>
GraphSample<Scalar> time_shifting(const GraphSample<Scalar>& sample, TimeShiftVariant variant, Index length,
                                  std::mt19937_64& rng) {
  GraphSample<Scalar> out = sample;
  const Tensor4<Scalar>& w = sample.window;
  if (variant == TimeShiftVariant::Flip) {
    out.window = flip_window(w);
    return out;
  }
  if (length < 2 || length > w.steps()) {
    throw ContractError("time_shifting: slice length must lie in [2, " + std::to_string(w.steps()) + "]");
  }
  std::uniform_int_distribution<Index> start_dist(0, w.steps() - length);
  for (Index b = 0; b < w.batch(); ++b) {
    const Index start = start_dist(rng);
    const Tensor4<Scalar> one(SeqLayout{1, w.steps(), w.nodes()}, w.sample(b));
    const Tensor4<Scalar> moved =
        variant == TimeShiftVariant::Slice ? slice_window(one, start, length) : warp_window(one, start, length);
    out.window.sample(b) = moved.data();
  }
  return out;
}

/// 10th percentile (nearest rank) of the strictly positive off-diagonal weights; 0 if there are none.
template <typename Scalar>
double default_edge_threshold(const Mat<Scalar>& adjacency) {
  std::vector<double> w;
  for (Index i = 0; i < adjacency.rows(); ++i) {
    for (Index j = 0; j < adjacency.cols(); ++j) {
      if (i != j && adjacency(i, j) > Scalar(0)) w.push_back(static_cast<double>(adjacency(i, j)));
    }
  }
  if (w.empty()) return 0.0;
  std::sort(w.begin(), w.end());
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(w.size())));
  return w[rank == 0 ? 0 : rank - 1];
}

struct AppliedAugmentation {
  AugmentationKind kind = AugmentationKind::DropNodes;
  TimeShiftVariant variant = TimeShiftVariant::Flip;  // meaningful for TimeShift only
};

template <typename Scalar>
GraphSample<Scalar> apply_augmentation(const GraphSample<Scalar>& sample, AugmentationKind kind,
                                       const AugmentConfig& cfg, std::mt19937_64& rng,
                                       AppliedAugmentation* applied = nullptr) {
  AppliedAugmentation record{kind};
  GraphSample<Scalar> out;
  switch (kind) {
    case AugmentationKind::DropNodes:
      out = drop_nodes(sample, cfg.drop_node_ratio, rng);
      break;
    case AugmentationKind::DropEdges: {
      const double threshold =
          cfg.drop_edge_threshold >= 0.0 ? cfg.drop_edge_threshold : default_edge_threshold(sample.adjacency);
      out = drop_edges(sample, cfg.drop_edge_ratio, threshold, rng);
      break;
    }
    case AugmentationKind::Subgraph:
      out = sample_subgraph(sample, cfg.subgraph_coverage, rng);
      break;
    case AugmentationKind::AddEdges:
      out = add_edges(sample, cfg.add_edge_ratio, cfg.add_edge_min_hops, rng);
      break;
    case AugmentationKind::TimeShift: {
      std::uniform_int_distribution<int> pick(0, 2);
      record.variant = static_cast<TimeShiftVariant>(pick(rng));
      const Index length = cfg.slice_length > 0 ? cfg.slice_length : std::max<Index>(2, sample.window.steps() / 2);
      out = time_shifting(sample, record.variant, std::min(length, sample.window.steps()), rng);
      break;
    }
  }
  if (applied != nullptr) *applied = record;
  return out;
}

template <typename Scalar>
struct ViewPair {
  GraphSample<Scalar> first;
  GraphSample<Scalar> second;
  std::array<AppliedAugmentation, 2> applied;
};

/// Two different augmentation kinds drawn without replacement, each applied to the sample.
template <typename Scalar>
ViewPair<Scalar> random_view_pair(const GraphSample<Scalar>& sample, const AugmentConfig& cfg,
                                  std::mt19937_64& rng) {
  const auto picks = detail::choose_distinct(static_cast<Index>(kAllAugmentations.size()), 2, rng);
  ViewPair<Scalar> pair;
  pair.first = apply_augmentation(sample, kAllAugmentations[static_cast<std::size_t>(picks[0])], cfg, rng,
                                  &pair.applied[0]);
  pair.second = apply_augmentation(sample, kAllAugmentations[static_cast<std::size_t>(picks[1])], cfg, rng,
                                   &pair.applied[1]);
  return pair;
}

}  // namespace urcl
