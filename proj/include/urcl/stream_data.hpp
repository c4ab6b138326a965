#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "urcl/errors.hpp"
#include "urcl/tensor.hpp"

namespace urcl {

/// Weighted graph of sensors. Edge weights are inverse distances; the diagonal
/// is zero until self-loops are added for diffusion.
struct SensorNetwork {
  Index node_count = 0;
  Mat<double> adjacency;
  bool directed = true;
};

struct Edge {
  Index src = 0;
  Index dst = 0;
  double distance = 0.0;
};

/// T x |V| x C observations, stored with rows (t, v) and channel columns.
struct ObservationSeries {
  Index slots = 0;
  Index nodes = 0;
  Mat<double> values;
  /// True where the source cell was empty. Same shape as values.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> missing;
  double interval_minutes = 1.0;
  long start_slot_index = 0;

  Index channels() const { return values.cols(); }
  Index row(Index t, Index v) const { return t * nodes + v; }
  double operator()(Index t, Index v, Index c) const { return values(row(t, v), c); }
  auto frame(Index t) const { return values.middleRows(t * nodes, nodes); }
};

struct NormalizationStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  double range(Index channel) const { return max(channel) - min(channel); }
  double denormalize(Index channel, double x) const { return x * range(channel) + min(channel); }
};

/// Half-open slot interval [begin, end).
struct SlotRange {
  Index begin = 0;
  Index end = 0;
  Index length() const { return end - begin; }
  bool operator==(const SlotRange&) const = default;
};

struct StreamSegment {
  /// 0 for the base segment, k for the k-th incremental segment.
  int index = 0;
  SlotRange span;
  SlotRange train;
  SlotRange val;
  SlotRange test;

  bool is_base() const { return index == 0; }
  std::string role() const { return is_base() ? "base" : "incremental_" + std::to_string(index); }
};

/// Reads `meta.json`, `graph.csv` and `observations.csv` from a dataset directory.
std::pair<SensorNetwork, ObservationSeries> load_dataset(const std::filesystem::path& root);

/// Writes the three dataset files. Distances are recovered as 1 / weight; missing
/// cells are written empty.
void save_dataset(const std::filesystem::path& root, const SensorNetwork& network, const ObservationSeries& series);

/// A[src, dst] = 1 / distance; undirected networks also set A[dst, src].
SensorNetwork build_adjacency(const std::vector<Edge>& edges, Index node_count, bool directed = true);

/// Per-channel min-max scaling. When `stats` is absent they are fit on `fit_range`
/// (every slot if that is absent too). Missing cells are excluded from the fit and
/// set to 0 in the output. Values outside the fitted range are not clipped.
std::pair<ObservationSeries, NormalizationStats> min_max_normalize(
    const ObservationSeries& series, const std::optional<NormalizationStats>& stats,
    std::optional<SlotRange> fit_range = std::nullopt);

/// Base segment of floor(base_fraction * T) slots, then `incremental` equal parts
/// (the last absorbs the remainder). Each segment is split 70/10/20 into
/// train/val/test; every split must hold at least one window of M + N slots.
std::vector<StreamSegment> split_stream(Index total_slots, double base_fraction, int incremental,
                                        Index input_steps, Index output_steps);

/// Number of stride-1 windows of M inputs and N targets that fit in a range.
inline Index window_count(SlotRange range, Index input_steps, Index output_steps) {
  const Index n = range.length() - input_steps - output_steps + 1;
  return n > 0 ? n : 0;
}

template <typename Scalar>
struct WindowBatch {
  /// B x M x |V| x C
  Tensor4<Scalar> inputs;
  /// B x N x |V| x 1 (channel 0 of the following N slots)
  Tensor4<Scalar> targets;
  /// Slot index of each window's first input step.
  std::vector<Index> origin_slots;

  Index size() const { return inputs.batch(); }
};

/// Rearranges B x T x |V| x C into (B*|V|) x (T*C) with rows (b, v) and columns (t, c).
template <typename Scalar>
Mat<Scalar> to_node_rows(const Tensor4<Scalar>& x) {
  const Index steps = x.steps(), nodes = x.nodes(), channels = x.channels();
  Mat<Scalar> out(x.batch() * nodes, steps * channels);
  for (Index b = 0; b < x.batch(); ++b) {
    for (Index t = 0; t < steps; ++t) {
      for (Index v = 0; v < nodes; ++v) {
        out.row(b * nodes + v).segment(t * channels, channels) = x.data().row(x.layout().row(b, t, v));
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> from_node_rows(const Mat<Scalar>& rows, Index nodes, Index steps, Index channels) {
  if (nodes <= 0 || rows.rows() % nodes != 0 || rows.cols() != steps * channels) {
    throw ContractError("from_node_rows: shape mismatch");
  }
  const Index batch = rows.rows() / nodes;
  Tensor4<Scalar> out(batch, steps, nodes, channels);
  for (Index b = 0; b < batch; ++b) {
    for (Index t = 0; t < steps; ++t) {
      for (Index v = 0; v < nodes; ++v) {
        out.data().row(out.layout().row(b, t, v)) = rows.row(b * nodes + v).segment(t * channels, channels);
      }
    }
  }
  return out;
}

/// Sequential stride-1 windows over a slot range, grouped into batches of at most
/// `batch_size`. The final partial batch is yielded as-is. Single consumer.
template <typename Scalar>
class WindowIterator {
 public:
  WindowIterator(const ObservationSeries& series, SlotRange range, Index input_steps, Index output_steps,
                 Index batch_size)
      : series_(&series),
        range_(range),
        input_steps_(input_steps),
        output_steps_(output_steps),
        batch_size_(batch_size),
        total_(window_count(range, input_steps, output_steps)) {
    if (input_steps < 1 || output_steps < 1) throw ContractError("make_windows: M and N must be >= 1");
    if (batch_size < 1) throw ContractError("make_windows: batch size must be >= 1");
    if (range.begin < 0 || range.end > series.slots) throw ContractError("make_windows: range outside series");
  }

  Index window_total() const { return total_; }
  Index batch_total() const { return (total_ + batch_size_ - 1) / batch_size_; }
  void reset() { next_ = 0; }

  std::optional<WindowBatch<Scalar>> next() {
    if (next_ >= total_) return std::nullopt;
    const Index count = std::min(batch_size_, total_ - next_);
    const Index nodes = series_->nodes;
    WindowBatch<Scalar> batch{Tensor4<Scalar>(count, input_steps_, nodes, series_->channels()),
                              Tensor4<Scalar>(count, output_steps_, nodes, 1),
                              {}};
    for (Index b = 0; b < count; ++b) {
      const Index origin = range_.begin + next_ + b;
      batch.origin_slots.push_back(origin);
      for (Index t = 0; t < input_steps_; ++t) {
        batch.inputs.frame(b, t) = series_->frame(origin + t).template cast<Scalar>();
      }
      for (Index t = 0; t < output_steps_; ++t) {
        batch.targets.frame(b, t) = series_->frame(origin + input_steps_ + t).col(0).template cast<Scalar>();
      }
    }
    next_ += count;
    return batch;
  }

 private:
  const ObservationSeries* series_;
  SlotRange range_;
  Index input_steps_;
  Index output_steps_;
  Index batch_size_;
  Index total_;
  Index next_ = 0;
};

template <typename Scalar>
WindowIterator<Scalar> make_windows(const ObservationSeries& series, SlotRange range, Index input_steps,
                                    Index output_steps, Index batch_size) {
  return WindowIterator<Scalar>(series, range, input_steps, output_steps, batch_size);
}

template <typename Scalar>
std::vector<WindowBatch<Scalar>> collect_windows(const ObservationSeries& series, SlotRange range,
                                                 Index input_steps, Index output_steps, Index batch_size) {
  std::vector<WindowBatch<Scalar>> out;
  auto it = make_windows<Scalar>(series, range, input_steps, output_steps, batch_size);
  while (auto batch = it.next()) out.push_back(std::move(*batch));
  return out;
}

}  // namespace urcl
