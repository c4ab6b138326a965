#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "urcl/augment.hpp"
#include "urcl/autograd.hpp"
#include "urcl/errors.hpp"
#include "urcl/log.hpp"
#include "urcl/stream_data.hpp"
#include "urcl/tensor.hpp"

namespace urcl {

/// One raw (pre-mixup) training window and its target.
template <typename Scalar>
struct ReplayItem {
  /// (M*|V|) x C, rows (t, v)
  Mat<Scalar> input;
  /// (N*|V|) x C_out, rows (t, v)
  Mat<Scalar> target;
  std::uint64_t insert_counter = 0;
};

/// Bounded first-in-first-out store of training windows. Capacity 0 keeps nothing.
template <typename Scalar>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 256) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::uint64_t next_counter() const { return next_counter_; }
  const std::deque<ReplayItem<Scalar>>& items() const { return items_; }
  const ReplayItem<Scalar>& operator[](std::size_t i) const { return items_[i]; }

  /// Shape every item shares: input steps, nodes, input channels, output steps, output channels.
  const std::array<Index, 5>& shape() const { return shape_; }

  /// Appends every window of the batch, evicting the oldest items beyond capacity.
  void insert(const WindowBatch<Scalar>& batch) {
    const std::array<Index, 5> shape{batch.inputs.steps(), batch.inputs.nodes(), batch.inputs.channels(),
                                     batch.targets.steps(), batch.targets.channels()};
    check_shape(shape);
    const Index in_rows = shape[0] * shape[1], out_rows = shape[3] * shape[1];
    for (Index b = 0; b < batch.size(); ++b) {
      push({batch.inputs.data().middleRows(b * in_rows, in_rows), batch.targets.data().middleRows(b * out_rows, out_rows),
            next_counter_++});
    }
  }

  /// Stacks the chosen items into a batch; origin_slots carry their insert counters.
  WindowBatch<Scalar> gather(const std::vector<std::size_t>& indices) const {
    if (indices.empty()) throw ContractError("ReplayBuffer::gather: no indices");
    const auto& [steps, nodes, channels, out_steps, out_channels] = shape_;
    const Index count = static_cast<Index>(indices.size());
    WindowBatch<Scalar> batch{Tensor4<Scalar>(count, steps, nodes, channels),
                              Tensor4<Scalar>(count, out_steps, nodes, out_channels),
                              {}};
    for (Index b = 0; b < count; ++b) {
      const auto& item = items_.at(indices[static_cast<std::size_t>(b)]);
      batch.inputs.sample(b) = item.input;
      batch.targets.sample(b) = item.target;
      batch.origin_slots.push_back(static_cast<Index>(item.insert_counter));
    }
    return batch;
  }

  void restore(std::size_t capacity, std::uint64_t next_counter, std::array<Index, 5> shape,
               std::deque<ReplayItem<Scalar>> items) {
    capacity_ = capacity;
    next_counter_ = next_counter;
    shape_ = shape;
    items_ = std::move(items);
  }

  bool operator==(const ReplayBuffer& other) const {
    if (capacity_ != other.capacity_ || next_counter_ != other.next_counter_ || items_.size() != other.items_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
      const auto& a = items_[i];
      const auto& b = other.items_[i];
      if (a.insert_counter != b.insert_counter || a.input != b.input || a.target != b.target) return false;
    }
    return true;
  }

 private:
  void check_shape(const std::array<Index, 5>& shape) {
    if (shape_[0] == 0) {
      shape_ = shape;
    } else if (shape != shape_) {
      throw ContractError("ReplayBuffer: window shape differs from the buffered items");
    }
  }

  void push(ReplayItem<Scalar> item) {
    if (capacity_ == 0) return;
    items_.push_back(std::move(item));
    while (items_.size() > capacity_) items_.pop_front();
  }

  std::size_t capacity_;
  std::uint64_t next_counter_ = 0;
  std::array<Index, 5> shape_{0, 0, 0, 0, 0};
  std::deque<ReplayItem<Scalar>> items_;
};

template <typename Scalar>
void buffer_insert(ReplayBuffer<Scalar>& buffer, const WindowBatch<Scalar>& batch) {
  buffer.insert(batch);
}

/// What the replay sampler needs from a forecaster.
template <typename M, typename Scalar>
concept ReplayModel = requires(const M& m, const WindowBatch<Scalar>& batch) {
  { m.clone() } -> std::same_as<M>;
  { m.sampling_loss(batch) } -> std::same_as<ad::Var<Scalar>>;
  { m.item_losses(batch) } -> std::same_as<std::vector<Scalar>>;
  { m.parameter_vars() } -> std::same_as<std::vector<ad::Var<Scalar>>>;
};

/// One plain gradient step on the sampling loss, applied to a copy of the model.
/// Throws NumericalError if any gradient entry is not finite.
template <typename Scalar, ReplayModel<Scalar> Model>
Model virtual_update(const Model& model, const WindowBatch<Scalar>& batch, Scalar lr) {
  Model shadow = model.clone();
  const ad::Var<Scalar> loss = shadow.sampling_loss(batch);
  ad::backward(loss);
  for (ad::Var<Scalar> p : shadow.parameter_vars()) {
    if (!p.has_grad()) continue;
    const Mat<Scalar> g = p.grad();
    p.zero_grad();
    if (!g.allFinite()) throw NumericalError("virtual update: non-finite gradient");
    p.mutable_value() -= lr * g;
  }
  return shadow;
}

template <typename Scalar>
struct InterferenceScore {
  std::size_t item_index = 0;
  Scalar loss_before = 0;
  Scalar loss_after = 0;
  Scalar delta = 0;
};

/// Per-item sampling loss under both models, ordered by loss increase (largest
/// first); equal increases keep insertion order.
template <typename Scalar, ReplayModel<Scalar> Model>
std::vector<InterferenceScore<Scalar>> interference_rank(const ReplayBuffer<Scalar>& buffer, const Model& model,
                                                         const Model& model_virtual, std::size_t chunk = 64) {
  std::vector<InterferenceScore<Scalar>> scores;
  scores.reserve(buffer.size());
  for (std::size_t begin = 0; begin < buffer.size(); begin += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(buffer.size(), begin + chunk); ++i) idx.push_back(i);
    const WindowBatch<Scalar> batch = buffer.gather(idx);
    const std::vector<Scalar> before = model.item_losses(batch);
    const std::vector<Scalar> after = model_virtual.item_losses(batch);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      scores.push_back({idx[k], before[k], after[k], after[k] - before[k]});
    }
  }
  std::stable_sort(scores.begin(), scores.end(), [&buffer](const auto& a, const auto& b) {
    if (a.delta != b.delta) return a.delta > b.delta;
    return buffer[a.item_index].insert_counter < buffer[b.item_index].insert_counter;
  });
  return scores;
}

/// Pearson correlation of two equal-length vectors; 0 when either has zero variance.
template <typename DerivedA, typename DerivedB>
double pearson_similarity(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  if (a.size() != b.size()) throw ContractError("pearson_similarity: length mismatch");
  if (a.size() < 2) throw ContractError("pearson_similarity: need at least 2 values");
  const Eigen::ArrayXd x = Eigen::Map<const Eigen::ArrayXd>(a.derived().template cast<double>().eval().data(), a.size());
  const Eigen::ArrayXd y = Eigen::Map<const Eigen::ArrayXd>(b.derived().template cast<double>().eval().data(), b.size());
  const Eigen::ArrayXd dx = x - x.mean();
  const Eigen::ArrayXd dy = y - y.mean();
  const double sxx = dx.square().sum(), syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp((dx * dy).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Element-wise mean of a batch's input windows, (M*|V|) x C.
template <typename Scalar>
Mat<Scalar> mean_input_window(const WindowBatch<Scalar>& batch) {
  Mat<Scalar> mean = Mat<Scalar>::Zero(batch.inputs.steps() * batch.inputs.nodes(), batch.inputs.channels());
  for (Index b = 0; b < batch.size(); ++b) mean += batch.inputs.sample(b);
  return mean / static_cast<Scalar>(batch.size());
}

struct RmirSelection {
  std::vector<std::size_t> indices;
  bool random_fallback = false;
};

/// Replay selection: take the `pool_size` items whose loss rises most under a
/// virtual gradient step on the current batch, then keep the `sample_size` of
/// them whose input correlates best with the batch's mean input. Buffers smaller
/// than `sample_size` are returned whole. If the virtual step is not finite, a
/// uniform random subset is returned instead.
template <typename Scalar, ReplayModel<Scalar> Model>
RmirSelection rmir_select(const ReplayBuffer<Scalar>& buffer, const WindowBatch<Scalar>& current, const Model& model,
                          Scalar lr, std::size_t pool_size, std::size_t sample_size, std::mt19937_64& rng) {
  if (sample_size > pool_size) throw ContractError("rmir: sample size must not exceed pool size");
  RmirSelection out;
  if (buffer.empty() || sample_size == 0) return out;
  if (buffer.size() < sample_size) {
    for (std::size_t i = 0; i < buffer.size(); ++i) out.indices.push_back(i);
    return out;
  }

  std::vector<InterferenceScore<Scalar>> ranked;
  try {
    const Model shadow = virtual_update(model, current, lr);
    ranked = interference_rank(buffer, model, shadow);
  } catch (const NumericalError& e) {
    logger().warn("rmir: {}; falling back to random replay sampling", e.what());
    for (Index i : detail::choose_distinct(static_cast<Index>(buffer.size()), static_cast<Index>(sample_size), rng)) out.indices.push_back(static_cast<std::size_t>(i));
    out.random_fallback = true;
    return out;
  }
  if (ranked.size() > pool_size) ranked.resize(pool_size);

  const Mat<Scalar> reference = mean_input_window(current);
  const auto flat = [](const Mat<Scalar>& m) { return Eigen::Map<const Vec<Scalar>>(m.data(), m.size()); };
  struct Candidate {
    std::size_t index;
    double similarity;
    std::uint64_t counter;
  };
  std::vector<Candidate> candidates;
  for (const auto& s : ranked) {
    const auto& item = buffer[s.item_index];
    candidates.push_back({s.item_index, pearson_similarity(flat(item.input), flat(reference)), item.insert_counter});
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.counter < b.counter;
  });
  for (std::size_t i = 0; i < sample_size && i < candidates.size(); ++i) out.indices.push_back(candidates[i].index);
  return out;
}

template <typename Scalar, ReplayModel<Scalar> Model>
std::vector<ReplayItem<Scalar>> rmir_sample(const ReplayBuffer<Scalar>& buffer, const WindowBatch<Scalar>& current,
                                            const Model& model, Scalar lr, std::size_t pool_size,
                                            std::size_t sample_size, std::mt19937_64& rng) {
  std::vector<ReplayItem<Scalar>> out;
  for (std::size_t i : rmir_select(buffer, current, model, lr, pool_size, sample_size, rng).indices) {
    out.push_back(buffer[i]);
  }
  return out;
}

struct MixupConfig {
  double alpha = 0.5;
  std::uint64_t rng_seed = 0;
};

/// lambda ~ Beta(alpha, alpha) as X / (X + Y) with X, Y ~ Gamma(alpha, 1).
inline double draw_mixup_lambda(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw ContractError("mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

/// lambda * current + (1 - lambda) * sampled, for inputs and targets alike. Sampled
/// items are cycled to cover the batch.
template <typename Scalar>
WindowBatch<Scalar> stmixup(const WindowBatch<Scalar>& current, const std::vector<ReplayItem<Scalar>>& sampled,
                            Scalar lambda) {
  if (sampled.empty()) throw ContractError("stmixup: no replay samples");
  WindowBatch<Scalar> out = current;
  const Scalar rest = Scalar(1) - lambda;
  for (Index b = 0; b < current.size(); ++b) {
    const auto& item = sampled[static_cast<std::size_t>(b) % sampled.size()];
    if (item.input.rows() != current.inputs.sample(b).rows() || item.input.cols() != current.inputs.channels() ||
        item.target.rows() != current.targets.sample(b).rows() || item.target.cols() != current.targets.channels()) {
      throw ContractError("stmixup: replay item shape differs from the batch");
    }
    out.inputs.sample(b) = lambda * current.inputs.sample(b) + rest * item.input;
    out.targets.sample(b) = lambda * current.targets.sample(b) + rest * item.target;
  }
  return out;
}

template <typename Scalar>
WindowBatch<Scalar> stmixup(const WindowBatch<Scalar>& current, const std::vector<ReplayItem<Scalar>>& sampled,
                            const MixupConfig& cfg, std::mt19937_64& rng) {
  if (sampled.empty()) throw ContractError("stmixup: no replay samples");
  return stmixup(current, sampled, static_cast<Scalar>(draw_mixup_lambda(cfg.alpha, rng)));
}

inline constexpr char kBufferMagic[] = "URCL-BUF-v1";

/// Binary dump: magic line, scalar width, capacity, next counter, item shape, then items.
template <typename Scalar>
void save_buffer(const std::filesystem::path& path, const ReplayBuffer<Scalar>& buffer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  auto put = [&out](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out << kBufferMagic << '\n';
  put(static_cast<std::uint32_t>(sizeof(Scalar)));
  put(static_cast<std::uint64_t>(buffer.capacity()));
  put(buffer.next_counter());
  for (Index d : buffer.shape()) put(static_cast<std::int64_t>(d));
  put(static_cast<std::uint64_t>(buffer.size()));
  for (const auto& item : buffer.items()) {
    put(item.insert_counter);
    out.write(reinterpret_cast<const char*>(item.input.data()), static_cast<std::streamsize>(item.input.size() * sizeof(Scalar)));
    out.write(reinterpret_cast<const char*>(item.target.data()), static_cast<std::streamsize>(item.target.size() * sizeof(Scalar)));
  }
  if (!out) throw IngestError("failed writing " + path.string());
}

template <typename Scalar>
ReplayBuffer<Scalar> load_buffer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kBufferMagic) throw SchemaError(path.string() + ": not a replay buffer checkpoint");
  auto get = [&in, &path](auto& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw SchemaError(path.string() + ": truncated buffer checkpoint");
  };
  std::uint32_t width = 0;
  get(width);
  if (width != sizeof(Scalar)) throw SchemaError(path.string() + ": scalar width mismatch");
  std::uint64_t capacity = 0, next = 0, count = 0;
  get(capacity);
  get(next);
  std::array<Index, 5> shape{};
  for (Index& d : shape) {
    std::int64_t v = 0;
    get(v);
    d = static_cast<Index>(v);
  }
  get(count);
  std::deque<ReplayItem<Scalar>> items;
  for (std::uint64_t i = 0; i < count; ++i) {
    ReplayItem<Scalar> item;
    get(item.insert_counter);
    item.input.resize(shape[0] * shape[1], shape[2]);
    item.target.resize(shape[3] * shape[1], shape[4]);
    in.read(reinterpret_cast<char*>(item.input.data()), static_cast<std::streamsize>(item.input.size() * sizeof(Scalar)));
    in.read(reinterpret_cast<char*>(item.target.data()), static_cast<std::streamsize>(item.target.size() * sizeof(Scalar)));
    if (!in) throw SchemaError(path.string() + ": truncated buffer checkpoint");
    items.push_back(std::move(item));
  }
  ReplayBuffer<Scalar> buffer(static_cast<std::size_t>(capacity));
  buffer.restore(static_cast<std::size_t>(capacity), next, shape, std::move(items));
  return buffer;
}

}  // namespace urcl
