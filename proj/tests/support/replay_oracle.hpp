#pragma once

// Brute-force reference for the replay sampler on the toy linear model: finite
// differences for the virtual step, full sorts for both ranking stages.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "support/oracles.hpp"
#include "support/toy_model.hpp"
#include "urcl/replay.hpp"

namespace replay_oracle {

using urcl::Index;
using urcl::Mat;
using urcl::ReplayBuffer;
using urcl::Tensor4;
using Batch = urcl::WindowBatch<double>;
using Model = toy::LinearModel<double>;

constexpr Index kSteps = 3, kNodes = 2, kChannels = 2;

inline Batch random_batch(Index size, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Batch b{Tensor4<double>(size, kSteps, kNodes, kChannels), Tensor4<double>(size, 1, kNodes, 1), {}};
  for (Index i = 0; i < b.inputs.data().size(); ++i) b.inputs.data().data()[i] = dist(rng);
  for (Index i = 0; i < b.targets.data().size(); ++i) b.targets.data().data()[i] = dist(rng);
  for (Index i = 0; i < size; ++i) b.origin_slots.push_back(i);
  return b;
}

/// A batch of one window whose every input value is `value`.
inline Batch constant_batch(double value) {
  Batch b{Tensor4<double>(1, kSteps, kNodes, kChannels), Tensor4<double>(1, 1, kNodes, 1), {0}};
  b.inputs.data().setConstant(value);
  b.targets.data().setConstant(-value);
  return b;
}

inline Model random_model(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Mat<double> w(kSteps * kChannels, 1);
  for (Index i = 0; i < w.size(); ++i) w(i, 0) = dist(rng);
  return Model(w, dist(rng));
}

/// Per-window MAE of the linear model, written out with explicit loops.
inline double item_loss_oracle(const std::vector<double>& w, double bias, const Mat<double>& input, const Mat<double>& target) {
  double total = 0.0;
  for (Index v = 0; v < kNodes; ++v) {
    double pred = bias;
    for (Index t = 0; t < kSteps; ++t) {
      for (Index c = 0; c < kChannels; ++c) pred += w[static_cast<std::size_t>(t * kChannels + c)] * input(t * kNodes + v, c);
    }
    total += std::abs(pred - target(v, 0));
  }
  return total / static_cast<double>(kNodes);
}

inline double batch_loss_oracle(const std::vector<double>& params, const Batch& batch) {
  const std::vector<double> w(params.begin(), params.end() - 1);
  double total = 0.0;
  for (Index b = 0; b < batch.size(); ++b) {
    total += item_loss_oracle(w, params.back(), batch.inputs.sample(b), batch.targets.sample(b));
  }
  return total / static_cast<double>(batch.size());
}

inline std::vector<double> flat_params(const Model& m) {
  std::vector<double> p(m.weight().data(), m.weight().data() + m.weight().size());
  p.push_back(m.bias());
  return p;
}

/// One gradient step on the batch MAE with a central-difference gradient.
inline std::vector<double> virtual_params_oracle(const Model& m, const Batch& batch, double lr) {
  std::vector<double> p = flat_params(m);
  std::vector<double> out = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = oracle::central_difference([&] { return batch_loss_oracle(p, batch); }, p[i], 1e-7);
    out[i] -= lr * g;
  }
  return out;
}

/// Indices ordered by loss increase under the virtual parameters, ties by position.
inline std::vector<std::size_t> interference_oracle(const ReplayBuffer<double>& buffer, const std::vector<double>& before,
                                             const std::vector<double>& after) {
  std::vector<double> delta;
  for (const auto& item : buffer.items()) {
    const std::vector<double> wb(before.begin(), before.end() - 1), wa(after.begin(), after.end() - 1);
    delta.push_back(item_loss_oracle(wa, after.back(), item.input, item.target) -
                    item_loss_oracle(wb, before.back(), item.input, item.target));
  }
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return delta[a] != delta[b] ? delta[a] > delta[b] : a < b;
  });
  return order;
}

inline std::vector<double> flatten(const Mat<double>& m) { return std::vector<double>(m.data(), m.data() + m.size()); }

inline std::vector<std::size_t> rmir_oracle(const ReplayBuffer<double>& buffer, const Batch& current, const Model& model,
                                     double lr, std::size_t pool, std::size_t sample) {
  if (buffer.size() < sample) {
    std::vector<std::size_t> all(buffer.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::vector<std::size_t> ranked =
      interference_oracle(buffer, flat_params(model), virtual_params_oracle(model, current, lr));
  ranked.resize(std::min(pool, ranked.size()));
  Mat<double> mean = Mat<double>::Zero(kSteps * kNodes, kChannels);
  for (Index b = 0; b < current.size(); ++b) mean += current.inputs.sample(b);
  mean /= static_cast<double>(current.size());
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i : ranked) scored.emplace_back(oracle::pearson(flatten(buffer[i].input), flatten(mean)), i);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sample; ++i) out.push_back(scored[i].second);
  return out;
}


}  // namespace replay_oracle
