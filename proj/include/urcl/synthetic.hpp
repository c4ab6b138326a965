#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "urcl/stream_data.hpp"

namespace urcl {

/// Concept-drift benchmark: sensors on an undirected ring, each segment of the
/// stream governed by its own regime of daily cycles, levels and spatial lags,
/// with noise that diffuses along the ring.
struct SyntheticOptions {
  Index nodes = 10;
  /// Regimes in the stream: one base segment plus `segments - 1` incremental ones.
  int segments = 5;
  Index slots = 2000;
  std::uint64_t seed = 0;
  /// Share of the stream given to the base regime; matches the experiment split.
  double base_fraction = 0.3;
  /// Slots per daily cycle.
  Index period = 48;
  /// Standard deviation of the innovation noise, in data units.
  double noise = 2.0;
};

/// Slot index where each regime starts, the same boundaries split_stream produces.
std::vector<Index> regime_starts(Index slots, double base_fraction, int segments);

/// Two channels: the sensor reading and the time of day in [0, 1).
std::pair<SensorNetwork, ObservationSeries> generate_synthetic(const SyntheticOptions& options);

}  // namespace urcl
