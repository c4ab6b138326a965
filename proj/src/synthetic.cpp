#include "urcl/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace urcl {

std::vector<Index> regime_starts(Index slots, double base_fraction, int segments) {
  if (segments < 1) throw ConfigError("synthetic stream needs at least one segment");
  if (!(base_fraction > 0.0 && base_fraction < 1.0)) throw ConfigError("base_fraction must lie in (0, 1)");
  if (segments == 1) return {0};
  const Index base = static_cast<Index>(std::floor(base_fraction * static_cast<double>(slots) + 1e-9));
  const Index part = (slots - base) / (segments - 1);
  std::vector<Index> starts{0};
  for (int k = 0; k + 1 < segments; ++k) starts.push_back(base + k * part);
  return starts;
}

namespace {

struct Regime {
  Eigen::VectorXd level;
  Eigen::VectorXd amplitude;
  double phase = 0.0;
  double lag_per_hop = 0.0;
  double harmonic = 0.0;
  double persistence = 0.5;
};

Regime draw_regime(Index nodes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  Regime r;
  const double shift = between(-25.0, 25.0);
  r.level.resize(nodes);
  r.amplitude.resize(nodes);
  for (Index v = 0; v < nodes; ++v) {
    r.level(v) = 50.0 + shift + between(-10.0, 10.0);
    r.amplitude(v) = between(5.0, 20.0);
  }
  r.phase = between(0.0, 2.0 * std::numbers::pi);
  r.lag_per_hop = between(-0.6, 0.6);
  r.harmonic = between(0.0, 0.5);
  r.persistence = between(0.3, 0.8);
  return r;
}

}  // namespace

std::pair<SensorNetwork, ObservationSeries> generate_synthetic(const SyntheticOptions& options) {
  if (options.nodes < 3) throw ConfigError("synthetic ring needs at least 3 nodes");
  if (options.slots < 1 || options.period < 2 || !(options.noise >= 0.0)) {
    throw ConfigError("synthetic stream needs positive slots, a period >= 2 and non-negative noise");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Index n = options.nodes;
  std::vector<Edge> edges;
  for (Index v = 0; v < n; ++v) edges.push_back({v, (v + 1) % n, 0.8 + 0.4 * unit(rng)});
  SensorNetwork network = build_adjacency(edges, n, false);

  const std::vector<Index> starts = regime_starts(options.slots, options.base_fraction, options.segments);
  std::vector<Regime> regimes;
  for (std::size_t k = 0; k < starts.size(); ++k) regimes.push_back(draw_regime(n, rng));

  ObservationSeries series;
  series.slots = options.slots;
  series.nodes = n;
  series.values.resize(options.slots * n, 2);
  series.missing.setConstant(options.slots * n, 2, false);
  series.interval_minutes = 1440.0 / static_cast<double>(options.period);

  Eigen::VectorXd residual = Eigen::VectorXd::Zero(n);
  std::size_t regime = 0;
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(options.period);
  for (Index t = 0; t < options.slots; ++t) {
    while (regime + 1 < starts.size() && t >= starts[regime + 1]) ++regime;
    const Regime& r = regimes[regime];
    Eigen::VectorXd next(n);
    for (Index v = 0; v < n; ++v) {
      const double neighbours = 0.5 * (residual((v + n - 1) % n) + residual((v + 1) % n));
      next(v) = r.persistence * residual(v) + 0.15 * neighbours + options.noise * gauss(rng);
    }
    residual = next;
    const double tod = static_cast<double>(t % options.period) / static_cast<double>(options.period);
    for (Index v = 0; v < n; ++v) {
      const double angle = omega * static_cast<double>(t) + r.phase + r.lag_per_hop * static_cast<double>(v);
      const double cycle = std::sin(angle) + r.harmonic * std::sin(2.0 * angle + 1.0);
      series.values(series.row(t, v), 0) = r.level(v) + r.amplitude(v) * cycle + residual(v);
      series.values(series.row(t, v), 1) = tod;
    }
  }
  return {std::move(network), std::move(series)};
}

}  // namespace urcl
