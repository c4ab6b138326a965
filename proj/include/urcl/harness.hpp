#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "urcl/config.hpp"
#include "urcl/optimizer.hpp"
#include "urcl/replay.hpp"
#include "urcl/ssl_loss.hpp"
#include "urcl/stmodel.hpp"
#include "urcl/stream_data.hpp"

namespace urcl {

/// Training precision of the experiment runner.
using Real = float;

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

/// Mean absolute and root-mean-square error over paired values.
ErrorMetrics compute_metrics(const Eigen::ArrayXd& predictions, const Eigen::ArrayXd& targets);

struct EpochStats {
  LossBreakdown train;
  ErrorMetrics val;
};

struct LossRow {
  long step = 0;
  int segment = 0;
  LossBreakdown loss;
};

struct SegmentReport {
  int segment = 0;
  std::string role;
  Strategy strategy = Strategy::Urcl;
  std::vector<EpochStats> epochs;
  /// 1-based epoch whose weights were kept; 0 when the segment was not trained.
  int best_epoch = 0;
  ErrorMetrics test;
  double train_seconds = 0.0;
  double infer_seconds_per_window = 0.0;
  std::size_t buffer_size = 0;
  /// Non-empty when training aborted.
  std::string diagnostic;
};

/// Normalized stream plus everything derived from it that training needs.
struct StreamData {
  SensorNetwork network;
  ObservationSeries series;
  NormalizationStats stats;
  std::vector<StreamSegment> segments;
  Mat<Real> adjacency;
};

/// Splits the stream and scales it with statistics fit on the base training range.
StreamData prepare_stream(SensorNetwork network, const ObservationSeries& raw, const ExperimentConfig& config);

/// Forecast error on every window of `range`, in the units of the raw data.
ErrorMetrics evaluate_metrics(const STModel<Real>& model, const StreamData& data, SlotRange range,
                              const ExperimentConfig& config, Index* window_total = nullptr);

/// Mutable state carried from segment to segment.
struct LearnerState {
  STModel<Real> model;
  ReplayBuffer<Real> buffer;
  long step = 0;
};

/// One optimization step: replay selection, mixup, contrastive views, forecast loss,
/// update, then the raw batch joins the buffer.
LossBreakdown train_step(LearnerState& state, const WindowBatch<Real>& batch, const StreamData& data,
                         const ExperimentConfig& config, Optimizer<Real>& optimizer, std::mt19937_64& rng);

/// Trains on the segment's training windows until validation error stops improving
/// for `patience` epochs or the epoch cap is reached, then restores the best weights.
/// A non-finite loss ends training early; the report's diagnostic says why.
SegmentReport train_segment(LearnerState& state, const StreamSegment& segment, const StreamData& data,
                            const ExperimentConfig& config, std::mt19937_64& rng, std::vector<LossRow>& losses);

/// Seeds the generator for one segment so each segment can be replayed in isolation.
std::mt19937_64 segment_rng(std::uint64_t seed, int segment);

/// Files written for each completed segment.
struct CheckpointRecord {
  std::filesystem::path model;
  std::filesystem::path buffer;
  std::filesystem::path losses;
  std::string config_hash;
  int segment = 0;
  long step = 0;
  std::vector<SegmentReport> reports;
};

void save_record(const std::filesystem::path& path, const CheckpointRecord& record);
CheckpointRecord load_record(const std::filesystem::path& path);

struct ExperimentResult {
  std::vector<SegmentReport> reports;
  std::vector<LossRow> losses;
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  bool write_checkpoints = true;
};

/// Processes every segment in order under the configured strategy, writing
/// summary.csv, losses.csv, epochs.csv and per-segment checkpoints to the output directory.
ExperimentResult run_stream_experiment(const ExperimentConfig& config, const RunOptions& options);

void write_summary_csv(const std::filesystem::path& path, const std::vector<SegmentReport>& reports);
void write_losses_csv(const std::filesystem::path& path, const std::vector<LossRow>& losses);
void write_epochs_csv(const std::filesystem::path& path, const std::vector<SegmentReport>& reports);
std::vector<LossRow> read_losses_csv(const std::filesystem::path& path);

}  // namespace urcl
