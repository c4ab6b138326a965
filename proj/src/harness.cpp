#include "urcl/harness.hpp"

#include <fmt/format.h>

#include <chrono>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "urcl/augment.hpp"
#include "urcl/checkpoint.hpp"
#include "urcl/log.hpp"

namespace urcl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Mat<Real>> snapshot(const STModel<Real>& model) {
  std::vector<Mat<Real>> out;
  for (const auto& p : model.parameter_vars()) out.push_back(p.value());
  return out;
}

void restore(STModel<Real>& model, const std::vector<Mat<Real>>& values) {
  auto params = model.parameter_vars();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = values[i];
}

std::string segment_stem(int segment) { return fmt::format("segment_{}", segment); }

}  // namespace

ErrorMetrics compute_metrics(const Eigen::ArrayXd& predictions, const Eigen::ArrayXd& targets) {
  if (predictions.size() != targets.size()) throw ContractError("compute_metrics: length mismatch");
  if (predictions.size() == 0) throw ContractError("compute_metrics: no values to score");
  const Eigen::ArrayXd residual = predictions - targets;
  return {residual.abs().mean(), std::sqrt(residual.square().mean())};
}

StreamData prepare_stream(SensorNetwork network, const ObservationSeries& raw, const ExperimentConfig& config) {
  StreamData data;
  data.segments = split_stream(raw.slots, config.base_fraction, config.incremental_segments, config.input_steps,
                               config.output_steps);
  auto [series, stats] = min_max_normalize(raw, std::nullopt, data.segments.front().train);
  data.series = std::move(series);
  data.stats = std::move(stats);
  data.adjacency = network.adjacency.cast<Real>();
  data.network = std::move(network);
  return data;
}

ErrorMetrics evaluate_metrics(const STModel<Real>& model, const StreamData& data, SlotRange range,
                              const ExperimentConfig& config, Index* window_total) {
  ad::NoGradGuard no_grad;
  auto windows = make_windows<Real>(data.series, range, config.input_steps, config.output_steps,
                                    config.eval_batch_size);
  if (window_total != nullptr) *window_total = windows.window_total();
  if (windows.window_total() == 0) throw ContractError("evaluate_metrics: empty evaluation range");
  const double lo = data.stats.min(0), span = data.stats.range(0);
  std::vector<double> preds, targets;
  while (auto batch = windows.next()) {
    const Mat<Real> p = model.forecast(batch->inputs).value();
    const Mat<Real> t = to_node_rows(batch->targets);
    for (Index i = 0; i < p.size(); ++i) {
      preds.push_back(static_cast<double>(p.data()[i]) * span + lo);
      targets.push_back(static_cast<double>(t.data()[i]) * span + lo);
    }
  }
  return compute_metrics(Eigen::Map<const Eigen::ArrayXd>(preds.data(), static_cast<Index>(preds.size())),
                         Eigen::Map<const Eigen::ArrayXd>(targets.data(), static_cast<Index>(targets.size())));
}

LossBreakdown train_step(LearnerState& state, const WindowBatch<Real>& batch, const StreamData& data,
                         const ExperimentConfig& config, Optimizer<Real>& optimizer, std::mt19937_64& rng) {
  STModel<Real>& model = state.model;
  std::vector<ReplayItem<Real>> sampled;
  if (!state.buffer.empty()) {
    sampled = rmir_sample(state.buffer, batch, model, static_cast<Real>(optimizer.learning_rate()),
                          config.pool_size(), config.sample_size(), rng);
  }
  const WindowBatch<Real> mixed =
      sampled.empty() ? batch : stmixup(batch, sampled, MixupConfig{config.mixup_alpha, config.seed}, rng);

  ad::Var<Real> ssl;
  if (config.ssl_weight > 0.0 && mixed.size() >= 2) {
    const GraphSample<Real> sample{mixed.inputs, data.adjacency, data.network.directed};
    const ViewPair<Real> views = random_view_pair(sample, config.augment, rng);
    const ad::Var<Real> z1 = model.encode(views.first.window, views.first.adjacency).pooled;
    const ad::Var<Real> z2 = model.encode(views.second.window, views.second.adjacency).pooled;
    ssl = ad::scale(graphcl_batch_loss(model.project(z1), model.project(z2), z1, z2,
                                       static_cast<Real>(config.temperature)),
                    static_cast<Real>(config.ssl_weight));
  }
  const ad::Var<Real> task =
      task_loss_mae(model.forecast(mixed.inputs), ad::Var<Real>::constant(to_node_rows(mixed.targets)));
  const LossBreakdown logged = total_loss(task.item(), ssl.defined() ? ssl.item() : 0.0);

  ad::backward(ssl.defined() ? ad::add(task, ssl) : task);
  if (config.grad_clip > 0.0) clip_grad_norm(optimizer.parameters(), config.grad_clip);
  optimizer.step();
  model.zero_grad();

  state.buffer.insert(batch);
  ++state.step;
  return logged;
}

std::mt19937_64 segment_rng(std::uint64_t seed, int segment) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(segment)};
  return std::mt19937_64(seq);
}

SegmentReport train_segment(LearnerState& state, const StreamSegment& segment, const StreamData& data,
                            const ExperimentConfig& config, std::mt19937_64& rng, std::vector<LossRow>& losses) {
  SegmentReport report;
  report.segment = segment.index;
  report.role = segment.role();
  report.strategy = config.strategy;

  auto optimizer = make_optimizer<Real>(config.optimizer, state.model.parameter_vars(), config.learning_rate);
  auto windows = make_windows<Real>(data.series, segment.train, config.input_steps, config.output_steps,
                                    config.batch_size);
  if (windows.window_total() == 0) throw ContractError("train_segment: no training windows in " + report.role);

  std::vector<Mat<Real>> best = snapshot(state.model);
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto start = Clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochStats stats;
    long steps = 0;
    windows.reset();
    try {
      while (auto batch = windows.next()) {
        const LossBreakdown loss = train_step(state, *batch, data, config, *optimizer, rng);
        losses.push_back({state.step, segment.index, loss});
        stats.train.task += loss.task;
        stats.train.ssl += loss.ssl;
        stats.train.total += loss.total;
        ++steps;
      }
    } catch (const NumericalError& e) {
      report.diagnostic = fmt::format("{} epoch {} step {}: {}", report.role, epoch, state.step + 1, e.what());
      logger().error("{}", report.diagnostic);
      state.model.zero_grad();
      break;
    }
    stats.train.task /= static_cast<double>(steps);
    stats.train.ssl /= static_cast<double>(steps);
    stats.train.total /= static_cast<double>(steps);
    stats.val = evaluate_metrics(state.model, data, segment.val, config);
    report.epochs.push_back(stats);
    logger().info("{} epoch {}: task {:.5f} ssl {:.5f} val MAE {:.4f}", report.role, epoch, stats.train.task,
                  stats.train.ssl, stats.val.mae);

    if (stats.val.mae < best_val) {
      best_val = stats.val.mae;
      best = snapshot(state.model);
      report.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  restore(state.model, best);
  report.train_seconds = seconds_since(start);
  report.buffer_size = state.buffer.size();
  return report;
}

void save_record(const std::filesystem::path& path, const CheckpointRecord& record) {
  nlohmann::json reports = nlohmann::json::array();
  for (const SegmentReport& r : record.reports) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochStats& e : r.epochs) {
      epochs.push_back({e.train.task, e.train.ssl, e.train.total, e.val.mae, e.val.rmse});
    }
    reports.push_back({{"segment", r.segment},
                       {"role", r.role},
                       {"strategy", to_string(r.strategy)},
                       {"epochs", epochs},
                       {"best_epoch", r.best_epoch},
                       {"test_mae", r.test.mae},
                       {"test_rmse", r.test.rmse},
                       {"train_seconds", r.train_seconds},
                       {"infer_seconds_per_window", r.infer_seconds_per_window},
                       {"buffer_size", r.buffer_size}});
  }
  const nlohmann::json j{{"format", "URCL-RUN-v1"},
                         {"model", record.model.filename().string()},
                         {"buffer", record.buffer.filename().string()},
                         {"losses", record.losses.filename().string()},
                         {"config_hash", record.config_hash},
                         {"segment", record.segment},
                         {"step", record.step},
                         {"reports", reports}};
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

CheckpointRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open checkpoint record " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "URCL-RUN-v1") throw SchemaError(path.string() + ": not a run checkpoint record");
    const auto dir = path.parent_path();
    CheckpointRecord record;
    record.model = dir / j.at("model").get<std::string>();
    record.buffer = dir / j.at("buffer").get<std::string>();
    record.losses = dir / j.at("losses").get<std::string>();
    record.config_hash = j.at("config_hash").get<std::string>();
    record.segment = j.at("segment").get<int>();
    record.step = j.at("step").get<long>();
    for (const auto& r : j.at("reports")) {
      SegmentReport report;
      report.segment = r.at("segment").get<int>();
      report.role = r.at("role").get<std::string>();
      report.strategy = parse_strategy(r.at("strategy").get<std::string>());
      for (const auto& e : r.at("epochs")) {
        report.epochs.push_back({{e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()},
                                 {e.at(3).get<double>(), e.at(4).get<double>()}});
      }
      report.best_epoch = r.at("best_epoch").get<int>();
      report.test = {r.at("test_mae").get<double>(), r.at("test_rmse").get<double>()};
      report.train_seconds = r.at("train_seconds").get<double>();
      report.infer_seconds_per_window = r.at("infer_seconds_per_window").get<double>();
      report.buffer_size = r.at("buffer_size").get<std::size_t>();
      record.reports.push_back(std::move(report));
    }
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SegmentReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "segment,strategy,MAE,RMSE,train_seconds,infer_seconds_per_window\n";
  for (const SegmentReport& r : reports) {
    out << fmt::format("{},{},{},{},{},{}\n", r.role, to_string(r.strategy), r.test.mae, r.test.rmse,
                       r.train_seconds, r.infer_seconds_per_window);
  }
}

void write_losses_csv(const std::filesystem::path& path, const std::vector<LossRow>& losses) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "step,task,ssl,total,segment\n";
  for (const LossRow& row : losses) {
    out << fmt::format("{},{},{},{},{}\n", row.step, row.loss.task, row.loss.ssl, row.loss.total, row.segment);
  }
}

void write_epochs_csv(const std::filesystem::path& path, const std::vector<SegmentReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  out << "segment,strategy,epoch,task,ssl,total,val_MAE,val_RMSE\n";
  for (const SegmentReport& r : reports) {
    for (std::size_t e = 0; e < r.epochs.size(); ++e) {
      const EpochStats& s = r.epochs[e];
      out << fmt::format("{},{},{},{},{},{},{},{}\n", r.role, to_string(r.strategy), e + 1, s.train.task,
                         s.train.ssl, s.train.total, s.val.mae, s.val.rmse);
    }
  }
}

std::vector<LossRow> read_losses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "step,task,ssl,total,segment") throw SchemaError(path.string() + ": unexpected losses header");
  std::vector<LossRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    LossRow row;
    if (!(fields >> row.step >> row.loss.task >> row.loss.ssl >> row.loss.total >> row.segment)) {
      throw ParseError(path.string() + ": malformed row", static_cast<long>(rows.size()) + 1, 0);
    }
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_stream_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  auto [network, raw] = load_dataset(config.dataset);
  const StreamData data = prepare_stream(std::move(network), raw, config);
  const std::string hash = config_hash(config);
  const ModelConfig model_config = config.model_config(data.series.nodes, data.series.channels(),
                                                       data.network.directed);

  const bool replay = config.strategy == Strategy::Urcl;
  ExperimentConfig effective = config;
  if (!replay) effective.ssl_weight = 0.0;
  LearnerState state{STModel<Real>(model_config, data.adjacency, config.seed),
                     ReplayBuffer<Real>(replay ? config.buffer_capacity : 0), 0};

  ExperimentResult result;
  int first = 0;
  if (options.resume) {
    const CheckpointRecord record = load_record(*options.resume);
    if (record.config_hash != hash) {
      throw ConfigError("resume: checkpoint was written under config " + record.config_hash + ", current is " + hash);
    }
    load_model(record.model, state.model, hash);
    state.buffer = load_buffer<Real>(record.buffer);
    state.step = record.step;
    result.reports = record.reports;
    result.losses = read_losses_csv(record.losses);
    first = record.segment + 1;
    logger().info("resuming after segment {}", record.segment);
  }

  const auto& out_dir = options.out_dir;
  std::filesystem::create_directories(out_dir);
  const auto ckpt_dir = out_dir / "checkpoints";
  if (options.write_checkpoints) std::filesystem::create_directories(ckpt_dir);
  std::ofstream(out_dir / "config.txt") << serialize_config(config);

  for (int i = first; i < static_cast<int>(data.segments.size()); ++i) {
    const StreamSegment& segment = data.segments[static_cast<std::size_t>(i)];
    std::mt19937_64 rng = segment_rng(config.seed, i);
    SegmentReport report;
    if (config.strategy == Strategy::OneFitAll && !segment.is_base()) {
      report.segment = segment.index;
      report.role = segment.role();
      report.strategy = config.strategy;
    } else {
      report = train_segment(state, segment, data, effective, rng, result.losses);
    }

    Index test_windows = 0;
    const auto infer_start = Clock::now();
    report.test = evaluate_metrics(state.model, data, segment.test, config, &test_windows);
    report.infer_seconds_per_window = seconds_since(infer_start) / static_cast<double>(test_windows);
    report.buffer_size = state.buffer.size();
    logger().info("{} [{}]: test MAE {:.4f} RMSE {:.4f} ({:.1f}s)", report.role, to_string(config.strategy),
                  report.test.mae, report.test.rmse, report.train_seconds);
    const std::string diagnostic = report.diagnostic;
    result.reports.push_back(std::move(report));

    write_summary_csv(out_dir / "summary.csv", result.reports);
    write_losses_csv(out_dir / "losses.csv", result.losses);
    write_epochs_csv(out_dir / "epochs.csv", result.reports);
    if (!diagnostic.empty()) {
      std::ofstream(out_dir / "diagnostic.txt") << diagnostic << '\n';
      throw NumericalError(diagnostic);
    }
    if (options.write_checkpoints) {
      const std::string stem = segment_stem(i);
      CheckpointRecord record{ckpt_dir / (stem + ".ckpt"), ckpt_dir / (stem + ".buf"),
                              ckpt_dir / (stem + ".losses.csv"), hash, i, state.step, result.reports};
      save_model(record.model, state.model, hash);
      save_buffer(record.buffer, state.buffer);
      write_losses_csv(record.losses, result.losses);
      save_record(ckpt_dir / (stem + ".json"), record);
    }
  }
  return result;
}

}  // namespace urcl
