// Acceptance checks: one PASS/FAIL line per criterion. Exits non-zero when any criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "support/graph_checks.hpp"
#include "support/oracles.hpp"
#include "support/replay_oracle.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny_instance.hpp"
#include "urcl/augment.hpp"
#include "urcl/harness.hpp"
#include "urcl/report.hpp"
#include "urcl/synthetic.hpp"

using namespace urcl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Counts checks and remembers the first failure.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failures_++ == 0) first_failure_ = what;
  }
  bool ok() const { return failures_ == 0; }
  Outcome outcome(const std::string& summary) const {
    if (ok()) return {true, fmt::format("{} ({} checks)", summary, total_)};
    return {false, fmt::format("{} of {} checks failed, first: {}", failures_, total_, first_failure_)};
  }

 private:
  long total_ = 0;
  long failures_ = 0;
  std::string first_failure_;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

void run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status != 0) throw std::runtime_error(fmt::format("command failed ({}): {}", status, command));
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

// ---------------------------------------------------------------------------
// 1. Diffusion convolution against the dense power series.

Outcome diffusion_oracle() {
  using MatD = Eigen::MatrixXd;
  using Vf = ad::Var<float>;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<Index> nodes(1, 6), steps(0, 3), width(1, 4);
  double worst = 0.0;
  for (int graph = 0; graph < 50; ++graph) {
    const bool directed = graph % 2 == 0;
    const Index n = nodes(rng), k = steps(rng), f_in = width(rng), f_out = width(rng);
    MatD a = MatD::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = directed ? 0 : i + 1; j < n; ++j) {
        if (i == j || unit(rng) < 0.5) continue;
        a(i, j) = 0.1 + unit(rng);
        if (!directed) a(j, i) = a(i, j);
      }
    }
    const auto random = [&](Index r, Index c) {
      MatD m(r, c);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * unit(rng) - 1.0;
      return m;
    };
    DiffusionWeights<float> w;
    std::vector<MatD> wf, wb, wa;
    for (Index s = 0; s <= k; ++s) {
      wf.push_back(random(f_in, f_out));
      w.forward.push_back(Vf::parameter(wf.back().cast<float>()));
      if (directed) {
        wb.push_back(random(f_in, f_out));
        w.backward.push_back(Vf::parameter(wb.back().cast<float>()));
      }
      wa.push_back(random(f_in, f_out));
      w.adaptive.push_back(Vf::parameter(wa.back().cast<float>()));
    }
    const MatD e1 = random(n, 3), e2 = random(n, 3), x = random(n, f_in);
    const Vf adaptive = Vf::constant(adaptive_adjacency<float>(e1.cast<float>(), e2.cast<float>()));
    for (bool rectify : {true, false}) {
      const Mat<float> got = diffusion_gconv(Vf::constant(x.cast<float>()), transition_matrices<float>(a.cast<float>()),
                                             adaptive, w, rectify)
                                 .value();
      const MatD expected =
          oracle::diffusion_gconv(x, a, oracle::adaptive_adjacency(e1, e2), wf, wb, wa, rectify);
      worst = std::max(worst, (got.cast<double>() - expected).cwiseAbs().maxCoeff());
    }
  }
  return {worst < 1e-5, fmt::format("50 graphs, max abs diff {:.2e} in single precision", worst)};
}

// ---------------------------------------------------------------------------
// 2. Replay selection against the exhaustive two-stage ranking.

Outcome rmir_oracle_match() {
  using namespace replay_oracle;
  std::mt19937_64 rng(202);
  Tally tally;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t size = 1 + static_cast<std::size_t>(trial % 32);
    const std::size_t pool = 4 + static_cast<std::size_t>(trial % 9);
    const std::size_t sample = 1 + static_cast<std::size_t>(trial % 4);
    const Model model = random_model(rng);
    ReplayBuffer<double> buffer(32);
    buffer.insert(random_batch(static_cast<Index>(size), rng));
    const Batch current = random_batch(4, rng);
    const RmirSelection got = rmir_select(buffer, current, model, 0.1, pool, sample, rng);
    const std::vector<std::size_t> expected = rmir_oracle(buffer, current, model, 0.1, pool, sample);
    tally.check(!got.random_fallback, fmt::format("buffer {} fell back to random sampling", trial));
    tally.check(got.indices == expected, fmt::format("buffer {} selection differs", trial));
  }
  return tally.outcome("100 buffers of 1..32 items, exact index match (ties by buffer position)");
}

// ---------------------------------------------------------------------------
// 3. Contrastive loss hand values.

Outcome graphcl_hand_values() {
  const Mat<double> e = Mat<double>::Identity(2, 2);
  const double two = graphcl_batch_loss<double>(e, e, e, e, 0.5);
  double worst = std::abs(two + 2.0);
  for (Index s : {2, 3, 4, 8}) {
    const Mat<double> same = Mat<double>::Constant(s, 5, 0.3);
    worst = std::max(worst, std::abs(graphcl_batch_loss<double>(same, same, same, same, 0.5) -
                                     std::log(static_cast<double>(s - 1))));
  }
  return {worst < 1e-6, fmt::format("S=2 loss {:.9f}, worst deviation {:.2e}", two, worst)};
}

// ---------------------------------------------------------------------------
// 4. Stop-gradient on the 4-node, 6-step instance.

Outcome stop_gradient() {
  tiny::Instance inst;
  const auto [target1, target2] = inst.targets();
  Tally tally;
  double worst = 0.0;
  for (const auto& [name, var] : inst.model.named_parameters()) {
    if (name.rfind("decoder.", 0) == 0) continue;  // the contrastive loss never reaches the decoder
    inst.model.zero_grad();
    ad::backward(inst.ssl_loss());
    const Mat<double> live = var.grad();
    inst.model.zero_grad();
    ad::backward(inst.ssl_loss_with_targets(target1, target2));
    tally.check(live == var.grad(), name + ": stopped targets leak gradient");
    inst.model.zero_grad();
    const double err = oracle::gradient_check(
        var, [&] { return inst.ssl_loss_with_targets(target1, target2); }, 6, 7, 1e-6, 1e-4);
    worst = std::max(worst, err);
    tally.check(err < 1e-3, fmt::format("{}: finite-difference rel err {:.2e}", name, err));
  }
  // Targets supplied as trainable leaves receive no gradient at all.
  using V = ad::Var<double>;
  V leaf1 = V::parameter(target1), leaf2 = V::parameter(target2);
  const V z1 = inst.model.encode(inst.views.first.window, inst.views.first.adjacency).pooled;
  const V z2 = inst.model.encode(inst.views.second.window, inst.views.second.adjacency).pooled;
  ad::backward(graphcl_batch_loss(inst.model.project(z1), inst.model.project(z2), leaf1, leaf2, inst.temperature));
  tally.check(leaf1.grad().isZero(0.0) && leaf2.grad().isZero(0.0), "gradient reached the target branch");
  inst.model.zero_grad();
  return tally.outcome(fmt::format("target branch gradient exactly 0, worst FD rel err {:.2e}", worst));
}

// ---------------------------------------------------------------------------
// 5. Total-loss gradient check on every parameter group.

Outcome gradient_check() {
  tiny::Instance inst;
  const auto [target1, target2] = inst.targets();
  const auto total = [&] { return ad::add(inst.task_loss(), inst.ssl_loss_with_targets(target1, target2)); };
  Tally tally;
  double worst = 0.0;
  const auto params = inst.model.named_parameters();
  for (const auto& [name, var] : params) {
    inst.model.zero_grad();
    const double err = oracle::gradient_check(var, total, 8, 99, 1e-6, 1e-4);
    worst = std::max(worst, err);
    tally.check(err < 1e-3, fmt::format("{}: rel err {:.2e}", name, err));
  }
  return tally.outcome(fmt::format("{} parameter groups, worst rel err {:.2e}", params.size(), worst));
}

// ---------------------------------------------------------------------------
// 6. Augmentation properties under randomized trials.

/// All-pairs hop counts by Floyd-Warshall on the undirected support; -1 when unreachable.
Mat<Index> hop_oracle(const Mat<double>& a) {
  const Index n = a.rows();
  constexpr Index far = 1 << 20;
  Mat<Index> d = Mat<Index>::Constant(n, n, far);
  for (Index i = 0; i < n; ++i) {
    d(i, i) = 0;
    for (Index j = 0; j < n; ++j) {
      if (i != j && (a(i, j) > 0.0 || a(j, i) > 0.0)) d(i, j) = 1;
    }
  }
  for (Index k = 0; k < n; ++k) {
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
    }
  }
  return d.unaryExpr([](Index h) { return h >= far ? Index{-1} : h; });
}

Outcome augmentation_suite() {
  using namespace graph_checks;
  std::mt19937_64 rng(606);
  Tally tally;
  long added = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const bool directed = trial % 2 == 0;
    const Index nodes = 4 + trial % 9, steps = 2 + trial % 11;
    const Sample s{random_window(2, steps, nodes, 2, rng), random_graph(nodes, rng, directed), directed};
    const std::string at = fmt::format("trial {}", trial);

    // Flip is an involution; warp keeps length and constants; slices stay in bounds.
    tally.check(flip_window(flip_window(s.window)).data() == s.window.data(), at + ": flip not an involution");
    std::uniform_int_distribution<Index> len(2, steps);
    const Index length = len(rng);
    const Sample warped = time_shifting(s, TimeShiftVariant::Warp, length, rng);
    tally.check(warped.window.layout() == s.window.layout(), at + ": warp changed the window length");
    Tensor4<double> constant(1, steps, nodes, 2);
    constant.data().setConstant(0.25 * trial - 7.0);
    const Sample flat = time_shifting(Sample{constant, s.adjacency, directed}, TimeShiftVariant::Warp, length, rng);
    tally.check((flat.window.data().array() - constant.data().array()).abs().maxCoeff() < 1e-12,
                at + ": warp changed a constant window");
    Tensor4<double> ramp(1, steps, nodes, 1);
    for (Index t = 0; t < steps; ++t) ramp.frame(0, t).setConstant(static_cast<double>(t));
    const Sample sliced = time_shifting(Sample{ramp, s.adjacency, directed}, TimeShiftVariant::Slice, length, rng);
    const Index start = static_cast<Index>(sliced.window(0, 0, 0, 0));
    tally.check(start >= 0 && start + length <= steps, at + ": slice out of bounds");
    for (Index t = 0; t < steps; ++t) {
      tally.check(sliced.window(0, t, nodes - 1, 0) == static_cast<double>(start + std::min(t, length - 1)),
                  at + ": slice not contiguous");
    }

    // Dropping nodes or edges never increases any adjacency entry.
    const Sample dn = drop_nodes(s, 0.3, rng);
    tally.check((dn.adjacency.array() <= s.adjacency.array()).all(), at + ": DN increased an edge");
    const Sample de = drop_edges(s, 0.4, default_edge_threshold(s.adjacency), rng);
    tally.check((de.adjacency.array() <= s.adjacency.array()).all(), at + ": DE increased an edge");

    // Added edges join pairs at least three hops apart, weighted by feature dot products.
    const Sample ae = add_edges(s, 0.25, 3, rng);
    const Mat<Index> hops = hop_oracle(s.adjacency);
    for (Index i = 0; i < nodes; ++i) {
      for (Index j = 0; j < nodes; ++j) {
        if (ae.adjacency(i, j) == s.adjacency(i, j)) continue;
        ++added;
        tally.check(hops(i, j) < 0 || hops(i, j) >= 3, at + ": AE joined close nodes");
        double dot = 0.0;
        for (Index c = 0; c < 2; ++c) {
          double fi = 0.0, fj = 0.0;
          for (Index b = 0; b < 2; ++b) {
            for (Index t = 0; t < steps; ++t) {
              fi += s.window(b, t, i, c);
              fj += s.window(b, t, j, c);
            }
          }
          dot += (fi / (2.0 * steps)) * (fj / (2.0 * steps));
        }
        tally.check(std::abs(ae.adjacency(i, j) - std::max(dot, 0.0)) < 1e-12, at + ": AE weight");
      }
    }
  }
  return tally.outcome(fmt::format("1000 randomized trials, {} added edges checked", added));
}

// ---------------------------------------------------------------------------
// 7. Mixup identities, hull bounds and the Beta draw.

Outcome mixup_properties() {
  using namespace replay_oracle;
  std::mt19937_64 rng(707);
  Tally tally;
  for (int trial = 0; trial < 200; ++trial) {
    const Batch current = random_batch(1 + trial % 6, rng, -5.0, 5.0);
    ReplayBuffer<double> buffer(8);
    buffer.insert(random_batch(1 + trial % 4, rng, -5.0, 5.0));
    const std::vector<ReplayItem<double>> sampled(buffer.items().begin(), buffer.items().end());
    const Batch keep = stmixup(current, sampled, 1.0);
    tally.check(keep.inputs.data() == current.inputs.data() && keep.targets.data() == current.targets.data(),
                "lambda 1 changed the batch");
    const Batch swap = stmixup(current, sampled, 0.0);
    const Batch drawn = stmixup(current, sampled, MixupConfig{0.5, 0}, rng);
    for (Index b = 0; b < current.size(); ++b) {
      const auto& item = sampled[static_cast<std::size_t>(b) % sampled.size()];
      tally.check(swap.inputs.sample(b) == item.input && swap.targets.sample(b) == item.target,
                  "lambda 0 did not return the replayed item");
      const auto in = drawn.inputs.sample(b).array(), out = drawn.targets.sample(b).array();
      tally.check((in >= current.inputs.sample(b).cwiseMin(item.input).array() - 1e-12).all() &&
                      (in <= current.inputs.sample(b).cwiseMax(item.input).array() + 1e-12).all(),
                  "mixed input outside the hull");
      tally.check((out >= current.targets.sample(b).cwiseMin(item.target).array() - 1e-12).all() &&
                      (out <= current.targets.sample(b).cwiseMax(item.target).array() + 1e-12).all(),
                  "mixed target outside the hull");
    }
  }
  std::string stats;
  for (double alpha : {0.5, 2.0}) {
    constexpr int draws = 10000;
    double sum = 0.0;
    for (int i = 0; i < draws; ++i) sum += draw_mixup_lambda(alpha, rng);
    const double mean = sum / draws;
    const double se = std::sqrt(1.0 / (4.0 * (2.0 * alpha + 1.0)) / draws);
    tally.check(std::abs(mean - 0.5) <= 3.0 * se, fmt::format("Beta({0},{0}) mean {1:.4f}", alpha, mean));
    stats += fmt::format(" alpha {} mean {:.4f} (3 SE {:.4f});", alpha, mean, 3.0 * se);
  }
  return tally.outcome("identities and hull over 200 batches;" + stats);
}

// ---------------------------------------------------------------------------
// 8. Buffer retention and checkpoint round-trip.

Outcome buffer_semantics(const fs::path& work) {
  using namespace replay_oracle;
  std::mt19937_64 rng(808);
  Tally tally;
  ReplayBuffer<double> buffer;
  tally.check(buffer.capacity() == 256, "default capacity is not 256");
  std::vector<double> inserted;
  std::uniform_int_distribution<Index> size(1, 32);
  while (inserted.size() < 1000) {
    const Batch b = random_batch(size(rng), rng);
    for (Index i = 0; i < b.size(); ++i) inserted.push_back(b.inputs(i, 0, 0, 0));
    buffer.insert(b);
  }
  tally.check(buffer.size() == 256, "buffer does not hold 256 items");
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    tally.check(buffer[i].input(0, 0) == inserted[inserted.size() - 256 + i], "retained item out of FIFO order");
  }
  const fs::path first = work / "buffer.buf", second = work / "buffer_again.buf";
  fs::create_directories(work);
  save_buffer(first, buffer);
  const ReplayBuffer<double> loaded = load_buffer<double>(first);
  tally.check(loaded == buffer, "restored buffer differs");
  save_buffer(second, loaded);
  tally.check(testing_support::read_text(first) == testing_support::read_text(second), "re-saved checkpoint bytes differ");
  return tally.outcome(fmt::format("{} inserts keep the newest 256; checkpoint bytes identical", inserted.size()));
}

// ---------------------------------------------------------------------------
// 9 and 10. Three strategies on the synthetic concept-drift stream.

/// Desk-scale stream settings shared by criteria 9 to 11. Every strategy gets the same config.
constexpr int kStreamSeeds = 3;
constexpr Index kStreamSlots = 2000;
const char* const kStreamConfig =
    "batch_size = 16\n"
    "epochs = 12\n"
    "patience = 5\n"
    "hidden_widths = 16, 16, 16, 16, 64\n"
    "decoder_hidden = 128\n"
    "projector_hidden = 64\n";
const std::vector<std::string> kStrategies{"urcl", "finetune", "one_fit_all"};

struct StreamRuns {
  fs::path root;
  double seconds = 0.0;
};

StreamRuns run_stream_benchmark(const fs::path& cli, const fs::path& work) {
  StreamRuns runs{work / "stream", 0.0};
  fs::remove_all(runs.root);
  write_file(runs.root / "config.txt", kStreamConfig);
  const fs::path log = runs.root / "runs.log";
  const auto start = std::chrono::steady_clock::now();
  for (int seed = 1; seed <= kStreamSeeds; ++seed) {
    const fs::path dir = runs.root / fmt::format("seed{}", seed);
    run_command(fmt::format("{} synth --out {} --nodes 10 --segments 5 --slots {} --seed {} >> {} 2>&1", quote(cli),
                            quote(dir / "data"), kStreamSlots, seed, quote(log)));
    for (const std::string& strategy : kStrategies) {
      run_command(fmt::format("{} run --data {} --config {} --strategy {} --out {} --seed {} >> {} 2>&1", quote(cli),
                              quote(dir / "data"), quote(runs.root / "config.txt"), strategy, quote(dir / strategy),
                              seed, quote(log)));
    }
  }
  runs.seconds = seconds_since(start);
  return runs;
}

Outcome table_direction(const StreamRuns& runs) {
  std::vector<std::vector<SummaryEntry>> summaries;
  for (const fs::path& p : find_summaries(runs.root)) summaries.push_back(read_summary_csv(p));
  const ComparisonTable table = aggregate_summaries(summaries);
  const double urcl = table.incremental_mae("urcl");
  const double finetune = table.incremental_mae("finetune");
  const double one_fit_all = table.incremental_mae("one_fit_all");
  const double best_baseline = std::min(finetune, one_fit_all);
  const bool ordered = urcl < finetune && urcl < one_fit_all && urcl <= 0.9 * best_baseline;
  const bool fast = runs.seconds < 15.0 * 60.0;
  std::string detail = fmt::format(
      "incremental MAE over {} seeds: urcl {:.3f}, finetune {:.3f}, one_fit_all {:.3f}; urcl/best baseline {:.3f} "
      "(needs <= 0.9); {:.0f} s",
      kStreamSeeds, urcl, finetune, one_fit_all, urcl / best_baseline, runs.seconds);
  if (!fast) detail += " (over the 15 min budget)";
  return {ordered && fast, detail};
}

/// First epoch whose training loss is within 110% of the segment's last epoch.
int epochs_to_converge(const SegmentReport& report) {
  const double final_loss = report.epochs.back().train.total;
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    if (report.epochs[e].train.total <= 1.1 * final_loss) return static_cast<int>(e) + 1;
  }
  return static_cast<int>(report.epochs.size());
}

Outcome convergence_shape(const StreamRuns& runs) {
  Tally tally;
  std::string detail;
  for (int seed = 1; seed <= kStreamSeeds; ++seed) {
    const CheckpointRecord record =
        load_record(runs.root / fmt::format("seed{}", seed) / "urcl" / "checkpoints" / "segment_4.json");
    const int base = epochs_to_converge(record.reports.front());
    std::vector<int> counts;
    for (std::size_t i = 1; i < record.reports.size(); ++i) {
      const int n = epochs_to_converge(record.reports[i]);
      counts.push_back(n);
      tally.check(n < base, fmt::format("seed {} {} needs {} epochs, base {}", seed, record.reports[i].role, n, base));
    }
    detail += fmt::format(" seed {}: base {}, incremental {};", seed, base, fmt::join(counts, "/"));
  }
  return tally.outcome("epochs to reach 110% of final training loss," + detail);
}

// ---------------------------------------------------------------------------
// 11. Metric identities.

Outcome metric_identities(const fs::path& work) {
  using A = Eigen::ArrayXd;
  Tally tally;
  const ErrorMetrics hand = compute_metrics(A{{1.0, 2.0}}, A{{0.0, 4.0}});
  tally.check(hand.mae == 1.5 && hand.rmse == std::sqrt(2.5), "MAE 1.5 / RMSE sqrt(2.5) case");
  const ErrorMetrics zero = compute_metrics(A{{3.0, -1.0, 0.5}}, A{{3.0, -1.0, 0.5}});
  tally.check(zero.mae == 0.0 && zero.rmse == 0.0, "perfect prediction case");
  const ErrorMetrics offset = compute_metrics(A{{1.25, 2.25, -0.75, 4.25}}, A{{1.0, 2.0, -1.0, 4.0}});
  tally.check(offset.mae == 0.25 && offset.rmse == 0.25, "constant offset case");
  std::size_t rows = 0;
  for (const fs::path& p : find_summaries(work)) {
    for (const SummaryEntry& e : read_summary_csv(p)) {
      ++rows;
      tally.check(e.rmse >= e.mae, fmt::format("{} {}: RMSE below MAE", p.string(), e.segment));
    }
  }
  tally.check(rows > 0, "no report rows found");
  return tally.outcome(fmt::format("hand cases exact; RMSE >= MAE on {} report rows", rows));
}

// ---------------------------------------------------------------------------
// 12. METR-LA-shaped smoke run through the command line tool.

/// 207 sensors scattered over a plane, each linked to its four nearest neighbours;
/// speeds with daily rush-hour dips, 5-minute slots and about 1% empty cells.
void write_sensor_dataset(const fs::path& dir) {
  constexpr Index nodes = 207, slots = 1000, per_day = 288;
  std::mt19937_64 rng(1207);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd position(nodes, 2);
  for (Index v = 0; v < nodes; ++v) position.row(v) << 20.0 * unit(rng), 20.0 * unit(rng);
  std::vector<Edge> edges;
  for (Index v = 0; v < nodes; ++v) {
    std::vector<std::pair<double, Index>> by_distance;
    for (Index u = 0; u < nodes; ++u) {
      if (u != v) by_distance.emplace_back((position.row(v) - position.row(u)).norm(), u);
    }
    std::partial_sort(by_distance.begin(), by_distance.begin() + 4, by_distance.end());
    for (int k = 0; k < 4; ++k) edges.push_back({v, by_distance[static_cast<std::size_t>(k)].second,
                                                 std::max(by_distance[static_cast<std::size_t>(k)].first, 0.05)});
  }
  const SensorNetwork network = build_adjacency(edges, nodes, true);

  ObservationSeries series;
  series.slots = slots;
  series.nodes = nodes;
  series.interval_minutes = 5.0;
  series.values.resize(slots * nodes, 2);
  series.missing.setConstant(slots * nodes, 2, false);
  Eigen::VectorXd free_flow(nodes), depth(nodes);
  for (Index v = 0; v < nodes; ++v) {
    free_flow(v) = 55.0 + 15.0 * unit(rng);
    depth(v) = 10.0 + 25.0 * unit(rng);
  }
  for (Index t = 0; t < slots; ++t) {
    const double hour = 24.0 * static_cast<double>(t % per_day) / per_day;
    const double rush = std::exp(-0.5 * std::pow((hour - 8.0) / 1.2, 2)) + std::exp(-0.5 * std::pow((hour - 17.5) / 1.5, 2));
    for (Index v = 0; v < nodes; ++v) {
      const Index r = series.row(t, v);
      series.values(r, 0) = std::clamp(free_flow(v) - depth(v) * rush + 2.0 * gauss(rng), 0.0, 80.0);
      series.values(r, 1) = static_cast<double>(t % per_day) / per_day;
      if (unit(rng) < 0.01) {
        series.values(r, 0) = 0.0;
        series.missing(r, 0) = true;
      }
    }
  }
  save_dataset(dir, network, series);
}

/// Paper layer depths with narrower widths so the run fits a single desk CPU.
const char* const kSensorConfig =
    "epochs = 2\n"
    "patience = 2\n"
    "hidden_widths = 16, 16, 16, 16, 64\n"
    "decoder_hidden = 128\n"
    "projector_hidden = 64\n";

Outcome sensor_smoke(const fs::path& cli, const fs::path& work) {
  const fs::path root = work / "sensor";
  fs::remove_all(root);
  write_sensor_dataset(root / "data");
  write_file(root / "config.txt", kSensorConfig);
  const auto start = std::chrono::steady_clock::now();
  run_command(fmt::format("{} run --data {} --config {} --strategy urcl --out {} > {} 2>&1", quote(cli),
                          quote(root / "data"), quote(root / "config.txt"), quote(root / "out"),
                          quote(root / "run.log")));
  const double seconds = seconds_since(start);

  Tally tally;
  const auto [network, series] = load_dataset(root / "data");
  tally.check(series.slots == 1000 && series.nodes == 207 && series.channels() == 2, "dataset shape");
  tally.check(!fs::exists(root / "out" / "diagnostic.txt"), "training reported a numerical diagnostic");
  const std::string summary = testing_support::read_text(root / "out" / "summary.csv");
  tally.check(summary.rfind("segment,strategy,MAE,RMSE,train_seconds,infer_seconds_per_window\n", 0) == 0,
              "summary header");
  const std::vector<SummaryEntry> rows = read_summary_csv(root / "out" / "summary.csv");
  tally.check(rows.size() == 5, "summary has five segment rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SummaryEntry& e = rows[i];
    tally.check(e.segment == (i == 0 ? std::string("base") : fmt::format("incremental_{}", i)), "segment order");
    tally.check(e.strategy == "urcl", "strategy column");
    tally.check(std::isfinite(e.mae) && std::isfinite(e.rmse) && e.mae > 0.0 && e.rmse >= e.mae,
                e.segment + ": metrics not finite and ordered");
  }
  const CheckpointRecord record = load_record(root / "out" / "checkpoints" / "segment_4.json");
  for (const SegmentReport& r : record.reports) tally.check(r.epochs.size() == 2, r.role + " did not train 2 epochs");
  tally.check(seconds < 600.0, "over the 10 min budget");
  return tally.outcome(fmt::format("1000 x 207 x 2 loaded, 5 segments x 2 epochs, {:.0f} s", seconds));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli_path, work_dir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--cli", cli_path, "Path to the urcl executable")->required();
  app.add_option("--work", work_dir, "Scratch directory for datasets and runs");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  logger().set_level(spdlog::level::warn);

  const fs::path cli = fs::absolute(cli_path), work = fs::absolute(work_dir);
  fs::create_directories(work);
  std::optional<StreamRuns> stream;
  const auto stream_runs = [&]() -> const StreamRuns& {
    if (!stream) stream = run_stream_benchmark(cli, work);
    return *stream;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"diffusion convolution matches the power-series oracle", diffusion_oracle},
      {"replay selection matches the exhaustive two-stage oracle", rmir_oracle_match},
      {"contrastive loss hand values", graphcl_hand_values},
      {"stop-gradient targets", stop_gradient},
      {"total-loss gradient check", gradient_check},
      {"augmentation suite", augmentation_suite},
      {"mixup properties", mixup_properties},
      {"buffer retention and checkpoint", [&] { return buffer_semantics(work / "buffer"); }},
      {"URCL beats both baselines on incremental segments", [&] { return table_direction(stream_runs()); }},
      {"incremental segments converge faster than base", [&] { return convergence_shape(stream_runs()); }},
      {"metric identities", [&] { return metric_identities(work); }},
      {"sensor-network smoke run", [&] { return sensor_smoke(cli, work); }},
  };
  const std::vector<double> budgets{10.0, 60.0, 0.0, 0.0, 120.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    const double seconds = seconds_since(start);
    if (budgets[i] > 0.0 && seconds >= budgets[i]) {
      outcome.pass = false;
      outcome.detail += fmt::format(" (over the {:.0f} s budget)", budgets[i]);
    }
    if (!outcome.pass) ++failed;
    std::cout << fmt::format("{} {:>2} {}: {} [{:.1f} s]", outcome.pass ? "PASS" : "FAIL", number,
                             criteria[i].first, outcome.detail, seconds)
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
