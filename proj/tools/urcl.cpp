#include <CLI11.hpp>
#include <iostream>

#include "urcl/config.hpp"
#include "urcl/harness.hpp"
#include "urcl/log.hpp"
#include "urcl/report.hpp"
#include "urcl/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Continual spatio-temporal forecasting on streaming sensor data"};
  app.require_subcommand(1);

  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error or off");

  auto* run = app.add_subcommand("run", "Train and evaluate over a stream");
  std::string data_dir, config_path, strategy, out_dir, resume;
  std::uint64_t seed = 0;
  run->add_option("--data", data_dir, "Dataset directory")->required();
  run->add_option("--config", config_path, "Experiment config file")->required();
  run->add_option("--strategy", strategy, "urcl, one_fit_all or finetune")
      ->required()
      ->check(CLI::IsMember({"urcl", "one_fit_all", "finetune"}));
  run->add_option("--out", out_dir, "Output directory")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Overrides the config seed");
  run->add_option("--resume", resume, "Checkpoint record (segment_K.json) to continue from");

  auto* synth = app.add_subcommand("synth", "Write a synthetic concept-drift dataset");
  urcl::SyntheticOptions synth_options;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Dataset directory")->required();
  synth->add_option("--nodes", synth_options.nodes, "Sensors on the ring")->required();
  synth->add_option("--segments", synth_options.segments, "Regimes: base plus incremental")->required();
  synth->add_option("--slots", synth_options.slots, "Time slots")->required();
  synth->add_option("--seed", synth_options.seed, "Generator seed")->required();
  synth->add_option("--noise", synth_options.noise, "Innovation noise standard deviation");
  synth->add_option("--base-fraction", synth_options.base_fraction, "Share of slots in the base regime");

  auto* report = app.add_subcommand("report", "Aggregate summary.csv files into a comparison table");
  std::string report_dir;
  report->add_option("--out", report_dir, "Directory searched for summary.csv files")->required();

  CLI11_PARSE(app, argc, argv);
  urcl::logger().set_level(spdlog::level::from_str(level));

  try {
    if (*run) {
      urcl::ExperimentConfig config = urcl::load_config(config_path);
      config.dataset = data_dir;
      config.strategy = urcl::parse_strategy(strategy);
      if (*seed_opt) config.seed = seed;
      urcl::RunOptions options;
      options.out_dir = out_dir;
      if (!resume.empty()) options.resume = resume;
      urcl::run_stream_experiment(config, options);
    } else if (*synth) {
      const auto [network, series] = urcl::generate_synthetic(synth_options);
      urcl::save_dataset(synth_out, network, series);
    } else if (*report) {
      std::cout << urcl::write_report(report_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "urcl: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
