#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace urcl {

struct SummaryEntry {
  std::string segment;
  std::string strategy;
  double mae = 0.0;
  double rmse = 0.0;
  double train_seconds = 0.0;
  double infer_seconds_per_window = 0.0;
};

std::vector<SummaryEntry> read_summary_csv(const std::filesystem::path& path);

/// Per strategy and segment, metrics averaged over every run that reported them.
struct ComparisonTable {
  struct Cell {
    double mae = 0.0;
    double rmse = 0.0;
    int runs = 0;
  };
  std::vector<std::string> segments;
  std::vector<std::string> strategies;
  std::map<std::pair<std::string, std::string>, Cell> cells;

  const Cell* find(const std::string& strategy, const std::string& segment) const;
  /// Mean MAE over the incremental segments (every segment except "base").
  double incremental_mae(const std::string& strategy) const;
};

ComparisonTable aggregate_summaries(const std::vector<std::vector<SummaryEntry>>& runs);

/// Every summary.csv at or below `root`, in sorted path order.
std::vector<std::filesystem::path> find_summaries(const std::filesystem::path& root);

/// Strategies as rows, segments as MAE/RMSE column pairs.
std::string format_table(const ComparisonTable& table);

/// Aggregates every summary under `root`, writes `root/report.csv` and returns the table text.
std::string write_report(const std::filesystem::path& root);

}  // namespace urcl
