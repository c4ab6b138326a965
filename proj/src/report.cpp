#include "urcl/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "urcl/errors.hpp"

namespace urcl {

std::vector<SummaryEntry> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "segment,strategy,MAE,RMSE,train_seconds,infer_seconds_per_window") {
    throw SchemaError(path.string() + ": unexpected summary header");
  }
  std::vector<SummaryEntry> out;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    SummaryEntry e;
    if (!(fields >> e.segment >> e.strategy >> e.mae >> e.rmse >> e.train_seconds >> e.infer_seconds_per_window)) {
      throw ParseError(path.string() + ": malformed summary row", row, 0);
    }
    out.push_back(e);
  }
  return out;
}

const ComparisonTable::Cell* ComparisonTable::find(const std::string& strategy, const std::string& segment) const {
  const auto it = cells.find({strategy, segment});
  return it == cells.end() ? nullptr : &it->second;
}

double ComparisonTable::incremental_mae(const std::string& strategy) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& segment : segments) {
    if (segment == "base") continue;
    if (const Cell* c = find(strategy, segment)) {
      sum += c->mae;
      ++count;
    }
  }
  if (count == 0) throw ContractError("no incremental segments reported for " + strategy);
  return sum / count;
}

ComparisonTable aggregate_summaries(const std::vector<std::vector<SummaryEntry>>& runs) {
  ComparisonTable table;
  for (const auto& run : runs) {
    for (const SummaryEntry& e : run) {
      if (std::find(table.segments.begin(), table.segments.end(), e.segment) == table.segments.end()) {
        table.segments.push_back(e.segment);
      }
      if (std::find(table.strategies.begin(), table.strategies.end(), e.strategy) == table.strategies.end()) {
        table.strategies.push_back(e.strategy);
      }
      auto& cell = table.cells[{e.strategy, e.segment}];
      cell.mae += e.mae;
      cell.rmse += e.rmse;
      ++cell.runs;
    }
  }
  for (auto& [key, cell] : table.cells) {
    cell.mae /= cell.runs;
    cell.rmse /= cell.runs;
  }
  return table;
}

std::vector<std::filesystem::path> find_summaries(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IngestError(root.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.csv") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string format_table(const ComparisonTable& table) {
  std::string out = fmt::format("{:<12}", "strategy");
  for (const auto& s : table.segments) out += fmt::format(" | {:>15} {:>9}", s + " MAE", "RMSE");
  out += fmt::format(" | {:>9}\n", "inc. MAE");
  for (const auto& strategy : table.strategies) {
    out += fmt::format("{:<12}", strategy);
    for (const auto& s : table.segments) {
      if (const auto* c = table.find(strategy, s)) {
        out += fmt::format(" | {:>15.4f} {:>9.4f}", c->mae, c->rmse);
      } else {
        out += fmt::format(" | {:>15} {:>9}", "-", "-");
      }
    }
    out += fmt::format(" | {:>9.4f}\n", table.incremental_mae(strategy));
  }
  return out;
}

std::string write_report(const std::filesystem::path& root) {
  std::vector<std::vector<SummaryEntry>> runs;
  for (const auto& path : find_summaries(root)) runs.push_back(read_summary_csv(path));
  if (runs.empty()) throw IngestError("no summary.csv found under " + root.string());
  const ComparisonTable table = aggregate_summaries(runs);

  std::ofstream out(root / "report.csv");
  if (!out) throw IngestError("cannot write " + (root / "report.csv").string());
  out << "strategy,segment,MAE,RMSE,runs\n";
  for (const auto& strategy : table.strategies) {
    for (const auto& s : table.segments) {
      if (const auto* c = table.find(strategy, s)) {
        out << fmt::format("{},{},{},{},{}\n", strategy, s, c->mae, c->rmse, c->runs);
      }
    }
  }
  return format_table(table);
}

}  // namespace urcl
