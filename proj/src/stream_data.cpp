#include "urcl/stream_data.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace urcl {
namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view cell, long row, long column) {
  cell = trim(cell);
  T value{};
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", row, column);
  }
  return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return in;
}

struct Meta {
  Index node_count = 0;
  Index channels = 0;
  double interval_minutes = 0.0;
  bool directed = true;
};

Meta read_meta(const std::filesystem::path& path) {
  auto in = open_input(path);
  nlohmann::json j;
  try {
    in >> j;
    Meta meta{j.at("node_count").get<Index>(), j.at("channels").get<Index>(),
              j.at("interval_minutes").get<double>(), j.at("directed").get<bool>()};
    if (meta.node_count < 1 || meta.channels < 1 || !(meta.interval_minutes > 0.0)) {
      throw SchemaError("meta.json: node_count, channels and interval_minutes must be positive");
    }
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("meta.json: ") + e.what());
  }
}

std::vector<Edge> read_edges(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "src,dst,distance") {
    throw SchemaError("graph.csv: header must be 'src,dst,distance'");
  }
  std::vector<Edge> edges;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw ParseError("graph.csv: expected 3 cells", row, static_cast<long>(cells.size()));
    edges.push_back({parse_number<Index>(cells[0], row, 1), parse_number<Index>(cells[1], row, 2),
                     parse_number<double>(cells[2], row, 3)});
  }
  return edges;
}

}  // namespace

SensorNetwork build_adjacency(const std::vector<Edge>& edges, Index node_count, bool directed) {
  if (node_count < 1) throw SchemaError("node count must be positive");
  SensorNetwork net{node_count, Mat<double>::Zero(node_count, node_count), directed};
  for (const Edge& e : edges) {
    if (e.src < 0 || e.src >= node_count || e.dst < 0 || e.dst >= node_count) {
      throw SchemaError("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") references a node outside [0, " +
                        std::to_string(node_count) + ")");
    }
    if (e.src == e.dst) throw SchemaError("self-loop edge on node " + std::to_string(e.src));
    if (!(e.distance > 0.0) || !std::isfinite(e.distance)) {
      throw DomainError("edge distance must be positive and finite, got " + std::to_string(e.distance));
    }
    net.adjacency(e.src, e.dst) = 1.0 / e.distance;
    if (!directed) net.adjacency(e.dst, e.src) = 1.0 / e.distance;
  }
  return net;
}

std::pair<SensorNetwork, ObservationSeries> load_dataset(const std::filesystem::path& root) {
  for (const char* name : {"meta.json", "graph.csv", "observations.csv"}) {
    if (!std::filesystem::exists(root / name)) throw IngestError("missing " + (root / name).string());
  }
  const Meta meta = read_meta(root / "meta.json");
  SensorNetwork network = build_adjacency(read_edges(root / "graph.csv"), meta.node_count, meta.directed);

  auto in = open_input(root / "observations.csv");
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("observations.csv: empty file");
  const auto header = split_csv_line(line);
  if (header.empty() || trim(header[0]) != "t") throw SchemaError("observations.csv: first column must be 't'");

  // Header names n{v}_c{c}, node-major and channel-minor.
  Index nodes = 0, channels = 0;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string_view name = trim(header[i]);
    const auto sep = name.find("_c");
    if (name.size() < 4 || name[0] != 'n' || sep == std::string_view::npos) {
      throw SchemaError("observations.csv: bad column name '" + std::string(name) + "'");
    }
    const Index v = parse_number<Index>(name.substr(1, sep - 1), 1, static_cast<long>(i + 1));
    const Index c = parse_number<Index>(name.substr(sep + 2), 1, static_cast<long>(i + 1));
    nodes = std::max(nodes, v + 1);
    channels = std::max(channels, c + 1);
  }
  if (nodes * channels != static_cast<Index>(header.size()) - 1) {
    throw SchemaError("observations.csv: header is not a full node x channel grid");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    const Index v = static_cast<Index>(i - 1) / channels, c = static_cast<Index>(i - 1) % channels;
    if (trim(header[i]) != "n" + std::to_string(v) + "_c" + std::to_string(c)) {
      throw SchemaError("observations.csv: column " + std::to_string(i + 1) + " should be n" + std::to_string(v) +
                        "_c" + std::to_string(c));
    }
  }
  if (nodes != meta.node_count) {
    throw SchemaError("observations.csv has " + std::to_string(nodes) + " nodes but meta.json declares " +
                      std::to_string(meta.node_count));
  }
  if (channels != meta.channels) {
    throw SchemaError("observations.csv has " + std::to_string(channels) + " channels but meta.json declares " +
                      std::to_string(meta.channels));
  }

  std::vector<double> values;
  std::vector<bool> missing;
  long first_slot = 0;
  Index slots = 0;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError("observations.csv: expected " + std::to_string(header.size()) + " cells, got " +
                           std::to_string(cells.size()),
                       row, static_cast<long>(cells.size()));
    }
    const long t = parse_number<long>(cells[0], row, 1);
    if (slots == 0) {
      first_slot = t;
    } else if (t != first_slot + slots) {
      throw SchemaError("observations.csv: time column is not contiguous at row " + std::to_string(row));
    }
    for (std::size_t i = 1; i < cells.size(); ++i) {
      if (trim(cells[i]).empty()) {
        values.push_back(0.0);
        missing.push_back(true);
      } else {
        values.push_back(parse_number<double>(cells[i], row, static_cast<long>(i + 1)));
        missing.push_back(false);
      }
    }
    ++slots;
  }
  if (slots == 0) throw SchemaError("observations.csv: no data rows");

  ObservationSeries series;
  series.slots = slots;
  series.nodes = nodes;
  series.values = Eigen::Map<Mat<double>>(values.data(), slots * nodes, channels);
  series.missing.resize(slots * nodes, channels);
  for (Index i = 0; i < series.missing.size(); ++i) series.missing(i / channels, i % channels) = missing[i];
  series.interval_minutes = meta.interval_minutes;
  series.start_slot_index = first_slot;
  return {std::move(network), std::move(series)};
}

void save_dataset(const std::filesystem::path& root, const SensorNetwork& network, const ObservationSeries& series) {
  std::filesystem::create_directories(root);
  {
    nlohmann::json meta{{"node_count", network.node_count},
                        {"channels", series.channels()},
                        {"interval_minutes", series.interval_minutes},
                        {"directed", network.directed}};
    std::ofstream out(root / "meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    std::ofstream out(root / "graph.csv");
    out << "src,dst,distance\n";
    out.precision(std::numeric_limits<double>::max_digits10);
    for (Index i = 0; i < network.node_count; ++i) {
      for (Index j = 0; j < network.node_count; ++j) {
        const double w = network.adjacency(i, j);
        if (w <= 0.0) continue;
        if (!network.directed && j < i) continue;
        out << i << ',' << j << ',' << 1.0 / w << '\n';
      }
    }
  }
  std::ofstream out(root / "observations.csv");
  out.precision(std::numeric_limits<double>::max_digits10);
  out << 't';
  for (Index v = 0; v < series.nodes; ++v) {
    for (Index c = 0; c < series.channels(); ++c) out << ",n" << v << "_c" << c;
  }
  out << '\n';
  const bool has_mask = series.missing.size() == series.values.size();
  for (Index t = 0; t < series.slots; ++t) {
    out << series.start_slot_index + t;
    for (Index v = 0; v < series.nodes; ++v) {
      for (Index c = 0; c < series.channels(); ++c) {
        out << ',';
        if (has_mask && series.missing(series.row(t, v), c)) continue;
        out << series(t, v, c);
      }
    }
    out << '\n';
  }
}

std::pair<ObservationSeries, NormalizationStats> min_max_normalize(const ObservationSeries& series,
                                                                   const std::optional<NormalizationStats>& stats,
                                                                   std::optional<SlotRange> fit_range) {
  const Index channels = series.channels();
  const bool has_mask = series.missing.size() == series.values.size();
  NormalizationStats fitted;
  if (stats) {
    if (stats->min.size() != channels || stats->max.size() != channels) {
      throw ContractError("min_max_normalize: stats channel count mismatch");
    }
    fitted = *stats;
  } else {
    const SlotRange range = fit_range.value_or(SlotRange{0, series.slots});
    if (range.begin < 0 || range.end > series.slots || range.length() <= 0) {
      throw ContractError("min_max_normalize: fit range outside series");
    }
    fitted.min = Eigen::VectorXd::Constant(channels, std::numeric_limits<double>::infinity());
    fitted.max = Eigen::VectorXd::Constant(channels, -std::numeric_limits<double>::infinity());
    for (Index r = range.begin * series.nodes; r < range.end * series.nodes; ++r) {
      for (Index c = 0; c < channels; ++c) {
        if (has_mask && series.missing(r, c)) continue;
        fitted.min(c) = std::min(fitted.min(c), series.values(r, c));
        fitted.max(c) = std::max(fitted.max(c), series.values(r, c));
      }
    }
    for (Index c = 0; c < channels; ++c) {
      if (!std::isfinite(fitted.min(c))) fitted.min(c) = fitted.max(c) = 0.0;
    }
  }

  ObservationSeries out = series;
  for (Index c = 0; c < channels; ++c) {
    const double span = fitted.range(c);
    auto col = out.values.col(c);
    if (span > 0.0) {
      col = (col.array() - fitted.min(c)) / span;
    } else {
      col.setZero();
    }
    if (has_mask) {
      for (Index r = 0; r < col.size(); ++r) {
        if (series.missing(r, c)) col(r) = 0.0;
      }
    }
  }
  return {std::move(out), std::move(fitted)};
}

std::vector<StreamSegment> split_stream(Index total_slots, double base_fraction, int incremental, Index input_steps,
                                        Index output_steps) {
  if (!(base_fraction > 0.0 && base_fraction < 1.0)) throw ConfigError("base_fraction must lie in (0, 1)");
  if (incremental < 1) throw ConfigError("at least one incremental segment is required");
  if (input_steps < 1 || output_steps < 1) throw ConfigError("input and output steps must be >= 1");

  const Index base = static_cast<Index>(std::floor(base_fraction * static_cast<double>(total_slots) + 1e-9));
  const Index part = (total_slots - base) / incremental;
  std::vector<SlotRange> spans{{0, base}};
  for (int k = 0; k < incremental; ++k) {
    const Index begin = base + k * part;
    spans.push_back({begin, k + 1 == incremental ? total_slots : begin + part});
  }

  const Index window = input_steps + output_steps;
  std::vector<StreamSegment> segments;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const SlotRange span = spans[i];
    const Index len = span.length();
    const Index train = len * 7 / 10;
    const Index val = len / 10;
    StreamSegment seg;
    seg.index = static_cast<int>(i);
    seg.span = span;
    seg.train = {span.begin, span.begin + train};
    seg.val = {seg.train.end, seg.train.end + val};
    seg.test = {seg.val.end, span.end};
    for (const SlotRange& r : {seg.train, seg.val, seg.test}) {
      if (r.length() < window) {
        throw ConfigError("segment " + seg.role() + " is too short: a split of " + std::to_string(r.length()) +
                          " slots cannot hold one window of " + std::to_string(window));
      }
    }
    segments.push_back(seg);
  }
  return segments;
}

}  // namespace urcl
