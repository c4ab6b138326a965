#include "urcl/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "urcl/checkpoint.hpp"

namespace urcl {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Urcl: return "urcl";
    case Strategy::OneFitAll: return "one_fit_all";
    case Strategy::Finetune: return "finetune";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "urcl") return Strategy::Urcl;
  if (name == "one_fit_all") return Strategy::OneFitAll;
  if (name == "finetune") return Strategy::Finetune;
  throw ConfigError("unknown strategy '" + name + "' (expected urcl, one_fit_all or finetune)");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

std::vector<Index> parse_list(const std::string& key, const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<Index>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string format_list(const std::vector<Index>& values) { return fmt::format("{}", fmt::join(values, ",")); }

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename T>
Field number_field(const char* key, T ExperimentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return fmt::format("{}", c.*member); },
          [key, member](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(key, v); }};
}

template <typename T>
Field augment_field(const char* key, T AugmentConfig::*member) {
  return {key, [member](const ExperimentConfig& c) { return fmt::format("{}", c.augment.*member); },
          [key, member](ExperimentConfig& c, const std::string& v) { c.augment.*member = parse_number<T>(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      {"dataset", [](const ExperimentConfig& c) { return c.dataset; },
       [](ExperimentConfig& c, const std::string& v) { c.dataset = v; }},
      number_field("input_steps", &ExperimentConfig::input_steps),
      number_field("output_steps", &ExperimentConfig::output_steps),
      number_field("batch_size", &ExperimentConfig::batch_size),
      number_field("eval_batch_size", &ExperimentConfig::eval_batch_size),
      number_field("epochs", &ExperimentConfig::epochs),
      number_field("patience", &ExperimentConfig::patience),
      number_field("learning_rate", &ExperimentConfig::learning_rate),
      {"optimizer", [](const ExperimentConfig& c) { return c.optimizer; },
       [](ExperimentConfig& c, const std::string& v) { c.optimizer = v; }},
      number_field("grad_clip", &ExperimentConfig::grad_clip),
      number_field("buffer_capacity", &ExperimentConfig::buffer_capacity),
      number_field("mixup_alpha", &ExperimentConfig::mixup_alpha),
      number_field("temperature", &ExperimentConfig::temperature),
      number_field("ssl_weight", &ExperimentConfig::ssl_weight),
      number_field("rmir_pool", &ExperimentConfig::rmir_pool),
      number_field("rmir_sample", &ExperimentConfig::rmir_sample),
      augment_field("drop_node_ratio", &AugmentConfig::drop_node_ratio),
      augment_field("drop_edge_ratio", &AugmentConfig::drop_edge_ratio),
      augment_field("drop_edge_threshold", &AugmentConfig::drop_edge_threshold),
      augment_field("add_edge_ratio", &AugmentConfig::add_edge_ratio),
      augment_field("add_edge_min_hops", &AugmentConfig::add_edge_min_hops),
      augment_field("subgraph_coverage", &AugmentConfig::subgraph_coverage),
      augment_field("slice_length", &AugmentConfig::slice_length),
      {"hidden_widths", [](const ExperimentConfig& c) { return format_list(c.hidden_widths); },
       [](ExperimentConfig& c, const std::string& v) { c.hidden_widths = parse_list("hidden_widths", v); }},
      {"dilations", [](const ExperimentConfig& c) { return format_list(c.dilations); },
       [](ExperimentConfig& c, const std::string& v) { c.dilations = parse_list("dilations", v); }},
      number_field("diffusion_steps", &ExperimentConfig::diffusion_steps),
      number_field("embedding_dim", &ExperimentConfig::embedding_dim),
      number_field("decoder_hidden", &ExperimentConfig::decoder_hidden),
      number_field("projector_hidden", &ExperimentConfig::projector_hidden),
      number_field("base_fraction", &ExperimentConfig::base_fraction),
      number_field("incremental_segments", &ExperimentConfig::incremental_segments),
      number_field("seed", &ExperimentConfig::seed),
      {"strategy", [](const ExperimentConfig& c) { return to_string(c.strategy); },
       [](ExperimentConfig& c, const std::string& v) { c.strategy = parse_strategy(v); }},
  };
  return table;
}

}  // namespace

ModelConfig ExperimentConfig::model_config(Index nodes, Index channels, bool directed) const {
  ModelConfig m;
  m.nodes = nodes;
  m.input_channels = channels;
  m.input_steps = input_steps;
  m.output_steps = output_steps;
  m.output_channels = 1;
  m.hidden_widths = hidden_widths;
  m.dilations = dilations;
  m.diffusion_steps = diffusion_steps;
  m.embedding_dim = embedding_dim;
  m.decoder_hidden = decoder_hidden;
  m.projector_hidden = projector_hidden;
  m.directed = directed;
  return m;
}

void ExperimentConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(input_steps >= 2 && output_steps >= 1, "input_steps must be >= 2 and output_steps >= 1");
  require(batch_size >= 1 && eval_batch_size >= 1, "batch sizes must be positive");
  require(epochs >= 1 && patience >= 1, "epochs and patience must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(optimizer == "adam" || optimizer == "sgd", "optimizer must be adam or sgd");
  require(grad_clip >= 0.0, "grad_clip must be non-negative (0 disables clipping)");
  require(mixup_alpha > 0.0, "mixup_alpha must be positive");
  require(temperature > 0.0, "temperature must be positive");
  require(ssl_weight >= 0.0, "ssl_weight must be non-negative");
  require(sample_size() <= pool_size(), "rmir_sample must not exceed rmir_pool");
  require(augment.drop_node_ratio >= 0.0 && augment.drop_node_ratio < 1.0, "drop_node_ratio must be in [0, 1)");
  require(augment.drop_edge_ratio >= 0.0 && augment.drop_edge_ratio < 1.0, "drop_edge_ratio must be in [0, 1)");
  require(augment.add_edge_ratio >= 0.0 && augment.add_edge_ratio < 1.0, "add_edge_ratio must be in [0, 1)");
  require(augment.add_edge_min_hops >= 2, "add_edge_min_hops must be >= 2");
  require(augment.subgraph_coverage > 0.0 && augment.subgraph_coverage <= 1.0, "subgraph_coverage must be in (0, 1]");
  require(augment.slice_length == 0 || (augment.slice_length >= 2 && augment.slice_length <= input_steps),
          "slice_length must be 0 or in [2, input_steps]");
  require(base_fraction > 0.0 && base_fraction < 1.0, "base_fraction must be in (0, 1)");
  require(incremental_segments >= 1, "incremental_segments must be positive");
  model_config(1, 1, true).validate();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&key](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError(fmt::format("config line {}: unknown key '{}'", line_no, key));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
    it->set(config, value);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += fmt::format("{} = {}\n", f.key, f.get(config));
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(serialize_config(config)); }

}  // namespace urcl
