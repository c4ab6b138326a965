#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "urcl/errors.hpp"
#include "urcl/stmodel.hpp"

namespace urcl {

inline constexpr char kModelMagic[] = "URCL-CKPT-v1";

/// 64-bit FNV-1a digest, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

/// Named parameter arrays as stored on disk.
template <typename Scalar>
struct ModelSnapshot {
  std::string config_hash;
  std::map<std::string, Mat<Scalar>> arrays;
};

/// Text header (magic, config hash, scalar width, count), then per parameter a
/// `name rows cols` line followed by the raw row-major values.
template <typename Scalar>
void save_model(const std::filesystem::path& path, const STModel<Scalar>& model, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  const auto params = model.named_parameters();
  out << kModelMagic << '\n'
      << "config_hash " << config_hash << '\n'
      << "scalar_bytes " << sizeof(Scalar) << '\n'
      << "parameters " << params.size() << '\n';
  for (const auto& [name, var] : params) {
    const Mat<Scalar>& m = var.value();
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
    out << '\n';
  }
  if (!out) throw IngestError("failed writing " + path.string());
}

template <typename Scalar>
ModelSnapshot<Scalar> read_model_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  const auto fail = [&path](const std::string& why) { return SchemaError(path.string() + ": " + why); };
  std::string line;
  std::getline(in, line);
  if (line != kModelMagic) throw fail("not a model checkpoint");

  const auto header = [&](const std::string& key) {
    if (!std::getline(in, line)) throw fail("truncated header");
    std::istringstream fields(line);
    std::string got, value;
    fields >> got >> value;
    if (got != key || value.empty()) throw fail("expected '" + key + "' in header");
    return value;
  };
  ModelSnapshot<Scalar> snap;
  snap.config_hash = header("config_hash");
  if (std::stoul(header("scalar_bytes")) != sizeof(Scalar)) throw fail("scalar width mismatch");
  const std::size_t count = std::stoul(header("parameters"));
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw fail("truncated parameter list");
    std::istringstream fields(line);
    std::string name;
    Index rows = -1, cols = -1;
    if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) throw fail("bad parameter header '" + line + "'");
    Mat<Scalar> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Scalar)));
    if (!in || in.get() != '\n') throw fail("truncated values for " + name);
    if (!snap.arrays.emplace(name, std::move(m)).second) throw fail("duplicate parameter " + name);
  }
  return snap;
}

/// Overwrites the model's parameters from a checkpoint. Names and shapes must match
/// exactly; a non-empty `expected_hash` must equal the stored config hash.
template <typename Scalar>
void load_model(const std::filesystem::path& path, STModel<Scalar>& model, const std::string& expected_hash = {}) {
  ModelSnapshot<Scalar> snap = read_model_snapshot<Scalar>(path);
  if (!expected_hash.empty() && snap.config_hash != expected_hash) {
    throw ConfigError(path.string() + ": config hash " + snap.config_hash + " does not match " + expected_hash);
  }
  auto params = model.named_parameters();
  if (params.size() != snap.arrays.size()) throw SchemaError(path.string() + ": parameter count differs from model");
  for (auto& [name, var] : params) {
    const auto it = snap.arrays.find(name);
    if (it == snap.arrays.end()) throw SchemaError(path.string() + ": missing parameter " + name);
    if (it->second.rows() != var.rows() || it->second.cols() != var.cols()) {
      throw SchemaError(path.string() + ": shape mismatch for " + name);
    }
    var.mutable_value() = it->second;
  }
}

}  // namespace urcl
