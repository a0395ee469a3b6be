#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nimbus/agent.hpp"
#include "nimbus/forecaster.hpp"

// Single-document JSON persistence for model parameters and feature
// scalers. Human-inspectable; floats are emitted with shortest round-trip
// formatting so a save/load cycle is bit-exact. Schema (tensor name set and
// shapes) is validated on load before anything is returned.

namespace nimbus::store {

struct StoreError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaMismatch : StoreError {
  using StoreError::StoreError;
};
struct ShapeMismatch : StoreError {
  using StoreError::StoreError;
};
struct UnsupportedVersion : StoreError {
  using StoreError::StoreError;
};
struct IoFailure : StoreError {
  using StoreError::StoreError;
};

inline constexpr int kFormatVersion = 1;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

struct ScalerRecord {
  std::vector<double> mean;
  std::vector<double> std;
};

struct ModelArchive {
  int format_version = kFormatVersion;
  std::string kind;  // "lstm" or "dqn"
  std::map<std::string, Tensor> tensors;
  std::optional<ScalerRecord> scaler;
  std::map<std::string, std::string> metadata;
};

namespace detail {

inline std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::vector<std::string> lstm_tensor_names() {
  std::vector<std::string> names;
  forecast::LstmParams tmp;
  forecast::for_each_tensor(tmp,
                            [&](const std::string& n, std::vector<double>&) {
                              names.push_back(n);
                            });
  return names;
}

inline std::vector<std::string> dqn_tensor_names() {
  std::vector<std::string> names;
  rl::DqnParams tmp;
  rl::for_each_dqn_tensor(tmp,
                          [&](const std::string& n, std::vector<double>&) {
                            names.push_back(n);
                          });
  return names;
}

inline void validate(const ModelArchive& a) {
  if (a.format_version != kFormatVersion)
    throw UnsupportedVersion("unsupported format_version " +
                             std::to_string(a.format_version));
  std::vector<std::string> expected;
  if (a.kind == "lstm")
    expected = lstm_tensor_names();
  else if (a.kind == "dqn")
    expected = dqn_tensor_names();
  else
    throw SchemaMismatch("unknown archive kind '" + a.kind + "'");
  for (const auto& name : expected)
    if (!a.tensors.count(name))
      throw SchemaMismatch("missing tensor '" + name + "'");
  for (const auto& [name, tensor] : a.tensors) {
    bool known = false;
    for (const auto& e : expected) known |= (e == name);
    if (!known) throw SchemaMismatch("unexpected tensor '" + name + "'");
    if (shape_product(tensor.shape) != tensor.data.size())
      throw ShapeMismatch("tensor '" + name + "': shape does not match data length");
  }
}

}  // namespace detail

inline void save(const ModelArchive& archive, const std::string& path) {
  detail::validate(archive);
  nlohmann::json doc;
  doc["format_version"] = archive.format_version;
  doc["kind"] = archive.kind;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, tensor] : archive.tensors) {
    tensors[name] = {{"shape", tensor.shape}, {"data", tensor.data}};
  }
  doc["tensors"] = tensors;
  if (archive.scaler)
    doc["scaler"] = {{"mean", archive.scaler->mean},
                     {"std", archive.scaler->std}};
  doc["metadata"] = archive.metadata;
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoFailure("write to '" + path + "' failed");
}

inline ModelArchive load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open '" + path + "' for reading");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoFailure("malformed document in '" + path + "': " + e.what());
  }
  ModelArchive a;
  try {
    a.format_version = doc.at("format_version").get<int>();
    a.kind = doc.at("kind").get<std::string>();
    for (const auto& [name, t] : doc.at("tensors").items()) {
      Tensor tensor;
      tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
      tensor.data = t.at("data").get<std::vector<double>>();
      a.tensors[name] = std::move(tensor);
    }
    if (doc.contains("scaler")) {
      ScalerRecord s;
      s.mean = doc.at("scaler").at("mean").get<std::vector<double>>();
      s.std = doc.at("scaler").at("std").get<std::vector<double>>();
      a.scaler = s;
    }
    if (doc.contains("metadata"))
      a.metadata =
          doc.at("metadata").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("bad archive structure: ") + e.what());
  }
  detail::validate(a);
  return a;
}

// ---- conversions between archives and live parameter structs ----

inline ModelArchive to_archive(const forecast::LstmParams& params,
                               const forecast::Scaler& scaler) {
  ModelArchive a;
  a.kind = "lstm";
  forecast::for_each_tensor(params, [&](const std::string& name,
                                        const std::vector<double>& v) {
    Tensor t;
    t.data = v;
    if (name.rfind("l1.W", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l1.hidden_size),
                 static_cast<std::size_t>(params.l1.input_size)};
    else if (name.rfind("l1.U", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l1.hidden_size),
                 static_cast<std::size_t>(params.l1.hidden_size)};
    else if (name.rfind("l1.b", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l1.hidden_size)};
    else if (name.rfind("l2.W", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l2.hidden_size),
                 static_cast<std::size_t>(params.l2.input_size)};
    else if (name.rfind("l2.U", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l2.hidden_size),
                 static_cast<std::size_t>(params.l2.hidden_size)};
    else if (name.rfind("l2.b", 0) == 0)
      t.shape = {static_cast<std::size_t>(params.l2.hidden_size)};
    else if (name == "head.W")
      t.shape = {v.size()};
    else  // head.b
      t.shape = {1};
    a.tensors[name] = std::move(t);
  });
  a.scaler = ScalerRecord{{scaler.mean.begin(), scaler.mean.end()},
                          {scaler.std.begin(), scaler.std.end()}};
  return a;
}

inline std::pair<forecast::LstmParams, forecast::Scaler> lstm_from_archive(
    const ModelArchive& a) {
  if (a.kind != "lstm") throw SchemaMismatch("archive kind is not lstm");
  detail::validate(a);
  int h1 = static_cast<int>(a.tensors.at("l1.b_i").data.size());
  int h2 = static_cast<int>(a.tensors.at("l2.b_i").data.size());
  forecast::LstmParams params(h1, h2);
  forecast::for_each_tensor(
      params, [&](const std::string& name, std::vector<double>& v) {
        const auto& t = a.tensors.at(name);
        if (t.data.size() != v.size())
          throw ShapeMismatch("tensor '" + name + "' has wrong element count");
        v = t.data;
      });
  if (!a.scaler || a.scaler->mean.size() != forecast::kFeatures ||
      a.scaler->std.size() != forecast::kFeatures)
    throw SchemaMismatch("lstm archive requires a 2-feature scaler");
  forecast::Scaler scaler;
  for (int f = 0; f < forecast::kFeatures; ++f) {
    scaler.mean[f] = a.scaler->mean[f];
    scaler.std[f] = a.scaler->std[f];
  }
  return {params, scaler};
}

inline ModelArchive to_archive(const rl::DqnParams& params) {
  ModelArchive a;
  a.kind = "dqn";
  std::size_t H = static_cast<std::size_t>(params.hidden);
  rl::for_each_dqn_tensor(params, [&](const std::string& name,
                                      const std::vector<double>& v) {
    Tensor t;
    t.data = v;
    if (name == "trunk.W1")
      t.shape = {H, rl::kStateDim};
    else if (name == "trunk.W2")
      t.shape = {H, H};
    else if (name == "value.W")
      t.shape = {1, H};
    else if (name == "adv.W")
      t.shape = {rl::kNumActions, H};
    else
      t.shape = {v.size()};
    a.tensors[name] = std::move(t);
  });
  a.metadata["replica_norm"] = std::to_string(params.replica_norm);
  return a;
}

inline rl::DqnParams dqn_from_archive(const ModelArchive& a) {
  if (a.kind != "dqn") throw SchemaMismatch("archive kind is not dqn");
  detail::validate(a);
  int hidden = static_cast<int>(a.tensors.at("trunk.b1").data.size());
  rl::DqnParams params(hidden);
  rl::for_each_dqn_tensor(
      params, [&](const std::string& name, std::vector<double>& v) {
        const auto& t = a.tensors.at(name);
        if (t.data.size() != v.size())
          throw ShapeMismatch("tensor '" + name + "' has wrong element count");
        v = t.data;
      });
  auto it = a.metadata.find("replica_norm");
  if (it != a.metadata.end()) params.replica_norm = std::stod(it->second);
  return params;
}

}  // namespace nimbus::store
