#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "spikekour/graph.hpp"

namespace spikekour::num {

// Checkpoints are a JSON manifest (<prefix>.json) naming parameters, shapes
// and byte offsets, plus a flat little-endian f32 blob (<prefix>.bin).
// Round-trips are bit-exact.
inline void save_checkpoint(const ParamStore& store, const std::string& prefix) {
  std::string blob_name = std::filesystem::path(prefix + ".bin").filename().string();
  nlohmann::json manifest;
  manifest["format"] = "spikekour-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "f32";
  manifest["byte_order"] = "little";
  manifest["blob"] = blob_name;
  nlohmann::json params = nlohmann::json::array();

  std::ofstream blob(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw IoError("cannot write " + prefix + ".bin");
  uint64_t offset = 0;
  for (const auto& [name, t] : store.params()) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["offset_bytes"] = offset;
    e["count"] = t.numel();
    params.push_back(e);
    for (float v : t.data) binio::put_f32(blob, v);
    offset += static_cast<uint64_t>(t.numel()) * 4;
  }
  manifest["params"] = params;
  manifest["total_bytes"] = offset;
  blob.close();
  if (!blob) throw IoError("write failed for " + prefix + ".bin");

  std::ofstream mf(prefix + ".json", std::ios::trunc);
  if (!mf) throw IoError("cannot write " + prefix + ".json");
  mf << manifest.dump(2) << "\n";
}

inline ParamStore load_checkpoint(const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw IoError("cannot open checkpoint manifest " + prefix + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw CheckpointMismatch("bad checkpoint manifest " + prefix + ".json: " + e.what());
  }
  if (manifest.value("format", "") != "spikekour-checkpoint" ||
      manifest.value("dtype", "") != "f32")
    throw CheckpointMismatch("unrecognized checkpoint manifest " + prefix + ".json");

  std::string blob_path =
      (std::filesystem::path(prefix + ".json").parent_path() /
       manifest.at("blob").get<std::string>())
          .string();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw IoError("cannot open checkpoint blob " + blob_path);

  ParamStore store;
  for (const auto& e : manifest.at("params")) {
    std::string name = e.at("name").get<std::string>();
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    uint64_t offset = e.at("offset_bytes").get<uint64_t>();
    int64_t count = e.at("count").get<int64_t>();
    if (Tensor::count(shape) != count)
      throw CheckpointMismatch("manifest entry " + name + ": count does not match shape");
    Tensor t(shape);
    blob.seekg(static_cast<std::streamoff>(offset));
    std::vector<unsigned char> raw(static_cast<std::size_t>(count) * 4);
    if (!binio::get_bytes(blob, raw.data(), raw.size()))
      throw CheckpointMismatch("checkpoint blob truncated at parameter " + name);
    for (int64_t i = 0; i < count; ++i)
      t.data[static_cast<std::size_t>(i)] = binio::decode_f32(&raw[static_cast<std::size_t>(i) * 4]);
    store.create(name, std::move(t));
  }
  return store;
}

// Human-readable difference between a checkpoint's parameter list and what a
// network expects; used by the CLI for its mismatch diagnostics.
inline std::string manifest_diff(const ParamStore& expected, const ParamStore& loaded) {
  std::string out;
  for (const auto& [name, t] : expected.params()) {
    if (!loaded.has(name))
      out += "missing: " + name + " " + t.shape_str() + "\n";
    else if (loaded.get(name).shape != t.shape)
      out += "shape mismatch: " + name + " expected " + t.shape_str() + " got " +
             loaded.get(name).shape_str() + "\n";
  }
  for (const auto& [name, t] : loaded.params())
    if (!expected.has(name)) out += "unexpected: " + name + " " + t.shape_str() + "\n";
  return out;
}

}  // namespace spikekour::num
