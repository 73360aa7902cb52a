#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "awb/crc32.hpp"
#include "awb/error.hpp"
#include "awb/nn.hpp"

namespace awb::io {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

using json = nlohmann::ordered_json;

inline constexpr char kMagic[4] = {'A', 'W', 'B', '1'};
inline constexpr uint32_t kVersion = 1;

struct NamedBuffer {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// Writes the AWB1 container: magic, u32 version, u64 header length, UTF-8
/// JSON header (meta plus a generated param_manifest of name/shape/offset),
/// raw little-endian f64 payload in manifest order, trailing CRC32 of the
/// payload.
inline void write_container(const std::filesystem::path& path, json meta,
                            const std::vector<NamedBuffer>& buffers) {
  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& b : buffers) {
    manifest.push_back({{"name", b.name}, {"shape", b.shape},
                        {"byte_offset", offset}});
    offset += b.data.size() * sizeof(double);
  }
  meta["param_manifest"] = std::move(manifest);
  std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(kMagic, 4);
  uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  uint64_t header_len = header.size();
  out.write(reinterpret_cast<const char*>(&header_len), 8);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  uint32_t crc = 0;
  for (const auto& b : buffers) {
    const char* bytes = reinterpret_cast<const char*>(b.data.data());
    size_t len = b.data.size() * sizeof(double);
    out.write(bytes, static_cast<std::streamsize>(len));
    crc = crc32_update(crc, bytes, len);
  }
  out.write(reinterpret_cast<const char*>(&crc), 4);
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

struct Container {
  json header;
  std::vector<NamedBuffer> buffers;
};

inline Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 16)
    throw Error(ErrorKind::BadMagic, path.string() + " is too short");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::BadMagic,
                path.string() + " does not start with AWB1");
  uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kVersion)
    throw Error(ErrorKind::UnsupportedVersion,
                path.string() + " has format version " +
                    std::to_string(version));
  uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (16 + header_len > bytes.size())
    throw Error(ErrorKind::IoError, path.string() + ": truncated header");

  Container c;
  try {
    c.header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::DecodeError,
                path.string() + ": corrupt header: " + e.what());
  }
  if (!c.header.contains("param_manifest"))
    throw Error(ErrorKind::DecodeError,
                path.string() + ": header lacks param_manifest");

  size_t payload_start = 16 + header_len;
  uint64_t payload_len = 0;
  for (const auto& entry : c.header["param_manifest"]) {
    Shape shape = entry["shape"].get<Shape>();
    payload_len += static_cast<uint64_t>(shape_numel(shape)) * sizeof(double);
  }
  if (payload_start + payload_len + 4 > bytes.size())
    throw Error(ErrorKind::ChecksumMismatch,
                path.string() + ": truncated payload");
  uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + payload_start + payload_len, 4);
  uint32_t actual_crc =
      crc32(bytes.data() + payload_start, static_cast<size_t>(payload_len));
  if (stored_crc != actual_crc)
    throw Error(ErrorKind::ChecksumMismatch,
                path.string() + ": payload CRC mismatch");

  for (const auto& entry : c.header["param_manifest"]) {
    NamedBuffer b;
    b.name = entry["name"].get<std::string>();
    b.shape = entry["shape"].get<Shape>();
    uint64_t off = entry["byte_offset"].get<uint64_t>();
    size_t count = static_cast<size_t>(shape_numel(b.shape));
    if (payload_start + off + count * sizeof(double) >
        payload_start + payload_len)
      throw Error(ErrorKind::DecodeError,
                  path.string() + ": manifest offset out of range");
    b.data.resize(count);
    std::memcpy(b.data.data(), bytes.data() + payload_start + off,
                count * sizeof(double));
    c.buffers.push_back(std::move(b));
  }
  return c;
}

// ---------------------------------------------------------------------------
// ModelSpec <-> JSON

inline json spec_to_json(const nn::ModelSpec& spec) {
  json layers = json::array();
  for (const auto& layer : spec.layers) {
    if (auto* c = std::get_if<nn::Conv>(&layer))
      layers.push_back({{"type", "conv"}, {"filters", c->filters},
                        {"kernel", c->kernel}, {"stride", c->stride},
                        {"padding", c->padding}});
    else if (auto* p = std::get_if<nn::MaxPool>(&layer))
      layers.push_back({{"type", "maxpool"}, {"kernel", p->kernel},
                        {"stride", p->stride}});
    else if (std::get_if<nn::Flatten>(&layer))
      layers.push_back({{"type", "flatten"}});
    else if (auto* d = std::get_if<nn::Dense>(&layer))
      layers.push_back({{"type", "dense"}, {"units", d->units}});
    else if (auto* a = std::get_if<nn::Activation>(&layer))
      layers.push_back({{"type", "activation"}, {"kind", nn::act_name(a->kind)}});
  }
  return {{"input", {spec.in_channels, spec.in_height, spec.in_width}},
          {"layers", std::move(layers)},
          {"num_classes", spec.num_classes}};
}

inline nn::ModelSpec spec_from_json(const json& j) {
  nn::ModelSpec spec;
  spec.in_channels = j.at("input").at(0).get<int64_t>();
  spec.in_height = j.at("input").at(1).get<int64_t>();
  spec.in_width = j.at("input").at(2).get<int64_t>();
  spec.num_classes = j.at("num_classes").get<int64_t>();
  for (const auto& l : j.at("layers")) {
    std::string type = l.at("type").get<std::string>();
    if (type == "conv")
      spec.layers.push_back(nn::Conv{l.at("filters").get<int64_t>(),
                                     l.at("kernel").get<int64_t>(),
                                     l.at("stride").get<int64_t>(),
                                     l.at("padding").get<int64_t>()});
    else if (type == "maxpool")
      spec.layers.push_back(nn::MaxPool{l.at("kernel").get<int64_t>(),
                                        l.at("stride").get<int64_t>()});
    else if (type == "flatten")
      spec.layers.push_back(nn::Flatten{});
    else if (type == "dense")
      spec.layers.push_back(nn::Dense{l.at("units").get<int64_t>()});
    else if (type == "activation")
      spec.layers.push_back(nn::Activation{
          l.at("kind").get<std::string>() == "relu" ? nn::ActKind::Relu
                                                    : nn::ActKind::Sigmoid});
    else
      throw Error(ErrorKind::DecodeError, "unknown layer type '" + type + "'");
  }
  return spec;
}

}  // namespace awb::io

namespace awb::nn {

inline void save_checkpoint(const Model& model,
                            const std::filesystem::path& path) {
  io::json meta;
  meta["spec"] = io::spec_to_json(model.spec);
  meta["class_names"] = model.class_names;
  if (model.norm_stats)
    meta["norm_stats"] = {{"mean", model.norm_stats->mean},
                          {"std", model.norm_stats->std}};
  else
    meta["norm_stats"] = nullptr;
  std::vector<io::NamedBuffer> buffers;
  buffers.reserve(model.params.size());
  for (const auto& p : model.params)
    buffers.push_back({p.name, p.tensor.shape(),
                       {p.tensor.values().begin(), p.tensor.values().end()}});
  io::write_container(path, std::move(meta), buffers);
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  io::Container c = io::read_container(path);
  Model model;
  try {
    model.spec = io::spec_from_json(c.header.at("spec"));
    model.class_names =
        c.header.at("class_names").get<std::vector<std::string>>();
    if (!c.header.at("norm_stats").is_null()) {
      data::NormStats stats;
      stats.mean = c.header["norm_stats"].at("mean").get<std::vector<double>>();
      stats.std = c.header["norm_stats"].at("std").get<std::vector<double>>();
      model.norm_stats = std::move(stats);
    }
  } catch (const io::json::exception& e) {
    throw Error(ErrorKind::DecodeError,
                path.string() + ": malformed model header: " + e.what());
  }
  // Parameters must be exactly those implied by the spec.
  Model fresh = build_model(model.spec, 0);
  if (fresh.params.size() != c.buffers.size())
    throw Error(ErrorKind::DecodeError,
                path.string() + ": parameter count does not match spec");
  for (size_t i = 0; i < c.buffers.size(); ++i) {
    if (c.buffers[i].name != fresh.params[i].name ||
        c.buffers[i].shape != fresh.params[i].tensor.shape())
      throw Error(ErrorKind::DecodeError,
                  path.string() + ": parameter " + c.buffers[i].name +
                      " does not match spec layout");
    model.params.push_back(
        {c.buffers[i].name,
         Tensor(c.buffers[i].shape, std::move(c.buffers[i].data), true)});
  }
  return model;
}

}  // namespace awb::nn
