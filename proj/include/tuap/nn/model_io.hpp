#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tuap/binary_io.hpp"
#include "tuap/nn/classifier.hpp"

// UAPM model file:
//   "UAPM"                magic
//   u32                   format version
//   u32 + bytes           UTF-8 JSON metadata (layers, input shape, classes, seed, weight shapes)
//   f32 * n               weight blobs in layer order (W then b per layer), little-endian

namespace tuap::nn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline nlohmann::json model_metadata(const Classifier& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : c.layers()) {
    nlohmann::json j{{"kind", std::string(to_string(l.kind))}};
    switch (l.kind) {
      case LayerKind::dense:
        j["in"] = l.in;
        j["out"] = l.out;
        break;
      case LayerKind::conv2d:
        j["in"] = l.in;
        j["out"] = l.out;
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["padding"] = l.padding;
        break;
      case LayerKind::maxpool2d:
        j["window"] = l.kernel;
        j["stride"] = l.stride;
        break;
      default:
        break;
    }
    layers.push_back(std::move(j));
  }
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto& w : c.weights()) shapes.push_back(w.shape());
  return {{"input_shape", c.input_shape()},
          {"num_classes", c.num_classes()},
          {"seed", c.seed()},
          {"layers", std::move(layers)},
          {"weight_shapes", std::move(shapes)}};
}

inline io::Bytes serialize_model(const Classifier& c) {
  io::ByteWriter w;
  w.magic("UAPM");
  w.u32(kModelFormatVersion);
  w.str(model_metadata(c).dump());
  for (const auto& t : c.weights()) w.f32_array(t.values());
  return w.take();
}

inline Classifier deserialize_model(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "model file");
  r.expect_magic("UAPM");
  const auto version_at = r.offset();
  const auto version = r.u32();
  if (version != kModelFormatVersion)
    throw unsupported_version_error("model file", version, kModelFormatVersion, version_at);

  const auto meta_at = r.offset();
  nlohmann::json meta;
  std::vector<LayerSpec> layers;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::uint64_t seed = 0;
  std::vector<Shape> weight_shapes;
  try {
    meta = nlohmann::json::parse(r.str());
    input_shape = meta.at("input_shape").get<Shape>();
    num_classes = meta.at("num_classes").get<std::size_t>();
    seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& j : meta.at("layers")) {
      LayerSpec l;
      l.kind = parse_layer_kind(j.at("kind").get<std::string>());
      if (l.kind == LayerKind::dense) {
        l = LayerSpec::dense(j.at("in"), j.at("out"));
      } else if (l.kind == LayerKind::conv2d) {
        l = LayerSpec::conv2d(j.at("in"), j.at("out"), j.at("kernel"), j.at("stride"), j.at("padding"));
      } else if (l.kind == LayerKind::maxpool2d) {
        l = LayerSpec::maxpool2d(j.at("window"), j.at("stride"));
      }
      layers.push_back(l);
    }
    weight_shapes = meta.at("weight_shapes").get<std::vector<Shape>>();
  } catch (const format_error&) {
    throw;
  } catch (const std::exception& e) {
    throw format_error(std::string("model file: bad metadata: ") + e.what(), meta_at);
  }

  std::vector<Tensor> weights;
  for (const auto& s : weight_shapes) {
    const auto n = shape_size(s);
    weights.emplace_back(s, r.f32_array(n));
  }
  r.expect_end();
  try {
    return Classifier(std::move(layers), std::move(input_shape), num_classes, std::move(weights), seed);
  } catch (const std::invalid_argument& e) {
    throw format_error(std::string("model file: inconsistent architecture: ") + e.what(), meta_at);
  } catch (const std::domain_error& e) {
    throw format_error(std::string("model file: inconsistent architecture: ") + e.what(), meta_at);
  }
}

inline void save_model(const Classifier& c, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_model(c));
}

inline Classifier load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace tuap::nn
