#pragma once

#include <string_view>

#include "tuap/nn/classifier.hpp"

namespace tuap::nn {

// flatten / dense(H*W*C -> 128) / relu / dense(128 -> K)
inline Classifier mlp_preset(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed,
                             std::size_t hidden = 128) {
  const auto in = shape_size(input_shape);
  return Classifier::initialized(
      {LayerSpec::flatten(), LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, num_classes)},
      input_shape, num_classes, seed);
}

// conv(C->16, 3x3, same) / relu / pool 2 / conv(16->32, 3x3, same) / relu / pool 2 / flatten / dense(-> K)
inline Classifier cnn_preset(const Shape& input_shape, std::size_t num_classes, std::uint64_t seed) {
  if (input_shape.size() != 3) throw shape_error("cnn preset needs an HxWxC input shape");
  if (input_shape[0] < 4 || input_shape[1] < 4) throw shape_error("cnn preset needs at least 4x4 images");
  const auto flat = (input_shape[0] / 2 / 2) * (input_shape[1] / 2 / 2) * 32;
  return Classifier::initialized({LayerSpec::conv2d(input_shape[2], 16, 3, 1, 1), LayerSpec::relu(),
                                  LayerSpec::maxpool2d(2, 2), LayerSpec::conv2d(16, 32, 3, 1, 1), LayerSpec::relu(),
                                  LayerSpec::maxpool2d(2, 2), LayerSpec::flatten(),
                                  LayerSpec::dense(flat, num_classes)},
                                 input_shape, num_classes, seed);
}

inline Classifier make_preset(std::string_view name, const Shape& input_shape, std::size_t num_classes,
                              std::uint64_t seed) {
  if (name == "mlp") return mlp_preset(input_shape, num_classes, seed);
  if (name == "cnn") return cnn_preset(input_shape, num_classes, seed);
  throw domain_error("unknown architecture preset '" + std::string(name) + "' (expected mlp or cnn)");
}

}  // namespace tuap::nn
