#pragma once

#include <vector>

#include "tuap/data.hpp"
#include "tuap/nn.hpp"

namespace fixture {

using tuap::Tensor;
using tuap::nn::Classifier;
using tuap::nn::LayerSpec;

/// flatten -> dense(d -> k) with zero weights and a bias that puts `favored`
/// ahead of every other class by `margin`. Every input classifies to `favored`.
inline Classifier biased(const tuap::Shape& input_shape, std::size_t k, std::size_t favored, double margin) {
  const auto d = tuap::shape_size(input_shape);
  Tensor w({k, d});
  Tensor b({k});
  b[favored] = margin;
  return Classifier({LayerSpec::flatten(), LayerSpec::dense(d, k)}, input_shape, k, {w, b});
}

/// Small synthetic problem plus an MLP trained on its input split.
struct SmallProblem {
  tuap::data::Split split;
  Classifier model;
};

inline SmallProblem small_problem(std::size_t classes = 4, std::size_t per_class = 40, std::size_t side = 6,
                                  std::size_t epochs = 1, double lr = 0.01, std::uint64_t seed = 3) {
  auto pool = tuap::data::synth_dataset(classes, per_class, {side, side, 1}, 0.05, seed);
  auto split = tuap::data::split_balanced(pool, {per_class * 7 / 10, seed});
  auto model = tuap::nn::mlp_preset({side, side, 1}, classes, seed, 16);
  model = tuap::nn::train(model, split.input.images, split.input.labels, {epochs, lr, 16, seed});
  return {std::move(split), std::move(model)};
}

}  // namespace fixture
