#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tuap/nn/layers.hpp"
#include "tuap/random.hpp"
#include "tuap/tensor.hpp"

namespace tuap::nn {

/// Rounds every element to the nearest float32 value.
inline void round_to_float32(Tensor& t) {
  for (auto& v : t) v = static_cast<double>(static_cast<float>(v));
}

/// Feed-forward image classifier: an ordered layer stack plus its parameters.
///
/// Weights are always float32-representable (computation is double), so a
/// model file round-trips without changing a single logit bit.
/// Immutable after construction; share freely across threads.
class Classifier {
 public:
  Classifier(std::vector<LayerSpec> layers, Shape input_shape, std::size_t num_classes,
             std::vector<Tensor> weights, std::uint64_t seed = 0)
      : layers_(std::move(layers)),
        input_shape_(std::move(input_shape)),
        num_classes_(num_classes),
        weights_(std::move(weights)),
        seed_(seed) {
    validate();
    for (auto& w : weights_) round_to_float32(w);
  }

  /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights and zero biases.
  static Classifier initialized(std::vector<LayerSpec> layers, Shape input_shape, std::size_t num_classes,
                                std::uint64_t seed) {
    auto rng = make_rng(seed, {stream::weight_init});
    std::vector<Tensor> weights;
    for (const auto& l : layers) {
      auto shapes = param_shapes(l);
      if (shapes.empty()) continue;
      auto [fan_in, fan_out] = fans(l);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor w(shapes[0]);
      for (auto& v : w) v = u(rng);
      weights.push_back(std::move(w));
      weights.emplace_back(shapes[1]);
    }
    return Classifier(std::move(layers), std::move(input_shape), num_classes, std::move(weights), seed);
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<Tensor>& weights() const noexcept { return weights_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Index into weights() of layer i's weight tensor (bias follows it), or npos.
  std::size_t param_index(std::size_t layer) const { return param_index_[layer]; }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Same architecture with replacement weights (shapes must match).
  Classifier with_weights(std::vector<Tensor> weights) const {
    return Classifier(layers_, input_shape_, num_classes_, std::move(weights), seed_);
  }

 private:
  void validate() {
    if (num_classes_ == 0) throw domain_error("classifier needs at least one class");
    if (layers_.empty()) throw domain_error("classifier needs at least one layer");
    Shape s = input_shape_;
    for (auto d : s)
      if (d == 0) throw shape_error("input shape has a zero dimension");
    std::size_t wi = 0;
    param_index_.clear();
    for (const auto& l : layers_) {
      s = output_shape(l, s);
      auto shapes = param_shapes(l);
      param_index_.push_back(shapes.empty() ? npos : wi);
      for (const auto& ps : shapes) {
        if (wi >= weights_.size()) throw shape_error("too few weight tensors for the layer stack");
        if (weights_[wi].shape() != ps)
          throw shape_error("weight " + std::to_string(wi) + " has shape " + shape_string(weights_[wi].shape()) +
                            ", layer expects " + shape_string(ps));
        ++wi;
      }
    }
    if (wi != weights_.size()) throw shape_error("more weight tensors than the layer stack uses");
    if (s != Shape{num_classes_})
      throw shape_error("network output " + shape_string(s) + " does not match " + std::to_string(num_classes_) +
                        " classes");
  }

  std::vector<LayerSpec> layers_;
  Shape input_shape_;
  std::size_t num_classes_;
  std::vector<Tensor> weights_;
  std::uint64_t seed_;
  std::vector<std::size_t> param_index_;
};

/// Activations of a forward pass: acts[0] is the input, acts[i + 1] the output of layer i.
struct ForwardTrace {
  std::vector<Tensor> acts;
  const Tensor& logits() const { return acts.back(); }
};

inline void require_input_shape(const Classifier& c, const Tensor& x) {
  if (x.shape() != c.input_shape())
    throw shape_error("input " + shape_string(x.shape()) + " does not match classifier input " +
                      shape_string(c.input_shape()));
}

inline ForwardTrace forward(const Classifier& c, const Tensor& x) {
  require_input_shape(c, x);
  ForwardTrace trace;
  trace.acts.reserve(c.layers().size() + 1);
  trace.acts.push_back(x);
  for (std::size_t i = 0; i < c.layers().size(); ++i) {
    const auto& l = c.layers()[i];
    const Tensor& in = trace.acts.back();
    const auto pi = c.param_index(i);
    switch (l.kind) {
      case LayerKind::dense:
        trace.acts.push_back(detail::dense_forward(in, c.weights()[pi], c.weights()[pi + 1]));
        break;
      case LayerKind::conv2d:
        trace.acts.push_back(detail::conv2d_forward(l, in, c.weights()[pi], c.weights()[pi + 1]));
        break;
      case LayerKind::relu:
        trace.acts.push_back(detail::relu_forward(in));
        break;
      case LayerKind::flatten:
        trace.acts.push_back(in.reshaped({in.size()}));
        break;
      case LayerKind::maxpool2d:
        trace.acts.push_back(detail::maxpool_forward(l, in));
        break;
    }
  }
  return trace;
}

/// Backpropagates d(loss)/d(logits) through a recorded trace. Returns d(loss)/d(input).
/// When `weight_grads` is given (shaped like c.weights()), parameter gradients are added into it.
inline Tensor backward(const Classifier& c, const ForwardTrace& trace, Tensor dlogits,
                       std::vector<Tensor>* weight_grads = nullptr) {
  Tensor g = std::move(dlogits);
  for (std::size_t i = c.layers().size(); i-- > 0;) {
    const auto& l = c.layers()[i];
    const Tensor& in = trace.acts[i];
    const auto pi = c.param_index(i);
    Tensor* dw = weight_grads && pi != Classifier::npos ? &(*weight_grads)[pi] : nullptr;
    Tensor* db = weight_grads && pi != Classifier::npos ? &(*weight_grads)[pi + 1] : nullptr;
    switch (l.kind) {
      case LayerKind::dense:
        g = detail::dense_backward(in, c.weights()[pi], g, dw, db);
        break;
      case LayerKind::conv2d:
        g = detail::conv2d_backward(l, in, c.weights()[pi], g, dw, db);
        break;
      case LayerKind::relu:
        g = detail::relu_backward(in, std::move(g));
        break;
      case LayerKind::flatten:
        g = g.reshaped(in.shape());
        break;
      case LayerKind::maxpool2d:
        g = detail::maxpool_backward(l, in, g);
        break;
    }
  }
  return g;
}

inline Tensor logits(const Classifier& c, const Tensor& x) { return forward(c, x).logits(); }

/// Predicted class: argmax of the logits, lowest index on ties.
inline std::size_t classify(const Classifier& c, const Tensor& x) { return argmax(logits(c, x)); }

struct SoftmaxCrossEntropy {
  double loss;
  Tensor dlogits;  // softmax(z) - onehot(y)
};

inline SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& z, std::size_t y) {
  if (y >= z.size())
    throw domain_error("class " + std::to_string(y) + " out of range for " + std::to_string(z.size()) + " classes");
  const double m = z[argmax(z)];
  double sum = 0;
  for (auto v : z) sum += std::exp(v - m);
  const double log_sum = std::log(sum);
  Tensor d(z.shape());
  for (std::size_t k = 0; k < z.size(); ++k) d[k] = std::exp(z[k] - m - log_sum);
  d[y] -= 1.0;
  // log-sum-exp minus the target logit; clamp tiny negative rounding.
  return {std::max(0.0, log_sum + m - z[y]), std::move(d)};
}

struct LossGradient {
  double value;
  Tensor grad_input;
};

/// Softmax cross-entropy toward class y and its exact gradient with respect to the input pixels.
inline LossGradient loss_and_input_grad(const Classifier& c, const Tensor& x, std::size_t y) {
  if (y >= c.num_classes())
    throw domain_error("target class " + std::to_string(y) + " out of range for " +
                       std::to_string(c.num_classes()) + " classes");
  auto trace = forward(c, x);
  auto sce = softmax_cross_entropy(trace.logits(), y);
  return {sce.loss, backward(c, trace, std::move(sce.dlogits))};
}

/// Piecewise-linear region fingerprint of x: relu on/off bits and maxpool winners.
/// Two inputs with the same pattern lie in the same linear piece of the network.
inline std::vector<std::size_t> activation_pattern(const Classifier& c, const Tensor& x) {
  auto trace = forward(c, x);
  std::vector<std::size_t> pattern;
  for (std::size_t i = 0; i < c.layers().size(); ++i) {
    const auto& l = c.layers()[i];
    const Tensor& in = trace.acts[i];
    if (l.kind == LayerKind::relu) {
      for (auto v : in) pattern.push_back(v > 0);
    } else if (l.kind == LayerKind::maxpool2d) {
      auto idx = detail::maxpool_argmax(l, in);
      pattern.insert(pattern.end(), idx.begin(), idx.end());
    }
  }
  return pattern;
}

}  // namespace tuap::nn
