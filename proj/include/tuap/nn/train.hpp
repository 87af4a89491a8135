#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "tuap/nn/classifier.hpp"

namespace tuap::nn {

struct TrainOptions {
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch;
  double mean_loss;
  double accuracy;  // on the training data, measured during the pass
};

/// Plain mini-batch SGD on softmax cross-entropy.
///
/// Batches are drawn from a per-epoch shuffle seeded by opts.seed. Gradients
/// are summed in sample order, so the result is bit-reproducible.
inline Classifier train(const Classifier& init, std::span<const Tensor> images, std::span<const std::size_t> labels,
                        const TrainOptions& opts, const std::function<void(const EpochStats&)>& on_epoch = {}) {
  if (images.empty()) throw domain_error("cannot train on an empty dataset");
  if (images.size() != labels.size()) throw domain_error("image and label counts differ");
  if (opts.batch_size == 0) throw domain_error("batch size must be positive");
  if (!(opts.learning_rate > 0)) throw domain_error("learning rate must be positive");
  for (auto y : labels)
    if (y >= init.num_classes()) throw domain_error("label " + std::to_string(y) + " out of range");

  std::vector<Tensor> weights = init.weights();
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    auto rng = make_rng(opts.seed, {stream::batch_order, epoch});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const auto stop = std::min(order.size(), start + opts.batch_size);
      // Gradients are taken at the weights as of the batch start.
      Classifier current = init.with_weights(weights);
      std::vector<Tensor> grads;
      for (const auto& w : weights) grads.emplace_back(w.shape());
      for (std::size_t j = start; j < stop; ++j) {
        const auto i = order[j];
        auto trace = forward(current, images[i]);
        if (argmax(trace.logits()) == labels[i]) ++correct;
        auto sce = softmax_cross_entropy(trace.logits(), labels[i]);
        loss_sum += sce.loss;
        backward(current, trace, std::move(sce.dlogits), &grads);
      }
      const double step = opts.learning_rate / static_cast<double>(stop - start);
      for (std::size_t w = 0; w < weights.size(); ++w) {
        weights[w] = axpy(-step, grads[w], weights[w]);
        round_to_float32(weights[w]);
      }
    }
    if (on_epoch)
      on_epoch({epoch, loss_sum / static_cast<double>(order.size()),
                static_cast<double>(correct) / static_cast<double>(order.size())});
  }
  return init.with_weights(std::move(weights));
}

/// Fraction of (image, label) pairs the classifier gets right.
inline double accuracy(const Classifier& c, std::span<const Tensor> images, std::span<const std::size_t> labels) {
  if (images.empty()) throw domain_error("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < images.size(); ++i) hits += classify(c, images[i]) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace tuap::nn
