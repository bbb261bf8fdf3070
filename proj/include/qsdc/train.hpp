#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "qsdc/network.hpp"

namespace qsdc {

struct TrainOptions {
  std::size_t epochs = 4;
  std::size_t batch_size = 16;
  float learning_rate = 0.02f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::uint64_t seed = 1;
};

// Called after each epoch with (epoch, mean training loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Minibatch SGD with momentum on softmax cross-entropy. Only meant to fit
/// the small built-in classifier; it is not used on the monitored path.
void train_sgd(Network& net, const Tensor4& images, std::span<const int> labels,
               const TrainOptions& options, const EpochCallback& on_epoch = {});

// Fraction of samples whose top-1 prediction equals the label.
[[nodiscard]] double accuracy(const Network& net, const Tensor4& images, std::span<const int> labels,
                              std::size_t batch_size = 64);

}  // namespace qsdc
