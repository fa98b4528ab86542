// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hybridnet/layers.hpp"

namespace hybridnet {

/// Ordered compute layers run back to back. Shape errors raised inside a
/// layer are rethrown with the layer's position.
template <typename T>
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(std::vector<std::unique_ptr<Layer<T>>> layers) : layers_(std::move(layers)) {}

  void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<T> forward(Tensor<T> x, const StepContext& ctx);
  Tensor<T> backward(Tensor<T> grad);

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  void zero_grad();
  /// w <- w - lr * grad, then clears the gradients.
  void sgd_step(T lr);

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// Single-worker sequential CNN: the unpartitioned model every parallel
/// execution is checked against.
template <typename T>
class Network {
 public:
  /// Builds the leaves of `root` for per-example inputs of `input_shape`.
  /// Throws ShapeError (with layer index) if consecutive layers do not chain
  /// and ValueError if the network contains MODULO or SHARD.
  Network(const LayerSpec& root, Shape input_shape, std::uint64_t seed, T learning_rate = T(0.01));

  /// Log-probabilities of shape (B, classes) for a (B, input...) batch.
  Tensor<T> fprop(const Tensor<T>& batch, const StepContext& ctx = {});

  /// Mean negative log-likelihood of the last fprop output; accumulates every
  /// parameter gradient.
  T bprop(std::span<const std::size_t> targets);

  void sgd_step(T lr);
  void sgd_step() { sgd_step(learning_rate_); }
  void zero_grad() { stack_.zero_grad(); }

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }
  std::size_t size() const { return stack_.size(); }
  Layer<T>& layer(std::size_t i) { return stack_[i]; }
  const Layer<T>& layer(std::size_t i) const { return stack_[i]; }
  std::vector<Parameter<T>*> parameters() { return stack_.parameters(); }
  std::vector<const Parameter<T>*> parameters() const { return stack_.parameters(); }

  std::uint64_t seed() const { return seed_; }
  std::size_t step() const { return step_; }
  T learning_rate() const { return learning_rate_; }
  void set_learning_rate(T lr) { learning_rate_ = lr; }

 private:
  LayerStack<T> stack_;
  Shape input_shape_;
  Shape output_shape_;
  std::uint64_t seed_;
  T learning_rate_;
  std::size_t step_ = 0;
  std::optional<Tensor<T>> output_;
};

/// Fraction of examples whose argmax log-probability equals the label.
template <typename T>
double accuracy(const Tensor<T>& log_probs, std::span<const std::size_t> targets);

}  // namespace hybridnet
