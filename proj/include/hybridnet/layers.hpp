// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hybridnet/layer_spec.hpp"
#include "hybridnet/tensor.hpp"

namespace hybridnet {

/// Per-call execution context. Dropout masks are a pure function of
/// (seed, worker, step, layer origin, iteration).
struct StepContext {
  bool training = true;
  bool dropout = true;
  std::uint64_t seed = 0;
  std::size_t worker = 0;
  std::size_t step = 0;
  std::size_t iteration = 0;
};

template <typename T>
struct Parameter {
  Tensor<T> value;
  /// Always shaped like value; accumulated by backward, cleared by the optimizer.
  Tensor<T> grad;
};

/// One executable leaf layer. Forward caches what backward needs; backward
/// consumes the cache, so each forward pairs with exactly one backward.
template <typename T>
class Layer {
 public:
  Layer(LayerSpec spec, std::size_t origin) : spec_(std::move(spec)), origin_(origin) {}
  virtual ~Layer() = default;

  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const { return spec_; }
  LayerKind kind() const { return spec_.kind(); }
  /// Leaf index in the user's original network.
  std::size_t origin() const { return origin_; }

  virtual Tensor<T> forward(const Tensor<T>& x, const StepContext& ctx) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::span<Parameter<T>> parameters() { return {}; }
  virtual std::span<const Parameter<T>> parameters() const { return {}; }

  /// True when a forward is waiting for its backward.
  virtual bool has_cache() const = 0;

 private:
  LayerSpec spec_;
  std::size_t origin_;
};

/// Instantiates a compute layer. Weights are uniform in
/// +-sqrt(6 / (fan_in + fan_out)) drawn from `init_seed`; a partitioned linear
/// layer draws the full matrix's stream and keeps its own rows, so shards of
/// one seed reassemble the unpartitioned weights exactly. Biases start at zero.
/// MODULO and SHARD are not compute layers and are rejected.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::size_t origin, std::uint64_t init_seed);

/// Seed for the parameters of the leaf at `origin` under a network seed.
std::uint64_t layer_init_seed(std::uint64_t seed, std::size_t origin);

}  // namespace hybridnet
