// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/network.hpp"

#include <utility>

#include "hybridnet/error.hpp"
#include "hybridnet/kernels.hpp"

namespace hybridnet {

namespace {

std::string where(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + to_string(spec.kind()) +
         (spec.name.empty() ? "" : " '" + spec.name + "'") + ")";
}

}  // namespace

template <typename T>
Tensor<T> LayerStack<T>::forward(Tensor<T> x, const StepContext& ctx) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      x = layers_[i]->forward(x, ctx);
    } catch (const ShapeError& e) {
      throw ShapeError(where(i, layers_[i]->spec()) + ": " + e.what());
    }
  }
  return x;
}

template <typename T>
Tensor<T> LayerStack<T>::backward(Tensor<T> grad) {
  for (std::size_t i = layers_.size(); i-- > 0;) {
    try {
      grad = layers_[i]->backward(grad);
    } catch (const ShapeError& e) {
      throw ShapeError(where(i, layers_[i]->spec()) + ": " + e.what());
    }
  }
  return grad;
}

template <typename T>
std::vector<Parameter<T>*> LayerStack<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& layer : layers_) {
    for (auto& p : layer->parameters()) out.push_back(&p);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> LayerStack<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& layer : layers_) {
    for (const auto& p : std::as_const(*layer).parameters()) out.push_back(&p);
  }
  return out;
}

template <typename T>
void LayerStack<T>::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(T{0});
}

template <typename T>
void LayerStack<T>::sgd_step(T lr) {
  for (auto* p : parameters()) {
    auto w = p->value.data();
    auto g = p->grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    p->grad.fill(T{0});
  }
}

template <typename T>
Network<T>::Network(const LayerSpec& root, Shape input_shape, std::uint64_t seed, T learning_rate)
    : input_shape_(std::move(input_shape)), seed_(seed), learning_rate_(learning_rate) {
  const auto leaves = flatten(root);
  Shape cur = input_shape_;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto& spec = leaves[i];
    if (spec.kind() == LayerKind::Modulo || spec.kind() == LayerKind::Shard) {
      throw ValueError(where(i, spec) + ": communication layers are inserted by the partitioner only");
    }
    try {
      cur = hybridnet::output_shape(spec, cur);
    } catch (const ShapeError& e) {
      throw ShapeError(where(i, spec) + ": " + e.what());
    }
    stack_.push(make_layer<T>(spec, i, layer_init_seed(seed, i)));
  }
  output_shape_ = cur;
}

template <typename T>
Tensor<T> Network<T>::fprop(const Tensor<T>& batch, const StepContext& ctx) {
  if (batch.rank() != input_shape_.rank() + 1 || batch.shape().drop_front() != input_shape_) {
    throw ShapeError("fprop: batch " + batch.shape().str() + " does not match network input " + input_shape_.str());
  }
  output_ = stack_.forward(batch, ctx);
  return *output_;
}

template <typename T>
T Network<T>::bprop(std::span<const std::size_t> targets) {
  if (!output_) throw StateError("bprop without prior fprop");
  Tensor<T> out = std::move(*output_);
  output_.reset();
  if (out.rank() != 2) throw ShapeError("bprop: network output " + out.shape().str() + " is not (batch, classes)");
  const T loss = kernels::nll_loss(out, targets);
  stack_.backward(kernels::nll_loss_backward<T>(out.shape(), targets));
  return loss;
}

template <typename T>
void Network<T>::sgd_step(T lr) {
  stack_.sgd_step(lr);
  ++step_;
}

template <typename T>
double accuracy(const Tensor<T>& log_probs, std::span<const std::size_t> targets) {
  if (log_probs.rank() != 2 || log_probs.dim(0) != targets.size()) {
    throw ShapeError("accuracy: " + log_probs.shape().str() + " vs " + std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) return 0.0;
  const std::size_t classes = log_probs.dim(1);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (log_probs[b * classes + c] > log_probs[b * classes + best]) best = c;
    }
    hits += best == targets[b] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(targets.size());
}

template class LayerStack<float>;
template class LayerStack<double>;
template class Network<float>;
template class Network<double>;
template double accuracy(const Tensor<float>&, std::span<const std::size_t>);
template double accuracy(const Tensor<double>&, std::span<const std::size_t>);

}  // namespace hybridnet
