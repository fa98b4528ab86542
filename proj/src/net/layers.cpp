// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/layers.hpp"

#include <cmath>

#include "hybridnet/error.hpp"
#include "hybridnet/kernels.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet {

namespace {

template <typename T>
Tensor<T> take(std::optional<Tensor<T>>& cache, const LayerSpec& spec) {
  if (!cache) {
    throw StateError(std::string("bprop without prior fprop in ") + to_string(spec.kind()) +
                     (spec.name.empty() ? "" : " '" + spec.name + "'"));
  }
  Tensor<T> out = std::move(*cache);
  cache.reset();
  return out;
}

template <typename T>
Parameter<T> make_parameter(Tensor<T> value) {
  Tensor<T> grad(value.shape());
  return {std::move(value), std::move(grad)};
}

template <typename T>
class ReshapeLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    if (x.rank() == 0) throw ShapeError("reshape: empty input");
    const Shape example = output_shape(this->spec(), x.shape().drop_front());
    in_shape_ = x.shape();
    return x.reshaped(example.prepend(x.dim(0)));
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    if (!in_shape_) throw StateError("bprop without prior fprop in RESHAPE");
    Shape s = *in_shape_;
    in_shape_.reset();
    return g.reshaped(std::move(s));
  }
  bool has_cache() const override { return in_shape_.has_value(); }

 private:
  std::optional<Shape> in_shape_;
};

template <typename T>
class PadLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    pending_ = true;
    return kernels::pad2d(x, this->spec().template as<PadSpec>().pad);
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    if (!pending_) throw StateError("bprop without prior fprop in PAD");
    pending_ = false;
    return kernels::pad2d_backward(g, this->spec().template as<PadSpec>().pad);
  }
  bool has_cache() const override { return pending_; }

 private:
  bool pending_ = false;
};

template <typename T>
class ConvLayer final : public Layer<T> {
 public:
  ConvLayer(LayerSpec spec, std::size_t origin, std::uint64_t seed) : Layer<T>(std::move(spec), origin) {
    const auto& c = this->spec().template as<ConvSpec>();
    Tensor<T> w(Shape{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
    const double area = static_cast<double>(c.kernel_h * c.kernel_w);
    const double limit = std::sqrt(6.0 / (area * static_cast<double>(c.in_channels + c.out_channels)));
    Rng rng(seed);
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
    params_.push_back(make_parameter(std::move(w)));
    params_.push_back(make_parameter(Tensor<T>(Shape{c.out_channels})));
  }

  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    const auto& c = this->spec().template as<ConvSpec>();
    Tensor<T> y = kernels::conv2d(x, params_[0].value, c.stride, c.pad);
    kernels::add_channel_bias(y, params_[1].value);
    input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const auto& c = this->spec().template as<ConvSpec>();
    Tensor<T> x = take(input_, this->spec());
    params_[0].grad += kernels::conv2d_backward_kernel(g, x, params_[0].value.shape(), c.stride, c.pad);
    params_[1].grad += kernels::sum_channels(g);
    return kernels::conv2d_backward_input(g, params_[0].value, x.shape(), c.stride, c.pad);
  }

  std::span<Parameter<T>> parameters() override { return params_; }
  std::span<const Parameter<T>> parameters() const override { return params_; }
  bool has_cache() const override { return input_.has_value(); }

 private:
  std::vector<Parameter<T>> params_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class PoolingLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    const auto& p = this->spec().template as<PoolingSpec>();
    auto res = kernels::maxpool2d(x, p.window, p.stride);
    argmax_ = std::move(res.argmax);
    in_shape_ = x.shape();
    return std::move(res.output);
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    if (!in_shape_) throw StateError("bprop without prior fprop in POOLING");
    Tensor<T> dx = kernels::maxpool2d_backward(g, argmax_, *in_shape_);
    in_shape_.reset();
    argmax_.clear();
    return dx;
  }
  bool has_cache() const override { return in_shape_.has_value(); }

 private:
  std::vector<std::size_t> argmax_;
  std::optional<Shape> in_shape_;
};

template <typename T>
class DropoutLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext& ctx) override {
    const double keep = this->spec().template as<DropoutSpec>().keep;
    if (!(keep > 0.0 && keep <= 1.0)) {
      throw ValueError("dropout keep probability must be in (0, 1], got " + std::to_string(keep));
    }
    if (!ctx.training || !ctx.dropout || keep == 1.0) {
      mask_ = Tensor<T>(x.shape(), T{1});
      return x;
    }
    mask_ = kernels::dropout_mask<T>(
        x.shape(), keep, derive_seed({ctx.seed, ctx.worker, ctx.step, this->origin(), ctx.iteration}));
    return kernels::apply_mask(x, *mask_);
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> mask = take(mask_, this->spec());
    return kernels::apply_mask(g, mask);
  }
  bool has_cache() const override { return mask_.has_value(); }

 private:
  std::optional<Tensor<T>> mask_;
};

template <typename T>
class ReluLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    input_ = x;
    return kernels::relu(x);
  }
  Tensor<T> backward(const Tensor<T>& g) override { return kernels::relu_backward(g, take(input_, this->spec())); }
  bool has_cache() const override { return input_.has_value(); }

 private:
  std::optional<Tensor<T>> input_;
};

template <typename T>
class LinearLayer final : public Layer<T> {
 public:
  LinearLayer(LayerSpec spec, std::size_t origin, std::uint64_t seed) : Layer<T>(std::move(spec), origin) {
    const auto& l = this->spec().template as<LinearSpec>();
    if (l.out_dim == 0 || l.in_dim == 0 || l.row_offset + l.out_dim > l.full_out) {
      throw ShapeError("linear layer rows [" + std::to_string(l.row_offset) + ", " +
                       std::to_string(l.row_offset + l.out_dim) + ") do not fit " + std::to_string(l.full_out) +
                       " outputs");
    }
    Tensor<T> w(Shape{l.out_dim, l.in_dim});
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.full_out));
    Rng rng(seed);
    rng.discard(static_cast<unsigned long long>(l.row_offset) * l.in_dim);
    for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
    params_.push_back(make_parameter(std::move(w)));
    params_.push_back(make_parameter(Tensor<T>(Shape{l.out_dim})));
  }

  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    Tensor<T> y = kernels::matmul_nt(x, params_[0].value);
    kernels::add_row_bias(y, params_[1].value);
    input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> x = take(input_, this->spec());
    params_[0].grad += kernels::matmul_tn(g, x);
    params_[1].grad += kernels::sum_rows(g);
    return kernels::matmul(g, params_[0].value);
  }

  std::span<Parameter<T>> parameters() override { return params_; }
  std::span<const Parameter<T>> parameters() const override { return params_; }
  bool has_cache() const override { return input_.has_value(); }

 private:
  std::vector<Parameter<T>> params_;
  std::optional<Tensor<T>> input_;
};

template <typename T>
class LogSoftmaxLayer final : public Layer<T> {
 public:
  using Layer<T>::Layer;
  Tensor<T> forward(const Tensor<T>& x, const StepContext&) override {
    Tensor<T> y = kernels::log_softmax(x);
    output_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) override {
    return kernels::log_softmax_backward(g, take(output_, this->spec()));
  }
  bool has_cache() const override { return output_.has_value(); }

 private:
  std::optional<Tensor<T>> output_;
};

}  // namespace

std::uint64_t layer_init_seed(std::uint64_t seed, std::size_t origin) { return derive_seed({seed, 0x1a7e5ULL, origin}); }

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, std::size_t origin, std::uint64_t init_seed) {
  switch (spec.kind()) {
    case LayerKind::Reshape: return std::make_unique<ReshapeLayer<T>>(spec, origin);
    case LayerKind::Pad: return std::make_unique<PadLayer<T>>(spec, origin);
    case LayerKind::Conv: return std::make_unique<ConvLayer<T>>(spec, origin, init_seed);
    case LayerKind::Pooling: return std::make_unique<PoolingLayer<T>>(spec, origin);
    case LayerKind::Dropout: return std::make_unique<DropoutLayer<T>>(spec, origin);
    case LayerKind::Relu: return std::make_unique<ReluLayer<T>>(spec, origin);
    case LayerKind::Linear: return std::make_unique<LinearLayer<T>>(spec, origin, init_seed);
    case LayerKind::LogSoftmax: return std::make_unique<LogSoftmaxLayer<T>>(spec, origin);
    case LayerKind::Seq:
    case LayerKind::Modulo:
    case LayerKind::Shard: break;
  }
  throw ValueError(std::string(to_string(spec.kind())) + " is not a compute layer");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&, std::size_t, std::uint64_t);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&, std::size_t, std::uint64_t);

}  // namespace hybridnet
