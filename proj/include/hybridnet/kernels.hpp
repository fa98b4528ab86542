// SPDX-License-Identifier: Apache-2.0
//
// Layer kernels. Work is split across OpenMP threads only along axes whose
// elements are computed independently; every reduction runs serially in a
// fixed index order, so results are bit-identical to the serial reference in
// reference_kernels.hpp and independent of the thread count.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hybridnet/tensor.hpp"

namespace hybridnet::kernels {

/// Multiply-accumulate operations issued by the matmul family on this thread.
std::uint64_t& mac_counter();

/// Caps the OpenMP team size used by kernels (0 = runtime default).
void set_num_threads(int threads);
int num_threads();

/// a[m,k] * b[k,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a[m,k] * b[n,k]^T. Forward pass of a linear layer with weights stored
/// (out, in).
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// a[k,m]^T * b[k,n]. Weight gradient of a linear layer.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

/// y[b, j] += bias[j] for a 2-D y.
template <typename T>
void add_row_bias(Tensor<T>& y, const Tensor<T>& bias);

/// Column sums of a 2-D tensor, accumulated top to bottom.
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& g);

/// Cross-correlation (no kernel flip). input [B,Cin,H,W], kernel
/// [Cout,Cin,kh,kw] -> [B,Cout,H',W'] with H' = (H + 2 pad - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                                std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                                 std::size_t stride, std::size_t pad);

/// y[b,c,h,w] += bias[c].
template <typename T>
void add_channel_bias(Tensor<T>& y, const Tensor<T>& bias);

/// Per-channel sums of a 4-D gradient.
template <typename T>
Tensor<T> sum_channels(const Tensor<T>& g);

/// Output extent of a sliding window; throws ShapeError when not integral.
std::size_t window_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad, const char* op);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Flat input index selected for every output element.
  std::vector<std::size_t> argmax;
};

/// Max pooling; ties resolve to the lowest flat input index.
template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, std::span<const std::size_t> argmax,
                             const Shape& input_shape);

/// Zero padding of both spatial axes of a 4-D tensor.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& input, std::size_t pad);

template <typename T>
Tensor<T> pad2d_backward(const Tensor<T>& grad_out, std::size_t pad);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input);

/// Over the last axis.
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> log_softmax_backward(const Tensor<T>& grad_out, const Tensor<T>& output);

/// Inverted-dropout mask: entries are 1/keep with probability keep, else 0.
/// Throws ValueError unless keep is in (0, 1].
template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double keep, std::uint64_t seed);

/// Elementwise product; forward and backward of dropout given its mask.
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& x, const Tensor<T>& mask);

/// Mean negative log-likelihood over the batch of a [B,C] log-probability
/// tensor.
template <typename T>
T nll_loss(const Tensor<T>& log_probs, std::span<const std::size_t> targets);

template <typename T>
Tensor<T> nll_loss_backward(const Shape& log_probs_shape, std::span<const std::size_t> targets);

}  // namespace hybridnet::kernels
