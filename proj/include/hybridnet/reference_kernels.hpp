// SPDX-License-Identifier: Apache-2.0
//
// Serial loop-nest implementations of the heavy kernels. They share the
// parallel kernels' per-element summation order for the forward passes, so
// matmul/conv2d/maxpool2d agree bit-for-bit. Kept for tests and benchmarks.
#pragma once

#include <cstddef>

#include "hybridnet/kernels.hpp"

namespace hybridnet::reference {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t pad);

/// Gathers each input gradient from the output positions it fed.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                                std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                                 std::size_t stride, std::size_t pad);

template <typename T>
kernels::PoolResult<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride);

}  // namespace hybridnet::reference
