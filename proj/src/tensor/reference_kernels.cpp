// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/reference_kernels.hpp"

#include "hybridnet/error.hpp"

namespace hybridnet::reference {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + a.shape().str() + " by " + b.shape().str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t pad) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) throw ShapeError("conv2d: channel mismatch");
  const std::size_t oh = kernels::window_extent(h, kh, stride, pad, "conv2d");
  const std::size_t ow = kernels::window_extent(w, kw, stride, pad, "conv2d");
  Tensor<T> out(Shape{batch, cout, oh, ow});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          T acc{0};
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t r = 0; r < kh; ++r)
              for (std::size_t s = 0; s < kw; ++s) {
                const auto iy = static_cast<std::ptrdiff_t>(y * stride + r) - static_cast<std::ptrdiff_t>(pad);
                const auto ix = static_cast<std::ptrdiff_t>(x * stride + s) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                acc += kernel.at(co, ci, r, s) * input.at(b, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(b, co, y, x) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                                std::size_t stride, std::size_t pad) {
  const std::size_t batch = input_shape[0], cin = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  Tensor<T> dx(input_shape);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix) {
          T acc{0};
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t r = 0; r < kh; ++r)
              for (std::size_t s = 0; s < kw; ++s) {
                const auto ny = static_cast<std::ptrdiff_t>(iy + pad) - static_cast<std::ptrdiff_t>(r);
                const auto nx = static_cast<std::ptrdiff_t>(ix + pad) - static_cast<std::ptrdiff_t>(s);
                if (ny < 0 || nx < 0) continue;
                if (ny % static_cast<std::ptrdiff_t>(stride) != 0 || nx % static_cast<std::ptrdiff_t>(stride) != 0)
                  continue;
                const auto y = static_cast<std::size_t>(ny) / stride;
                const auto x = static_cast<std::size_t>(nx) / stride;
                if (y >= oh || x >= ow) continue;
                acc += grad_out.at(b, co, y, x) * kernel.at(co, ci, r, s);
              }
          dx.at(b, ci, iy, ix) = acc;
        }
  return dx;
}

template <typename T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                                 std::size_t stride, std::size_t pad) {
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel_shape[0], kh = kernel_shape[2], kw = kernel_shape[3];
  const std::size_t oh = grad_out.dim(2), ow = grad_out.dim(3);
  Tensor<T> dk(kernel_shape);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t r = 0; r < kh; ++r)
        for (std::size_t s = 0; s < kw; ++s) {
          T acc{0};
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t y = 0; y < oh; ++y)
              for (std::size_t x = 0; x < ow; ++x) {
                const auto iy = static_cast<std::ptrdiff_t>(y * stride + r) - static_cast<std::ptrdiff_t>(pad);
                const auto ix = static_cast<std::ptrdiff_t>(x * stride + s) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                acc += grad_out.at(b, co, y, x) *
                       input.at(b, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          dk.at(co, ci, r, s) = acc;
        }
  return dk;
}

template <typename T>
kernels::PoolResult<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = kernels::window_extent(h, window, stride, 0, "maxpool2d");
  const std::size_t ow = kernels::window_extent(w, window, stride, 0, "maxpool2d");
  kernels::PoolResult<T> res{Tensor<T>(Shape{batch, ch, oh, ow}), {}};
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          std::size_t best_y = y * stride, best_x = x * stride;
          for (std::size_t r = 0; r < window; ++r)
            for (std::size_t s = 0; s < window; ++s)
              if (input.at(b, c, y * stride + r, x * stride + s) > input.at(b, c, best_y, best_x)) {
                best_y = y * stride + r;
                best_x = x * stride + s;
              }
          res.output.at(b, c, y, x) = input.at(b, c, best_y, best_x);
          res.argmax.push_back(((b * ch + c) * h + best_y) * w + best_x);
        }
  return res;
}

template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> conv2d_backward_input(const Tensor<float>&, const Tensor<float>&, const Shape&, std::size_t,
                                             std::size_t);
template Tensor<double> conv2d_backward_input(const Tensor<double>&, const Tensor<double>&, const Shape&,
                                              std::size_t, std::size_t);
template Tensor<float> conv2d_backward_kernel(const Tensor<float>&, const Tensor<float>&, const Shape&, std::size_t,
                                              std::size_t);
template Tensor<double> conv2d_backward_kernel(const Tensor<double>&, const Tensor<double>&, const Shape&,
                                               std::size_t, std::size_t);
template kernels::PoolResult<float> maxpool2d(const Tensor<float>&, std::size_t, std::size_t);
template kernels::PoolResult<double> maxpool2d(const Tensor<double>&, std::size_t, std::size_t);

}  // namespace hybridnet::reference
