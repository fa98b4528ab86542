// SPDX-License-Identifier: Apache-2.0
#include "hybridnet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hybridnet/error.hpp"
#include "hybridnet/random.hpp"

namespace hybridnet::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::uint64_t kParallelWork = 1u << 15;

std::atomic<int> g_threads{0};

int team() {
  const int t = g_threads.load(std::memory_order_relaxed);
  return t > 0 ? t : omp_get_max_threads();
}

using Index = std::ptrdiff_t;

Index as_index(std::size_t n) { return static_cast<Index>(n); }

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
  }
}

}  // namespace

std::uint64_t& mac_counter() {
  thread_local std::uint64_t counter = 0;
  return counter;
}

void set_num_threads(int threads) { g_threads.store(std::max(0, threads), std::memory_order_relaxed); }

int num_threads() { return team(); }

std::size_t window_extent(std::size_t in, std::size_t window, std::size_t stride, std::size_t pad, const char* op) {
  if (stride == 0) throw ValueError(std::string(op) + ": stride must be positive");
  const std::size_t padded = in + 2 * pad;
  if (window == 0 || window > padded) {
    throw ShapeError(std::string(op) + ": window " + std::to_string(window) + " exceeds padded extent " +
                     std::to_string(padded));
  }
  if ((padded - window) % stride != 0) {
    throw ShapeError(std::string(op) + ": output extent (" + std::to_string(padded) + " - " + std::to_string(window) +
                     ") / " + std::to_string(stride) + " + 1 is not integral");
  }
  return (padded - window) / stride + 1;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: cannot multiply " + a.shape().str() + " by " + b.shape().str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c(Shape{m, n});
  mac_counter() += static_cast<std::uint64_t>(m) * k * n;
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
#pragma omp parallel for num_threads(team()) if (static_cast<std::uint64_t>(m) * k * n > kParallelWork)
  for (Index i = 0; i < as_index(m); ++i) {
    T* row = pc + i * as_index(n);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = pa[static_cast<std::size_t>(i) * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("matmul_nt: cannot multiply " + a.shape().str() + " by transpose of " + b.shape().str());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<T> c(Shape{m, n});
  mac_counter() += static_cast<std::uint64_t>(m) * k * n;
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
  // Row-axpy over a transposed copy of b: same per-element order as a dot
  // product, but the inner loop runs over contiguous outputs.
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = pb[j * k + p];
  }
#pragma omp parallel for num_threads(team()) if (static_cast<std::uint64_t>(m) * k * n > kParallelWork)
  for (Index i = 0; i < as_index(m); ++i) {
    T* row = pc + i * as_index(n);
    const T* arow = pa + i * as_index(k);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = arow[p];
      const T* brow = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape().str() + " by " + b.shape().str());
  }
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor<T> c(Shape{m, n});
  mac_counter() += static_cast<std::uint64_t>(m) * k * n;
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* pc = c.data().data();
#pragma omp parallel for num_threads(team()) if (static_cast<std::uint64_t>(m) * k * n > kParallelWork)
  for (Index i = 0; i < as_index(m); ++i) {
    T* row = pc + i * as_index(n);
    for (std::size_t p = 0; p < k; ++p) {
      const T api = pa[p * m + static_cast<std::size_t>(i)];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += api * brow[j];
    }
  }
  return c;
}

template <typename T>
void add_row_bias(Tensor<T>& y, const Tensor<T>& bias) {
  if (y.rank() != 2 || bias.rank() != 1 || bias.dim(0) != y.dim(1)) {
    throw ShapeError("add_row_bias: bias " + bias.shape().str() + " does not fit " + y.shape().str());
  }
  const std::size_t n = y.dim(1);
  for (std::size_t i = 0; i < y.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] += bias[j];
  }
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& g) {
  require_rank(g.shape(), 2, "sum_rows");
  const std::size_t n = g.dim(1);
  Tensor<T> out(Shape{n});
  for (std::size_t i = 0; i < g.dim(0); ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j] += g[i * n + j];
  }
  return out;
}

namespace {

// Outputs [first, second) whose tap lands inside an input of extent n.
std::pair<std::size_t, std::size_t> tap_range(std::size_t n_out, std::size_t n, std::size_t tap, std::size_t stride,
                                              std::size_t pad) {
  if (n + pad <= tap) return {0, 0};
  const std::size_t lo = pad > tap ? (pad - tap + stride - 1) / stride : 0;
  const std::size_t hi = std::min(n_out, (n + pad - tap + stride - 1) / stride);
  return {std::min(lo, hi), hi};
}

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, oh, ow, stride, pad;
  std::size_t taps() const { return cin * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

// Patch matrix of one example, row j = (ci, r, s), column p = output pixel;
// padded taps are zero. With `transposed` the layout is [pixel][tap].
template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* col, bool transposed) {
  const std::size_t P = g.pixels();
  const std::size_t J = g.taps();
  std::fill(col, col + P * J, T{0});
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = src + ci * g.h * g.w;
    for (std::size_t r = 0; r < g.kh; ++r) {
      const auto [y0, y1] = tap_range(g.oh, g.h, r, g.stride, g.pad);
      for (std::size_t s = 0; s < g.kw; ++s) {
        const auto [x0, x1] = tap_range(g.ow, g.w, s, g.stride, g.pad);
        const std::size_t j = (ci * g.kh + r) * g.kw + s;
        for (std::size_t y = y0; y < y1; ++y) {
          const T* row = plane + (y * g.stride + r - g.pad) * g.w;
          for (std::size_t x = x0; x < x1; ++x) {
            const T v = row[x * g.stride + s - g.pad];
            if (transposed) {
              col[(y * g.ow + x) * J + j] = v;
            } else {
              col[j * P + y * g.ow + x] = v;
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride, std::size_t pad) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv2d: kernel " + kernel.shape().str() + " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input " + input.shape().str() + " has " + std::to_string(cin));
  }
  const std::size_t oh = window_extent(h, kh, stride, pad, "conv2d");
  const std::size_t ow = window_extent(w, kw, stride, pad, "conv2d");
  const ConvGeometry geo{cin, h, w, kh, kw, oh, ow, stride, pad};
  const std::size_t P = geo.pixels(), J = geo.taps();
  Tensor<T> out(Shape{batch, cout, oh, ow});
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  T* o = out.data().data();
  const std::uint64_t work = static_cast<std::uint64_t>(batch) * cout * P * J;
#pragma omp parallel num_threads(team()) if (work > kParallelWork)
  {
    std::vector<T> col(P * J);
#pragma omp for
    for (Index b = 0; b < as_index(batch); ++b) {
      im2col(in + static_cast<std::size_t>(b) * cin * h * w, geo, col.data(), false);
      T* ob = o + static_cast<std::size_t>(b) * cout * P;
      // Every output pixel accumulates its taps in (ci, r, s) order from zero.
      for (std::size_t co = 0; co < cout; ++co) {
        T* orow = ob + co * P;
        const T* krow = k + co * J;
        for (std::size_t j = 0; j < J; ++j) {
          const T wv = krow[j];
          const T* crow = col.data() + j * P;
          for (std::size_t p = 0; p < P; ++p) orow[p] += wv * crow[p];
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& kernel, const Shape& input_shape,
                                std::size_t stride, std::size_t pad) {
  require_rank(grad_out.shape(), 4, "conv2d_backward_input grad");
  require_rank(input_shape, 4, "conv2d_backward_input input");
  const std::size_t batch = input_shape[0], cin = input_shape[1], h = input_shape[2], w = input_shape[3];
  const std::size_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t oh = window_extent(h, kh, stride, pad, "conv2d_backward_input");
  const std::size_t ow = window_extent(w, kw, stride, pad, "conv2d_backward_input");
  require_same_shape(grad_out.shape(), Shape{batch, cout, oh, ow}, "conv2d_backward_input");
  if (kernel.dim(1) != cin) throw ShapeError("conv2d_backward_input: kernel/input channel mismatch");
  const ConvGeometry geo{cin, h, w, kh, kw, oh, ow, stride, pad};
  const std::size_t P = geo.pixels(), J = geo.taps();
  Tensor<T> dx(input_shape);
  const T* g = grad_out.data().data();
  const T* k = kernel.data().data();
  T* d = dx.data().data();
  const std::uint64_t work = static_cast<std::uint64_t>(batch) * cout * P * J;
#pragma omp parallel num_threads(team()) if (work > kParallelWork)
  {
    std::vector<T> dcol(P * J);
#pragma omp for
    for (Index b = 0; b < as_index(batch); ++b) {
      std::fill(dcol.begin(), dcol.end(), T{0});
      const T* gb = g + static_cast<std::size_t>(b) * cout * P;
      for (std::size_t co = 0; co < cout; ++co) {
        const T* grow = gb + co * P;
        for (std::size_t j = 0; j < J; ++j) {
          const T kv = k[co * J + j];
          T* drow = dcol.data() + j * P;
          for (std::size_t p = 0; p < P; ++p) drow[p] += kv * grow[p];
        }
      }
      T* db = d + static_cast<std::size_t>(b) * cin * h * w;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        T* plane = db + ci * h * w;
        for (std::size_t r = 0; r < kh; ++r) {
          const auto [y0, y1] = tap_range(oh, h, r, stride, pad);
          for (std::size_t s = 0; s < kw; ++s) {
            const auto [x0, x1] = tap_range(ow, w, s, stride, pad);
            const T* drow = dcol.data() + ((ci * kh + r) * kw + s) * P;
            for (std::size_t y = y0; y < y1; ++y) {
              T* row = plane + (y * stride + r - pad) * w;
              for (std::size_t x = x0; x < x1; ++x) row[x * stride + s - pad] += drow[y * ow + x];
            }
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> conv2d_backward_kernel(const Tensor<T>& grad_out, const Tensor<T>& input, const Shape& kernel_shape,
                                 std::size_t stride, std::size_t pad) {
  require_rank(grad_out.shape(), 4, "conv2d_backward_kernel grad");
  require_rank(input.shape(), 4, "conv2d_backward_kernel input");
  require_rank(kernel_shape, 4, "conv2d_backward_kernel kernel");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel_shape[0], kh = kernel_shape[2], kw = kernel_shape[3];
  if (kernel_shape[1] != cin) throw ShapeError("conv2d_backward_kernel: kernel/input channel mismatch");
  const std::size_t oh = window_extent(h, kh, stride, pad, "conv2d_backward_kernel");
  const std::size_t ow = window_extent(w, kw, stride, pad, "conv2d_backward_kernel");
  require_same_shape(grad_out.shape(), Shape{batch, cout, oh, ow}, "conv2d_backward_kernel");
  const ConvGeometry geo{cin, h, w, kh, kw, oh, ow, stride, pad};
  const std::size_t P = geo.pixels(), J = geo.taps();
  Tensor<T> dk(kernel_shape);
  const T* g = grad_out.data().data();
  const T* in = input.data().data();
  T* d = dk.data().data();
  const std::uint64_t work = static_cast<std::uint64_t>(batch) * cout * P * J;
  std::vector<T> cols(batch * P * J);
#pragma omp parallel for num_threads(team()) if (work > kParallelWork)
  for (Index b = 0; b < as_index(batch); ++b) {
    im2col(in + static_cast<std::size_t>(b) * cin * h * w, geo, cols.data() + static_cast<std::size_t>(b) * P * J,
           true);
  }
  // Each kernel element sums over (b, y, x) in order; parallel over cout only.
#pragma omp parallel for num_threads(team()) if (work > kParallelWork)
  for (Index co = 0; co < as_index(cout); ++co) {
    T* drow = d + static_cast<std::size_t>(co) * J;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* grow = g + (b * cout + static_cast<std::size_t>(co)) * P;
      const T* cb = cols.data() + b * P * J;
      for (std::size_t p = 0; p < P; ++p) {
        const T gv = grow[p];
        const T* crow = cb + p * J;
        for (std::size_t j = 0; j < J; ++j) drow[j] += gv * crow[j];
      }
    }
  }
  return dk;
}

template <typename T>
void add_channel_bias(Tensor<T>& y, const Tensor<T>& bias) {
  require_rank(y.shape(), 4, "add_channel_bias");
  if (bias.rank() != 1 || bias.dim(0) != y.dim(1)) {
    throw ShapeError("add_channel_bias: bias " + bias.shape().str() + " does not fit " + y.shape().str());
  }
  const std::size_t plane = y.dim(2) * y.dim(3);
  for (std::size_t b = 0; b < y.dim(0); ++b) {
    for (std::size_t c = 0; c < y.dim(1); ++c) {
      T* p = y.data().data() + (b * y.dim(1) + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += bias[c];
    }
  }
}

template <typename T>
Tensor<T> sum_channels(const Tensor<T>& g) {
  require_rank(g.shape(), 4, "sum_channels");
  const std::size_t plane = g.dim(2) * g.dim(3);
  Tensor<T> out(Shape{g.dim(1)});
  for (std::size_t b = 0; b < g.dim(0); ++b) {
    for (std::size_t c = 0; c < g.dim(1); ++c) {
      const T* p = g.data().data() + (b * g.dim(1) + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[c] += p[i];
    }
  }
  return out;
}

template <typename T>
PoolResult<T> maxpool2d(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  require_rank(input.shape(), 4, "maxpool2d");
  const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = window_extent(h, window, stride, 0, "maxpool2d");
  const std::size_t ow = window_extent(w, window, stride, 0, "maxpool2d");
  PoolResult<T> res{Tensor<T>(Shape{batch, ch, oh, ow}), std::vector<std::size_t>(batch * ch * oh * ow)};
  const T* in = input.data().data();
  T* o = res.output.data().data();
  std::size_t* idx = res.argmax.data();
#pragma omp parallel for num_threads(team()) if (input.size() * window > kParallelWork)
  for (Index bc = 0; bc < as_index(batch * ch); ++bc) {
    const std::size_t base = static_cast<std::size_t>(bc) * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = base + (y * stride) * w + x * stride;
        for (std::size_t r = 0; r < window; ++r) {
          for (std::size_t s = 0; s < window; ++s) {
            const std::size_t at = base + (y * stride + r) * w + x * stride + s;
            // Strict comparison keeps the earliest index on ties.
            if (in[at] > in[best]) best = at;
          }
        }
        const std::size_t out_at = (static_cast<std::size_t>(bc) * oh + y) * ow + x;
        o[out_at] = in[best];
        idx[out_at] = best;
      }
    }
  }
  return res;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, std::span<const std::size_t> argmax,
                             const Shape& input_shape) {
  if (argmax.size() != grad_out.size()) {
    throw ShapeError("maxpool2d_backward: " + std::to_string(argmax.size()) + " indices for gradient " +
                     grad_out.shape().str());
  }
  Tensor<T> dx(input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    if (argmax[i] >= dx.size()) throw ShapeError("maxpool2d_backward: index out of range");
    dx[argmax[i]] += grad_out[i];
  }
  return dx;
}

template <typename T>
Tensor<T> pad2d(const Tensor<T>& input, std::size_t pad) {
  require_rank(input.shape(), 4, "pad2d");
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  Tensor<T> out(Shape{input.dim(0), input.dim(1), ph, pw});
  for (std::size_t bc = 0; bc < input.dim(0) * input.dim(1); ++bc) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = input.data().data() + (bc * h + y) * w;
      std::copy_n(src, w, out.data().data() + (bc * ph + y + pad) * pw + pad);
    }
  }
  return out;
}

template <typename T>
Tensor<T> pad2d_backward(const Tensor<T>& grad_out, std::size_t pad) {
  require_rank(grad_out.shape(), 4, "pad2d_backward");
  const std::size_t ph = grad_out.dim(2), pw = grad_out.dim(3);
  if (ph <= 2 * pad || pw <= 2 * pad) throw ShapeError("pad2d_backward: gradient smaller than padding");
  const std::size_t h = ph - 2 * pad, w = pw - 2 * pad;
  Tensor<T> dx(Shape{grad_out.dim(0), grad_out.dim(1), h, w});
  for (std::size_t bc = 0; bc < grad_out.dim(0) * grad_out.dim(1); ++bc) {
    for (std::size_t y = 0; y < h; ++y) {
      const T* src = grad_out.data().data() + (bc * ph + y + pad) * pw + pad;
      std::copy_n(src, w, dx.data().data() + (bc * h + y) * w);
    }
  }
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  require_same_shape(grad_out.shape(), input.shape(), "relu_backward");
  Tensor<T> dx(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) dx[i] = input[i] > T{0} ? grad_out[i] : T{0};
  return dx;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("log_softmax: empty tensor");
  const std::size_t n = x.dim(x.rank() - 1);
  const std::size_t rows = x.size() / n;
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * n;
    T* out = y.data().data() + r * n;
    T mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T sum{0};
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(in[j] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) out[j] = in[j] - lse;
  }
  return y;
}

template <typename T>
Tensor<T> log_softmax_backward(const Tensor<T>& grad_out, const Tensor<T>& output) {
  require_same_shape(grad_out.shape(), output.shape(), "log_softmax_backward");
  const std::size_t n = output.dim(output.rank() - 1);
  const std::size_t rows = output.size() / n;
  Tensor<T> dx(output.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = grad_out.data().data() + r * n;
    const T* y = output.data().data() + r * n;
    T* d = dx.data().data() + r * n;
    T gsum{0};
    for (std::size_t j = 0; j < n; ++j) gsum += g[j];
    for (std::size_t j = 0; j < n; ++j) d[j] = g[j] - std::exp(y[j]) * gsum;
  }
  return dx;
}

template <typename T>
Tensor<T> dropout_mask(const Shape& shape, double keep, std::uint64_t seed) {
  if (!(keep > 0.0 && keep <= 1.0)) {
    throw ValueError("dropout keep probability must be in (0, 1], got " + std::to_string(keep));
  }
  Tensor<T> mask(shape, T{1});
  if (keep == 1.0) return mask;
  Rng rng(seed);
  const T scale = static_cast<T>(1.0 / keep);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < keep ? scale : T{0};
  return mask;
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& x, const Tensor<T>& mask) {
  require_same_shape(x.shape(), mask.shape(), "dropout");
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
  return y;
}

template <typename T>
T nll_loss(const Tensor<T>& log_probs, std::span<const std::size_t> targets) {
  require_rank(log_probs.shape(), 2, "nll_loss");
  const std::size_t batch = log_probs.dim(0), classes = log_probs.dim(1);
  if (targets.size() != batch) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for batch of " +
                     std::to_string(batch));
  }
  T sum{0};
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) {
      throw ValueError("nll_loss: target " + std::to_string(targets[b]) + " is not below class count " +
                       std::to_string(classes));
    }
    sum -= log_probs[b * classes + targets[b]];
  }
  return sum / static_cast<T>(batch);
}

template <typename T>
Tensor<T> nll_loss_backward(const Shape& log_probs_shape, std::span<const std::size_t> targets) {
  require_rank(log_probs_shape, 2, "nll_loss_backward");
  const std::size_t batch = log_probs_shape[0], classes = log_probs_shape[1];
  if (targets.size() != batch) throw ShapeError("nll_loss_backward: target count does not match batch");
  Tensor<T> g(log_probs_shape);
  const T w = T{-1} / static_cast<T>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) throw ValueError("nll_loss_backward: target out of range");
    g[b * classes + targets[b]] = w;
  }
  return g;
}

#define HYBRIDNET_INSTANTIATE(T)                                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                                               \
  template void add_row_bias(Tensor<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> sum_rows(const Tensor<T>&);                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);                        \
  template Tensor<T> conv2d_backward_input(const Tensor<T>&, const Tensor<T>&, const Shape&, std::size_t,          \
                                           std::size_t);                                                          \
  template Tensor<T> conv2d_backward_kernel(const Tensor<T>&, const Tensor<T>&, const Shape&, std::size_t,        \
                                            std::size_t);                                                         \
  template void add_channel_bias(Tensor<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> sum_channels(const Tensor<T>&);                                                              \
  template PoolResult<T> maxpool2d(const Tensor<T>&, std::size_t, std::size_t);                                   \
  template Tensor<T> maxpool2d_backward(const Tensor<T>&, std::span<const std::size_t>, const Shape&);             \
  template Tensor<T> pad2d(const Tensor<T>&, std::size_t);                                                        \
  template Tensor<T> pad2d_backward(const Tensor<T>&, std::size_t);                                               \
  template Tensor<T> relu(const Tensor<T>&);                                                                      \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                               \
  template Tensor<T> log_softmax_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> dropout_mask(const Shape&, double, std::uint64_t);                                           \
  template Tensor<T> apply_mask(const Tensor<T>&, const Tensor<T>&);                                              \
  template T nll_loss(const Tensor<T>&, std::span<const std::size_t>);                                            \
  template Tensor<T> nll_loss_backward(const Shape&, std::span<const std::size_t>);

HYBRIDNET_INSTANTIATE(float)
HYBRIDNET_INSTANTIATE(double)

#undef HYBRIDNET_INSTANTIATE

}  // namespace hybridnet::kernels
