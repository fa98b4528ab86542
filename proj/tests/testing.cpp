// SPDX-License-Identifier: Apache-2.0
#include "testing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hybridnet/random.hpp"
#include "hybridnet/runtime.hpp"

namespace hybridnet::testing {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(derive_seed({seed, 0x7e57}));
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<float> random_tensor_f(const Shape& shape, std::uint64_t seed) { return random_tensor(shape, seed).cast<float>(); }

template <typename T>
Tensor<T> naive_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> c(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

template <typename T>
Tensor<T> naive_conv2d(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<T> y(Shape{B, O, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          T acc = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < KH; ++i)
              for (std::size_t j = 0; j < KW; ++j) {
                const long h = static_cast<long>(oh * stride + i) - static_cast<long>(pad);
                const long w = static_cast<long>(ow * stride + j) - static_cast<long>(pad);
                if (h < 0 || w < 0 || h >= static_cast<long>(H) || w >= static_cast<long>(W)) continue;
                acc += x.at(b, c, static_cast<std::size_t>(h), static_cast<std::size_t>(w)) * k.at(o, c, i, j);
              }
          y.at(b, o, oh, ow) = acc;
        }
  return y;
}

template <typename T>
Tensor<T> naive_maxpool(const Tensor<T>& x, std::size_t window, std::size_t stride) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = (H - window) / stride + 1, OW = (W - window) / stride + 1;
  Tensor<T> y(Shape{B, C, OH, OW});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          T m = -std::numeric_limits<T>::infinity();
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) m = std::max(m, x.at(b, c, oh * stride + i, ow * stride + j));
          y.at(b, c, oh, ow) = m;
        }
  return y;
}

std::vector<double> numeric_gradient(const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
                                     double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  }
  return worst;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string check_modulo_mappings(std::size_t limit, std::size_t& configs) {
  configs = 0;
  auto where = [](std::size_t B, std::size_t K, std::size_t N) {
    return "B=" + std::to_string(B) + " K=" + std::to_string(K) + " N=" + std::to_string(N);
  };
  for (std::size_t N = 1; N <= limit; ++N) {
    for (std::size_t K = 1; K <= N; ++K) {
      if (N % K != 0) continue;
      for (std::size_t B = K; B <= limit; B += K) {
        ++configs;
        const std::size_t size = B / K;
        for (std::size_t w = 0; w < N; ++w) {
          const std::size_t gid = w / K;
          std::vector<std::size_t> owned(K, 0);
          std::size_t previous = 0;
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t owner = modulo_slot_owner(b, B, K, w, N, true);
            if (owner / K != gid) return where(B, K, N) + ": slot owner outside the group";
            if (modulo_slot_owner(b, B, K, w, N, false) != owner % K) {
              return where(B, K, N) + ": local and global owners disagree";
            }
            if (b > 0 && owner < previous) return where(B, K, N) + ": owners are not contiguous runs";
            previous = owner;
            ++owned[owner % K];
          }
          for (std::size_t c : owned) {
            if (c != size) return where(B, K, N) + ": a member owns " + std::to_string(c) + " slots";
          }
        }
        std::vector<int> hit(B, 0);
        for (std::size_t k = 0; k < K; ++k) {
          const RowRange r = modulo_local_block(k, B, K);
          if (r.size() != size || r.end > B) return where(B, K, N) + ": bad local block";
          for (std::size_t b = r.begin; b < r.end; ++b) ++hit[b];
        }
        for (int h : hit) {
          if (h != 1) return where(B, K, N) + ": local blocks do not partition the batch";
        }
      }
    }
  }
  return "";
}

template Tensor<float> naive_matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> naive_matmul(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> naive_conv2d(const Tensor<float>&, const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> naive_conv2d(const Tensor<double>&, const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> naive_maxpool(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> naive_maxpool(const Tensor<double>&, std::size_t, std::size_t);

}  // namespace hybridnet::testing
